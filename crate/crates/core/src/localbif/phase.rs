use std::fmt;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use super::{normal_equilibrium, superradiant_equilibria, BifError, Equilibrium};
use crate::integrate::{simulate, EventSpec, Tolerances};
use crate::model::{LmgField, ModelParams, SpinState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseLabel {
    Normal,
    Superradiant,
    NormalSuperradiant,
    CounterLasing,
    Lasing,
    /// Forward integration found neither an equilibrium nor a periodic
    /// attractor within the horizon.
    Transitional,
}

impl PhaseLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseLabel::Normal => "N",
            PhaseLabel::Superradiant => "SR",
            PhaseLabel::NormalSuperradiant => "N+SR",
            PhaseLabel::CounterLasing => "CL",
            PhaseLabel::Lasing => "L",
            PhaseLabel::Transitional => "transitional",
        }
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for PhaseLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOptions {
    /// Integration time per attempt when searching for a periodic attractor.
    pub horizon: f64,
    /// Number of attempts (each continues from the previous end state).
    pub attempts: usize,
    pub tol: Tolerances,
    /// Offset of the initial state from the normal equilibrium.
    pub perturbation: f64,
    /// Return-map tolerance for declaring the attractor periodic.
    pub period_tol: f64,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        Self {
            horizon: 3000.0,
            attempts: 4,
            tol: Tolerances::SCAN,
            perturbation: 1e-3,
            period_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseClassification {
    pub label: PhaseLabel,
    pub normal: Equilibrium,
    pub superradiant: Vec<Equilibrium>,
    /// Number of distinct `b_x` maxima per period of the detected attractor.
    pub maxima_per_period: Option<usize>,
}

/// Smallest `k <= 8` such that the last few maxima repeat with period `k`.
fn return_period(states: &[SpinState], tol: f64) -> Option<usize> {
    const CHECKS: usize = 6;
    (1..=8).find(|&k| {
        if states.len() < k + CHECKS {
            return false;
        }
        let n = states.len();
        (n - CHECKS..n).all(|i| {
            let a = states[i].as_vector();
            let b = states[i - k].as_vector();
            (a - b).amax() < tol
        })
    })
}

pub fn classify_phase(
    p: &ModelParams,
    opts: &PhaseOptions,
) -> Result<PhaseClassification, BifError> {
    let normal = normal_equilibrium(p)?;
    let superradiant = superradiant_equilibria(p)?;
    let n_stable = normal.stability.is_stable();
    let sr_stable = superradiant.iter().any(|e| e.stability.is_stable());
    let label = match (n_stable, sr_stable) {
        (true, false) => Some(PhaseLabel::Normal),
        (true, true) => Some(PhaseLabel::NormalSuperradiant),
        (false, true) => Some(PhaseLabel::Superradiant),
        (false, false) => None,
    };
    if let Some(label) = label {
        return Ok(PhaseClassification {
            label,
            normal,
            superradiant,
            maxima_per_period: None,
        });
    }

    let field = LmgField::new(p);
    let g = normal.state.gamma;
    let mut s = SpinState::new(opts.perturbation, 0.5 * opts.perturbation, g);
    let spec = [EventSpec::extremum(0)];
    let mut maxima_per_period = None;
    for _ in 0..opts.attempts.max(1) {
        let tr = simulate(p, &s, (0.0, opts.horizon), opts.tol, &spec)?;
        s = tr.y_end().into();
        if field.eval(&s.as_vector()).norm() < 1e-8 {
            break;
        }
        let maxima: Vec<SpinState> = tr
            .events
            .iter()
            // Maxima of b_x in the second half of the run.
            .filter(|e| 2.0 * e.t > opts.horizon && !e.rising)
            .map(|e| e.state.into())
            .collect();
        if let Some(k) = return_period(&maxima, opts.period_tol) {
            maxima_per_period = Some(k);
            break;
        }
    }
    let label = match maxima_per_period {
        Some(_) if p.reduced().delta < 0.0 => PhaseLabel::CounterLasing,
        Some(_) => PhaseLabel::Lasing,
        None => PhaseLabel::Transitional,
    };
    Ok(PhaseClassification {
        label,
        normal,
        superradiant,
        maxima_per_period,
    })
}

/// One cell of a phase-diagram scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub label: PhaseLabel,
    pub gamma_eq: f64,
    /// Leading eigenvalue of the normal equilibrium.
    pub leading_eigenvalue_re: f64,
    pub leading_eigenvalue_im: f64,
}

/// Classifies every grid point; output order is row-major in
/// `(lambda_minus, lambda_plus)` regardless of scheduling.
pub fn phase_diagram(
    p: &ModelParams,
    lambda_minus: &[f64],
    lambda_plus: &[f64],
    opts: &PhaseOptions,
) -> Result<Vec<PhaseRecord>, BifError> {
    let jobs: Vec<(f64, f64)> = lambda_minus
        .iter()
        .flat_map(|&lm| lambda_plus.iter().map(move |&lp| (lm, lp)))
        .collect();
    jobs.par_iter()
        .map(|&(lm, lp)| {
            let q = p.with_lambda_minus(lm).with_lambda_plus(lp);
            let c = classify_phase(&q, opts)?;
            let lead = c.normal.leading_eigenvalue();
            Ok(PhaseRecord {
                lambda_minus: lm,
                lambda_plus: lp,
                label: c.label,
                gamma_eq: c.normal.state.gamma,
                leading_eigenvalue_re: lead.re,
                leading_eigenvalue_im: lead.im,
            })
        })
        .collect()
}
