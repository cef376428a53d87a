//! Trajectory integration with dense output, event location, Poincare
//! sections and largest-Lyapunov-exponent estimation.

mod dop853;
mod events;
mod lyapunov;

pub use dop853::{Control, Dop853, Outcome, Step};
pub use events::{
    extrema_events, poincare_crossings, Band, Crossing, Direction, Event, EventDetector, EventKind,
    EventSpec, Extremum, ExtremumKind,
};
pub use lyapunov::{lyapunov_max, LyapunovEstimate, LyapunovOptions, LyapunovWarning};

use nalgebra::{SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{dicke_rhs, DickeState, LmgField, ModelParams, SpinState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("step size collapsed to {h:e} at t = {t}")]
    StepSizeCollapse { t: f64, h: f64 },
    #[error("maximum number of steps exceeded at t = {t}")]
    MaxSteps { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("trajectory lies in the section x[{component}] = {value}; crossings are undefined")]
    DegenerateSection { component: usize, value: f64 },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerances {
    /// Tolerances for manifold and connecting-orbit work.
    pub const MANIFOLD: Tolerances = Tolerances {
        rtol: 1e-12,
        atol: 1e-14,
    };
    /// Tolerances for parameter scans.
    pub const SCAN: Tolerances = Tolerances {
        rtol: 1e-9,
        atol: 1e-11,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::MANIFOLD
    }
}

/// Dense trajectory: every accepted step with its interpolant.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub t0: f64,
    pub y0: SVector<f64, N>,
    pub steps: Vec<Step<N>>,
    pub events: Vec<Event<N>>,
}

impl<const N: usize> Trajectory<N> {
    pub fn t_end(&self) -> f64 {
        self.steps.last().map_or(self.t0, |s| s.t1())
    }

    pub fn y_end(&self) -> SVector<f64, N> {
        self.steps.last().map_or(self.y0, |s| s.y1)
    }

    fn forward(&self) -> bool {
        self.steps.first().map_or(true, |s| s.h > 0.0)
    }

    fn step_index(&self, t: f64) -> Option<usize> {
        if self.steps.is_empty() {
            return None;
        }
        let fwd = self.forward();
        let idx = self
            .steps
            .partition_point(|s| if fwd { s.t1() < t } else { s.t1() > t });
        Some(idx.min(self.steps.len() - 1))
    }

    /// Interpolated state at `t`; clamps to the covered interval.
    pub fn eval(&self, t: f64) -> SVector<f64, N> {
        match self.step_index(t) {
            None => self.y0,
            Some(i) => {
                let s = &self.steps[i];
                let lo = s.t0.min(s.t1());
                let hi = s.t0.max(s.t1());
                s.eval(t.clamp(lo, hi))
            }
        }
    }

    pub fn eval_derivative(&self, t: f64) -> SVector<f64, N> {
        match self.step_index(t) {
            None => SVector::zeros(),
            Some(i) => self.steps[i].eval_derivative(t),
        }
    }

    /// Image under a linear symmetry of the vector field; event states are
    /// mapped as well (event directions are not re-evaluated).
    pub fn map_linear(&self, m: &SMatrix<f64, N, N>) -> Trajectory<N> {
        Trajectory {
            t0: self.t0,
            y0: m * self.y0,
            steps: self.steps.iter().map(|s| s.map_linear(m)).collect(),
            events: self
                .events
                .iter()
                .map(|e| Event {
                    state: m * e.state,
                    ..e.clone()
                })
                .collect(),
        }
    }

    /// Step endpoints `(t, y)` including the initial point.
    pub fn nodes(&self) -> Vec<(f64, SVector<f64, N>)> {
        std::iter::once((self.t0, self.y0))
            .chain(self.steps.iter().map(|s| (s.t1(), s.y1)))
            .collect()
    }

    /// Uniform resampling with spacing `dt` (sign taken from the direction of
    /// integration); always includes both endpoints.
    pub fn sample(&self, dt: f64) -> Vec<(f64, SVector<f64, N>)> {
        let t1 = self.t_end();
        let span = t1 - self.t0;
        if span == 0.0 || dt <= 0.0 {
            return vec![(self.t0, self.y0)];
        }
        let n = (span.abs() / dt).ceil() as usize;
        (0..=n)
            .map(|k| {
                let t = if k == n {
                    t1
                } else {
                    self.t0 + span * k as f64 / n as f64
                };
                (t, self.eval(t))
            })
            .collect()
    }
}

/// Integrates `f` over `t_span`, recording dense output and the requested
/// events.
pub fn integrate<const N: usize, F>(
    f: F,
    y0: SVector<f64, N>,
    t_span: (f64, f64),
    solver: &Dop853,
    events: &[EventSpec],
) -> Result<Trajectory<N>, IntegrateError>
where
    F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    let mut solver = *solver;
    solver.dense = true;
    let mut steps = Vec::new();
    let mut detector = EventDetector::new(events.to_vec());
    let mut found = Vec::new();
    solver.solve(f, t_span.0, y0, t_span.1, |s| {
        found.extend(detector.process(s));
        steps.push(s.clone());
        Control::Continue
    })?;
    Ok(Trajectory {
        t0: t_span.0,
        y0,
        steps,
        events: found,
    })
}

/// Trajectory of the reduced three-dimensional flow.
pub fn simulate(
    p: &ModelParams,
    s0: &SpinState,
    t_span: (f64, f64),
    tol: Tolerances,
    events: &[EventSpec],
) -> Result<Trajectory<3>, IntegrateError> {
    p.validate()?;
    let field = LmgField::new(p);
    integrate(
        |_t, y: &Vector3<f64>| field.eval(y),
        s0.as_vector(),
        t_span,
        &Dop853::new(tol),
        events,
    )
}

/// Trajectory of the full five-dimensional cavity plus spin system.
pub fn simulate_dicke(
    p: &ModelParams,
    s0: &DickeState,
    t_span: (f64, f64),
    tol: Tolerances,
    events: &[EventSpec],
) -> Result<Trajectory<5>, IntegrateError> {
    p.validate()?;
    let p = *p;
    integrate(
        move |_t, y: &SVector<f64, 5>| dicke_rhs(&DickeState::from(*y), &p).as_vector(),
        s0.as_vector(),
        t_span,
        &Dop853::new(tol),
        events,
    )
}

/// Reduced and full trajectories started from the same spin state, the
/// cavity amplitude seeded with its slaved value.
#[derive(Debug, Clone)]
pub struct DickeComparison {
    pub lmg: Trajectory<3>,
    pub dicke: Trajectory<5>,
}

impl DickeComparison {
    /// Distance between the final spin states.
    pub fn final_difference(&self) -> f64 {
        let d = self.dicke.y_end();
        (self.lmg.y_end() - Vector3::new(d[2], d[3], d[4])).norm()
    }

    /// Largest `b_x` of each trajectory over the last `window` time units,
    /// `(lmg, dicke)`, sampled with spacing `dt`.
    pub fn tail_amplitudes(&self, window: f64, dt: f64) -> (f64, f64) {
        let peak = |t_end: f64, bx: &dyn Fn(f64) -> f64| {
            let n = (window / dt).ceil() as usize;
            (0..=n)
                .map(|k| bx(t_end - window + window * k as f64 / n as f64))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        (
            peak(self.lmg.t_end(), &|t| self.lmg.eval(t)[0]),
            peak(self.dicke.t_end(), &|t| self.dicke.eval(t)[2]),
        )
    }
}

/// Event specs refer to spin components `0..3` and are shifted for the
/// full system.
pub fn compare_dicke(
    p: &ModelParams,
    s0: &SpinState,
    t_end: f64,
    tol: Tolerances,
    events: &[EventSpec],
) -> Result<DickeComparison, IntegrateError> {
    let lmg = simulate(p, s0, (0.0, t_end), tol, events)?;
    let shifted: Vec<EventSpec> = events
        .iter()
        .map(|e| {
            let mut e = *e;
            match &mut e.kind {
                EventKind::Extremum { component } | EventKind::Crossing { component, .. } => {
                    *component += 2
                }
            }
            if let Some(b) = &mut e.exclusion {
                b.component += 2;
            }
            e
        })
        .collect();
    let dicke = simulate_dicke(p, &DickeState::slaved(s0, p), (0.0, t_end), tol, &shifted)?;
    Ok(DickeComparison { lmg, dicke })
}

/// End state of the reduced flow without storing the trajectory.
pub fn flow_to(
    field: &LmgField,
    s0: Vector3<f64>,
    t_span: (f64, f64),
    tol: Tolerances,
) -> Result<Vector3<f64>, IntegrateError> {
    let out = Dop853::new(tol).without_dense().solve(
        |_t, y: &Vector3<f64>| field.eval(y),
        t_span.0,
        s0,
        t_span.1,
        |_| Control::Continue,
    )?;
    Ok(out.y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_eval_matches_nodes_in_both_directions() {
        let p = ModelParams::transitional(1.6);
        let s0 = SpinState::new(0.1, 0.2, -0.3);
        for span in [(0.0, 40.0), (0.0, -40.0)] {
            let tr = simulate(&p, &s0, span, Tolerances::MANIFOLD, &[]).unwrap();
            for (t, y) in tr.nodes() {
                assert!((tr.eval(t) - y).norm() < 1e-13);
            }
            assert_eq!(tr.t_end(), span.1);
            let samples = tr.sample(0.5);
            assert_eq!(samples.len(), 81);
            assert_eq!(samples.last().unwrap().0, span.1);
        }
    }

    #[test]
    fn flow_to_agrees_with_dense_trajectory() {
        let p = ModelParams::transitional(1.6);
        let field = LmgField::new(&p);
        let s0 = SpinState::new(0.1, 0.2, -0.3);
        let tr = simulate(&p, &s0, (0.0, 30.0), Tolerances::MANIFOLD, &[]).unwrap();
        let end = flow_to(&field, s0.as_vector(), (0.0, 30.0), Tolerances::MANIFOLD).unwrap();
        assert!((tr.y_end() - end).norm() < 1e-12);
    }

    #[test]
    fn invalid_parameters_are_rejected_before_integration() {
        let mut p = ModelParams::transitional(1.6);
        p.kappa = 0.0;
        let r = simulate(&p, &SpinState::default(), (0.0, 1.0), Tolerances::SCAN, &[]);
        assert!(matches!(r, Err(IntegrateError::Model(_))));
    }
}
