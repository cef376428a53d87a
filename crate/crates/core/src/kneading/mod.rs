//! Symbolic coding of the unstable manifold of the normal saddle: kneading
//! sequences, kneading invariants, parameter sweeps and plateau detection.

mod symbols;

pub use symbols::{kneading_invariant, negate_map, KneadingInvariant, Symbols};

use nalgebra::{Matrix3, Vector3};
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{
    extrema_events, Control, Dop853, EventDetector, EventSpec, Extremum, ExtremumKind,
    IntegrateError, Step, Tolerances, Trajectory,
};
use crate::localbif::{normal_equilibrium, BifError, Stability};
use crate::model::{LmgField, ModelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KneadingError {
    #[error("normal equilibrium is not a saddle with one unstable direction ({0:?})")]
    NotSaddle(Stability),
    #[error("unstable eigenvalue {re} + {im}i is not real")]
    ComplexUnstable { re: f64, im: f64 },
    #[error("malformed prefix: {0}")]
    MalformedPrefix(String),
    #[error(transparent)]
    Bif(#[from] BifError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// Speed `|f|` below which a trajectory counts as having reached an
/// equilibrium.
pub const CONVERGED_SPEED: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KneadingOptions {
    /// Number of symbols per sequence.
    pub n: usize,
    /// Exclusion half-width `w` on `b_x`.
    pub halfwidth: f64,
    /// Offset of the seed from the saddle along the unit unstable
    /// eigenvector.
    pub delta1: f64,
    /// Integration time budget.
    pub horizon: f64,
    pub tol: Tolerances,
}

impl Default for KneadingOptions {
    fn default() -> Self {
        Self {
            n: 12,
            halfwidth: 0.2,
            delta1: 1e-6,
            horizon: 5000.0,
            tol: Tolerances::MANIFOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Terminal {
    Completed,
    EscapedToAttractor,
    HorizonExhausted,
}

impl Terminal {
    pub fn as_str(&self) -> &'static str {
        match self {
            Terminal::Completed => "completed",
            Terminal::EscapedToAttractor => "escaped-to-attractor",
            Terminal::HorizonExhausted => "horizon-exhausted",
        }
    }
}

impl std::fmt::Display for Terminal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KneadingRecord {
    pub lambda_plus: f64,
    /// Symbols in time order; shorter than `n` only when the record was
    /// cut off by the horizon or by convergence inside the exclusion band.
    pub symbols: Symbols,
    pub invariant: KneadingInvariant,
    pub terminal: Terminal,
}

impl KneadingRecord {
    /// Value used to group records into plateaus: the exact invariant of
    /// the infinite sequence when the symbols are recognisably eventually
    /// periodic, otherwise `K_n`.
    pub fn plateau_value(&self) -> Ratio<u64> {
        self.symbols
            .eventual_limit()
            .unwrap_or_else(|| self.invariant.ratio())
    }
}

/// Saddle point, its unit unstable eigenvector (oriented with `b_x > 0`) and
/// the unstable eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleData {
    pub point: Vector3<f64>,
    pub unstable: Vector3<f64>,
    pub eigenvalue: f64,
}

pub fn saddle_data(p: &ModelParams) -> Result<SaddleData, KneadingError> {
    let eq = normal_equilibrium(p)?;
    if eq.stability != (Stability::Saddle { unstable: 1 }) {
        return Err(KneadingError::NotSaddle(eq.stability));
    }
    let l = eq.eigenvalues[0];
    if l.im.abs() > 1e-12 * l.norm().max(1.0) {
        return Err(KneadingError::ComplexUnstable { re: l.re, im: l.im });
    }
    let v = eq.eigenvectors[0].map(|z| z.re);
    let mut v = v / v.norm();
    let lead = if v[0].abs() > 1e-12 { v[0] } else { v[1] };
    if lead < 0.0 {
        v = -v;
    }
    Ok(SaddleData {
        point: eq.state.as_vector(),
        unstable: v,
        eigenvalue: l.re,
    })
}

/// The parity `(b_x, b_y, gamma) -> (-b_x, -b_y, gamma)` as a matrix.
pub fn parity_matrix() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0))
}

/// Negative branch of the unstable manifold, started at `N_u - delta1 y_u`
/// and integrated for at most `arc_budget` time units or until it settles
/// on an equilibrium. Extrema of `b_x` are recorded as events.
pub fn unstable_branch(
    p: &ModelParams,
    delta1: f64,
    arc_budget: f64,
    tol: Tolerances,
) -> Result<Trajectory<3>, KneadingError> {
    let s = saddle_data(p)?;
    let y0 = s.point - s.unstable * delta1;
    let field = LmgField::new(p);
    let mut steps = Vec::new();
    let mut det = EventDetector::new(vec![EventSpec::extremum(0)]);
    let mut events = Vec::new();
    Dop853::new(tol).solve(
        |_t, y: &Vector3<f64>| field.eval(y),
        0.0,
        y0,
        arc_budget,
        |st: &Step<3>| {
            events.extend(det.process(st));
            steps.push(st.clone());
            if st.f1.norm() < CONVERGED_SPEED {
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    Ok(Trajectory {
        t0: 0.0,
        y0,
        steps,
        events,
    })
}

/// Positive branch, the parity image of the negative one.
pub fn positive_branch(negative: &Trajectory<3>) -> Trajectory<3> {
    negative.map_linear(&parity_matrix())
}

fn symbol(e: &Extremum) -> u8 {
    match e.kind {
        ExtremumKind::Minimum => 0,
        ExtremumKind::Maximum => 1,
    }
}

/// First `n` retained symbols along `traj` (0 for a minimum of `b_x` below
/// `-w`, 1 for a maximum above `w`). The flag is false when the trajectory
/// ran out before `n` symbols.
pub fn kneading_sequence(traj: &Trajectory<3>, n: usize, w: f64) -> (Symbols, bool) {
    let s: Vec<u8> = extrema_events(traj, 0, w)
        .iter()
        .take(n)
        .map(symbol)
        .collect();
    let complete = s.len() == n;
    (Symbols::new(s), complete)
}

/// Streams the negative unstable branch until `n` symbols are collected.
/// When the branch settles on an equilibrium outside the exclusion band,
/// the remaining symbols repeat the side it settled on.
pub fn kneading_record(
    p: &ModelParams,
    opts: &KneadingOptions,
) -> Result<KneadingRecord, KneadingError> {
    let s = saddle_data(p)?;
    let y0 = s.point - s.unstable * opts.delta1;
    let field = LmgField::new(p);
    let mut det = EventDetector::new(vec![EventSpec::extremum(0)]);
    let mut symbols = Vec::with_capacity(opts.n);
    let mut settled = None;
    let out = Dop853::new(opts.tol).solve(
        |_t, y: &Vector3<f64>| field.eval(y),
        0.0,
        y0,
        opts.horizon,
        |st: &Step<3>| {
            for e in det.process(st) {
                if let Some(x) = Extremum::from_event(&e, 0, opts.halfwidth) {
                    symbols.push(symbol(&x));
                }
            }
            if symbols.len() >= opts.n {
                return Control::Stop;
            }
            if st.f1.norm() < CONVERGED_SPEED {
                settled = Some(st.y1);
                return Control::Stop;
            }
            Control::Continue
        },
    )?;
    symbols.truncate(opts.n);
    let terminal = if symbols.len() == opts.n {
        Terminal::Completed
    } else if let Some(y) = settled {
        let fill = if y[0] < -opts.halfwidth {
            Some(0)
        } else if y[0] > opts.halfwidth {
            Some(1)
        } else {
            None
        };
        if let Some(a) = fill {
            symbols.resize(opts.n, a);
        }
        Terminal::EscapedToAttractor
    } else {
        debug_assert!(!out.stopped);
        Terminal::HorizonExhausted
    };
    let symbols = Symbols::new(symbols);
    Ok(KneadingRecord {
        lambda_plus: p.lambda_plus,
        invariant: kneading_invariant(&symbols, opts.n),
        symbols,
        terminal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFailure {
    pub lambda_plus: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    /// Successful records in grid order.
    pub records: Vec<KneadingRecord>,
    pub failures: Vec<SweepFailure>,
}

/// One independent integration per grid value of `lambda_+`; results are
/// merged in grid order.
pub fn sweep(p: &ModelParams, grid: &[f64], opts: &KneadingOptions) -> Sweep {
    let results: Vec<_> = grid
        .par_iter()
        .map(|&lp| (lp, kneading_record(&p.with_lambda_plus(lp), opts)))
        .collect();
    let mut out = Sweep {
        records: Vec::with_capacity(grid.len()),
        failures: Vec::new(),
    };
    for (lp, r) in results {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.failures.push(SweepFailure {
                lambda_plus: lp,
                error: e.to_string(),
            }),
        }
    }
    out
}

/// Bisects `[lo, hi]` on a predicate that holds at `lo` and fails at `hi`
/// (or vice versa) until the bracket is narrower than `resolution`.
/// Points where the record cannot be computed count as failing.
pub fn bisect_transition<F>(
    p: &ModelParams,
    opts: &KneadingOptions,
    mut lo: f64,
    mut hi: f64,
    resolution: f64,
    pred: F,
) -> (f64, f64)
where
    F: Fn(&KneadingRecord) -> bool,
{
    let test = |lp: f64| {
        kneading_record(&p.with_lambda_plus(lp), opts)
            .map(|r| pred(&r))
            .unwrap_or(false)
    };
    let at_lo = test(lo);
    while (hi - lo).abs() > resolution {
        let mid = 0.5 * (lo + hi);
        if test(mid) == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlateauInterval {
    pub lo: f64,
    pub hi: f64,
    pub value: Ratio<u64>,
    pub left_sequence: Symbols,
    pub right_sequence: Symbols,
    /// Where the symbol sequence switches inside the plateau, if it does.
    pub spike_center: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauOptions {
    /// Minimum number of grid records in a run.
    pub min_points: usize,
    /// Runs with the same value separated by at most this many records are
    /// merged; the records between them are spikes.
    pub max_spike_points: usize,
    /// Bisection resolution for boundaries and spike centres; `None` keeps
    /// grid resolution.
    pub resolution: Option<f64>,
}

impl Default for PlateauOptions {
    fn default() -> Self {
        Self {
            min_points: 2,
            max_spike_points: 3,
            resolution: Some(1e-7),
        }
    }
}

/// Maximal runs of constant plateau value in `records` (sorted by
/// `lambda_+`). Refinement integrates new points with `p` and `kopts`.
pub fn detect_plateaus(
    p: &ModelParams,
    records: &[KneadingRecord],
    kopts: &KneadingOptions,
    opts: &PlateauOptions,
) -> Vec<PlateauInterval> {
    // Runs as index ranges [start, end].
    let mut runs: Vec<(usize, usize, Ratio<u64>)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let v = r.plateau_value();
        match runs.last_mut() {
            Some((_, end, val)) if *val == v && *end + 1 == i => *end = i,
            _ => runs.push((i, i, v)),
        }
    }
    let mut merged: Vec<(usize, usize, Ratio<u64>)> = Vec::new();
    for run in runs {
        if run.1 + 1 - run.0 < opts.min_points {
            continue;
        }
        match merged.last_mut() {
            Some(last) if last.2 == run.2 && run.0 - last.1 - 1 <= opts.max_spike_points => {
                last.1 = run.1;
            }
            _ => merged.push(run),
        }
    }

    let same = |v: Ratio<u64>| move |r: &KneadingRecord| r.plateau_value() == v;
    merged
        .into_iter()
        .map(|(a, b, v)| {
            let mut lo = records[a].lambda_plus;
            let mut hi = records[b].lambda_plus;
            let mut left = records[a].symbols.clone();
            let mut right = records[b].symbols.clone();
            let mut spike_center = None;
            let inner = &records[a..=b];
            if let Some(k) = inner.iter().position(|r| r.symbols != left) {
                let (x0, x1) = (inner[k - 1].lambda_plus, inner[k].lambda_plus);
                spike_center = Some(0.5 * (x0 + x1));
                if inner[k].plateau_value() != v {
                    // Departing points: centre of the excursion.
                    let end = inner[k..]
                        .iter()
                        .position(|r| r.plateau_value() == v)
                        .map_or(inner.len() - 1, |m| k + m);
                    spike_center = Some(0.5 * (inner[k].lambda_plus + inner[end - 1].lambda_plus));
                } else if let Some(res) = opts.resolution {
                    let l0 = left.clone();
                    let (s0, s1) =
                        bisect_transition(p, kopts, x0, x1, res, move |r| r.symbols == l0);
                    spike_center = Some(0.5 * (s0 + s1));
                }
            }
            if let Some(res) = opts.resolution {
                if a > 0 {
                    let (inside, _) =
                        bisect_transition(p, kopts, lo, records[a - 1].lambda_plus, res, same(v));
                    lo = inside;
                    if let Ok(r) = kneading_record(&p.with_lambda_plus(lo), kopts) {
                        left = r.symbols;
                    }
                }
                if b + 1 < records.len() {
                    let (inside, _) =
                        bisect_transition(p, kopts, hi, records[b + 1].lambda_plus, res, same(v));
                    hi = inside;
                    if let Ok(r) = kneading_record(&p.with_lambda_plus(hi), kopts) {
                        right = r.symbols;
                    }
                }
            }
            PlateauInterval {
                lo,
                hi,
                value: v,
                left_sequence: left,
                right_sequence: right,
                spike_center,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> ModelParams {
        ModelParams::transitional(1.532895)
    }

    #[test]
    fn saddle_data_at_transitional_parameters() {
        let s = saddle_data(&fixture()).unwrap();
        assert!((s.eigenvalue - 0.13341).abs() < 1e-4);
        assert!((s.unstable.norm() - 1.0).abs() < 1e-14);
        assert!(s.unstable[0] > 0.0);
        let j = LmgField::new(&fixture()).jacobian(&s.point);
        assert!((j * s.unstable - s.unstable * s.eigenvalue).norm() < 1e-12);
    }

    #[test]
    fn saddle_is_required() {
        let e = kneading_record(&ModelParams::transitional(1.0), &KneadingOptions::default());
        assert!(matches!(e, Err(KneadingError::NotSaddle(Stability::Sink))));
        // Above the Hopf curve at small lambda_- the unstable pair is complex.
        let p = ModelParams::transitional(0.8).with_lambda_minus(0.5);
        assert!(matches!(
            saddle_data(&p),
            Err(KneadingError::NotSaddle(_)) | Err(KneadingError::ComplexUnstable { .. })
        ));
    }

    #[test]
    fn fixture_sequence() {
        let r = kneading_record(&fixture(), &KneadingOptions::default()).unwrap();
        assert_eq!(r.symbols.to_string(), "010110000000");
        assert_eq!(r.terminal, Terminal::Completed);
        assert_eq!(r.invariant.ratio(), Ratio::new(11, 32));
    }

    #[test]
    fn streamed_and_stored_branches_agree() {
        let opts = KneadingOptions::default();
        let tr = unstable_branch(&fixture(), opts.delta1, 2000.0, opts.tol).unwrap();
        let (s, complete) = kneading_sequence(&tr, 12, 0.2);
        assert!(complete);
        assert_eq!(s.to_string(), "010110000000");
        let plus = positive_branch(&tr);
        let (sp, _) = kneading_sequence(&plus, 12, 0.2);
        assert_eq!(sp, s.negated());
        for t in [0.0, 13.7, 150.0, 900.0] {
            let a = tr.eval(t);
            let b = plus.eval(t);
            assert_eq!((a[0], a[1], a[2]), (-b[0], -b[1], b[2]));
        }
    }

    #[test]
    fn halving_the_seed_offset_keeps_the_sequence() {
        let mut opts = KneadingOptions::default();
        let a = kneading_record(&fixture(), &opts).unwrap();
        opts.delta1 *= 0.5;
        let b = kneading_record(&fixture(), &opts).unwrap();
        assert_eq!(a.symbols, b.symbols);
    }

    #[test]
    fn sweep_keeps_grid_order_and_records_failures() {
        let grid = [1.0, 1.5329, 1.534];
        let s = sweep(
            &ModelParams::transitional(1.5),
            &grid,
            &KneadingOptions::default(),
        );
        assert_eq!(s.failures.len(), 1);
        assert_eq!(s.failures[0].lambda_plus, 1.0);
        let lp: Vec<f64> = s.records.iter().map(|r| r.lambda_plus).collect();
        assert_eq!(lp, vec![1.5329, 1.534]);
        assert_eq!(s.records[1].plateau_value(), Ratio::new(1, 3));
    }
}
