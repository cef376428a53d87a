use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::newton::{linear_step, newton, NewtonOptions};
use super::{BifurcationEvent, BifurcationKind, BvpError, Diagnostics};

/// Zero set of `F: R^n -> R^(n-1)`; the last unknown is `lambda_+`.
pub trait ContinuationProblem {
    fn dim(&self) -> usize;

    fn residual(&self, u: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), BvpError>;

    /// Called after each accepted point (phase-condition updates).
    fn accept(&mut self, _u: &DVector<f64>) {}

    /// Event kind monitored by each test function.
    fn test_kinds(&self) -> Vec<BifurcationKind>;

    fn test_functions(
        &self,
        u: &DVector<f64>,
        tangent: &DVector<f64>,
    ) -> Result<Vec<f64>, BvpError>;

    /// Confirms a located zero of a test function; `None` discards it.
    fn diagnose(
        &self,
        kind: BifurcationKind,
        u: &DVector<f64>,
        tangent: &DVector<f64>,
    ) -> Option<Diagnostics>;

    /// Reason to end the branch at an accepted point.
    fn stop(&self, _u: &DVector<f64>) -> Option<String> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_points: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub newton: NewtonOptions,
    /// Events are refined until the `lambda_+` bracket is below this.
    pub refine_tol: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            h0: 1e-3,
            h_min: 1e-12,
            h_max: 0.05,
            max_points: 400,
            lambda_min: f64::NEG_INFINITY,
            lambda_max: f64::INFINITY,
            newton: NewtonOptions {
                tol: 1e-10,
                max_iter: 8,
            },
            refine_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchPoint {
    pub u: Vec<f64>,
    pub lambda_plus: f64,
    pub tests: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BranchEnd {
    ParameterBound,
    MaxPoints,
    StepCollapse {
        h: f64,
    },
    /// The branch came back to its starting point.
    ClosedLoop,
    Stopped(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub id: String,
    pub points: Vec<BranchPoint>,
    pub events: Vec<BifurcationEvent>,
    pub end: BranchEnd,
}

/// Unit tangent of the solution curve oriented along `reference`.
pub fn tangent<P: ContinuationProblem>(
    problem: &P,
    u: &DVector<f64>,
    reference: &DVector<f64>,
) -> Result<DVector<f64>, BvpError> {
    let (_, j) = problem.residual(u)?;
    bordered_tangent(&j, reference)
}

fn bordered_tangent(j: &DMatrix<f64>, reference: &DVector<f64>) -> Result<DVector<f64>, BvpError> {
    let n = j.ncols();
    let mut a = j.clone().insert_row(n - 1, 0.0);
    a.row_mut(n - 1).copy_from(&reference.transpose());
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = -1.0;
    let t = linear_step(&a, &rhs)?;
    let t = t.normalize();
    Ok(if t.dot(reference) < 0.0 { -t } else { t })
}

/// Corrects `pred` onto the curve inside the hyperplane orthogonal to `t`.
fn correct<P: ContinuationProblem>(
    problem: &P,
    pred: &DVector<f64>,
    t: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<(DVector<f64>, usize), BvpError> {
    let mut v = pred.clone();
    let n = pred.len();
    let rep = newton(
        &mut v,
        |v| {
            let (r, j) = problem.residual(v)?;
            let r = r.insert_row(n - 1, t.dot(&(v - pred)));
            let mut j = j.insert_row(n - 1, 0.0);
            j.row_mut(n - 1).copy_from(&t.transpose());
            Ok((r, j))
        },
        opts,
    )?;
    Ok((v, rep.iterations))
}

fn sign_change(a: f64, b: f64) -> bool {
    a.is_finite() && b.is_finite() && a != 0.0 && b != 0.0 && (a < 0.0) != (b < 0.0)
}

/// Pseudo-arclength continuation from a converged point `u0`; `direction`
/// fixes the orientation of the initial tangent.
pub fn continue_branch<P: ContinuationProblem>(
    problem: &mut P,
    id: &str,
    u0: DVector<f64>,
    direction: &DVector<f64>,
    opts: &ContinuationOptions,
) -> Result<Branch, BvpError> {
    let n = problem.dim();
    let kinds = problem.test_kinds();
    let start = u0.clone();
    let mut u = u0;
    let mut t = tangent(problem, &u, direction)?;
    let mut tests = problem.test_functions(&u, &t)?;
    let mut branch = Branch {
        id: id.to_string(),
        points: vec![BranchPoint {
            u: u.as_slice().to_vec(),
            lambda_plus: u[n - 1],
            tests: tests.clone(),
        }],
        events: Vec::new(),
        end: BranchEnd::MaxPoints,
    };
    problem.accept(&u);
    let mut h = opts.h0;
    while branch.points.len() < opts.max_points {
        let pred = &u + &t * h;
        let step = correct(problem, &pred, &t, &opts.newton).and_then(|(v, it)| {
            let tv = bordered_tangent(&problem.residual(&v)?.1, &t)?;
            Ok((v, it, tv))
        });
        let (v, iters, tv) = match step {
            Ok(s) if (&s.0 - &u).norm() < 2.0 * h && s.2.dot(&t) > 0.5 => s,
            _ => {
                h *= 0.5;
                if h < opts.h_min {
                    branch.end = BranchEnd::StepCollapse { h };
                    return Ok(branch);
                }
                continue;
            }
        };
        let closes = branch.points.len() > 3 && passes_near(&start, &u, &v, 0.05 * h);
        let tests_v = problem.test_functions(&v, &tv)?;
        for (i, kind) in kinds.iter().enumerate() {
            if sign_change(tests[i], tests_v[i]) {
                if let Some(ev) = refine(problem, &u, &t, h, i, *kind, tests[i], id, opts) {
                    branch.events.push(ev);
                }
            }
        }
        u = v;
        t = tv;
        tests = tests_v;
        branch.points.push(BranchPoint {
            u: u.as_slice().to_vec(),
            lambda_plus: u[n - 1],
            tests: tests.clone(),
        });
        problem.accept(&u);
        if closes {
            branch.end = BranchEnd::ClosedLoop;
            return Ok(branch);
        }
        if u[n - 1] < opts.lambda_min || u[n - 1] > opts.lambda_max {
            branch.end = BranchEnd::ParameterBound;
            return Ok(branch);
        }
        if let Some(reason) = problem.stop(&u) {
            branch.end = BranchEnd::Stopped(reason);
            return Ok(branch);
        }
        if iters <= 3 {
            h = (1.3 * h).min(opts.h_max);
        }
    }
    Ok(branch)
}

/// Whether `x` lies within `dist` of the chord from `a` to `b`.
fn passes_near(x: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>, dist: f64) -> bool {
    let d = b - a;
    let s = (x - a).dot(&d) / d.norm_squared();
    (0.0..=1.0).contains(&s) && (x - a - d * s).norm() < dist
}

/// Illinois iteration on the arclength offset from `u` along `t`.
#[allow(clippy::too_many_arguments)]
fn refine<P: ContinuationProblem>(
    problem: &P,
    u: &DVector<f64>,
    t: &DVector<f64>,
    h: f64,
    index: usize,
    kind: BifurcationKind,
    g0: f64,
    id: &str,
    opts: &ContinuationOptions,
) -> Option<BifurcationEvent> {
    let n = u.len();
    let eval = |s: f64| -> Option<(f64, DVector<f64>, DVector<f64>)> {
        let pred = u + t * s;
        let (v, _) = correct(problem, &pred, t, &opts.newton).ok()?;
        let tv = tangent(problem, &v, t).ok()?;
        let g = problem.test_functions(&v, &tv).ok()?[index];
        Some((g, v, tv))
    };
    let (mut a, mut ga) = (0.0, g0);
    let (gb, mut vb, mut tb) = eval(h)?;
    let (mut b, mut gb) = (h, gb);
    let mut la = u[n - 1];
    for _ in 0..80 {
        if (vb[n - 1] - la).abs() < opts.refine_tol || gb == 0.0 {
            break;
        }
        let mut c = b - gb * (b - a) / (gb - ga);
        if !c.is_finite() || (c - a) * (c - b) >= 0.0 {
            c = 0.5 * (a + b);
        }
        let (gc, vc, tc) = eval(c)?;
        if sign_change(gc, gb) {
            a = b;
            ga = gb;
            la = vb[n - 1];
        } else {
            ga *= 0.5;
        }
        b = c;
        gb = gc;
        vb = vc;
        tb = tc;
    }
    let diagnostics = problem.diagnose(kind, &vb, &tb)?;
    Some(BifurcationEvent {
        kind,
        lambda_plus: vb[n - 1],
        branch: id.to_string(),
        state: vb.as_slice().to_vec(),
        diagnostics,
    })
}
