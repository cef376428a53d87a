use nalgebra::{DVector, Vector3};
use roots::{find_root_brent, SimpleConvergency};
use serde::Serialize;

use super::flow::flow_jet;
use super::periodic::PeriodicProblem;
use super::segment::{Boundary, OrbitSegment};
use super::BvpError;
use crate::integrate::{
    Control, Direction, Dop853, Event, EventDetector, EventSpec, Extremum, ExtremumKind, Step,
    Tolerances, Trajectory,
};
use crate::kneading::{saddle_data, Symbols};
use crate::localbif::{eigen_decomposition, normal_equilibrium};
use crate::model::{LmgField, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinOptions {
    /// The section is the plane `gamma = section`.
    pub section: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Exclusion half-width used to label the loops of `x1`.
    pub halfwidth: f64,
    /// Grid points for the sign-change scan of the gap.
    pub grid_points: usize,
    pub horizon: f64,
    /// Width of the final `lambda_+` bracket.
    pub root_tol: f64,
    /// Mesh intervals of the exported segments.
    pub mesh: usize,
    pub tol: Tolerances,
}

impl Default for LinOptions {
    fn default() -> Self {
        Self {
            section: -0.4,
            delta1: 1e-5,
            delta2: 1e-5,
            halfwidth: 0.2,
            grid_points: 21,
            horizon: 5000.0,
            root_tol: 1e-10,
            mesh: 400,
            tol: Tolerances::MANIFOLD,
        }
    }
}

/// Connection sought by Lin's method.
#[derive(Debug, Clone, PartialEq)]
pub enum LinTarget {
    /// Homoclinic orbit of the normal saddle whose loops carry `sequence`.
    Homoclinic(Symbols),
    /// Connection from the normal saddle to a saddle periodic orbit after
    /// the loops in `prefix`; `x1` ends after `wraps` further passes.
    EtoP { prefix: Symbols, wraps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConnectionKind {
    Homoclinic,
    EtoP,
}

/// Two orbit segments meeting in the section with their gap measured
/// along the fixed Lin vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinProblem {
    pub x1: OrbitSegment,
    pub x2: OrbitSegment,
    pub section: f64,
    pub lin_vector: Vector3<f64>,
    /// Signed gap `(x2(0) - x1(1)) . v`.
    pub gap: f64,
    /// Component of the gap orthogonal to the Lin vector (zero when solved).
    pub transverse: f64,
    /// `Phi` (homoclinic) or `delta2` (EtoP).
    pub x2_parameter: f64,
    pub lambda_plus: f64,
    /// Symbols of the loops of `x1`.
    pub symbols: Symbols,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Connection {
    pub kind: ConnectionKind,
    pub lambda_plus: f64,
    pub label: String,
    pub problem: LinProblem,
    /// Unstable, leading stable and strong stable eigenvalues of the saddle.
    pub saddle_eigenvalues: [f64; 3],
    /// Final `lambda_+` bracket.
    pub bracket: (f64, f64),
}

impl Connection {
    /// `|v_u| > |v_s|` with `v_s` the leading stable eigenvalue.
    pub fn is_expanding(&self) -> bool {
        self.saddle_eigenvalues[0].abs() > self.saddle_eigenvalues[1].abs()
    }

    /// Mesh of the assembled orbit `x1` followed by `x2` in forward time.
    pub fn assembled(&self) -> Vec<(f64, Vector3<f64>)> {
        let p1 = &self.problem.x1;
        let p2 = &self.problem.x2;
        let mut out: Vec<_> = p1
            .mesh
            .iter()
            .zip(&p1.states)
            .map(|(s, x)| (s * p1.time, *x))
            .collect();
        out.extend(
            p2.mesh
                .iter()
                .zip(&p2.states)
                .skip(1)
                .map(|(s, x)| (p1.time + s * p2.time, *x)),
        );
        out
    }

    /// Time up to which the initial-value solution from `x1(0)` stays
    /// within `bound` of the assembled orbit.
    pub fn shadowing_time(
        &self,
        p: &ModelParams,
        bound: f64,
        tol: Tolerances,
    ) -> Result<f64, BvpError> {
        let q = p.with_lambda_plus(self.lambda_plus);
        let pts = self.assembled();
        let f = LmgField::new(&q);
        let mut x = pts[0].1;
        let mut last = pts[0].0;
        for w in pts.windows(2) {
            let (t0, _) = w[0];
            let (t1, y1) = w[1];
            x = crate::integrate::flow_to(&f, x, (t0, t1), tol)?;
            if (x - y1).amax() > bound {
                return Ok(last);
            }
            last = t1;
        }
        Ok(last)
    }
}

/// Integrates from `y0` over `[0, t_end]` and stops at the `count`-th event.
fn run_until(
    field: &LmgField,
    y0: Vector3<f64>,
    t_end: f64,
    tol: Tolerances,
    specs: Vec<EventSpec>,
    stop_spec: usize,
    count: usize,
) -> Result<(Trajectory<3>, Option<Event<3>>), BvpError> {
    let mut det = EventDetector::new(specs);
    let mut steps = Vec::new();
    let mut events = Vec::new();
    let mut hit = None;
    let mut seen = 0;
    Dop853::new(tol).solve(
        |_t, y: &Vector3<f64>| field.eval(y),
        0.0,
        y0,
        t_end,
        |st: &Step<3>| {
            steps.push(st.clone());
            for e in det.process(st) {
                if hit.is_some() {
                    break;
                }
                if e.spec == stop_spec {
                    seen += 1;
                    if seen == count {
                        hit = Some(e.clone());
                    }
                }
                events.push(e);
            }
            if hit.is_some() {
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    Ok((
        Trajectory {
            t0: 0.0,
            y0,
            steps,
            events,
        },
        hit,
    ))
}

fn segment_from(traj: &Trajectory<3>, t_end: f64, mesh: usize, lambda_plus: f64) -> OrbitSegment {
    let n = mesh.max(1);
    let ms: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let states = ms.iter().map(|s| traj.eval(s * t_end)).collect();
    OrbitSegment {
        mesh: ms,
        states,
        time: t_end,
        lambda_plus,
        boundary: Vec::new(),
    }
}

/// Negative unstable branch up to its `k`-th downward crossing of the
/// section, with the symbols of the loops on the way.
fn unstable_segment(
    p: &ModelParams,
    k: usize,
    opts: &LinOptions,
) -> Result<(OrbitSegment, Symbols), BvpError> {
    let s = saddle_data(p)?;
    let y0 = s.point - s.unstable * opts.delta1;
    let field = LmgField::new(p);
    let specs = vec![
        EventSpec::extremum(0),
        EventSpec::crossing(2, opts.section, Direction::Falling),
    ];
    let (tr, hit) = run_until(&field, y0, opts.horizon, opts.tol, specs, 1, k)?;
    let hit = hit.ok_or(BvpError::LostCrossing {
        lambda_plus: p.lambda_plus,
    })?;
    let symbols: Vec<u8> = tr
        .events
        .iter()
        .filter(|e| e.spec == 0 && e.t < hit.t)
        .filter_map(|e| Extremum::from_event(e, 0, opts.halfwidth))
        .map(|x| u8::from(x.kind == ExtremumKind::Maximum))
        .collect();
    let mut seg = segment_from(&tr, hit.t, opts.mesh, p.lambda_plus);
    *seg.states.last_mut().expect("mesh is non-empty") = hit.state;
    seg.boundary = vec![
        Boundary::Start(y0),
        Boundary::EndOnPlane {
            component: 2,
            value: opts.section,
        },
    ];
    Ok((seg, Symbols::new(symbols)))
}

/// Integrates backward from `end` to the last downward crossing of the
/// section before it; returns the crossing state and the segment in
/// forward time.
fn stable_segment(
    field: &LmgField,
    end: Vector3<f64>,
    opts: &LinOptions,
    tol: Tolerances,
    with_segment: bool,
) -> Result<Option<(Vector3<f64>, OrbitSegment)>, BvpError> {
    let specs = vec![EventSpec::crossing(2, opts.section, Direction::Falling)];
    let (tr, hit) = run_until(field, end, -opts.horizon, tol, specs, 0, 1)?;
    let Some(hit) = hit else { return Ok(None) };
    let duration = -hit.t;
    let seg = if with_segment {
        let n = opts.mesh.max(1);
        let mesh: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let mut states: Vec<_> = mesh.iter().map(|s| tr.eval(hit.t + s * duration)).collect();
        states[0] = hit.state;
        states[n] = end;
        OrbitSegment {
            mesh,
            states,
            time: duration,
            lambda_plus: field.params.lambda_plus,
            boundary: vec![
                Boundary::StartOnPlane {
                    component: 2,
                    value: opts.section,
                },
                Boundary::End(end),
            ],
        }
    } else {
        OrbitSegment {
            mesh: vec![],
            states: vec![],
            time: duration,
            lambda_plus: field.params.lambda_plus,
            boundary: vec![],
        }
    };
    Ok(Some((hit.state, seg)))
}

/// Fixed directions in the section: `c` along the stable-manifold trace,
/// `v` (the Lin vector) across it.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Frame {
    c: Vector3<f64>,
    v: Vector3<f64>,
}

impl Frame {
    fn from_tangent(c: Vector3<f64>) -> Self {
        let c = Vector3::new(c[0], c[1], 0.0).normalize();
        Frame {
            c,
            v: Vector3::new(-c[1], c[0], 0.0),
        }
    }
}

/// Tolerances resolving the tiny in-plane components near the saddle in
/// relative terms.
fn fine(tol: Tolerances) -> Tolerances {
    Tolerances {
        rtol: tol.rtol,
        atol: 1e-24,
    }
}

struct StableFamily {
    field: LmgField,
    base: Vector3<f64>,
    ys: Vector3<f64>,
    yss: Vector3<f64>,
    delta2: f64,
}

impl StableFamily {
    fn new(p: &ModelParams, delta2: f64) -> Result<Self, BvpError> {
        let eq = normal_equilibrium(p)?;
        let (vals, vecs) = eigen_decomposition(&LmgField::new(p).jacobian(&eq.state.as_vector()));
        // Leading stable direction is the invariant gamma axis.
        let stable: Vec<usize> = (0..3).filter(|&i| vals[i].re < 0.0).collect();
        if stable.len() != 2 || stable.iter().any(|&i| vals[i].im.abs() > 1e-12) {
            return Err(BvpError::Kneading(
                crate::kneading::KneadingError::NotSaddle(eq.stability),
            ));
        }
        let (is, iss) = if vals[stable[0]].re > vals[stable[1]].re {
            (stable[0], stable[1])
        } else {
            (stable[1], stable[0])
        };
        let mut ys = vecs[is].map(|z| z.re).normalize();
        if ys[2] < 0.0 {
            ys = -ys;
        }
        let mut yss = vecs[iss].map(|z| z.re).normalize();
        if yss[0] < 0.0 {
            yss = -yss;
        }
        Ok(Self {
            field: LmgField::new(p),
            base: eq.state.as_vector(),
            ys,
            yss,
            delta2,
        })
    }

    fn end(&self, phi: f64) -> Vector3<f64> {
        self.base + (self.ys * phi.cos() + self.yss * phi.sin()) * self.delta2
    }

    fn trace(&self, phi: f64, opts: &LinOptions) -> Option<Vector3<f64>> {
        stable_segment(&self.field, self.end(phi), opts, fine(opts.tol), false)
            .ok()
            .flatten()
            .map(|(x, _)| x)
    }

    /// Solves `(x2(0) - q) . c = 0` for `Phi` on the side of `q`.
    fn solve(&self, q: &Vector3<f64>, c: &Vector3<f64>, opts: &LinOptions) -> Option<f64> {
        let probe = 1e-12;
        let xp = self.trace(probe, opts)?;
        let xm = self.trace(-probe, opts)?;
        let side = if (xp - xm).dot(c) * (q - 0.5 * (xp + xm)).dot(c) >= 0.0 {
            1.0
        } else {
            -1.0
        };
        let g = |psi: f64| -> f64 {
            self.trace(side * psi.exp(), opts)
                .map_or(f64::NAN, |x| (x - q).dot(c))
        };
        let mut prev: Option<(f64, f64)> = None;
        let mut psi = (1e-15f64).ln();
        while psi < (0.5f64).ln() {
            let gv = g(psi);
            if let Some((pp, gp)) = prev {
                if gp.is_finite() && gv.is_finite() && gp * gv <= 0.0 {
                    let mut conv = SimpleConvergency {
                        eps: 1e-13,
                        max_iter: 200,
                    };
                    let r = find_root_brent(pp, psi, g, &mut conv).ok()?;
                    return Some(side * r.exp());
                }
            }
            prev = Some((psi, gv));
            psi += 0.5;
        }
        None
    }
}

fn saddle_eigenvalues(p: &ModelParams) -> Result<[f64; 3], BvpError> {
    let eq = normal_equilibrium(p)?;
    let mut v: Vec<f64> = eq.eigenvalues.iter().map(|z| z.re).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    Ok([v[0], v[1], v[2]])
}

enum Setup<'a> {
    Hom {
        k: usize,
    },
    EtoP {
        k: usize,
        orbit: &'a PeriodicProblem,
    },
}

struct Evaluator<'a> {
    base: ModelParams,
    setup: Setup<'a>,
    opts: LinOptions,
    frame: Option<Frame>,
    orbit_guess: std::cell::RefCell<Option<DVector<f64>>>,
}

impl Evaluator<'_> {
    fn gap(&mut self, lp: f64, full: bool) -> Result<LinProblem, BvpError> {
        let p = self.base.with_lambda_plus(lp);
        let opts = self.opts;
        let k = match self.setup {
            Setup::Hom { k } | Setup::EtoP { k, .. } => k,
        };
        let (x1, symbols) = unstable_segment(&p, k, &opts)?;
        let q = x1.end();
        let (x2_end, x2_start, param) = match self.setup {
            Setup::Hom { .. } => {
                let fam = StableFamily::new(&p, opts.delta2)?;
                if self.frame.is_none() {
                    let radial = Vector3::new(q[0], q[1], 0.0);
                    let phi = fam
                        .solve(&q, &radial.normalize(), &opts)
                        .ok_or(BvpError::LostCrossing { lambda_plus: lp })?;
                    let h = 1e-6 * phi.abs();
                    let a = fam
                        .trace(phi + h, &opts)
                        .ok_or(BvpError::LostCrossing { lambda_plus: lp })?;
                    let b = fam
                        .trace(phi - h, &opts)
                        .ok_or(BvpError::LostCrossing { lambda_plus: lp })?;
                    self.frame = Some(Frame::from_tangent(a - b));
                }
                let fr = self.frame.expect("frame set above");
                let phi = fam
                    .solve(&q, &fr.c, &opts)
                    .ok_or(BvpError::LostCrossing { lambda_plus: lp })?;
                let end = fam.end(phi);
                let start = fam
                    .trace(phi, &opts)
                    .ok_or(BvpError::LostCrossing { lambda_plus: lp })?;
                (end, start, phi)
            }
            Setup::EtoP { orbit, .. } => {
                let mut u = self
                    .orbit_guess
                    .borrow()
                    .clone()
                    .ok_or_else(|| BvpError::NoOrbit("no periodic orbit seed".into()))?;
                let n = u.len();
                u[n - 1] = lp;
                orbit.correct_at_fixed_lambda(&mut u, &Default::default())?;
                *self.orbit_guess.borrow_mut() = Some(u.clone());
                let field = LmgField::new(&p);
                let period = orbit.period(&u);
                let x0 = orbit.x(&u, 0);
                // Base point: upward crossing of the section on the orbit.
                let specs = vec![EventSpec::crossing(2, opts.section, Direction::Rising)];
                let (_, up) = run_until(&field, x0, 1.5 * period, opts.tol, specs, 0, 1)?;
                let p0 = up.ok_or(BvpError::LostCrossing { lambda_plus: lp })?.state;
                let specs = vec![EventSpec::crossing(2, opts.section, Direction::Falling)];
                let (_, down) = run_until(&field, p0, 1.5 * period, opts.tol, specs, 0, 1)?;
                let q_po = down
                    .ok_or(BvpError::LostCrossing { lambda_plus: lp })?
                    .state;
                let jet = flow_jet(&field, &p0, period, opts.tol)?;
                let (vals, vecs) = eigen_decomposition(&jet.dx);
                let ws = (0..3)
                    .filter(|&i| vals[i].norm() < 0.5 && vals[i].im.abs() < 1e-9)
                    .min_by(|&a, &b| vals[a].norm().total_cmp(&vals[b].norm()))
                    .map(|i| vecs[i].map(|z| z.re).normalize())
                    .ok_or_else(|| BvpError::DegenerateMultipliers(format!("{vals:?}")))?;
                let trace = |d: f64| -> Result<Vector3<f64>, BvpError> {
                    stable_segment(&field, p0 + ws * d, &opts, opts.tol, false)?
                        .map(|(x, _)| x)
                        .ok_or(BvpError::LostCrossing { lambda_plus: lp })
                };
                let d0 = 1e-7;
                let dc = (trace(d0)? - trace(-d0)?) / (2.0 * d0);
                if self.frame.is_none() {
                    self.frame = Some(Frame::from_tangent(dc));
                }
                let fr = self.frame.expect("frame set above");
                // Secant iteration on delta2 from the linear prediction.
                let g = |d: f64| -> Result<f64, BvpError> { Ok((trace(d)? - q).dot(&fr.c)) };
                let mut d_a = (q - q_po).dot(&fr.c) / dc.dot(&fr.c);
                let mut g_a = g(d_a)?;
                let mut d_b = d_a * (1.0 + 1e-3) + 1e-12;
                let mut g_b = g(d_b)?;
                for _ in 0..30 {
                    if g_b.abs() < 1e-14 || g_b == g_a {
                        break;
                    }
                    let d_c = d_b - g_b * (d_b - d_a) / (g_b - g_a);
                    d_a = d_b;
                    g_a = g_b;
                    d_b = d_c;
                    g_b = g(d_b)?;
                }
                (p0 + ws * d_b, trace(d_b)?, d_b)
            }
        };
        let d = x2_start - q;
        let fr = self.frame.expect("frame is set");
        let x2 = if full {
            let tol = match self.setup {
                Setup::Hom { .. } => fine(opts.tol),
                Setup::EtoP { .. } => opts.tol,
            };
            stable_segment(&LmgField::new(&p), x2_end, &opts, tol, true)?
                .ok_or(BvpError::LostCrossing { lambda_plus: lp })?
                .1
        } else {
            OrbitSegment {
                mesh: vec![],
                states: vec![],
                time: 0.0,
                lambda_plus: lp,
                boundary: vec![],
            }
        };
        Ok(LinProblem {
            x1,
            x2,
            section: opts.section,
            lin_vector: fr.v,
            gap: d.dot(&fr.v),
            transverse: d.dot(&fr.c),
            x2_parameter: param,
            lambda_plus: lp,
            symbols,
        })
    }
}

/// Lin gap at a single parameter value (the Lin vector is fixed from this
/// point).
pub fn lin_gap(
    p: &ModelParams,
    target: &LinTarget,
    opts: &LinOptions,
) -> Result<LinProblem, BvpError> {
    match target {
        LinTarget::Homoclinic(s) => Evaluator {
            base: *p,
            setup: Setup::Hom { k: s.len() },
            opts: *opts,
            frame: None,
            orbit_guess: Default::default(),
        }
        .gap(p.lambda_plus, true),
        LinTarget::EtoP { .. } => Err(BvpError::NoOrbit(
            "EtoP gaps need a periodic orbit; use lin_find_etop".into(),
        )),
    }
}

fn find_root(
    ev: &mut Evaluator,
    window: (f64, f64),
    prefix: &Symbols,
) -> Result<(LinProblem, (f64, f64)), BvpError> {
    let opts = ev.opts;
    let n = opts.grid_points.max(2);
    let mut prev: Option<LinProblem> = None;
    let mut bracket = None;
    for i in 0..n {
        let lp = window.0 + (window.1 - window.0) * i as f64 / (n - 1) as f64;
        let Ok(cur) = ev.gap(lp, false) else {
            prev = None;
            continue;
        };
        let valid = cur.symbols.as_slice().starts_with(prefix.as_slice());
        if !valid {
            prev = None;
            continue;
        }
        if let Some(pr) = &prev {
            if (pr.gap < 0.0) != (cur.gap < 0.0) {
                bracket = Some((pr.clone(), cur));
                break;
            }
        }
        prev = Some(cur);
    }
    let (mut a, mut b) = bracket.ok_or(BvpError::NoRoot {
        lo: window.0,
        hi: window.1,
    })?;
    // Illinois iteration on the gap.
    let mut ga = a.gap;
    for _ in 0..200 {
        if (b.lambda_plus - a.lambda_plus).abs() < opts.root_tol || b.gap == 0.0 {
            break;
        }
        let mut c = b.lambda_plus - b.gap * (b.lambda_plus - a.lambda_plus) / (b.gap - ga);
        let (lo, hi) = (
            a.lambda_plus.min(b.lambda_plus),
            a.lambda_plus.max(b.lambda_plus),
        );
        if !(c > lo && c < hi) {
            c = 0.5 * (lo + hi);
        }
        let cur = ev.gap(c, false)?;
        if (cur.gap < 0.0) != (b.gap < 0.0) {
            a = b;
            ga = a.gap;
        } else {
            ga *= 0.5;
        }
        b = cur;
    }
    let best = if b.gap.abs() <= ga.abs() {
        b.lambda_plus
    } else {
        a.lambda_plus
    };
    let bracket = (
        a.lambda_plus.min(b.lambda_plus),
        a.lambda_plus.max(b.lambda_plus),
    );
    let sol = ev.gap(best, true)?;
    Ok((sol, bracket))
}

/// Homoclinic orbit of the normal saddle whose loops carry `sequence`,
/// searched for in `window`.
pub fn lin_find_homoclinic(
    p: &ModelParams,
    sequence: &Symbols,
    window: (f64, f64),
    opts: &LinOptions,
) -> Result<Connection, BvpError> {
    let mut ev = Evaluator {
        base: *p,
        setup: Setup::Hom { k: sequence.len() },
        opts: *opts,
        frame: None,
        orbit_guess: Default::default(),
    };
    let (problem, bracket) = find_root(&mut ev, window, sequence)?;
    let q = p.with_lambda_plus(problem.lambda_plus);
    Ok(Connection {
        kind: ConnectionKind::Homoclinic,
        lambda_plus: problem.lambda_plus,
        label: sequence.to_string(),
        saddle_eigenvalues: saddle_eigenvalues(&q)?,
        problem,
        bracket,
    })
}

/// Connection from the normal saddle to the saddle periodic orbit given by
/// `orbit` and the solution vector `u` (corrected along the way).
pub fn lin_find_etop(
    p: &ModelParams,
    prefix: &Symbols,
    wraps: usize,
    orbit: (&PeriodicProblem, &DVector<f64>),
    window: (f64, f64),
    opts: &LinOptions,
) -> Result<Connection, BvpError> {
    let mut ev = Evaluator {
        base: *p,
        setup: Setup::EtoP {
            k: prefix.len() + wraps,
            orbit: orbit.0,
        },
        opts: *opts,
        frame: None,
        orbit_guess: std::cell::RefCell::new(Some(orbit.1.clone())),
    };
    let (problem, bracket) = find_root(&mut ev, window, prefix)?;
    let q = p.with_lambda_plus(problem.lambda_plus);
    let tail = problem
        .symbols
        .as_slice()
        .get(prefix.len())
        .map_or(String::new(), |b| format!("({b})"));
    Ok(Connection {
        kind: ConnectionKind::EtoP,
        lambda_plus: problem.lambda_plus,
        label: format!("{prefix}{tail}"),
        saddle_eigenvalues: saddle_eigenvalues(&q)?,
        problem,
        bracket,
    })
}
