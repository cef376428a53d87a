use nalgebra::{DVector, Vector3};
use serde::Serialize;

use super::cont::{continue_branch, tangent, Branch, BranchEnd, ContinuationOptions};
use super::equilibria::{equilibrium_branch, EquilibriumProblem};
use super::lin::{lin_find_homoclinic, Connection, LinOptions};
use super::periodic::{
    orbit_from_hopf, orbit_from_simulation, switch_at_period_doubling, switch_at_symmetry_breaking,
    OrbitStability, PeriodicProblem,
};
use super::{BifurcationEvent, BifurcationKind, BvpError, Diagnostics};
use crate::kneading::Symbols;
use crate::localbif::{normal_equilibrium, superradiant_equilibria, Stability};
use crate::model::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct BifDiagramOptions {
    /// `lambda_+` range of the equilibrium branches.
    pub lambda_range: (f64, f64),
    /// Parameter value where the superradiant branch is started.
    pub sr_start: f64,
    /// Parameter value where the counter-lasing orbit is found by simulation.
    pub cl_start: f64,
    /// Lower end of the periodic-orbit branches.
    pub orbit_lambda_min: f64,
    /// Shooting segments per half period of the symmetric orbit.
    pub segments: usize,
    /// Periodic branches stop beyond this period (homoclinic limit).
    pub max_period: f64,
    /// Period-doubling levels followed after the symmetry-breaking point.
    pub period_doublings: usize,
    /// Point budget of each period-doubled branch.
    pub doubled_points: usize,
    /// Homoclinic orbits located with Lin's method; each is searched for
    /// near the end of the orbit branch born at it.
    pub homoclinics: Vec<Symbols>,
    /// Half-width of the Lin search window around the branch end.
    pub homoclinic_window: f64,
    pub equilibria: ContinuationOptions,
    pub orbits: ContinuationOptions,
    pub lin: LinOptions,
}

impl Default for BifDiagramOptions {
    fn default() -> Self {
        Self {
            lambda_range: (1.3, 1.75),
            sr_start: 1.45,
            cl_start: 1.54,
            orbit_lambda_min: 1.531,
            segments: 20,
            max_period: 250.0,
            period_doublings: 2,
            doubled_points: 60,
            homoclinics: vec![Symbols::new(vec![0]), Symbols::new(vec![0, 1])],
            homoclinic_window: 2e-4,
            equilibria: ContinuationOptions {
                h_max: 0.01,
                ..Default::default()
            },
            orbits: ContinuationOptions {
                h_max: 0.5,
                max_points: 800,
                refine_tol: 1e-13,
                ..Default::default()
            },
            lin: LinOptions::default(),
        }
    }
}

/// One exported point of a branch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchRow {
    pub branch_id: String,
    pub lambda_plus: f64,
    pub max_bx: f64,
    pub stability: String,
    /// `None` for equilibria.
    pub period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchSummary {
    pub id: String,
    pub rows: Vec<BranchRow>,
    pub end: BranchEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifDiagram {
    pub branches: Vec<BranchSummary>,
    /// All events sorted by `lambda_+`.
    pub events: Vec<BifurcationEvent>,
    pub connections: Vec<Connection>,
    /// Sub-computations that failed; the rest of the diagram is kept.
    pub failures: Vec<String>,
}

impl BifDiagram {
    pub fn events_of(&self, kind: BifurcationKind) -> impl Iterator<Item = &BifurcationEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

fn stability_label(s: &Stability) -> String {
    match s {
        Stability::Sink => "stable".into(),
        Stability::Source => "source".into(),
        Stability::Saddle { unstable } => format!("saddle-{unstable}"),
        Stability::NonHyperbolic { .. } => "nonhyperbolic".into(),
    }
}

fn equilibrium_summary(p: &ModelParams, b: &Branch) -> BranchSummary {
    let problem = EquilibriumProblem { params: *p };
    let rows = b
        .points
        .iter()
        .map(|pt| {
            let u = DVector::from_vec(pt.u.clone());
            BranchRow {
                branch_id: b.id.clone(),
                lambda_plus: pt.lambda_plus,
                max_bx: pt.u[0],
                stability: stability_label(&Stability::classify(&problem.spectrum(&u))),
                period: None,
            }
        })
        .collect();
    BranchSummary {
        id: b.id.clone(),
        rows,
        end: b.end.clone(),
    }
}

fn orbit_summary(problem: &PeriodicProblem, b: &Branch) -> Result<BranchSummary, BvpError> {
    let rows = b
        .points
        .iter()
        .map(|pt| {
            let sol = problem.solution(&DVector::from_vec(pt.u.clone()))?;
            Ok(BranchRow {
                branch_id: b.id.clone(),
                lambda_plus: pt.lambda_plus,
                max_bx: sol.max_bx,
                stability: match sol.stability {
                    OrbitStability::Stable => "stable".into(),
                    OrbitStability::Unstable { unstable } => format!("saddle-{unstable}"),
                },
                period: Some(sol.period),
            })
        })
        .collect::<Result<_, BvpError>>()?;
    Ok(BranchSummary {
        id: b.id.clone(),
        rows,
        end: b.end.clone(),
    })
}

fn downward(n: usize) -> DVector<f64> {
    let mut d = DVector::zeros(n);
    d[n - 1] = -1.0;
    d
}

/// Orients a branch-switching direction towards decreasing `lambda_+`.
fn towards_lower(
    problem: &PeriodicProblem,
    start: &DVector<f64>,
    dir: DVector<f64>,
) -> DVector<f64> {
    match tangent(problem, start, &dir) {
        Ok(t) if t[t.len() - 1] > 0.0 => -dir,
        _ => dir,
    }
}

fn last_lambda(b: &Branch) -> Option<f64> {
    match b.end {
        BranchEnd::Stopped(_) => b.points.last().map(|p| p.lambda_plus),
        _ => None,
    }
}

/// One-parameter bifurcation diagram in `lambda_+`: the normal and
/// superradiant equilibria, the saddle orbits born at the subcritical Hopf
/// point, the counter-lasing orbits with their symmetry-breaking and
/// period-doubling points, and the homoclinic orbits where the orbit
/// branches end.
pub fn bif_diagram(p: &ModelParams, opts: &BifDiagramOptions) -> Result<BifDiagram, BvpError> {
    let mut branches = Vec::new();
    let mut events = Vec::new();
    let mut failures = Vec::new();
    let mut ends: Vec<(Symbols, f64)> = Vec::new();

    let eq_opts = ContinuationOptions {
        lambda_min: opts.lambda_range.0,
        lambda_max: opts.lambda_range.1,
        ..opts.equilibria
    };
    let p0 = p.with_lambda_plus(opts.lambda_range.0);
    let n0 = normal_equilibrium(&p0)?.state.as_vector();
    let normal = equilibrium_branch(&p0, "N", n0, 1.0, &eq_opts)?;
    branches.push(equilibrium_summary(p, &normal));
    events.extend(normal.events.iter().cloned());

    let psr = p.with_lambda_plus(opts.sr_start);
    let sr_eq = superradiant_equilibria(&psr)?
        .into_iter()
        .find(|e| e.state.b_x > 0.0)
        .ok_or_else(|| {
            BvpError::NoOrbit(format!("no superradiant equilibrium at {}", opts.sr_start))
        })?;
    let sr = equilibrium_branch(&psr, "SR", sr_eq.state.as_vector(), 1.0, &eq_opts)?;
    branches.push(equilibrium_summary(p, &sr));
    events.extend(sr.events.iter().cloned());

    let orbit_opts = ContinuationOptions {
        lambda_min: opts.orbit_lambda_min,
        lambda_max: opts.lambda_range.1,
        ..opts.orbits
    };

    // Saddle orbits around the superradiant equilibrium.
    let hopf = sr
        .events
        .iter()
        .find(|e| e.kind == BifurcationKind::Hopf && e.state[0] > 0.0)
        .cloned();
    match hopf {
        Some(h) => {
            let ph = p.with_lambda_plus(h.lambda_plus);
            let xe = Vector3::new(h.state[0], h.state[1], h.state[2]);
            let run =
                orbit_from_hopf(&ph, xe, 1e-3, 2 * opts.segments).and_then(|(mut prob, u)| {
                    prob.max_period = opts.max_period;
                    let n = u.len();
                    let b = continue_branch(&mut prob, "SRO", u, &downward(n), &orbit_opts)?;
                    Ok((prob, b))
                });
            match run {
                Ok((prob, b)) => {
                    if let Some(l) = last_lambda(&b) {
                        ends.push((Symbols::new(vec![0]), l));
                    }
                    branches.push(orbit_summary(&prob, &b)?);
                    events.extend(b.events);
                }
                Err(e) => failures.push(format!("SRO branch: {e}")),
            }
        }
        None => failures.push("SRO branch: no Hopf point on the superradiant branch".into()),
    }

    // Counter-lasing orbits.
    let pcl = p.with_lambda_plus(opts.cl_start);
    let g = normal_equilibrium(&pcl)?.state.gamma;
    let cl = orbit_from_simulation(
        &pcl,
        Vector3::new(1e-3, 5e-4, g),
        2000.0,
        true,
        opts.segments,
    )
    .and_then(|(mut prob, u)| {
        prob.max_period = opts.max_period;
        let n = u.len();
        let b = continue_branch(&mut prob, "CL", u, &downward(n), &orbit_opts)?;
        Ok((prob, b))
    });
    let (cl_prob, cl_branch) = match cl {
        Ok(x) => x,
        Err(e) => {
            failures.push(format!("CL branch: {e}"));
            return finish(p, opts, branches, events, ends, failures);
        }
    };
    if let Some(l) = last_lambda(&cl_branch) {
        ends.push((Symbols::new(vec![0]), l));
    }
    branches.push(orbit_summary(&cl_prob, &cl_branch)?);
    events.extend(cl_branch.events.iter().cloned());
    let ppo = cl_branch
        .events
        .iter()
        .find(|e| e.kind == BifurcationKind::PitchforkPo)
        .cloned();
    let Some(ppo) = ppo else {
        failures.push("CL branch: no symmetry-breaking point".into());
        return finish(p, opts, branches, events, ends, failures);
    };

    let ub = DVector::from_vec(ppo.state.clone());
    let mut level = switch_at_symmetry_breaking(&cl_prob, &ub, 1e-3).map(|(prob, start, dir)| {
        let dir = towards_lower(&prob, &start, dir);
        (prob, start, dir)
    });
    for k in 0..=opts.period_doublings {
        let (mut prob, start, dir) = match level {
            Ok(x) => x,
            Err(e) => {
                failures.push(format!("asymmetric branch {k}: {e}"));
                break;
            }
        };
        let id = if k == 0 {
            "CL-asym".to_string()
        } else {
            format!("CL-asym-pd{k}")
        };
        prob.max_period = opts.max_period * (1 << k) as f64;
        let level_opts = if k == 0 {
            orbit_opts
        } else {
            ContinuationOptions {
                max_points: opts.doubled_points,
                ..orbit_opts
            }
        };
        let b = match continue_branch(&mut prob, &id, start, &dir, &level_opts) {
            Ok(b) => b,
            Err(e) => {
                failures.push(format!("{id}: {e}"));
                break;
            }
        };
        if k == 0 {
            if let Some(l) = last_lambda(&b) {
                ends.push((Symbols::new(vec![0, 1]), l));
            }
        }
        branches.push(orbit_summary(&prob, &b)?);
        // The branch point itself is a turning point of the asymmetric family.
        let fresh: Vec<_> = b
            .events
            .iter()
            .filter(|e| {
                !(e.kind == BifurcationKind::FoldPo
                    && (e.lambda_plus - ppo.lambda_plus).abs() < 1e-6)
            })
            .cloned()
            .collect();
        events.extend(fresh.iter().cloned());
        if k == opts.period_doublings {
            break;
        }
        let Some(pd) = fresh
            .iter()
            .find(|e| e.kind == BifurcationKind::PeriodDoubling)
        else {
            break;
        };
        let upd = DVector::from_vec(pd.state.clone());
        level = switch_at_period_doubling(&prob, &upd, 1e-3).map(|(q, start, dir)| {
            let dir = towards_lower(&q, &start, dir);
            (q, start, dir)
        });
    }
    finish(p, opts, branches, events, ends, failures)
}

/// Saddle periodic orbit around the superradiant equilibrium with `b_x > 0`,
/// continued from its subcritical Hopf point down to `target`. Returns the
/// orbit nearest `target`, with the problem re-anchored at that orbit.
pub fn superradiant_saddle_orbit(
    p: &ModelParams,
    target: f64,
    opts: &BifDiagramOptions,
) -> Result<(PeriodicProblem, DVector<f64>), BvpError> {
    let psr = p.with_lambda_plus(opts.sr_start);
    let sr_eq = superradiant_equilibria(&psr)?
        .into_iter()
        .find(|e| e.state.b_x > 0.0)
        .ok_or_else(|| {
            BvpError::NoOrbit(format!("no superradiant equilibrium at {}", opts.sr_start))
        })?;
    let eq_opts = ContinuationOptions {
        lambda_min: opts.lambda_range.0,
        lambda_max: opts.lambda_range.1,
        ..opts.equilibria
    };
    let sr = equilibrium_branch(&psr, "SR", sr_eq.state.as_vector(), 1.0, &eq_opts)?;
    let h = sr
        .events
        .iter()
        .find(|e| e.kind == BifurcationKind::Hopf && e.state[0] > 0.0)
        .ok_or_else(|| BvpError::NoOrbit("no Hopf point on the superradiant branch".into()))?;
    if target > h.lambda_plus {
        return Err(BvpError::NoOrbit(format!(
            "target {target} lies beyond the Hopf point {}",
            h.lambda_plus
        )));
    }
    let ph = p.with_lambda_plus(h.lambda_plus);
    let xe = Vector3::new(h.state[0], h.state[1], h.state[2]);
    let segments = 2 * opts.segments;
    let (mut prob, u) = orbit_from_hopf(&ph, xe, 1e-3, segments)?;
    prob.max_period = opts.max_period;
    let copts = ContinuationOptions {
        lambda_min: target - 1e-5,
        lambda_max: opts.lambda_range.1,
        ..opts.orbits
    };
    let n = u.len();
    let b = continue_branch(&mut prob, "SRO", u, &downward(n), &copts)?;
    let best = b
        .points
        .iter()
        .min_by(|a, c| {
            (a.lambda_plus - target)
                .abs()
                .total_cmp(&(c.lambda_plus - target).abs())
        })
        .ok_or_else(|| BvpError::NoOrbit("empty saddle-orbit branch".into()))?;
    let u = DVector::from_vec(best.u.clone());
    let q = PeriodicProblem::new(&p.with_lambda_plus(best.lambda_plus), segments, false, &u);
    Ok((q, u))
}

fn finish(
    p: &ModelParams,
    opts: &BifDiagramOptions,
    branches: Vec<BranchSummary>,
    mut events: Vec<BifurcationEvent>,
    ends: Vec<(Symbols, f64)>,
    mut failures: Vec<String>,
) -> Result<BifDiagram, BvpError> {
    let mut connections = Vec::new();
    for s in &opts.homoclinics {
        let Some(&(_, l)) = ends.iter().find(|(t, _)| t == s) else {
            failures.push(format!("Hom_{s}: no orbit branch ends near it"));
            continue;
        };
        let w = (l - opts.homoclinic_window, l + opts.homoclinic_window);
        match lin_find_homoclinic(p, s, w, &opts.lin) {
            Ok(c) => {
                events.push(BifurcationEvent {
                    kind: BifurcationKind::Homoclinic,
                    lambda_plus: c.lambda_plus,
                    branch: format!("Hom_{s}"),
                    state: c.problem.x1.start().as_slice().to_vec(),
                    diagnostics: Diagnostics {
                        spectrum: c
                            .saddle_eigenvalues
                            .iter()
                            .map(|&v| num_complex::Complex64::new(v, 0.0))
                            .collect(),
                        critical: None,
                        note: format!("gap {:e}", c.problem.gap),
                    },
                });
                connections.push(c);
            }
            Err(e) => failures.push(format!("Hom_{s}: {e}")),
        }
    }
    events.sort_by(|a, b| a.lambda_plus.total_cmp(&b.lambda_plus));
    Ok(BifDiagram {
        branches,
        events,
        connections,
        failures,
    })
}
