use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::flow::flow_jet;
use super::newton::{newton, NewtonOptions};
use super::BvpError;
use crate::integrate::{Tolerances, Trajectory};
use crate::model::{LmgField, ModelParams};

/// One boundary condition on an orbit segment `x(s)`, `s` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    Start(Vector3<f64>),
    End(Vector3<f64>),
    StartOnPlane {
        component: usize,
        value: f64,
    },
    EndOnPlane {
        component: usize,
        value: f64,
    },
    /// Fixes the integration time `T`.
    Time(f64),
}

impl Boundary {
    fn rows(&self) -> usize {
        match self {
            Boundary::Start(_) | Boundary::End(_) => 3,
            _ => 1,
        }
    }
}

/// Solution of `dx/ds = T f(x)` on a mesh of normalized times; `T < 0` is a
/// reverse-time segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub mesh: Vec<f64>,
    pub states: Vec<Vector3<f64>>,
    pub time: f64,
    pub lambda_plus: f64,
    pub boundary: Vec<Boundary>,
}

impl OrbitSegment {
    /// Samples a trajectory at `intervals + 1` equally spaced times.
    pub fn from_trajectory(traj: &Trajectory<3>, intervals: usize, lambda_plus: f64) -> Self {
        let n = intervals.max(1);
        let t0 = traj.t0;
        let time = traj.t_end() - t0;
        let mesh: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let states = mesh.iter().map(|s| traj.eval(t0 + s * time)).collect();
        Self {
            mesh,
            states,
            time,
            lambda_plus,
            boundary: Vec::new(),
        }
    }

    pub fn start(&self) -> Vector3<f64> {
        self.states[0]
    }

    pub fn end(&self) -> Vector3<f64> {
        *self
            .states
            .last()
            .expect("segment has at least one mesh point")
    }

    /// Max-norm defect of the mesh values as a shooting solution.
    pub fn residual(&self, p: &ModelParams, tol: Tolerances) -> Result<f64, BvpError> {
        let field = LmgField::new(&p.with_lambda_plus(self.lambda_plus));
        let mut r: f64 = 0.0;
        for i in 0..self.states.len() - 1 {
            let tau = self.time * (self.mesh[i + 1] - self.mesh[i]);
            let jet = flow_jet(&field, &self.states[i], tau, tol)?;
            r = r.max((jet.end - self.states[i + 1]).amax());
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentProblem {
    pub params: ModelParams,
    /// Initial guess; its `boundary` list holds the conditions to impose.
    pub guess: OrbitSegment,
    pub tol: Tolerances,
}

/// Multiple-shooting solve of a two-point problem with free `T`. Needs at
/// least four conditions (three for the state, one for `T`); consistent
/// extra conditions are handled in the least-squares sense.
pub fn solve_segment(
    problem: &SegmentProblem,
    opts: &NewtonOptions,
) -> Result<OrbitSegment, BvpError> {
    let g = &problem.guess;
    let bc_rows: usize = g.boundary.iter().map(Boundary::rows).sum();
    if bc_rows < 4 {
        return Err(BvpError::IllPosed {
            conditions: bc_rows,
            unknowns: 4,
        });
    }
    let m = g.states.len() - 1;
    let n = 3 * (m + 1) + 1;
    let field = LmgField::new(&problem.params.with_lambda_plus(g.lambda_plus));
    let mesh = g.mesh.clone();
    let mut u = DVector::zeros(n);
    for (i, x) in g.states.iter().enumerate() {
        u.fixed_rows_mut::<3>(3 * i).copy_from(x);
    }
    u[n - 1] = g.time;

    let rows = 3 * m + bc_rows;
    let tol = problem.tol;
    let f = |u: &DVector<f64>| -> Result<(DVector<f64>, DMatrix<f64>), BvpError> {
        let t = u[n - 1];
        let x = |i: usize| -> Vector3<f64> { u.fixed_rows::<3>(3 * i).into() };
        let mut r = DVector::zeros(rows);
        let mut j = DMatrix::zeros(rows, n);
        for i in 0..m {
            let ds = mesh[i + 1] - mesh[i];
            let jet = flow_jet(&field, &x(i), t * ds, tol)?;
            r.fixed_rows_mut::<3>(3 * i)
                .copy_from(&(jet.end - x(i + 1)));
            j.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(&jet.dx);
            for k in 0..3 {
                j[(3 * i + k, 3 * (i + 1) + k)] = -1.0;
                j[(3 * i + k, n - 1)] = jet.dtau[k] * ds;
            }
        }
        let mut row = 3 * m;
        for b in &g.boundary {
            match *b {
                Boundary::Start(p) | Boundary::End(p) => {
                    let idx = if matches!(b, Boundary::Start(_)) {
                        0
                    } else {
                        m
                    };
                    for k in 0..3 {
                        r[row + k] = x(idx)[k] - p[k];
                        j[(row + k, 3 * idx + k)] = 1.0;
                    }
                }
                Boundary::StartOnPlane { component, value } => {
                    r[row] = x(0)[component] - value;
                    j[(row, component)] = 1.0;
                }
                Boundary::EndOnPlane { component, value } => {
                    r[row] = x(m)[component] - value;
                    j[(row, 3 * m + component)] = 1.0;
                }
                Boundary::Time(tt) => {
                    r[row] = t - tt;
                    j[(row, n - 1)] = 1.0;
                }
            }
            row += b.rows();
        }
        Ok((r, j))
    };
    newton(&mut u, f, opts)?;
    let mut out = g.clone();
    for i in 0..=m {
        out.states[i] = u.fixed_rows::<3>(3 * i).into();
    }
    out.time = u[n - 1];
    Ok(out)
}
