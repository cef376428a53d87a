use nalgebra::{SVector, Vector3};
use serde::Serialize;

use super::{Control, Dop853, IntegrateError, Tolerances};
use crate::model::{LmgField, ModelParams, SpinState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovOptions {
    /// Averaging time after the transient.
    pub horizon: f64,
    pub renorm_interval: f64,
    /// Time integrated before averaging starts.
    pub transient: f64,
    /// Number of blocks used for the standard error.
    pub blocks: usize,
    pub tol: Tolerances,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            horizon: 20_000.0,
            renorm_interval: 1.0,
            transient: 2_000.0,
            blocks: 20,
            tol: Tolerances::SCAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LyapunovWarning {
    /// The orbit settled onto an equilibrium; the exponent is its leading
    /// eigenvalue rather than an attractor average.
    ConvergedToEquilibrium { speed: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub exponent: f64,
    /// Standard error from block averages.
    pub std_error: f64,
    pub renormalizations: usize,
    pub final_state: SpinState,
    pub warning: Option<LyapunovWarning>,
}

/// Largest Lyapunov exponent by tangent-vector renormalization.
pub fn lyapunov_max(
    p: &ModelParams,
    s0: &SpinState,
    opts: &LyapunovOptions,
) -> Result<LyapunovEstimate, IntegrateError> {
    p.validate()?;
    let field = LmgField::new(p);
    let solver = Dop853::new(opts.tol).without_dense();
    let mut x = s0.as_vector();
    if opts.transient > 0.0 {
        x = solver
            .solve(
                |_t, y: &Vector3<f64>| field.eval(y),
                0.0,
                x,
                opts.transient,
                |_| Control::Continue,
            )?
            .y;
    }
    let augmented = |_t: f64, z: &SVector<f64, 6>| {
        let y = Vector3::new(z[0], z[1], z[2]);
        let v = Vector3::new(z[3], z[4], z[5]);
        let fy = field.eval(&y);
        let jv = field.jacobian(&y) * v;
        SVector::<f64, 6>::from_column_slice(&[fy[0], fy[1], fy[2], jv[0], jv[1], jv[2]])
    };
    let n = (opts.horizon / opts.renorm_interval).round().max(1.0) as usize;
    let mut v = Vector3::new(1.0, 1.0, 1.0).normalize();
    let mut logs = Vec::with_capacity(n);
    let mut t = opts.transient;
    for _ in 0..n {
        let z0 = SVector::<f64, 6>::from_column_slice(&[x[0], x[1], x[2], v[0], v[1], v[2]]);
        let z = solver
            .solve(augmented, t, z0, t + opts.renorm_interval, |_| {
                Control::Continue
            })?
            .y;
        t += opts.renorm_interval;
        x = Vector3::new(z[0], z[1], z[2]);
        let w = Vector3::new(z[3], z[4], z[5]);
        let norm = w.norm();
        logs.push(norm.ln());
        v = w / norm;
    }
    let total: f64 = logs.iter().sum();
    let exponent = total / (n as f64 * opts.renorm_interval);
    let blocks = opts.blocks.clamp(2, n.max(2));
    let per = (n / blocks).max(1);
    let means: Vec<f64> = logs
        .chunks(per)
        .filter(|c| c.len() == per)
        .map(|c| c.iter().sum::<f64>() / (per as f64 * opts.renorm_interval))
        .collect();
    let m = means.len() as f64;
    let avg = means.iter().sum::<f64>() / m;
    let var = means.iter().map(|b| (b - avg).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    let speed = field.eval(&x).norm();
    let warning = (speed < 1e-8).then_some(LyapunovWarning::ConvergedToEquilibrium { speed });
    Ok(LyapunovEstimate {
        exponent,
        std_error: (var / m).sqrt(),
        renormalizations: n,
        final_state: x.into(),
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_superradiant_equilibrium_has_negative_exponent_and_warning() {
        let p = ModelParams::transitional(1.5);
        let est = lyapunov_max(
            &p,
            &SpinState::new(-0.1, 0.0, -0.475),
            &LyapunovOptions {
                horizon: 2000.0,
                transient: 3000.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(est.exponent < -1e-3, "{est:?}");
        assert!(est.warning.is_some());
    }
}
