use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;

use super::cont::{continue_branch, Branch, ContinuationOptions, ContinuationProblem};
use super::newton::newton;
use super::{BifurcationKind, BvpError, Diagnostics};
use crate::localbif::{bialternate_test, eigen_decomposition};
use crate::model::{LmgField, ModelParams};

/// Equilibria `f(x, lambda_+) = 0`; unknowns `(b_x, b_y, gamma, lambda_+)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumProblem {
    pub params: ModelParams,
}

impl EquilibriumProblem {
    fn field(&self, u: &DVector<f64>) -> (LmgField, Vector3<f64>) {
        (
            LmgField::new(&self.params.with_lambda_plus(u[3])),
            Vector3::new(u[0], u[1], u[2]),
        )
    }

    pub fn spectrum(&self, u: &DVector<f64>) -> [Complex64; 3] {
        let (f, x) = self.field(u);
        eigen_decomposition(&f.jacobian(&x)).0
    }
}

impl ContinuationProblem for EquilibriumProblem {
    fn dim(&self) -> usize {
        4
    }

    fn residual(&self, u: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), BvpError> {
        let (f, x) = self.field(u);
        let r = DVector::from_column_slice(f.eval(&x).as_slice());
        let mut j = DMatrix::zeros(3, 4);
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&f.jacobian(&x));
        j.fixed_view_mut::<3, 1>(0, 3)
            .copy_from(&f.d_lambda_plus(&x));
        Ok((r, j))
    }

    fn test_kinds(&self) -> Vec<BifurcationKind> {
        vec![
            BifurcationKind::Fold,
            BifurcationKind::PitchforkEq,
            BifurcationKind::Hopf,
        ]
    }

    fn test_functions(&self, u: &DVector<f64>, t: &DVector<f64>) -> Result<Vec<f64>, BvpError> {
        let (f, x) = self.field(u);
        let j = f.jacobian(&x);
        Ok(vec![t[3], j.determinant(), bialternate_test(&j)])
    }

    fn diagnose(
        &self,
        kind: BifurcationKind,
        u: &DVector<f64>,
        t: &DVector<f64>,
    ) -> Option<Diagnostics> {
        let spec = self.spectrum(u);
        let closest_zero = spec
            .iter()
            .copied()
            .min_by(|a, b| a.norm().total_cmp(&b.norm()));
        let (critical, note) = match kind {
            BifurcationKind::Fold => (closest_zero, "limit point".to_string()),
            BifurcationKind::PitchforkEq => {
                // A zero eigenvalue at a turning point is the fold itself.
                if t[3].abs() < 1e-4 {
                    return None;
                }
                (closest_zero, "branch point".to_string())
            }
            BifurcationKind::Hopf => {
                let pair = spec
                    .iter()
                    .copied()
                    .filter(|z| z.im > 1e-8)
                    .min_by(|a, b| a.re.abs().total_cmp(&b.re.abs()))?;
                if pair.re.abs() > 1e-6 * pair.norm().max(1.0) {
                    return None;
                }
                (Some(pair), format!("frequency {}", pair.im))
            }
            _ => return None,
        };
        Some(Diagnostics {
            spectrum: spec.to_vec(),
            critical,
            note,
        })
    }
}

/// Corrects `x0` at fixed `lambda_+` and continues in the direction of
/// increasing (`direction > 0`) or decreasing `lambda_+`.
pub fn equilibrium_branch(
    p: &ModelParams,
    id: &str,
    x0: Vector3<f64>,
    direction: f64,
    opts: &ContinuationOptions,
) -> Result<Branch, BvpError> {
    let mut problem = EquilibriumProblem { params: *p };
    let lp = p.lambda_plus;
    let mut u = DVector::from_vec(vec![x0[0], x0[1], x0[2], lp]);
    newton(
        &mut u,
        |u| {
            let (r, j) = problem.residual(u)?;
            let r = r.insert_row(3, u[3] - lp);
            let mut j = j.insert_row(3, 0.0);
            j[(3, 3)] = 1.0;
            Ok((r, j))
        },
        &opts.newton,
    )?;
    let dir = DVector::from_vec(vec![0.0, 0.0, 0.0, direction.signum()]);
    continue_branch(&mut problem, id, u, &dir, opts)
}
