use nalgebra::{DMatrix, DVector};

use super::BvpError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Convergence threshold on the max-norm residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `J dx = -r`: LU for square systems, minimum-norm least squares
/// through the SVD otherwise.
pub fn linear_step(j: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>, BvpError> {
    let step = if j.is_square() {
        j.clone().lu().solve(&(-r))
    } else {
        let svd = j.clone().svd(true, true);
        let eps = 1e-13 * svd.singular_values.max();
        svd.solve(&(-r), eps).ok()
    };
    match step {
        Some(s) if s.iter().all(|v| v.is_finite()) => Ok(s),
        _ => Err(BvpError::SingularJacobian),
    }
}

/// Gauss-Newton iteration on `F(u) = 0`; `f` returns the residual and its
/// Jacobian. On failure the error carries the last iterate.
pub fn newton<F>(
    u: &mut DVector<f64>,
    mut f: F,
    opts: &NewtonOptions,
) -> Result<NewtonReport, BvpError>
where
    F: FnMut(&DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), BvpError>,
{
    let mut last = f64::INFINITY;
    for it in 0..=opts.max_iter {
        let (r, j) = f(u)?;
        let res = r.amax();
        if !res.is_finite() {
            break;
        }
        if res < opts.tol {
            return Ok(NewtonReport {
                iterations: it,
                residual: res,
            });
        }
        last = res;
        if it == opts.max_iter {
            break;
        }
        let du = linear_step(&j, &r)?;
        *u += du;
    }
    Err(BvpError::NewtonDivergence {
        residual: last,
        iterate: u.as_slice().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_square_and_overdetermined_systems() {
        let mut u = DVector::from_vec(vec![1.0, 1.0]);
        let rep = newton(
            &mut u,
            |u| {
                let r = DVector::from_vec(vec![u[0] * u[0] - 2.0, u[1] - u[0]]);
                let j = DMatrix::from_row_slice(2, 2, &[2.0 * u[0], 0.0, -1.0, 1.0]);
                Ok((r, j))
            },
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!((u[0] - 2f64.sqrt()).abs() < 1e-10 && rep.iterations <= 6);

        // Consistent overdetermined system with a free direction.
        let mut u = DVector::from_vec(vec![0.0, 5.0]);
        newton(
            &mut u,
            |u| {
                let r = DVector::from_vec(vec![u[0] - 1.0, 2.0 * u[0] - 2.0, 3.0 * (u[0] - 1.0)]);
                let j = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
                Ok((r, j))
            },
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12);
        assert_eq!(u[1], 5.0);
    }

    #[test]
    fn divergence_returns_last_iterate() {
        let mut u = DVector::from_vec(vec![1.0]);
        let e = newton(
            &mut u,
            |u| {
                Ok((
                    DVector::from_vec(vec![u[0] * u[0] + 1.0]),
                    DMatrix::from_element(1, 1, 2.0 * u[0]),
                ))
            },
            &NewtonOptions {
                tol: 1e-10,
                max_iter: 5,
            },
        )
        .unwrap_err();
        match e {
            BvpError::NewtonDivergence { residual, iterate } => {
                assert!(residual >= 1.0);
                assert_eq!(iterate.len(), 1);
            }
            BvpError::SingularJacobian => {}
            other => panic!("{other:?}"),
        }
    }
}
