use nalgebra::Matrix3;
use serde::Serialize;

use super::{normal_equilibrium, BifError};
use crate::model::{LmgField, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    /// Root index when a curve has several branches over one `lambda_-`
    /// (ascending in `lambda_+`).
    pub branch: usize,
}

/// Hopf bifurcations of the normal equilibrium: zero trace of the in-plane
/// block, `2 eta gamma_eq (lambda_+^2 - lambda_-^2) + sigma = 0`, kept only
/// where the block determinant is positive (a true imaginary pair).
pub fn hopf_curve(p: &ModelParams, lambda_minus: &[f64]) -> Result<Vec<CurvePoint>, BifError> {
    p.validate()?;
    let r = p.reduced();
    if r.sigma <= 0.0 {
        return Err(BifError::DegenerateManifold);
    }
    let mut out = Vec::new();
    if r.delta == 0.0 {
        return Ok(out);
    }
    let g = r.delta / (2.0 * r.sigma);
    for &lm in lambda_minus {
        let lp2 = lm * lm - r.sigma / (2.0 * r.eta * g);
        if lp2 < 0.0 {
            continue;
        }
        let q = p.with_lambda_minus(lm).with_lambda_plus(lp2.sqrt());
        let (_, a, b, _, w0) = LmgField::new(&q).coefficients();
        let det = (w0 + a * g) * (w0 + a * g) - b * b * g * g;
        if det > 0.0 {
            out.push(CurvePoint {
                lambda_minus: lm,
                lambda_plus: lp2.sqrt(),
                branch: 0,
            });
        }
    }
    Ok(out)
}

/// Pitchfork bifurcations of the normal equilibrium from `det J = 0`,
/// a quadratic in `D = lambda_+^2 - lambda_-^2`.
pub fn pitchfork_curve(p: &ModelParams, lambda_minus: &[f64]) -> Result<Vec<CurvePoint>, BifError> {
    p.validate()?;
    let r = p.reduced();
    if r.sigma <= 0.0 {
        return Err(BifError::DegenerateManifold);
    }
    let g = r.delta / (2.0 * r.sigma);
    let w0 = r.omega0_prime;
    let mut out = Vec::new();
    for &lm in lambda_minus {
        let c2 = 4.0 * g * g * (r.eta * r.eta + r.xi * r.xi);
        let c1 = 4.0 * g * r.eta * r.sigma + 4.0 * g * r.xi * w0;
        let c0 = r.sigma * r.sigma + w0 * w0 + 8.0 * g * r.xi * w0 * lm * lm;
        let roots = real_quadratic_roots(c2, c1, c0);
        let mut branch = 0;
        for d in roots {
            let lp2 = d + lm * lm;
            if lp2 < 0.0 {
                continue;
            }
            let q = p.with_lambda_minus(lm).with_lambda_plus(lp2.sqrt());
            // A simple real zero eigenvalue in the symmetry-breaking plane.
            let e = normal_equilibrium(&q)?;
            let zero = e
                .eigenvalues
                .iter()
                .zip(e.eigenvectors.iter())
                .find(|(l, _)| l.norm() < 1e-8 * (1.0 + e.eigenvalues[0].norm()));
            if let Some((_, v)) = zero {
                if v[2].norm() < 1e-6 {
                    out.push(CurvePoint {
                        lambda_minus: lm,
                        lambda_plus: lp2.sqrt(),
                        branch,
                    });
                    branch += 1;
                }
            }
        }
    }
    Ok(out)
}

fn real_quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b == 0.0 { vec![] } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    // Numerically stable pair.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = vec![q / a, c / q];
    r.sort_by(f64::total_cmp);
    r
}

/// Slopes of the two straight saddle-node lines `lambda_+ = s lambda_-` of
/// the superradiant equilibria. `slopes[0]` uses the `+` inner radical,
/// `slopes[1]` the `-` one; the outer sign is fixed by `lambda_+ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddleNodeLines {
    pub slopes: [f64; 2],
}

pub fn saddlenode_lines(p: &ModelParams) -> Result<SaddleNodeLines, BifError> {
    p.validate()?;
    let r = p.reduced();
    let w0 = r.omega0_prime;
    let den = r.xi * r.sigma - r.eta * w0;
    if den.abs() < 1e-300 {
        return Err(BifError::SaddleNodeDenominator);
    }
    let inner =
        2.0 * r.xi * w0 * ((r.eta * r.eta + r.xi * r.xi) * (r.sigma * r.sigma + w0 * w0)).sqrt();
    let base = r.xi * r.xi * r.sigma * r.sigma + w0 * w0 * (r.eta * r.eta + 2.0 * r.xi * r.xi);
    let mut slopes = [0.0; 2];
    for (k, s) in [1.0, -1.0].into_iter().enumerate() {
        let num2 = base + s * inner;
        if num2 < 0.0 {
            return Err(BifError::ComplexSlopes);
        }
        slopes[k] = num2.sqrt() / den.abs();
    }
    Ok(SaddleNodeLines { slopes })
}

/// The bialternate product `J ⊙ 2I` on the pair basis (2,1), (3,1), (3,2).
/// Its eigenvalues are the pairwise sums of the eigenvalues of `J`.
pub fn bialternate_matrix(j: &Matrix3<f64>) -> Matrix3<f64> {
    const PAIRS: [(usize, usize); 3] = [(1, 0), (2, 0), (2, 1)];
    let a = |r: usize, c: usize| j[(r, c)];
    Matrix3::from_fn(|row, col| {
        let (p, q) = PAIRS[row];
        let (r, s) = PAIRS[col];
        if r == q {
            -a(p, s)
        } else if r != p && s == q {
            a(p, r)
        } else if r == p && s == q {
            a(p, p) + a(q, q)
        } else if r == p && s != q {
            a(q, s)
        } else if s == p {
            -a(q, r)
        } else {
            0.0
        }
    })
}

/// `det(J ⊙ 2I)`: vanishes when two eigenvalues of `J` sum to zero.
pub fn bialternate_test(j: &Matrix3<f64>) -> f64 {
    bialternate_matrix(j).determinant()
}
