//! Equilibria, their spectra, closed-form bifurcation curves and phase
//! classification in the `(lambda_-, lambda_+)` plane.

mod curves;
mod geometry;
mod phase;

pub use curves::{
    bialternate_matrix, bialternate_test, hopf_curve, pitchfork_curve, saddlenode_lines,
    CurvePoint, SaddleNodeLines,
};
pub use geometry::{po_geometry, spheroid_axes, POGeometry};
pub use phase::{
    classify_phase, phase_diagram, PhaseClassification, PhaseLabel, PhaseOptions, PhaseRecord,
};

use nalgebra::{Complex, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::IntegrateError;
use crate::model::{LmgField, ModelError, ModelParams, SpinState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BifError {
    #[error("sigma = 0: the whole gamma axis consists of equilibria")]
    DegenerateManifold,
    #[error("no periodic orbit: {0}")]
    NoOrbit(&'static str),
    #[error("closed form requires a resonant cavity (xi = 0), got xi = {0:e}")]
    NonzeroXi(f64),
    #[error("saddle-node slope denominator xi*sigma - eta*omega0 vanishes")]
    SaddleNodeDenominator,
    #[error("saddle-node slopes are complex for these parameters")]
    ComplexSlopes,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Sink,
    Saddle {
        unstable: usize,
    },
    Source,
    /// At least one eigenvalue with zero real part (to the scale-aware threshold).
    NonHyperbolic {
        zero: usize,
        unstable: usize,
    },
}

impl Stability {
    /// Classifies a spectrum; an eigenvalue counts as zero when
    /// `|Re| < 1e-9 * max(1, spectral radius)`.
    pub fn classify(eigenvalues: &[Complex64]) -> Self {
        let rho = eigenvalues.iter().map(|e| e.norm()).fold(0.0, f64::max);
        let thr = 1e-9 * rho.max(1.0);
        let zero = eigenvalues.iter().filter(|e| e.re.abs() < thr).count();
        let unstable = eigenvalues.iter().filter(|e| e.re >= thr).count();
        if zero > 0 {
            Stability::NonHyperbolic { zero, unstable }
        } else if unstable == 0 {
            Stability::Sink
        } else if unstable == eigenvalues.len() {
            Stability::Source
        } else {
            Stability::Saddle { unstable }
        }
    }

    pub fn is_stable(&self) -> bool {
        matches!(self, Stability::Sink)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumLabel {
    Normal,
    SuperradiantPlus,
    SuperradiantMinus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub state: SpinState,
    /// Sorted by decreasing real part.
    pub eigenvalues: [Complex64; 3],
    /// Unit eigenvectors matching `eigenvalues`.
    pub eigenvectors: [Vector3<Complex64>; 3],
    pub stability: Stability,
    pub label: EquilibriumLabel,
}

impl Equilibrium {
    pub fn from_state(state: SpinState, p: &ModelParams, label: EquilibriumLabel) -> Self {
        let j = LmgField::new(p).jacobian(&state.as_vector());
        let (eigenvalues, eigenvectors) = eigen_decomposition(&j);
        Self {
            state,
            eigenvalues,
            eigenvectors,
            stability: Stability::classify(&eigenvalues),
            label,
        }
    }

    pub fn leading_eigenvalue(&self) -> Complex64 {
        self.eigenvalues[0]
    }
}

/// Analytic Jacobian of the reduced flow.
pub fn jacobian(s: &SpinState, p: &ModelParams) -> Matrix3<f64> {
    LmgField::new(p).jacobian(&s.as_vector())
}

/// Eigenvalues sorted by decreasing real part (then decreasing imaginary
/// part) and unit eigenvectors normalized so the largest component is real
/// and positive.
pub fn eigen_decomposition(j: &Matrix3<f64>) -> ([Complex64; 3], [Vector3<Complex64>; 3]) {
    let ev = j.complex_eigenvalues();
    let mut vals = [ev[0], ev[1], ev[2]];
    vals.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let jc: Matrix3<Complex64> = j.map(|x| Complex::new(x, 0.0));
    let vecs = vals.map(|l| {
        let m = jc - Matrix3::from_diagonal_element(l);
        let svd = m.svd(false, true);
        let vt = svd.v_t.expect("requested right singular vectors");
        let k = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(2);
        let v: Vector3<Complex64> = vt.row(k).transpose().map(|z| z.conj());
        normalize_phase(v)
    });
    (vals, vecs)
}

fn normalize_phase(v: Vector3<Complex64>) -> Vector3<Complex64> {
    let big = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = big / big.norm();
    let w = v / phase;
    let n = w.norm();
    w / Complex64::new(n, 0.0)
}

/// The trivial (`beta = 0`) equilibrium at `gamma = delta / (2 sigma)`.
pub fn normal_equilibrium(p: &ModelParams) -> Result<Equilibrium, BifError> {
    p.validate()?;
    let r = p.reduced();
    if r.sigma <= 0.0 {
        return Err(BifError::DegenerateManifold);
    }
    Ok(Equilibrium::from_state(
        SpinState::new(0.0, 0.0, r.delta / (2.0 * r.sigma)),
        p,
        EquilibriumLabel::Normal,
    ))
}

/// Result of the Newton search for symmetry-broken equilibria.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperradiantSearch {
    /// Parity pairs, `SuperradiantPlus` (positive `b_x`) first in each pair.
    pub equilibria: Vec<Equilibrium>,
    pub seeds: usize,
    /// Seeds whose Newton iteration did not converge.
    pub failed_seeds: usize,
}

const NEWTON_MAX_ITER: usize = 80;

fn damped_newton(field: &LmgField, y0: Vector3<f64>) -> Option<Vector3<f64>> {
    let mut y = y0;
    let mut fy = field.eval(&y);
    for _ in 0..NEWTON_MAX_ITER {
        let res = fy.amax();
        if res < 1e-15 {
            return Some(y);
        }
        let dy = field.jacobian(&y).lu().solve(&(-fy))?;
        let mut lambda = 1.0;
        loop {
            let trial = y + dy * lambda;
            let ft = field.eval(&trial);
            if ft.norm() < fy.norm() || lambda < 1e-4 {
                y = trial;
                fy = ft;
                break;
            }
            lambda *= 0.5;
        }
        if (dy * lambda).amax() < 1e-16 {
            break;
        }
    }
    (fy.amax() < 1e-12).then_some(y)
}

/// All equilibria with `beta != 0`, found by damped Newton from a fixed
/// seed grid (8 directions on the half-sphere per radius 0.1, 0.25, 0.4).
pub fn superradiant_search(p: &ModelParams) -> Result<SuperradiantSearch, BifError> {
    p.validate()?;
    let field = LmgField::new(p);
    let radii = [0.1, 0.25, 0.4];
    let thetas = [
        std::f64::consts::FRAC_PI_3,
        2.0 * std::f64::consts::FRAC_PI_3,
    ];
    let phis = [0.0, 0.25, 0.5, 0.75].map(|f: f64| f * std::f64::consts::PI);
    let mut found: Vec<Vector3<f64>> = Vec::new();
    let mut seeds = 0;
    let mut failed = 0;
    for &r in &radii {
        for &th in &thetas {
            for &ph in &phis {
                seeds += 1;
                let y0 = Vector3::new(
                    r * th.sin() * ph.cos(),
                    r * th.sin() * ph.sin(),
                    r * th.cos(),
                );
                let Some(y) = damped_newton(&field, y0) else {
                    failed += 1;
                    continue;
                };
                if y[0].hypot(y[1]) < 1e-8 {
                    continue;
                }
                // Canonical representative of the parity pair.
                let y = if y[0] > 0.0 || (y[0] == 0.0 && y[1] > 0.0) {
                    y
                } else {
                    Vector3::new(-y[0], -y[1], y[2])
                };
                if !found.iter().any(|f| (f - y).amax() < 1e-8) {
                    found.push(y);
                }
            }
        }
    }
    found.sort_by(|a, b| a[2].total_cmp(&b[2]).then(a[0].total_cmp(&b[0])));
    let mut equilibria = Vec::with_capacity(2 * found.len());
    for y in found {
        let plus = SpinState::from(y);
        let minus = crate::model::parity(&plus);
        equilibria.push(Equilibrium::from_state(
            plus,
            p,
            EquilibriumLabel::SuperradiantPlus,
        ));
        equilibria.push(Equilibrium::from_state(
            minus,
            p,
            EquilibriumLabel::SuperradiantMinus,
        ));
    }
    Ok(SuperradiantSearch {
        equilibria,
        seeds,
        failed_seeds: failed,
    })
}

pub fn superradiant_equilibria(p: &ModelParams) -> Result<Vec<Equilibrium>, BifError> {
    Ok(superradiant_search(p)?.equilibria)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normal_equilibrium_positions() {
        let mut p = ModelParams::transitional(1.0);
        assert_relative_eq!(normal_equilibrium(&p).unwrap().state.gamma, -0.5);
        p.gamma_up = p.gamma_down;
        assert_relative_eq!(normal_equilibrium(&p).unwrap().state.gamma, 0.0);
        p.gamma_up = 0.03;
        p.gamma_down = 0.01;
        assert_relative_eq!(normal_equilibrium(&p).unwrap().state.gamma, 0.25);
        p.gamma_up = 0.0;
        p.gamma_down = 0.0;
        assert_eq!(normal_equilibrium(&p), Err(BifError::DegenerateManifold));
    }

    #[test]
    fn resonant_normal_spectrum_matches_closed_form() {
        let p = ModelParams::resonant(0.5, 0.8, 0.01);
        let e = normal_equilibrium(&p).unwrap();
        let r = p.reduced();
        let re = -r.mu * e.state.gamma - r.sigma;
        let expect = [
            Complex64::new(re, p.omega0),
            Complex64::new(re, -p.omega0),
            Complex64::new(-2.0 * r.sigma, 0.0),
        ];
        let mut got = e.eigenvalues.to_vec();
        for x in expect {
            let (i, d) = got
                .iter()
                .enumerate()
                .map(|(i, g)| (i, (g - x).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(d < 1e-10, "{x} not found in {got:?}");
            got.remove(i);
        }
    }

    #[test]
    fn eigenvectors_satisfy_eigen_equation() {
        let p = ModelParams::transitional(1.532895);
        for e in superradiant_equilibria(&p)
            .unwrap()
            .iter()
            .chain(std::iter::once(&normal_equilibrium(&p).unwrap()))
        {
            let j: Matrix3<Complex64> = jacobian(&e.state, &p).map(|x| Complex::new(x, 0.0));
            for (l, v) in e.eigenvalues.iter().zip(e.eigenvectors.iter()) {
                assert!((j * v - v * *l).norm() < 1e-12);
                assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn stability_threshold_is_scale_aware() {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        assert_eq!(
            Stability::classify(&[c(-1.0, 0.0), c(-2.0, 0.0), c(-3.0, 0.0)]),
            Stability::Sink
        );
        assert_eq!(
            Stability::classify(&[c(0.1, 0.0), c(-2.0, 0.0), c(-3.0, 0.0)]),
            Stability::Saddle { unstable: 1 }
        );
        assert_eq!(
            Stability::classify(&[c(5e-7, 1000.0), c(5e-7, -1000.0), c(-3.0, 0.0)]),
            Stability::NonHyperbolic {
                zero: 2,
                unstable: 0
            }
        );
        assert_eq!(
            Stability::classify(&[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]),
            Stability::Source
        );
    }

    #[test]
    fn weak_coupling_has_no_superradiant_equilibria() {
        let mut p = ModelParams::transitional(0.1);
        p.lambda_minus = 0.1;
        assert!(superradiant_equilibria(&p).unwrap().is_empty());
    }

    #[test]
    fn superradiant_phase_has_one_stable_parity_pair() {
        let p = ModelParams::transitional(1.45);
        let eqs = superradiant_equilibria(&p).unwrap();
        assert_eq!(eqs.len(), 2);
        assert!(eqs.iter().all(|e| e.stability.is_stable()));
        let a = &eqs[0].state;
        let b = &eqs[1].state;
        assert_eq!((a.b_x, a.b_y, a.gamma), (-b.b_x, -b.b_y, b.gamma));
        for k in 0..3 {
            assert!((eqs[0].eigenvalues[k] - eqs[1].eigenvalues[k]).norm() < 1e-12);
        }
        let f = LmgField::new(&p);
        for e in &eqs {
            assert!(f.eval(&e.state.as_vector()).amax() < 1e-12);
        }
    }
}
