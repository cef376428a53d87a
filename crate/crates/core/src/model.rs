//! Semiclassical equations of motion for the unbalanced Dicke model and its
//! adiabatically eliminated (generalized LMG) limit.
//!
//! The collective spin is described by `beta = b_x - i b_y` and the population
//! inversion `gamma`. With the cavity field slaved, the dynamics reduce to a
//! real three-dimensional flow that conserves `b_x^2 + b_y^2 + gamma^2` when
//! the atomic decay rates vanish.

use nalgebra::{Matrix3, SVector, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` = {value} is invalid: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("spherical chart is singular at r = {r:e}")]
    ChartSingularity { r: f64 },
    #[error("spherical form requires a resonant cavity (xi = 0), got xi = {xi:e}")]
    NonzeroXi { xi: f64 },
    #[error("malformed parameter text: {0}")]
    Parse(String),
}

/// Physical parameters of the unbalanced Dicke model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Cavity detuning.
    pub omega: f64,
    /// Atomic level splitting.
    pub omega0: f64,
    /// Cavity loss rate.
    pub kappa: f64,
    /// Co-rotating coupling.
    pub lambda_minus: f64,
    /// Counter-rotating coupling.
    pub lambda_plus: f64,
    #[serde(default)]
    pub gamma_down: f64,
    #[serde(default)]
    pub gamma_up: f64,
}

/// Derived quantities used by the reduced flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedParams {
    /// `omega / (kappa^2 + omega^2)`
    pub xi: f64,
    /// `kappa / (kappa^2 + omega^2)`
    pub eta: f64,
    pub omega0_prime: f64,
    /// `Gamma_up + Gamma_down`
    pub sigma: f64,
    /// `Gamma_up - Gamma_down`
    pub delta: f64,
    /// `2 eta (lambda_+^2 - lambda_-^2)`
    pub mu: f64,
}

impl ReducedParams {
    /// Level splitting including the finite-size shift `-2 xi lambda_- lambda_+ / N`
    /// that vanishes in the thermodynamic limit. The flow itself uses the
    /// `N -> infinity` value.
    pub fn omega0_prime_at(&self, params: &ModelParams, n_atoms: f64) -> f64 {
        params.omega0 - 2.0 * self.xi * params.lambda_minus * params.lambda_plus / n_atoms
    }
}

impl ModelParams {
    /// Parameter set used for the homoclinic and kneading analysis.
    pub fn transitional(lambda_plus: f64) -> Self {
        Self {
            omega: 0.5,
            omega0: 0.2,
            kappa: 4.0,
            lambda_minus: 1.5,
            lambda_plus,
            gamma_down: 0.02,
            gamma_up: 0.0,
        }
    }

    /// Resonant cavity (`omega = 0`) parameter set with unit level splitting.
    pub fn resonant(lambda_minus: f64, lambda_plus: f64, gamma_down: f64) -> Self {
        Self {
            omega: 0.0,
            omega0: 1.0,
            kappa: 5.0,
            lambda_minus,
            lambda_plus,
            gamma_down,
            gamma_up: 0.0,
        }
    }

    pub fn with_lambda_plus(mut self, lambda_plus: f64) -> Self {
        self.lambda_plus = lambda_plus;
        self
    }

    pub fn with_lambda_minus(mut self, lambda_minus: f64) -> Self {
        self.lambda_minus = lambda_minus;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("omega", self.omega),
            ("omega0", self.omega0),
            ("kappa", self.kappa),
            ("lambda_minus", self.lambda_minus),
            ("lambda_plus", self.lambda_plus),
            ("gamma_down", self.gamma_down),
            ("gamma_up", self.gamma_up),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
        }
        if self.kappa <= 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "kappa",
                value: self.kappa,
                reason: "cavity loss must be positive",
            });
        }
        if self.gamma_down < 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "gamma_down",
                value: self.gamma_down,
                reason: "rate must be non-negative",
            });
        }
        if self.gamma_up < 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "gamma_up",
                value: self.gamma_up,
                reason: "rate must be non-negative",
            });
        }
        if self.lambda_minus < 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "lambda_minus",
                value: self.lambda_minus,
                reason: "coupling must be non-negative",
            });
        }
        if self.lambda_plus < 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "lambda_plus",
                value: self.lambda_plus,
                reason: "coupling must be non-negative",
            });
        }
        Ok(())
    }

    pub fn reduced(&self) -> ReducedParams {
        let den = self.kappa * self.kappa + self.omega * self.omega;
        let xi = self.omega / den;
        let eta = self.kappa / den;
        ReducedParams {
            xi,
            eta,
            omega0_prime: self.omega0,
            sigma: self.gamma_up + self.gamma_down,
            delta: self.gamma_up - self.gamma_down,
            mu: 2.0
                * eta
                * (self.lambda_plus * self.lambda_plus - self.lambda_minus * self.lambda_minus),
        }
    }

    /// Parses the flat `key = value` text format. Missing rates default to zero.
    pub fn from_kv_str(text: &str) -> Result<Self, ModelError> {
        let p: ModelParams = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_kv_string(&self) -> String {
        toml::to_string(self).expect("plain float table always serializes")
    }
}

/// Point of the reduced three-dimensional phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpinState {
    pub b_x: f64,
    pub b_y: f64,
    pub gamma: f64,
}

impl SpinState {
    pub fn new(b_x: f64, b_y: f64, gamma: f64) -> Self {
        Self { b_x, b_y, gamma }
    }

    pub fn beta(&self) -> Complex64 {
        Complex64::new(self.b_x, -self.b_y)
    }

    pub fn from_beta(beta: Complex64, gamma: f64) -> Self {
        Self::new(beta.re, -beta.im, gamma)
    }

    /// Squared Bloch radius `b_x^2 + b_y^2 + gamma^2`.
    pub fn radius_sq(&self) -> f64 {
        self.b_x * self.b_x + self.b_y * self.b_y + self.gamma * self.gamma
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.b_x, self.b_y, self.gamma)
    }
}

impl From<Vector3<f64>> for SpinState {
    fn from(v: Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<SpinState> for Vector3<f64> {
    fn from(s: SpinState) -> Self {
        s.as_vector()
    }
}

/// Spherical coordinates with `gamma = r cos(theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalState {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

const CHART_MIN_RADIUS: f64 = 1e-12;

impl SphericalState {
    pub fn from_spin(s: &SpinState) -> Result<Self, ModelError> {
        let r = s.radius_sq().sqrt();
        if r < CHART_MIN_RADIUS {
            return Err(ModelError::ChartSingularity { r });
        }
        let rho = s.b_x.hypot(s.b_y);
        Ok(Self {
            r,
            theta: rho.atan2(s.gamma),
            phi: s.b_y.atan2(s.b_x),
        })
    }

    pub fn to_spin(&self) -> SpinState {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        SpinState::new(self.r * st * cp, self.r * st * sp, self.r * ct)
    }
}

/// Full semiclassical state with the cavity amplitude `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DickeState {
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub b_x: f64,
    pub b_y: f64,
    pub gamma: f64,
}

impl DickeState {
    pub fn alpha(&self) -> Complex64 {
        Complex64::new(self.alpha_re, self.alpha_im)
    }

    pub fn spin(&self) -> SpinState {
        SpinState::new(self.b_x, self.b_y, self.gamma)
    }

    /// Spin state with the cavity amplitude set to its slaved value.
    pub fn slaved(spin: &SpinState, p: &ModelParams) -> Self {
        let a = slave_field(spin.beta(), p);
        Self {
            alpha_re: a.re,
            alpha_im: a.im,
            b_x: spin.b_x,
            b_y: spin.b_y,
            gamma: spin.gamma,
        }
    }

    pub fn as_vector(&self) -> SVector<f64, 5> {
        SVector::<f64, 5>::new(self.alpha_re, self.alpha_im, self.b_x, self.b_y, self.gamma)
    }
}

impl From<SVector<f64, 5>> for DickeState {
    fn from(v: SVector<f64, 5>) -> Self {
        Self {
            alpha_re: v[0],
            alpha_im: v[1],
            b_x: v[2],
            b_y: v[3],
            gamma: v[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observables {
    /// Photon number per atom `|alpha|^2` of the slaved field.
    pub photon_number: f64,
    /// Atomic energy per atom `omega0 * gamma`.
    pub energy: f64,
}

/// Reduced flow with the parameter combinations precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmgField {
    pub params: ModelParams,
    pub reduced: ReducedParams,
    w0: f64,
    mu: f64,
    a: f64,
    b: f64,
    sigma: f64,
    g_down: f64,
    g_up: f64,
}

impl LmgField {
    pub fn new(params: &ModelParams) -> Self {
        let r = params.reduced();
        let lm = params.lambda_minus;
        let lp = params.lambda_plus;
        Self {
            params: *params,
            reduced: r,
            w0: r.omega0_prime,
            mu: r.mu,
            a: 2.0 * r.xi * (lp * lp + lm * lm),
            b: 4.0 * r.xi * lm * lp,
            sigma: r.sigma,
            g_down: params.gamma_down,
            g_up: params.gamma_up,
        }
    }

    #[inline]
    pub fn eval(&self, y: &Vector3<f64>) -> Vector3<f64> {
        let (x, yy, g) = (y[0], y[1], y[2]);
        let damp = self.mu * g + self.sigma;
        Vector3::new(
            -(self.w0 + (self.a - self.b) * g) * yy - damp * x,
            (self.w0 + (self.a + self.b) * g) * x - damp * yy,
            self.mu * (x * x + yy * yy) - 2.0 * self.b * x * yy - 2.0 * self.g_down * (0.5 + g)
                + 2.0 * self.g_up * (0.5 - g),
        )
    }

    #[inline]
    pub fn jacobian(&self, y: &Vector3<f64>) -> Matrix3<f64> {
        let (x, yy, g) = (y[0], y[1], y[2]);
        let damp = self.mu * g + self.sigma;
        let cm = self.w0 + (self.a - self.b) * g;
        let cp = self.w0 + (self.a + self.b) * g;
        Matrix3::new(
            -damp,
            -cm,
            -(self.a - self.b) * yy - self.mu * x,
            cp,
            -damp,
            (self.a + self.b) * x - self.mu * yy,
            2.0 * self.mu * x - 2.0 * self.b * yy,
            2.0 * self.mu * yy - 2.0 * self.b * x,
            -2.0 * self.sigma,
        )
    }

    /// Partial derivative of the vector field with respect to `lambda_+`.
    pub fn d_lambda_plus(&self, y: &Vector3<f64>) -> Vector3<f64> {
        let r = &self.reduced;
        let lp = self.params.lambda_plus;
        let lm = self.params.lambda_minus;
        let dmu = 4.0 * r.eta * lp;
        let da = 4.0 * r.xi * lp;
        let db = 4.0 * r.xi * lm;
        let (x, yy, g) = (y[0], y[1], y[2]);
        Vector3::new(
            -(da - db) * g * yy - dmu * g * x,
            (da + db) * g * x - dmu * g * yy,
            dmu * (x * x + yy * yy) - 2.0 * db * x * yy,
        )
    }

    /// Rate coefficients of the 2x2 in-plane block at fixed `gamma`:
    /// returns `(mu, A, B, sigma, omega0)`.
    pub fn coefficients(&self) -> (f64, f64, f64, f64, f64) {
        (self.mu, self.a, self.b, self.sigma, self.w0)
    }
}

/// Time derivative of the reduced state.
pub fn lmg_rhs(s: &SpinState, p: &ModelParams) -> SpinState {
    LmgField::new(p).eval(&s.as_vector()).into()
}

/// Time derivative in spherical coordinates. Only defined for a resonant
/// cavity; the polar angle and radius equations decouple from the azimuth.
pub fn spherical_rhs(s: &SphericalState, p: &ModelParams) -> Result<SphericalState, ModelError> {
    let r = p.reduced();
    if r.xi != 0.0 {
        return Err(ModelError::NonzeroXi { xi: r.xi });
    }
    if s.r < CHART_MIN_RADIUS {
        return Err(ModelError::ChartSingularity { r: s.r });
    }
    let (st, ct) = s.theta.sin_cos();
    Ok(SphericalState {
        r: r.delta * ct - r.sigma * s.r * ct * ct - r.sigma * s.r,
        theta: -(r.mu * s.r - r.sigma * ct + r.delta / s.r) * st,
        phi: r.omega0_prime,
    })
}

/// Time derivative of the full cavity plus spin system.
pub fn dicke_rhs(s: &DickeState, p: &ModelParams) -> DickeState {
    let i = Complex64::i();
    let a = s.alpha();
    let b = Complex64::new(s.b_x, -s.b_y);
    let g = s.gamma;
    let (lm, lp) = (p.lambda_minus, p.lambda_plus);
    let sigma = p.gamma_down + p.gamma_up;
    let da = -(p.kappa + i * p.omega) * a - i * lm * b - i * lp * b.conj();
    let db = -i * p.omega0 * b + 2.0 * i * lm * a * g + 2.0 * i * lp * a.conj() * g - sigma * b;
    let dg = (i * lm * (a.conj() * b - a * b.conj()) + i * lp * (a * b - a.conj() * b.conj())).re
        - 2.0 * p.gamma_down * (0.5 + g)
        + 2.0 * p.gamma_up * (0.5 - g);
    DickeState {
        alpha_re: da.re,
        alpha_im: da.im,
        b_x: db.re,
        b_y: -db.im,
        gamma: dg,
    }
}

/// Adiabatically eliminated cavity amplitude for a given `beta`.
pub fn slave_field(beta: Complex64, p: &ModelParams) -> Complex64 {
    let i = Complex64::i();
    -i * (p.lambda_minus * beta + p.lambda_plus * beta.conj()) / Complex64::new(p.kappa, p.omega)
}

/// `|alpha|^2` of the slaved field, written as a manifestly non-negative sum.
pub fn photon_number(s: &SpinState, p: &ModelParams) -> f64 {
    let r = p.reduced();
    let s_plus = p.lambda_minus + p.lambda_plus;
    let s_minus = p.lambda_minus - p.lambda_plus;
    (r.xi * r.xi + r.eta * r.eta)
        * (s_plus * s_plus * s.b_x * s.b_x + s_minus * s_minus * s.b_y * s.b_y)
}

pub fn observables(s: &SpinState, p: &ModelParams) -> Observables {
    Observables {
        photon_number: photon_number(s, p),
        energy: p.omega0 * s.gamma,
    }
}

/// The `Z2` image `(b_x, b_y) -> (-b_x, -b_y)`.
pub fn parity(s: &SpinState) -> SpinState {
    SpinState::new(-s.b_x, -s.b_y, s.gamma)
}

/// Rotates `(b_x, b_y)` by `angle` about the `gamma` axis. A symmetry of the
/// flow only when `xi = 0`.
pub fn u1_rotate(s: &SpinState, angle: f64) -> SpinState {
    let (sn, cs) = angle.sin_cos();
    SpinState::new(cs * s.b_x - sn * s.b_y, sn * s.b_x + cs * s.b_y, s.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_params(seed: u64) -> ModelParams {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ModelParams {
            omega: rng.gen_range(-2.0..2.0),
            omega0: rng.gen_range(0.0..2.0),
            kappa: rng.gen_range(0.1..6.0),
            lambda_minus: rng.gen_range(0.0..3.0),
            lambda_plus: rng.gen_range(0.0..3.0),
            gamma_down: rng.gen_range(0.0..0.1),
            gamma_up: rng.gen_range(0.0..0.1),
        }
    }

    #[test]
    fn slaved_dicke_spin_equations_reduce_to_lmg() {
        for seed in 0..50 {
            let p = random_params(seed);
            let s = SpinState::new(0.3 - 0.01 * seed as f64, -0.2, 0.1);
            let full = dicke_rhs(&DickeState::slaved(&s, &p), &p);
            let red = lmg_rhs(&s, &p);
            assert_relative_eq!(full.b_x, red.b_x, epsilon = 1e-12);
            assert_relative_eq!(full.b_y, red.b_y, epsilon = 1e-12);
            assert_relative_eq!(full.gamma, red.gamma, epsilon = 1e-12);
        }
    }

    #[test]
    fn slaved_field_is_fixed_point_of_cavity_equation() {
        let p = random_params(7);
        let s = SpinState::new(0.2, 0.4, -0.1);
        let d = dicke_rhs(&DickeState::slaved(&s, &p), &p);
        assert!(d.alpha_re.abs() < 1e-14 && d.alpha_im.abs() < 1e-14);
    }

    #[test]
    fn photon_number_matches_slaved_amplitude() {
        for seed in 0..20 {
            let p = random_params(seed);
            let s = SpinState::new(0.1 * seed as f64 / 20.0, -0.3, 0.2);
            let a = slave_field(s.beta(), &p);
            assert_relative_eq!(photon_number(&s, &p), a.norm_sqr(), epsilon = 1e-14);
        }
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let p = random_params(3);
        let f = LmgField::new(&p);
        let y = Vector3::new(0.21, -0.33, 0.12);
        let j = f.jacobian(&y);
        let h = 1e-6;
        for c in 0..3 {
            let mut yp = y;
            let mut ym = y;
            yp[c] += h;
            ym[c] -= h;
            let col = (f.eval(&yp) - f.eval(&ym)) / (2.0 * h);
            for r in 0..3 {
                assert_relative_eq!(j[(r, c)], col[r], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn lambda_plus_derivative_matches_finite_differences() {
        let p = random_params(11);
        let y = Vector3::new(0.21, -0.33, 0.12);
        let h = 1e-6;
        let fp = LmgField::new(&p.with_lambda_plus(p.lambda_plus + h)).eval(&y);
        let fm = LmgField::new(&p.with_lambda_plus(p.lambda_plus - h)).eval(&y);
        let d = LmgField::new(&p).d_lambda_plus(&y);
        for r in 0..3 {
            assert_relative_eq!(d[r], (fp[r] - fm[r]) / (2.0 * h), epsilon = 1e-8);
        }
    }

    #[test]
    fn spherical_form_agrees_with_cartesian_flow() {
        let p = ModelParams::resonant(0.5, 0.8, 0.01);
        let s = SpinState::new(0.2, 0.1, -0.3);
        let sph = SphericalState::from_spin(&s).unwrap();
        let d = spherical_rhs(&sph, &p).unwrap();
        let c = lmg_rhs(&s, &p);
        let r = sph.r;
        let dr = (s.b_x * c.b_x + s.b_y * c.b_y + s.gamma * c.gamma) / r;
        let dtheta = (s.gamma * dr - r * c.gamma) / (r * r * sph.theta.sin());
        let dphi = (s.b_x * c.b_y - s.b_y * c.b_x) / (s.b_x * s.b_x + s.b_y * s.b_y);
        assert_relative_eq!(d.r, dr, epsilon = 1e-14);
        assert_relative_eq!(d.theta, dtheta, epsilon = 1e-13);
        assert_relative_eq!(d.phi, dphi, epsilon = 1e-13);
    }

    #[test]
    fn spherical_form_rejects_detuned_cavity_and_origin() {
        let p = ModelParams::transitional(1.5);
        let sph = SphericalState {
            r: 0.4,
            theta: 1.0,
            phi: 0.0,
        };
        assert!(matches!(
            spherical_rhs(&sph, &p),
            Err(ModelError::NonzeroXi { .. })
        ));
        let origin = SpinState::default();
        assert!(matches!(
            SphericalState::from_spin(&origin),
            Err(ModelError::ChartSingularity { .. })
        ));
    }

    #[test]
    fn pole_is_stationary_for_emission_only() {
        let p = ModelParams::resonant(0.5, 0.45, 0.01);
        let d = lmg_rhs(&SpinState::new(0.0, 0.0, -0.5), &p);
        assert_eq!(d, SpinState::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn key_value_round_trip() {
        let p = ModelParams::transitional(1.532895);
        let text = p.to_kv_string();
        assert!(text.contains("lambda_plus = 1.532895"));
        assert_eq!(ModelParams::from_kv_str(&text).unwrap(), p);
    }

    #[test]
    fn key_value_rejects_bad_values() {
        let text = "omega = 0.5\nomega0 = 0.2\nkappa = -1\nlambda_minus = 1\nlambda_plus = 1\n";
        assert!(matches!(
            ModelParams::from_kv_str(text),
            Err(ModelError::InvalidParameter { name: "kappa", .. })
        ));
        assert!(matches!(
            ModelParams::from_kv_str("omega = 1\nbogus = 2\n"),
            Err(ModelError::Parse(_))
        ));
    }

    #[test]
    fn reduced_parameters() {
        let r = ModelParams::transitional(1.0).reduced();
        assert_relative_eq!(r.eta, 4.0 / 16.25, epsilon = 1e-15);
        assert_relative_eq!(r.xi, 0.5 / 16.25, epsilon = 1e-15);
        assert_relative_eq!(r.sigma, 0.02);
        assert_relative_eq!(r.delta, -0.02);
        assert_relative_eq!(r.mu, 2.0 * r.eta * (1.0 - 2.25), epsilon = 1e-15);
    }
}
