use serde::Serialize;

use super::BifError;
use crate::model::ModelParams;

/// Circular periodic orbit of the resonant (`xi = 0`) flow, a relative
/// equilibrium of the spherical equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct POGeometry {
    pub theta_po: f64,
    pub r_po: f64,
    pub gamma_po: f64,
    /// In-plane radius `r sin(theta)`, the largest `b_x` along the orbit.
    pub max_bx: f64,
    pub period: f64,
}

/// Solves `dr/dt = dtheta/dt = 0` with `sin(theta) != 0`. The orbit lies at
/// `gamma = -sigma/mu` on the radius `r^2 = -(delta mu + sigma^2)/mu^2`.
pub fn po_geometry(p: &ModelParams) -> Result<POGeometry, BifError> {
    p.validate()?;
    let r = p.reduced();
    if r.xi != 0.0 {
        return Err(BifError::NonzeroXi(r.xi));
    }
    if r.mu == 0.0 {
        return Err(BifError::NoOrbit("mu = 0"));
    }
    let s = -(r.delta * r.mu + r.sigma * r.sigma);
    if s <= 0.0 {
        return Err(BifError::NoOrbit("-(delta mu + sigma^2) must be positive"));
    }
    let in_plane_sq = s - r.sigma * r.sigma;
    if in_plane_sq < 0.0 {
        return Err(BifError::NoOrbit(
            "parameters lie before the Hopf bifurcation",
        ));
    }
    if p.omega0 == 0.0 {
        return Err(BifError::NoOrbit(
            "omega0 = 0 gives a continuum of equilibria",
        ));
    }
    let r_po = s.sqrt() / r.mu.abs();
    let gamma_po = -r.sigma / r.mu;
    Ok(POGeometry {
        theta_po: (gamma_po / r_po).clamp(-1.0, 1.0).acos(),
        r_po,
        gamma_po,
        max_bx: in_plane_sq.sqrt() / r.mu.abs(),
        period: 2.0 * std::f64::consts::PI / p.omega0.abs(),
    })
}

/// Semi-axes `(a, b)` of the spheroid `rho^2/b^2 + (gamma - a)^2/a^2 = 1`
/// traced by the periodic orbits as `mu` varies; `a` is along `gamma`
/// (signed, equal to the centre `gamma_eq / 2`).
pub fn spheroid_axes(p: &ModelParams) -> Result<(f64, f64), BifError> {
    p.validate()?;
    let r = p.reduced();
    if r.sigma <= 0.0 {
        return Err(BifError::DegenerateManifold);
    }
    Ok((
        r.delta / (4.0 * r.sigma),
        r.delta / (2.0 * std::f64::consts::SQRT_2 * r.sigma),
    ))
}
