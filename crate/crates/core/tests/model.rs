use counterlase::model::{
    dicke_rhs, lmg_rhs, parity, photon_number, slave_field, spherical_rhs, u1_rotate,
    SphericalState,
};
use counterlase::{DickeState, LmgField, ModelParams, SpinState};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

fn params(omega: impl Strategy<Value = f64>) -> impl Strategy<Value = ModelParams> {
    (
        omega,
        0.1..2.0f64,
        0.5..6.0f64,
        0.0..3.0f64,
        0.0..3.0f64,
        0.0..0.1f64,
        0.0..1.0f64,
    )
        .prop_map(|(omega, omega0, kappa, lm, lp, gd, frac)| ModelParams {
            omega,
            omega0,
            kappa,
            lambda_minus: lm,
            lambda_plus: lp,
            gamma_down: gd,
            gamma_up: frac * gd,
        })
}

fn state() -> impl Strategy<Value = SpinState> {
    (
        0.0..0.5f64,
        0.0..std::f64::consts::PI,
        0.0..std::f64::consts::TAU,
    )
        .prop_map(|(r, theta, phi)| SphericalState { r, theta, phi }.to_spin())
}

fn sup(a: &SpinState, b: &SpinState) -> f64 {
    (a.as_vector() - b.as_vector()).amax()
}

proptest! {
    #[test]
    fn parity_commutes_with_the_flow(p in params(-1.0..1.0f64), s in state()) {
        prop_assert_eq!(lmg_rhs(&parity(&s), &p), parity(&lmg_rhs(&s, &p)));
    }

    #[test]
    fn rotations_commute_with_the_resonant_flow(p in params(Just(0.0)), s in state(), a in 0.0..6.3f64) {
        let lhs = lmg_rhs(&u1_rotate(&s, a), &p);
        let rhs = u1_rotate(&lmg_rhs(&s, &p), a);
        prop_assert!(sup(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn bloch_sphere_is_invariant_without_emission(mut p in params(-1.0..1.0f64), s in state()) {
        p.gamma_down = 0.0;
        p.gamma_up = 0.0;
        let f = lmg_rhs(&s, &p);
        prop_assert!(s.as_vector().dot(&f.as_vector()).abs() < 1e-13);
    }

    #[test]
    fn jacobian_matches_central_differences(p in params(-1.0..1.0f64), s in state()) {
        let field = LmgField::new(&p);
        let x = s.as_vector();
        let h = 1e-6;
        let mut fd = Matrix3::zeros();
        for c in 0..3 {
            let e = Vector3::ith(c, h);
            fd.set_column(c, &((field.eval(&(x + e)) - field.eval(&(x - e))) / (2.0 * h)));
        }
        prop_assert!((field.jacobian(&x) - fd).amax() < 1e-7);
    }

    #[test]
    fn spherical_chart_agrees_with_the_cartesian_flow(p in params(Just(0.0)), s in state()) {
        prop_assume!(s.radius_sq() > 1e-4);
        let sph = SphericalState::from_spin(&s).unwrap();
        prop_assume!(sph.theta.sin() > 1e-2);
        let d = spherical_rhs(&sph, &p).unwrap();
        let (st, ct) = sph.theta.sin_cos();
        let (sp, cp) = sph.phi.sin_cos();
        let r = sph.r;
        let v = Vector3::new(
            d.r * st * cp + r * ct * cp * d.theta - r * st * sp * d.phi,
            d.r * st * sp + r * ct * sp * d.theta + r * st * cp * d.phi,
            d.r * ct - r * st * d.theta,
        );
        prop_assert!((v - lmg_rhs(&s, &p).as_vector()).amax() < 1e-12);
    }

    #[test]
    fn slaved_field_is_a_fixed_point_of_the_cavity(p in params(-1.0..1.0f64), s in state()) {
        let d = dicke_rhs(&DickeState::slaved(&s, &p), &p);
        prop_assert!(d.alpha().norm() < 1e-12);
        prop_assert!(sup(&d.spin(), &lmg_rhs(&s, &p)) < 1e-12);
    }

    #[test]
    fn photon_number_is_the_slaved_intensity(p in params(-1.0..1.0f64), s in state()) {
        let a = slave_field(s.beta(), &p);
        prop_assert!((photon_number(&s, &p) - a.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn params_round_trip_through_text(p in params(-1.0..1.0f64)) {
        prop_assert_eq!(ModelParams::from_kv_str(&p.to_kv_string()).unwrap(), p);
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    let good = ModelParams::transitional(1.5);
    assert!(good.validate().is_ok());
    for bad in [
        ModelParams { kappa: 0.0, ..good },
        ModelParams {
            lambda_plus: -1.0,
            ..good
        },
        ModelParams {
            gamma_down: f64::NAN,
            ..good
        },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}

#[test]
fn spherical_chart_needs_a_resonant_cavity() {
    let s = SphericalState {
        r: 0.5,
        theta: 1.0,
        phi: 0.0,
    };
    assert!(spherical_rhs(&s, &ModelParams::transitional(1.5)).is_err());
    assert!(spherical_rhs(&s, &ModelParams::resonant(0.5, 1.0, 0.0)).is_ok());
}
