//! Symmetry-broken equilibria against an independent closed form: a nonzero
//! in-plane component requires the 2x2 in-plane block to be singular, which is
//! a quadratic in gamma; the in-plane direction is its null vector and the
//! magnitude follows from the gamma equation.

use counterlase::localbif::{superradiant_equilibria, EquilibriumLabel};
use counterlase::model::{LmgField, ModelParams};
use proptest::prelude::*;

fn closed_form(p: &ModelParams) -> Vec<[f64; 3]> {
    let f = LmgField::new(p);
    let (mu, a, b, sigma, w0) = f.coefficients();
    let delta = p.gamma_up - p.gamma_down;
    let c2 = mu * mu + a * a - b * b;
    let c1 = 2.0 * (sigma * mu + w0 * a);
    let c0 = sigma * sigma + w0 * w0;
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 || c2 == 0.0 {
        return vec![];
    }
    let mut out = Vec::new();
    for s in [1.0, -1.0] {
        let g = (-c1 + s * disc.sqrt()) / (2.0 * c2);
        let ux = w0 + (a - b) * g;
        let uy = -(mu * g + sigma);
        let den = mu * (ux * ux + uy * uy) - 2.0 * b * ux * uy;
        let rho2 = (2.0 * sigma * g - delta) / den;
        if rho2 > 0.0 {
            let rho = rho2.sqrt();
            let (x, y) = if ux > 0.0 {
                (rho * ux, rho * uy)
            } else {
                (-rho * ux, -rho * uy)
            };
            out.push([x, y, g]);
        }
    }
    out
}

fn params() -> impl Strategy<Value = ModelParams> {
    (
        0.0..1.0f64,
        0.05..1.0f64,
        2.0..6.0f64,
        0.0..3.0f64,
        0.0..3.0f64,
        0.005..0.05f64,
        0.0..0.01f64,
    )
        .prop_map(|(omega, omega0, kappa, lm, lp, gd, gu)| ModelParams {
            omega,
            omega0,
            kappa,
            lambda_minus: lm,
            lambda_plus: lp,
            gamma_down: gd,
            gamma_up: gu,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn newton_search_matches_closed_form(p in params()) {
        let expect = closed_form(&p);
        let got = superradiant_equilibria(&p).unwrap();
        let plus: Vec<_> = got
            .iter()
            .filter(|e| e.label == EquilibriumLabel::SuperradiantPlus)
            .map(|e| [e.state.b_x, e.state.b_y, e.state.gamma])
            .collect();
        prop_assert_eq!(plus.len(), expect.len(), "got {:?} expected {:?}", plus, expect);
        for e in &expect {
            prop_assert!(
                plus.iter().any(|g| (0..3).all(|k| (g[k] - e[k]).abs() < 1e-9)),
                "missing {:?} in {:?}", e, plus
            );
        }
    }

    #[test]
    fn equilibria_are_exact_parity_pairs_with_equal_spectra(p in params()) {
        let eqs = superradiant_equilibria(&p).unwrap();
        prop_assert_eq!(eqs.len() % 2, 0);
        let f = LmgField::new(&p);
        for pair in eqs.chunks(2) {
            let (a, b) = (&pair[0], &pair[1]);
            prop_assert_eq!(a.state.b_x, -b.state.b_x);
            prop_assert_eq!(a.state.b_y, -b.state.b_y);
            prop_assert_eq!(a.state.gamma, b.state.gamma);
            for k in 0..3 {
                prop_assert!((a.eigenvalues[k] - b.eigenvalues[k]).norm() < 1e-12);
            }
            prop_assert!(f.eval(&a.state.as_vector()).amax() < 1e-12);
        }
    }
}

#[test]
fn normal_plus_superradiant_wedge_has_two_pairs() {
    // Between the lower saddle-node line (2.680) and the subcritical
    // pitchfork (2.7304) at lambda_- = 3.
    let p = ModelParams::transitional(2.70).with_lambda_minus(3.0);
    let eqs = superradiant_equilibria(&p).unwrap();
    assert_eq!(eqs.len(), 4);
    assert_eq!(eqs.iter().filter(|e| e.stability.is_stable()).count(), 2);
    let n = counterlase::localbif::normal_equilibrium(&p).unwrap();
    assert!(n.stability.is_stable());
}
