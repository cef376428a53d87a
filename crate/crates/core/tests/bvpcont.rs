use counterlase::bvpcont::{
    floquet, lin_find_homoclinic, lin_gap, orbit_from_hopf, LinOptions, LinTarget,
};
use counterlase::kneading::Symbols;
use counterlase::localbif::{hopf_curve, normal_equilibrium, po_geometry};
use counterlase::{ModelParams, Tolerances};

#[test]
fn two_loop_homoclinic_closes_along_the_fixed_lin_direction() {
    let p = ModelParams::transitional(1.5329);
    let opts = LinOptions::default();
    let s = Symbols::new(vec![0, 1]);
    let window = (1.5327, 1.5330);
    let c = lin_find_homoclinic(&p, &s, window, &opts).unwrap();
    let first = lin_gap(
        &p.with_lambda_plus(window.0),
        &LinTarget::Homoclinic(s.clone()),
        &opts,
    )
    .unwrap();
    assert!((c.problem.lin_vector - first.lin_vector).norm() < 1e-12);
    assert!(c.problem.gap.abs() < 1e-8, "gap {}", c.problem.gap);
    assert!(
        c.problem.transverse.abs() < 1e-8,
        "transverse {}",
        c.problem.transverse
    );
    assert_eq!(c.problem.symbols, s);
    assert!(c.bracket.1 - c.bracket.0 <= 1e-9);

    let eq = normal_equilibrium(&p.with_lambda_plus(c.lambda_plus)).unwrap();
    let mut re: Vec<f64> = eq.eigenvalues.iter().map(|e| e.re).collect();
    re.sort_by(|a, b| b.total_cmp(a));
    for (a, b) in re.iter().zip(&c.saddle_eigenvalues) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!(c.is_expanding());

    let shadow = c.shadowing_time(&p, 1e-3, Tolerances::MANIFOLD).unwrap();
    assert!(
        shadow > 0.5 * c.problem.x1.time,
        "shadowed for {shadow} of {}",
        c.problem.x1.time
    );
}

#[test]
fn hopf_orbit_matches_the_closed_form_geometry() {
    let base = ModelParams::resonant(0.5, 1.0, 0.01);
    let h = hopf_curve(&base, &[0.5]).unwrap()[0];
    let ph = base.with_lambda_plus(h.lambda_plus);
    let eq = normal_equilibrium(&ph).unwrap();
    let (prob, u) = orbit_from_hopf(&ph, eq.state.as_vector(), 1e-3, 20).unwrap();
    let sol = prob.solution(&u).unwrap();
    let g = po_geometry(&base.with_lambda_plus(sol.lambda_plus)).unwrap();
    assert!(sol.lambda_plus > h.lambda_plus);
    assert!(
        (sol.period - g.period).abs() < 1e-8,
        "{} vs {}",
        sol.period,
        g.period
    );
    assert!(
        (sol.max_bx - g.max_bx).abs() < 1e-6,
        "{} vs {}",
        sol.max_bx,
        g.max_bx
    );
    let fl = floquet(&sol);
    assert!(fl.trivial_error < 1e-8);
}
