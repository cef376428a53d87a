use nalgebra::{Matrix3, SVector, Vector3};

use crate::integrate::{Control, Dop853, IntegrateError, Tolerances};
use crate::model::LmgField;

/// End point of the flow together with its first derivatives with respect
/// to the initial state, the flight time and `lambda_+`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowJet {
    pub end: Vector3<f64>,
    pub dx: Matrix3<f64>,
    pub dtau: Vector3<f64>,
    pub dlambda: Vector3<f64>,
}

/// Integrates the state, the fundamental matrix and the parameter
/// sensitivity over the signed time `tau`.
pub fn flow_jet(
    field: &LmgField,
    x0: &Vector3<f64>,
    tau: f64,
    tol: Tolerances,
) -> Result<FlowJet, IntegrateError> {
    let mut y0 = SVector::<f64, 15>::zeros();
    y0.fixed_rows_mut::<3>(0).copy_from(x0);
    for k in 0..3 {
        y0[3 + 4 * k] = 1.0;
    }
    let rhs = |_t: f64, y: &SVector<f64, 15>| {
        let x: Vector3<f64> = y.fixed_rows::<3>(0).into();
        let j = field.jacobian(&x);
        let phi = Matrix3::from_column_slice(&y.as_slice()[3..12]);
        let z: Vector3<f64> = y.fixed_rows::<3>(12).into();
        let mut d = SVector::<f64, 15>::zeros();
        d.fixed_rows_mut::<3>(0).copy_from(&field.eval(&x));
        d.fixed_rows_mut::<9>(3)
            .copy_from_slice((j * phi).as_slice());
        d.fixed_rows_mut::<3>(12)
            .copy_from(&(j * z + field.d_lambda_plus(&x)));
        d
    };
    let out = Dop853::new(tol)
        .without_dense()
        .solve(rhs, 0.0, y0, tau, |_| Control::Continue)?;
    let y = out.y;
    let end: Vector3<f64> = y.fixed_rows::<3>(0).into();
    Ok(FlowJet {
        end,
        dx: Matrix3::from_column_slice(&y.as_slice()[3..12]),
        dtau: field.eval(&end),
        dlambda: y.fixed_rows::<3>(12).into(),
    })
}

/// Flow map without derivatives.
pub fn flow(
    field: &LmgField,
    x0: &Vector3<f64>,
    tau: f64,
    tol: Tolerances,
) -> Result<Vector3<f64>, IntegrateError> {
    crate::integrate::flow_to(field, *x0, (0.0, tau), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    #[test]
    fn derivatives_match_finite_differences() {
        let p = ModelParams::transitional(1.533);
        let f = LmgField::new(&p);
        let tol = Tolerances::MANIFOLD;
        let x0 = Vector3::new(0.2, -0.1, -0.3);
        for tau in [3.0, -2.5] {
            let jet = flow_jet(&f, &x0, tau, tol).unwrap();
            assert!((jet.end - flow(&f, &x0, tau, tol).unwrap()).norm() < 1e-12);
            let h = 1e-6;
            for k in 0..3 {
                let mut e = Vector3::zeros();
                e[k] = h;
                let fd = (flow(&f, &(x0 + e), tau, tol).unwrap()
                    - flow(&f, &(x0 - e), tau, tol).unwrap())
                    / (2.0 * h);
                assert!((fd - jet.dx.column(k)).norm() < 1e-7);
            }
            let fp = LmgField::new(&p.with_lambda_plus(p.lambda_plus + h));
            let fm = LmgField::new(&p.with_lambda_plus(p.lambda_plus - h));
            let fd =
                (flow(&fp, &x0, tau, tol).unwrap() - flow(&fm, &x0, tau, tol).unwrap()) / (2.0 * h);
            assert!((fd - jet.dlambda).norm() < 1e-7);
            let fd = (flow(&f, &x0, tau + h, tol).unwrap() - flow(&f, &x0, tau - h, tol).unwrap())
                / (2.0 * h);
            assert!((fd - jet.dtau).norm() < 1e-7);
        }
    }
}
