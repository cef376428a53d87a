use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use serde::Serialize;

use super::cont::{tangent, ContinuationProblem};
use super::flow::{flow_jet, FlowJet};
use super::newton::{newton, NewtonOptions};
use super::segment::OrbitSegment;
use super::{BifurcationKind, BvpError, Diagnostics};
use crate::integrate::{simulate, EventSpec, Tolerances};
use crate::kneading::parity_matrix;
use crate::localbif::eigen_decomposition;
use crate::model::{LmgField, ModelParams, SpinState};

/// Periodic orbits by multiple shooting. Unknowns are the segment start
/// points, the period `T` and `lambda_+`. Symmetric orbits satisfy
/// `x(t + T/2) = R x(t)` with the parity `R` and are shot over half a period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicProblem {
    pub params: ModelParams,
    pub segments: usize,
    pub symmetric: bool,
    pub tol: Tolerances,
    /// Branches stop once the period exceeds this value.
    pub max_period: f64,
    /// Branches stop once the orbit shrinks below this size.
    pub min_size: f64,
    x_ref: Vector3<f64>,
    f_ref: Vector3<f64>,
}

impl PeriodicProblem {
    pub fn new(params: &ModelParams, segments: usize, symmetric: bool, u: &DVector<f64>) -> Self {
        let mut p = Self {
            params: *params,
            segments,
            symmetric,
            tol: Tolerances::MANIFOLD,
            max_period: 5000.0,
            min_size: 1e-6,
            x_ref: Vector3::zeros(),
            f_ref: Vector3::zeros(),
        };
        p.set_reference(u);
        p
    }

    fn set_reference(&mut self, u: &DVector<f64>) {
        let x0 = self.x(u, 0);
        self.x_ref = x0;
        self.f_ref = self.field(u).eval(&x0);
    }

    pub fn x(&self, u: &DVector<f64>, i: usize) -> Vector3<f64> {
        u.fixed_rows::<3>(3 * i).into()
    }

    pub fn period(&self, u: &DVector<f64>) -> f64 {
        u[3 * self.segments]
    }

    pub fn lambda(&self, u: &DVector<f64>) -> f64 {
        u[3 * self.segments + 1]
    }

    fn field(&self, u: &DVector<f64>) -> LmgField {
        LmgField::new(&self.params.with_lambda_plus(self.lambda(u)))
    }

    /// Fraction of the period covered by one shooting segment.
    fn fraction(&self) -> f64 {
        let m = self.segments as f64;
        if self.symmetric {
            0.5 / m
        } else {
            1.0 / m
        }
    }

    fn jets(&self, u: &DVector<f64>) -> Result<Vec<FlowJet>, BvpError> {
        let f = self.field(u);
        let tau = self.period(u) * self.fraction();
        (0..self.segments)
            .map(|i| Ok(flow_jet(&f, &self.x(u, i), tau, self.tol)?))
            .collect()
    }

    fn product(&self, jets: &[FlowJet]) -> Matrix3<f64> {
        let m = jets.iter().fold(Matrix3::identity(), |acc, j| j.dx * acc);
        if self.symmetric {
            parity_matrix() * m
        } else {
            m
        }
    }

    /// Monodromy matrix over the full period at the base point `x_0`.
    pub fn monodromy(&self, u: &DVector<f64>) -> Result<Matrix3<f64>, BvpError> {
        let h = self.product(&self.jets(u)?);
        Ok(if self.symmetric { h * h } else { h })
    }

    /// Linearization of the half-period map `x -> R phi_{T/2}(x)` of a
    /// symmetric orbit.
    pub fn half_map(&self, u: &DVector<f64>) -> Result<Option<Matrix3<f64>>, BvpError> {
        if !self.symmetric {
            return Ok(None);
        }
        Ok(Some(self.product(&self.jets(u)?)))
    }

    /// Mesh values over one full period, closed (`states[0] == states[last]`).
    pub fn full_states(&self, u: &DVector<f64>) -> Vec<Vector3<f64>> {
        let r = parity_matrix();
        let mut s: Vec<Vector3<f64>> = (0..self.segments).map(|i| self.x(u, i)).collect();
        if self.symmetric {
            let mirrored: Vec<_> = s.iter().map(|x| r * x).collect();
            s.extend(mirrored);
        }
        s.push(s[0]);
        s
    }

    pub fn solution(&self, u: &DVector<f64>) -> Result<PeriodicOrbitSolution, BvpError> {
        let states = self.full_states(u);
        let n = states.len() - 1;
        let period = self.period(u);
        let lp = self.lambda(u);
        let m = self.monodromy(u)?;
        let p = self.params.with_lambda_plus(lp);
        let tr = simulate(
            &p,
            &SpinState::from(states[0]),
            (0.0, period),
            Tolerances::SCAN,
            &[EventSpec::extremum(0)],
        )?;
        let max_bx = tr
            .events
            .iter()
            .map(|e| e.state[0])
            .chain(states.iter().map(|x| x[0]))
            .fold(f64::NEG_INFINITY, f64::max);
        let fl = floquet_from_monodromy(&m);
        Ok(PeriodicOrbitSolution {
            segment: OrbitSegment {
                mesh: (0..=n).map(|k| k as f64 / n as f64).collect(),
                states,
                time: period,
                lambda_plus: lp,
                boundary: Vec::new(),
            },
            period,
            lambda_plus: lp,
            stability: fl.stability(),
            multipliers: fl.multipliers.to_vec(),
            symmetric: self.symmetric,
            max_bx,
            monodromy: m,
        })
    }

    fn residual_rows(&self) -> usize {
        3 * self.segments + 1
    }

    /// Newton solve at fixed `lambda_+`.
    pub fn correct_at_fixed_lambda(
        &self,
        u: &mut DVector<f64>,
        opts: &NewtonOptions,
    ) -> Result<(), BvpError> {
        let lp = self.lambda(u);
        let n = u.len();
        newton(
            u,
            |v| {
                let (r, j) = self.residual(v)?;
                let rows = r.len();
                let r = r.insert_row(rows, v[n - 1] - lp);
                let mut j = j.insert_row(rows, 0.0);
                j[(rows, n - 1)] = 1.0;
                Ok((r, j))
            },
            opts,
        )?;
        Ok(())
    }
}

impl ContinuationProblem for PeriodicProblem {
    fn dim(&self) -> usize {
        3 * self.segments + 2
    }

    fn residual(&self, u: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), BvpError> {
        let m = self.segments;
        let n = self.dim();
        let frac = self.fraction();
        let jets = self.jets(u)?;
        let rp = parity_matrix();
        let mut r = DVector::zeros(self.residual_rows());
        let mut j = DMatrix::zeros(self.residual_rows(), n);
        for (i, jet) in jets.iter().enumerate() {
            let (next, map) = if i + 1 < m {
                (i + 1, Matrix3::identity())
            } else if self.symmetric {
                (0, rp)
            } else {
                (0, Matrix3::identity())
            };
            let target = map * self.x(u, next);
            r.fixed_rows_mut::<3>(3 * i).copy_from(&(jet.end - target));
            let mut block = j.fixed_view_mut::<3, 3>(3 * i, 3 * i);
            block += jet.dx;
            let mut block = j.fixed_view_mut::<3, 3>(3 * i, 3 * next);
            block -= map;
            j.fixed_view_mut::<3, 1>(3 * i, n - 2)
                .copy_from(&(jet.dtau * frac));
            j.fixed_view_mut::<3, 1>(3 * i, n - 1)
                .copy_from(&jet.dlambda);
        }
        let row = 3 * m;
        r[row] = (self.x(u, 0) - self.x_ref).dot(&self.f_ref);
        for k in 0..3 {
            j[(row, k)] = self.f_ref[k];
        }
        Ok((r, j))
    }

    fn accept(&mut self, u: &DVector<f64>) {
        self.set_reference(u);
    }

    fn test_kinds(&self) -> Vec<BifurcationKind> {
        if self.symmetric {
            vec![BifurcationKind::FoldPo, BifurcationKind::PitchforkPo]
        } else {
            vec![BifurcationKind::FoldPo, BifurcationKind::PeriodDoubling]
        }
    }

    fn test_functions(&self, u: &DVector<f64>, t: &DVector<f64>) -> Result<Vec<f64>, BvpError> {
        // det(H + I) without the trivial factor, which is noisy once the
        // unstable multiplier is large.
        let h = self.product(&self.jets(u)?);
        let (vals, _) = eigen_decomposition(&h);
        let trivial = (0..3)
            .min_by(|&a, &b| (vals[a] - 1.0).norm().total_cmp(&(vals[b] - 1.0).norm()))
            .unwrap_or(0);
        let second = (0..3)
            .filter(|&i| i != trivial)
            .fold(Complex64::new(1.0, 0.0), |acc, i| acc * (vals[i] + 1.0));
        Ok(vec![t[self.dim() - 1], second.re])
    }

    fn diagnose(
        &self,
        kind: BifurcationKind,
        u: &DVector<f64>,
        _t: &DVector<f64>,
    ) -> Option<Diagnostics> {
        let fl = floquet_from_monodromy(&self.monodromy(u).ok()?);
        let nontrivial: Vec<Complex64> = fl
            .multipliers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fl.trivial_index)
            .map(|(_, z)| *z)
            .collect();
        let closest = |target: f64| {
            nontrivial
                .iter()
                .copied()
                .min_by(|a, b| (a - target).norm().total_cmp(&(b - target).norm()))
        };
        let (critical, note) = match kind {
            BifurcationKind::FoldPo => (closest(1.0), "limit point of cycles"),
            BifurcationKind::PitchforkPo => {
                // The half-period map has the critical eigenvalue -1; its
                // square is the full-period multiplier.
                let h = self.product(&self.jets(u).ok()?);
                let (vals, _) = eigen_decomposition(&h);
                let z = vals
                    .iter()
                    .copied()
                    .min_by(|a, b| (a + 1.0).norm().total_cmp(&(b + 1.0).norm()))?;
                (Some(z * z), "symmetry-breaking branch point")
            }
            BifurcationKind::PeriodDoubling => {
                let z = closest(-1.0)?;
                // Sign changes of the test function caused by round-off in a
                // strongly unstable monodromy are not bifurcations.
                if z.im.abs() > 1e-6 || (z + 1.0).norm() > 1e-3 {
                    return None;
                }
                (Some(z), "period doubling")
            }
            _ => return None,
        };
        Some(Diagnostics {
            spectrum: fl.multipliers.to_vec(),
            critical,
            note: format!("{note}; period {}", self.period(u)),
        })
    }

    fn stop(&self, u: &DVector<f64>) -> Option<String> {
        let t = self.period(u);
        if t > self.max_period {
            return Some(format!("period {t} exceeds {}", self.max_period));
        }
        let x0 = self.x(u, 0);
        let size = (0..self.segments)
            .map(|i| (self.x(u, i) - x0).norm())
            .fold(0.0, f64::max);
        if !self.symmetric && size < self.min_size {
            return Some(format!("orbit shrank to size {size:e}"));
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OrbitStability {
    Stable,
    Unstable { unstable: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicOrbitSolution {
    pub segment: OrbitSegment,
    pub period: f64,
    pub lambda_plus: f64,
    #[serde(skip)]
    pub multipliers: Vec<Complex64>,
    pub stability: OrbitStability,
    /// True for orbits invariant under the parity with a half-period shift.
    pub symmetric: bool,
    pub max_bx: f64,
    #[serde(skip)]
    pub monodromy: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Floquet {
    /// Sorted by decreasing modulus.
    pub multipliers: [Complex64; 3],
    pub trivial_index: usize,
    /// `|mu_trivial - 1|`.
    pub trivial_error: f64,
    /// Real stable eigenvector at the base point, unit length.
    pub stable_bundle: Option<Vector3<f64>>,
    /// Two multipliers closer than 1e-8.
    pub degenerate: bool,
}

impl Floquet {
    pub fn stability(&self) -> OrbitStability {
        let unstable = self
            .multipliers
            .iter()
            .enumerate()
            .filter(|(i, z)| *i != self.trivial_index && z.norm() > 1.0)
            .count();
        if unstable == 0 {
            OrbitStability::Stable
        } else {
            OrbitStability::Unstable { unstable }
        }
    }
}

fn floquet_from_monodromy(m: &Matrix3<f64>) -> Floquet {
    let (vals, vecs) = eigen_decomposition(m);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| vals[b].norm().total_cmp(&vals[a].norm()));
    let multipliers = idx.map(|i| vals[i]);
    let vectors = idx.map(|i| vecs[i]);
    let trivial_index = (0..3)
        .min_by(|&a, &b| {
            (multipliers[a] - 1.0)
                .norm()
                .total_cmp(&(multipliers[b] - 1.0).norm())
        })
        .unwrap_or(0);
    let stable_bundle = (0..3)
        .filter(|&i| i != trivial_index)
        .filter(|&i| multipliers[i].norm() < 1.0 && multipliers[i].im.abs() < 1e-12)
        .last()
        .map(|i| {
            let v = vectors[i].map(|z| z.re);
            v / v.norm()
        });
    let mut degenerate = false;
    for a in 0..3 {
        for b in a + 1..3 {
            degenerate |= (multipliers[a] - multipliers[b]).norm() < 1e-8;
        }
    }
    Floquet {
        multipliers,
        trivial_index,
        trivial_error: (multipliers[trivial_index] - 1.0).norm(),
        stable_bundle,
        degenerate,
    }
}

/// Floquet multipliers and stable bundle at the base point of a solution.
pub fn floquet(po: &PeriodicOrbitSolution) -> Floquet {
    floquet_from_monodromy(&po.monodromy)
}

fn pack(states: &[Vector3<f64>], period: f64, lambda: f64) -> DVector<f64> {
    let m = states.len();
    let mut u = DVector::zeros(3 * m + 2);
    for (i, x) in states.iter().enumerate() {
        u.fixed_rows_mut::<3>(3 * i).copy_from(x);
    }
    u[3 * m] = period;
    u[3 * m + 1] = lambda;
    u
}

/// Converges a periodic orbit from the attractor reached by forward
/// integration from `x_start`. For `symmetric` orbits the half-period
/// return `x(t + T/2) = R x(t)` must be observed.
pub fn orbit_from_simulation(
    p: &ModelParams,
    x_start: Vector3<f64>,
    transient: f64,
    symmetric: bool,
    segments: usize,
) -> Result<(PeriodicProblem, DVector<f64>), BvpError> {
    let tol = Tolerances::MANIFOLD;
    let x1 = crate::integrate::flow_to(&LmgField::new(p), x_start, (0.0, transient), tol)?;
    let window = 4000.0;
    let tr = simulate(
        p,
        &SpinState::from(x1),
        (0.0, window),
        tol,
        &[EventSpec::extremum(0)],
    )?;
    let maxima: Vec<_> = tr.events.iter().filter(|e| !e.rising).collect();
    let first = maxima
        .first()
        .ok_or_else(|| BvpError::NoOrbit("no oscillation after the transient".into()))?;
    let r = parity_matrix();
    let close = 1e-4;
    let ret = if symmetric {
        tr.events
            .iter()
            .filter(|e| e.t > first.t && e.rising)
            .find(|e| (e.state - r * first.state).norm() < close)
            .map(|e| 2.0 * (e.t - first.t))
    } else {
        maxima
            .iter()
            .skip(1)
            .find(|e| (e.state - first.state).norm() < close)
            .map(|e| e.t - first.t)
    };
    let period =
        ret.ok_or_else(|| BvpError::NoOrbit("no return of the extremum sequence".into()))?;
    let frac = if symmetric { 0.5 } else { 1.0 } / segments as f64;
    let states: Vec<_> = (0..segments)
        .map(|i| tr.eval(first.t + period * frac * i as f64))
        .collect();
    let mut u = pack(&states, period, p.lambda_plus);
    let problem = PeriodicProblem::new(p, segments, symmetric, &u);
    problem.correct_at_fixed_lambda(&mut u, &NewtonOptions::default())?;
    Ok((problem, u))
}

/// Small periodic orbit near a Hopf point of the equilibrium `x_eq` at
/// `p.lambda_plus`; the amplitude along the critical eigenvector is fixed
/// while `lambda_+` is solved for.
pub fn orbit_from_hopf(
    p: &ModelParams,
    x_eq: Vector3<f64>,
    amplitude: f64,
    segments: usize,
) -> Result<(PeriodicProblem, DVector<f64>), BvpError> {
    let f = LmgField::new(p);
    let (vals, vecs) = eigen_decomposition(&f.jacobian(&x_eq));
    let k = (0..3)
        .filter(|&i| vals[i].im > 0.0)
        .min_by(|&a, &b| vals[a].re.abs().total_cmp(&vals[b].re.abs()))
        .ok_or_else(|| BvpError::NoOrbit("no complex pair at the Hopf point".into()))?;
    let omega = vals[k].im;
    let v = vecs[k];
    let period = 2.0 * std::f64::consts::PI / omega;
    let states: Vec<_> = (0..segments)
        .map(|i| {
            let ph = Complex64::from_polar(1.0, omega * period * i as f64 / segments as f64);
            x_eq + v.map(|z| (z * ph).re) * amplitude
        })
        .collect();
    let mut u = pack(&states, period, p.lambda_plus);
    let problem = PeriodicProblem::new(p, segments, false, &u);
    let dir = v.map(|z| z.re);
    newton(
        &mut u,
        |w| {
            let (r, j) = problem.residual(w)?;
            let rows = r.len();
            let x0: Vector3<f64> = w.fixed_rows::<3>(0).into();
            let r = r.insert_row(rows, (x0 - x_eq).dot(&dir) - amplitude * dir.norm_squared());
            let mut j = j.insert_row(rows, 0.0);
            for c in 0..3 {
                j[(rows, c)] = dir[c];
            }
            Ok((r, j))
        },
        &NewtonOptions::default(),
    )?;
    let mut problem = problem;
    problem.accept(&u);
    Ok((problem, u))
}

/// Direction of the new branch at a branch point: the null vector of the
/// Jacobian orthogonal to the known tangent.
fn new_direction(
    problem: &PeriodicProblem,
    u: &DVector<f64>,
    known: &DVector<f64>,
) -> Result<DVector<f64>, BvpError> {
    let (_, j) = problem.residual(u)?;
    let n = j.ncols();
    let square = j.insert_row(n - 1, 0.0);
    let svd = square.svd(false, true);
    let vt = svd.v_t.ok_or(BvpError::SingularJacobian)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let k0 = known.normalize();
    let mut best: Option<DVector<f64>> = None;
    for &i in order.iter().take(2) {
        let v: DVector<f64> = vt.row(i).transpose();
        let w = &v - &k0 * k0.dot(&v);
        if best.as_ref().map_or(true, |b| w.norm() > b.norm()) {
            best = Some(w);
        }
    }
    let w = best.ok_or(BvpError::SingularJacobian)?;
    Ok(w.normalize())
}

fn branch_start(
    problem: &PeriodicProblem,
    u_bp: &DVector<f64>,
    dir: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>, BvpError> {
    let pred = u_bp + dir * h;
    let mut v = pred.clone();
    let n = v.len();
    newton(
        &mut v,
        |w| {
            let (r, j) = problem.residual(w)?;
            let r = r.insert_row(n - 1, dir.dot(&(w - &pred)));
            let mut j = j.insert_row(n - 1, 0.0);
            j.row_mut(n - 1).copy_from(&dir.transpose());
            Ok((r, j))
        },
        &NewtonOptions::default(),
    )?;
    Ok(v)
}

/// Starts the asymmetric branch at a symmetry-breaking point `u_bp` of a
/// symmetric branch. Returns the full-period problem, the first point of
/// the new branch and its initial direction.
pub fn switch_at_symmetry_breaking(
    sym: &PeriodicProblem,
    u_bp: &DVector<f64>,
    h: f64,
) -> Result<(PeriodicProblem, DVector<f64>, DVector<f64>), BvpError> {
    assert!(sym.symmetric, "branch switching needs a symmetric orbit");
    let m = sym.segments;
    let r = parity_matrix();
    let mut e_lambda = DVector::zeros(u_bp.len());
    e_lambda[u_bp.len() - 1] = 1.0;
    let t_sym = tangent(sym, u_bp, &e_lambda)?;
    let embed = |v: &DVector<f64>| {
        let xs: Vec<Vector3<f64>> = (0..m)
            .map(|i| v.fixed_rows::<3>(3 * i).into())
            .chain((0..m).map(|i| r * Vector3::from(v.fixed_rows::<3>(3 * i))))
            .collect();
        pack(&xs, v[3 * m], v[3 * m + 1])
    };
    let u_full = embed(u_bp);
    let t_full = embed(&t_sym);
    let full = PeriodicProblem {
        tol: sym.tol,
        max_period: sym.max_period,
        ..PeriodicProblem::new(&sym.params, 2 * m, false, &u_full)
    };
    let dir = new_direction(&full, &u_full, &t_full)?;
    let start = branch_start(&full, &u_full, &dir, h)?;
    Ok((full, start, dir))
}

/// Starts the period-doubled branch at a period-doubling point `u_pd` of an
/// asymmetric branch.
pub fn switch_at_period_doubling(
    base: &PeriodicProblem,
    u_pd: &DVector<f64>,
    h: f64,
) -> Result<(PeriodicProblem, DVector<f64>, DVector<f64>), BvpError> {
    assert!(
        !base.symmetric,
        "period doubling is handled on full-period orbits"
    );
    let m = base.segments;
    let mut e_lambda = DVector::zeros(u_pd.len());
    e_lambda[u_pd.len() - 1] = 1.0;
    let t0 = tangent(base, u_pd, &e_lambda)?;
    let double = |v: &DVector<f64>| {
        let xs: Vec<Vector3<f64>> = (0..2 * m)
            .map(|i| v.fixed_rows::<3>(3 * (i % m)).into())
            .collect();
        pack(&xs, 2.0 * v[3 * m], v[3 * m + 1])
    };
    let u2 = double(u_pd);
    let t2 = double(&t0);
    let dbl = PeriodicProblem {
        tol: base.tol,
        max_period: base.max_period,
        ..PeriodicProblem::new(&base.params, 2 * m, false, &u2)
    };
    let dir = new_direction(&dbl, &u2, &t2)?;
    let start = branch_start(&dbl, &u2, &dir, h)?;
    Ok((dbl, start, dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localbif::po_geometry;

    #[test]
    fn resonant_orbit_matches_closed_form() {
        let p = ModelParams::resonant(0.5, 1.0, 0.01);
        let (problem, u) =
            orbit_from_simulation(&p, Vector3::new(0.01, 0.0, -0.49), 3000.0, false, 8).unwrap();
        let sol = problem.solution(&u).unwrap();
        let g = po_geometry(&p).unwrap();
        assert!((sol.period - g.period).abs() < 1e-8);
        assert!((sol.max_bx - g.max_bx).abs() < 1e-6);
        let fl = floquet(&sol);
        assert!(fl.trivial_error < 1e-8);
        assert_eq!(sol.stability, OrbitStability::Stable);
        let (r, _) = problem.residual(&u).unwrap();
        assert!(r.amax() < 1e-10);
    }
}
