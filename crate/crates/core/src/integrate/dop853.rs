//! Explicit Runge-Kutta method of order 8(5,3) by Dormand and Prince with the
//! seventh-order continuous extension of Hairer, Norsett and Wanner.

use nalgebra::{SMatrix, SVector};

use super::{IntegrateError, Tolerances};

/// Accepted step together with its interpolation data.
#[derive(Debug, Clone)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub h: f64,
    pub y0: SVector<f64, N>,
    pub y1: SVector<f64, N>,
    pub f0: SVector<f64, N>,
    pub f1: SVector<f64, N>,
    cont: Option<[SVector<f64, N>; 8]>,
}

impl<const N: usize> Step<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn has_dense(&self) -> bool {
        self.cont.is_some()
    }

    fn cont(&self) -> &[SVector<f64, N>; 8] {
        self.cont
            .as_ref()
            .expect("dense output was not requested for this integration")
    }

    /// Image of the step under the linear map `m`. Exact for the interpolant
    /// because it is linear in its coefficients.
    pub fn map_linear(&self, m: &SMatrix<f64, N, N>) -> Step<N> {
        Step {
            t0: self.t0,
            h: self.h,
            y0: m * self.y0,
            y1: m * self.y1,
            f0: m * self.f0,
            f1: m * self.f1,
            cont: self.cont.map(|c| c.map(|v| m * v)),
        }
    }

    /// State at time `t` inside the step.
    pub fn eval(&self, t: f64) -> SVector<f64, N> {
        let c = self.cont();
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let conpar = c[4] + (c[5] + (c[6] + c[7] * s) * s1) * s;
        c[0] + (c[1] + (c[2] + (c[3] + conpar * s1) * s) * s1) * s
    }

    /// Time derivative of the interpolating polynomial at `t`.
    pub fn eval_derivative(&self, t: f64) -> SVector<f64, N> {
        let c = self.cont();
        let u = (t - self.t0) / self.h;
        let v = 1.0 - u;
        // y = c0 + u A, A = c1 + v B, B = c2 + u C, C = c3 + v P,
        // P = c4 + u Q, Q = c5 + v R, R = c6 + u c7
        let r = c[6] + c[7] * u;
        let q = c[5] + r * v;
        let p = c[4] + q * u;
        let cc = c[3] + p * v;
        let b = c[2] + cc * u;
        let a = c[1] + b * v;
        let dr = c[7];
        let dq = -r + dr * v;
        let dp = q + dq * u;
        let dcc = -p + dp * v;
        let db = cc + dcc * u;
        let da = -b + db * v;
        (a + da * u) / self.h
    }
}

/// What the driver should do after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dop853 {
    pub tol: Tolerances,
    /// Largest allowed step magnitude.
    pub h_max: f64,
    /// Optional first step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub max_steps: usize,
    /// Steps below this magnitude abort the integration.
    pub h_min: f64,
    /// Compute the continuous extension (three extra evaluations per step).
    pub dense: bool,
}

impl Default for Dop853 {
    fn default() -> Self {
        Self::new(Tolerances::MANIFOLD)
    }
}

#[derive(Debug, Clone)]
pub struct Outcome<const N: usize> {
    pub t: f64,
    pub y: SVector<f64, N>,
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// True when the observer requested an early stop.
    pub stopped: bool,
}

impl Dop853 {
    pub fn new(tol: Tolerances) -> Self {
        Self {
            tol,
            h_max: f64::INFINITY,
            h_init: None,
            max_steps: 5_000_000,
            h_min: 1e-12,
            dense: true,
        }
    }

    pub fn without_dense(mut self) -> Self {
        self.dense = false;
        self
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    /// Integrates from `t0` to `t_end` (either direction), calling `observer`
    /// after each accepted step.
    pub fn solve<const N: usize, F, O>(
        &self,
        mut f: F,
        t0: f64,
        y0: SVector<f64, N>,
        t_end: f64,
        mut observer: O,
    ) -> Result<Outcome<N>, IntegrateError>
    where
        F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
        O: FnMut(&Step<N>) -> Control,
    {
        let rtol = self.tol.rtol;
        let atol = self.tol.atol;
        let posneg = if t_end >= t0 { 1.0 } else { -1.0 };
        let h_max = self.h_max.min((t_end - t0).abs()).max(f64::MIN_POSITIVE);

        let mut t = t0;
        let mut y = y0;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(IntegrateError::NonFinite { t });
        }
        let mut k1 = f(t, &y);
        let mut evaluations = 1usize;
        if t == t_end {
            return Ok(Outcome {
                t,
                y,
                accepted: 0,
                rejected: 0,
                evaluations,
                stopped: false,
            });
        }

        let mut h = match self.h_init {
            Some(h) => h.abs().min(h_max) * posneg,
            None => {
                evaluations += 1;
                initial_step(&mut f, t, &y, &k1, posneg, h_max, rtol, atol)
            }
        };

        let mut last_rejected = false;
        let mut accepted = 0usize;
        let mut rejected = 0usize;
        let mut last = false;

        loop {
            if accepted + rejected >= self.max_steps {
                return Err(IntegrateError::MaxSteps { t });
            }
            if h.abs() < self.h_min && !last {
                return Err(IntegrateError::StepSizeCollapse { t, h: h.abs() });
            }
            if (t + 1.01 * h - t_end) * posneg > 0.0 {
                h = t_end - t;
                last = true;
            }

            let k2 = f(t + C2 * h, &(y + k1 * (A21 * h)));
            let k3 = f(t + C3 * h, &(y + (k1 * A31 + k2 * A32) * h));
            let k4 = f(t + C4 * h, &(y + (k1 * A41 + k3 * A43) * h));
            let k5 = f(t + C5 * h, &(y + (k1 * A51 + k3 * A53 + k4 * A54) * h));
            let k6 = f(t + C6 * h, &(y + (k1 * A61 + k4 * A64 + k5 * A65) * h));
            let k7 = f(
                t + C7 * h,
                &(y + (k1 * A71 + k4 * A74 + k5 * A75 + k6 * A76) * h),
            );
            let k8 = f(
                t + C8 * h,
                &(y + (k1 * A81 + k4 * A84 + k5 * A85 + k6 * A86 + k7 * A87) * h),
            );
            let k9 = f(
                t + C9 * h,
                &(y + (k1 * A91 + k4 * A94 + k5 * A95 + k6 * A96 + k7 * A97 + k8 * A98) * h),
            );
            let k10 = f(
                t + C10 * h,
                &(y + (k1 * A101
                    + k4 * A104
                    + k5 * A105
                    + k6 * A106
                    + k7 * A107
                    + k8 * A108
                    + k9 * A109)
                    * h),
            );
            let k11 = f(
                t + C11 * h,
                &(y + (k1 * A111
                    + k4 * A114
                    + k5 * A115
                    + k6 * A116
                    + k7 * A117
                    + k8 * A118
                    + k9 * A119
                    + k10 * A1110)
                    * h),
            );
            let t_new = t + h;
            let yy1 = y
                + (k1 * A121
                    + k4 * A124
                    + k5 * A125
                    + k6 * A126
                    + k7 * A127
                    + k8 * A128
                    + k9 * A129
                    + k10 * A1210
                    + k11 * A1211)
                    * h;
            let k12 = f(t_new, &yy1);
            evaluations += 11;
            let incr =
                k1 * B1 + k6 * B6 + k7 * B7 + k8 * B8 + k9 * B9 + k10 * B10 + k11 * B11 + k12 * B12;
            let y_new = y + incr * h;

            let mut err = 0.0;
            let mut err2 = 0.0;
            for i in 0..N {
                let sk = atol + rtol * y[i].abs().max(y_new[i].abs());
                let e2 = incr[i] - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k12[i];
                err2 += (e2 / sk).powi(2);
                let e = ER1 * k1[i]
                    + ER6 * k6[i]
                    + ER7 * k7[i]
                    + ER8 * k8[i]
                    + ER9 * k9[i]
                    + ER10 * k10[i]
                    + ER11 * k11[i]
                    + ER12 * k12[i];
                err += (e / sk).powi(2);
            }
            let mut deno = err + 0.01 * err2;
            if deno <= 0.0 {
                deno = 1.0;
            }
            let err = h.abs() * err * (1.0 / (deno * N as f64)).sqrt();
            if !err.is_finite() {
                // Overflow in a trial stage; retry with a much smaller step.
                rejected += 1;
                h *= 0.1;
                last = false;
                last_rejected = true;
                continue;
            }

            let fac11 = err.powf(0.125);
            let fac = (fac11 / 0.9).clamp(1.0 / 6.0, 1.0 / 0.333);
            let mut h_new = h / fac;

            if err <= 1.0 {
                accepted += 1;
                let k_new = f(t_new, &y_new);
                evaluations += 1;
                if !y_new.iter().all(|v| v.is_finite()) {
                    return Err(IntegrateError::NonFinite { t: t_new });
                }

                let cont = if self.dense {
                    let ydiff = y_new - y;
                    let bspl = k1 * h - ydiff;
                    let mut c = [SVector::<f64, N>::zeros(); 8];
                    c[0] = y;
                    c[1] = ydiff;
                    c[2] = bspl;
                    c[3] = ydiff - k_new * h - bspl;
                    c[4] = k1 * D41
                        + k6 * D46
                        + k7 * D47
                        + k8 * D48
                        + k9 * D49
                        + k10 * D410
                        + k11 * D411
                        + k12 * D412;
                    c[5] = k1 * D51
                        + k6 * D56
                        + k7 * D57
                        + k8 * D58
                        + k9 * D59
                        + k10 * D510
                        + k11 * D511
                        + k12 * D512;
                    c[6] = k1 * D61
                        + k6 * D66
                        + k7 * D67
                        + k8 * D68
                        + k9 * D69
                        + k10 * D610
                        + k11 * D611
                        + k12 * D612;
                    c[7] = k1 * D71
                        + k6 * D76
                        + k7 * D77
                        + k8 * D78
                        + k9 * D79
                        + k10 * D710
                        + k11 * D711
                        + k12 * D712;
                    let k14 = f(
                        t + C14 * h,
                        &(y + (k1 * A141
                            + k7 * A147
                            + k8 * A148
                            + k9 * A149
                            + k10 * A1410
                            + k11 * A1411
                            + k12 * A1412
                            + k_new * A1413)
                            * h),
                    );
                    let k15 = f(
                        t + C15 * h,
                        &(y + (k1 * A151
                            + k6 * A156
                            + k7 * A157
                            + k8 * A158
                            + k11 * A1511
                            + k12 * A1512
                            + k_new * A1513
                            + k14 * A1514)
                            * h),
                    );
                    let k16 = f(
                        t + C16 * h,
                        &(y + (k1 * A161
                            + k6 * A166
                            + k7 * A167
                            + k8 * A168
                            + k9 * A169
                            + k_new * A1613
                            + k14 * A1614
                            + k15 * A1615)
                            * h),
                    );
                    evaluations += 3;
                    c[4] = (c[4] + k_new * D413 + k14 * D414 + k15 * D415 + k16 * D416) * h;
                    c[5] = (c[5] + k_new * D513 + k14 * D514 + k15 * D515 + k16 * D516) * h;
                    c[6] = (c[6] + k_new * D613 + k14 * D614 + k15 * D615 + k16 * D616) * h;
                    c[7] = (c[7] + k_new * D713 + k14 * D714 + k15 * D715 + k16 * D716) * h;
                    Some(c)
                } else {
                    None
                };

                let step = Step {
                    t0: t,
                    h,
                    y0: y,
                    y1: y_new,
                    f0: k1,
                    f1: k_new,
                    cont,
                };
                k1 = k_new;
                y = y_new;
                t = t_new;

                if observer(&step) == Control::Stop {
                    return Ok(Outcome {
                        t,
                        y,
                        accepted,
                        rejected,
                        evaluations,
                        stopped: true,
                    });
                }
                if last {
                    return Ok(Outcome {
                        t,
                        y,
                        accepted,
                        rejected,
                        evaluations,
                        stopped: false,
                    });
                }
                if h_new.abs() > h_max {
                    h_new = posneg * h_max;
                }
                if last_rejected {
                    h_new = posneg * h_new.abs().min(h.abs());
                }
                last_rejected = false;
            } else {
                h_new = h / (1.0 / 0.333f64).min(fac11 / 0.9);
                rejected += 1;
                last_rejected = true;
                last = false;
            }
            h = h_new;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn initial_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &SVector<f64, N>,
    f0: &SVector<f64, N>,
    posneg: f64,
    h_max: f64,
    rtol: f64,
    atol: f64,
) -> f64
where
    F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    let sk = y.map(|v| atol + rtol * v.abs());
    let dnf = f0.component_div(&sk).norm_squared();
    let dny = y.component_div(&sk).norm_squared();
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(h_max) * posneg;
    let f1 = f(t + h, &(y + f0 * h));
    let der2 = (f1 - f0).component_div(&sk).norm() / h.abs();
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h.abs() * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(1.0 / 8.0)
    };
    (100.0 * h.abs()).min(h1).min(h_max) * posneg
}

const C2: f64 = 0.526001519587677318785587544488E-01;
const C3: f64 = 0.789002279381515978178381316732E-01;
const C4: f64 = 0.118350341907227396726757197510E+00;
const C5: f64 = 0.281649658092772603273242802490E+00;
const C6: f64 = 0.333333333333333333333333333333E+00;
const C7: f64 = 0.25E+00;
const C8: f64 = 0.307692307692307692307692307692E+00;
const C9: f64 = 0.651282051282051282051282051282E+00;
const C10: f64 = 0.6E+00;
const C11: f64 = 0.857142857142857142857142857142E+00;
const C14: f64 = 0.1E+00;
const C15: f64 = 0.2E+00;
const C16: f64 = 0.777777777777777777777777777778E+00;

const A21: f64 = 5.26001519587677318785587544488E-2;
const A31: f64 = 1.97250569845378994544595329183E-2;
const A32: f64 = 5.91751709536136983633785987549E-2;
const A41: f64 = 2.95875854768068491816892993775E-2;
const A43: f64 = 8.87627564304205475450678981324E-2;
const A51: f64 = 2.41365134159266685502369798665E-1;
const A53: f64 = -8.84549479328286085344864962717E-1;
const A54: f64 = 9.24834003261792003115737966543E-1;
const A61: f64 = 3.7037037037037037037037037037E-2;
const A64: f64 = 1.70828608729473871279604482173E-1;
const A65: f64 = 1.25467687566822425016691814123E-1;
const A71: f64 = 3.7109375E-2;
const A74: f64 = 1.70252211019544039314978060272E-1;
const A75: f64 = 6.02165389804559606850219397283E-2;
const A76: f64 = -1.7578125E-2;
const A81: f64 = 3.70920001185047927108779319836E-2;
const A84: f64 = 1.70383925712239993810214054705E-1;
const A85: f64 = 1.07262030446373284651809199168E-1;
const A86: f64 = -1.53194377486244017527936158236E-2;
const A87: f64 = 8.27378916381402288758473766002E-3;
const A91: f64 = 6.24110958716075717114429577812E-1;
const A94: f64 = -3.36089262944694129406857109825E0;
const A95: f64 = -8.68219346841726006818189891453E-1;
const A96: f64 = 2.75920996994467083049415600797E1;
const A97: f64 = 2.01540675504778934086186788979E1;
const A98: f64 = -4.34898841810699588477366255144E1;
const A101: f64 = 4.77662536438264365890433908527E-1;
const A104: f64 = -2.48811461997166764192642586468E0;
const A105: f64 = -5.90290826836842996371446475743E-1;
const A106: f64 = 2.12300514481811942347288949897E1;
const A107: f64 = 1.52792336328824235832596922938E1;
const A108: f64 = -3.32882109689848629194453265587E1;
const A109: f64 = -2.03312017085086261358222928593E-2;
const A111: f64 = -9.3714243008598732571704021658E-1;
const A114: f64 = 5.18637242884406370830023853209E0;
const A115: f64 = 1.09143734899672957818500254654E0;
const A116: f64 = -8.14978701074692612513997267357E0;
const A117: f64 = -1.85200656599969598641566180701E1;
const A118: f64 = 2.27394870993505042818970056734E1;
const A119: f64 = 2.49360555267965238987089396762E0;
const A1110: f64 = -3.0467644718982195003823669022E0;
const A121: f64 = 2.27331014751653820792359768449E0;
const A124: f64 = -1.05344954667372501984066689879E1;
const A125: f64 = -2.00087205822486249909675718444E0;
const A126: f64 = -1.79589318631187989172765950534E1;
const A127: f64 = 2.79488845294199600508499808837E1;
const A128: f64 = -2.85899827713502369474065508674E0;
const A129: f64 = -8.87285693353062954433549289258E0;
const A1210: f64 = 1.23605671757943030647266201528E1;
const A1211: f64 = 6.43392746015763530355970484046E-1;
const A141: f64 = 5.61675022830479523392909219681E-2;
const A147: f64 = 2.53500210216624811088794765333E-1;
const A148: f64 = -2.46239037470802489917441475441E-1;
const A149: f64 = -1.24191423263816360469010140626E-1;
const A1410: f64 = 1.5329179827876569731206322685E-1;
const A1411: f64 = 8.20105229563468988491666602057E-3;
const A1412: f64 = 7.56789766054569976138603589584E-3;
const A1413: f64 = -8.298E-3;
const A151: f64 = 3.18346481635021405060768473261E-2;
const A156: f64 = 2.83009096723667755288322961402E-2;
const A157: f64 = 5.35419883074385676223797384372E-2;
const A158: f64 = -5.49237485713909884646569340306E-2;
const A1511: f64 = -1.08347328697249322858509316994E-4;
const A1512: f64 = 3.82571090835658412954920192323E-4;
const A1513: f64 = -3.40465008687404560802977114492E-4;
const A1514: f64 = 1.41312443674632500278074618366E-1;
const A161: f64 = -4.28896301583791923408573538692E-1;
const A166: f64 = -4.69762141536116384314449447206E0;
const A167: f64 = 7.68342119606259904184240953878E0;
const A168: f64 = 4.06898981839711007970213554331E0;
const A169: f64 = 3.56727187455281109270669543021E-1;
const A1613: f64 = -1.39902416515901462129418009734E-3;
const A1614: f64 = 2.9475147891527723389556272149E0;
const A1615: f64 = -9.15095847217987001081870187138E0;

const B1: f64 = 5.42937341165687622380535766363E-2;
const B6: f64 = 4.45031289275240888144113950566E0;
const B7: f64 = 1.89151789931450038304281599044E0;
const B8: f64 = -5.8012039600105847814672114227E0;
const B9: f64 = 3.1116436695781989440891606237E-1;
const B10: f64 = -1.52160949662516078556178806805E-1;
const B11: f64 = 2.01365400804030348374776537501E-1;
const B12: f64 = 4.47106157277725905176885569043E-2;

const BHH1: f64 = 0.244094488188976377952755905512E+00;
const BHH2: f64 = 0.733846688281611857341361741547E+00;
const BHH3: f64 = 0.220588235294117647058823529412E-01;

const ER1: f64 = 0.1312004499419488073250102996E-01;
const ER6: f64 = -0.1225156446376204440720569753E+01;
const ER7: f64 = -0.4957589496572501915214079952E+00;
const ER8: f64 = 0.1664377182454986536961530415E+01;
const ER9: f64 = -0.3503288487499736816886487290E+00;
const ER10: f64 = 0.3341791187130174790297318841E+00;
const ER11: f64 = 0.8192320648511571246570742613E-01;
const ER12: f64 = -0.2235530786388629525884427845E-01;

const D41: f64 = -0.84289382761090128651353491142E+01;
const D46: f64 = 0.56671495351937776962531783590E+00;
const D47: f64 = -0.30689499459498916912797304727E+01;
const D48: f64 = 0.23846676565120698287728149680E+01;
const D49: f64 = 0.21170345824450282767155149946E+01;
const D410: f64 = -0.87139158377797299206789907490E+00;
const D411: f64 = 0.22404374302607882758541771650E+01;
const D412: f64 = 0.63157877876946881815570249290E+00;
const D413: f64 = -0.88990336451333310820698117400E-01;
const D414: f64 = 0.18148505520854727256656404962E+02;
const D415: f64 = -0.91946323924783554000451984436E+01;
const D416: f64 = -0.44360363875948939664310572000E+01;

const D51: f64 = 0.10427508642579134603413151009E+02;
const D56: f64 = 0.24228349177525818288430175319E+03;
const D57: f64 = 0.16520045171727028198505394887E+03;
const D58: f64 = -0.37454675472269020279518312152E+03;
const D59: f64 = -0.22113666853125306036270938578E+02;
const D510: f64 = 0.77334326684722638389603898808E+01;
const D511: f64 = -0.30674084731089398182061213626E+02;
const D512: f64 = -0.93321305264302278729567221706E+01;
const D513: f64 = 0.15697238121770843886131091075E+02;
const D514: f64 = -0.31139403219565177677282850411E+02;
const D515: f64 = -0.93529243588444783865713862664E+01;
const D516: f64 = 0.35816841486394083752465898540E+02;

const D61: f64 = 0.19985053242002433820987653617E+02;
const D66: f64 = -0.38703730874935176555105901742E+03;
const D67: f64 = -0.18917813819516756882830838328E+03;
const D68: f64 = 0.52780815920542364900561016686E+03;
const D69: f64 = -0.11573902539959630126141871134E+02;
const D610: f64 = 0.68812326946963000169666922661E+01;
const D611: f64 = -0.10006050966910838403183860980E+01;
const D612: f64 = 0.77771377980534432092869265740E+00;
const D613: f64 = -0.27782057523535084065932004339E+01;
const D614: f64 = -0.60196695231264120758267380846E+02;
const D615: f64 = 0.84320405506677161018159903784E+02;
const D616: f64 = 0.11992291136182789328035130030E+02;

const D71: f64 = -0.25693933462703749003312586129E+02;
const D76: f64 = -0.15418974869023643374053993627E+03;
const D77: f64 = -0.23152937917604549567536039109E+03;
const D78: f64 = 0.35763911791061412378285349910E+03;
const D79: f64 = 0.93405324183624310003907691704E+02;
const D710: f64 = -0.37458323136451633156875139351E+02;
const D711: f64 = 0.10409964950896230045147246184E+03;
const D712: f64 = 0.29840293426660503123344363579E+02;
const D713: f64 = -0.43533456590011143754432175058E+02;
const D714: f64 = 0.96324553959188282948394950600E+02;
const D715: f64 = -0.39177261675615439165231486172E+02;
const D716: f64 = -0.14972683625798562581422125276E+03;
