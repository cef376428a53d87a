use nalgebra::SVector;
use roots::{find_root_brent, Convergency};
use serde::{Deserialize, Serialize};

use super::{IntegrateError, Step, Trajectory};

/// Scalar function whose sign changes define an event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    /// Zero of the time derivative of one component.
    Extremum { component: usize },
    /// Crossing of the plane `x[component] = value`.
    Crossing { component: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Rising,
    Falling,
    Both,
}

/// Events whose state satisfies `|x[component]| <= halfwidth` are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub component: usize,
    pub halfwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub kind: EventKind,
    pub direction: Direction,
    pub exclusion: Option<Band>,
}

impl EventSpec {
    pub fn extremum(component: usize) -> Self {
        Self {
            kind: EventKind::Extremum { component },
            direction: Direction::Both,
            exclusion: None,
        }
    }

    pub fn crossing(component: usize, value: f64, direction: Direction) -> Self {
        Self {
            kind: EventKind::Crossing { component, value },
            direction,
            exclusion: None,
        }
    }

    pub fn excluding(mut self, band: Band) -> Self {
        self.exclusion = Some(band);
        self
    }

    fn g<const N: usize>(&self, step: &Step<N>, t: f64) -> f64 {
        match self.kind {
            EventKind::Extremum { component } => step.eval_derivative(t)[component],
            EventKind::Crossing { component, value } => step.eval(t)[component] - value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<const N: usize> {
    /// Index of the triggering specification.
    pub spec: usize,
    pub t: f64,
    pub state: SVector<f64, N>,
    /// True when the event function changes sign from negative to positive.
    pub rising: bool,
    /// Time derivative of the event function at the root.
    pub slope: f64,
}

/// Events with `|slope|` below this value are tangencies and are discarded.
pub const TANGENCY_THRESHOLD: f64 = 1e-13;
/// Events are localized in time to this absolute accuracy.
pub const EVENT_TIME_TOL: f64 = 1e-12;
const SUBDIVISIONS: usize = 4;

struct TimeTolerance(f64);

impl Convergency<f64> for TimeTolerance {
    fn is_root_found(&mut self, y: f64) -> bool {
        y == 0.0
    }
    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() < self.0
    }
    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter >= 200
    }
}

/// Streaming event locator fed with accepted integrator steps.
#[derive(Debug, Clone)]
pub struct EventDetector {
    specs: Vec<EventSpec>,
}

impl EventDetector {
    pub fn new(specs: Vec<EventSpec>) -> Self {
        Self { specs }
    }

    /// Events inside `step`, ordered along the direction of integration.
    pub fn process<const N: usize>(&mut self, step: &Step<N>) -> Vec<Event<N>> {
        let mut out = Vec::new();
        if self.specs.is_empty() {
            return out;
        }
        let nodes: Vec<f64> = (0..=SUBDIVISIONS)
            .map(|k| {
                if k == SUBDIVISIONS {
                    step.t1()
                } else {
                    step.t0 + step.h * k as f64 / SUBDIVISIONS as f64
                }
            })
            .collect();
        for (idx, spec) in self.specs.iter().enumerate() {
            let gs: Vec<f64> = nodes.iter().map(|&t| spec.g(step, t)).collect();
            for k in 0..SUBDIVISIONS {
                let (ta, tb) = (nodes[k], nodes[k + 1]);
                let (ga, gb) = (gs[k], gs[k + 1]);
                let sign_change = (ga < 0.0 && gb > 0.0) || (ga > 0.0 && gb < 0.0);
                let lands_on_zero = gb == 0.0 && ga != 0.0;
                if !(sign_change || lands_on_zero) {
                    continue;
                }
                let t = if lands_on_zero {
                    tb
                } else {
                    let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
                    let mut conv = TimeTolerance(EVENT_TIME_TOL);
                    find_root_brent(lo, hi, |t| spec.g(step, t), &mut conv)
                        .unwrap_or(0.5 * (ta + tb))
                };
                // g changes from ga to gb as time moves from ta to tb.
                let rising = (gb - ga) * (tb - ta) > 0.0;
                match spec.direction {
                    Direction::Rising if !rising => continue,
                    Direction::Falling if rising => continue,
                    _ => {}
                }
                let eps = 1e-6 * step.h.abs();
                let lo = step.t0.min(step.t1());
                let hi = step.t0.max(step.t1());
                let tp = (t + eps).min(hi);
                let tm = (t - eps).max(lo);
                let slope = (spec.g(step, tp) - spec.g(step, tm)) / (tp - tm);
                if slope.abs() < TANGENCY_THRESHOLD {
                    continue;
                }
                let state = step.eval(t);
                if let Some(band) = spec.exclusion {
                    if state[band.component].abs() <= band.halfwidth {
                        continue;
                    }
                }
                out.push(Event {
                    spec: idx,
                    t,
                    state,
                    rising,
                    slope,
                });
            }
        }
        let sign = step.h.signum();
        out.sort_by(|a, b| (sign * a.t).total_cmp(&(sign * b.t)));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremumKind {
    Minimum,
    Maximum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremum {
    pub t: f64,
    pub value: f64,
    pub kind: ExtremumKind,
}

impl Extremum {
    /// Classifies an extremum event of a component; applies the exclusion
    /// rule: minima must lie strictly below `-halfwidth`, maxima strictly
    /// above `halfwidth`.
    pub fn from_event<const N: usize>(
        e: &Event<N>,
        component: usize,
        halfwidth: f64,
    ) -> Option<Self> {
        // Derivative increasing through zero is a minimum.
        let kind = if e.rising {
            ExtremumKind::Minimum
        } else {
            ExtremumKind::Maximum
        };
        let value = e.state[component];
        let keep = match kind {
            ExtremumKind::Minimum => value < -halfwidth,
            ExtremumKind::Maximum => value > halfwidth,
        };
        keep.then_some(Extremum {
            t: e.t,
            value,
            kind,
        })
    }
}

/// Extrema of one component along a forward trajectory, with the exclusion
/// band `|x| <= halfwidth` applied to the extremal value.
pub fn extrema_events<const N: usize>(
    traj: &Trajectory<N>,
    component: usize,
    halfwidth: f64,
) -> Vec<Extremum> {
    let mut det = EventDetector::new(vec![EventSpec::extremum(component)]);
    traj.steps
        .iter()
        .flat_map(|s| det.process(s))
        .filter_map(|e| Extremum::from_event(&e, component, halfwidth))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crossing<const N: usize> {
    pub t: f64,
    pub state: SVector<f64, N>,
    /// True when the component increases through the section.
    pub upward: bool,
}

/// Transversal crossings of the plane `x[component] = value`.
pub fn poincare_crossings<const N: usize>(
    traj: &Trajectory<N>,
    component: usize,
    value: f64,
) -> Result<Vec<Crossing<N>>, IntegrateError> {
    let nodes = traj.nodes();
    if nodes.len() > 1
        && nodes
            .iter()
            .all(|(_, y)| (y[component] - value).abs() < TANGENCY_THRESHOLD)
    {
        return Err(IntegrateError::DegenerateSection { component, value });
    }
    let mut det = EventDetector::new(vec![EventSpec::crossing(component, value, Direction::Both)]);
    Ok(traj
        .steps
        .iter()
        .flat_map(|s| det.process(s))
        .map(|e| Crossing {
            t: e.t,
            state: e.state,
            upward: e.rising,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate, Dop853, Tolerances};
    use nalgebra::Vector2;
    use std::f64::consts::PI;

    fn rotation(_t: f64, y: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(-y[1], y[0])
    }

    #[test]
    fn extrema_of_cosine_are_located_to_high_accuracy() {
        let tr = integrate(
            rotation,
            Vector2::new(1.0, 0.0),
            (0.1, 20.0),
            &Dop853::new(Tolerances::MANIFOLD),
            &[],
        )
        .unwrap();
        let ex = extrema_events(&tr, 0, 0.5);
        assert_eq!(ex.len(), 6);
        for (k, e) in ex.iter().enumerate() {
            let expect = 0.1 + PI * (k + 1) as f64;
            assert!((e.t - expect).abs() < 1e-10, "{} vs {}", e.t, expect);
            let kind = if k % 2 == 0 {
                ExtremumKind::Minimum
            } else {
                ExtremumKind::Maximum
            };
            assert_eq!(e.kind, kind);
        }
    }

    #[test]
    fn exclusion_band_is_strict() {
        let tr = integrate(
            rotation,
            Vector2::new(0.3, 0.0),
            (0.1, 20.0),
            &Dop853::new(Tolerances::MANIFOLD),
            &[],
        )
        .unwrap();
        assert_eq!(extrema_events(&tr, 0, 0.300001).len(), 0);
        assert_eq!(extrema_events(&tr, 0, 0.2999).len(), 6);
    }

    #[test]
    fn circle_crosses_section_once_per_period_each_way() {
        let tr = integrate(
            rotation,
            Vector2::new(1.0, 0.0),
            (0.0, 10.0 * PI + 0.1),
            &Dop853::new(Tolerances::MANIFOLD),
            &[],
        )
        .unwrap();
        let c = poincare_crossings(&tr, 1, 0.0).unwrap();
        assert_eq!(c.len(), 10);
        assert_eq!(c.iter().filter(|c| c.upward).count(), 5);
        assert!((c[1].t - 2.0 * PI).abs() < 1e-10 && c[1].upward);
        assert!((c[0].t - PI).abs() < 1e-10 && !c[0].upward);
    }

    #[test]
    fn backward_crossings_report_geometric_direction() {
        let tr = integrate(
            rotation,
            Vector2::new(1.0, 0.0),
            (0.0, -4.0),
            &Dop853::new(Tolerances::MANIFOLD),
            &[],
        )
        .unwrap();
        let c = poincare_crossings(&tr, 1, 0.0).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].t + PI).abs() < 1e-10);
        // At t = -pi the point (-1, 0) moves with dy/dt = -1.
        assert!(!c[0].upward);
    }

    #[test]
    fn trajectory_inside_section_is_degenerate() {
        let tr = integrate(
            |_t, y: &Vector2<f64>| Vector2::new(1.0, 0.0 * y[1]),
            Vector2::new(0.0, 0.0),
            (0.0, 3.0),
            &Dop853::new(Tolerances::MANIFOLD),
            &[],
        )
        .unwrap();
        assert!(matches!(
            poincare_crossings(&tr, 1, 0.0),
            Err(IntegrateError::DegenerateSection { .. })
        ));
    }

    #[test]
    fn directional_filter_and_exclusion_apply_during_integration() {
        let specs = [
            EventSpec::crossing(1, 0.0, Direction::Rising),
            EventSpec::extremum(0).excluding(Band {
                component: 0,
                halfwidth: 2.0,
            }),
        ];
        let tr = integrate(
            rotation,
            Vector2::new(1.0, 0.0),
            (0.0, 13.0),
            &Dop853::new(Tolerances::MANIFOLD),
            &specs,
        )
        .unwrap();
        assert_eq!(tr.events.len(), 2);
        assert!(tr.events.iter().all(|e| e.spec == 0 && e.rising));
    }
}
