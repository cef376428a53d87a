use std::fmt;
use std::path::Path;
use std::str::FromStr;

use counterlase::{ModelParams, Tolerances};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::CliError;

/// Inclusive uniform grid written `lo:hi:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    pub const fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    /// `lo + k step` for every `k` that stays within `hi` (up to 1e-9 of a
    /// step), rounded to 12 decimals so that `0.4:1:0.2` gives `0.6` and not
    /// `0.6000000000000001`.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| ((self.lo + k as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, step] = parts.as_slice() else {
            return Err(format!("grid {s:?} is not of the form lo:hi:step"));
        };
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| format!("grid {s:?}: {e}"))
        };
        let g = Grid::new(num(lo)?, num(hi)?, num(step)?);
        if !(g.step > 0.0) || !(g.hi >= g.lo) || !g.lo.is_finite() || !g.hi.is_finite() {
            return Err(format!("grid {s:?} needs lo <= hi and step > 0"));
        }
        Ok(g)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.step)
    }
}

impl Serialize for Grid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    PhaseDiagram,
    PoGeometry,
    KneadingSweep,
    BifDiagram,
    FindHomoclinic,
    FindEtop,
    CompareDicke,
    Lyapunov,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::PhaseDiagram => "phase-diagram",
            Command::PoGeometry => "po-geometry",
            Command::KneadingSweep => "kneading-sweep",
            Command::BifDiagram => "bif-diagram",
            Command::FindHomoclinic => "find-homoclinic",
            Command::FindEtop => "find-etop",
            Command::CompareDicke => "compare-dicke",
            Command::Lyapunov => "lyapunov",
        }
    }

    /// Parameters used when the config gives none.
    pub fn default_params(self) -> ModelParams {
        match self {
            Command::PoGeometry => ModelParams::resonant(0.5, 1.0, 0.01),
            Command::PhaseDiagram | Command::BifDiagram | Command::CompareDicke => {
                ModelParams::transitional(1.5)
            }
            _ => ModelParams::transitional(1.53292),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateOptions {
    pub initial: [f64; 3],
    pub t_end: f64,
    /// Output spacing; integrator nodes when absent.
    pub dt: Option<f64>,
    /// Integrate the full cavity plus spin system with the slaved field as
    /// initial cavity amplitude.
    pub dicke: bool,
    /// Extrema of `b_x` inside `|b_x| <= halfwidth` are not reported.
    pub halfwidth: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            initial: [-0.035, -0.023, -0.495],
            t_end: 2000.0,
            dt: Some(0.1),
            dicke: false,
            halfwidth: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseDiagramOptions {
    pub lambda_minus: Grid,
    pub lambda_plus: Grid,
    pub horizon: f64,
    pub attempts: usize,
    /// Also write Hopf, pitchfork and saddle-node curves.
    pub curves: bool,
}

impl Default for PhaseDiagramOptions {
    fn default() -> Self {
        Self {
            lambda_minus: Grid::new(0.0, 3.0, 0.1),
            lambda_plus: Grid::new(0.0, 3.0, 0.1),
            horizon: 3000.0,
            attempts: 4,
            curves: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoGeometryOptions {
    pub lambda_plus: Grid,
}

impl Default for PoGeometryOptions {
    fn default() -> Self {
        Self {
            lambda_plus: Grid::new(0.5, 3.0, 0.05),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KneadingSweepOptions {
    pub lambda_plus: Grid,
    pub n: usize,
    pub halfwidth: f64,
    pub delta1: f64,
    pub horizon: f64,
    pub plateaus: bool,
    /// Bisection resolution of plateau ends and spikes; none disables refinement.
    pub resolution: Option<f64>,
}

impl Default for KneadingSweepOptions {
    fn default() -> Self {
        Self {
            lambda_plus: Grid::new(1.532, 1.5335, 5e-6),
            n: 12,
            halfwidth: 0.2,
            delta1: 1e-6,
            horizon: 5000.0,
            plateaus: true,
            resolution: Some(1e-7),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifDiagramOptions {
    pub lambda_range: [f64; 2],
    pub segments: usize,
    pub max_period: f64,
    pub period_doublings: usize,
    pub homoclinics: Vec<String>,
}

impl Default for BifDiagramOptions {
    fn default() -> Self {
        Self {
            lambda_range: [1.3, 1.75],
            segments: 20,
            max_period: 250.0,
            period_doublings: 2,
            homoclinics: vec!["0".into(), "01".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FindHomoclinicOptions {
    /// Loop symbols of the unstable branch before it returns.
    pub symbols: String,
    pub window: [f64; 2],
    pub grid_points: usize,
    pub section: f64,
}

impl Default for FindHomoclinicOptions {
    fn default() -> Self {
        Self {
            symbols: "01".into(),
            window: [1.5327, 1.5330],
            grid_points: 21,
            section: -0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FindEtopOptions {
    /// Symbols of `x1` before it meets the orbit.
    pub prefix: String,
    /// Loops of the target orbit traversed by `x1`.
    pub wraps: usize,
    pub window: [f64; 2],
    /// Where the saddle orbit is taken from its branch; window midpoint when absent.
    pub orbit_at: Option<f64>,
    pub grid_points: usize,
    pub section: f64,
}

impl Default for FindEtopOptions {
    fn default() -> Self {
        Self {
            prefix: "0".into(),
            wraps: 1,
            window: [1.5326, 1.5330],
            orbit_at: None,
            grid_points: 21,
            section: -0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareDickeOptions {
    pub initial: [f64; 3],
    pub t_end: f64,
    pub dt: f64,
    /// Final time span over which the orbit amplitudes are measured.
    pub window: f64,
}

impl Default for CompareDickeOptions {
    fn default() -> Self {
        Self {
            initial: [0.05, 0.0, -0.49],
            t_end: 2000.0,
            dt: 0.1,
            window: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovOptions {
    pub initial: [f64; 3],
    /// Values of `lambda_+` computed in parallel; the parameter set alone when absent.
    pub lambda_plus: Option<Grid>,
    pub horizon: f64,
    pub transient: f64,
    pub renorm_interval: f64,
    pub blocks: usize,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            initial: [-0.035, -0.023, -0.495],
            lambda_plus: None,
            horizon: 20_000.0,
            transient: 2_000.0,
            renorm_interval: 1.0,
            blocks: 20,
        }
    }
}

/// Everything a run depends on. The effective config is stored next to the
/// outputs and re-runs to the same files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub params: Option<ModelParams>,
    /// Relative integration tolerance; command defaults when absent.
    pub rtol: Option<f64>,
    pub workers: Option<usize>,
    pub simulate: SimulateOptions,
    pub phase_diagram: PhaseDiagramOptions,
    pub po_geometry: PoGeometryOptions,
    pub kneading_sweep: KneadingSweepOptions,
    pub bif_diagram: BifDiagramOptions,
    pub find_homoclinic: FindHomoclinicOptions,
    pub find_etop: FindEtopOptions,
    pub compare_dicke: CompareDickeOptions,
    pub lyapunov: LyapunovOptions,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config contains only plain values")
    }

    pub fn tolerances(&self, default: Tolerances) -> Tolerances {
        match self.rtol {
            Some(rtol) => Tolerances {
                rtol,
                atol: 1e-2 * rtol,
            },
            None => default,
        }
    }

    /// Options of one command as JSON, for output headers.
    pub fn options_json(&self, c: Command) -> serde_json::Value {
        let v = match c {
            Command::Simulate => serde_json::to_value(&self.simulate),
            Command::PhaseDiagram => serde_json::to_value(&self.phase_diagram),
            Command::PoGeometry => serde_json::to_value(&self.po_geometry),
            Command::KneadingSweep => serde_json::to_value(&self.kneading_sweep),
            Command::BifDiagram => serde_json::to_value(&self.bif_diagram),
            Command::FindHomoclinic => serde_json::to_value(&self.find_homoclinic),
            Command::FindEtop => serde_json::to_value(&self.find_etop),
            Command::CompareDicke => serde_json::to_value(&self.compare_dicke),
            Command::Lyapunov => serde_json::to_value(&self.lyapunov),
        };
        v.expect("options serialize to JSON")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_include_both_ends() {
        let g: Grid = "1.5:1.6:0.02".parse().unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], 1.5);
        assert_eq!(pts[5], 1.6);
        assert_eq!("0.4:1:0.2".parse::<Grid>().unwrap().points()[1], 0.6);
        assert_eq!("0:0:1".parse::<Grid>().unwrap().points(), vec![0.0]);
        assert!("1:0:0.1".parse::<Grid>().is_err());
        assert!("0:1".parse::<Grid>().is_err());
        assert!("0:1:0".parse::<Grid>().is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = RunConfig {
            command: Some(Command::KneadingSweep),
            params: Some(ModelParams::transitional(1.533)),
            rtol: Some(1e-11),
            ..Default::default()
        };
        c.kneading_sweep.lambda_plus = "1.53:1.54:0.001".parse().unwrap();
        c.lyapunov.lambda_plus = Some(Grid::new(1.0, 2.0, 0.5));
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("comand = \"simulate\"").is_err());
        assert!(toml::from_str::<RunConfig>("[simulate]\nt_ned = 3.0").is_err());
    }
}
