//! Boundary-value problems for orbit segments, pseudo-arclength
//! continuation of equilibria and periodic orbits with bifurcation
//! detection, and Lin's method for homoclinic and equilibrium-to-periodic
//! connections.

mod cont;
mod diagram;
mod equilibria;
mod flow;
mod lin;
mod newton;
mod periodic;
mod segment;

pub use cont::{
    continue_branch, tangent, Branch, BranchEnd, BranchPoint, ContinuationOptions,
    ContinuationProblem,
};
pub use diagram::{
    bif_diagram, superradiant_saddle_orbit, BifDiagram, BifDiagramOptions, BranchRow, BranchSummary,
};
pub use equilibria::{equilibrium_branch, EquilibriumProblem};
pub use flow::{flow, flow_jet, FlowJet};
pub use lin::{
    lin_find_etop, lin_find_homoclinic, lin_gap, Connection, ConnectionKind, LinOptions,
    LinProblem, LinTarget,
};
pub use newton::{linear_step, newton, NewtonOptions, NewtonReport};
pub use periodic::{
    floquet, orbit_from_hopf, orbit_from_simulation, switch_at_period_doubling,
    switch_at_symmetry_breaking, Floquet, OrbitStability, PeriodicOrbitSolution, PeriodicProblem,
};
pub use segment::{solve_segment, Boundary, OrbitSegment, SegmentProblem};

use num_complex::Complex64;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::integrate::IntegrateError;
use crate::kneading::KneadingError;
use crate::localbif::BifError;
use crate::model::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BvpError {
    #[error("Newton iteration did not converge (residual {residual:e})")]
    NewtonDivergence { residual: f64, iterate: Vec<f64> },
    #[error("singular Jacobian in the boundary-value problem")]
    SingularJacobian,
    #[error("{conditions} boundary conditions for {unknowns} unknowns")]
    IllPosed { conditions: usize, unknowns: usize },
    #[error("no sign change of the Lin gap in [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },
    #[error("orbit segment lost its section crossing at lambda_+ = {lambda_plus}")]
    LostCrossing { lambda_plus: f64 },
    #[error("no periodic orbit found: {0}")]
    NoOrbit(String),
    #[error("Floquet multipliers {0} are degenerate")]
    DegenerateMultipliers(String),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Bif(#[from] BifError),
    #[error(transparent)]
    Kneading(#[from] KneadingError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BifurcationKind {
    Hopf,
    Fold,
    PitchforkEq,
    PeriodDoubling,
    /// Symmetry-breaking pitchfork of periodic orbits.
    PitchforkPo,
    FoldPo,
    Homoclinic,
    EtoP,
}

impl BifurcationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BifurcationKind::Hopf => "hopf",
            BifurcationKind::Fold => "fold",
            BifurcationKind::PitchforkEq => "pitchfork",
            BifurcationKind::PeriodDoubling => "period-doubling",
            BifurcationKind::PitchforkPo => "pitchfork-po",
            BifurcationKind::FoldPo => "fold-po",
            BifurcationKind::Homoclinic => "homoclinic",
            BifurcationKind::EtoP => "etop",
        }
    }
}

impl std::fmt::Display for BifurcationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for BifurcationKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Spectrum at an event: eigenvalues for equilibria, Floquet multipliers
/// for periodic orbits. `critical` is the member that triggered the event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    #[serde(serialize_with = "complex_list")]
    pub spectrum: Vec<Complex64>,
    #[serde(serialize_with = "complex_opt")]
    pub critical: Option<Complex64>,
    pub note: String,
}

fn complex_list<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|z| [z.re, z.im]))
}

fn complex_opt<S: Serializer>(v: &Option<Complex64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(z) => s.serialize_some(&[z.re, z.im]),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifurcationEvent {
    pub kind: BifurcationKind,
    pub lambda_plus: f64,
    /// Identifier of the branch or connection the event belongs to.
    pub branch: String,
    /// Solution vector at the event (problem-specific layout).
    pub state: Vec<f64>,
    pub diagnostics: Diagnostics,
}
