pub mod collision;
pub mod counting;
pub mod experiment;
pub mod error;
pub mod lattice;
pub mod quad;
pub mod scalar;
pub mod solver;
pub mod spectra;
pub mod trees;

pub use error::{Error, Result};
pub use lattice::{CutoffShape, Lattice, ModeIndex, TorusSpec};
pub use scalar::Real;

pub type Lattice64 = Lattice<f64>;
pub type Lattice32 = Lattice<f32>;
pub use spectra::{PhaseModel, Profile, SeedPlan, SpectralField};

pub type Field64 = SpectralField<f64>;
pub type Field32 = SpectralField<f32>;
pub use solver::{Integrator, NonlinearityPath, SolverConfig, Trajectory};

pub type Trajectory64 = Trajectory<f64>;
pub use trees::{TreeBudget, TreeIndex};
