//! Numerical laboratory for attention-type particle dynamics on the unit
//! sphere and their mean-field limits.

pub mod analysis;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod fields;
pub mod kernel;
pub mod observables;
pub mod sphere;
pub mod vecops;

pub use dynamics::{CircleFlowState, CircleSolverConfig, FlowState, IntegratorConfig, Limiter, Method};
pub use ensemble::{CircleDensity, InitialMeasure, ParticleEnsemble, ScenarioInit};
pub use error::{FlowError, Result};
pub use fields::VelocityLaw;
pub use kernel::{EigenDecomposition, KernelKind, KernelSpec, PhiPrime};
pub use sphere::{GnomonicChart, SpherePoint, SphericalCap};
pub use observables::{ObservableSnapshot, SnapshotParams, TrajectoryRecord};
