pub mod cli;
pub mod dist;
pub mod error;
pub mod nonsensing;
pub mod quad;
pub mod reactive;
pub mod sim;

pub use dist::{Family, SourceDistribution, ValidationReport};
pub use error::{Error, Result};
pub use nonsensing::{GameInstance, NonSensingEquilibrium};
pub use reactive::{FneCertificate, ReactivePoint, SolveOutcome};
pub use sim::{PolicyBundle, SimResult};
