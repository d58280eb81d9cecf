//! Kinetic McKean–Vlasov particle simulator with common noise and
//! state-dependent friction, its overdamped limit candidates, and the
//! measurement tools used to compare them.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod meanfield;
pub mod metrics;
pub mod model;
pub mod noise;

pub use dynamics::{KineticEnsemble, OverdampedEnsemble, Scheme, TermFlags};
pub use error::{Error, Result};
pub use meanfield::{BinGrid, BinnedField, ConditionalReplica, TestFunction};
pub use metrics::{OrderFit, SampleCloud};
pub use model::{FrictionSpec, InitialLaw, KernelSpec, ModelSpec, NoiseFamily, ValidationReport};
pub use noise::{BrownianGrid, Role, SeedDerivation};
pub use harness::{ExperimentConfig, OutputFormat, StudyResult, Variant};
