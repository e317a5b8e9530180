//! Interval observers for nonlinear discrete-time systems: semidefinite
//! synthesis of the observer gains, coordinate-transform construction, and
//! certified simulation with runtime positivity/ISS monitors.

// Pulls the system BLAS/LAPACK into the link for the conic solver's PSD cones.
use openblas_src as _;

pub mod matops;
pub mod model;
pub mod observer;
pub mod synthesis;
pub mod transform;

pub use matops::{Mat, MatInterval};
pub use model::{NonlinearitySpec, SystemModel};
pub use observer::{DirectObserverGains, ObserverGains, ObserverTrace, SampledDataConfig, TransformedObserverGains};
pub use synthesis::{Certificate, FeasibilityProgram, Margins, SynthesisVariables};
pub use transform::TransformPair;
