//! Decoherence and equilibration of a central system dephasingly coupled to a
//! quantum kicked-rotor environment.
//!
//! The environment is driven by conditional Floquet operators, one per
//! eigenvalue of the central coupling operator. Echo series, their spectral
//! time averages, random-matrix predictions and the reduced dynamics of the
//! central system are built on top of them.

pub mod linalg;
pub mod random;
pub mod rotor;
pub mod echo;
pub mod rmt;
pub mod reduced;
pub mod bipartite;
