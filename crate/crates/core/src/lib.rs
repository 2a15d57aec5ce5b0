//! Desk-scale simulator and statistics engine for device-independent quantum
//! state certification.
//!
//! A noisy Bell or GHZ source is sampled by synchronized switches into a user
//! station and a verifier station. The verifier plays a nonlocal game derived
//! from the CHSH or Mermin inequality on every state she receives and converts
//! the observed winning rate into a fidelity certificate through the
//! Kullback-Leibler confidence bound.
//!
//! Module map:
//!
//! * [`qcore`]: dense complex matrices, states, observables and the Born rule.
//! * [`states`]: target states and noise models.
//! * [`games`]: CHSH / Mermin nonlocal games.
//! * [`switchsim`]: Poisson source and switch routing simulation.
//! * [`randsuite`]: a subset of the NIST SP800-22 randomness tests.
//! * [`certify`]: KL bound, infidelity solver and certificates.
//! * [`estimate`]: user-side tomography and GHZ witness.
//! * [`analysis`]: theory curves, trace averaging and log-log fits.
//! * [`harness`]: configuration, end-to-end runs and file artifacts.

pub mod analysis;
pub mod certify;
pub mod error;
pub mod estimate;
pub mod games;
pub mod harness;
pub mod qcore;
pub mod randsuite;
pub mod rng;
pub mod states;
pub mod switchsim;

pub use error::{Error, Result};

pub use analysis::{ScalingPoint, ScalingTrace, SlopeFit};
pub use certify::{Certificate, CertificationState, EtaBound, TracePoint};
pub use games::{GameName, GameSpec, RoundResult};
pub use qcore::{ComplexMatrix, DensityMatrix, Ket, Observable};
pub use states::{NoiseKind, NoiseModel, TargetName, TargetState};
pub use switchsim::{RoutingEvent, RoutingSummary, Station, SwitchConfig};
