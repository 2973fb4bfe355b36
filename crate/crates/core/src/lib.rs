//! Analysis toolkit for superconducting microwave resonators and transmon
//! qubits.
//!
//! * [`s21`] fits complex transmission traces to the hanger resonance model.
//! * [`loss`] decomposes Q_int(n̄, T) into TLS, quasiparticle and residual loss.
//! * [`kinetic`] extracts kinetic inductance and the penetration depth.
//! * [`surface`] regresses the surface loss tangent and oxide thickness.
//! * [`qubit`] fits decay traces and aggregates coherence statistics.
//! * [`synth`] forward-simulates all of the above from known ground truth.
//! * [`io`], [`dataset`] and [`pipeline`] handle files and orchestration.

pub mod constants;
pub mod dataset;
pub mod error;
pub mod io;
pub mod kinetic;
pub mod lm;
pub mod loss;
pub mod model;
pub mod pipeline;
pub mod qubit;
pub mod reference;
pub mod rng;
pub mod s21;
pub mod special;
pub mod stats;
pub mod surface;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
pub use model::{ComplexTrace, Estimate, TraceMeta};
