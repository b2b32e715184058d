//! AM to FM conversion chain: signal containers, modulators, detectors,
//! filters, a varactor-tuned VCO model, and the measurements around them.

pub mod analysis;
pub mod chain;
pub mod demodulation;
pub mod error;
pub mod filters;
pub mod io;
pub mod modulation;
pub mod signal;
pub mod vco;

pub use error::{Error, Result};
pub use signal::{ComplexSignal, RealSignal};
