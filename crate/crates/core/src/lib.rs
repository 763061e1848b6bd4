//! Open-vocabulary proposal machinery around a frozen vision-language
//! encoder: a parameter-free feature pyramid over frozen layers, prompt-based
//! discovery of unlabeled objects, re-weighted proposal scoring, the
//! distillation objectives, and a synthetic harness that exercises them.

pub mod discovery;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod kfpn;
pub mod losses;
pub mod par;
pub mod roi;
pub mod rrpn;
pub mod tensorops;

pub use error::{Error, Result};
pub use par::Execution;
