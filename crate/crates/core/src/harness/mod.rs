//! End-to-end glue: synthetic scenes, an RPN stand-in, evaluation and
//! experiment orchestration.

pub mod eval;
pub mod experiment;
pub mod nvt;
pub mod rpn;
pub mod scene;
