//! Fairness certification of black-box classifiers and certified inference.
//!
//! A regulator tests a server's model on labelled, group-annotated data inside
//! an ideal secure-computation functionality, signs the model's Merkle digest
//! together with the fairness parameters when the test passes, and clients
//! later accept predictions only when the model they were computed with hashes
//! to a signed digest.

pub mod augment;
pub mod codec;
pub mod crypto;
pub mod experiments;
pub mod fairness;
pub mod fixed;
pub mod fsc;
pub mod micro;
pub mod model;
pub mod protocol;

pub use fairness::{FairnessMetric, FairnessSpec, GroupRiskTable, TestMode, TestReport};
pub use fixed::Fixed;
pub use micro::Micro;
pub use model::{Dataset, ModelSpec, Sample};
