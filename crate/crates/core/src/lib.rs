//! Sparse-group SLOPE: penalty sequences, proximal operators, the
//! adaptive three operator splitting solver, model selection and simulation.

pub mod data;
pub mod distributions;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod path;
pub mod penalty;
pub mod prox;
pub mod rng;
pub mod selection;
pub mod simulation;
pub mod solver;

pub use data::{Family, GroupPartition, GroupedDataset, StandardizationRecord};
pub use error::{Result, SgsError};
pub use penalty::{GroupSequence, PenaltySpec, SequenceOptions, VariableSequence};
pub use prox::SortedWeights;
