//! signSGD with majority vote on a synthetic federated task.
//!
//! Each round every user computes a minibatch gradient, sends its sign, and
//! the aggregator returns one sign per component; all users then step by
//! `−η` times that sign. The aggregator is pluggable: the error-free vote,
//! flat over-the-air voting, or the cluster scheme with relay selection.

mod data;
mod model;
mod probe;
mod train;

pub use data::{Dataset, FederatedTask, QuadraticSpec, TwoBlobSpec};
pub use model::ModelKind;
pub use probe::{probe_local_success, LocalSuccessProbe};
pub use train::{train, user_stream, Aggregator, ChannelSource, RoundMetrics, TrainConfig, TrainOutcome, TrainState};
