//! Health state estimation over a person's event and sensor streams.
//!
//! The crate is organised around the parts of the engine:
//!
//! * [`personicle`] stores interval events and timestamped streams.
//! * [`ievent`] parses interface-event rules and evaluates them over streams.
//! * [`loadmetrics`] turns raw streams into load, fitness and exposure metrics.
//! * [`gnb`] holds the nested directed multigraph and its update cycle.
//! * [`knowledge`] loads domain knowledge and instantiates graphs from intent.
//! * [`learner`] fits data-driven edge and fusion models.

pub mod gnb;
pub mod ievent;
pub mod knowledge;
pub mod learner;
pub mod loadmetrics;
pub mod personicle;

pub use personicle::{Event, Sample, StreamSeries, Timestamp};
