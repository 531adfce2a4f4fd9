//! Core of the air monitoring interface.
//!
//! Sensor readings are persisted in [`timeseries`] and exposed to a planner
//! through an MCP tool server ([`mcp`]) backed by the concrete tool suite in
//! [`tools`]. The [`agent`] module runs the request/tool-call/reply loop and
//! [`irr`] computes the rater-agreement statistics used to score replies.

pub mod agent;
pub mod auth;
pub mod clock;
pub mod ingest;
pub mod irr;
pub mod journal;
pub mod mcp;
pub mod openapi;
pub mod timeseries;
pub mod tools;

pub use clock::{Clock, FixedClock, SystemClock};
pub use timeseries::{AggregateStats, Field, SensorReading, TimeRange, TimeSeries};
