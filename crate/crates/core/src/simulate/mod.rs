//! Synthetic integrated-receiver streams with known ground truth.

mod generate;
mod scenario;
mod scripted;
mod serve;

pub use generate::{
    generate_stream, Damage, GeneratedStream, GroundTruth, LineKind, StreamLine, Tally,
};
pub use scenario::{default_start, BasePosition, Corruption, Profile, Scenario, StationScenario};
pub use scripted::ScriptedSource;
pub use serve::{serve, Pacing, ServeReport, Server};
