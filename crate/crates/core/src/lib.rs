//! Capture and management of integrated GPS/Loran receiver output.
//!
//! The crate is organised as a file-handoff pipeline:
//!
//! * [`record`] appends the raw byte stream from a receiver link into
//!   rotating segment files, byte for byte.
//! * [`classify`] frames closed segments into lines, reads each line's
//!   header, validates NMEA checksums and routes lines into per-class stores.
//! * [`parse`] turns classified GGA/RMC/ZDA and `$PLRM` sentences into typed
//!   GPS fixes and Loran measurements with full UTC timestamps.
//! * [`convert`] merges both record kinds into one timestamp-sorted timeline
//!   and exports it with a digest manifest.
//! * [`orchestrate`] runs everything unattended with rotation-triggered
//!   processing and crash recovery.
//! * [`simulate`] produces deterministic synthetic receiver streams and
//!   serves them over TCP, which is what the test suites lean on.
//!
//! Batch paths (line classification, sentence decoding, timeline sorting)
//! run on rayon when the `parallel` feature is enabled; see [`exec`].

pub mod classify;
pub mod convert;
pub mod digest;
pub mod exec;
pub mod orchestrate;
pub mod parse;
pub mod record;
pub mod simulate;

pub use exec::Execution;
