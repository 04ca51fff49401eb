//! Typed GPS fixes and Loran measurements from classified sentences.

mod batch;
mod coord;
mod sentences;
mod time;
mod types;

pub use batch::{parse_lines, Decoder, LineError, ParseOutcome, ParserRegistry};
pub use coord::{format_coordinate, parse_coordinate, quantize_coordinate, Axis};
pub use sentences::{
    decode_gga, decode_loran, parse_date_sentence, parse_gga, parse_loran, serialize_gga,
    serialize_loran, serialize_rmc, serialize_zda, split_fields, Decoded, FixFields, LoranFields,
};
pub use time::{
    date_before_anchor, format_time_of_day, nearest_date, parse_time_of_day, resolve_timestamp,
    truncate_ms, DateContext, DateSource,
};
pub use types::{
    quantize_tenth, GpsFix, LoranMeasurement, StationId, StationRole, COORD_TOLERANCE_DEG, GRI_MAX,
    GRI_MIN, TENTH_TOLERANCE,
};

/// Why a sentence's fields could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FieldError {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("{field}: {reason}")]
    Field { field: &'static str, reason: String },
    #[error("line is not valid UTF-8")]
    NotUtf8,
    #[error("checksum mismatch")]
    BadChecksum,
    #[error("no decoder for {0}")]
    Unsupported(String),
}

impl FieldError {
    pub(crate) fn field(field: &'static str, reason: impl Into<String>) -> Self {
        FieldError::Field {
            field,
            reason: reason.into(),
        }
    }
}

/// Encode a record into its sentence form.
pub enum Record<'a> {
    Gps(&'a GpsFix),
    Loran(&'a LoranMeasurement),
}

/// Checksum-terminated sentence for a record (no line terminator).
pub fn serialize(record: Record<'_>) -> String {
    match record {
        Record::Gps(f) => serialize_gga(f),
        Record::Loran(m) => serialize_loran(m),
    }
}
