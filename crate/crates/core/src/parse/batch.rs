//! Segment-level parsing: registry dispatch, parallel decoding, then a
//! sequential pass that threads the date context.

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::sentences::{decode_gga, decode_loran, parse_date_sentence, split_fields, Decoded};
use super::time::{date_before_anchor, nearest_date, DateContext, DateSource};
use super::types::{GpsFix, LoranMeasurement};
use super::FieldError;
use crate::classify::{ChecksumStatus, ClassifiedLine, MessageClass};
use crate::exec::Execution;

/// Decoder for one sentence type. Receives the comma-split fields (header
/// first, checksum removed) and the line's class.
pub type Decoder = fn(&[&str], &MessageClass) -> Result<Decoded, FieldError>;

fn gga(fields: &[&str], _: &MessageClass) -> Result<Decoded, FieldError> {
    decode_gga(fields).map(Decoded::Fix)
}

fn plrm(fields: &[&str], _: &MessageClass) -> Result<Decoded, FieldError> {
    decode_loran(fields).map(Decoded::Loran)
}

fn date(fields: &[&str], class: &MessageClass) -> Result<Decoded, FieldError> {
    let (date, tod, source) = parse_date_sentence(fields, class)?;
    Ok(Decoded::Date { date, tod, source })
}

/// Maps message classes to decoders. Standard sentences are keyed by the
/// formatter (any talker), proprietary ones by vendor tag.
#[derive(Clone)]
pub struct ParserRegistry {
    standard: HashMap<String, Decoder>,
    proprietary: HashMap<String, Decoder>,
}

impl Default for ParserRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register_standard("GGA", gga);
        r.register_standard("RMC", date);
        r.register_standard("ZDA", date);
        r.register_proprietary("LRM", plrm);
        r
    }
}

impl ParserRegistry {
    pub fn empty() -> Self {
        Self {
            standard: HashMap::new(),
            proprietary: HashMap::new(),
        }
    }

    pub fn register_standard(&mut self, sentence: &str, decoder: Decoder) {
        self.standard.insert(sentence.to_owned(), decoder);
    }

    pub fn register_proprietary(&mut self, vendor_tag: &str, decoder: Decoder) {
        self.proprietary.insert(vendor_tag.to_owned(), decoder);
    }

    pub fn lookup(&self, class: &MessageClass) -> Option<Decoder> {
        match class {
            MessageClass::NmeaStandard { sentence, .. } => self.standard.get(sentence).copied(),
            MessageClass::NmeaProprietary { vendor_tag } => {
                self.proprietary.get(vendor_tag).copied()
            }
            MessageClass::Unknown => None,
        }
    }

    /// Decode one classified line. `None` when the class has no decoder.
    pub fn decode_line(&self, line: &ClassifiedLine) -> Option<Result<Decoded, FieldError>> {
        let decoder = self.lookup(&line.class)?;
        if line.checksum_status == ChecksumStatus::Invalid {
            return Some(Err(FieldError::BadChecksum));
        }
        let text = match std::str::from_utf8(&line.raw) {
            Ok(t) => t,
            Err(_) => return Some(Err(FieldError::NotUtf8)),
        };
        Some(decoder(&split_fields(text), &line.class))
    }
}

/// A line that could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line_number: u64,
    pub class: String,
    pub reason: String,
}

/// Records and errors from one segment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub fixes: Vec<GpsFix>,
    pub loran: Vec<LoranMeasurement>,
    pub errors: Vec<LineError>,
    /// Date sentences consumed (RMC/ZDA).
    pub date_lines: u64,
    /// Lines of classes with no decoder (GSV, GSA, other vendors).
    pub unsupported_lines: u64,
    /// Where the segment's date seed came from.
    pub seed: Option<DateSource>,
}

/// Parse classified lines of one segment, in segment order.
///
/// The date context is seeded from the segment's first date sentence; lines
/// before it take that date (or the previous day when they sit more than
/// twelve hours after the anchor's time of day). With no date sentence at
/// all, `segment_open` supplies the date: the first timed line gets the
/// calendar day that puts it closest to the segment open time.
pub fn parse_lines(
    lines: &[ClassifiedLine],
    segment_open: DateTime<Utc>,
    registry: &ParserRegistry,
    exec: Execution,
) -> ParseOutcome {
    let decoded = exec.map(lines, |l| registry.decode_line(l));
    let mut out = ParseOutcome::default();

    let anchor = decoded
        .iter()
        .position(|d| matches!(d, Some(Ok(Decoded::Date { .. }))));
    let mut ctx = match anchor {
        Some(i) => {
            let Some(Ok(Decoded::Date {
                date: anchor_date,
                tod: anchor_tod,
                source,
            })) = decoded[i]
            else {
                unreachable!("anchor points at a date sentence")
            };
            out.seed = Some(source);
            // lines before the anchor, resolved backwards from it
            for (line, d) in lines[..i].iter().zip(&decoded[..i]) {
                match d {
                    Some(Ok(rec)) => {
                        if let Some(tod) = rec.tod() {
                            let day = date_before_anchor(anchor_date, anchor_tod, tod);
                            let ts = day.and_time(tod).and_utc();
                            push_record(&mut out, rec.clone(), ts, line.line_number);
                        }
                    }
                    Some(Err(e)) => push_error(&mut out, line, e),
                    None => out.unsupported_lines += 1,
                }
            }
            // the anchor itself is applied by the forward pass
            DateContext::new(anchor_date, source)
        }
        None => {
            let first_tod = decoded.iter().find_map(|d| match d {
                Some(Ok(rec)) => rec.tod(),
                _ => None,
            });
            out.seed = Some(DateSource::ConfiguredStartDate);
            let date = first_tod
                .map(|t| nearest_date(segment_open, t))
                .unwrap_or_else(|| segment_open.date_naive());
            DateContext::new(date, DateSource::ConfiguredStartDate)
        }
    };

    let start = anchor.unwrap_or(0);
    for (line, d) in lines[start..].iter().zip(&decoded[start..]) {
        match d {
            Some(Ok(Decoded::Date { date, tod, source })) => {
                ctx.apply_date(*date, *tod, *source);
                out.date_lines += 1;
            }
            Some(Ok(rec)) => {
                let tod = rec.tod().expect("fix and loran records carry a time");
                let ts = ctx.resolve(tod);
                push_record(&mut out, rec.clone(), ts, line.line_number);
            }
            Some(Err(e)) => push_error(&mut out, line, e),
            None => out.unsupported_lines += 1,
        }
    }
    out
}

fn push_record(out: &mut ParseOutcome, rec: Decoded, ts: DateTime<Utc>, line_number: u64) {
    match rec {
        Decoded::Fix(f) => out.fixes.push(f.into_fix(ts, line_number)),
        Decoded::Loran(l) => out.loran.push(l.into_measurement(ts, line_number)),
        Decoded::Date { .. } => out.date_lines += 1,
    }
}

fn push_error(out: &mut ParseOutcome, line: &ClassifiedLine, e: &FieldError) {
    out.errors.push(LineError {
        line_number: line.line_number,
        class: line.class.to_string(),
        reason: e.to_string(),
    });
}
