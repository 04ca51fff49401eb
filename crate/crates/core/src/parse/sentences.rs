//! Field-level decoders for the supported sentences, and their encoders.
//!
//! `$PLRM` layout (one station observation per sentence):
//!
//! ```text
//! $PLRM,<hhmmss.ss>,<gri>,<role>,<toa_us>,<snr_db>,<ecd_us>*hh
//! ```

use chrono::{DateTime, Datelike, NaiveDate, NaiveTime, Timelike, Utc};

use super::coord::{format_coordinate, parse_coordinate, Axis};
use super::time::{format_time_of_day, parse_time_of_day, DateContext, DateSource};
use super::types::{GpsFix, LoranMeasurement, StationRole, GRI_MAX, GRI_MIN};
use super::FieldError;
use crate::classify::{with_checksum, MessageClass};

/// GGA fields before the date is known.
#[derive(Debug, Clone, PartialEq)]
pub struct FixFields {
    pub tod: NaiveTime,
    pub lat_deg: Option<f64>,
    pub lon_deg: Option<f64>,
    pub alt_m: Option<f64>,
    pub fix_quality: u8,
    pub num_sats: u8,
    pub hdop: Option<f64>,
}

impl FixFields {
    pub fn into_fix(self, timestamp: DateTime<Utc>, source_line: u64) -> GpsFix {
        GpsFix {
            timestamp,
            lat_deg: self.lat_deg,
            lon_deg: self.lon_deg,
            alt_m: self.alt_m,
            fix_quality: self.fix_quality,
            num_sats: self.num_sats,
            hdop: self.hdop,
            source_line,
        }
    }
}

/// `$PLRM` fields before the date is known.
#[derive(Debug, Clone, PartialEq)]
pub struct LoranFields {
    pub tod: NaiveTime,
    pub gri: u16,
    pub station_role: StationRole,
    pub toa_us: f64,
    pub snr_db: f64,
    pub ecd_us: f64,
}

impl LoranFields {
    pub fn into_measurement(self, timestamp: DateTime<Utc>, source_line: u64) -> LoranMeasurement {
        LoranMeasurement {
            timestamp,
            gri: self.gri,
            station_role: self.station_role,
            toa_us: self.toa_us,
            snr_db: self.snr_db,
            ecd_us: self.ecd_us,
            source_line,
        }
    }
}

/// Result of decoding one line, independent of any date context.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    Fix(FixFields),
    Loran(LoranFields),
    Date {
        date: NaiveDate,
        tod: Option<NaiveTime>,
        source: DateSource,
    },
}

impl Decoded {
    pub fn tod(&self) -> Option<NaiveTime> {
        match self {
            Decoded::Fix(f) => Some(f.tod),
            Decoded::Loran(l) => Some(l.tod),
            Decoded::Date { tod, .. } => *tod,
        }
    }
}

fn expect_fields(fields: &[&str], expected: usize) -> Result<(), FieldError> {
    if fields.len() != expected {
        return Err(FieldError::FieldCount {
            expected,
            found: fields.len(),
        });
    }
    Ok(())
}

fn number(field: &'static str, s: &str) -> Result<f64, FieldError> {
    let v: f64 = s
        .parse()
        .map_err(|_| FieldError::field(field, format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(FieldError::field(field, format!("not finite: {s:?}")));
    }
    Ok(v)
}

fn optional_number(field: &'static str, s: &str) -> Result<Option<f64>, FieldError> {
    if s.is_empty() {
        Ok(None)
    } else {
        number(field, s).map(Some)
    }
}

fn small_int(field: &'static str, s: &str) -> Result<u8, FieldError> {
    s.parse()
        .map_err(|_| FieldError::field(field, format!("not a small integer: {s:?}")))
}

/// Decode a GGA sentence split on commas (header first, checksum removed).
pub fn decode_gga(fields: &[&str]) -> Result<FixFields, FieldError> {
    expect_fields(fields, 15)?;
    let tod = parse_time_of_day(fields[1])?;
    let fix_quality = if fields[6].is_empty() {
        0
    } else {
        small_int("fix_quality", fields[6])?
    };

    let position_empty = fields[2].is_empty() && fields[4].is_empty();
    let (lat_deg, lon_deg) = if position_empty && fix_quality == 0 {
        (None, None)
    } else {
        (
            Some(parse_coordinate(fields[2], fields[3])?),
            Some(parse_coordinate(fields[4], fields[5])?),
        )
    };
    if matches!(fields[3], "E" | "W") || matches!(fields[5], "N" | "S") {
        return Err(FieldError::field(
            "hemisphere",
            "latitude/longitude swapped",
        ));
    }

    let num_sats = if fields[7].is_empty() {
        0
    } else {
        small_int("num_sats", fields[7])?
    };
    let hdop = optional_number("hdop", fields[8])?;
    if hdop.is_some_and(|h| h < 0.0) {
        return Err(FieldError::field("hdop", "negative"));
    }
    let alt_m = optional_number("altitude", fields[9])?;
    if fix_quality > 0 && alt_m.is_none() {
        return Err(FieldError::field("altitude", "missing on a valid fix"));
    }
    Ok(FixFields {
        tod,
        lat_deg,
        lon_deg,
        alt_m,
        fix_quality,
        num_sats,
        hdop,
    })
}

/// Decode a `$PLRM` sentence.
pub fn decode_loran(fields: &[&str]) -> Result<LoranFields, FieldError> {
    expect_fields(fields, 7)?;
    let tod = parse_time_of_day(fields[1])?;
    let gri: u16 = fields[2]
        .parse()
        .map_err(|_| FieldError::field("gri", format!("not a designator: {:?}", fields[2])))?;
    if !(GRI_MIN..=GRI_MAX).contains(&gri) {
        return Err(FieldError::field(
            "gri",
            format!("{gri} outside designator range {GRI_MIN}..={GRI_MAX}"),
        ));
    }
    let mut role_chars = fields[3].chars();
    let station_role = match (role_chars.next(), role_chars.next()) {
        (Some(c), None) => StationRole::from_letter(c),
        _ => None,
    }
    .ok_or_else(|| FieldError::field("station_role", format!("unknown role {:?}", fields[3])))?;

    let toa_us = number("toa_us", fields[4])?;
    if toa_us < 0.0 || toa_us >= f64::from(gri) * 10.0 {
        return Err(FieldError::field(
            "toa_us",
            format!("{toa_us} outside GRI frame [0, {})", u32::from(gri) * 10),
        ));
    }
    Ok(LoranFields {
        tod,
        gri,
        station_role,
        toa_us,
        snr_db: number("snr_db", fields[5])?,
        ecd_us: number("ecd_us", fields[6])?,
    })
}

/// Extract the calendar date (and time of day) from an RMC or ZDA sentence.
pub fn parse_date_sentence(
    fields: &[&str],
    class: &MessageClass,
) -> Result<(NaiveDate, Option<NaiveTime>, DateSource), FieldError> {
    match class.sentence() {
        Some("ZDA") => {
            if fields.len() < 7 {
                return Err(FieldError::FieldCount {
                    expected: 7,
                    found: fields.len(),
                });
            }
            let tod = optional_tod(fields[1])?;
            let day: u32 = int_field("day", fields[2])?;
            let month: u32 = int_field("month", fields[3])?;
            let year: i32 = int_field("year", fields[4])?;
            if fields[4].len() != 4 {
                return Err(FieldError::field("year", "expected four digits"));
            }
            let date = make_date(year, month, day)?;
            Ok((date, tod, DateSource::Zda))
        }
        Some("RMC") => {
            if fields.len() < 10 {
                return Err(FieldError::FieldCount {
                    expected: 12,
                    found: fields.len(),
                });
            }
            let tod = optional_tod(fields[1])?;
            let d = fields[9];
            if d.len() != 6 || !d.bytes().all(|b| b.is_ascii_digit()) {
                return Err(FieldError::field(
                    "date",
                    format!("expected ddmmyy, got {d:?}"),
                ));
            }
            let day: u32 = int_field("day", &d[0..2])?;
            let month: u32 = int_field("month", &d[2..4])?;
            let yy: i32 = int_field("year", &d[4..6])?;
            let year = if yy >= 80 { 1900 + yy } else { 2000 + yy };
            Ok((make_date(year, month, day)?, tod, DateSource::Rmc))
        }
        _ => Err(FieldError::Unsupported(class.to_string())),
    }
}

fn optional_tod(s: &str) -> Result<Option<NaiveTime>, FieldError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_time_of_day(s).map(Some)
    }
}

fn int_field<T: std::str::FromStr>(field: &'static str, s: &str) -> Result<T, FieldError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(FieldError::field(field, format!("not an integer: {s:?}")));
    }
    s.parse()
        .map_err(|_| FieldError::field(field, format!("not an integer: {s:?}")))
}

fn make_date(year: i32, month: u32, day: u32) -> Result<NaiveDate, FieldError> {
    if !(1..=12).contains(&month) {
        return Err(FieldError::field("month", format!("{month} not in 1..=12")));
    }
    NaiveDate::from_ymd_opt(year, month, day).ok_or_else(|| {
        FieldError::field("day", format!("{year}-{month:02}-{day:02} is not a date"))
    })
}

/// Decode a GGA and resolve its timestamp against `ctx`.
pub fn parse_gga(fields: &[&str], ctx: &mut DateContext) -> Result<GpsFix, FieldError> {
    let f = decode_gga(fields)?;
    let ts = ctx.resolve(f.tod);
    Ok(f.into_fix(ts, 0))
}

/// Decode a `$PLRM` and resolve its timestamp against `ctx`.
pub fn parse_loran(fields: &[&str], ctx: &mut DateContext) -> Result<LoranMeasurement, FieldError> {
    let l = decode_loran(fields)?;
    let ts = ctx.resolve(l.tod);
    Ok(l.into_measurement(ts, 0))
}

/// Split a sentence body into fields after dropping any `*hh` suffix.
pub fn split_fields(line: &str) -> Vec<&str> {
    let body = match line.rfind('*') {
        Some(i) => &line[..i],
        None => line,
    };
    body.split(',').collect()
}

fn opt_tenth(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_default()
}

/// Encode a fix as a checksummed `$GPGGA` sentence (no line terminator).
pub fn serialize_gga(fix: &GpsFix) -> String {
    let tod = format_time_of_day(fix.timestamp.time(), 3);
    let (lat, ns) = match fix.lat_deg {
        Some(v) => {
            let (t, h) = format_coordinate(v, Axis::Latitude);
            (t, h.to_string())
        }
        None => (String::new(), String::new()),
    };
    let (lon, ew) = match fix.lon_deg {
        Some(v) => {
            let (t, h) = format_coordinate(v, Axis::Longitude);
            (t, h.to_string())
        }
        None => (String::new(), String::new()),
    };
    let body = format!(
        "$GPGGA,{tod},{lat},{ns},{lon},{ew},{},{:02},{},{},M,,M,,",
        fix.fix_quality,
        fix.num_sats,
        opt_tenth(fix.hdop),
        opt_tenth(fix.alt_m),
    );
    with_checksum(&body)
}

/// Encode a Loran observation as a checksummed `$PLRM` sentence. The time
/// field carries two decimals unless the millisecond digit is non-zero.
pub fn serialize_loran(m: &LoranMeasurement) -> String {
    let t = m.timestamp.time();
    let decimals = if (t.nanosecond() / 1_000_000).is_multiple_of(10) {
        2
    } else {
        3
    };
    let body = format!(
        "$PLRM,{},{},{},{:.1},{:.1},{:.1}",
        format_time_of_day(t, decimals),
        m.gri,
        m.station_role,
        m.toa_us,
        m.snr_db,
        m.ecd_us
    );
    with_checksum(&body)
}

/// `$GPZDA` for an instant.
pub fn serialize_zda(ts: DateTime<Utc>) -> String {
    let body = format!(
        "$GPZDA,{},{:02},{:02},{:04},00,00",
        format_time_of_day(ts.time(), 2),
        ts.day(),
        ts.month(),
        ts.year()
    );
    with_checksum(&body)
}

/// Minimal `$GPRMC` carrying time, position and date.
pub fn serialize_rmc(ts: DateTime<Utc>, lat_deg: f64, lon_deg: f64) -> String {
    let (lat, ns) = format_coordinate(lat_deg, Axis::Latitude);
    let (lon, ew) = format_coordinate(lon_deg, Axis::Longitude);
    let body = format!(
        "$GPRMC,{},A,{lat},{ns},{lon},{ew},0.0,0.0,{:02}{:02}{:02},,,A",
        format_time_of_day(ts.time(), 3),
        ts.day(),
        ts.month(),
        ts.year().rem_euclid(100)
    );
    with_checksum(&body)
}
