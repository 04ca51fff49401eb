use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::coord::quantize_coordinate;
use super::time::truncate_ms;

/// Loran station role within a chain: master or one of the secondaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StationRole {
    M,
    V,
    W,
    X,
    Y,
    Z,
}

impl StationRole {
    pub const ALL: [StationRole; 6] = [
        StationRole::M,
        StationRole::V,
        StationRole::W,
        StationRole::X,
        StationRole::Y,
        StationRole::Z,
    ];

    pub fn from_letter(c: char) -> Option<Self> {
        Some(match c {
            'M' => StationRole::M,
            'V' => StationRole::V,
            'W' => StationRole::W,
            'X' => StationRole::X,
            'Y' => StationRole::Y,
            'Z' => StationRole::Z,
            _ => return None,
        })
    }

    pub fn letter(self) -> char {
        match self {
            StationRole::M => 'M',
            StationRole::V => 'V',
            StationRole::W => 'W',
            StationRole::X => 'X',
            StationRole::Y => 'Y',
            StationRole::Z => 'Z',
        }
    }
}

impl fmt::Display for StationRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

pub const GRI_MIN: u16 = 4000;
pub const GRI_MAX: u16 = 9999;

/// GRI designator plus role letter, e.g. `9930M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StationId {
    pub gri: u16,
    pub role: StationRole,
}

impl StationId {
    pub fn new(gri: u16, role: StationRole) -> Self {
        Self { gri, role }
    }
}

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.gri, self.role)
    }
}

impl FromStr for StationId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let role = s
            .chars()
            .last()
            .and_then(StationRole::from_letter)
            .ok_or_else(|| format!("station {s:?}: expected <gri><role>, e.g. 9930M"))?;
        let gri: u16 = s[..s.len() - 1]
            .parse()
            .map_err(|_| format!("station {s:?}: bad GRI designator"))?;
        if !(GRI_MIN..=GRI_MAX).contains(&gri) {
            return Err(format!("station {s:?}: GRI outside {GRI_MIN}..={GRI_MAX}"));
        }
        Ok(StationId { gri, role })
    }
}

impl Serialize for StationId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StationId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A GGA position/time record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub timestamp: DateTime<Utc>,
    /// Absent only on no-fix records with empty position fields.
    pub lat_deg: Option<f64>,
    pub lon_deg: Option<f64>,
    pub alt_m: Option<f64>,
    /// 0 means no fix.
    pub fix_quality: u8,
    pub num_sats: u8,
    pub hdop: Option<f64>,
    pub source_line: u64,
}

impl GpsFix {
    pub fn is_no_fix(&self) -> bool {
        self.fix_quality == 0
    }

    /// The record as it survives a serialize/parse round trip: coordinates
    /// at 1e-4 minute, altitude and HDOP at 0.1, time at 1 ms.
    pub fn quantized(&self) -> GpsFix {
        GpsFix {
            timestamp: truncate_ms(self.timestamp),
            lat_deg: self.lat_deg.map(quantize_coordinate),
            lon_deg: self.lon_deg.map(quantize_coordinate),
            alt_m: self.alt_m.map(quantize_tenth),
            hdop: self.hdop.map(quantize_tenth),
            ..self.clone()
        }
    }

    /// Field-wise comparison at export precision, ignoring the source line.
    pub fn same_measurement(&self, other: &GpsFix) -> bool {
        self.timestamp == other.timestamp
            && opt_close(self.lat_deg, other.lat_deg, COORD_TOLERANCE_DEG)
            && opt_close(self.lon_deg, other.lon_deg, COORD_TOLERANCE_DEG)
            && opt_close(self.alt_m, other.alt_m, TENTH_TOLERANCE)
            && self.fix_quality == other.fix_quality
            && self.num_sats == other.num_sats
            && opt_close(self.hdop, other.hdop, TENTH_TOLERANCE)
    }
}

/// One Loran station observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoranMeasurement {
    pub timestamp: DateTime<Utc>,
    pub gri: u16,
    pub station_role: StationRole,
    /// Time of arrival within the GRI frame, microseconds.
    pub toa_us: f64,
    pub snr_db: f64,
    /// Envelope-to-cycle difference, microseconds.
    pub ecd_us: f64,
    pub source_line: u64,
}

impl LoranMeasurement {
    pub fn station(&self) -> StationId {
        StationId::new(self.gri, self.station_role)
    }

    /// GRI frame length in microseconds.
    pub fn gri_period_us(&self) -> f64 {
        f64::from(self.gri) * 10.0
    }

    pub fn quantized(&self) -> LoranMeasurement {
        LoranMeasurement {
            timestamp: truncate_ms(self.timestamp),
            toa_us: quantize_tenth(self.toa_us),
            snr_db: quantize_tenth(self.snr_db),
            ecd_us: quantize_tenth(self.ecd_us),
            ..self.clone()
        }
    }

    pub fn same_measurement(&self, other: &LoranMeasurement) -> bool {
        self.timestamp == other.timestamp
            && self.gri == other.gri
            && self.station_role == other.station_role
            && close(self.toa_us, other.toa_us, TENTH_TOLERANCE)
            && close(self.snr_db, other.snr_db, TENTH_TOLERANCE)
            && close(self.ecd_us, other.ecd_us, TENTH_TOLERANCE)
    }
}

/// Coordinate agreement required after minute quantisation.
pub const COORD_TOLERANCE_DEG: f64 = 1e-6;
/// One-decimal fields must agree exactly; this only absorbs float noise.
pub const TENTH_TOLERANCE: f64 = 1e-9;

/// Round to one decimal the way the `{:.1}` formatter does, then reparse.
pub fn quantize_tenth(x: f64) -> f64 {
    format!("{x:.1}").parse().unwrap_or(x)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn opt_close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => close(a, b, tol),
        (None, None) => true,
        _ => false,
    }
}
