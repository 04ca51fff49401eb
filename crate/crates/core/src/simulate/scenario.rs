//! Scenario description. Defaults are placeholders, not receiver facts.

use std::path::Path;
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::parse::{StationId, StationRole, GRI_MAX, GRI_MIN};

/// Piecewise-linear function of scenario time, as `[seconds, value]`
/// points. Held constant outside the first and last point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Profile(pub Vec<(f64, f64)>);

impl Profile {
    pub fn constant(v: f64) -> Self {
        Profile(vec![(0.0, v)])
    }

    pub fn at(&self, t_s: f64) -> f64 {
        let pts = &self.0;
        let i = pts.partition_point(|&(pt, _)| pt <= t_s);
        if i == 0 {
            return pts[0].1;
        }
        if i == pts.len() {
            return pts[i - 1].1;
        }
        let (t0, v0) = pts[i - 1];
        let (t1, v1) = pts[i];
        v0 + (v1 - v0) * (t_s - t0) / (t1 - t0)
    }

    fn check(&self, what: &str) -> Result<(), String> {
        if self.0.is_empty() {
            return Err(format!("{what}: profile needs at least one point"));
        }
        if self.0.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(format!("{what}: profile values must be finite"));
        }
        if self.0.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(format!("{what}: profile times must increase"));
        }
        Ok(())
    }

    fn range(&self) -> (f64, f64) {
        self.0
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| {
                (lo.min(v), hi.max(v))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationScenario {
    pub gri: u16,
    pub role: StationRole,
    pub rate_hz: f64,
    /// First observation time relative to the scenario start.
    #[serde(default, with = "humantime_serde")]
    pub offset: Duration,
    pub toa_us: Profile,
    pub snr_db: Profile,
    #[serde(default = "default_ecd")]
    pub ecd_us: Profile,
}

fn default_ecd() -> Profile {
    Profile::constant(0.0)
}

impl StationScenario {
    pub fn id(&self) -> StationId {
        StationId::new(self.gri, self.role)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePosition {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_m: f64,
    /// Per-fix Gaussian noise, metres, applied on each axis.
    #[serde(default)]
    pub noise_sigma_m: f64,
}

impl Default for BasePosition {
    fn default() -> Self {
        Self {
            lat_deg: 37.5665,
            lon_deg: 126.978,
            alt_m: 38.0,
            noise_sigma_m: 2.0,
        }
    }
}

/// Per-line corruption probabilities.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Corruption {
    pub bad_checksum_rate: f64,
    /// Chance of a garbage line after each sentence.
    pub garbage_line_rate: f64,
    pub truncation_rate: f64,
}

impl Corruption {
    /// Split `total` evenly over the three kinds.
    pub fn uniform(total: f64) -> Self {
        Self {
            bad_checksum_rate: total / 3.0,
            garbage_line_rate: total / 3.0,
            truncation_rate: total / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: DateTime<Utc>,
    #[serde(with = "humantime_serde")]
    pub duration: Duration,
    pub gps_rate_hz: f64,
    /// `$GPZDA` cadence; absent disables ZDA.
    #[serde(default = "default_zda", with = "humantime_serde")]
    pub zda_interval: Option<Duration>,
    /// `$GPRMC` cadence; absent disables RMC.
    #[serde(default, with = "humantime_serde")]
    pub rmc_interval: Option<Duration>,
    #[serde(default)]
    pub base_position: BasePosition,
    #[serde(default)]
    pub stations: Vec<StationScenario>,
    #[serde(default)]
    pub corruption: Corruption,
}

pub fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2020, 4, 17, 0, 0, 0).unwrap()
}

fn default_zda() -> Option<Duration> {
    Some(Duration::from_secs(60))
}

impl Scenario {
    /// 1 Hz GPS and one 9930M station at 0.1 Hz, no corruption.
    pub fn basic(seed: u64, duration: Duration) -> Self {
        Scenario {
            seed,
            start: default_start(),
            duration,
            gps_rate_hz: 1.0,
            zda_interval: default_zda(),
            rmc_interval: None,
            base_position: BasePosition::default(),
            stations: vec![StationScenario {
                gri: 9930,
                role: StationRole::M,
                rate_hz: 0.1,
                offset: Duration::ZERO,
                toa_us: Profile::constant(12_345.6),
                snr_db: Profile(vec![(0.0, 9.0), (43_200.0, 15.0), (86_400.0, 9.0)]),
                ecd_us: Profile::constant(0.4),
            }],
            corruption: Corruption::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let s: Scenario = toml::from_str(text).map_err(|e| e.to_string())?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.duration.is_zero() {
            return Err("duration must be positive".into());
        }
        check_rate("gps_rate_hz", self.gps_rate_hz)?;
        for (name, iv) in [
            ("zda_interval", self.zda_interval),
            ("rmc_interval", self.rmc_interval),
        ] {
            if iv.is_some_and(|d| d.as_millis() == 0) {
                return Err(format!("{name} must be at least 1ms"));
            }
        }
        let p = &self.base_position;
        if !(-90.0..=90.0).contains(&p.lat_deg) || !(-180.0..=180.0).contains(&p.lon_deg) {
            return Err("base position out of range".into());
        }
        if !(p.noise_sigma_m >= 0.0 && p.noise_sigma_m.is_finite()) {
            return Err("noise_sigma_m must be >= 0".into());
        }
        let c = &self.corruption;
        for (name, r) in [
            ("bad_checksum_rate", c.bad_checksum_rate),
            ("garbage_line_rate", c.garbage_line_rate),
            ("truncation_rate", c.truncation_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("{name} must be within [0, 1]"));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for st in &self.stations {
            let id = st.id();
            if !(GRI_MIN..=GRI_MAX).contains(&st.gri) {
                return Err(format!("station {id}: GRI outside {GRI_MIN}..={GRI_MAX}"));
            }
            if !seen.insert(id) {
                return Err(format!("station {id} listed twice"));
            }
            check_rate(&format!("station {id} rate_hz"), st.rate_hz)?;
            st.toa_us.check(&format!("station {id} toa_us"))?;
            st.snr_db.check(&format!("station {id} snr_db"))?;
            st.ecd_us.check(&format!("station {id} ecd_us"))?;
            let (lo, hi) = st.toa_us.range();
            // leave room for rounding to one decimal
            if lo < 0.0 || hi >= f64::from(st.gri) * 10.0 - 0.05 {
                return Err(format!(
                    "station {id}: TOA must stay within [0, {})",
                    u32::from(st.gri) * 10
                ));
            }
        }
        Ok(())
    }
}

fn check_rate(name: &str, hz: f64) -> Result<(), String> {
    if !(hz.is_finite() && hz > 0.0 && hz <= 1000.0) {
        return Err(format!("{name} must be within (0, 1000]"));
    }
    Ok(())
}
