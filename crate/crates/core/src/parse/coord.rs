//! `ddmm.mmmm` / `dddmm.mmmm` coordinate encoding.

use super::FieldError;

const TEN_THOUSANDTHS_PER_DEGREE: i64 = 60 * 10_000;

/// Which axis a hemisphere letter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Latitude,
    Longitude,
}

impl Axis {
    fn field(self) -> &'static str {
        match self {
            Axis::Latitude => "latitude",
            Axis::Longitude => "longitude",
        }
    }

    fn limit(self) -> f64 {
        match self {
            Axis::Latitude => 90.0,
            Axis::Longitude => 180.0,
        }
    }
}

/// Parse a degrees+minutes value with its hemisphere into signed decimal
/// degrees (negative for S and W).
pub fn parse_coordinate(value: &str, hemisphere: &str) -> Result<f64, FieldError> {
    let (axis, negative) = match hemisphere {
        "N" => (Axis::Latitude, false),
        "S" => (Axis::Latitude, true),
        "E" => (Axis::Longitude, false),
        "W" => (Axis::Longitude, true),
        other => {
            return Err(FieldError::field(
                "hemisphere",
                format!("expected N/S/E/W, got {other:?}"),
            ))
        }
    };
    let field = axis.field();
    let bad = |reason: &str| FieldError::field(field, format!("{reason} in {value:?}"));

    let int_len = value.find('.').unwrap_or(value.len());
    let int_part = &value[..int_len];
    let frac_part = value.get(int_len + 1..).unwrap_or("");
    if int_len < 3 || !int_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("expected degrees followed by two-digit minutes"));
    }
    if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("non-numeric minutes"));
    }
    let degrees: f64 = int_part[..int_len - 2]
        .parse()
        .map_err(|_| bad("bad degrees"))?;
    let minutes: f64 = value[int_len - 2..]
        .parse()
        .map_err(|_| bad("bad minutes"))?;
    if minutes >= 60.0 {
        return Err(bad("minutes not below 60"));
    }
    let magnitude = degrees + minutes / 60.0;
    if magnitude > axis.limit() {
        return Err(bad("out of range"));
    }
    Ok(if negative { -magnitude } else { magnitude })
}

/// Encode signed decimal degrees as (`ddmm.mmmm`, hemisphere). Zero is
/// written as N/E.
pub fn format_coordinate(deg: f64, axis: Axis) -> (String, char) {
    let total = (deg.abs() * 60.0 * 10_000.0).round() as i64;
    let whole = total / TEN_THOUSANDTHS_PER_DEGREE;
    let rem = total % TEN_THOUSANDTHS_PER_DEGREE;
    let (min_int, min_frac) = (rem / 10_000, rem % 10_000);
    let negative = deg < 0.0 && total != 0;
    match axis {
        Axis::Latitude => (
            format!("{whole:02}{min_int:02}.{min_frac:04}"),
            if negative { 'S' } else { 'N' },
        ),
        Axis::Longitude => (
            format!("{whole:03}{min_int:02}.{min_frac:04}"),
            if negative { 'W' } else { 'E' },
        ),
    }
}

/// Degrees as they read back after [`format_coordinate`].
pub fn quantize_coordinate(deg: f64) -> f64 {
    let total = (deg.abs() * 60.0 * 10_000.0).round() as i64;
    if total == 0 {
        return 0.0;
    }
    let whole = (total / TEN_THOUSANDTHS_PER_DEGREE) as f64;
    let minutes = (total % TEN_THOUSANDTHS_PER_DEGREE) as f64 / 10_000.0;
    let magnitude = whole + minutes / 60.0;
    if deg < 0.0 {
        -magnitude
    } else {
        magnitude
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let lat = parse_coordinate("4916.45", "N").unwrap();
        assert!((lat - (49.0 + 16.45 / 60.0)).abs() < 1e-12);
        assert!((lat - 49.274_166_666_666_67).abs() < 1e-9);
        assert_eq!(parse_coordinate("0000.00", "N").unwrap(), 0.0);
        let lon = parse_coordinate("12311.12", "W").unwrap();
        assert!((lon + (123.0 + 11.12 / 60.0)).abs() < 1e-12);
        assert!((lon + 123.185_333_333_333_33).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_minutes_and_text() {
        let err = parse_coordinate("4960.00", "N").unwrap_err();
        assert!(err.to_string().contains("latitude"));
        assert!(parse_coordinate("49x6.00", "N").is_err());
        assert!(parse_coordinate("", "N").is_err());
        assert!(parse_coordinate("12", "E").is_err());
        assert!(parse_coordinate("4916.45", "Q").is_err());
        assert!(parse_coordinate("9100.00", "N").is_err());
        assert!(parse_coordinate("18100.00", "E").is_err());
        assert!(parse_coordinate("4916.4a", "N").is_err());
    }

    #[test]
    fn zero_uses_north_east() {
        assert_eq!(
            format_coordinate(0.0, Axis::Latitude),
            ("0000.0000".to_owned(), 'N')
        );
        assert_eq!(
            format_coordinate(0.0, Axis::Longitude),
            ("00000.0000".to_owned(), 'E')
        );
        assert_eq!(format_coordinate(-1e-12, Axis::Longitude).1, 'E');
    }

    #[test]
    fn minute_carry_does_not_produce_sixty() {
        // 59.99996 minutes rounds up into the next degree
        let deg = 37.0 + 59.999_96 / 60.0;
        let (text, hemi) = format_coordinate(deg, Axis::Latitude);
        assert_eq!(text, "3800.0000");
        assert_eq!(parse_coordinate(&text, &hemi.to_string()).unwrap(), 38.0);
        assert_eq!(quantize_coordinate(deg), 38.0);
    }

    #[test]
    fn quantize_matches_parse_of_format() {
        for &deg in &[
            37.5665_f64,
            -126.978_123_4,
            89.999_999,
            -179.999_999_9,
            0.000_01,
        ] {
            let axis = if deg.abs() <= 90.0 {
                Axis::Latitude
            } else {
                Axis::Longitude
            };
            let (text, hemi) = format_coordinate(deg, axis);
            let back = parse_coordinate(&text, &hemi.to_string()).unwrap();
            assert_eq!(back, quantize_coordinate(deg), "{deg}");
        }
    }
}
