//! Header-based message classification.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Message class read from the header of a line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MessageClass {
    /// `$` + 2-letter talker + 3-letter sentence formatter.
    NmeaStandard {
        talker: String,
        sentence: String,
    },
    /// `$P` + vendor tag.
    NmeaProprietary {
        vendor_tag: String,
    },
    Unknown,
}

impl MessageClass {
    pub fn standard(talker: &str, sentence: &str) -> Self {
        MessageClass::NmeaStandard {
            talker: talker.to_owned(),
            sentence: sentence.to_owned(),
        }
    }

    pub fn proprietary(tag: &str) -> Self {
        MessageClass::NmeaProprietary {
            vendor_tag: tag.to_owned(),
        }
    }

    /// Sentence formatter for standard sentences (`"GGA"`, `"ZDA"`, ...).
    pub fn sentence(&self) -> Option<&str> {
        match self {
            MessageClass::NmeaStandard { sentence, .. } => Some(sentence),
            _ => None,
        }
    }

    pub fn vendor_tag(&self) -> Option<&str> {
        match self {
            MessageClass::NmeaProprietary { vendor_tag } => Some(vendor_tag),
            _ => None,
        }
    }

    /// Store name used for output files: `GPGGA`, `P_LRM`; `None` for unknown.
    pub fn store_name(&self) -> Option<String> {
        match self {
            MessageClass::NmeaStandard { talker, sentence } => Some(format!("{talker}{sentence}")),
            MessageClass::NmeaProprietary { vendor_tag } => Some(format!("P_{vendor_tag}")),
            MessageClass::Unknown => None,
        }
    }

    /// Inverse of [`store_name`](Self::store_name).
    pub fn from_store_name(name: &str) -> Option<Self> {
        if let Some(tag) = name.strip_prefix("P_") {
            let ok = !tag.is_empty() && tag.bytes().all(is_tag_byte);
            return ok.then(|| MessageClass::proprietary(tag));
        }
        let b = name.as_bytes();
        (b.len() == 5 && b.iter().all(u8::is_ascii_uppercase))
            .then(|| MessageClass::standard(&name[..2], &name[2..]))
    }
}

impl fmt::Display for MessageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.store_name() {
            Some(name) => f.write_str(&name),
            None => f.write_str("unknown"),
        }
    }
}

fn is_tag_byte(b: u8) -> bool {
    b.is_ascii_uppercase() || b.is_ascii_digit()
}

fn is_header_end(rest: &[u8]) -> bool {
    matches!(rest.first(), None | Some(b',') | Some(b'*'))
}

/// Classify a line by its header. Total: anything unrecognisable is
/// [`MessageClass::Unknown`].
///
/// A `$P` header is always read as proprietary, even when it would also fit
/// the five-letter standard pattern (`$PGRMZ`), since `P` is not a standard
/// talker.
pub fn classify_line(line: &[u8]) -> MessageClass {
    let Some(body) = line.strip_prefix(b"$") else {
        return MessageClass::Unknown;
    };

    if let Some(after_p) = body.strip_prefix(b"P") {
        let tag_len = after_p.iter().take_while(|&&b| is_tag_byte(b)).count();
        if tag_len > 0 && is_header_end(&after_p[tag_len..]) {
            // tag bytes are ASCII
            let tag = std::str::from_utf8(&after_p[..tag_len]).unwrap_or_default();
            return MessageClass::proprietary(tag);
        }
        return MessageClass::Unknown;
    }

    if body.len() >= 5 && body[..5].iter().all(u8::is_ascii_uppercase) && is_header_end(&body[5..])
    {
        let head = std::str::from_utf8(&body[..5]).unwrap_or_default();
        return MessageClass::standard(&head[..2], &head[2..]);
    }
    MessageClass::Unknown
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_header() {
        assert_eq!(
            classify_line(b"$GPGGA,092750.000,5321.6802,N"),
            MessageClass::standard("GP", "GGA")
        );
        assert_eq!(
            classify_line(b"$GNZDA*4F"),
            MessageClass::standard("GN", "ZDA")
        );
        assert_eq!(
            classify_line(b"$GPRMC"),
            MessageClass::standard("GP", "RMC")
        );
    }

    #[test]
    fn proprietary_header() {
        assert_eq!(
            classify_line(b"$PLRM,092750.00,9930,M,1,2,3"),
            MessageClass::proprietary("LRM")
        );
        assert_eq!(
            classify_line(b"$PGRMZ,93,f,3*21"),
            MessageClass::proprietary("GRMZ")
        );
        assert_eq!(classify_line(b"$PUBX"), MessageClass::proprietary("UBX"));
    }

    #[test]
    fn unknown_lines() {
        assert_eq!(
            classify_line(b"garbage \x00\xff line"),
            MessageClass::Unknown
        );
        assert_eq!(classify_line(b""), MessageClass::Unknown);
        assert_eq!(classify_line(b"$"), MessageClass::Unknown);
        assert_eq!(classify_line(b"$P,1,2"), MessageClass::Unknown);
        assert_eq!(classify_line(b"$Plrm,1"), MessageClass::Unknown);
        assert_eq!(classify_line(b"$GPGG,1"), MessageClass::Unknown);
        assert_eq!(classify_line(b"$GPGGAX,1"), MessageClass::Unknown);
        assert_eq!(classify_line(b"$gpgga,1"), MessageClass::Unknown);
        assert_eq!(classify_line(b" $GPGGA,1"), MessageClass::Unknown);
        assert_eq!(classify_line(b"!AIVDM,1"), MessageClass::Unknown);
    }

    #[test]
    fn store_names_round_trip() {
        for c in [
            MessageClass::standard("GP", "GGA"),
            MessageClass::proprietary("LRM"),
        ] {
            let name = c.store_name().unwrap();
            assert_eq!(MessageClass::from_store_name(&name), Some(c));
        }
        assert_eq!(MessageClass::Unknown.store_name(), None);
        assert_eq!(MessageClass::from_store_name("quarantine"), None);
    }
}
