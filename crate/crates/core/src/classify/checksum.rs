//! NMEA 0183 checksum validation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChecksumStatus {
    Valid,
    Invalid,
    Absent,
}

/// XOR of every byte in `bytes`.
pub fn xor_fold(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

/// Check the trailing `*hh` field of a sentence.
///
/// * no `*` anywhere: `Absent`
/// * `*` followed by exactly two hex digits at end of line, with a `$`
///   before it: XOR of the bytes strictly between the first `$` and the
///   last `*` compared case-insensitively, `Valid` or `Invalid`
/// * any other use of `*` (wrong digit count, non-hex, no `$`): `Invalid`
pub fn verify_checksum(line: &[u8]) -> ChecksumStatus {
    let Some(star) = line.iter().rposition(|&b| b == b'*') else {
        return ChecksumStatus::Absent;
    };
    let suffix = &line[star + 1..];
    let Some(dollar) = line[..star].iter().position(|&b| b == b'$') else {
        return ChecksumStatus::Invalid;
    };
    match parse_hex_pair(suffix) {
        Some(expected) if xor_fold(&line[dollar + 1..star]) == expected => ChecksumStatus::Valid,
        _ => ChecksumStatus::Invalid,
    }
}

fn parse_hex_pair(s: &[u8]) -> Option<u8> {
    if s.len() != 2 {
        return None;
    }
    let hi = (s[0] as char).to_digit(16)?;
    let lo = (s[1] as char).to_digit(16)?;
    Some((hi * 16 + lo) as u8)
}

/// Append `*HH` to a sentence body that starts with `$`.
pub fn with_checksum(sentence: &str) -> String {
    let body = sentence.strip_prefix('$').unwrap_or(sentence);
    format!("{sentence}*{:02X}", xor_fold(body.as_bytes()))
}

/// Remove a trailing `*hh` field if present.
pub fn strip_checksum(line: &[u8]) -> &[u8] {
    match line.iter().rposition(|&b| b == b'*') {
        Some(star) => &line[..star],
        None => line,
    }
}
