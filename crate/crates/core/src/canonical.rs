//! Canonical JSON encoding and content digests.
//!
//! Canonical form: object keys sorted lexicographically, no insignificant
//! whitespace, numbers in shortest round-trip decimal form. Identical values
//! always produce identical bytes.

use serde::Serialize;
use serde_json::Value;

/// Serialize a value to canonical JSON.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, serde_json::Error> {
    // `serde_json::Value` keeps objects in a BTreeMap (no `preserve_order`),
    // so routing through it sorts every key.
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    to_canonical_string(value).map(String::into_bytes)
}

/// Canonical string of an already-built JSON value.
pub fn value_to_canonical_string(value: &Value) -> String {
    // Value -> string cannot fail: keys are strings and numbers are finite.
    serde_json::to_string(value).expect("json value serializes")
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lower-case, zero-padded 16 digit hex rendering of a 64-bit digest.
pub fn digest_hex(digest: u64) -> String {
    format!("{digest:016x}")
}
