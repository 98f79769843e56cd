//! Per-purpose seed derivation.
//!
//! Every random stream in a run is keyed on one global seed plus a purpose
//! tag: `derive_seed(global, tag)` is the 64-bit FNV-1a hash of the global
//! seed's little-endian bytes followed by the UTF-8 bytes of the tag.

pub const SUPERNET: &str = "supernet";
pub const DATASET: &str = "dataset";
pub const PROBE: &str = "probe";
pub const SEARCH: &str = "search";
pub const BENCH: &str = "bench";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn derive_seed(global: u64, tag: &str) -> u64 {
    let mut bytes = global.to_le_bytes().to_vec();
    bytes.extend_from_slice(tag.as_bytes());
    fnv1a64(&bytes)
}
