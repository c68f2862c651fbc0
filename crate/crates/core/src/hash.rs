//! FNV-1a 64-bit hashing.
//!
//! Used for embedding bucket assignment and traffic-split arm selection.
//! FNV-1a is pinned (offset basis `0xcbf29ce484222325`, prime
//! `0x100000001b3`) so that alternate implementations in other languages
//! can reproduce vectors and assignments bit-exactly.

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a 64-bit over a byte slice.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET_BASIS;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vectors() {
        // Standard FNV-1a test vectors.
        assert_eq!(fnv1a_64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a_64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a_64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn deterministic() {
        assert_eq!(fnv1a_64(b"session-42"), fnv1a_64(b"session-42"));
        assert_ne!(fnv1a_64(b"session-42"), fnv1a_64(b"session-43"));
    }
}
