use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable value");
    hex_digest(&bytes)
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash identifying a (problem, drive) pairing across reports and trajectories.
pub fn pair_hash<A: Serialize + ?Sized, B: Serialize + ?Sized>(a: &A, b: &B) -> String {
    hex_digest(format!("{}|{}", content_hash(a), content_hash(b)).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            hex_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn pair_hash_is_order_sensitive() {
        assert_ne!(pair_hash(&1, &2), pair_hash(&2, &1));
        assert_eq!(pair_hash(&1, &2), pair_hash(&1, &2));
    }
}
