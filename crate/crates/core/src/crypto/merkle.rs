//! Merkle digest over SHA3-256 with leaf/node domain separation.
//!
//! The input is cut into 64-byte chunks (the last one zero-padded) and an
//! extra 8-byte chunk holding the true input length (u64 LE) is appended.
//! Leaves hash as `H(0x00 ‖ chunk)`, internal nodes as `H(0x01 ‖ left ‖ right)`;
//! an unpaired node at the end of a level moves up unchanged.

use std::fmt;

use sha3::{Digest, Sha3_256};

use super::CryptoError;

pub const CHUNK_LEN: usize = 64;
const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelDigest(pub [u8; 32]);

impl ModelDigest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for ModelDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModelDigest({})", self.to_hex())
    }
}

impl fmt::Display for ModelDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub fn sha3(data: &[u8]) -> [u8; 32] {
    Sha3_256::digest(data).into()
}

fn leaf(chunk: &[u8]) -> [u8; 32] {
    let mut h = Sha3_256::new();
    h.update([LEAF_PREFIX]);
    h.update(chunk);
    h.finalize().into()
}

fn node(left: &[u8; 32], right: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha3_256::new();
    h.update([NODE_PREFIX]);
    h.update(left);
    h.update(right);
    h.finalize().into()
}

pub fn merkle_root(data: &[u8]) -> Result<ModelDigest, CryptoError> {
    if data.is_empty() {
        return Err(CryptoError::EmptyInput);
    }
    let mut level: Vec<[u8; 32]> = data
        .chunks(CHUNK_LEN)
        .map(|c| {
            if c.len() == CHUNK_LEN {
                leaf(c)
            } else {
                let mut padded = [0u8; CHUNK_LEN];
                padded[..c.len()].copy_from_slice(c);
                leaf(&padded)
            }
        })
        .collect();
    level.push(leaf(&(data.len() as u64).to_le_bytes()));

    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [l, r] => node(l, r),
                [only] => *only,
                _ => unreachable!(),
            })
            .collect();
    }
    Ok(ModelDigest(level[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_rejected() {
        assert_eq!(merkle_root(&[]), Err(CryptoError::EmptyInput));
    }

    #[test]
    fn sixty_four_bytes_is_a_two_leaf_tree() {
        let data: Vec<u8> = (0..64).collect();
        let expected = node(&leaf(&data), &leaf(&64u64.to_le_bytes()));
        assert_eq!(merkle_root(&data).unwrap().0, expected);
    }

    #[test]
    fn three_leaves_promote_the_odd_one() {
        let data = [7u8; 100];
        let mut second = [0u8; 64];
        second[..36].copy_from_slice(&data[64..]);
        let l = [leaf(&data[..64]), leaf(&second), leaf(&100u64.to_le_bytes())];
        let expected = node(&node(&l[0], &l[1]), &l[2]);
        assert_eq!(merkle_root(&data).unwrap().0, expected);
    }

    #[test]
    fn trailing_zeros_are_not_ambiguous() {
        let a = merkle_root(&[1, 2, 3]).unwrap();
        let b = merkle_root(&[1, 2, 3, 0]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn identical_inputs_identical_roots() {
        let data = vec![0xabu8; 1000];
        assert_eq!(merkle_root(&data).unwrap(), merkle_root(&data.clone()).unwrap());
    }

    #[test]
    fn known_answer_sha3() {
        // FIPS 202 SHA3-256("abc")
        let expected = "3a985da74fe225b2045c172d6bd390bd855f086e3e9d525b46bfe24511431532";
        let got: String = sha3(b"abc").iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(got, expected);
    }
}
