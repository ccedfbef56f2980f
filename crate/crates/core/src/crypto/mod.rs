//! Model digests, regulator keys and fairness certificates.
//!
//! Hash: SHA3-256. Signatures: Ed25519 (deterministic).
//!
//! Certificate message: `"FCRT1"` ‖ digest (32 B) ‖ metric id (1 B) ‖ ε, δ, α
//! as u32 LE micro-units (α = 0xFFFFFFFF when absent) ‖ u16 LE length ‖
//! fairness string. A certificate file is the message followed by the
//! regulator key id (SHA3-256 of the verification key) and the 64-byte
//! signature.

mod merkle;

use ed25519_dalek::{Signer, Verifier};
use thiserror::Error;

pub use merkle::{merkle_root, sha3, ModelDigest, CHUNK_LEN};

use crate::codec::{DecodeError, Reader, Writer};
use crate::fairness::FairnessSpec;

pub const CERT_MAGIC: &[u8; 5] = b"FCRT1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("empty input")]
    EmptyInput,
    #[error("malformed verification key")]
    MalformedKey,
    #[error("malformed certificate: {0}")]
    MalformedCertificate(#[from] DecodeError),
}

pub type Signature = [u8; 64];

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct VerificationKey(pub [u8; 32]);

impl VerificationKey {
    /// SHA3-256 fingerprint, published as the regulator's key id.
    pub fn key_id(&self) -> [u8; 32] {
        sha3(&self.0)
    }

    fn dalek(&self) -> Result<ed25519_dalek::VerifyingKey, CryptoError> {
        ed25519_dalek::VerifyingKey::from_bytes(&self.0).map_err(|_| CryptoError::MalformedKey)
    }
}

pub struct KeyPair {
    signing: ed25519_dalek::SigningKey,
}

impl KeyPair {
    pub fn signing_key(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn verification_key(&self) -> VerificationKey {
        VerificationKey(self.signing.verifying_key().to_bytes())
    }
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("verification_key", &self.verification_key())
            .finish_non_exhaustive()
    }
}

pub fn keygen(seed: &[u8; 32]) -> KeyPair {
    KeyPair {
        signing: ed25519_dalek::SigningKey::from_bytes(seed),
    }
}

pub fn sign(kp: &KeyPair, message: &[u8]) -> Signature {
    kp.signing.sign(message).to_bytes()
}

/// `Ok(false)` for a bad signature; `Err` only when the key itself cannot be
/// decoded.
pub fn verify(vk: &VerificationKey, message: &[u8], signature: &Signature) -> Result<bool, CryptoError> {
    let key = vk.dalek()?;
    let sig = ed25519_dalek::Signature::from_bytes(signature);
    Ok(key.verify(message, &sig).is_ok())
}

pub fn certificate_message(digest: &ModelDigest, spec: &FairnessSpec) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(CERT_MAGIC).bytes(&digest.0);
    spec.encode_into(&mut w);
    w.finish()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub digest: ModelDigest,
    pub spec: FairnessSpec,
    pub signature: Signature,
    pub regulator_key_id: [u8; 32],
}

impl Certificate {
    pub fn message(&self) -> Vec<u8> {
        certificate_message(&self.digest, &self.spec)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.message();
        out.extend_from_slice(&self.regulator_key_id);
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes);
        r.expect_magic(CERT_MAGIC)?;
        let digest = ModelDigest(r.array()?);
        let spec = FairnessSpec::decode_from(&mut r)?;
        let regulator_key_id = r.array()?;
        let signature = r.array()?;
        r.finish()?;
        Ok(Certificate {
            digest,
            spec,
            signature,
            regulator_key_id,
        })
    }
}

pub fn issue_certificate(kp: &KeyPair, digest: ModelDigest, spec: FairnessSpec) -> Certificate {
    let signature = sign(kp, &certificate_message(&digest, &spec));
    Certificate {
        digest,
        spec,
        signature,
        regulator_key_id: kp.verification_key().key_id(),
    }
}

/// Checks the certificate's signature over its own digest and spec.
pub fn verify_certificate(vk: &VerificationKey, cert: &Certificate) -> Result<bool, CryptoError> {
    verify(vk, &cert.message(), &cert.signature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::FairnessMetric;
    use crate::micro::Micro;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(eps: &str) -> FairnessSpec {
        FairnessSpec::private(FairnessMetric::Ore, eps.parse().unwrap(), "0.05".parse().unwrap()).unwrap()
    }

    #[test]
    fn sign_verify_round_trip_and_bit_flips() {
        let kp = keygen(&[7; 32]);
        let vk = kp.verification_key();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let len = rng.gen_range(1..200);
            let mut msg: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let sig = sign(&kp, &msg);
            assert!(verify(&vk, &msg, &sig).unwrap());
            assert_eq!(sig, sign(&kp, &msg), "deterministic");
            let bit = rng.gen_range(0..len * 8);
            msg[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify(&vk, &msg, &sig).unwrap());
        }
    }

    #[test]
    fn signature_bit_flip_fails() {
        let kp = keygen(&[3; 32]);
        let sig = sign(&kp, b"hello");
        for bit in (0..512).step_by(7) {
            let mut bad = sig;
            bad[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify(&kp.verification_key(), b"hello", &bad).unwrap());
        }
    }

    #[test]
    fn other_key_fails() {
        let a = keygen(&[1; 32]);
        let b = keygen(&[2; 32]);
        assert_ne!(a.verification_key(), b.verification_key());
        let sig = sign(&a, b"msg");
        assert!(!verify(&b.verification_key(), b"msg", &sig).unwrap());
    }

    #[test]
    fn malformed_key() {
        // y = 2 is not the y-coordinate of any curve point
        let mut bytes = [0u8; 32];
        bytes[0] = 2;
        assert_eq!(verify(&VerificationKey(bytes), b"m", &[0; 64]), Err(CryptoError::MalformedKey));
    }

    #[test]
    fn certificate_binds_digest_and_parameters() {
        let kp = keygen(&[9; 32]);
        let vk = kp.verification_key();
        let digest = merkle_root(b"some model bytes").unwrap();
        let cert = issue_certificate(&kp, digest, spec("0.05"));
        assert!(verify_certificate(&vk, &cert).unwrap());
        assert_eq!(cert.regulator_key_id, vk.key_id());

        let mut other = cert.clone();
        other.digest.0[31] ^= 0x01;
        assert!(!verify_certificate(&vk, &other).unwrap());

        let mut other = cert.clone();
        other.spec = spec("0.051");
        assert!(!verify_certificate(&vk, &other).unwrap());

        let mut other = cert.clone();
        other.spec = cert.spec.with_delta(Micro::from_units(50_001)).unwrap();
        assert!(!verify_certificate(&vk, &other).unwrap());

        let mut other = cert.clone();
        other.spec = FairnessSpec::private(FairnessMetric::Eo, cert.spec.epsilon(), cert.spec.delta()).unwrap();
        assert!(!verify_certificate(&vk, &other).unwrap());

        let mut other = cert.clone();
        other.spec = FairnessSpec::augmented(FairnessMetric::Ore, cert.spec.epsilon(), cert.spec.delta(), Micro::from_units(1)).unwrap();
        assert!(!verify_certificate(&vk, &other).unwrap());
    }

    #[test]
    fn certificate_file_layout() {
        let kp = keygen(&[4; 32]);
        let s = spec("0.1");
        let cert = issue_certificate(&kp, ModelDigest([0xaa; 32]), s.clone());
        let bytes = cert.to_bytes();
        let msg_len = 5 + 32 + 1 + 12 + 2 + s.fairness_string().len();
        assert_eq!(bytes.len(), msg_len + 32 + 64);
        assert_eq!(&bytes[..5], b"FCRT1");
        assert_eq!(&bytes[5..37], &[0xaa; 32]);
        assert_eq!(bytes[37], 0);
        assert_eq!(&bytes[38..42], &100_000u32.to_le_bytes());
        assert_eq!(&bytes[42..46], &50_000u32.to_le_bytes());
        assert_eq!(&bytes[46..50], &[0xff; 4]);
        assert_eq!(&bytes[50..52], &(s.fairness_string().len() as u16).to_le_bytes());
        assert_eq!(Certificate::from_bytes(&bytes).unwrap(), cert);
        assert!(Certificate::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
