//! The narrow set of primitives packet protection needs: SHA-256, HMAC,
//! HKDF with TLS 1.3 labels, AES-128-GCM and the AES-based header
//! protection mask.

use aes::cipher::{generic_array::GenericArray, BlockEncrypt};
use aes_gcm::aead::AeadInPlace;
use aes_gcm::{Aes128Gcm, KeyInit};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};

use super::ProtectionError;

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

pub fn hmac_sha256(key: &[u8], data: &[u8]) -> [u8; 32] {
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(data);
    mac.finalize().into_bytes().into()
}

pub fn hkdf_extract(salt: &[u8], ikm: &[u8]) -> [u8; 32] {
    let (prk, _) = Hkdf::<Sha256>::extract(Some(salt), ikm);
    prk.into()
}

/// HKDF-Expand-Label as defined for TLS 1.3 (the "tls13 " prefix is added here).
pub fn hkdf_expand_label(secret: &[u8], label: &[u8], context: &[u8], len: usize) -> Vec<u8> {
    let hk = Hkdf::<Sha256>::from_prk(secret).expect("secret must be at least 32 bytes");
    let full_label_len = 6 + label.len();
    let mut info = Vec::with_capacity(4 + full_label_len + context.len());
    info.extend_from_slice(&(len as u16).to_be_bytes());
    info.push(full_label_len as u8);
    info.extend_from_slice(b"tls13 ");
    info.extend_from_slice(label);
    info.push(context.len() as u8);
    info.extend_from_slice(context);
    let mut out = vec![0u8; len];
    hk.expand(&info, &mut out).expect("HKDF output length within bounds");
    out
}

pub(crate) fn nonce(iv: &[u8], packet_number: u64) -> [u8; 12] {
    let mut nonce = [0u8; 12];
    nonce.copy_from_slice(iv);
    for (n, p) in nonce[4..].iter_mut().zip(packet_number.to_be_bytes()) {
        *n ^= p;
    }
    nonce
}

/// Encrypts `buf` in place and appends the 16-byte tag.
pub(crate) fn seal(
    key: &[u8],
    iv: &[u8],
    packet_number: u64,
    aad: &[u8],
    buf: &mut Vec<u8>,
) -> Result<(), ProtectionError> {
    let cipher = Aes128Gcm::new_from_slice(key).map_err(|_| ProtectionError::InvalidKey)?;
    let nonce = nonce(iv, packet_number);
    let tag = cipher
        .encrypt_in_place_detached(GenericArray::from_slice(&nonce), aad, buf)
        .map_err(|_| ProtectionError::InvalidKey)?;
    buf.extend_from_slice(&tag);
    Ok(())
}

/// Decrypts `ciphertext || tag`, returning the plaintext.
pub(crate) fn open(
    key: &[u8],
    iv: &[u8],
    packet_number: u64,
    aad: &[u8],
    ciphertext: &[u8],
) -> Result<Vec<u8>, ProtectionError> {
    if ciphertext.len() < 16 {
        return Err(ProtectionError::Authentication);
    }
    let cipher = Aes128Gcm::new_from_slice(key).map_err(|_| ProtectionError::InvalidKey)?;
    let nonce = nonce(iv, packet_number);
    let (body, tag) = ciphertext.split_at(ciphertext.len() - 16);
    let mut buf = body.to_vec();
    cipher
        .decrypt_in_place_detached(
            GenericArray::from_slice(&nonce),
            aad,
            &mut buf,
            GenericArray::from_slice(tag),
        )
        .map_err(|_| ProtectionError::Authentication)?;
    Ok(buf)
}

pub(crate) fn header_mask(hp_key: &[u8], sample: &[u8]) -> Result<[u8; 16], ProtectionError> {
    let cipher = aes::Aes128::new_from_slice(hp_key).map_err(|_| ProtectionError::InvalidKey)?;
    let mut block = GenericArray::clone_from_slice(&sample[..16]);
    cipher.encrypt_block(&mut block);
    Ok(block.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seal_open_round_trip_and_tamper() {
        let key = [7u8; 16];
        let iv = [1u8; 12];
        let mut buf = b"hello".to_vec();
        seal(&key, &iv, 9, b"aad", &mut buf).unwrap();
        assert_eq!(buf.len(), 5 + 16);
        assert_eq!(open(&key, &iv, 9, b"aad", &buf).unwrap(), b"hello");
        assert_eq!(open(&key, &iv, 10, b"aad", &buf), Err(ProtectionError::Authentication));
        buf[0] ^= 1;
        assert_eq!(open(&key, &iv, 9, b"aad", &buf), Err(ProtectionError::Authentication));
    }

    #[test]
    fn nonce_xors_low_bytes() {
        let iv = [0xffu8; 12];
        let n = nonce(&iv, 0x0102);
        assert_eq!(&n[..10], &[0xff; 10]);
        assert_eq!(&n[10..], &[0xfe, 0xfd]);
    }
}
