use sha2::{Digest, Sha256};

/// Synthetic body-camera frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBlob(pub Vec<u8>);

impl ImageBlob {
    pub fn bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(&self.0))
    }
}

const JFIF_APP0: [u8; 18] = [
    0xFF, 0xE0, 0x00, 0x10, b'J', b'F', b'I', b'F', 0x00, 0x01, 0x01, 0x00, 0x00, 0x01, 0x00,
    0x01, 0x00, 0x00,
];

/// Produces a tiny JPEG-framed blob whose content depends only on `scene_id`:
/// SOI, a JFIF APP0 header, a comment segment carrying the scene id and a
/// 64-octet hash-derived payload, then EOI.
pub fn camera_capture(scene_id: &str) -> ImageBlob {
    let mut payload = format!("scene={scene_id};").into_bytes();
    let mut block = Sha256::digest(scene_id.as_bytes());
    for _ in 0..2 {
        payload.extend_from_slice(&block);
        block = Sha256::digest(block);
    }
    // comment segments are limited to 65533 payload octets
    payload.truncate(0xFFFD);

    let mut out = Vec::with_capacity(payload.len() + 26);
    out.extend_from_slice(&[0xFF, 0xD8]);
    out.extend_from_slice(&JFIF_APP0);
    out.extend_from_slice(&[0xFF, 0xFE]);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&[0xFF, 0xD9]);
    ImageBlob(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EMPTY_SCENE_DIGEST: &str =
        "6c43e7cd0c898f786e8ec859ffb94a0cbd49268b1acd21b1eeaa8440d50192dd";

    #[test]
    fn jpeg_markers() {
        let blob = camera_capture("empty");
        let b = blob.bytes();
        assert_eq!(&b[..4], &[0xFF, 0xD8, 0xFF, 0xE0]);
        assert_eq!(&b[6..11], b"JFIF\0");
        assert_eq!(&b[b.len() - 2..], &[0xFF, 0xD9]);
    }

    #[test]
    fn empty_scene_golden_digest() {
        assert_eq!(camera_capture("empty").digest(), EMPTY_SCENE_DIGEST);
    }

    #[test]
    fn deterministic_and_distinct() {
        assert_eq!(camera_capture("empty"), camera_capture("empty"));
        let scenes = ["empty", "eggs", "w1000000", "e0000000000000001", "b1000"];
        let digests: std::collections::BTreeSet<String> =
            scenes.iter().map(|s| camera_capture(s).digest()).collect();
        assert_eq!(digests.len(), scenes.len());
    }
}
