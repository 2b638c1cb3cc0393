use std::fmt::Write as _;

use thiserror::Error;

use super::crc::crc8;
use super::registers::{RegisterFile, REGISTER_FILE_LEN};

/// First octet of every frame.
pub const FRAME_SYNC: u8 = 0xA5;
/// Sync, kind, register, length.
pub const HEADER_LEN: usize = 4;
/// Header plus checksum.
pub const MIN_FRAME_LEN: usize = HEADER_LEN + 1;

pub const ERR_CHECKSUM: u8 = 0x01;
pub const ERR_RANGE: u8 = 0x02;
pub const ERR_MALFORMED: u8 = 0x03;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    ReadRequest,
    ReadResponse,
    Error,
}

impl FrameKind {
    pub fn code(self) -> u8 {
        match self {
            FrameKind::ReadRequest => 0x01,
            FrameKind::ReadResponse => 0x02,
            FrameKind::Error => 0x03,
        }
    }

    pub fn from_code(code: u8) -> Option<FrameKind> {
        match code {
            0x01 => Some(FrameKind::ReadRequest),
            0x02 => Some(FrameKind::ReadResponse),
            0x03 => Some(FrameKind::Error),
            _ => None,
        }
    }

    /// Octets of payload implied by the header's length field.
    fn payload_len(self, length: u8) -> usize {
        match self {
            // a request's length is the window it asks for, it carries nothing
            FrameKind::ReadRequest => 0,
            FrameKind::ReadResponse => usize::from(length),
            FrameKind::Error => 1,
        }
    }
}

/// One bus exchange unit:
/// `[sync][kind][register][length][payload..][crc8 over everything before]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusFrame {
    pub kind: FrameKind,
    pub register: u8,
    pub length: u8,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame truncated: have {have} octets, need {need}")]
    Truncated { have: usize, need: usize },
    #[error("checksum mismatch: frame carries {carried:#04x}, computed {computed:#04x}")]
    Checksum { carried: u8, computed: u8 },
    #[error("bad sync octet {0:#04x}")]
    BadSync(u8),
    #[error("unknown frame kind {0:#04x}")]
    UnknownKind(u8),
    #[error("frame has {extra} trailing octets")]
    TrailingOctets { extra: usize },
    #[error("length field {length} disagrees with the frame kind")]
    BadLength { length: u8 },
    #[error("expected a {expected:?} frame, got {got:?}")]
    UnexpectedKind { expected: FrameKind, got: FrameKind },
    #[error("slave reported error code {0:#04x}")]
    Remote(u8),
    #[error("window {register}+{length} outside the {REGISTER_FILE_LEN}-octet register file")]
    Range { register: usize, length: usize },
}

impl BusFrame {
    pub fn read_request(register: u8, length: u8) -> Self {
        BusFrame {
            kind: FrameKind::ReadRequest,
            register,
            length,
            payload: Vec::new(),
        }
    }

    pub fn read_response(register: u8, payload: Vec<u8>) -> Self {
        BusFrame {
            kind: FrameKind::ReadResponse,
            register,
            length: payload.len() as u8,
            payload,
        }
    }

    pub fn error(register: u8, code: u8) -> Self {
        BusFrame {
            kind: FrameKind::Error,
            register,
            length: 1,
            payload: vec![code],
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MIN_FRAME_LEN + self.payload.len());
        out.extend_from_slice(&[FRAME_SYNC, self.kind.code(), self.register, self.length]);
        out.extend_from_slice(&self.payload);
        out.push(crc8(&out));
        out
    }

    pub fn checksum(&self) -> u8 {
        *self.encode().last().unwrap_or(&0)
    }

    pub fn decode(octets: &[u8]) -> Result<BusFrame, FrameError> {
        if octets.len() < MIN_FRAME_LEN {
            return Err(FrameError::Truncated {
                have: octets.len(),
                need: MIN_FRAME_LEN,
            });
        }
        let kind = FrameKind::from_code(octets[1]);
        let length = octets[3];
        if let (FRAME_SYNC, Some(kind)) = (octets[0], kind) {
            let need = MIN_FRAME_LEN + kind.payload_len(length);
            if octets.len() < need {
                return Err(FrameError::Truncated {
                    have: octets.len(),
                    need,
                });
            }
        }
        let (body, crc) = octets.split_at(octets.len() - 1);
        let computed = crc8(body);
        if computed != crc[0] {
            return Err(FrameError::Checksum {
                carried: crc[0],
                computed,
            });
        }
        if octets[0] != FRAME_SYNC {
            return Err(FrameError::BadSync(octets[0]));
        }
        let kind = kind.ok_or(FrameError::UnknownKind(octets[1]))?;
        if kind == FrameKind::Error && length != 1 {
            return Err(FrameError::BadLength { length });
        }
        let payload = &body[HEADER_LEN..];
        let expected = kind.payload_len(length);
        if payload.len() != expected {
            return Err(FrameError::TrailingOctets {
                extra: payload.len() - expected,
            });
        }
        Ok(BusFrame {
            kind,
            register: octets[2],
            length,
            payload: payload.to_vec(),
        })
    }
}

fn check_window(register: usize, length: usize) -> Result<(), FrameError> {
    if length == 0 || register + length > REGISTER_FILE_LEN {
        return Err(FrameError::Range { register, length });
    }
    Ok(())
}

/// Master-side request for `length` register octets starting at `register`.
pub fn encode_read_request(register: usize, length: usize) -> Result<Vec<u8>, FrameError> {
    check_window(register, length)?;
    Ok(BusFrame::read_request(register as u8, length as u8).encode())
}

/// Slave-side handling of one request. Never modifies `file`.
pub fn slave_respond(file: &RegisterFile, request: &[u8]) -> Vec<u8> {
    let register = request.get(2).copied().unwrap_or(0);
    // integrity first: a corrupted header must not be reported as anything else
    if let Some((crc, body)) = request.split_last() {
        if request.len() >= MIN_FRAME_LEN && crc8(body) != *crc {
            return BusFrame::error(register, ERR_CHECKSUM).encode();
        }
    }
    let frame = match BusFrame::decode(request) {
        Ok(f) => f,
        Err(FrameError::Checksum { .. }) => return BusFrame::error(register, ERR_CHECKSUM).encode(),
        Err(_) => return BusFrame::error(register, ERR_MALFORMED).encode(),
    };
    if frame.kind != FrameKind::ReadRequest {
        return BusFrame::error(frame.register, ERR_MALFORMED).encode();
    }
    let (start, len) = (usize::from(frame.register), usize::from(frame.length));
    if check_window(start, len).is_err() {
        return BusFrame::error(frame.register, ERR_RANGE).encode();
    }
    BusFrame::read_response(frame.register, file.as_bytes()[start..start + len].to_vec()).encode()
}

/// Payload of a valid read response.
pub fn decode_response(octets: &[u8]) -> Result<Vec<u8>, FrameError> {
    let frame = BusFrame::decode(octets)?;
    match frame.kind {
        FrameKind::ReadResponse => Ok(frame.payload),
        FrameKind::Error => Err(FrameError::Remote(frame.payload[0])),
        got => Err(FrameError::UnexpectedKind {
            expected: FrameKind::ReadResponse,
            got,
        }),
    }
}

/// One debug line per frame: `SEQ reg len payload crc`, all hex, payload `-`
/// when empty. Undecodable frames are dumped raw after `SEQ !`.
pub fn hex_log_line(seq: u64, octets: &[u8]) -> String {
    let mut line = String::new();
    match BusFrame::decode(octets) {
        Ok(frame) => {
            let payload = if frame.payload.is_empty() {
                "-".to_string()
            } else {
                hex::encode(&frame.payload)
            };
            let _ = write!(
                line,
                "{seq:06} {:02x} {:02x} {payload} {:02x}",
                frame.register,
                frame.length,
                octets[octets.len() - 1]
            );
        }
        Err(_) => {
            let _ = write!(line, "{seq:06} ! {}", hex::encode(octets));
        }
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::crc::crc8;

    #[test]
    fn full_window_request() {
        let req = encode_read_request(0, 30).unwrap();
        assert_eq!(req.len(), HEADER_LEN + 1);
        let frame = BusFrame::decode(&req).unwrap();
        assert_eq!((frame.register, frame.length), (0, 30));
        assert_eq!(frame.kind, FrameKind::ReadRequest);
    }

    #[test]
    fn window_past_end_rejected() {
        assert_eq!(
            encode_read_request(0, 31),
            Err(FrameError::Range { register: 0, length: 31 })
        );
        assert!(encode_read_request(29, 2).is_err());
        assert!(encode_read_request(3, 0).is_err());
        assert!(encode_read_request(29, 1).is_ok());
    }

    #[test]
    fn request_checksum_matches_oracle() {
        let req = encode_read_request(1, 24).unwrap();
        assert_eq!(req[4], crc8(&req[..4]));
        assert_eq!(&req[..4], &[FRAME_SYNC, 0x01, 1, 24]);
    }

    #[test]
    fn full_window_response_with_all_eggs() {
        let mut file = RegisterFile::default();
        file.as_bytes_mut()[25] = 0xFF;
        file.as_bytes_mut()[26] = 0xFF;
        let before = file.clone();
        let resp = slave_respond(&file, &encode_read_request(0, 30).unwrap());
        let payload = decode_response(&resp).unwrap();
        assert_eq!(payload.len(), 30);
        assert_eq!(&payload[25..27], &[0xFF, 0xFF]);
        assert_eq!(file, before);
    }

    #[test]
    fn egg_window_slice() {
        let mut file = RegisterFile::default();
        file.as_bytes_mut()[25] = 0x12;
        file.as_bytes_mut()[26] = 0x34;
        let resp = slave_respond(&file, &encode_read_request(25, 2).unwrap());
        assert_eq!(decode_response(&resp).unwrap(), vec![0x12, 0x34]);
    }

    #[test]
    fn every_request_bit_flip_yields_checksum_error() {
        let file = RegisterFile::default();
        let req = encode_read_request(0, 30).unwrap();
        for bit in 0..req.len() * 8 {
            let mut bad = req.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            let before = file.clone();
            let resp = slave_respond(&file, &bad);
            assert_eq!(decode_response(&resp), Err(FrameError::Remote(ERR_CHECKSUM)), "bit {bit}");
            assert_eq!(file, before);
        }
    }

    #[test]
    fn out_of_range_request_yields_range_error() {
        // hand-built so the encoder's own range check is bypassed
        let req = BusFrame::read_request(20, 20).encode();
        let resp = slave_respond(&RegisterFile::default(), &req);
        assert_eq!(decode_response(&resp), Err(FrameError::Remote(ERR_RANGE)));
    }

    #[test]
    fn non_request_frame_is_malformed() {
        let req = BusFrame::read_response(0, vec![1, 2]).encode();
        let resp = slave_respond(&RegisterFile::default(), &req);
        assert_eq!(decode_response(&resp), Err(FrameError::Remote(ERR_MALFORMED)));
        let resp = slave_respond(&RegisterFile::default(), &[]);
        assert_eq!(decode_response(&resp), Err(FrameError::Remote(ERR_MALFORMED)));
    }

    #[test]
    fn decode_errors_are_distinct() {
        assert!(matches!(decode_response(&[]), Err(FrameError::Truncated { .. })));

        let mut good = BusFrame::read_response(0, vec![9; 30]).encode();
        let last = good.len() - 1;
        good[last] = good[last].wrapping_add(1);
        assert!(matches!(decode_response(&good), Err(FrameError::Checksum { .. })));

        let mut unknown = vec![FRAME_SYNC, 0x09, 0, 0];
        unknown.push(crc8(&unknown));
        assert_eq!(decode_response(&unknown), Err(FrameError::UnknownKind(0x09)));

        let whole = BusFrame::read_response(0, vec![1, 2, 3]).encode();
        assert!(matches!(
            decode_response(&whole[..whole.len() - 2]),
            Err(FrameError::Truncated { .. })
        ));

        let req = encode_read_request(0, 4).unwrap();
        assert!(matches!(decode_response(&req), Err(FrameError::UnexpectedKind { .. })));
    }

    #[test]
    fn every_response_bit_flip_detected() {
        let payload: Vec<u8> = (0..30u8).map(|i| i.wrapping_mul(29)).collect();
        let frame = BusFrame::read_response(0, payload).encode();
        for bit in 0..frame.len() * 8 {
            let mut bad = frame.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            assert!(decode_response(&bad).is_err(), "bit {bit} undetected");
        }
    }

    #[test]
    fn hex_log_format() {
        let req = encode_read_request(25, 2).unwrap();
        let line = hex_log_line(7, &req);
        assert_eq!(line, format!("000007 19 02 - {:02x}", req[4]));
        let resp = BusFrame::read_response(25, vec![0xab, 0xcd]).encode();
        assert!(hex_log_line(8, &resp).starts_with("000008 19 02 abcd "));
        assert_eq!(hex_log_line(9, &[1, 2]), "000009 ! 0102");
    }
}
