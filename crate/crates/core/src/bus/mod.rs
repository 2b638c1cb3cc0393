//! Register-read protocol between the slave sensor aggregator and the master
//! gateway.
//!
//! The master only ever reads. Every exchange is a request frame answered by
//! exactly one response or error frame; all multi-octet fields are
//! big-endian and every frame ends in a CRC-8 (poly 0x07) over its preceding
//! octets.

mod crc;
mod frame;
mod registers;

pub use crc::crc8;
pub use frame::{
    decode_response, encode_read_request, hex_log_line, slave_respond, BusFrame, FrameError,
    FrameKind, ERR_CHECKSUM, ERR_MALFORMED, ERR_RANGE, FRAME_SYNC, HEADER_LEN, MIN_FRAME_LEN,
};
pub use registers::{
    pack_registers, unpack_registers, RegisterError, RegisterFile, RegisterPacker, SlaveReadings,
    REGISTER_FILE_LEN, REG_BOTTLES, REG_EGGS, REG_SEQUENCE, REG_STATUS, REG_WEIGHTS, STATUS_READY,
};

/// Master's view of the wire: send a request, get back whatever the slave
/// (or a faulty link) answered.
pub trait BusLink {
    fn exchange(&mut self, request: &[u8]) -> Vec<u8>;
}

/// Passive slave node holding the latest scanned register image.
#[derive(Debug, Clone, Default)]
pub struct SlaveNode {
    packer: RegisterPacker,
    file: RegisterFile,
}

impl SlaveNode {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a completed sensor scan.
    pub fn update(&mut self, readings: SlaveReadings) -> Result<(), RegisterError> {
        self.file = self.packer.pack(readings)?;
        Ok(())
    }

    pub fn registers(&self) -> &RegisterFile {
        &self.file
    }

    pub fn respond(&self, request: &[u8]) -> Vec<u8> {
        slave_respond(&self.file, request)
    }
}

impl BusLink for SlaveNode {
    fn exchange(&mut self, request: &[u8]) -> Vec<u8> {
        self.respond(request)
    }
}
