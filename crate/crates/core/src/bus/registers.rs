use thiserror::Error;

use crate::sensors::{
    TempLevel, BOTTLE_SLOTS, COUNTS_MAX, COUNTS_MIN, EGG_SLOTS, WEIGHT_SLOTS,
};

/// Size of the slave's register map in octets.
pub const REGISTER_FILE_LEN: usize = 30;

pub const REG_STATUS: usize = 0;
pub const REG_WEIGHTS: usize = 1;
pub const REG_EGGS: usize = REG_WEIGHTS + 4 * WEIGHT_SLOTS;
pub const REG_BOTTLES: usize = REG_EGGS + 2;
pub const REG_SEQUENCE: usize = REG_BOTTLES + 1;

/// Status bit set once the aggregator has completed a scan.
pub const STATUS_READY: u8 = 0x80;
const STATUS_LEVEL_MASK: u8 = 0x07;

/// Byte image of the slave aggregator's registers.
///
/// | offset | size | field                                           |
/// |--------|------|-------------------------------------------------|
/// | 0      | 1    | status: bit 7 ready, bits 0..2 temperature level |
/// | 1      | 24   | six weight channels, i32 big-endian             |
/// | 25     | 2    | egg bitmap, u16 big-endian, bit `tray*8 + slot` |
/// | 27     | 1    | bottle bitmap, low nibble                       |
/// | 28     | 2    | sequence, u16 big-endian                        |
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegisterFile([u8; REGISTER_FILE_LEN]);

impl Default for RegisterFile {
    fn default() -> Self {
        RegisterFile([0; REGISTER_FILE_LEN])
    }
}

impl RegisterFile {
    pub fn from_bytes(bytes: [u8; REGISTER_FILE_LEN]) -> Self {
        RegisterFile(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, RegisterError> {
        let arr: [u8; REGISTER_FILE_LEN] = bytes
            .try_into()
            .map_err(|_| RegisterError::WrongSize(bytes.len()))?;
        Ok(RegisterFile(arr))
    }

    pub fn as_bytes(&self) -> &[u8; REGISTER_FILE_LEN] {
        &self.0
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8; REGISTER_FILE_LEN] {
        &mut self.0
    }

    pub fn status(&self) -> u8 {
        self.0[REG_STATUS]
    }

    pub fn weight_counts(&self, channel: usize) -> i32 {
        let at = REG_WEIGHTS + 4 * channel;
        i32::from_be_bytes([self.0[at], self.0[at + 1], self.0[at + 2], self.0[at + 3]])
    }

    pub fn egg_bitmap(&self) -> u16 {
        u16::from_be_bytes([self.0[REG_EGGS], self.0[REG_EGGS + 1]])
    }

    pub fn bottle_bitmap(&self) -> u8 {
        self.0[REG_BOTTLES]
    }

    pub fn sequence(&self) -> u16 {
        u16::from_be_bytes([self.0[REG_SEQUENCE], self.0[REG_SEQUENCE + 1]])
    }
}

/// Everything the aggregator scans in one pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlaveReadings {
    pub temp_level: TempLevel,
    pub weight_counts: [i32; WEIGHT_SLOTS],
    pub eggs: [bool; EGG_SLOTS],
    pub bottles: [bool; BOTTLE_SLOTS],
}

impl SlaveReadings {
    pub fn empty(temp_level: TempLevel, weight_counts: [i32; WEIGHT_SLOTS]) -> Self {
        SlaveReadings {
            temp_level,
            weight_counts,
            eggs: [false; EGG_SLOTS],
            bottles: [false; BOTTLE_SLOTS],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegisterError {
    #[error("channel {channel} counts {counts} do not fit 24 bits")]
    CountOverflow { channel: usize, counts: i64 },
    #[error("register image must be {REGISTER_FILE_LEN} octets, got {0}")]
    WrongSize(usize),
    #[error("status octet {0:#04x} is not valid")]
    BadStatus(u8),
    #[error("bottle bitmap {0:#04x} uses the high nibble")]
    BottleHighNibble(u8),
}

fn fits_24(counts: i64) -> bool {
    (COUNTS_MIN..=COUNTS_MAX).contains(&counts)
}

pub fn pack_registers(readings: &SlaveReadings, sequence: u16) -> Result<RegisterFile, RegisterError> {
    let mut file = RegisterFile::default();
    let b = file.as_bytes_mut();
    b[REG_STATUS] = STATUS_READY | readings.temp_level.index() as u8;
    for (ch, counts) in readings.weight_counts.iter().enumerate() {
        if !fits_24(i64::from(*counts)) {
            return Err(RegisterError::CountOverflow {
                channel: ch,
                counts: i64::from(*counts),
            });
        }
        let at = REG_WEIGHTS + 4 * ch;
        b[at..at + 4].copy_from_slice(&counts.to_be_bytes());
    }
    let eggs = readings
        .eggs
        .iter()
        .enumerate()
        .fold(0u16, |acc, (i, on)| acc | (u16::from(*on) << i));
    b[REG_EGGS..REG_EGGS + 2].copy_from_slice(&eggs.to_be_bytes());
    b[REG_BOTTLES] = readings
        .bottles
        .iter()
        .enumerate()
        .fold(0u8, |acc, (i, on)| acc | (u8::from(*on) << i));
    b[REG_SEQUENCE..REG_SEQUENCE + 2].copy_from_slice(&sequence.to_be_bytes());
    Ok(file)
}

/// Inverse of [`pack_registers`]; returns the readings and the sequence.
pub fn unpack_registers(file: &RegisterFile) -> Result<(SlaveReadings, u16), RegisterError> {
    let status = file.status();
    if status & STATUS_READY == 0 || status & !(STATUS_READY | STATUS_LEVEL_MASK) != 0 {
        return Err(RegisterError::BadStatus(status));
    }
    let temp_level = TempLevel::from_index(usize::from(status & STATUS_LEVEL_MASK))
        .ok_or(RegisterError::BadStatus(status))?;
    let mut weight_counts = [0i32; WEIGHT_SLOTS];
    for (ch, slot) in weight_counts.iter_mut().enumerate() {
        let counts = file.weight_counts(ch);
        if !fits_24(i64::from(counts)) {
            return Err(RegisterError::CountOverflow {
                channel: ch,
                counts: i64::from(counts),
            });
        }
        *slot = counts;
    }
    let bitmap = file.egg_bitmap();
    let eggs = std::array::from_fn(|i| bitmap & (1 << i) != 0);
    let bottle_bits = file.bottle_bitmap();
    if bottle_bits & 0xF0 != 0 {
        return Err(RegisterError::BottleHighNibble(bottle_bits));
    }
    let bottles = std::array::from_fn(|i| bottle_bits & (1 << i) != 0);
    Ok((
        SlaveReadings {
            temp_level,
            weight_counts,
            eggs,
            bottles,
        },
        file.sequence(),
    ))
}

/// The aggregator's register writer: bumps the sequence whenever the scanned
/// inputs differ from the previous scan.
#[derive(Debug, Clone, Default)]
pub struct RegisterPacker {
    last: Option<SlaveReadings>,
    sequence: u16,
}

impl RegisterPacker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sequence(&self) -> u16 {
        self.sequence
    }

    pub fn pack(&mut self, readings: SlaveReadings) -> Result<RegisterFile, RegisterError> {
        let next = match &self.last {
            Some(prev) if *prev == readings => self.sequence,
            Some(_) => self.sequence.wrapping_add(1),
            None => 0,
        };
        let file = pack_registers(&readings, next)?;
        self.sequence = next;
        self.last = Some(readings);
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::SENSOR1_OFFSETS;

    #[test]
    fn layout_offsets() {
        assert_eq!(REG_EGGS, 25);
        assert_eq!(REG_BOTTLES, 27);
        assert_eq!(REG_SEQUENCE + 2, REGISTER_FILE_LEN);
    }

    #[test]
    fn empty_fridge_packs_offsets() {
        let counts = SENSOR1_OFFSETS.map(|o| o as i32);
        let file = pack_registers(&SlaveReadings::empty(TempLevel::Off, counts), 0).unwrap();
        for (ch, c) in counts.iter().enumerate() {
            assert_eq!(file.weight_counts(ch), *c);
        }
        assert_eq!(file.egg_bitmap(), 0x0000);
        assert_eq!(file.bottle_bitmap(), 0x0);
        assert_eq!(file.status(), STATUS_READY);
    }

    #[test]
    fn minus_one_is_all_ones() {
        let mut counts = [0; WEIGHT_SLOTS];
        counts[2] = -1;
        let file = pack_registers(&SlaveReadings::empty(TempLevel::T4, counts), 9).unwrap();
        assert_eq!(&file.as_bytes()[9..13], &[0xFF; 4]);
        assert_eq!(file.status(), STATUS_READY | 4);
        assert_eq!(file.sequence(), 9);
    }

    #[test]
    fn egg_bit_positions() {
        let mut r = SlaveReadings::empty(TempLevel::Off, [0; WEIGHT_SLOTS]);
        r.eggs[8 + 3] = true;
        r.bottles[3] = true;
        let file = pack_registers(&r, 0).unwrap();
        assert_eq!(file.egg_bitmap(), 1 << 11);
        assert_eq!(file.bottle_bitmap(), 0b1000);
    }

    #[test]
    fn overflowing_counts_rejected() {
        let mut counts = [0; WEIGHT_SLOTS];
        counts[5] = 1 << 23;
        assert_eq!(
            pack_registers(&SlaveReadings::empty(TempLevel::Off, counts), 0),
            Err(RegisterError::CountOverflow { channel: 5, counts: 1 << 23 })
        );
    }

    #[test]
    fn unpack_rejects_bad_images() {
        let file = RegisterFile::default();
        assert_eq!(unpack_registers(&file), Err(RegisterError::BadStatus(0)));
        let mut file = pack_registers(&SlaveReadings::empty(TempLevel::Off, [0; 6]), 0).unwrap();
        file.as_bytes_mut()[REG_BOTTLES] = 0x10;
        assert_eq!(unpack_registers(&file), Err(RegisterError::BottleHighNibble(0x10)));
        let mut file = pack_registers(&SlaveReadings::empty(TempLevel::Off, [0; 6]), 0).unwrap();
        file.as_bytes_mut()[REG_STATUS] = STATUS_READY | 6;
        assert!(unpack_registers(&file).is_err());
        file.as_bytes_mut()[REG_STATUS] = STATUS_READY;
        file.as_bytes_mut()[REG_WEIGHTS] = 0x01;
        assert!(matches!(unpack_registers(&file), Err(RegisterError::CountOverflow { .. })));
    }

    #[test]
    fn packer_sequence_follows_changes() {
        let mut packer = RegisterPacker::new();
        let a = SlaveReadings::empty(TempLevel::Off, [1; 6]);
        let mut b = a.clone();
        b.eggs[0] = true;
        assert_eq!(packer.pack(a.clone()).unwrap().sequence(), 0);
        assert_eq!(packer.pack(a.clone()).unwrap().sequence(), 0);
        assert_eq!(packer.pack(b.clone()).unwrap().sequence(), 1);
        assert_eq!(packer.pack(b).unwrap().sequence(), 1);
        assert_eq!(packer.pack(a).unwrap().sequence(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        pub fn readings() -> impl Strategy<Value = SlaveReadings> {
            (
                0usize..6,
                proptest::array::uniform6(COUNTS_MIN as i32..=COUNTS_MAX as i32),
                proptest::array::uniform16(any::<bool>()),
                proptest::array::uniform4(any::<bool>()),
            )
                .prop_map(|(lvl, weight_counts, eggs, bottles)| SlaveReadings {
                    temp_level: TempLevel::from_index(lvl).unwrap(),
                    weight_counts,
                    eggs,
                    bottles,
                })
        }

        proptest! {
            #[test]
            fn pack_unpack_identity(r in readings(), seq in any::<u16>()) {
                let file = pack_registers(&r, seq).unwrap();
                prop_assert_eq!(file.bottle_bitmap() & 0xF0, 0);
                prop_assert_eq!(unpack_registers(&file).unwrap(), (r, seq));
            }

            #[test]
            fn sequence_strictly_increases_on_change(rs in proptest::collection::vec(readings(), 1..20)) {
                let mut packer = RegisterPacker::new();
                let mut prev: Option<(SlaveReadings, u16)> = None;
                for r in rs {
                    let seq = packer.pack(r.clone()).unwrap().sequence();
                    if let Some((p, ps)) = &prev {
                        if *p == r { prop_assert_eq!(seq, *ps); } else { prop_assert_eq!(seq, ps + 1); }
                    }
                    prev = Some((r, seq));
                }
            }
        }
    }
}
