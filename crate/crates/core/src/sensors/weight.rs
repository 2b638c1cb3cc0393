use rand::Rng;

use super::{SensorError, TempLevel};

/// Smallest count a 24-bit signed converter can report.
pub const COUNTS_MIN: i64 = -(1 << 23);
/// Largest count a 24-bit signed converter can report.
pub const COUNTS_MAX: i64 = (1 << 23) - 1;

/// Zero-load counts of weight sensor #1, indexed by [`TempLevel::index`].
/// `Off` is the first replicate of the compressor-off 0 g row, the on-state
/// levels are the 0 g row of the compressor-on table.
pub const SENSOR1_OFFSETS: [f64; 6] = [183515.0, 168423.0, 159596.0, 158966.0, 161319.0, 158627.0];

/// Least-squares slope over all 30 compressor-off calibration cells of sensor #1.
pub const SENSOR1_GAIN_COUNTS_PER_GRAM: f64 = 653.3033142857142;

/// Half-width of the replicate scatter seen at a fixed mass (about 206 counts
/// peak to peak).
pub const DEFAULT_NOISE_SPAN: u32 = 103;

/// One raw sample from a load-cell amplifier channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawWeightReading {
    pub sensor_id: usize,
    pub counts: i32,
    pub temp_level: TempLevel,
}

impl RawWeightReading {
    pub fn new(sensor_id: usize, counts: i64, temp_level: TempLevel) -> Result<Self, SensorError> {
        if !(COUNTS_MIN..=COUNTS_MAX).contains(&counts) {
            return Err(SensorError::Saturated {
                sensor_id,
                value: counts,
            });
        }
        Ok(RawWeightReading {
            sensor_id,
            counts: counts as i32,
            temp_level,
        })
    }
}

/// Affine counts model of one load cell with a per-temperature zero offset.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightChannelModel {
    pub sensor_id: usize,
    pub offset_counts: [f64; 6],
    pub gain_counts_per_gram: f64,
    pub noise_span_counts: u32,
}

impl WeightChannelModel {
    /// Sensor #1 as measured, with the default replicate noise.
    pub fn sensor1() -> Self {
        WeightChannelModel {
            sensor_id: 0,
            offset_counts: SENSOR1_OFFSETS,
            gain_counts_per_gram: SENSOR1_GAIN_COUNTS_PER_GRAM,
            noise_span_counts: DEFAULT_NOISE_SPAN,
        }
    }

    /// Sensor #1's parameters with every offset shifted by `offset_delta`.
    pub fn derived(sensor_id: usize, offset_delta: f64) -> Self {
        let mut model = Self::sensor1();
        model.sensor_id = sensor_id;
        for offset in &mut model.offset_counts {
            *offset += offset_delta;
        }
        model
    }

    pub fn with_noise(mut self, span: u32) -> Self {
        self.noise_span_counts = span;
        self
    }

    pub fn offset(&self, level: TempLevel) -> f64 {
        self.offset_counts[level.index()]
    }

    /// Noise-free expected counts for `mass` grams at `level`.
    pub fn ideal_counts(&self, mass: f64, level: TempLevel) -> f64 {
        self.offset(level) + self.gain_counts_per_gram * mass
    }
}

/// Samples the channel: `round(offset + gain * mass)` plus integer noise drawn
/// uniformly from `[-noise_span, +noise_span]`.
pub fn read_weight<R: Rng + ?Sized>(
    model: &WeightChannelModel,
    mass: f64,
    temp: TempLevel,
    rng: &mut R,
) -> Result<RawWeightReading, SensorError> {
    if !mass.is_finite() || mass < 0.0 {
        return Err(SensorError::InvalidMass(mass));
    }
    let ideal = model.ideal_counts(mass, temp).round();
    if ideal > COUNTS_MAX as f64 || ideal < COUNTS_MIN as f64 {
        return Err(SensorError::Saturated {
            sensor_id: model.sensor_id,
            value: ideal as i64,
        });
    }
    let noise = if model.noise_span_counts == 0 {
        0
    } else {
        let span = i64::from(model.noise_span_counts);
        rng.random_range(-span..=span)
    };
    RawWeightReading::new(model.sensor_id, ideal as i64 + noise, temp)
}
