//! Counts-to-grams calibration.
//!
//! The curve model has a single gain shared by every temperature level and one
//! zero offset per level. Temperature moves the offset far more than the
//! slope, so pooling the slope keeps a handful of masses per level well posed.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::sensors::{read_weight, RawWeightReading, SensorError, TempLevel, WeightChannelModel};

pub const CALIBRATION_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub mass: f64,
    pub counts: i32,
    pub temp_level: TempLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    pub gain_counts_per_gram: f64,
    /// Fitted zero offset for each [`TempLevel::index`]; `None` when the level
    /// had no samples.
    pub offset_counts_by_level: [Option<f64>; 6],
    pub r_squared: f64,
    pub residual_max_counts: f64,
}

/// Mass recovered from a raw reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassEstimate {
    pub grams: f64,
    pub uncertainty_grams: f64,
    /// The raw estimate was negative and has been clamped to zero.
    pub clamped: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("degenerate fit: level {0} has fewer than 2 distinct masses")]
    Degenerate(TempLevel),
    #[error("no samples at the off level")]
    MissingOffLevel,
    #[error("zero variance: every sample has the same counts")]
    ZeroVariance,
    #[error("fitted gain {0} is not positive")]
    NonPositiveGain(f64),
    #[error("invalid sample mass {0}")]
    InvalidMass(f64),
    #[error("curve has no offset for level {0}")]
    MissingLevel(TempLevel),
    #[error("no calibration curve for weight sensor {0}")]
    MissingSensor(usize),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error("calibration file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl CalibrationCurve {
    pub fn offset(&self, level: TempLevel) -> Result<f64, CalibrationError> {
        self.offset_counts_by_level[level.index()].ok_or(CalibrationError::MissingLevel(level))
    }

    pub fn levels(&self) -> impl Iterator<Item = TempLevel> + '_ {
        TempLevel::ALL
            .into_iter()
            .filter(|l| self.offset_counts_by_level[l.index()].is_some())
    }

    /// Half-width of the mass uncertainty implied by the fit residuals.
    pub fn uncertainty_grams(&self) -> f64 {
        self.residual_max_counts / self.gain_counts_per_gram
    }
}

/// Ordinary least squares with one pooled slope and per-level intercepts.
pub fn fit_curve(samples: &[CalibrationSample]) -> Result<CalibrationCurve, CalibrationError> {
    if let Some(bad) = samples.iter().find(|s| !s.mass.is_finite() || s.mass < 0.0) {
        return Err(CalibrationError::InvalidMass(bad.mass));
    }
    // canonical order makes the floating-point sums independent of input order
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| {
        a.temp_level
            .cmp(&b.temp_level)
            .then(a.mass.total_cmp(&b.mass))
            .then(a.counts.cmp(&b.counts))
    });

    let mut by_level: [Vec<CalibrationSample>; 6] = Default::default();
    for s in &sorted {
        by_level[s.temp_level.index()].push(*s);
    }
    if by_level[TempLevel::Off.index()].is_empty() {
        return Err(CalibrationError::MissingOffLevel);
    }
    for level in TempLevel::ALL {
        let group = &by_level[level.index()];
        if group.is_empty() {
            continue;
        }
        let distinct: BTreeSet<u64> = group.iter().map(|s| s.mass.to_bits()).collect();
        if distinct.len() < 2 {
            return Err(CalibrationError::Degenerate(level));
        }
    }
    let first = sorted[0].counts;
    if sorted.iter().all(|s| s.counts == first) {
        return Err(CalibrationError::ZeroVariance);
    }

    let mut means = [None; 6];
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for level in TempLevel::ALL {
        let group = &by_level[level.index()];
        if group.is_empty() {
            continue;
        }
        let n = group.len() as f64;
        let mx = group.iter().map(|s| s.mass).sum::<f64>() / n;
        let my = group.iter().map(|s| f64::from(s.counts)).sum::<f64>() / n;
        for s in group {
            let dx = s.mass - mx;
            sxx += dx * dx;
            sxy += dx * (f64::from(s.counts) - my);
        }
        means[level.index()] = Some((mx, my));
    }
    let gain = sxy / sxx;
    if gain <= 0.0 || !gain.is_finite() {
        return Err(CalibrationError::NonPositiveGain(gain));
    }
    let offsets = means.map(|m| m.map(|(mx, my)| my - gain * mx));

    let n = sorted.len() as f64;
    let grand_mean = sorted.iter().map(|s| f64::from(s.counts)).sum::<f64>() / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut residual_max: f64 = 0.0;
    for s in &sorted {
        let offset = offsets[s.temp_level.index()].unwrap_or_default();
        let r = f64::from(s.counts) - (offset + gain * s.mass);
        ss_res += r * r;
        ss_tot += (f64::from(s.counts) - grand_mean).powi(2);
        residual_max = residual_max.max(r.abs());
    }
    let r_squared = (1.0 - ss_res / ss_tot).clamp(0.0, 1.0);

    Ok(CalibrationCurve {
        gain_counts_per_gram: gain,
        offset_counts_by_level: offsets,
        r_squared,
        residual_max_counts: residual_max,
    })
}

pub fn counts_to_grams(
    curve: &CalibrationCurve,
    reading: &RawWeightReading,
) -> Result<MassEstimate, CalibrationError> {
    let offset = curve.offset(reading.temp_level)?;
    let raw = (f64::from(reading.counts) - offset) / curve.gain_counts_per_gram;
    Ok(MassEstimate {
        grams: raw.max(0.0),
        uncertainty_grams: curve.uncertainty_grams(),
        clamped: raw < 0.0,
    })
}

/// Absolute error in grams of reading `mass` through `model` and inverting it
/// with `curve`.
pub fn round_trip_check<R: Rng + ?Sized>(
    curve: &CalibrationCurve,
    model: &WeightChannelModel,
    mass: f64,
    temp: TempLevel,
    rng: &mut R,
) -> Result<f64, CalibrationError> {
    let reading = read_weight(model, mass, temp, rng)?;
    Ok((counts_to_grams(curve, &reading)?.grams - mass).abs())
}

/// Calibration run against a simulated channel: `replicates` readings at
/// each mass for each level.
pub fn sweep_samples<R: Rng + ?Sized>(
    model: &WeightChannelModel,
    masses: &[f64],
    levels: &[TempLevel],
    replicates: usize,
    rng: &mut R,
) -> Result<Vec<CalibrationSample>, CalibrationError> {
    let mut out = Vec::with_capacity(masses.len() * levels.len() * replicates);
    for &level in levels {
        for &mass in masses {
            for _ in 0..replicates {
                let r = read_weight(model, mass, level, rng)?;
                out.push(CalibrationSample {
                    mass,
                    counts: r.counts,
                    temp_level: level,
                });
            }
        }
    }
    Ok(out)
}

/// One curve per weight channel, as stored in a calibration file.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub curves: Vec<CalibrationCurve>,
}

impl CalibrationSet {
    pub fn curve(&self, sensor_id: usize) -> Option<&CalibrationCurve> {
        self.curves.get(sensor_id)
    }

    /// Plain-text `key = value` rendering; floats use the shortest exact
    /// representation so reading back yields identical curves.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# fridgesim calibration\n");
        let _ = writeln!(out, "version = {CALIBRATION_FILE_VERSION}");
        let _ = writeln!(out, "sensors = {}", self.curves.len());
        for (i, c) in self.curves.iter().enumerate() {
            let _ = writeln!(out, "sensor.{i}.gain = {:?}", c.gain_counts_per_gram);
            let _ = writeln!(out, "sensor.{i}.r_squared = {:?}", c.r_squared);
            let _ = writeln!(out, "sensor.{i}.residual_max = {:?}", c.residual_max_counts);
            for level in c.levels() {
                let offset = c.offset_counts_by_level[level.index()].unwrap_or_default();
                let _ = writeln!(out, "sensor.{i}.offset.{level} = {offset:?}");
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CalibrationError> {
        let err = |line: usize, msg: String| CalibrationError::Parse { line, msg };
        let mut version = None;
        let mut count = None;
        let mut curves: Vec<CalibrationCurve> = Vec::new();
        let mut gains: Vec<Option<f64>> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let (key, value) = raw
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(line, format!("expected key = value, got {raw:?}")))?;
            match key {
                "version" => {
                    let v: u32 = value.parse().map_err(|_| err(line, "bad version".into()))?;
                    if v != CALIBRATION_FILE_VERSION {
                        return Err(err(line, format!("unsupported version {v}")));
                    }
                    version = Some(v);
                }
                "sensors" => {
                    let n: usize = value.parse().map_err(|_| err(line, "bad sensor count".into()))?;
                    curves = vec![
                        CalibrationCurve {
                            gain_counts_per_gram: 0.0,
                            offset_counts_by_level: [None; 6],
                            r_squared: 0.0,
                            residual_max_counts: 0.0,
                        };
                        n
                    ];
                    gains = vec![None; n];
                    count = Some(n);
                }
                _ => {
                    let parts: Vec<&str> = key.split('.').collect();
                    if parts.len() < 3 || parts[0] != "sensor" {
                        return Err(err(line, format!("unknown key {key:?}")));
                    }
                    let i: usize = parts[1]
                        .parse()
                        .map_err(|_| err(line, format!("bad sensor index in {key:?}")))?;
                    let n = curves.len();
                    let curve = curves
                        .get_mut(i)
                        .ok_or_else(|| err(line, format!("sensor {i} beyond declared count {n}")))?;
                    let v: f64 = value
                        .parse()
                        .map_err(|_| err(line, format!("bad number {value:?}")))?;
                    match (parts[2], parts.get(3)) {
                        ("gain", None) => {
                            curve.gain_counts_per_gram = v;
                            gains[i] = Some(v);
                        }
                        ("r_squared", None) => curve.r_squared = v,
                        ("residual_max", None) => curve.residual_max_counts = v,
                        ("offset", Some(level)) => {
                            let level: TempLevel =
                                level.parse().map_err(|e: SensorError| err(line, e.to_string()))?;
                            curve.offset_counts_by_level[level.index()] = Some(v);
                        }
                        _ => return Err(err(line, format!("unknown key {key:?}"))),
                    }
                }
            }
        }
        if version.is_none() {
            return Err(err(0, "missing version".into()));
        }
        if count.is_none() {
            return Err(err(0, "missing sensors".into()));
        }
        for (i, (curve, gain)) in curves.iter().zip(&gains).enumerate() {
            match gain {
                Some(g) if *g > 0.0 => {}
                _ => return Err(err(0, format!("sensor {i} lacks a positive gain"))),
            }
            if curve.offset_counts_by_level[TempLevel::Off.index()].is_none() {
                return Err(err(0, format!("sensor {i} lacks an off offset")));
            }
        }
        Ok(CalibrationSet { curves })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(mass: f64, counts: i32, temp_level: TempLevel) -> CalibrationSample {
        CalibrationSample {
            mass,
            counts,
            temp_level,
        }
    }

    #[test]
    fn two_point_line_is_exact() {
        let c = fit_curve(&[sample(0.0, 1000, TempLevel::Off), sample(100.0, 2000, TempLevel::Off)])
            .unwrap();
        assert!((c.gain_counts_per_gram - 10.0).abs() < 1e-12);
        assert!((c.offset(TempLevel::Off).unwrap() - 1000.0).abs() < 1e-9);
        assert!((c.r_squared - 1.0).abs() < 1e-12);
        assert!(c.residual_max_counts < 1e-9);
    }

    #[test]
    fn single_mass_is_degenerate() {
        let s = [sample(100.0, 1000, TempLevel::Off), sample(100.0, 1010, TempLevel::Off)];
        assert_eq!(fit_curve(&s), Err(CalibrationError::Degenerate(TempLevel::Off)));
        let s = [
            sample(0.0, 1000, TempLevel::Off),
            sample(100.0, 2000, TempLevel::Off),
            sample(50.0, 900, TempLevel::T2),
        ];
        assert_eq!(fit_curve(&s), Err(CalibrationError::Degenerate(TempLevel::T2)));
    }

    #[test]
    fn identical_counts_have_zero_variance() {
        let s = [sample(0.0, 5, TempLevel::Off), sample(100.0, 5, TempLevel::Off)];
        assert_eq!(fit_curve(&s), Err(CalibrationError::ZeroVariance));
    }

    #[test]
    fn off_level_required() {
        let s = [sample(0.0, 5, TempLevel::T1), sample(100.0, 50, TempLevel::T1)];
        assert_eq!(fit_curve(&s), Err(CalibrationError::MissingOffLevel));
        assert_eq!(fit_curve(&[]), Err(CalibrationError::MissingOffLevel));
    }

    #[test]
    fn decreasing_counts_rejected() {
        let s = [sample(0.0, 500, TempLevel::Off), sample(100.0, 50, TempLevel::Off)];
        assert!(matches!(fit_curve(&s), Err(CalibrationError::NonPositiveGain(_))));
    }

    #[test]
    fn off_state_table_fit() {
        let c = fit_curve(&fixtures::off_state_samples()).unwrap();
        assert!((c.gain_counts_per_gram - 653.3033142857142).abs() < 0.5);
        assert!(c.r_squared >= 0.999);
        let reading = RawWeightReading::new(0, 510112, TempLevel::Off).unwrap();
        let est = counts_to_grams(&c, &reading).unwrap();
        assert!((est.grams - 500.0).abs() <= 5.0, "{est:?}");
    }

    #[test]
    fn offset_maps_to_zero() {
        let c = fit_curve(&fixtures::off_state_samples()).unwrap();
        let offset = c.offset(TempLevel::Off).unwrap().round() as i64;
        let est = counts_to_grams(&c, &RawWeightReading::new(0, offset, TempLevel::Off).unwrap())
            .unwrap();
        assert!(est.grams < 1.0 / c.gain_counts_per_gram);
    }

    #[test]
    fn on_state_t1_200g() {
        let mut all = fixtures::off_state_samples();
        all.extend(fixtures::on_state_samples());
        let c = fit_curve(&all).unwrap();
        let reading = RawWeightReading::new(0, 292241, TempLevel::T1).unwrap();
        let est = counts_to_grams(&c, &reading).unwrap();
        assert!((est.grams - 200.0).abs() <= est.uncertainty_grams, "{est:?}");
    }

    #[test]
    fn missing_level_and_clamp() {
        let c = fit_curve(&fixtures::off_state_samples()).unwrap();
        let r = RawWeightReading::new(0, 180_000, TempLevel::T3).unwrap();
        assert_eq!(counts_to_grams(&c, &r), Err(CalibrationError::MissingLevel(TempLevel::T3)));
        let r = RawWeightReading::new(0, 100_000, TempLevel::Off).unwrap();
        let est = counts_to_grams(&c, &r).unwrap();
        assert_eq!(est.grams, 0.0);
        assert!(est.clamped);
    }

    #[test]
    fn round_trip_noise_free() {
        let model = WeightChannelModel::sensor1().with_noise(0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples =
            sweep_samples(&model, &[0.0, 100.0, 200.0, 300.0, 400.0, 500.0], &TempLevel::ALL, 1, &mut rng)
                .unwrap();
        let curve = fit_curve(&samples).unwrap();
        let err = round_trip_check(&curve, &model, 250.0, TempLevel::Off, &mut rng).unwrap();
        assert!(err <= curve.residual_max_counts / curve.gain_counts_per_gram + 1e-9);
        let err = round_trip_check(&curve, &model, 0.0, TempLevel::T3, &mut rng).unwrap();
        assert!(err <= 1.0 / curve.gain_counts_per_gram);
    }

    #[test]
    fn round_trip_with_noise_mean_error() {
        let model = WeightChannelModel::sensor1();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let samples =
            sweep_samples(&model, &[0.0, 100.0, 200.0, 300.0, 400.0, 500.0], &TempLevel::ALL, 5, &mut rng)
                .unwrap();
        let curve = fit_curve(&samples).unwrap();
        let mean = (0..1000)
            .map(|_| round_trip_check(&curve, &model, 400.0, TempLevel::T2, &mut rng).unwrap())
            .sum::<f64>()
            / 1000.0;
        let bound = (curve.residual_max_counts + f64::from(model.noise_span_counts))
            / curve.gain_counts_per_gram;
        assert!(mean <= bound, "mean {mean} bound {bound}");
    }

    #[test]
    fn calibration_file_round_trip() {
        let mut all = fixtures::off_state_samples();
        all.extend(fixtures::on_state_samples());
        let set = CalibrationSet {
            curves: vec![
                fit_curve(&all).unwrap(),
                fit_curve(&fixtures::off_state_samples()).unwrap(),
            ],
        };
        let parsed = CalibrationSet::parse(&set.to_text()).unwrap();
        assert_eq!(parsed, set);
    }

    #[test]
    fn calibration_file_errors() {
        assert!(CalibrationSet::parse("sensors = 1\n").is_err());
        assert!(CalibrationSet::parse("version = 2\nsensors = 0\n").is_err());
        let text = "version = 1\nsensors = 1\nsensor.0.offset.off = 5\n";
        assert!(CalibrationSet::parse(text).is_err());
        let text = "version = 1\nsensors = 1\nsensor.1.gain = 5\n";
        assert!(matches!(
            CalibrationSet::parse(text),
            Err(CalibrationError::Parse { line: 3, .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn table_samples() -> Vec<CalibrationSample> {
            let mut all = fixtures::off_state_samples();
            all.extend(fixtures::on_state_samples());
            all
        }

        proptest! {
            #[test]
            fn fit_ignores_sample_order(seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                let mut shuffled = table_samples();
                shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                prop_assert_eq!(fit_curve(&shuffled).unwrap(), fit_curve(&table_samples()).unwrap());
            }

            #[test]
            fn constant_shift_moves_offsets_only(c in -100_000i32..100_000) {
                let base = fit_curve(&table_samples()).unwrap();
                let shifted: Vec<_> = table_samples()
                    .into_iter()
                    .map(|s| CalibrationSample { counts: s.counts + c, ..s })
                    .collect();
                let moved = fit_curve(&shifted).unwrap();
                prop_assert!((moved.gain_counts_per_gram - base.gain_counts_per_gram).abs() < 1e-6);
                for level in TempLevel::ALL {
                    let d = moved.offset(level).unwrap() - base.offset(level).unwrap();
                    prop_assert!((d - f64::from(c)).abs() < 1e-5);
                }
            }

            #[test]
            fn inverse_is_strictly_increasing(a in 0i32..1_000_000, b in 0i32..1_000_000, lvl in 0usize..6) {
                prop_assume!(a != b);
                let curve = fit_curve(&table_samples()).unwrap();
                let level = TempLevel::from_index(lvl).unwrap();
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let raw = |c: i32| (f64::from(c) - curve.offset(level).unwrap()) / curve.gain_counts_per_gram;
                // strictly increasing before the clamp at zero
                prop_assert!(raw(lo) < raw(hi));
                let g = |c: i32| counts_to_grams(&curve, &RawWeightReading::new(0, i64::from(c), level).unwrap()).unwrap().grams;
                prop_assert!(g(lo) <= g(hi));
            }
        }
    }
}
