/// Lowest bottle volume that closed the door-shelf push button.
pub const DEFAULT_BOTTLE_THRESHOLD_ML: u32 = 300;

/// Push button under one bottle slot of the door shelf.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BottleSlotModel {
    pub trigger_threshold_ml: u32,
}

impl BottleSlotModel {
    /// Returns `None` for a zero threshold.
    pub fn new(trigger_threshold_ml: u32) -> Option<Self> {
        (trigger_threshold_ml > 0).then_some(BottleSlotModel {
            trigger_threshold_ml,
        })
    }

    pub fn is_pressed(&self, volume_ml: u32) -> bool {
        volume_ml >= self.trigger_threshold_ml
    }
}

impl Default for BottleSlotModel {
    fn default() -> Self {
        BottleSlotModel {
            trigger_threshold_ml: DEFAULT_BOTTLE_THRESHOLD_ML,
        }
    }
}

pub fn bottle_switch_state(model: &BottleSlotModel, volume_ml: u32) -> bool {
    model.is_pressed(volume_ml)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_edges() {
        let m = BottleSlotModel::default();
        assert!(!bottle_switch_state(&m, 0));
        assert!(!bottle_switch_state(&m, 200));
        assert!(!bottle_switch_state(&m, 299));
        assert!(bottle_switch_state(&m, 300));
        assert!(bottle_switch_state(&m, 1000));
    }

    #[test]
    fn zero_threshold_rejected() {
        assert!(BottleSlotModel::new(0).is_none());
        assert_eq!(BottleSlotModel::new(300), Some(BottleSlotModel::default()));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_in_volume(a in 0u32..5000, b in 0u32..5000, t in 1u32..2000) {
                let m = BottleSlotModel::new(t).unwrap();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(!m.is_pressed(lo) || m.is_pressed(hi));
            }
        }
    }
}
