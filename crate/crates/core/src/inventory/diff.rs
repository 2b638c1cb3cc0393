use std::collections::BTreeSet;
use std::fmt;

use super::snapshot::{Grams, InventorySnapshot};
use super::InventoryError;
use crate::sensors::SLOTS_PER_TRAY;

/// One comparable field of a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    Weight(usize),
    Presence(usize),
    /// Flat egg index `tray * 8 + slot`.
    Egg(usize),
    Bottle(usize),
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Weight(i) => write!(f, "weight[{i}]"),
            Field::Presence(i) => write!(f, "present[{i}]"),
            Field::Egg(i) => write!(f, "eggs[tray{}.slot{}]", i / SLOTS_PER_TRAY, i % SLOTS_PER_TRAY),
            Field::Bottle(i) => write!(f, "bottles[{i}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeSet {
    pub changed_fields: BTreeSet<Field>,
    pub prev_seq: u64,
    pub next_seq: u64,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.changed_fields.is_empty()
    }
}

/// Fields that differ between two snapshots. Weight moves of at most
/// `deadband` are ignored; presence and occupancy always count.
/// Symmetric in its two snapshot arguments.
pub fn changed_fields(a: &InventorySnapshot, b: &InventorySnapshot, deadband: Grams) -> BTreeSet<Field> {
    let mut out = BTreeSet::new();
    for (i, (wa, wb)) in a.weights.iter().zip(&b.weights).enumerate() {
        if wa.grams.abs_diff(wb.grams) > deadband {
            out.insert(Field::Weight(i));
        }
        if wa.present != wb.present {
            out.insert(Field::Presence(i));
        }
    }
    out.extend(
        a.eggs
            .iter()
            .zip(&b.eggs)
            .enumerate()
            .filter(|(_, (x, y))| x != y)
            .map(|(i, _)| Field::Egg(i)),
    );
    out.extend(
        a.bottles
            .iter()
            .zip(&b.bottles)
            .enumerate()
            .filter(|(_, (x, y))| x != y)
            .map(|(i, _)| Field::Bottle(i)),
    );
    out
}

/// Change set from `prev` to `next`; `next` must be the later snapshot.
pub fn diff(
    prev: &InventorySnapshot,
    next: &InventorySnapshot,
    deadband: Grams,
) -> Result<ChangeSet, InventoryError> {
    if next.seq <= prev.seq {
        return Err(InventoryError::NonMonotonicSeq {
            prev: prev.seq,
            next: next.seq,
        });
    }
    Ok(ChangeSet {
        changed_fields: changed_fields(prev, next, deadband),
        prev_seq: prev.seq,
        next_seq: next.seq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::snapshot::WeightSlot;
    use crate::sensors::TempLevel;
    use proptest::prelude::*;

    fn base() -> InventorySnapshot {
        InventorySnapshot {
            timestamp_ms: 0,
            seq: 0,
            weights: [WeightSlot::EMPTY; 6],
            eggs: [false; 16],
            bottles: [false; 4],
            temp_level: TempLevel::Off,
            image_ref: None,
        }
    }

    fn next(s: &InventorySnapshot) -> InventorySnapshot {
        InventorySnapshot {
            seq: s.seq + 1,
            ..s.clone()
        }
    }

    const DEADBAND: Grams = Grams::ZERO;

    fn deadband20() -> Grams {
        Grams::from_f64(20.0)
    }

    #[test]
    fn identical_content_is_empty() {
        let a = base();
        let cs = diff(&a, &next(&a), deadband20()).unwrap();
        assert!(cs.is_empty());
        assert_eq!((cs.prev_seq, cs.next_seq), (0, 1));
    }

    #[test]
    fn single_egg_removed() {
        let mut a = base();
        a.eggs[2] = true;
        let mut b = next(&a);
        b.eggs[2] = false;
        let cs = diff(&a, &b, deadband20()).unwrap();
        assert_eq!(cs.changed_fields, BTreeSet::from([Field::Egg(2)]));
        assert_eq!(Field::Egg(2).to_string(), "eggs[tray0.slot2]");
    }

    #[test]
    fn seq_must_advance() {
        let a = base();
        assert!(matches!(
            diff(&a, &a, DEADBAND),
            Err(InventoryError::NonMonotonicSeq { prev: 0, next: 0 })
        ));
    }

    /// Brute-force field comparison, written out per field class.
    fn oracle(a: &InventorySnapshot, b: &InventorySnapshot, deadband_tenths: i64) -> BTreeSet<Field> {
        let mut out = BTreeSet::new();
        for i in 0..6 {
            let d = a.weights[i].grams.tenths() - b.weights[i].grams.tenths();
            if d > deadband_tenths || -d > deadband_tenths {
                out.insert(Field::Weight(i));
            }
            if a.weights[i].present ^ b.weights[i].present {
                out.insert(Field::Presence(i));
            }
        }
        for i in 0..16 {
            if a.eggs[i] ^ b.eggs[i] {
                out.insert(Field::Egg(i));
            }
        }
        for i in 0..4 {
            if a.bottles[i] ^ b.bottles[i] {
                out.insert(Field::Bottle(i));
            }
        }
        out
    }

    #[test]
    fn deadband_boundary() {
        let mut a = base();
        a.weights[0] = WeightSlot { grams: Grams::from_f64(300.0), present: true, ..WeightSlot::EMPTY };
        let mut b = next(&a);
        b.weights[0].grams = Grams::from_f64(310.0);
        assert!(diff(&a, &b, deadband20()).unwrap().is_empty());
        assert_eq!(oracle(&a, &b, 200), BTreeSet::new());
        b.weights[0].grams = Grams::from_f64(320.0);
        assert!(diff(&a, &b, deadband20()).unwrap().is_empty());
        b.weights[0].grams = Grams::from_f64(320.1);
        assert_eq!(
            diff(&a, &b, deadband20()).unwrap().changed_fields,
            BTreeSet::from([Field::Weight(0)])
        );
    }

    fn snapshot() -> impl Strategy<Value = InventorySnapshot> {
        (
            proptest::array::uniform6((0i64..6000, any::<bool>())),
            proptest::array::uniform16(any::<bool>()),
            proptest::array::uniform4(any::<bool>()),
        )
            .prop_map(|(w, eggs, bottles)| InventorySnapshot {
                weights: w.map(|(t, p)| WeightSlot {
                    grams: Grams::from_tenths(t),
                    present: p,
                    ..WeightSlot::EMPTY
                }),
                eggs,
                bottles,
                ..base()
            })
    }

    proptest! {
        #[test]
        fn matches_oracle(a in snapshot(), b in snapshot(), db in 0i64..500) {
            prop_assert_eq!(changed_fields(&a, &b, Grams::from_tenths(db)), oracle(&a, &b, db));
        }

        #[test]
        fn symmetric(a in snapshot(), b in snapshot(), db in 0i64..500) {
            let d = Grams::from_tenths(db);
            prop_assert_eq!(changed_fields(&a, &b, d), changed_fields(&b, &a, d));
        }

        #[test]
        fn empty_iff_occupancy_equal_and_weights_within_deadband(a in snapshot(), b in snapshot(), db in 0i64..500) {
            let d = Grams::from_tenths(db);
            let same = a.eggs == b.eggs
                && a.bottles == b.bottles
                && a.weights.iter().zip(&b.weights).all(|(x, y)| x.present == y.present && x.grams.abs_diff(y.grams) <= d);
            prop_assert_eq!(changed_fields(&a, &b, d).is_empty(), same);
        }
    }
}
