pub const DEFAULT_QUOTA_LIMIT: u32 = 250;
pub const DEFAULT_QUOTA_PERIOD_MS: u64 = 30 * 24 * 60 * 60 * 1000;

/// Upload budget of a free choreo account.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuotaLedger {
    pub limit: u32,
    pub used: u32,
    pub period_start_ms: u64,
    pub period_ms: u64,
}

impl QuotaLedger {
    pub fn new(limit: u32, period_ms: u64, period_start_ms: u64) -> Self {
        QuotaLedger {
            limit,
            used: 0,
            period_start_ms,
            period_ms: period_ms.max(1),
        }
    }

    pub fn remaining(&self) -> u32 {
        self.limit.saturating_sub(self.used)
    }

    pub fn exhausted(&self) -> bool {
        self.used >= self.limit
    }
}

impl Default for QuotaLedger {
    fn default() -> Self {
        QuotaLedger::new(DEFAULT_QUOTA_LIMIT, DEFAULT_QUOTA_PERIOD_MS, 0)
    }
}

/// Rolls the ledger into the period containing `now_ms`. Boundaries are
/// inclusive: at exactly `period_start + period` a new period begins.
pub fn tick_quota(ledger: QuotaLedger, now_ms: u64) -> QuotaLedger {
    if now_ms < ledger.period_start_ms.saturating_add(ledger.period_ms) {
        return ledger;
    }
    let elapsed_periods = (now_ms - ledger.period_start_ms) / ledger.period_ms;
    QuotaLedger {
        used: 0,
        period_start_ms: ledger.period_start_ms + elapsed_periods * ledger.period_ms,
        ..ledger
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn used(n: u32) -> QuotaLedger {
        QuotaLedger {
            used: n,
            ..QuotaLedger::new(10, 1000, 5000)
        }
    }

    #[test]
    fn mid_period_unchanged() {
        assert_eq!(tick_quota(used(4), 5999), used(4));
        assert_eq!(tick_quota(used(4), 5000), used(4));
    }

    #[test]
    fn boundary_resets() {
        let t = tick_quota(used(4), 6000);
        assert_eq!((t.used, t.period_start_ms), (0, 6000));
    }

    #[test]
    fn two_periods_elapsed() {
        let t = tick_quota(used(10), 7500);
        assert_eq!((t.used, t.period_start_ms), (0, 7000));
    }

    #[test]
    fn defaults() {
        let l = QuotaLedger::default();
        assert_eq!(l.limit, 250);
        assert_eq!(l.period_ms, 2_592_000_000);
        assert_eq!(l.remaining(), 250);
    }

    proptest! {
        #[test]
        fn tick_matches_arithmetic(start in 0u64..1_000_000, period in 1u64..10_000, now in 0u64..2_000_000, u in 0u32..20) {
            let l = QuotaLedger { used: u, ..QuotaLedger::new(20, period, start) };
            let t = tick_quota(l, now);
            if now < start + period {
                prop_assert_eq!(t, l);
            } else {
                let k = (now - start) / period;
                prop_assert_eq!(t.period_start_ms, start + k * period);
                prop_assert_eq!(t.used, 0);
                prop_assert!(t.period_start_ms <= now && now < t.period_start_ms + period);
            }
        }
    }
}
