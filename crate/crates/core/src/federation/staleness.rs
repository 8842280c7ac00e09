/// Classification of a received scenario counter against the last one seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Staleness {
    Fresh,
    /// Older than the current interval; discard.
    Stale,
    /// Newer than expected; accept and log `missed` skipped intervals.
    Gap { missed: u64 },
}

pub fn staleness_check(received: u64, last: u64) -> Staleness {
    if received == last || received == last + 1 {
        Staleness::Fresh
    } else if received < last {
        Staleness::Stale
    } else {
        Staleness::Gap { missed: received - last - 1 }
    }
}

/// Per-sender counter bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CounterTracker {
    last: Option<u64>,
}

impl CounterTracker {
    pub fn last(&self) -> Option<u64> {
        self.last
    }

    /// Classifies `ctr` and advances the watermark unless it is stale. The
    /// first counter seen is always fresh.
    pub fn observe(&mut self, ctr: u64) -> Staleness {
        let verdict = match self.last {
            None => Staleness::Fresh,
            Some(last) => staleness_check(ctr, last),
        };
        if verdict != Staleness::Stale {
            self.last = Some(ctr);
        }
        verdict
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(staleness_check(6, 5), Staleness::Fresh);
        assert_eq!(staleness_check(5, 5), Staleness::Fresh);
        assert_eq!(staleness_check(4, 5), Staleness::Stale);
        assert_eq!(staleness_check(9, 5), Staleness::Gap { missed: 3 });
    }

    #[test]
    fn tracker_ignores_stale() {
        let mut t = CounterTracker::default();
        assert_eq!(t.observe(3), Staleness::Fresh);
        assert_eq!(t.observe(2), Staleness::Stale);
        assert_eq!(t.last(), Some(3));
        assert_eq!(t.observe(6), Staleness::Gap { missed: 2 });
        assert_eq!(t.last(), Some(6));
    }

    proptest! {
        #[test]
        fn classification_is_a_partition(last in 0u64..1_000_000, recv in 0u64..1_000_000) {
            match staleness_check(recv, last) {
                Staleness::Fresh => prop_assert!(recv == last || recv == last + 1),
                Staleness::Stale => prop_assert!(recv < last),
                Staleness::Gap { missed } => {
                    prop_assert!(recv > last + 1);
                    prop_assert_eq!(last + missed + 1, recv);
                }
            }
        }
    }
}
