use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    Simulated,
    Realtime,
}

impl std::str::FromStr for ClockMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sim" | "simulated" => Ok(ClockMode::Simulated),
            "realtime" | "rt" => Ok(ClockMode::Realtime),
            other => Err(format!("unknown clock mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FederateId(pub u32);

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
#[error("cannot schedule at {at} s: clock is already at {now} s")]
pub struct ScheduleInPast {
    pub at: f64,
    pub now: f64,
}

struct Entry<A> {
    time: f64,
    federate: FederateId,
    seq: u64,
    action: A,
}

impl<A> Entry<A> {
    fn key(&self) -> (f64, FederateId, u64) {
        (self.time, self.federate, self.seq)
    }
}

impl<A> PartialEq for Entry<A> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<A> Eq for Entry<A> {}
impl<A> PartialOrd for Entry<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<A> Ord for Entry<A> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, fa, sa) = self.key();
        let (tb, fb, sb) = other.key();
        tb.total_cmp(&ta).then(fb.cmp(&fa)).then(sb.cmp(&sa))
    }
}

/// Simulated-time event queue. Events pop in `(time, federate, sequence)`
/// order and the clock never runs backwards.
pub struct FederationClock<A> {
    sim_time: f64,
    seq: u64,
    heap: BinaryHeap<Entry<A>>,
}

impl<A> Default for FederationClock<A> {
    fn default() -> Self {
        FederationClock { sim_time: 0.0, seq: 0, heap: BinaryHeap::new() }
    }
}

impl<A> FederationClock<A> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sim_time(&self) -> f64 {
        self.sim_time
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, at: f64, federate: FederateId, action: A) -> Result<u64, ScheduleInPast> {
        if !(at >= self.sim_time) {
            return Err(ScheduleInPast { at, now: self.sim_time });
        }
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Entry { time: at, federate, seq, action });
        Ok(seq)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    /// Removes the next event and advances the clock to its time.
    pub fn pop(&mut self) -> Option<(f64, FederateId, A)> {
        let e = self.heap.pop()?;
        self.sim_time = e.time;
        Some((e.time, e.federate, e.action))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tie_break_by_federate_then_sequence() {
        let mut c = FederationClock::new();
        c.schedule(1.0, FederateId(2), "b2").unwrap();
        c.schedule(1.0, FederateId(0), "a0").unwrap();
        c.schedule(0.5, FederateId(9), "early").unwrap();
        c.schedule(1.0, FederateId(0), "a0-second").unwrap();
        let order: Vec<_> = std::iter::from_fn(|| c.pop().map(|e| e.2)).collect();
        assert_eq!(order, ["early", "a0", "a0-second", "b2"]);
    }

    #[test]
    fn rejects_past() {
        let mut c = FederationClock::new();
        c.schedule(2.0, FederateId(0), ()).unwrap();
        c.pop();
        assert!(c.schedule(1.0, FederateId(0), ()).is_err());
        assert!(c.schedule(f64::NAN, FederateId(0), ()).is_err());
        assert!(c.schedule(2.0, FederateId(0), ()).is_ok());
    }

    proptest! {
        #[test]
        fn time_never_decreases(events in proptest::collection::vec((0u32..1000, 0u32..4), 1..200)) {
            let mut c = FederationClock::new();
            for (i, &(t, f)) in events.iter().enumerate() {
                c.schedule(t as f64 * 0.1, FederateId(f), i).unwrap();
            }
            let mut prev: Option<(f64, FederateId, usize)> = None;
            while let Some((t, f, i)) = c.pop() {
                prop_assert_eq!(c.sim_time(), t);
                if let Some((pt, pf, pi)) = prev {
                    prop_assert!(t > pt || (t == pt && (f > pf || (f == pf && i > pi))));
                }
                prev = Some((t, f, i));
            }
        }
    }
}
