//! Logical clocks for message ordering. Stamps are seeded from
//! wall-clock seconds, so one merged value both orders events and lets
//! a party estimate its peer's clock offset; the two concerns stay
//! separate in the API (`tick` orders local sends, `update` merges a
//! received stamp and re-estimates the offset).

/// A Lamport clock whose logical counter rides on wall-clock seconds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LamportClock {
    logical: u64,
    local_secs: u64,
    peer_offset_secs: i64,
}

impl LamportClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Advances for a local event. Must be called to stamp an outgoing
    /// message; the returned value is the message's logical timestamp.
    pub fn tick(&mut self, now_secs: u64) -> u64 {
        self.local_secs = now_secs;
        self.logical = self.logical.max(now_secs) + 1;
        self.logical
    }

    /// Merges a received stamp: the logical counter jumps past the
    /// larger of the two clocks, and the peer offset is re-estimated
    /// from the received stamp against local time.
    pub fn update(&mut self, received: u64, now_secs: u64) -> u64 {
        self.local_secs = now_secs;
        self.logical = self.logical.max(received) + 1;
        self.peer_offset_secs = received as i64 - now_secs as i64;
        self.logical
    }

    pub fn logical(&self) -> u64 {
        self.logical
    }

    /// Latest estimate of (peer clock - local clock), in seconds.
    pub fn peer_offset_secs(&self) -> i64 {
        self.peer_offset_secs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_takes_the_max_plus_one() {
        let mut clock = LamportClock::new();
        clock.tick(4); // logical 5
        assert_eq!(clock.logical(), 5);
        assert_eq!(clock.update(9, 4), 10);
        // Receiving an older stamp still advances strictly.
        let mut clock = LamportClock::new();
        clock.tick(8); // logical 9
        assert_eq!(clock.update(5, 8), 10);
    }

    #[test]
    fn update_estimates_peer_offset() {
        let mut clock = LamportClock::new();
        clock.update(1_700_000_050, 1_700_000_047);
        assert_eq!(clock.peer_offset_secs(), 3);
        clock.update(1_700_000_050, 1_700_000_055);
        assert_eq!(clock.peer_offset_secs(), -5);
    }

    #[test]
    fn logical_time_strictly_increases_at_every_receipt() {
        let mut clock = LamportClock::new();
        let mut previous = clock.logical();
        for (received, now) in [(0u64, 0u64), (100, 2), (3, 90), (99, 99), (0, 0)] {
            let stamped = clock.update(received, now);
            assert!(stamped > previous);
            previous = stamped;
        }
    }
}
