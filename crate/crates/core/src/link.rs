//! Physical constants of the backhaul link and the episode clock.

use crate::error::{Error, Result};

/// Link and timing constants shared by the environment and the scheduler.
///
/// Bit quantities are kept integral so that capacity arithmetic (and the
/// floors applied to it) is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    /// Slot length in milliseconds.
    pub slot_ms: u64,
    /// Total backhaul capacity in bits per second.
    pub link_bps: u64,
    /// Number of resource blocks the capacity is divided into.
    pub num_blocks: u32,
    /// Packet length in bits.
    pub packet_bits: u64,
    /// Per-slice buffer capacity in packets.
    pub buffer_packets: usize,
    /// Slots between two agent decisions.
    pub decision_slots: usize,
    /// Slots per episode.
    pub episode_slots: usize,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            slot_ms: 10,
            link_bps: 1_000_000,
            num_blocks: 10,
            packet_bits: 512,
            buffer_packets: 100,
            decision_slots: 10,
            episode_slots: 1000,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("slot_ms", self.slot_ms),
            ("link_bps", self.link_bps),
            ("num_blocks", self.num_blocks as u64),
            ("packet_bits", self.packet_bits),
            ("buffer_packets", self.buffer_packets as u64),
            ("decision_slots", self.decision_slots as u64),
            ("episode_slots", self.episode_slots as u64),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::InvalidValue {
                    key: key.into(),
                    reason: "must be positive".into(),
                });
            }
        }
        if !(self.link_bps * self.slot_ms).is_multiple_of(1000) {
            return Err(Error::InvalidValue {
                key: "link_bps".into(),
                reason: "link_bps * slot_ms must be a whole number of bits per slot".into(),
            });
        }
        if !self.episode_slots.is_multiple_of(self.decision_slots) {
            return Err(Error::InvalidValue {
                key: "episode_slots".into(),
                reason: "must be a multiple of decision_slots".into(),
            });
        }
        Ok(())
    }

    /// Bits the whole link carries in one slot (tau * C_bh).
    pub fn slot_bits(&self) -> u64 {
        self.link_bps * self.slot_ms / 1000
    }

    /// Packets deliverable in one slot by `n_blocks` resource blocks.
    pub fn packets_per_slot(&self, n_blocks: u32) -> usize {
        (n_blocks as u64 * self.slot_bits() / (self.packet_bits * self.num_blocks as u64)) as usize
    }

    /// Largest per-slice delivery in one slot (all blocks to one slice).
    pub fn max_packets_per_slot(&self) -> usize {
        self.packets_per_slot(self.num_blocks)
    }

    pub fn decisions_per_episode(&self) -> usize {
        self.episode_slots / self.decision_slots
    }

    /// Bits generated in one slot by a source of `bitrate_bps`.
    pub fn bits_per_slot(&self, bitrate_bps: u64) -> u64 {
        bitrate_bps * self.slot_ms / 1000
    }

    /// Converts a duration in milliseconds to (possibly fractional) slots.
    pub fn ms_to_slots(&self, ms: f64) -> f64 {
        ms / self.slot_ms as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_block_payload_is_one_kilobit() {
        let p = LinkParams::default();
        assert_eq!(p.slot_bits(), 10_000);
        assert_eq!(p.slot_bits() / p.num_blocks as u64, 1000);
        assert_eq!(p.decisions_per_episode(), 100);
    }

    #[test]
    fn packets_per_slot_table() {
        let p = LinkParams::default();
        let got: Vec<usize> = (0..=10).map(|n| p.packets_per_slot(n)).collect();
        assert_eq!(got, vec![0, 1, 3, 5, 7, 9, 11, 13, 15, 17, 19]);
    }

    #[test]
    fn rejects_fractional_slot_bits() {
        let p = LinkParams {
            link_bps: 1_000_001,
            ..LinkParams::default()
        };
        assert!(p.validate().is_err());
    }
}
