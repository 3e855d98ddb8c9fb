//! UE receive path: RLC AM reassembly with selective-repeat STATUS
//! generation, RLC UM delivery, and the hooks the receiver-side TCP and
//! metrics build on.

use std::collections::{BTreeMap, BTreeSet};

use crate::kernel::Micros;
use crate::rnc::{Pdu, StatusMsg};

/// What became of a parent packet as the in-order walk passed it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParentOutcome {
    /// All PDUs present in order; the packet goes up to TCP.
    Delivered { parent: u64 },
    /// At least one constituent was discarded upstream; the packet is lost
    /// end-to-end and TCP will recover.
    Broken { parent: u64 },
}

/// Acknowledged-mode receiver: buffers out-of-order PDUs, detects gaps,
/// produces STATUS reports and delivers completed parent packets strictly
/// in order.
#[derive(Debug, Default)]
pub struct AmRx {
    next_deliver: u64,
    received: BTreeMap<u64, Pdu>,
    /// Sequence numbers the transmitter gave up on; the walk passes them.
    skipped: BTreeSet<u64>,
    max_seen: Option<u64>,
    assembling: Vec<Pdu>,
    dirty: bool,
    pub accepted_pdus: u64,
    pub duplicate_pdus: u64,
}

impl AmRx {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_deliver(&self) -> u64 {
        self.next_deliver
    }

    /// Accept one decoded PDU. Returns `(accepted, parent outcomes unlocked,
    /// new_gap)`; `new_gap` asks for an immediate STATUS.
    pub fn on_pdu(&mut self, pdu: Pdu) -> (bool, Vec<ParentOutcome>, bool) {
        let seq = pdu.rlc_seq;
        let expected = self
            .max_seen
            .map(|m| m + 1)
            .unwrap_or(0)
            .max(self.next_deliver);
        if seq < self.next_deliver
            || self.received.contains_key(&seq)
            || self.skipped.contains(&seq)
        {
            self.duplicate_pdus += 1;
            return (false, Vec::new(), false);
        }
        let new_gap = seq > expected;
        self.max_seen = Some(self.max_seen.map_or(seq, |m| m.max(seq)));
        self.received.insert(seq, pdu);
        self.accepted_pdus += 1;
        self.dirty = true;
        (true, self.drain(), new_gap)
    }

    /// The transmitter discarded these sequence numbers; stop waiting for
    /// them so in-order delivery can move on.
    pub fn on_skip(&mut self, seqs: &[u64]) -> Vec<ParentOutcome> {
        let mut any = false;
        for &seq in seqs {
            if seq >= self.next_deliver && !self.received.contains_key(&seq) {
                self.skipped.insert(seq);
                self.max_seen = Some(self.max_seen.map_or(seq, |m| m.max(seq)));
                any = true;
            }
        }
        if !any {
            return Vec::new();
        }
        self.dirty = true;
        self.drain()
    }

    fn drain(&mut self) -> Vec<ParentOutcome> {
        let mut out = Vec::new();
        loop {
            if self.skipped.remove(&self.next_deliver) {
                self.next_deliver += 1;
                continue;
            }
            let Some(pdu) = self.received.remove(&self.next_deliver) else {
                break;
            };
            self.next_deliver += 1;
            if let Some(first) = self.assembling.first() {
                if first.parent_packet != pdu.parent_packet {
                    // previous parent lost its tail to a skip
                    out.push(ParentOutcome::Broken {
                        parent: first.parent_packet,
                    });
                    self.assembling.clear();
                }
            }
            let is_last = pdu.is_last_of_parent;
            let parent = pdu.parent_packet;
            self.assembling.push(pdu);
            if is_last {
                let complete = self.assembling[0].pdu_index == 0
                    && self
                        .assembling
                        .windows(2)
                        .all(|w| w[1].pdu_index == w[0].pdu_index + 1);
                out.push(if complete {
                    ParentOutcome::Delivered { parent }
                } else {
                    ParentOutcome::Broken { parent }
                });
                self.assembling.clear();
            }
        }
        out
    }

    fn gaps(&self) -> Vec<u64> {
        let Some(max) = self.max_seen else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for seq in self.next_deliver..=max {
            if !self.received.contains_key(&seq) && !self.skipped.contains(&seq) {
                out.push(seq);
            }
        }
        out
    }

    pub fn has_gaps(&self) -> bool {
        !self.gaps().is_empty()
    }

    /// Build the STATUS due now: everything resolved as acknowledged ranges
    /// plus the currently missing sequence numbers. Returns `None` when
    /// nothing changed since the last report and no gap is outstanding.
    pub fn take_status(&mut self) -> Option<StatusMsg> {
        let gaps = self.gaps();
        if !self.dirty && gaps.is_empty() {
            return None;
        }
        self.dirty = false;
        Some(StatusMsg {
            acked: self.resolved_ranges(),
            nacked: gaps,
        })
    }

    fn resolved_ranges(&self) -> Vec<(u64, u64)> {
        let mut ranges: Vec<(u64, u64)> = Vec::new();
        if self.next_deliver > 0 {
            ranges.push((0, self.next_deliver));
        }
        let resolved: BTreeSet<u64> = self
            .received
            .keys()
            .copied()
            .chain(self.skipped.iter().copied())
            .collect();
        for seq in resolved {
            match ranges.last_mut() {
                Some((_, end)) if *end == seq => *end += 1,
                _ => ranges.push((seq, seq + 1)),
            }
        }
        ranges
    }
}

/// Unacknowledged-mode receiver: delivers in arrival order; a parent packet
/// with a missing PDU is discarded as soon as a newer parent appears.
#[derive(Debug, Default)]
pub struct UmRx {
    assembling: Vec<Pdu>,
    pub delivered_packets: u64,
    pub dropped_packets: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UmOutcome {
    Delivered { parent: u64, created_at: Micros },
    /// An incomplete parent was abandoned; its buffered PDUs are lost.
    Dropped { seqs: Vec<u64> },
}

impl UmRx {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_pdu(&mut self, pdu: Pdu) -> Vec<UmOutcome> {
        let mut out = Vec::new();
        if let Some(first) = self.assembling.first() {
            if first.parent_packet != pdu.parent_packet {
                self.dropped_packets += 1;
                out.push(UmOutcome::Dropped {
                    seqs: self.assembling.drain(..).map(|p| p.rlc_seq).collect(),
                });
            }
        }
        let is_last = pdu.is_last_of_parent;
        self.assembling.push(pdu);
        if is_last {
            let complete = self.assembling[0].pdu_index == 0
                && self
                    .assembling
                    .windows(2)
                    .all(|w| w[1].pdu_index == w[0].pdu_index + 1);
            if complete {
                self.delivered_packets += 1;
                out.push(UmOutcome::Delivered {
                    parent: self.assembling[0].parent_packet,
                    created_at: self.assembling[0].created_at,
                });
                self.assembling.clear();
            } else {
                self.dropped_packets += 1;
                out.push(UmOutcome::Dropped {
                    seqs: self.assembling.drain(..).map(|p| p.rlc_seq).collect(),
                });
            }
        }
        out
    }
}
