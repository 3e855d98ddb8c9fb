//! RNC model: packet segmentation into MAC-d PDUs, the RLC AM transmit
//! entity (selective-repeat ARQ) for the NRT flow, the RLC UM entity for
//! VoIP, and Iub forwarding — free-running under FIFO/TSP, credit-limited
//! under enhanced TSP.

use std::collections::{BTreeMap, HashSet, VecDeque};

use thiserror::Error;

use crate::kernel::Micros;
use crate::nodeb::credits::CreditGrant;

pub type UserId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowClass {
    Rt,
    Nrt,
}

/// The 320-bit MAC-d unit that queues, drops and retransmits as an atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pdu {
    pub flow: FlowClass,
    pub user: UserId,
    /// Strictly increasing per (user, flow) at creation; retransmissions
    /// reuse the original value.
    pub rlc_seq: u64,
    /// On-air size; constant per run.
    pub payload_bits: u32,
    /// Pre-padding content bits (the last PDU of a packet may be partial).
    pub content_bits: u32,
    /// Source timestamp of the parent packet.
    pub created_at: Micros,
    pub parent_packet: u64,
    pub pdu_index: u16,
    pub is_last_of_parent: bool,
    pub retx_count: u32,
}

#[cfg(test)]
pub(crate) fn test_pdu(flow: FlowClass, rlc_seq: u64) -> Pdu {
    Pdu {
        flow,
        user: 0,
        rlc_seq,
        payload_bits: 320,
        content_bits: 320,
        created_at: 0,
        parent_packet: rlc_seq,
        pdu_index: 0,
        is_last_of_parent: true,
        retx_count: 0,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("zero-size packet cannot be segmented")]
    EmptyPacket,
}

/// Split `packet_bits` into `ceil(packet_bits / pdu_size)` PDUs; the last
/// PDU is padded up to the PDU size.
#[allow(clippy::too_many_arguments)]
pub fn segment_packet(
    packet_bits: u32,
    pdu_size_bits: u32,
    flow: FlowClass,
    user: UserId,
    first_seq: u64,
    parent_packet: u64,
    created_at: Micros,
) -> Result<Vec<Pdu>, SegmentError> {
    if packet_bits == 0 {
        return Err(SegmentError::EmptyPacket);
    }
    debug_assert!(pdu_size_bits > 0);
    let n = packet_bits.div_ceil(pdu_size_bits);
    let mut out = Vec::with_capacity(n as usize);
    for i in 0..n {
        let remaining = packet_bits - i * pdu_size_bits;
        out.push(Pdu {
            flow,
            user,
            rlc_seq: first_seq + u64::from(i),
            payload_bits: pdu_size_bits,
            content_bits: remaining.min(pdu_size_bits),
            created_at,
            parent_packet,
            pdu_index: i as u16,
            is_last_of_parent: i == n - 1,
            retx_count: 0,
        });
    }
    Ok(out)
}

/// Selective-repeat STATUS report from the peer receiver.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatusMsg {
    /// Sequence ranges the receiver has resolved (received or told to skip),
    /// half-open `[start, end)`.
    pub acked: Vec<(u64, u64)>,
    /// Missing sequence numbers detected below the highest received.
    pub nacked: Vec<u64>,
}

impl StatusMsg {
    fn acks(&self, seq: u64) -> bool {
        self.acked
            .iter()
            .any(|&(s, e)| (s..e).contains(&seq))
    }
}

/// Effects of one STATUS on the transmit entity.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct StatusEffects {
    pub freed: usize,
    pub queued_retx: usize,
    /// PDUs that exhausted their retransmission budget and were discarded;
    /// the receiver is told to stop waiting for them.
    pub gave_up: Vec<u64>,
}

#[derive(Debug)]
struct TxRecord {
    pdu: Pdu,
    retx_count: u32,
    last_dispatch_at: Micros,
    /// Order stamp of this PDU's most recent dispatch.
    dispatch_stamp: u64,
}

/// RLC Acknowledged Mode transmit entity for one user's NRT flow.
#[derive(Debug)]
pub struct RlcAmTx {
    window: u64,
    max_retx: u32,
    nack_holdoff_us: Micros,
    next_seq: u64,
    /// Lowest unacknowledged sequence number.
    vt_a: u64,
    new_queue: VecDeque<Pdu>,
    retx_queue: VecDeque<u64>,
    retx_member: HashSet<u64>,
    tx_buffer: BTreeMap<u64, TxRecord>,
    dispatch_counter: u64,
    /// Highest dispatch stamp seen acknowledged; a NACK only triggers a
    /// retransmission once the peer demonstrably received something
    /// dispatched after the outstanding copy (or the time fallback expires),
    /// so queue-delayed copies are not duplicated on every STATUS.
    acked_stamp_high_water: u64,
    stall_poll_us: Micros,
    last_ack_progress_at: Micros,
    created: u64,
    first_dispatched: u64,
    pub retx_dispatched: u64,
    pub giveups: u64,
}

impl RlcAmTx {
    pub fn new(window: u32, max_retx: u32, nack_holdoff_us: Micros) -> Self {
        Self {
            window: u64::from(window),
            max_retx,
            nack_holdoff_us,
            next_seq: 0,
            vt_a: 0,
            new_queue: VecDeque::new(),
            retx_queue: VecDeque::new(),
            retx_member: HashSet::new(),
            tx_buffer: BTreeMap::new(),
            dispatch_counter: 0,
            acked_stamp_high_water: 0,
            stall_poll_us: 2 * nack_holdoff_us,
            last_ack_progress_at: 0,
            created: 0,
            first_dispatched: 0,
            retx_dispatched: 0,
            giveups: 0,
        }
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// The user's NRT buffer occupancy at the RNC: PDUs awaiting their first
    /// transmission. Pending retransmissions are not part of it.
    pub fn ubs(&self) -> u32 {
        debug_assert_eq!(self.new_queue.len() as u64, self.created - self.first_dispatched);
        self.new_queue.len() as u32
    }

    pub fn unacked(&self) -> usize {
        self.tx_buffer.len()
    }

    /// Segment one packet and append its PDUs to the first-transmission
    /// queue.
    pub fn queue_packet(
        &mut self,
        packet_bits: u32,
        pdu_size_bits: u32,
        user: UserId,
        parent_packet: u64,
        created_at: Micros,
    ) -> Result<&[Pdu], SegmentError> {
        let pdus = segment_packet(
            packet_bits,
            pdu_size_bits,
            FlowClass::Nrt,
            user,
            self.next_seq,
            parent_packet,
            created_at,
        )?;
        self.next_seq += pdus.len() as u64;
        self.created += pdus.len() as u64;
        let start = self.new_queue.len();
        self.new_queue.extend(pdus);
        Ok(&self.new_queue.make_contiguous()[start..])
    }

    /// Whether a call to [`RlcAmTx::dispatch_next`] can yield a PDU right now.
    pub fn dispatchable(&self) -> bool {
        if !self.retx_queue.is_empty() {
            return true;
        }
        match self.new_queue.front() {
            Some(p) => p.rlc_seq < self.vt_a + self.window,
            None => false,
        }
    }

    /// Hand the next PDU to the Iub. Retransmissions go out first (oldest
    /// sequence first); fresh PDUs follow, held back by the transmit window.
    pub fn dispatch_next(&mut self, now: Micros) -> Option<Pdu> {
        while let Some(seq) = self.retx_queue.pop_front() {
            self.retx_member.remove(&seq);
            // the seq may have been acknowledged since it was queued
            if let Some(rec) = self.tx_buffer.get_mut(&seq) {
                self.dispatch_counter += 1;
                rec.last_dispatch_at = now;
                rec.dispatch_stamp = self.dispatch_counter;
                rec.pdu.retx_count = rec.retx_count;
                self.retx_dispatched += 1;
                return Some(rec.pdu);
            }
        }
        let front_ok = self
            .new_queue
            .front()
            .is_some_and(|p| p.rlc_seq < self.vt_a + self.window);
        if front_ok {
            let pdu = self.new_queue.pop_front().expect("checked front");
            self.first_dispatched += 1;
            self.dispatch_counter += 1;
            if self.tx_buffer.is_empty() {
                // fresh activity after an idle stretch is not a stall
                self.last_ack_progress_at = now;
            }
            self.tx_buffer.insert(
                pdu.rlc_seq,
                TxRecord {
                    pdu,
                    retx_count: 0,
                    last_dispatch_at: now,
                    dispatch_stamp: self.dispatch_counter,
                },
            );
            return Some(pdu);
        }
        None
    }

    /// Window-stall recovery, the poll stand-in: a tail drop can leave the
    /// receiver with no gap to report, freezing the window forever. After a
    /// poll interval with zero acknowledgment progress every outstanding
    /// copy is presumed lost and requeued, spending retransmission budget as
    /// usual.
    pub fn poll_stall(&mut self, now: Micros) -> StatusEffects {
        let mut fx = StatusEffects::default();
        if self.tx_buffer.is_empty() || now < self.last_ack_progress_at + self.stall_poll_us {
            return fx;
        }
        self.last_ack_progress_at = now;
        let seqs: Vec<u64> = self.tx_buffer.keys().copied().collect();
        for seq in seqs {
            if self.retx_member.contains(&seq) {
                continue;
            }
            let rec = self.tx_buffer.get_mut(&seq).expect("key just listed");
            if rec.retx_count < self.max_retx {
                rec.retx_count += 1;
                self.retx_queue.push_back(seq);
                self.retx_member.insert(seq);
                fx.queued_retx += 1;
            } else {
                self.tx_buffer.remove(&seq);
                self.giveups += 1;
                fx.gave_up.push(seq);
            }
        }
        self.advance_vt_a();
        fx
    }

    /// Apply peer STATUS feedback: acknowledged PDUs leave the buffer,
    /// missing ones requeue for retransmission until the attempt budget runs
    /// out, then they are discarded (recovery moves up to TCP). Feedback for
    /// unknown sequence numbers is stale and ignored.
    pub fn on_status(&mut self, status: &StatusMsg, now: Micros) -> StatusEffects {
        let mut fx = StatusEffects::default();
        // acknowledgments
        let acked_seqs: Vec<u64> = self
            .tx_buffer
            .keys()
            .copied()
            .filter(|&s| status.acks(s))
            .collect();
        for seq in acked_seqs {
            let rec = self.tx_buffer.remove(&seq).expect("key just listed");
            self.acked_stamp_high_water = self.acked_stamp_high_water.max(rec.dispatch_stamp);
            fx.freed += 1;
        }
        if fx.freed > 0 {
            self.last_ack_progress_at = now;
        }
        // retransmission requests
        for &seq in &status.nacked {
            let Some(rec) = self.tx_buffer.get_mut(&seq) else {
                continue; // stale
            };
            // the outstanding copy may still be queued downstream; repeat it
            // only once later-dispatched traffic has provably arrived, or
            // after the fallback interval with no such evidence
            let pipe_passed = self.acked_stamp_high_water > rec.dispatch_stamp;
            let fallback = now >= rec.last_dispatch_at + self.nack_holdoff_us;
            if !pipe_passed && !fallback {
                continue;
            }
            if self.retx_member.contains(&seq) {
                continue;
            }
            if rec.retx_count < self.max_retx {
                rec.retx_count += 1;
                self.retx_queue.push_back(seq);
                self.retx_member.insert(seq);
                fx.queued_retx += 1;
            } else {
                self.tx_buffer.remove(&seq);
                self.giveups += 1;
                fx.gave_up.push(seq);
            }
        }
        self.advance_vt_a();
        debug_assert!(self.vt_a <= self.next_seq);
        fx
    }

    fn advance_vt_a(&mut self) {
        let lowest_outstanding = self
            .tx_buffer
            .keys()
            .next()
            .copied()
            .unwrap_or_else(|| match self.new_queue.front() {
                Some(p) => p.rlc_seq,
                None => self.next_seq,
            });
        self.vt_a = self.vt_a.max(lowest_outstanding.min(self.next_seq));
    }

    pub fn vt_a(&self) -> u64 {
        self.vt_a
    }
}

/// RLC Unacknowledged Mode transmit entity: no ARQ, no window. PDUs lost
/// downstream are lost end-to-end.
#[derive(Debug, Default)]
pub struct RlcUmTx {
    next_seq: u64,
    queue: VecDeque<Pdu>,
    pub created: u64,
}

impl RlcUmTx {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn queue_packet(
        &mut self,
        packet_bits: u32,
        pdu_size_bits: u32,
        user: UserId,
        parent_packet: u64,
        created_at: Micros,
    ) -> Result<&[Pdu], SegmentError> {
        let pdus = segment_packet(
            packet_bits,
            pdu_size_bits,
            FlowClass::Rt,
            user,
            self.next_seq,
            parent_packet,
            created_at,
        )?;
        self.next_seq += pdus.len() as u64;
        self.created += pdus.len() as u64;
        let start = self.queue.len();
        self.queue.extend(pdus);
        Ok(&self.queue.make_contiguous()[start..])
    }

    pub fn backlog(&self) -> usize {
        self.queue.len()
    }

    pub fn dispatch_next(&mut self) -> Option<Pdu> {
        self.queue.pop_front()
    }
}

/// Per-user RNC state: the RLC entities plus the flow-control side of the
/// enhanced TSP loop (effective grant and fractional credit accumulators).
#[derive(Debug)]
pub struct RncUser {
    pub am: RlcAmTx,
    pub um: Option<RlcUmTx>,
    grant: Option<CreditGrant>,
    rt_credit_acc: f64,
    nrt_credit_acc: f64,
}

impl RncUser {
    pub fn new(am: RlcAmTx, um: Option<RlcUmTx>) -> Self {
        Self {
            am,
            um,
            grant: None,
            rt_credit_acc: 0.0,
            nrt_credit_acc: 0.0,
        }
    }

    /// Install a newly effective grant; the most recent one applies until
    /// replaced.
    pub fn set_grant(&mut self, grant: CreditGrant) {
        self.grant = Some(grant);
    }

    pub fn grant(&self) -> Option<&CreditGrant> {
        self.grant.as_ref()
    }

    /// One TTI of Iub forwarding. Without flow control everything buffered
    /// goes out (UM entirely, AM within its window). Under enhanced TSP the
    /// effective grant accrues into per-flow accumulators and each flow
    /// dispatches `floor(accumulator)` PDUs, retransmissions first within
    /// the NRT budget. RT PDUs precede NRT PDUs in the batch.
    pub fn forward_tti(&mut self, flow_controlled: bool, now: Micros) -> Vec<Pdu> {
        // tolerance so that k summed fractions of 1/k reach a whole credit
        const CREDIT_EPS: f64 = 1e-9;
        let mut out = Vec::new();
        if flow_controlled {
            let (c_rt, c_nrt) = match self.grant {
                Some(g) => (g.c_rt, g.c_nrt),
                None => (0.0, 0.0),
            };
            if let Some(um) = self.um.as_mut() {
                self.rt_credit_acc += c_rt;
                while self.rt_credit_acc >= 1.0 - CREDIT_EPS {
                    match um.dispatch_next() {
                        Some(p) => {
                            self.rt_credit_acc -= 1.0;
                            out.push(p);
                        }
                        None => break,
                    }
                }
            }
            self.nrt_credit_acc += c_nrt;
            while self.nrt_credit_acc >= 1.0 - CREDIT_EPS {
                match self.am.dispatch_next(now) {
                    Some(p) => {
                        self.nrt_credit_acc -= 1.0;
                        out.push(p);
                    }
                    None => break,
                }
            }
        } else {
            if let Some(um) = self.um.as_mut() {
                while let Some(p) = um.dispatch_next() {
                    out.push(p);
                }
            }
            while let Some(p) = self.am.dispatch_next(now) {
                out.push(p);
            }
        }
        out
    }
}
