//! Stop-and-wait HARQ sender processes, a fixed bank per user.
//!
//! A process holds one transport block from first transmission until ACK or
//! give-up. NACKed blocks wait for the user's next scheduling opportunity and
//! are retransmitted with combining gain; after the attempt cap the block is
//! dropped and recovery moves up to RLC (AM) or the loss becomes final (UM).

use crate::kernel::Micros;
use crate::rnc::Pdu;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportBlock {
    pub pdus: Vec<Pdu>,
    pub mcs_idx: usize,
    pub first_tx_at: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ProcState {
    Idle,
    /// Block in the air or awaiting feedback.
    Waiting,
    /// NACKed; retransmits at the next scheduling opportunity.
    ReadyRetx,
}

#[derive(Debug)]
struct HarqProcess {
    state: ProcState,
    block: Option<TransportBlock>,
    tx_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackOutcome {
    /// Delivered; the process is free again.
    Acked,
    /// Retransmission pending in this process.
    RetxPending,
    /// Attempt cap reached; the block is dropped. UM PDUs in it are lost,
    /// AM PDUs surface later as RLC gaps.
    GaveUp(TransportBlock),
}

#[derive(Debug)]
pub struct HarqBank {
    processes: Vec<HarqProcess>,
    max_tx: u32,
}

impl HarqBank {
    pub fn new(n_processes: u32, max_tx: u32) -> Self {
        Self {
            processes: (0..n_processes)
                .map(|_| HarqProcess {
                    state: ProcState::Idle,
                    block: None,
                    tx_count: 0,
                })
                .collect(),
            max_tx,
        }
    }

    pub fn has_free(&self) -> bool {
        self.processes.iter().any(|p| p.state == ProcState::Idle)
    }

    pub fn has_pending_retx(&self) -> bool {
        self.processes.iter().any(|p| p.state == ProcState::ReadyRetx)
    }

    pub fn waiting_count(&self) -> usize {
        self.processes
            .iter()
            .filter(|p| p.state == ProcState::Waiting)
            .count()
    }

    /// Load a fresh block into a free process for its first transmission.
    /// Returns `(process id, tx_count = 1)`.
    pub fn load_new(&mut self, block: TransportBlock) -> (usize, u32) {
        let id = self
            .processes
            .iter()
            .position(|p| p.state == ProcState::Idle)
            .expect("load_new requires a free HARQ process");
        let p = &mut self.processes[id];
        p.state = ProcState::Waiting;
        p.block = Some(block);
        p.tx_count = 1;
        (id, 1)
    }

    /// Begin retransmission of the oldest pending block. Returns the process
    /// id, a clone of the block and the attempt number now in the air.
    pub fn start_retx(&mut self) -> Option<(usize, TransportBlock, u32)> {
        let id = self
            .processes
            .iter()
            .enumerate()
            .filter(|(_, p)| p.state == ProcState::ReadyRetx)
            .min_by_key(|(i, p)| {
                (
                    p.block.as_ref().map(|b| b.first_tx_at).unwrap_or(Micros::MAX),
                    *i,
                )
            })
            .map(|(i, _)| i)?;
        let p = &mut self.processes[id];
        p.state = ProcState::Waiting;
        p.tx_count += 1;
        Some((id, p.block.clone().expect("retx process holds a block"), p.tx_count))
    }

    /// Apply delayed ACK/NACK feedback for a process.
    ///
    /// Feedback for an idle process is a fatal logic error.
    pub fn on_feedback(&mut self, process_id: usize, ack: bool) -> FeedbackOutcome {
        let max_tx = self.max_tx;
        let p = &mut self.processes[process_id];
        assert!(
            p.state == ProcState::Waiting,
            "HARQ feedback for a process that is not awaiting it"
        );
        if ack {
            p.state = ProcState::Idle;
            p.block = None;
            p.tx_count = 0;
            return FeedbackOutcome::Acked;
        }
        if p.tx_count < max_tx {
            p.state = ProcState::ReadyRetx;
            FeedbackOutcome::RetxPending
        } else {
            let block = p.block.take().expect("waiting process holds a block");
            p.state = ProcState::Idle;
            p.tx_count = 0;
            FeedbackOutcome::GaveUp(block)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnc::{test_pdu, FlowClass};

    fn block(t: Micros) -> TransportBlock {
        TransportBlock {
            pdus: vec![test_pdu(FlowClass::Nrt, 1)],
            mcs_idx: 3,
            first_tx_at: t,
        }
    }

    #[test]
    fn ack_frees_the_process() {
        let mut bank = HarqBank::new(4, 4);
        let (id, tx) = bank.load_new(block(0));
        assert_eq!(tx, 1);
        assert_eq!(bank.on_feedback(id, true), FeedbackOutcome::Acked);
        assert!(bank.has_free());
        assert!(!bank.has_pending_retx());
    }

    #[test]
    fn nack_queues_retransmission_with_incremented_attempt() {
        let mut bank = HarqBank::new(4, 4);
        let (id, _) = bank.load_new(block(0));
        assert_eq!(bank.on_feedback(id, false), FeedbackOutcome::RetxPending);
        assert!(bank.has_pending_retx());
        let (id2, _, tx) = bank.start_retx().unwrap();
        assert_eq!(id2, id);
        assert_eq!(tx, 2);
    }

    #[test]
    fn gives_up_at_attempt_cap() {
        let mut bank = HarqBank::new(4, 4);
        let (id, _) = bank.load_new(block(0));
        for _ in 0..3 {
            assert_eq!(bank.on_feedback(id, false), FeedbackOutcome::RetxPending);
            bank.start_retx().unwrap();
        }
        // 4th transmission NACKed: cap reached
        match bank.on_feedback(id, false) {
            FeedbackOutcome::GaveUp(b) => assert_eq!(b.pdus.len(), 1),
            other => panic!("expected give-up, got {other:?}"),
        }
        assert!(bank.has_free());
    }

    #[test]
    fn at_most_all_processes_waiting() {
        let mut bank = HarqBank::new(4, 4);
        for i in 0..4 {
            bank.load_new(block(i));
        }
        assert!(!bank.has_free());
        assert_eq!(bank.waiting_count(), 4);
    }

    #[test]
    fn retransmits_oldest_block_first() {
        let mut bank = HarqBank::new(4, 4);
        let (a, _) = bank.load_new(block(100));
        let (b, _) = bank.load_new(block(50));
        bank.on_feedback(a, false);
        bank.on_feedback(b, false);
        let (first, blk, _) = bank.start_retx().unwrap();
        assert_eq!(first, b);
        assert_eq!(blk.first_tx_at, 50);
    }

    #[test]
    #[should_panic(expected = "not awaiting")]
    fn feedback_for_idle_process_is_fatal() {
        let mut bank = HarqBank::new(4, 4);
        bank.on_feedback(0, true);
    }
}
