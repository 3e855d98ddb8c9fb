//! The per-user MAC-hs transmission queue with FIFO, TSP or enhanced-TSP
//! buffer management.
//!
//! Under TSP and enhanced TSP one queue yields both orderings: RT packets sit
//! in front of all NRT packets for transmission (time priority) while the
//! admission threshold R caps RT occupancy so NRT keeps most of the space
//! (space priority). Admissible NRT occupancy therefore ranges from N - R
//! with RT full up to N. Plain FIFO interleaves both classes in arrival
//! order with no RT cap.

use std::collections::VecDeque;

use crate::config::Policy;
use crate::rnc::{FlowClass, Pdu};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Accepted,
    /// Drop is a normal outcome, not an error; NRT drops surface later as
    /// RLC NACKs, RT drops are lost end-to-end.
    Dropped,
}

#[derive(Debug)]
enum Layout {
    /// Single order-of-arrival list, classes interleaved.
    Fifo(VecDeque<Pdu>),
    /// RT ahead of NRT; each class FIFO within itself.
    TimeSpace { rt: VecDeque<Pdu>, nrt: VecDeque<Pdu> },
}

#[derive(Debug)]
pub struct MacHsQueue {
    policy: Policy,
    r: usize,
    n: usize,
    layout: Layout,
    rt_count: usize,
    nrt_count: usize,
    pub rt_drops: u64,
    pub nrt_drops: u64,
}

impl MacHsQueue {
    pub fn new(policy: Policy, r: u32, n: u32) -> Self {
        let layout = match policy {
            Policy::Fifo => Layout::Fifo(VecDeque::new()),
            Policy::Tsp | Policy::Etsp => Layout::TimeSpace {
                rt: VecDeque::new(),
                nrt: VecDeque::new(),
            },
        };
        Self {
            policy,
            r: r as usize,
            n: n as usize,
            layout,
            rt_count: 0,
            nrt_count: 0,
            rt_drops: 0,
            nrt_drops: 0,
        }
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn rt_count(&self) -> usize {
        self.rt_count
    }

    pub fn nrt_count(&self) -> usize {
        self.nrt_count
    }

    /// Total occupancy N_T in PDUs.
    pub fn total(&self) -> usize {
        self.rt_count + self.nrt_count
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn enqueue(&mut self, pdu: Pdu) -> EnqueueOutcome {
        let accept = match (&self.layout, pdu.flow) {
            (Layout::Fifo(_), _) => self.total() < self.n,
            (Layout::TimeSpace { .. }, FlowClass::Rt) => {
                self.rt_count < self.r && self.total() < self.n
            }
            (Layout::TimeSpace { .. }, FlowClass::Nrt) => self.total() < self.n,
        };
        if !accept {
            match pdu.flow {
                FlowClass::Rt => self.rt_drops += 1,
                FlowClass::Nrt => self.nrt_drops += 1,
            }
            return EnqueueOutcome::Dropped;
        }
        match pdu.flow {
            FlowClass::Rt => self.rt_count += 1,
            FlowClass::Nrt => self.nrt_count += 1,
        }
        match &mut self.layout {
            Layout::Fifo(q) => q.push_back(pdu),
            Layout::TimeSpace { rt, nrt } => match pdu.flow {
                FlowClass::Rt => rt.push_back(pdu),
                FlowClass::Nrt => nrt.push_back(pdu),
            },
        }
        debug_assert!(self.total() <= self.n);
        debug_assert!(matches!(self.layout, Layout::Fifo(_)) || self.rt_count <= self.r);
        EnqueueOutcome::Accepted
    }

    /// Take up to `max_pdus` for one transport block. TSP/ETSP exhaust the RT
    /// line (oldest first) before touching NRT; FIFO takes head-of-line
    /// regardless of class.
    pub fn dequeue_for_tti(&mut self, max_pdus: usize) -> Vec<Pdu> {
        let mut out = Vec::with_capacity(max_pdus.min(self.total()));
        match &mut self.layout {
            Layout::Fifo(q) => {
                while out.len() < max_pdus {
                    match q.pop_front() {
                        Some(p) => out.push(p),
                        None => break,
                    }
                }
            }
            Layout::TimeSpace { rt, nrt } => {
                while out.len() < max_pdus {
                    if let Some(p) = rt.pop_front() {
                        out.push(p);
                    } else {
                        break;
                    }
                }
                while out.len() < max_pdus {
                    if let Some(p) = nrt.pop_front() {
                        out.push(p);
                    } else {
                        break;
                    }
                }
            }
        }
        for p in &out {
            match p.flow {
                FlowClass::Rt => self.rt_count -= 1,
                FlowClass::Nrt => self.nrt_count -= 1,
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnc::test_pdu;

    fn rt(seq: u64) -> Pdu {
        test_pdu(FlowClass::Rt, seq)
    }

    fn nrt(seq: u64) -> Pdu {
        test_pdu(FlowClass::Nrt, seq)
    }

    #[test]
    fn tsp_drops_rt_at_threshold_r() {
        let mut q = MacHsQueue::new(Policy::Tsp, 10, 150);
        for i in 0..10 {
            assert_eq!(q.enqueue(rt(i)), EnqueueOutcome::Accepted);
        }
        assert_eq!(q.enqueue(rt(10)), EnqueueOutcome::Dropped);
        assert_eq!(q.rt_count(), 10);
        assert_eq!(q.rt_drops, 1);
    }

    #[test]
    fn tsp_drops_nrt_at_capacity_n() {
        let mut q = MacHsQueue::new(Policy::Tsp, 10, 150);
        for i in 0..150 {
            assert_eq!(q.enqueue(nrt(i)), EnqueueOutcome::Accepted);
        }
        assert_eq!(q.enqueue(nrt(150)), EnqueueOutcome::Dropped);
        assert_eq!(q.nrt_drops, 1);
    }

    #[test]
    fn tsp_admits_rt_when_below_both_limits() {
        let mut q = MacHsQueue::new(Policy::Tsp, 10, 150);
        for i in 0..3 {
            q.enqueue(rt(i));
        }
        for i in 0..140 {
            q.enqueue(nrt(i));
        }
        assert_eq!(q.total(), 143);
        assert_eq!(q.enqueue(rt(100)), EnqueueOutcome::Accepted);
    }

    #[test]
    fn nrt_can_fill_beyond_n_minus_r_when_rt_absent() {
        let mut q = MacHsQueue::new(Policy::Tsp, 10, 150);
        for i in 0..150 {
            assert_eq!(q.enqueue(nrt(i)), EnqueueOutcome::Accepted);
        }
        // and with RT present the admissible NRT space shrinks to N - rt
        let mut q2 = MacHsQueue::new(Policy::Tsp, 10, 150);
        for i in 0..10 {
            q2.enqueue(rt(i));
        }
        for i in 0..140 {
            assert_eq!(q2.enqueue(nrt(i)), EnqueueOutcome::Accepted);
        }
        assert_eq!(q2.enqueue(nrt(140)), EnqueueOutcome::Dropped);
    }

    #[test]
    fn tsp_serves_rt_before_nrt() {
        let mut q = MacHsQueue::new(Policy::Tsp, 10, 150);
        q.enqueue(nrt(100));
        q.enqueue(rt(1));
        q.enqueue(rt(2));
        let got = q.dequeue_for_tti(2);
        assert_eq!(got.iter().map(|p| p.rlc_seq).collect::<Vec<_>>(), vec![1, 2]);
        let rest = q.dequeue_for_tti(5);
        assert_eq!(rest.iter().map(|p| p.rlc_seq).collect::<Vec<_>>(), vec![100]);
    }

    #[test]
    fn tsp_serves_nrt_when_no_rt_queued() {
        let mut q = MacHsQueue::new(Policy::Tsp, 10, 150);
        q.enqueue(nrt(1));
        q.enqueue(nrt(2));
        let got = q.dequeue_for_tti(5);
        assert_eq!(got.len(), 2);
    }

    #[test]
    fn fifo_keeps_arrival_order_across_classes() {
        let mut q = MacHsQueue::new(Policy::Fifo, 10, 150);
        q.enqueue(nrt(7));
        q.enqueue(rt(8));
        let got = q.dequeue_for_tti(1);
        assert_eq!(got[0].rlc_seq, 7);
        assert_eq!(got[0].flow, FlowClass::Nrt);
    }

    #[test]
    fn fifo_has_no_rt_cap() {
        let mut q = MacHsQueue::new(Policy::Fifo, 10, 20);
        for i in 0..20 {
            assert_eq!(q.enqueue(rt(i)), EnqueueOutcome::Accepted);
        }
        assert_eq!(q.enqueue(rt(20)), EnqueueOutcome::Dropped);
    }

    #[test]
    fn empty_queue_dequeues_empty() {
        let mut q = MacHsQueue::new(Policy::Etsp, 10, 150);
        assert!(q.dequeue_for_tti(5).is_empty());
    }
}
