//! Data plane: file traffic, capacity-based link service, RLC-AM-style
//! byte queues with X2 forwarding, and PDCP duplicate elimination and
//! reordering at the UE.
//!
//! Transport is an idealized reliable stream: a served link never loses
//! bytes; loss appears only as buffer tail-drop. Files are packetized into
//! fixed-size PDUs with run-global sequence numbers; the MN meters PDUs
//! into the transmitting SN's RLC buffer as space frees (X2 flow control),
//! so the unbounded backlog lives at the MN side, not in the air.

use std::collections::{BTreeMap, VecDeque};

use crate::channel::LinkClass;

/// One PDCP PDU (or what is left of it in a queue).
#[derive(Debug, Clone, Copy)]
pub struct Pdu {
    pub seq: u64,
    pub file: u32,
    pub bytes: u32,
    /// Bytes already transmitted (front-of-queue partial service).
    pub sent: u32,
    /// Packet-duplication copy; excluded from byte conservation.
    pub duplicate: bool,
}

impl Pdu {
    pub fn remaining(&self) -> u64 {
        u64::from(self.bytes - self.sent)
    }
}

/// A PDU fully received by the UE on some leg.
#[derive(Debug, Clone, Copy)]
pub struct ReceivedPdu {
    pub seq: u64,
    pub file: u32,
    pub bytes: u32,
    pub duplicate: bool,
}

/// Capacity-limited byte queue at one transmitter.
#[derive(Debug)]
pub struct RlcBuffer {
    queue: VecDeque<Pdu>,
    capacity: u64,
    occupancy: u64,
    /// Primary bytes tail-dropped at this buffer.
    pub bytes_dropped: u64,
    /// Duplicate bytes tail-dropped (tracked separately).
    pub dup_bytes_dropped: u64,
    /// Duplicate bytes accepted into this buffer.
    pub dup_bytes_enqueued: u64,
}

/// What happened to an enqueue attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enqueued {
    Accepted,
    Dropped,
}

impl RlcBuffer {
    pub fn new(capacity: u64) -> Self {
        Self {
            queue: VecDeque::new(),
            capacity,
            occupancy: 0,
            bytes_dropped: 0,
            dup_bytes_dropped: 0,
            dup_bytes_enqueued: 0,
        }
    }

    pub fn occupancy(&self) -> u64 {
        self.occupancy
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn fits(&self, bytes: u64) -> bool {
        self.occupancy + bytes <= self.capacity
    }

    /// Tail-drop enqueue: a PDU that does not fit is dropped whole and
    /// counted.
    pub fn enqueue(&mut self, pdu: Pdu) -> Enqueued {
        let need = pdu.remaining();
        if self.occupancy + need > self.capacity {
            if pdu.duplicate {
                self.dup_bytes_dropped += need;
            } else {
                self.bytes_dropped += need;
            }
            return Enqueued::Dropped;
        }
        if pdu.duplicate {
            self.dup_bytes_enqueued += need;
        }
        self.occupancy += need;
        self.queue.push_back(pdu);
        Enqueued::Accepted
    }

    /// Transmit up to `budget` bytes in order; partial PDUs stay at the
    /// front. Completed PDUs are appended to `received`.
    pub fn serve(&mut self, mut budget: u64, received: &mut Vec<ReceivedPdu>) -> u64 {
        let mut consumed = 0;
        while budget > 0 {
            let Some(front) = self.queue.front_mut() else { break };
            let take = front.remaining().min(budget);
            front.sent += take as u32;
            budget -= take;
            consumed += take;
            self.occupancy -= take;
            if front.remaining() == 0 {
                let p = self.queue.pop_front().unwrap();
                received.push(ReceivedPdu { seq: p.seq, file: p.file, bytes: p.bytes, duplicate: p.duplicate });
            }
        }
        consumed
    }

    /// Remove and return every queued primary PDU (for X2 forwarding);
    /// partially sent ones are reset for full retransmission at the new
    /// leg. Duplicate copies are discarded and their bytes returned.
    pub fn drain_for_forwarding(&mut self) -> (Vec<Pdu>, u64) {
        let mut primaries = Vec::with_capacity(self.queue.len());
        let mut dup_purged = 0;
        for mut p in self.queue.drain(..) {
            if p.duplicate {
                dup_purged += p.remaining();
            } else {
                p.sent = 0;
                primaries.push(p);
            }
        }
        self.occupancy = 0;
        // Occupancy recount: forwarded primaries leave whole.
        (primaries, dup_purged)
    }

    /// Drop all duplicate copies (end of a packet-duplication interval).
    pub fn purge_duplicates(&mut self) -> u64 {
        let mut purged = 0;
        self.queue.retain(|p| {
            if p.duplicate {
                purged += p.remaining();
                false
            } else {
                true
            }
        });
        self.occupancy -= purged;
        purged
    }

    /// Remove and return PDUs whose file matches the predicate (deadline
    /// abort policy).
    pub fn purge_where(&mut self, expired: &dyn Fn(u32) -> bool) -> Vec<Pdu> {
        let mut removed = Vec::new();
        let mut freed = 0;
        self.queue.retain(|p| {
            if expired(p.file) {
                freed += p.remaining();
                removed.push(*p);
                false
            } else {
                true
            }
        });
        self.occupancy -= freed;
        removed
    }

    /// Iterate queued PDUs (residual accounting).
    pub fn iter(&self) -> impl Iterator<Item = &Pdu> {
        self.queue.iter()
    }
}

/// Per-file staging record at the MN: PDUs not yet materialized into any
/// RLC buffer.
#[derive(Debug, Clone, Copy)]
struct StagedFile {
    file: u32,
    next_seq: u64,
    remaining: u64,
    pdu_bytes: u32,
}

/// Unbounded MN-side backlog, materialized lazily into RLC buffers.
#[derive(Debug, Default)]
pub struct TrafficStage {
    files: VecDeque<StagedFile>,
}

impl TrafficStage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_file(&mut self, file: u32, first_seq: u64, size: u64, pdu_bytes: u32) {
        self.files.push_back(StagedFile { file, next_seq: first_seq, remaining: size, pdu_bytes });
    }

    pub fn backlog_bytes(&self) -> u64 {
        self.files.iter().map(|f| f.remaining).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    fn peek_size(&self) -> Option<u64> {
        self.files.front().map(|f| f.remaining.min(u64::from(f.pdu_bytes)))
    }

    fn pop_pdu(&mut self) -> Option<Pdu> {
        let f = self.files.front_mut()?;
        let bytes = f.remaining.min(u64::from(f.pdu_bytes)) as u32;
        let pdu = Pdu { seq: f.next_seq, file: f.file, bytes, sent: 0, duplicate: false };
        f.next_seq += 1;
        f.remaining -= u64::from(bytes);
        if f.remaining == 0 {
            self.files.pop_front();
        }
        Some(pdu)
    }

    /// Drop staged files matching the predicate; returns the bytes removed.
    pub fn drop_expired(&mut self, expired: &dyn Fn(u32) -> bool) -> u64 {
        let mut dropped = 0;
        self.files.retain(|f| {
            if expired(f.file) {
                dropped += f.remaining;
                false
            } else {
                true
            }
        });
        dropped
    }

    /// Move PDUs into `primary` while they fit, mirroring each accepted
    /// primary into `duplicate` when packet duplication is active. The
    /// primary never tail-drops here (space is checked first); duplicate
    /// copies may.
    pub fn feed(&mut self, primary: &mut RlcBuffer, mut duplicate: Option<&mut RlcBuffer>) {
        while let Some(size) = self.peek_size() {
            if !primary.fits(size) {
                break;
            }
            let pdu = self.pop_pdu().expect("peeked entry exists");
            let accepted = primary.enqueue(pdu);
            debug_assert_eq!(accepted, Enqueued::Accepted);
            if let Some(dup) = duplicate.as_deref_mut() {
                dup.enqueue(Pdu { duplicate: true, ..pdu });
            }
        }
    }
}

/// Number of PDUs a file of `size` bytes packetizes into.
pub fn pdu_count(size: u64, pdu_bytes: u32) -> u64 {
    size.div_ceil(u64::from(pdu_bytes))
}

/// Shannon-style capacity abstraction: eta * W * min(log2(1+SINR), SE_max),
/// zero in outage.
pub fn link_rate_bps(sinr_db: f64, class: LinkClass, bandwidth_hz: f64, eta: f64, se_max: f64) -> f64 {
    if class == LinkClass::Outage {
        return 0.0;
    }
    let sinr_linear = 10f64.powf(sinr_db / 10.0);
    let se = (1.0 + sinr_linear).log2().min(se_max);
    eta * bandwidth_hz * se
}

/// One file download job.
#[derive(Debug, Clone, Copy)]
pub struct FileJob {
    pub id: u32,
    pub size: u64,
    pub created: f64,
    pub deadline: f64,
    pub first_seq: u64,
    pub pdu_count: u64,
    pub delivered_bytes: u64,
    pub completed: Option<f64>,
}

impl FileJob {
    /// Failure verdict at run end: completed past the deadline, or
    /// incomplete with the deadline already passed.
    pub fn failed(&self, t_end: f64, count_inflight_as_failed: bool) -> Option<bool> {
        match self.completed {
            Some(t) => Some(t > self.deadline),
            None if self.deadline <= t_end => Some(true),
            None if count_inflight_as_failed => Some(true),
            None => None, // still in flight: excluded from the ratio
        }
    }
}

/// A PDU released to the application.
#[derive(Debug, Clone, Copy)]
pub struct Released {
    pub seq: u64,
    pub file: u32,
    pub bytes: u32,
}

/// Coalescing set of delivered sequence numbers.
#[derive(Debug, Default)]
pub struct SeqSet {
    // start -> end (exclusive), disjoint and non-adjacent
    runs: BTreeMap<u64, u64>,
    len: u64,
}

impl SeqSet {
    pub fn contains(&self, seq: u64) -> bool {
        self.runs.range(..=seq).next_back().is_some_and(|(_, &end)| seq < end)
    }

    /// Insert; returns false if already present.
    pub fn insert(&mut self, seq: u64) -> bool {
        if self.contains(seq) {
            return false;
        }
        let prev = self.runs.range(..=seq).next_back().map(|(&s, &e)| (s, e));
        let next = self.runs.range(seq + 1..).next().map(|(&s, &e)| (s, e));
        let joins_prev = prev.is_some_and(|(_, e)| e == seq);
        let joins_next = next.is_some_and(|(s, _)| s == seq + 1);
        match (joins_prev, joins_next) {
            (true, true) => {
                let (ps, _) = prev.unwrap();
                let (ns, ne) = next.unwrap();
                self.runs.remove(&ns);
                self.runs.insert(ps, ne);
            }
            (true, false) => {
                let (ps, _) = prev.unwrap();
                self.runs.insert(ps, seq + 1);
            }
            (false, true) => {
                let (ns, ne) = next.unwrap();
                self.runs.remove(&ns);
                self.runs.insert(seq, ne);
            }
            (false, false) => {
                self.runs.insert(seq, seq + 1);
            }
        }
        self.len += 1;
        true
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// PDCP receive entity at the UE: per-sequence duplicate elimination plus
/// an in-order release window.
#[derive(Debug)]
pub struct PdcpReceiver {
    delivered: SeqSet,
    reorder_enabled: bool,
    window_s: f64,
    next_expected: u64,
    held: BTreeMap<u64, (u32, u32)>, // seq -> (file, bytes)
    window_deadline: Option<f64>,
    pub suppressed_duplicates: u64,
    pub app_deliveries: u64,
}

impl PdcpReceiver {
    pub fn new(reorder_enabled: bool, window_s: f64) -> Self {
        Self {
            delivered: SeqSet::default(),
            reorder_enabled,
            window_s,
            next_expected: 0,
            held: BTreeMap::new(),
            window_deadline: None,
            suppressed_duplicates: 0,
            app_deliveries: 0,
        }
    }

    pub fn delivered(&self) -> &SeqSet {
        &self.delivered
    }

    fn release(&mut self, seq: u64, file: u32, bytes: u32, out: &mut Vec<Released>) {
        let fresh = self.delivered.insert(seq);
        debug_assert!(fresh, "a sequence number is never released twice");
        self.app_deliveries += 1;
        out.push(Released { seq, file, bytes });
    }

    /// Accept one PDU from either leg. Released PDUs (possibly several,
    /// when a gap closes) are appended to `out`.
    pub fn receive(&mut self, now: f64, pdu: ReceivedPdu, out: &mut Vec<Released>) {
        if self.delivered.contains(pdu.seq) {
            self.suppressed_duplicates += 1;
            return;
        }
        if !self.reorder_enabled {
            self.release(pdu.seq, pdu.file, pdu.bytes, out);
            return;
        }

        if pdu.seq < self.next_expected {
            // Late arrival from the slower leg after the window moved on.
            self.release(pdu.seq, pdu.file, pdu.bytes, out);
            return;
        }
        if pdu.seq == self.next_expected {
            self.release(pdu.seq, pdu.file, pdu.bytes, out);
            self.next_expected += 1;
            self.drain_contiguous(out);
            return;
        }
        // Gap: hold until it closes or the reorder timer expires.
        self.held.entry(pdu.seq).or_insert((pdu.file, pdu.bytes));
        if self.window_deadline.is_none() {
            self.window_deadline = Some(now + self.window_s);
        }
    }

    fn drain_contiguous(&mut self, out: &mut Vec<Released>) {
        while let Some((&seq, &(file, bytes))) = self.held.first_key_value() {
            if seq != self.next_expected {
                break;
            }
            self.held.remove(&seq);
            self.release(seq, file, bytes, out);
            self.next_expected += 1;
        }
        if self.held.is_empty() {
            self.window_deadline = None;
        }
    }

    /// Reorder-timer check: on expiry, skip the missing gap and release
    /// from the earliest held PDU onward.
    pub fn check_window(&mut self, now: f64, out: &mut Vec<Released>) {
        if !self.reorder_enabled {
            return;
        }
        while let Some(deadline) = self.window_deadline {
            if now < deadline {
                break;
            }
            let Some((&seq, _)) = self.held.first_key_value() else {
                self.window_deadline = None;
                break;
            };
            self.next_expected = seq;
            self.drain_contiguous(out);
            if !self.held.is_empty() {
                self.window_deadline = Some(now + self.window_s);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pdu(seq: u64, bytes: u32) -> Pdu {
        Pdu { seq, file: 0, bytes, sent: 0, duplicate: false }
    }

    #[test]
    fn serve_full_queue_drain() {
        // 1 MB queued at 80 Mbps for 0.1 s: exactly drained.
        let mut buf = RlcBuffer::new(100_000_000);
        for s in 0..1000 {
            buf.enqueue(pdu(s, 1000));
        }
        let mut rx = Vec::new();
        let served = buf.serve(80_000_000 / 8 / 10, &mut rx);
        assert_eq!(served, 1_000_000);
        assert_eq!(rx.len(), 1000);
        assert!(buf.is_empty());
    }

    #[test]
    fn zero_rate_serves_nothing() {
        let mut buf = RlcBuffer::new(100);
        buf.enqueue(pdu(0, 50));
        let mut rx = Vec::new();
        assert_eq!(buf.serve(0, &mut rx), 0);
        assert!(rx.is_empty());
    }

    #[test]
    fn partial_service_completes_later() {
        let mut buf = RlcBuffer::new(100);
        buf.enqueue(pdu(0, 60));
        let mut rx = Vec::new();
        buf.serve(40, &mut rx);
        assert!(rx.is_empty());
        assert_eq!(buf.occupancy(), 20);
        buf.serve(40, &mut rx);
        assert_eq!(rx.len(), 1);
        assert_eq!(rx[0].bytes, 60);
    }

    #[test]
    fn tail_drop_at_capacity() {
        let mut buf = RlcBuffer::new(100);
        assert_eq!(buf.enqueue(pdu(0, 100)), Enqueued::Accepted);
        assert_eq!(buf.enqueue(pdu(1, 1)), Enqueued::Dropped);
        assert_eq!(buf.bytes_dropped, 1);
    }

    #[test]
    fn forwarding_overflow_drops_excess() {
        // dst at 99 of 100 MB; 5 MB forwarded in 1400-byte PDUs: ~1 MB
        // fits, ~4 MB dropped.
        let mut dst = RlcBuffer::new(100_000_000);
        let mut filler = 0u64;
        while dst.fits(1400) && dst.occupancy() + 1400 <= 99_000_000 {
            dst.enqueue(pdu(filler, 1400));
            filler += 1;
        }
        let start_dropped = dst.bytes_dropped;
        let mut accepted = 0u64;
        for s in 0..(5_000_000 / 1400) {
            if dst.enqueue(pdu(1_000_000 + s, 1400)) == Enqueued::Accepted {
                accepted += 1400;
            }
        }
        let dropped = dst.bytes_dropped - start_dropped;
        assert!(accepted <= 1_000_000 + 1400);
        assert!((dropped as i64 - 4_000_000).abs() < 3000, "dropped {dropped}");
    }

    #[test]
    fn drain_resets_partial_and_purges_dups() {
        let mut buf = RlcBuffer::new(10_000);
        let mut p = pdu(0, 100);
        p.sent = 40;
        buf.occupancy = 60;
        buf.queue.push_back(p);
        buf.enqueue(Pdu { seq: 1, file: 0, bytes: 50, sent: 0, duplicate: true });
        let (primaries, dup_purged) = buf.drain_for_forwarding();
        assert_eq!(primaries.len(), 1);
        assert_eq!(primaries[0].sent, 0);
        assert_eq!(dup_purged, 50);
        assert!(buf.is_empty());
        assert_eq!(buf.occupancy(), 0);
    }

    #[test]
    fn stage_feeds_within_capacity_and_mirrors_duplicates() {
        let mut stage = TrafficStage::new();
        stage.push_file(0, 0, 5000, 1400);
        let mut primary = RlcBuffer::new(3000);
        let mut dup = RlcBuffer::new(1500);
        stage.feed(&mut primary, Some(&mut dup));
        // Two full PDUs fit (2800 <= 3000); the duplicate buffer takes one.
        assert_eq!(primary.occupancy(), 2800);
        assert_eq!(dup.occupancy(), 1400);
        assert_eq!(dup.dup_bytes_dropped, 1400);
        assert_eq!(stage.backlog_bytes(), 5000 - 2800);
    }

    #[test]
    fn stage_pdu_sizes() {
        let mut stage = TrafficStage::new();
        stage.push_file(0, 0, 3000, 1400);
        let mut buf = RlcBuffer::new(10_000);
        stage.feed(&mut buf, None);
        let sizes: Vec<u32> = buf.iter().map(|p| p.bytes).collect();
        assert_eq!(sizes, vec![1400, 1400, 200]);
        assert_eq!(pdu_count(3000, 1400), 3);
    }

    #[test]
    fn rate_hand_values() {
        assert_eq!(link_rate_bps(10.0, LinkClass::Outage, 1.0e9, 0.6, 7.4), 0.0);
        let r = link_rate_bps(0.0, LinkClass::Los, 1.0e9, 0.6, 7.4);
        assert!((r - 0.6e9).abs() < 1.0, "log2(2) = 1 at 0 dB");
        let capped = link_rate_bps(42.7, LinkClass::Los, 1.0e9, 0.6, 7.4);
        assert!((capped - 4.44e9).abs() < 1.0, "cap binds at 42.7 dB: {capped}");
    }

    #[test]
    fn pdcp_dedup_counts_once() {
        let mut rx = PdcpReceiver::new(true, 0.050);
        let mut out = Vec::new();
        let p = ReceivedPdu { seq: 0, file: 0, bytes: 100, duplicate: false };
        rx.receive(0.0, p, &mut out);
        rx.receive(0.001, ReceivedPdu { duplicate: true, ..p }, &mut out);
        assert_eq!(out.len(), 1);
        assert_eq!(rx.suppressed_duplicates, 1);
        assert_eq!(rx.app_deliveries, 1);
    }

    #[test]
    fn pdcp_reorders_within_window() {
        let mut rx = PdcpReceiver::new(true, 0.050);
        let mut out = Vec::new();
        for seq in [0u64, 2, 1] {
            rx.receive(0.0, ReceivedPdu { seq, file: 0, bytes: 10, duplicate: false }, &mut out);
        }
        let seqs: Vec<u64> = out.iter().map(|r| r.seq).collect();
        assert_eq!(seqs, vec![0, 1, 2]);
    }

    #[test]
    fn pdcp_window_expiry_releases_past_gap() {
        let mut rx = PdcpReceiver::new(true, 0.050);
        let mut out = Vec::new();
        rx.receive(0.0, ReceivedPdu { seq: 0, file: 0, bytes: 10, duplicate: false }, &mut out);
        rx.receive(0.010, ReceivedPdu { seq: 2, file: 0, bytes: 10, duplicate: false }, &mut out);
        assert_eq!(out.len(), 1, "seq 2 held while 1 is missing");
        rx.check_window(0.059, &mut out);
        assert_eq!(out.len(), 1, "window not yet expired");
        rx.check_window(0.0601, &mut out);
        assert_eq!(out.len(), 2, "seq 2 released once 50 ms have passed");
        assert_eq!(out[1].seq, 2);
        // The straggler still delivers (late) exactly once.
        rx.receive(0.070, ReceivedPdu { seq: 1, file: 0, bytes: 10, duplicate: false }, &mut out);
        assert_eq!(out.len(), 3);
        rx.receive(0.071, ReceivedPdu { seq: 1, file: 0, bytes: 10, duplicate: false }, &mut out);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn pdcp_without_reordering_is_immediate() {
        let mut rx = PdcpReceiver::new(false, 0.050);
        let mut out = Vec::new();
        for seq in [5u64, 3, 4] {
            rx.receive(0.0, ReceivedPdu { seq, file: 0, bytes: 10, duplicate: false }, &mut out);
        }
        let seqs: Vec<u64> = out.iter().map(|r| r.seq).collect();
        assert_eq!(seqs, vec![5, 3, 4]);
    }

    #[test]
    fn seqset_coalesces_and_rejects_repeats() {
        let mut s = SeqSet::default();
        assert!(s.insert(1));
        assert!(s.insert(3));
        assert!(s.insert(2));
        assert!(!s.insert(2));
        assert_eq!(s.len(), 3);
        assert!(s.contains(1) && s.contains(2) && s.contains(3));
        assert!(!s.contains(0) && !s.contains(4));
        assert_eq!(s.runs.len(), 1, "runs coalesce");
    }
}
