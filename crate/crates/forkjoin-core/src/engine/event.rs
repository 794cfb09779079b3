use super::JobId;
use crate::policies::ServerId;
use std::cmp::Ordering;

/// A processed event, as recorded in the optional trace.
///
/// Events are processed in lexicographic `(time, sequence)` order; the
/// sequence number is a global insertion counter, so no two events share a
/// key and replays are bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub sequence: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    JobArrival { job: JobId },
    ServiceCompletion { server: ServerId, job: JobId },
    /// A dispatcher queue released a deferred job.
    DispatcherWake { queue: u32, job: JobId },
}

impl EventRecord {
    /// One tab-separated line: time, sequence, kind, job_id, server_id.
    /// `-` marks fields that do not apply.
    pub fn trace_line(&self) -> String {
        match &self.kind {
            EventKind::JobArrival { job } => {
                format!("{}\t{}\tarrival\t{}\t-", self.time, self.sequence, job)
            }
            EventKind::ServiceCompletion { server, job } => {
                format!("{}\t{}\tcompletion\t{}\t{}", self.time, self.sequence, job, server)
            }
            EventKind::DispatcherWake { queue, job } => {
                format!("{}\t{}\twake\t{}\t{}", self.time, self.sequence, job, queue)
            }
        }
    }
}

/// Render a full trace, one line per event.
pub fn format_trace(events: &[EventRecord]) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&ev.trace_line());
        out.push('\n');
    }
    out
}

/// Heap entry for pending arrivals and completions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Pending {
    Arrival,
    Completion { server: ServerId, replica: u64 },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct HeapEvent {
    pub time: f64,
    pub seq: u64,
    pub what: Pending,
}

impl PartialEq for HeapEvent {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl Eq for HeapEvent {}

impl PartialOrd for HeapEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEvent {
    // reversed: BinaryHeap is a max-heap, we pop the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
