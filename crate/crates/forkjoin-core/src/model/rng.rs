use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-known stream ids. Each logical entity draws from its own stream so
/// that runs are replayable and policies are comparable under common random
/// numbers.
pub mod streams {
    /// Interarrival times.
    pub const ARRIVALS: u64 = 0;
    /// Task sizes, drawn at each arrival.
    pub const TASK_SIZES: u64 = 1;
    /// Policy routing coins (subsystem choice).
    pub const ROUTING: u64 = 2;
    /// Policy server sampling (uniform dispatch).
    pub const DISPATCH: u64 = 3;
    /// Base for per-job slowdown streams: job `j` draws from
    /// `JOB_SLOWDOWNS + j`.
    pub const JOB_SLOWDOWNS: u64 = 1 << 32;
}

/// A named, reproducible random stream: identical `(seed, stream_id)` pairs
/// yield bit-identical draw sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngHandle {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngHandle {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}
