//! Reproducible random-number streams.
//!
//! Every random draw in the crate comes from an `RngStream` identified by
//! (seed, stream_id). Streams are ChaCha8 keyed by the seed with the 64-bit
//! ChaCha stream counter set to stream_id, so distinct ids give statistically
//! independent sequences and the same (seed, stream_id) always replays the
//! same sequence, independent of platform and thread count.
//!
//! `StreamFamily` carves the id space deterministically: the top bits hold a
//! namespace (main estimate, quantile pass, pilot fit, level search), the
//! middle bits the replication index, the low 32 bits a within-run index.
//! Estimators key draws by (run, draw index) or (run, level, slot), never by
//! execution order, which is what makes parallel runs bit-reproducible.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// Disjoint id-space regions for the different passes of one experiment, so
/// e.g. toggling the threshold-estimation pass cannot perturb the main run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamNamespace {
    Estimate,
    Quantile,
    Pilot,
    Levels,
}

impl StreamNamespace {
    fn tag(self) -> u64 {
        match self {
            StreamNamespace::Estimate => 0,
            StreamNamespace::Quantile => 1,
            StreamNamespace::Pilot => 2,
            StreamNamespace::Levels => 3,
        }
    }
}

const RUN_BITS: u32 = 28;
const IDX_BITS: u32 = 32;

/// Stream allocator for one (seed, namespace, run) cell; `stream(idx)` is a
/// pure function, so any worker can materialize any stream on demand.
#[derive(Clone, Copy, Debug)]
pub struct StreamFamily {
    seed: u64,
    base: u64,
}

impl StreamFamily {
    pub fn new(seed: u64, namespace: StreamNamespace, run: u64) -> Result<Self> {
        if run >= 1 << RUN_BITS {
            return Err(Error::Parameter(format!(
                "run index {run} exceeds the {RUN_BITS}-bit stream budget"
            )));
        }
        Ok(StreamFamily {
            seed,
            base: (namespace.tag() << (RUN_BITS + IDX_BITS)) | (run << IDX_BITS),
        })
    }

    pub fn stream(&self, idx: u64) -> RngStream {
        debug_assert!(idx < 1 << IDX_BITS);
        RngStream::new(self.seed, self.base | idx)
    }
}
