//! Named random substreams.
//!
//! Every run derives one ChaCha8 stream per purpose from a single master
//! seed. Policies only ever touch [`Stream::Init`] and [`Stream::TieBreak`],
//! so the arrival times, requested contents and popularity changes of a run
//! are the same whichever policy is being simulated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Interarrival = 0,
    Content = 1,
    Service = 2,
    Change = 3,
    Init = 4,
    TieBreak = 5,
}

/// The RNG for one purpose of one run.
pub fn substream(master_seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream as u64);
    rng
}

/// All substreams of one run.
#[derive(Clone, Debug)]
pub struct Streams {
    pub interarrival: SimRng,
    pub content: SimRng,
    pub service: SimRng,
    pub change: SimRng,
    pub init: SimRng,
    pub tie_break: SimRng,
}

impl Streams {
    pub fn new(master_seed: u64) -> Self {
        Streams {
            interarrival: substream(master_seed, Stream::Interarrival),
            content: substream(master_seed, Stream::Content),
            service: substream(master_seed, Stream::Service),
            change: substream(master_seed, Stream::Change),
            init: substream(master_seed, Stream::Init),
            tie_break: substream(master_seed, Stream::TieBreak),
        }
    }
}

/// Mixes a master seed with up to two indices into a fresh 64-bit seed
/// (SplitMix64 finalizer). Used to derive per-replication seeds.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    let mut z = master
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
