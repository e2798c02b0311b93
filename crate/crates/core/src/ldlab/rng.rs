//! Counter-based random streams: every Monte-Carlo sample owns the stream
//! keyed by its index, so estimates are bitwise independent of the worker
//! count and the schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator for sample `stream` of the experiment seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs (grid point, side, sample index) into a stream id.
pub fn stream_id(point: usize, side: usize, sample: u64) -> u64 {
    debug_assert!(sample < 1 << 48);
    ((point as u64) << 52) | ((side as u64) << 48) | sample
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible_and_disjoint() {
        let mut a = stream_rng(7, 3);
        let mut b = stream_rng(7, 3);
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = stream_rng(7, 4);
        let first: Vec<u64> = (0..8).map(|_| stream_rng(7, 3).next_u64()).collect();
        let other: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_ne!(first[0], other[0]);
    }
}
