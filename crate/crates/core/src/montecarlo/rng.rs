use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Identifier of the stream derivation below. Bump it if the mapping from
/// `(master_seed, index, purpose)` to generator state ever changes.
pub const RNG_SCHEME: &str = "chacha12-stream-v1";

/// What a stream is used for within one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    TreatedOutcomes = 0,
    ControlOutcomes = 1,
    Assignment = 2,
}

/// Largest trajectory index accepted by [`stream`].
pub const MAX_INDEX: u64 = (u64::MAX >> 2) - 1;

/// ChaCha12 keyed by the little-endian master seed (zero padded to 32 bytes)
/// on stream `4 · index + tag`, starting at word 0. Distinct
/// `(master_seed, index, tag)` triples select distinct key/stream pairs, and
/// the position within a stream is the draw's offset, so every draw has a
/// unique coordinate.
pub fn stream(master_seed: u64, index: u64, tag: StreamTag) -> ChaCha12Rng {
    assert!(index <= MAX_INDEX, "trajectory index {index} out of range");
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(4 * index + tag as u64);
    rng.set_word_pos(0);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn first(seed: u64, index: u64, tag: StreamTag) -> [u64; 4] {
        let mut r = stream(seed, index, tag);
        [r.random(), r.random(), r.random(), r.random()]
    }

    #[test]
    fn streams_are_reproducible() {
        assert_eq!(first(7, 3, StreamTag::TreatedOutcomes), first(7, 3, StreamTag::TreatedOutcomes));
    }

    #[test]
    fn streams_differ_across_coordinates() {
        let base = first(7, 3, StreamTag::TreatedOutcomes);
        assert_ne!(base, first(8, 3, StreamTag::TreatedOutcomes));
        assert_ne!(base, first(7, 4, StreamTag::TreatedOutcomes));
        assert_ne!(base, first(7, 3, StreamTag::ControlOutcomes));
        assert_ne!(base, first(7, 3, StreamTag::Assignment));
        assert_ne!(first(0, 1, StreamTag::TreatedOutcomes), first(0, 0, StreamTag::Assignment));
    }

    #[test]
    fn scheme_is_pinned() {
        // Frozen output of the v1 derivation; a change here breaks reproducibility.
        let got: Vec<u64> = [(0, 0, StreamTag::TreatedOutcomes), (42, 1000, StreamTag::ControlOutcomes)]
            .into_iter()
            .map(|(s, i, t)| stream(s, i, t).random())
            .collect();
        assert_eq!(got, vec![6050961064690644123, 16790459578198220012]);
    }
}
