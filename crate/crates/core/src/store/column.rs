//! Block-delta compressed storage for one column of 64-bit values.
//!
//! Values are grouped into fixed blocks of 128. Each block stores its
//! minimum and packs every value as `value - min` at one of a few fixed
//! bit widths, so element access stays constant-time: locate the block by
//! division, unpack one delta, add the minimum back.

/// Number of values per compressed block.
pub const BLOCK_LEN: usize = 128;

/// Bit widths a block may use. Restricting the set keeps unpacking to a
/// shift/mask pair with at most one word crossing.
const WIDTHS: [u8; 10] = [0, 1, 2, 4, 8, 16, 24, 32, 48, 64];

fn width_for(span: u64) -> u8 {
    let need = (64 - span.leading_zeros()) as u8;
    WIDTHS
        .iter()
        .copied()
        .find(|w| *w >= need)
        .expect("64 covers any span")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    len: usize,
    mins: Vec<u64>,
    widths: Vec<u8>,
    /// Word offset of each block's payload in `packed`; one extra entry
    /// marks the end of the last payload.
    offsets: Vec<u64>,
    packed: Vec<u64>,
}

impl Column {
    /// Compress a value sequence. Accepts the empty sequence.
    pub fn encode(values: &[u64]) -> Self {
        let blocks = values.len().div_ceil(BLOCK_LEN);
        let mut mins = Vec::with_capacity(blocks);
        let mut widths = Vec::with_capacity(blocks);
        let mut offsets = Vec::with_capacity(blocks + 1);
        let mut packed = Vec::new();
        offsets.push(0);
        for chunk in values.chunks(BLOCK_LEN) {
            let min = chunk.iter().copied().min().unwrap();
            let max = chunk.iter().copied().max().unwrap();
            let w = width_for(max - min);
            let words = (chunk.len() * w as usize).div_ceil(64);
            let base = packed.len();
            packed.resize(base + words, 0u64);
            for (i, &v) in chunk.iter().enumerate() {
                let delta = v - min;
                if w > 0 {
                    let bitpos = i * w as usize;
                    let word = base + (bitpos >> 6);
                    let shift = bitpos & 63;
                    packed[word] |= delta << shift;
                    if shift + w as usize > 64 {
                        packed[word + 1] |= delta >> (64 - shift);
                    }
                }
            }
            mins.push(min);
            widths.push(w);
            offsets.push(packed.len() as u64);
        }
        Column {
            len: values.len(),
            mins,
            widths,
            offsets,
            packed,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Constant-time element access.
    #[inline]
    pub fn get(&self, i: usize) -> u64 {
        debug_assert!(i < self.len, "index {i} out of range {}", self.len);
        let block = i >> 7;
        let w = self.widths[block] as usize;
        let min = self.mins[block];
        if w == 0 {
            return min;
        }
        let base = self.offsets[block] as usize;
        let bitpos = (i & (BLOCK_LEN - 1)) * w;
        let word = base + (bitpos >> 6);
        let shift = bitpos & 63;
        let mut delta = self.packed[word] >> shift;
        if shift + w > 64 {
            delta |= self.packed[word + 1] << (64 - shift);
        }
        if w < 64 {
            delta &= (1u64 << w) - 1;
        }
        min.wrapping_add(delta)
    }

    pub fn decode(&self) -> Vec<u64> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Bytes used by the compressed representation, metadata included.
    pub fn encoded_bytes(&self) -> usize {
        self.mins.len() * 8 + self.widths.len() + self.offsets.len() * 8 + self.packed.len() * 8
    }

    pub(crate) fn parts(&self) -> (usize, &[u64], &[u8], &[u64], &[u64]) {
        (self.len, &self.mins, &self.widths, &self.offsets, &self.packed)
    }

    pub(crate) fn from_parts(
        len: usize,
        mins: Vec<u64>,
        widths: Vec<u8>,
        offsets: Vec<u64>,
        packed: Vec<u64>,
    ) -> Self {
        Column {
            len,
            mins,
            widths,
            offsets,
            packed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn all_equal_block_uses_zero_width() {
        let col = Column::encode(&[5u64; 128]);
        let (_, mins, widths, _, packed) = col.parts();
        assert_eq!(mins, &[5]);
        assert_eq!(widths, &[0]);
        assert!(packed.is_empty());
        assert_eq!(col.decode(), vec![5u64; 128]);
    }

    #[test]
    fn ascending_block_width_is_seven_rounded_to_eight() {
        let values: Vec<u64> = (0..128).collect();
        let col = Column::encode(&values);
        let (_, mins, widths, _, _) = col.parts();
        assert_eq!(mins, &[0]);
        // 0..127 needs 7 bits; the allowed set rounds up to 8.
        assert_eq!(widths, &[8]);
        assert_eq!(col.decode(), values);
    }

    #[test]
    fn get_at_block_boundary() {
        let mut values: Vec<u64> = (0..128).collect();
        values.extend(1000..1032);
        let col = Column::encode(&values);
        assert_eq!(col.get(127), 127);
        assert_eq!(col.get(128), 1000);
        assert_eq!(col.get(159), 1031);
    }

    #[test]
    fn random_roundtrip_and_probes_against_mirror() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        // Mix of spans so several widths get exercised, including the
        // word-crossing 24- and 48-bit paths.
        for (n, span) in [
            (1usize, 1u64),
            (127, 1 << 3),
            (128, 1 << 13),
            (129, 1 << 20),
            (1000, 1 << 24),
            (4096, 1 << 40),
            (100_000, 1 << 45),
        ] {
            let base = rng.gen_range(0..u64::MAX - span);
            let mirror: Vec<u64> = (0..n).map(|_| base + rng.gen_range(0..span)).collect();
            let col = Column::encode(&mirror);
            assert_eq!(col.decode(), mirror);
            for _ in 0..10_000.min(4 * n) {
                let i = rng.gen_range(0..n);
                assert_eq!(col.get(i), mirror[i]);
            }
        }
    }

    #[test]
    fn extreme_values_roundtrip() {
        let values = vec![0, u64::MAX, 1, u64::MAX - 1, 0, 42];
        let col = Column::encode(&values);
        assert_eq!(col.decode(), values);
    }

    #[test]
    fn empty_column() {
        let col = Column::encode(&[]);
        assert_eq!(col.len(), 0);
        assert!(col.decode().is_empty());
    }

    #[test]
    fn compresses_narrow_data() {
        let values: Vec<u64> = (0..100_000u64).map(|i| 1_000_000 + i % 50).collect();
        let col = Column::encode(&values);
        assert!(col.encoded_bytes() < values.len() * 8);
    }
}
