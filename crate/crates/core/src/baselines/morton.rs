//! Z-value arithmetic: bit interleaving over d dimensions, rectangle
//! membership, and the next Z-value inside a query rectangle (the jump
//! target that lets a Z-ordered scan skip runs of non-matching points).

/// Interleaved bit-space over `dims` dimensions with `bits` bits each.
/// Dimension 0 owns the least significant bit of the code.
#[derive(Debug, Clone)]
pub struct ZSpace {
    pub dims: usize,
    pub bits: u32,
    /// Per-dimension mask of the code bits that dimension owns.
    masks: Vec<u64>,
}

impl ZSpace {
    pub fn new(dims: usize, bits: u32) -> Self {
        assert!(dims >= 1);
        assert!(bits >= 1 && bits as usize * dims <= 64);
        let mut masks = vec![0u64; dims];
        for b in 0..bits {
            for (i, m) in masks.iter_mut().enumerate() {
                *m |= 1u64 << (b as usize * dims + i);
            }
        }
        ZSpace { dims, bits, masks }
    }

    pub fn total_bits(&self) -> u32 {
        self.bits * self.dims as u32
    }

    /// Interleave per-dimension coordinates (each below `2^bits`).
    pub fn interleave(&self, coords: &[u64]) -> u64 {
        debug_assert_eq!(coords.len(), self.dims);
        let mut z = 0u64;
        for b in 0..self.bits {
            for (i, &c) in coords.iter().enumerate() {
                debug_assert!(self.bits == 64 || c < (1u64 << self.bits));
                z |= ((c >> b) & 1) << (b as usize * self.dims + i);
            }
        }
        z
    }

    pub fn deinterleave(&self, z: u64) -> Vec<u64> {
        let mut coords = vec![0u64; self.dims];
        for b in 0..self.bits {
            for (i, c) in coords.iter_mut().enumerate() {
                *c |= ((z >> (b as usize * self.dims + i)) & 1) << b;
            }
        }
        coords
    }

    /// Componentwise containment test in code space: each dimension's
    /// bits, compared as an integer, must lie between the corner codes.
    #[inline]
    pub fn in_rect(&self, z: u64, zmin: u64, zmax: u64) -> bool {
        self.masks.iter().all(|&m| {
            let d = z & m;
            d >= (zmin & m) && d <= (zmax & m)
        })
    }

    fn same_dim_bits_below(&self, pos: u32) -> u64 {
        self.masks[pos as usize % self.dims] & ((1u64 << pos) - 1)
    }

    /// Smallest Z-value greater than `z` inside the rectangle spanned by
    /// the corner codes, or `None` when no such value exists. `z` must
    /// lie outside the rectangle.
    pub fn next_in_rect(&self, z: u64, zmin: u64, zmax: u64) -> Option<u64> {
        let mut lo = zmin;
        let mut hi = zmax;
        let mut candidate: Option<u64> = None;
        for pos in (0..self.total_bits()).rev() {
            let zb = (z >> pos) & 1;
            let lob = (lo >> pos) & 1;
            let hib = (hi >> pos) & 1;
            match (zb, lob, hib) {
                (0, 0, 0) => {}
                (0, 0, 1) => {
                    // Record the smallest in-rect value in the upper
                    // half, keep searching the lower half.
                    candidate = Some((lo | (1 << pos)) & !self.same_dim_bits_below(pos));
                    hi = (hi & !(1 << pos)) | self.same_dim_bits_below(pos);
                }
                (0, 1, 1) => return Some(lo),
                (1, 0, 0) => return candidate,
                (1, 0, 1) => {
                    lo = (lo | (1 << pos)) & !self.same_dim_bits_below(pos);
                }
                (1, 1, 1) => {}
                _ => unreachable!("corner codes out of order at bit {pos}"),
            }
        }
        // z itself is inside the rectangle; the caller asked anyway.
        candidate
    }
}
