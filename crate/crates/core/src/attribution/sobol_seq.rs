//! Unscrambled Sobol low-discrepancy sequence in Gray-code order.
//!
//! The sequence is indexed so that point 0 is `(0.5, ..., 0.5)`; the all-zero
//! origin of the raw sequence is skipped. An optional random digital shift
//! (XOR of every coordinate with a seeded 32-bit mask) gives a scrambled
//! variant that keeps the net structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sobol_table::{MAX_DIMS, M_INIT, POLY};
use crate::error::{Error, Result};

const BITS: usize = 32;

pub struct SobolSequence {
    dims: usize,
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    shift: Vec<u32>,
    index: u64,
}

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1u32 << (BITS - 1 - k);
        }
        return v;
    }
    let poly = POLY[dim];
    let degree = (32 - poly.leading_zeros() - 1) as usize;
    let m = &M_INIT[dim];
    for k in 0..degree.min(BITS) {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in degree..BITS {
        let mut x = v[k - degree] ^ (v[k - degree] >> degree);
        for j in 1..degree {
            if (poly >> (degree - j)) & 1 == 1 {
                x ^= v[k - j];
            }
        }
        v[k] = x;
    }
    v
}

impl SobolSequence {
    pub fn new(dims: usize) -> Result<Self> {
        if dims == 0 || dims > MAX_DIMS {
            return Err(Error::InvalidParam(format!(
                "sobol sequence supports 1..={MAX_DIMS} dimensions, got {dims}"
            )));
        }
        Ok(Self {
            dims,
            directions: (0..dims).map(direction_numbers).collect(),
            state: vec![0; dims],
            shift: vec![0; dims],
            index: 0,
        })
    }

    /// Random digital shift seeded by `seed`.
    pub fn scrambled(dims: usize, seed: u64) -> Result<Self> {
        let mut s = Self::new(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        s.shift = (0..dims).map(|_| rng.random::<u32>()).collect();
        Ok(s)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Next point in `[0, 1)^dims`.
    pub fn next_point(&mut self) -> Vec<f64> {
        // Advance first: raw index 0 is the origin, which is skipped.
        let c = (self.index.trailing_ones() as usize).min(BITS - 1);
        for (s, d) in self.state.iter_mut().zip(&self.directions) {
            *s ^= d[c];
        }
        self.index += 1;
        self.state
            .iter()
            .zip(&self.shift)
            .map(|(s, m)| (s ^ m) as f64 / 4_294_967_296.0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_point_is_midpoint() {
        let mut s = SobolSequence::new(6).unwrap();
        assert_eq!(s.next_point(), vec![0.5; 6]);
        assert_eq!(s.next_point(), vec![0.75, 0.25, 0.25, 0.25, 0.75, 0.75]);
        assert_eq!(s.next_point(), vec![0.25, 0.75, 0.75, 0.75, 0.25, 0.25]);
        assert_eq!(s.next_point(), vec![0.375, 0.375, 0.625, 0.875, 0.375, 0.125]);
    }

    /// Reference values from an independent Sobol implementation
    /// (unscrambled, Joe-Kuo direction numbers, Gray-code order).
    #[test]
    fn matches_reference_points() {
        let mut s = SobolSequence::new(48).unwrap();
        let pts: Vec<Vec<f64>> = (0..127).map(|_| s.next_point()).collect();
        let pick = |i: usize| -> Vec<f64> { [0, 1, 7, 20, 39, 47].iter().map(|&j| pts[i - 1][j]).collect() };
        assert_eq!(pick(2), vec![0.75, 0.25, 0.75, 0.25, 0.25, 0.25]);
        assert_eq!(pick(5), vec![0.875, 0.875, 0.375, 0.625, 0.375, 0.625]);
        assert_eq!(pick(77), vec![0.8359375, 0.8359375, 0.6484375, 0.1484375, 0.2734375, 0.5078125]);
        assert_eq!(pick(127), vec![0.0078125, 0.6640625, 0.0703125, 0.5390625, 0.6015625, 0.9296875]);
    }

    #[test]
    fn balanced_in_each_dimension() {
        // Points 1..=2^k of the raw sequence plus the origin form a (0, k, d)-net
        // prefix in one dimension: each of the 2^k cells holds exactly one point.
        let mut s = SobolSequence::new(10).unwrap();
        let n = 256;
        let mut cells = vec![vec![0u32; n]; 10];
        cells.iter_mut().for_each(|c| c[0] += 1);
        for _ in 0..n - 1 {
            for (d, x) in s.next_point().into_iter().enumerate() {
                cells[d][(x * n as f64) as usize] += 1;
            }
        }
        assert!(cells.iter().all(|c| c.iter().all(|&k| k == 1)));
    }

    #[test]
    fn scramble_is_deterministic() {
        let mut a = SobolSequence::scrambled(4, 9).unwrap();
        let mut b = SobolSequence::scrambled(4, 9).unwrap();
        for _ in 0..16 {
            assert_eq!(a.next_point(), b.next_point());
        }
        assert!(SobolSequence::new(MAX_DIMS + 1).is_err());
    }
}
