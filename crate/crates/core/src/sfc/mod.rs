//! Space-filling-curve encoders.
//!
//! Three encoders map integer lattice coordinates to keys along a curve:
//! an iterative Hilbert encoder for 2 to 4 dimensions driven by per-digit
//! generator pairs, a table-driven 3D Hilbert encoder, and Morton
//! (Z-order) encoding.  Keys are exact digit sequences; the normalized
//! float in `[0, 1]` is a lossy convenience view.

mod tables;

use crate::error::{Error, Result};
use std::cmp::Ordering;

/// Maximum level accepted by the table-driven 3D encoder.
pub const HSFC_MAX_LEVEL: u32 = 30;

/// Integer lattice coordinate with one component per dimension.
///
/// For a level-`m` curve every component must be below `2^m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeCoord(pub Vec<u64>);

impl LatticeCoord {
    pub fn new(components: Vec<u64>) -> Self {
        LatticeCoord(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    fn check_level(&self, level: u32) -> Result<()> {
        if level >= 64 {
            return Err(Error::InvalidArgument(format!(
                "curve level {level} exceeds 63"
            )));
        }
        for (axis, &c) in self.0.iter().enumerate() {
            if level < 64 && c >= 1u64 << level {
                return Err(Error::InvalidArgument(format!(
                    "component {axis} = {c} out of range for level {level}"
                )));
            }
        }
        Ok(())
    }
}

impl From<[u64; 3]> for LatticeCoord {
    fn from(c: [u64; 3]) -> Self {
        LatticeCoord(c.to_vec())
    }
}

impl From<[u64; 2]> for LatticeCoord {
    fn from(c: [u64; 2]) -> Self {
        LatticeCoord(c.to_vec())
    }
}

/// Fixed-level curve key: `m` digits in base `2^n`, most significant first.
///
/// Keys from the same encoder and level compare as integers; keys of
/// different lengths compare as left-aligned fractions in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurveKey {
    digits: Vec<u8>,
    radix_bits: u32,
}

impl CurveKey {
    fn new(digits: Vec<u8>, radix_bits: u32) -> Self {
        CurveKey { digits, radix_bits }
    }

    /// Digits `r_m ... r_1`, most significant first, each below `2^n`.
    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    /// Number of levels (digit count).
    pub fn level(&self) -> usize {
        self.digits.len()
    }

    /// Key as an integer in `[0, 2^(n*m))`. Requires `n*m <= 128` bits.
    pub fn index_value(&self) -> u128 {
        let mut v: u128 = 0;
        for &d in &self.digits {
            v = (v << self.radix_bits) | u128::from(d);
        }
        v
    }

    /// Lossy view of the key as `sum r_k * (2^n)^(k - m - 1)` in `[0, 1]`.
    pub fn normalized(&self) -> f64 {
        let base = f64::from(1u32 << self.radix_bits);
        self.digits
            .iter()
            .rev()
            .fold(0.0, |acc, &d| (acc + f64::from(d)) / base)
    }
}

impl PartialOrd for CurveKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CurveKey {
    fn cmp(&self, other: &Self) -> Ordering {
        let len = self.digits.len().max(other.digits.len());
        for i in 0..len {
            let a = self.digits.get(i).copied().unwrap_or(0);
            let b = other.digits.get(i).copied().unwrap_or(0);
            match a.cmp(&b) {
                Ordering::Equal => {}
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

/// Generator pair for one digit value of the n-dimensional Hilbert encoder.
///
/// `swap_mask` (the g0 vector) is either zero (identity) or has exactly two
/// set bits marking the components to exchange; `flip_mask` (the g1 vector)
/// marks the components to reflect within the remaining subcube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HilbertGenerator {
    pub swap_mask: u32,
    pub flip_mask: u32,
}

/// Generator table for dimension `n` (one entry per digit value).
pub fn hilbert_generators(n: usize) -> Result<Vec<HilbertGenerator>> {
    let (flips, swaps): (&[u8], &[u8]) = match n {
        2 => (&tables::HILBERT_ND_FLIP_2, &tables::HILBERT_ND_SWAP_2),
        3 => (&tables::HILBERT_ND_FLIP_3, &tables::HILBERT_ND_SWAP_3),
        4 => (&tables::HILBERT_ND_FLIP_4, &tables::HILBERT_ND_SWAP_4),
        _ => return Err(Error::UnsupportedDimension(n)),
    };
    Ok(flips
        .iter()
        .zip(swaps)
        .map(|(&f, &s)| HilbertGenerator {
            swap_mask: u32::from(s),
            flip_mask: u32::from(f),
        })
        .collect())
}

/// Map a binary vector `(a_1, ..., a_n)` to its position along the
/// binary-reflected Gray sequence: `b_1 = a_1` and `b_i` is flipped
/// whenever the running parity of `a_1 ... a_{i-1}` is odd.
pub fn gray_forward(bits: &[u8]) -> Result<u64> {
    if bits.is_empty() {
        return Err(Error::InvalidArgument("gray_forward of dimension 0".into()));
    }
    if bits.len() > 63 {
        return Err(Error::InvalidArgument("gray_forward of dimension > 63".into()));
    }
    let mut j: u64 = 0;
    let mut parity: u8 = 0;
    for &a in bits {
        if a > 1 {
            return Err(Error::InvalidArgument(format!(
                "gray_forward expects binary values, got {a}"
            )));
        }
        let b = a ^ parity;
        parity ^= a;
        j = (j << 1) | u64::from(b);
    }
    Ok(j)
}

/// Inverse of [`gray_forward`]: map `j` in `[0, 2^n)` back to the binary
/// vector `(b_1, ..., b_n)`.
pub fn gray_backward(j: u64, n: usize) -> Result<Vec<u8>> {
    if n == 0 || n > 63 {
        return Err(Error::InvalidArgument(format!("gray_backward dimension {n}")));
    }
    if j >= 1u64 << n {
        return Err(Error::InvalidArgument(format!(
            "gray_backward input {j} out of range for n = {n}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut prev: u8 = 0;
    for i in 0..n {
        let a = ((j >> (n - 1 - i)) & 1) as u8;
        let b = a ^ prev;
        out.push(b);
        prev = a;
    }
    Ok(out)
}

/// Iterative Hilbert encoding for dimensions 2 to 4.
///
/// Digit `r_k` is the Gray position of the level-`k` coordinate bits; the
/// remaining bits are then reflected and swapped by the digit's generator
/// pair before the next level is read.
pub fn hilbert_encode_nd(coord: &LatticeCoord, level: u32) -> Result<CurveKey> {
    let n = coord.dim();
    if !(2..=4).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    coord.check_level(level)?;
    let (flips, swaps): (&[u8], &[u8]) = match n {
        2 => (&tables::HILBERT_ND_FLIP_2, &tables::HILBERT_ND_SWAP_2),
        3 => (&tables::HILBERT_ND_FLIP_3, &tables::HILBERT_ND_SWAP_3),
        _ => (&tables::HILBERT_ND_FLIP_4, &tables::HILBERT_ND_SWAP_4),
    };

    let mut x = coord.0.clone();
    let mut digits = Vec::with_capacity(level as usize);
    let mut a = [0u8; 4];
    for k in (1..=level).rev() {
        let half = 1u64 << (k - 1);
        for p in 0..n {
            a[p] = ((x[n - 1 - p] >> (k - 1)) & 1) as u8;
        }
        let r = gray_forward(&a[..n])? as usize;
        digits.push(r as u8);
        for xc in x.iter_mut() {
            if *xc & half != 0 {
                *xc -= half;
            }
        }
        let flip = flips[r];
        for (c, xc) in x.iter_mut().enumerate() {
            if (flip >> c) & 1 != 0 {
                *xc = half - 1 - *xc;
            }
        }
        let swap = swaps[r];
        if swap != 0 {
            let c1 = swap.trailing_zeros() as usize;
            let c2 = (7 - swap.leading_zeros()) as usize;
            x.swap(c1, c2);
        }
    }
    Ok(CurveKey::new(digits, n as u32))
}

/// Table-driven 3D Hilbert encoding.
///
/// Each level packs the coordinate bits as `4x + 2y + z`, looks the digit
/// up in the ordering table for the current orientation state, and advances
/// the state through the orientation table. Levels above
/// [`HSFC_MAX_LEVEL`] are rejected.
pub fn hilbert_encode_3d_table(coord: &LatticeCoord, level: u32) -> Result<CurveKey> {
    if coord.dim() != 3 {
        return Err(Error::UnsupportedDimension(coord.dim()));
    }
    if level > HSFC_MAX_LEVEL {
        return Err(Error::InvalidArgument(format!(
            "level {level} exceeds the table encoder maximum {HSFC_MAX_LEVEL}"
        )));
    }
    coord.check_level(level)?;
    let (x, y, z) = (coord.0[0], coord.0[1], coord.0[2]);
    let mut state = 0usize;
    let mut digits = Vec::with_capacity(level as usize);
    for k in (1..=level).rev() {
        let temp = (((x >> (k - 1)) & 1) << 2 | ((y >> (k - 1)) & 1) << 1 | ((z >> (k - 1)) & 1))
            as usize;
        digits.push(tables::HILBERT3D_ORDER[state][temp]);
        state = tables::HILBERT3D_STATE[state][temp] as usize;
    }
    Ok(CurveKey::new(digits, 3))
}

/// Morton (Z-order) encoding: digit `k` interleaves the level-`k` bits of
/// all components with the first component as the highest bit.
pub fn morton_encode(coord: &LatticeCoord, level: u32) -> Result<CurveKey> {
    let n = coord.dim();
    if n == 0 || n > 7 {
        return Err(Error::UnsupportedDimension(n));
    }
    coord.check_level(level)?;
    let mut digits = Vec::with_capacity(level as usize);
    for k in (1..=level).rev() {
        let mut d = 0u8;
        for (c, &xc) in coord.0.iter().enumerate() {
            d |= (((xc >> (k - 1)) & 1) as u8) << (n - 1 - c);
        }
        digits.push(d);
    }
    Ok(CurveKey::new(digits, n as u32))
}

/// Affine map of `point` into the half-open unit cube defined by `bbox`
/// (per-axis `[lo, hi]` pairs). Results are clamped into `[0, 1)` so a
/// level-`m` truncation always lands on a valid lattice cell.
pub fn normalize_to_unit_cube(point: &[f64], bbox: &[[f64; 2]]) -> Result<Vec<f64>> {
    if point.len() != bbox.len() {
        return Err(Error::InvalidArgument(format!(
            "point dimension {} does not match bbox dimension {}",
            point.len(),
            bbox.len()
        )));
    }
    let below_one = 1.0f64.next_down();
    let mut out = Vec::with_capacity(point.len());
    for (axis, (&p, b)) in point.iter().zip(bbox).enumerate() {
        let extent = b[1] - b[0];
        if !extent.is_finite() || extent <= 0.0 {
            return Err(Error::DegenerateDomain { axis, extent });
        }
        let v = (p - b[0]) / extent;
        out.push(v.clamp(0.0, below_one));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_coords(n: usize, m: u32) -> Vec<Vec<u64>> {
        let side = 1u64 << m;
        let mut out = vec![vec![]];
        for _ in 0..n {
            let mut next = Vec::new();
            for c in &out {
                for v in 0..side {
                    let mut c2 = c.clone();
                    c2.push(v);
                    next.push(c2);
                }
            }
            out = next;
        }
        out
    }

    fn check_bijective_adjacent(encode: &dyn Fn(&LatticeCoord) -> CurveKey, n: usize, m: u32) {
        let mut pairs: Vec<(u128, Vec<u64>)> = all_coords(n, m)
            .into_iter()
            .map(|c| (encode(&LatticeCoord(c.clone())).index_value(), c))
            .collect();
        pairs.sort();
        assert_eq!(pairs.len(), 1usize << (n as u32 * m));
        for w in pairs.windows(2) {
            assert_ne!(w[0].0, w[1].0, "duplicate key at n={n} m={m}");
            let dist: u64 = w[0]
                .1
                .iter()
                .zip(&w[1].1)
                .map(|(a, b)| a.abs_diff(*b))
                .sum();
            assert_eq!(dist, 1, "keys {} and {} are not face-adjacent", w[0].0, w[1].0);
        }
    }

    #[test]
    fn gray_forward_examples() {
        assert_eq!(gray_forward(&[0, 0]).unwrap(), 0);
        assert_eq!(gray_forward(&[1, 1]).unwrap(), 2);
        assert_eq!(gray_forward(&[1, 0]).unwrap(), 3);
        assert!(gray_forward(&[]).is_err());
        assert!(gray_forward(&[2]).is_err());
    }

    #[test]
    fn gray_backward_examples() {
        assert_eq!(gray_backward(0, 2).unwrap(), vec![0, 0]);
        assert_eq!(gray_backward(2, 2).unwrap(), vec![1, 1]);
        assert!(gray_backward(4, 2).is_err());
    }

    #[test]
    fn gray_mutual_inverse_exhaustive() {
        for n in 1..=6usize {
            for j in 0..1u64 << n {
                let bits = gray_backward(j, n).unwrap();
                assert_eq!(gray_forward(&bits).unwrap(), j);
            }
            // and the other direction over all bit vectors
            for v in 0..1u64 << n {
                let bits: Vec<u8> = (0..n).map(|i| ((v >> (n - 1 - i)) & 1) as u8).collect();
                let j = gray_forward(&bits).unwrap();
                assert_eq!(gray_backward(j, n).unwrap(), bits);
            }
        }
    }

    #[test]
    fn hilbert_nd_origin_is_zero() {
        for n in 2..=4usize {
            for m in 1..=4u32 {
                let key = hilbert_encode_nd(&LatticeCoord(vec![0; n]), m).unwrap();
                assert_eq!(key.index_value(), 0);
                assert_eq!(key.normalized(), 0.0);
            }
        }
    }

    #[test]
    fn hilbert_nd_level1_is_permutation() {
        let mut seen = [false; 4];
        for c in all_coords(2, 1) {
            let key = hilbert_encode_nd(&LatticeCoord(c), 1).unwrap();
            seen[key.index_value() as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn hilbert_nd_bijective_and_adjacent() {
        for m in 1..=5u32 {
            check_bijective_adjacent(&|c| hilbert_encode_nd(c, m).unwrap(), 2, m);
        }
        for m in 1..=4u32 {
            check_bijective_adjacent(&|c| hilbert_encode_nd(c, m).unwrap(), 3, m);
        }
        for m in 1..=2u32 {
            check_bijective_adjacent(&|c| hilbert_encode_nd(c, m).unwrap(), 4, m);
        }
    }

    #[test]
    fn hilbert_nd_rejects_bad_dims() {
        assert!(matches!(
            hilbert_encode_nd(&LatticeCoord(vec![0]), 1),
            Err(Error::UnsupportedDimension(1))
        ));
        assert!(matches!(
            hilbert_encode_nd(&LatticeCoord(vec![0; 5]), 1),
            Err(Error::UnsupportedDimension(5))
        ));
        assert!(hilbert_encode_nd(&LatticeCoord(vec![2, 0]), 1).is_err());
    }

    #[test]
    fn hilbert_3d_table_examples() {
        let k = hilbert_encode_3d_table(&[0, 0, 0].into(), 1).unwrap();
        assert_eq!(k.digits(), &[0]);
        assert_eq!(k.normalized(), 0.0);
        let k = hilbert_encode_3d_table(&[0, 0, 1].into(), 1).unwrap();
        assert_eq!(k.digits(), &[7]);
        assert_eq!(k.normalized(), 7.0 / 8.0);
        assert!(hilbert_encode_3d_table(&[0, 0, 0].into(), 31).is_err());
        assert!(hilbert_encode_3d_table(&LatticeCoord(vec![0, 0]), 1).is_err());
    }

    #[test]
    fn hilbert_3d_table_bijective_and_adjacent() {
        for m in 1..=4u32 {
            check_bijective_adjacent(&|c| hilbert_encode_3d_table(c, m).unwrap(), 3, m);
        }
    }

    #[test]
    fn prefix_consistency() {
        // the level-m digits of a corner cell, truncated to m-1, equal the
        // level-(m-1) key of the coarsened cell
        for (n, enc) in [
            (2usize, &hilbert_encode_nd as &dyn Fn(&LatticeCoord, u32) -> Result<CurveKey>),
            (3, &hilbert_encode_nd),
            (3, &hilbert_encode_3d_table),
        ] {
            for m in 2..=4u32 {
                for c in all_coords(n, m - 1) {
                    let parent = enc(&LatticeCoord(c.clone()), m - 1).unwrap();
                    let child: Vec<u64> = c.iter().map(|&v| 2 * v).collect();
                    let child_key = enc(&LatticeCoord(child), m).unwrap();
                    assert_eq!(&child_key.digits()[..(m - 1) as usize], parent.digits());
                }
            }
        }
    }

    #[test]
    fn morton_examples() {
        assert_eq!(morton_encode(&LatticeCoord(vec![0, 0]), 1).unwrap().index_value(), 0);
        assert_eq!(morton_encode(&LatticeCoord(vec![1, 0]), 1).unwrap().index_value(), 2);
        assert_eq!(morton_encode(&LatticeCoord(vec![0, 1]), 1).unwrap().index_value(), 1);
        assert_eq!(morton_encode(&LatticeCoord(vec![1, 1]), 1).unwrap().index_value(), 3);
    }

    #[test]
    fn morton_has_jumps() {
        // n = 2, m = 2: at least one consecutive-key pair is not face-adjacent
        let mut pairs: Vec<(u128, Vec<u64>)> = all_coords(2, 2)
            .into_iter()
            .map(|c| (morton_encode(&LatticeCoord(c.clone()), 2).unwrap().index_value(), c))
            .collect();
        pairs.sort();
        let mut jump = false;
        for w in pairs.windows(2) {
            let dist: u64 = w[0].1.iter().zip(&w[1].1).map(|(a, b)| a.abs_diff(*b)).sum();
            if dist != 1 {
                jump = true;
            }
        }
        assert!(jump);
        // keys 3 and 4 specifically belong to non-adjacent cells
        let c3 = &pairs[3].1;
        let c4 = &pairs[4].1;
        let dist: u64 = c3.iter().zip(c4).map(|(a, b)| a.abs_diff(*b)).sum();
        assert!(dist > 1);
    }

    #[test]
    fn morton_bijective() {
        for m in 1..=3u32 {
            let mut keys: Vec<u128> = all_coords(3, m)
                .into_iter()
                .map(|c| morton_encode(&LatticeCoord(c), m).unwrap().index_value())
                .collect();
            keys.sort_unstable();
            keys.dedup();
            assert_eq!(keys.len(), 1 << (3 * m));
        }
    }

    #[test]
    fn generator_tables_have_valid_shape() {
        for n in 2..=4usize {
            let gens = hilbert_generators(n).unwrap();
            assert_eq!(gens.len(), 1 << n);
            for g in &gens {
                assert!(
                    g.swap_mask == 0 || g.swap_mask.count_ones() == 2,
                    "swap vector must have exactly two set bits or be identity"
                );
                assert!(g.swap_mask < 1 << n);
                assert!(g.flip_mask < 1 << n);
            }
        }
        assert!(hilbert_generators(5).is_err());
    }

    #[test]
    fn table_rows_are_permutations_with_valid_states() {
        for row in &tables::HILBERT3D_ORDER {
            let mut sorted = *row;
            sorted.sort_unstable();
            assert_eq!(sorted, [0, 1, 2, 3, 4, 5, 6, 7]);
        }
        for row in &tables::HILBERT3D_STATE {
            assert!(row.iter().all(|&s| s < 24));
        }
    }

    #[test]
    fn normalize_examples() {
        let b2 = [[0.0, 2.0]; 3];
        assert_eq!(
            normalize_to_unit_cube(&[1.0, 1.0, 1.0], &b2).unwrap(),
            vec![0.5, 0.5, 0.5]
        );
        assert_eq!(
            normalize_to_unit_cube(&[0.0, 0.0, 0.0], &b2).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
        let b = [[1.0, 3.0], [0.0, 4.0], [0.0, 1.0]];
        assert_eq!(
            normalize_to_unit_cube(&[2.0, 2.0, 0.5], &b).unwrap(),
            vec![0.5, 0.5, 0.5]
        );
        // upper corner clamps strictly below one
        let v = normalize_to_unit_cube(&[3.0, 4.0, 1.0], &b).unwrap();
        assert!(v.iter().all(|&x| x < 1.0 && x > 0.999));
        assert!(normalize_to_unit_cube(&[0.0], &[[1.0, 1.0]]).is_err());
    }

    #[test]
    fn curve_key_ordering_and_normalized() {
        let a = CurveKey::new(vec![1, 2], 3);
        let b = CurveKey::new(vec![1, 3], 3);
        assert!(a < b);
        assert_eq!(a.normalized(), (1.0 * 8.0 + 2.0) / 64.0);
    }
}
