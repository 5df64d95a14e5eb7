//! Bit-packed linear algebra over GF(2).
//!
//! Vectors store bits little-endian within `u64` words; matrices are row-major with every row
//! padded to a whole number of words. Pad bits beyond the logical length are kept at zero so
//! that word-level XOR, AND and popcount can be used without masking.

use std::fmt;
use std::ops::{BitXor, BitXorAssign};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use thiserror::Error;

const WORD_BITS: usize = 64;

#[inline]
fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

#[inline]
fn tail_mask(len: usize) -> u64 {
    match len % WORD_BITS {
        0 => u64::MAX,
        rem => (1u64 << rem) - 1,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Gf2Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cannot sample {weight} distinct indices from {len}")]
    WeightTooLarge { weight: usize, len: usize },
    #[error("invalid support: {0}")]
    InvalidSupport(String),
    #[error("not a permutation of 0..{0}")]
    NotAPermutation(usize),
}

/// A vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = BitVec {
            len,
            words: vec![u64::MAX; words_for(len)],
        };
        v.clear_padding();
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    /// Builds a vector from raw words, clearing any bits beyond `len`.
    pub fn from_words(len: usize, mut words: Vec<u64>) -> Self {
        words.resize(words_for(len), 0);
        let mut v = BitVec { len, words };
        v.clear_padding();
        v
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let words = (0..words_for(len)).map(|_| rng.random::<u64>()).collect();
        Self::from_words(len, words)
    }

    /// Each bit is independently 1 with probability `p`.
    pub fn bernoulli<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Self {
        let mut v = Self::zeros(len);
        if p <= 0.0 {
            return v;
        }
        for i in 0..len {
            if rng.random::<f64>() < p {
                v.set(i, true);
            }
        }
        v
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        self.words[i / WORD_BITS] ^= 1u64 << (i % WORD_BITS);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitVec) -> bool {
        assert_eq!(self.len, other.len, "dot of vectors with different lengths");
        parity_of_and(&self.words, &other.words)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Indices of set bits, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * WORD_BITS + b)
            })
        })
    }

    /// Bits `[start, end)` as a new vector.
    pub fn slice(&self, start: usize, end: usize) -> BitVec {
        assert!(start <= end && end <= self.len);
        let mut out = BitVec::zeros(end - start);
        for (j, i) in (start..end).enumerate() {
            if self.get(i) {
                out.set(j, true);
            }
        }
        out
    }

    /// Concatenation of `parts` in order.
    pub fn concat(parts: &[&BitVec]) -> BitVec {
        let total = parts.iter().map(|p| p.len).sum();
        let mut out = BitVec::zeros(total);
        let mut offset = 0;
        for part in parts {
            for i in part.iter_ones() {
                out.set(offset + i, true);
            }
            offset += part.len;
        }
        out
    }

    /// Copy with length changed to `len`: truncation drops high bits, growth appends zeros.
    pub fn resized(&self, len: usize) -> BitVec {
        let mut words = self.words.clone();
        words.truncate(words_for(len));
        BitVec::from_words(len, words)
    }

    /// Packs bits LSB-first into `ceil(len / 8)` bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        let mut out = Vec::with_capacity(nbytes);
        for b in 0..nbytes {
            out.push((self.words[b / 8] >> ((b % 8) * 8)) as u8);
        }
        out
    }

    /// Inverse of [`BitVec::to_bytes`]; returns `None` if any pad bit in the last byte is set.
    pub fn from_bytes(len: usize, bytes: &[u8]) -> Option<BitVec> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        let mut words = vec![0u64; words_for(len)];
        for (b, &byte) in bytes.iter().enumerate() {
            words[b / 8] |= (byte as u64) << ((b % 8) * 8);
        }
        let v = BitVec { len, words };
        let mut check = v.clone();
        check.clear_padding();
        (check == v).then_some(v)
    }

    fn clear_padding(&mut self) {
        if let Some(last) = self.words.last_mut() {
            *last &= tail_mask(self.len);
        }
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec[{}](", self.len)?;
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        f.write_str(")")
    }
}

impl BitXorAssign<&BitVec> for BitVec {
    fn bitxor_assign(&mut self, rhs: &BitVec) {
        assert_eq!(self.len, rhs.len, "xor of vectors with different lengths");
        xor_into(&mut self.words, &rhs.words);
    }
}

impl BitXor<&BitVec> for &BitVec {
    type Output = BitVec;

    fn bitxor(self, rhs: &BitVec) -> BitVec {
        let mut out = self.clone();
        out ^= rhs;
        out
    }
}

#[inline]
pub(crate) fn xor_into(dst: &mut [u64], src: &[u64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

#[inline]
fn parity_of_and(a: &[u64], b: &[u64]) -> bool {
    let mut acc = 0u64;
    for (x, y) in a.iter().zip(b) {
        acc ^= x & y;
    }
    acc.count_ones() & 1 == 1
}

/// A dense row-major matrix over GF(2).
#[derive(Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        BitMatrix {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(rows, cols);
        let mask = tail_mask(cols);
        for r in 0..rows {
            let row = m.row_words_mut(r);
            for w in row.iter_mut() {
                *w = rng.random();
            }
            if let Some(last) = row.last_mut() {
                *last &= mask;
            }
        }
        m
    }

    pub fn from_rows(cols: usize, rows: &[BitVec]) -> Result<Self, Gf2Error> {
        let mut m = Self::zeros(rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Gf2Error::DimensionMismatch {
                    expected: cols,
                    actual: row.len(),
                });
            }
            m.row_words_mut(i).copy_from_slice(row.words());
        }
        Ok(m)
    }

    /// Parses rows of `'0'`/`'1'` characters; handy for small literal matrices.
    pub fn from_strs(rows: &[&str]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let vecs: Vec<BitVec> = rows
            .iter()
            .map(|r| {
                assert_eq!(r.len(), cols, "ragged matrix literal");
                BitVec::from_bools(&r.bytes().map(|c| c == b'1').collect::<Vec<_>>())
            })
            .collect();
        Self::from_rows(cols, &vecs).expect("rows have equal length")
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(r < self.rows && c < self.cols);
        (self.data[r * self.stride + c / WORD_BITS] >> (c % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(r < self.rows && c < self.cols);
        let word = &mut self.data[r * self.stride + c / WORD_BITS];
        let mask = 1u64 << (c % WORD_BITS);
        if value {
            *word |= mask;
        } else {
            *word &= !mask;
        }
    }

    #[inline]
    pub fn row_words(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    #[inline]
    pub(crate) fn row_words_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.data[r * self.stride..(r + 1) * self.stride]
    }

    pub fn row(&self, r: usize) -> BitVec {
        BitVec::from_words(self.cols, self.row_words(r).to_vec())
    }

    pub fn set_row(&mut self, r: usize, row: &BitVec) {
        assert_eq!(row.len(), self.cols);
        self.row_words_mut(r).copy_from_slice(row.words());
    }

    /// `row[dst] ^= row[src]`.
    pub fn xor_rows(&mut self, dst: usize, src: usize) {
        assert_ne!(dst, src);
        let s = self.stride;
        let (a, b) = if dst < src {
            let (lo, hi) = self.data.split_at_mut(src * s);
            (&mut lo[dst * s..(dst + 1) * s], &hi[..s])
        } else {
            let (lo, hi) = self.data.split_at_mut(dst * s);
            (&mut hi[..s], &lo[src * s..(src + 1) * s])
        };
        xor_into(a, b);
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for w in 0..self.stride {
            self.data.swap(a * self.stride + w, b * self.stride + w);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&w| w == 0)
    }

    /// Matrix-vector product `M·v`.
    pub fn matvec(&self, v: &BitVec) -> Result<BitVec, Gf2Error> {
        if v.len() != self.cols {
            return Err(Gf2Error::DimensionMismatch {
                expected: self.cols,
                actual: v.len(),
            });
        }
        let mut out = BitVec::zeros(self.rows);
        for r in 0..self.rows {
            if parity_of_and(self.row_words(r), v.words()) {
                out.set(r, true);
            }
        }
        Ok(out)
    }

    /// Rows selected by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> BitMatrix {
        let mut m = BitMatrix::zeros(indices.len(), self.cols);
        for (i, &r) in indices.iter().enumerate() {
            m.row_words_mut(i).copy_from_slice(self.row_words(r));
        }
        m
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in BitVec::from_words(self.cols, self.row_words(r).to_vec()).iter_ones() {
                t.set(c, r, true);
            }
        }
        t
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                f.write_str(if self.get(r, c) { "1" } else { "0" })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Output of [`row_reduce`].
#[derive(Debug, Clone)]
pub struct RowReduction {
    pub reduced: BitMatrix,
    pub rank: usize,
    /// Pivot column of each nonzero row of `reduced`, ascending.
    pub pivots: Vec<usize>,
}

/// Gauss-Jordan elimination to reduced row-echelon form.
pub fn row_reduce(m: &BitMatrix) -> RowReduction {
    let mut a = m.clone();
    let mut pivots = Vec::new();
    let mut next = 0;
    for col in 0..a.cols {
        if next == a.rows {
            break;
        }
        let Some(p) = (next..a.rows).find(|&r| a.get(r, col)) else {
            continue;
        };
        a.swap_rows(next, p);
        for r in 0..a.rows {
            if r != next && a.get(r, col) {
                a.xor_rows(r, next);
            }
        }
        pivots.push(col);
        next += 1;
    }
    RowReduction {
        reduced: a,
        rank: pivots.len(),
        pivots,
    }
}

pub fn rank(m: &BitMatrix) -> usize {
    row_reduce(m).rank
}

/// Solves `M·x = b`, setting free variables to zero. Returns `None` for inconsistent systems.
pub fn solve(m: &BitMatrix, b: &BitVec) -> Result<Option<BitVec>, Gf2Error> {
    if b.len() != m.rows {
        return Err(Gf2Error::DimensionMismatch {
            expected: m.rows,
            actual: b.len(),
        });
    }
    // Augment with b as the last column.
    let mut aug = BitMatrix::zeros(m.rows, m.cols + 1);
    for r in 0..m.rows {
        for c in m.row(r).iter_ones() {
            aug.set(r, c, true);
        }
        if b.get(r) {
            aug.set(r, m.cols, true);
        }
    }
    let rr = row_reduce(&aug);
    if rr.pivots.last() == Some(&m.cols) {
        return Ok(None);
    }
    let mut x = BitVec::zeros(m.cols);
    for (row, &col) in rr.pivots.iter().enumerate() {
        if rr.reduced.get(row, m.cols) {
            x.set(col, true);
        }
    }
    Ok(Some(x))
}

/// Incrementally built echelon basis of row vectors, each carrying a right-hand-side bit.
///
/// Basis vector stored at slot `p` has its lowest set bit at position `p`. Used for greedy
/// information-set selection and for rank checks that should stop as soon as full rank is hit.
#[derive(Debug, Clone)]
pub struct EchelonBasis {
    width: usize,
    slots: Vec<Option<(Vec<u64>, bool)>>,
    rank: usize,
}

impl EchelonBasis {
    pub fn new(width: usize) -> Self {
        EchelonBasis {
            width,
            slots: vec![None; width],
            rank: 0,
        }
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    pub fn is_full(&self) -> bool {
        self.rank == self.width
    }

    /// Reduces `row` against the basis; inserts it and returns its pivot if independent.
    pub fn insert(&mut self, row: &[u64], rhs: bool) -> Option<usize> {
        let mut v = row.to_vec();
        let mut rhs = rhs;
        loop {
            let p = lowest_set_bit(&v)?;
            match &self.slots[p] {
                Some((basis, b)) => {
                    xor_into(&mut v, basis);
                    rhs ^= b;
                }
                None => {
                    self.slots[p] = Some((v, rhs));
                    self.rank += 1;
                    return Some(p);
                }
            }
        }
    }

    /// Back-substitution for the unique `x` with `basis·x = rhs`; requires full rank.
    pub fn solve(&self) -> Option<BitVec> {
        if !self.is_full() {
            return None;
        }
        let mut x = BitVec::zeros(self.width);
        for p in (0..self.width).rev() {
            let (row, rhs) = self.slots[p].as_ref().expect("full rank");
            // Bits below p are zero in `row`, bit p of `x` is still zero.
            let bit = rhs ^ parity_of_and(row, x.words());
            if bit {
                x.set(p, true);
            }
        }
        Some(x)
    }
}

fn lowest_set_bit(words: &[u64]) -> Option<usize> {
    words
        .iter()
        .enumerate()
        .find(|(_, &w)| w != 0)
        .map(|(i, w)| i * WORD_BITS + w.trailing_zeros() as usize)
}

/// Rank of the rows of `m`, stopping early once it reaches the column count.
pub fn column_rank_is_full(m: &BitMatrix) -> bool {
    let mut basis = EchelonBasis::new(m.cols());
    for r in 0..m.rows() {
        basis.insert(m.row_words(r), false);
        if basis.is_full() {
            return true;
        }
    }
    basis.is_full()
}

/// Sparse GF(2) row given by its support.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct SparseCheck {
    support: Vec<usize>,
}

impl SparseCheck {
    /// Validates that indices are strictly increasing and below `len`.
    pub fn new(support: Vec<usize>, len: usize) -> Result<Self, Gf2Error> {
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Gf2Error::InvalidSupport(format!(
                "indices not strictly increasing: {support:?}"
            )));
        }
        if let Some(&last) = support.last() {
            if last >= len {
                return Err(Gf2Error::InvalidSupport(format!(
                    "index {last} out of range for length {len}"
                )));
            }
        }
        Ok(SparseCheck { support })
    }

    /// Sorts and deduplicates; fails if duplicates were present.
    pub fn from_unsorted(mut support: Vec<usize>, len: usize) -> Result<Self, Gf2Error> {
        support.sort_unstable();
        Self::new(support, len)
    }

    #[inline]
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    #[inline]
    pub fn weight(&self) -> usize {
        self.support.len()
    }

    /// Parity of `v` restricted to the support.
    pub fn parity(&self, v: &BitVec) -> bool {
        self.support.iter().fold(false, |acc, &i| acc ^ v.get(i))
    }

    pub fn to_bitvec(&self, len: usize) -> BitVec {
        let mut v = BitVec::zeros(len);
        for &i in &self.support {
            v.set(i, true);
        }
        v
    }
}

/// Uniform `weight`-subset of `0..len`, sampled without replacement, sorted.
pub fn sample_sparse<R: Rng + ?Sized>(
    len: usize,
    weight: usize,
    rng: &mut R,
) -> Result<SparseCheck, Gf2Error> {
    if weight > len {
        return Err(Gf2Error::WeightTooLarge { weight, len });
    }
    let mut support = index::sample(rng, len, weight).into_vec();
    support.sort_unstable();
    Ok(SparseCheck { support })
}

/// A bijection on `0..n`; index `i` is sent to `map[i]`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            map: (0..n).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        map.shuffle(rng);
        Permutation { map }
    }

    pub fn from_map(map: Vec<usize>) -> Result<Self, Gf2Error> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &m in &map {
            if m >= n || seen[m] {
                return Err(Gf2Error::NotAPermutation(n));
            }
            seen[m] = true;
        }
        Ok(Permutation { map })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.map.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.map.len()];
        for (i, &m) in self.map.iter().enumerate() {
            inv[m] = i;
        }
        Permutation { map: inv }
    }

    /// Moves row `i` of `m` to row `map[i]`.
    pub fn permute_rows(&self, m: &BitMatrix) -> BitMatrix {
        assert_eq!(m.rows(), self.map.len());
        let mut out = BitMatrix::zeros(m.rows(), m.cols());
        for (i, &dst) in self.map.iter().enumerate() {
            out.row_words_mut(dst).copy_from_slice(m.row_words(i));
        }
        out
    }

    /// Relabels every support index `j` as `map[j]`.
    pub fn permute_check(&self, check: &SparseCheck) -> SparseCheck {
        let mut support: Vec<usize> = check.support.iter().map(|&j| self.map[j]).collect();
        support.sort_unstable();
        SparseCheck { support }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn bv(s: &str) -> BitVec {
        BitVec::from_bools(&s.bytes().map(|c| c == b'1').collect::<Vec<_>>())
    }

    #[test]
    fn matvec_identity_and_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let v = BitVec::random(130, &mut rng);
        assert_eq!(BitMatrix::identity(130).matvec(&v).unwrap(), v);
        assert!(BitMatrix::zeros(7, 130).matvec(&v).unwrap().is_zero());
    }

    #[test]
    fn matvec_hand_example() {
        let m = BitMatrix::from_strs(&["11", "01"]);
        assert_eq!(m.matvec(&bv("11")).unwrap(), bv("01"));
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let m = BitMatrix::zeros(3, 4);
        assert_eq!(
            m.matvec(&BitVec::zeros(5)),
            Err(Gf2Error::DimensionMismatch {
                expected: 4,
                actual: 5
            })
        );
    }

    #[test]
    fn row_reduce_examples() {
        let rr = row_reduce(&BitMatrix::identity(9));
        assert_eq!(rr.rank, 9);
        assert_eq!(rr.pivots, (0..9).collect::<Vec<_>>());

        let rr = row_reduce(&BitMatrix::zeros(4, 6));
        assert_eq!(rr.rank, 0);
        assert!(rr.pivots.is_empty());

        let rr = row_reduce(&BitMatrix::from_strs(&["11", "11"]));
        assert_eq!(rr.rank, 1);
        assert_eq!(rr.reduced, BitMatrix::from_strs(&["11", "00"]));
    }

    #[test]
    fn row_reduce_is_rref() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let m = BitMatrix::random(20, 70, &mut rng);
        let rr = row_reduce(&m);
        for (row, &col) in rr.pivots.iter().enumerate() {
            for r in 0..rr.reduced.rows() {
                assert_eq!(rr.reduced.get(r, col), r == row);
            }
            for c in 0..col {
                assert!(!rr.reduced.get(row, c));
            }
        }
        for r in rr.rank..rr.reduced.rows() {
            assert!(rr.reduced.row(r).is_zero());
        }
    }

    #[test]
    fn solve_examples() {
        let b = bv("1011");
        assert_eq!(solve(&BitMatrix::identity(4), &b).unwrap(), Some(b));

        let m = BitMatrix::from_strs(&["1", "1"]);
        assert_eq!(solve(&m, &bv("01")).unwrap(), None);

        assert!(solve(&m, &bv("011")).is_err());
    }

    #[test]
    fn solve_free_variables_are_zero() {
        // x0 + x1 = 1 with x1 free.
        let m = BitMatrix::from_strs(&["11"]);
        assert_eq!(solve(&m, &bv("1")).unwrap(), Some(bv("10")));
    }

    #[test]
    fn solve_random_full_column_rank() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = BitMatrix::random(90, 40, &mut rng);
            if rank(&m) < 40 {
                continue;
            }
            let x0 = BitVec::random(40, &mut rng);
            let b = m.matvec(&x0).unwrap();
            let x = solve(&m, &b).unwrap().unwrap();
            assert_eq!(m.matvec(&x).unwrap(), b);
        }
    }

    #[test]
    fn echelon_basis_matches_solve() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let m = BitMatrix::random(100, 33, &mut rng);
        let x0 = BitVec::random(33, &mut rng);
        let b = m.matvec(&x0).unwrap();
        let mut basis = EchelonBasis::new(33);
        for r in 0..m.rows() {
            basis.insert(m.row_words(r), b.get(r));
        }
        assert!(basis.is_full());
        assert_eq!(basis.solve().unwrap(), x0);
        assert!(column_rank_is_full(&m));
        assert!(!column_rank_is_full(&m.select_rows(&[0, 1, 2])));
    }

    #[test]
    fn sample_sparse_edges() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        assert!(sample_sparse(10, 0, &mut rng).unwrap().support().is_empty());
        assert_eq!(
            sample_sparse(6, 6, &mut rng).unwrap().support(),
            &[0, 1, 2, 3, 4, 5]
        );
        assert_eq!(
            sample_sparse(3, 4, &mut rng),
            Err(Gf2Error::WeightTooLarge { weight: 4, len: 3 })
        );
    }

    #[test]
    fn sample_sparse_reproducible() {
        let a = sample_sparse(5, 2, &mut ChaCha20Rng::seed_from_u64(77)).unwrap();
        let b = sample_sparse(5, 2, &mut ChaCha20Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weight(), 2);
        assert!(a.support().iter().all(|&i| i < 5));
        assert!(a.support()[0] < a.support()[1]);
    }

    #[test]
    fn sample_sparse_uniform_marginals() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let (len, weight, draws) = (32usize, 3usize, 10_000usize);
        let mut counts = vec![0usize; len];
        for _ in 0..draws {
            for &i in sample_sparse(len, weight, &mut rng).unwrap().support() {
                counts[i] += 1;
            }
        }
        let p = weight as f64 / len as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - mean).abs() <= 4.0 * sd,
                "index {i} drawn {c} times, expected {mean:.1} ± {:.1}",
                4.0 * sd
            );
        }
    }

    #[test]
    fn sparse_check_validation() {
        assert!(SparseCheck::new(vec![1, 1], 4).is_err());
        assert!(SparseCheck::new(vec![2, 1], 4).is_err());
        assert!(SparseCheck::new(vec![1, 4], 4).is_err());
        assert!(SparseCheck::from_unsorted(vec![3, 0, 2], 4).is_ok());
    }

    #[test]
    fn permutation_preserves_annihilation() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let pi = Permutation::random(50, &mut rng);
        assert_eq!(
            pi.inverse().apply(pi.apply(17)),
            17,
            "inverse composes to identity"
        );
        let m = BitMatrix::random(50, 10, &mut rng);
        let check = SparseCheck::new(vec![3, 9, 41], 50).unwrap();
        let before = check
            .support()
            .iter()
            .fold(BitVec::zeros(10), |mut acc, &i| {
                acc ^= &m.row(i);
                acc
            });
        let pm = pi.permute_rows(&m);
        let pc = pi.permute_check(&check);
        let after = pc.support().iter().fold(BitVec::zeros(10), |mut acc, &i| {
            acc ^= &pm.row(i);
            acc
        });
        assert_eq!(before, after);
        assert!(Permutation::from_map(vec![0, 0, 1]).is_err());
    }

    #[test]
    fn bytes_reject_pad_bits() {
        let v = bv("1010011");
        let bytes = v.to_bytes();
        assert_eq!(BitVec::from_bytes(7, &bytes), Some(v));
        assert_eq!(BitVec::from_bytes(7, &[0x80]), None);
    }

    proptest! {
        #[test]
        fn matvec_is_linear(seed in any::<u64>(), rows in 1usize..80, cols in 1usize..150) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let m = BitMatrix::random(rows, cols, &mut rng);
            let a = BitVec::random(cols, &mut rng);
            let b = BitVec::random(cols, &mut rng);
            let lhs = m.matvec(&(&a ^ &b)).unwrap();
            let rhs = &m.matvec(&a).unwrap() ^ &m.matvec(&b).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn solve_satisfies_system(seed in any::<u64>(), rows in 1usize..40, cols in 1usize..40) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let m = BitMatrix::random(rows, cols, &mut rng);
            let b = if seed % 2 == 0 {
                m.matvec(&BitVec::random(cols, &mut rng)).unwrap()
            } else {
                BitVec::random(rows, &mut rng)
            };
            if let Some(x) = solve(&m, &b).unwrap() {
                prop_assert_eq!(m.matvec(&x).unwrap(), b);
            } else {
                prop_assert!(seed % 2 == 1, "consistent system reported unsolvable");
            }
        }

        #[test]
        fn pad_bits_stay_clear(len in 0usize..300, seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let v = BitVec::random(len, &mut rng);
            let w = BitVec::ones(len);
            let x = &v ^ &w;
            prop_assert_eq!(x.count_ones(), len - v.count_ones());
            prop_assert_eq!(BitVec::from_bytes(len, &x.to_bytes()), Some(x));
        }
    }
}
