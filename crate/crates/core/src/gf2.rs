//! Bit-packed linear algebra over GF(2).
//!
//! Vectors and matrices pack bits into `u64` words, row-major within a
//! row, bit `i` of a row living at word `i / 64`, bit `i % 64`. The
//! packing is fixed here and nowhere else; all callers (and all tests)
//! go through the logical interface so the kernel stays swappable.
//!
//! [`Gf2Matrix::invert`] reports a singular input as `None` rather than
//! an error: block Gaussian elimination branches on singularity as a
//! normal outcome.

use rand::Rng;

const WORD_BITS: usize = 64;

fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

/// A vector over GF(2) with at least one coordinate.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Gf2Vector {
    len: usize,
    words: Vec<u64>,
}

impl Gf2Vector {
    /// All-zero vector of dimension `len`.
    ///
    /// # Panics
    /// Panics if `len` is 0.
    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "Gf2Vector must have at least one coordinate");
        Gf2Vector {
            len,
            words: vec![0; words_for(len)],
        }
    }

    /// Vector from a 0/1 slice, coordinate `i` taken from `bits[i]`.
    ///
    /// # Panics
    /// Panics if `bits` is empty or contains a value other than 0 or 1.
    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = Gf2Vector::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            assert!(b <= 1, "bit {i} is {b}, expected 0 or 1");
            v.set_bit(i, b == 1);
        }
        v
    }

    /// Vector of dimension `len` whose coordinate `i` is bit `i` of
    /// `index`. This is the fixed identification of sample and concept
    /// indices with bit strings used across the crate.
    ///
    /// # Panics
    /// Panics if `len` is 0, exceeds 64, or `index >= 2^len`.
    pub fn from_index(len: usize, index: u64) -> Self {
        assert!(len > 0 && len <= WORD_BITS, "index vectors need 1..=64 bits");
        assert!(
            len == WORD_BITS || index < (1u64 << len),
            "index {index} out of range for {len} bits"
        );
        Gf2Vector {
            len,
            words: vec![index],
        }
    }

    /// Uniformly random vector.
    pub fn random(len: usize, rng: &mut impl Rng) -> Self {
        let mut v = Gf2Vector::zeros(len);
        for w in &mut v.words {
            *w = rng.gen();
        }
        v.mask_tail();
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len, "coordinate {i} out of range {}", self.len);
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "coordinate {i} out of range {}", self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    /// The integer whose bit `i` is coordinate `i`; inverse of
    /// [`Gf2Vector::from_index`].
    ///
    /// # Panics
    /// Panics for dimensions above 64.
    pub fn as_index(&self) -> u64 {
        assert!(self.len <= WORD_BITS, "as_index needs dimension <= 64");
        self.words[0]
    }

    /// Number of ones.
    pub fn weight(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Parity of the coordinatewise AND, `<self, other>` mod 2.
    ///
    /// # Panics
    /// Panics on a length mismatch.
    pub fn dot(&self, other: &Gf2Vector) -> u8 {
        assert_eq!(
            self.len, other.len,
            "dot of vectors with lengths {} and {}",
            self.len, other.len
        );
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        (ones & 1) as u8
    }

    /// Coordinatewise XOR.
    ///
    /// # Panics
    /// Panics on a length mismatch.
    pub fn xor_assign(&mut self, other: &Gf2Vector) {
        assert_eq!(self.len, other.len, "xor of mismatched lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    fn mask_tail(&mut self) {
        let extra = self.words.len() * WORD_BITS - self.len;
        if extra > 0 {
            *self.words.last_mut().unwrap() &= u64::MAX >> extra;
        }
    }
}

impl std::fmt::Debug for Gf2Vector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", self.bit(i) as u8)?;
        }
        Ok(())
    }
}

/// A matrix over GF(2); rows and columns are both at least 1.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Gf2Matrix {
    rows: usize,
    cols: usize,
    row_words: usize,
    words: Vec<u64>,
}

impl Gf2Matrix {
    /// All-zero matrix.
    ///
    /// # Panics
    /// Panics if either dimension is 0.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "Gf2Matrix dimensions must be positive");
        let row_words = words_for(cols);
        Gf2Matrix {
            rows,
            cols,
            row_words,
            words: vec![0; rows * row_words],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Gf2Matrix::zeros(dim, dim);
        for i in 0..dim {
            m.set_bit(i, i, true);
        }
        m
    }

    /// Matrix from a row-major 0/1 slice of length `rows * cols`.
    ///
    /// # Panics
    /// Panics on a length mismatch or non-bit entries.
    pub fn from_bits(rows: usize, cols: usize, bits: &[u8]) -> Self {
        assert_eq!(bits.len(), rows * cols, "need rows*cols bits");
        let mut m = Gf2Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let b = bits[r * cols + c];
                assert!(b <= 1, "entry ({r},{c}) is {b}, expected 0 or 1");
                m.set_bit(r, c, b == 1);
            }
        }
        m
    }

    /// Matrix whose rows are the given vectors.
    ///
    /// # Panics
    /// Panics if `rows` is empty or the vectors disagree in length.
    pub fn from_rows(rows: &[Gf2Vector]) -> Self {
        assert!(!rows.is_empty(), "need at least one row");
        let cols = rows[0].len();
        let mut m = Gf2Matrix::zeros(rows.len(), cols);
        for (r, v) in rows.iter().enumerate() {
            assert_eq!(v.len(), cols, "row {r} has mismatched length");
            m.words[r * m.row_words..(r + 1) * m.row_words].copy_from_slice(&v.words);
        }
        m
    }

    /// Uniformly random matrix.
    pub fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let mut m = Gf2Matrix::zeros(rows, cols);
        for w in &mut m.words {
            *w = rng.gen();
        }
        let extra = m.row_words * WORD_BITS - cols;
        if extra > 0 {
            let mask = u64::MAX >> extra;
            for r in 0..rows {
                m.words[r * m.row_words + m.row_words - 1] &= mask;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bit(&self, r: usize, c: usize) -> bool {
        assert!(r < self.rows && c < self.cols, "entry ({r},{c}) out of range");
        self.words[r * self.row_words + c / WORD_BITS] >> (c % WORD_BITS) & 1 == 1
    }

    pub fn set_bit(&mut self, r: usize, c: usize, value: bool) {
        assert!(r < self.rows && c < self.cols, "entry ({r},{c}) out of range");
        let mask = 1u64 << (c % WORD_BITS);
        let w = &mut self.words[r * self.row_words + c / WORD_BITS];
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    pub fn row(&self, r: usize) -> Gf2Vector {
        assert!(r < self.rows, "row {r} out of range {}", self.rows);
        Gf2Vector {
            len: self.cols,
            words: self.words[r * self.row_words..(r + 1) * self.row_words].to_vec(),
        }
    }

    /// Copy of the `height x width` submatrix with top-left corner
    /// `(top, left)`.
    ///
    /// # Panics
    /// Panics if the window exceeds the matrix.
    pub fn block(&self, top: usize, left: usize, height: usize, width: usize) -> Gf2Matrix {
        assert!(top + height <= self.rows && left + width <= self.cols, "block out of range");
        let mut out = Gf2Matrix::zeros(height, width);
        for r in 0..height {
            for c in 0..width {
                out.set_bit(r, c, self.bit(top + r, left + c));
            }
        }
        out
    }

    /// Writes `other` into this matrix with top-left corner `(top, left)`.
    ///
    /// # Panics
    /// Panics if the window exceeds the matrix.
    pub fn set_block(&mut self, top: usize, left: usize, other: &Gf2Matrix) {
        assert!(
            top + other.rows <= self.rows && left + other.cols <= self.cols,
            "block out of range"
        );
        for r in 0..other.rows {
            for c in 0..other.cols {
                self.set_bit(top + r, left + c, other.bit(r, c));
            }
        }
    }

    /// Entrywise XOR, the GF(2) matrix sum (and difference).
    ///
    /// # Panics
    /// Panics on a shape mismatch.
    pub fn add(&self, other: &Gf2Matrix) -> Gf2Matrix {
        assert!(
            self.rows == other.rows && self.cols == other.cols,
            "adding {}x{} to {}x{}",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
        let mut out = self.clone();
        for (a, b) in out.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
        out
    }

    /// Matrix product over GF(2).
    ///
    /// # Panics
    /// Panics if `self.cols != other.rows`.
    pub fn mul(&self, other: &Gf2Matrix) -> Gf2Matrix {
        assert_eq!(
            self.cols, other.rows,
            "product of {}x{} and {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Gf2Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let (or0, or1) = (r * out.row_words, (r + 1) * out.row_words);
            for k in 0..self.cols {
                if self.bit(r, k) {
                    let (br0, br1) = (k * other.row_words, (k + 1) * other.row_words);
                    for (o, b) in out.words[or0..or1].iter_mut().zip(&other.words[br0..br1]) {
                        *o ^= b;
                    }
                }
            }
        }
        out
    }

    /// Matrix-vector product over GF(2).
    ///
    /// # Panics
    /// Panics if `self.cols != v.len()`.
    pub fn mul_vec(&self, v: &Gf2Vector) -> Gf2Vector {
        assert_eq!(self.cols, v.len(), "applying {}x{} to length {}", self.rows, self.cols, v.len());
        let mut out = Gf2Vector::zeros(self.rows);
        for r in 0..self.rows {
            out.set_bit(r, self.row(r).dot(v) == 1);
        }
        out
    }

    /// Row rank over GF(2).
    pub fn rank(&self) -> usize {
        let mut work = self.clone();
        let mut rank = 0;
        for col in 0..self.cols {
            let Some(pivot) = (rank..self.rows).find(|&r| work.bit(r, col)) else {
                continue;
            };
            work.swap_rows(rank, pivot);
            for r in 0..self.rows {
                if r != rank && work.bit(r, col) {
                    work.xor_row_from(r, rank);
                }
            }
            rank += 1;
            if rank == self.rows {
                break;
            }
        }
        rank
    }

    /// The inverse, or `None` when the matrix is singular. Singularity is
    /// an ordinary outcome here, not an error.
    ///
    /// # Panics
    /// Panics if the matrix is not square.
    pub fn invert(&self) -> Option<Gf2Matrix> {
        assert_eq!(self.rows, self.cols, "inverting a {}x{} matrix", self.rows, self.cols);
        let dim = self.rows;
        let mut work = self.clone();
        let mut inv = Gf2Matrix::identity(dim);
        for col in 0..dim {
            let pivot = (col..dim).find(|&r| work.bit(r, col))?;
            work.swap_rows(col, pivot);
            inv.swap_rows(col, pivot);
            for r in 0..dim {
                if r != col && work.bit(r, col) {
                    work.xor_row_from(r, col);
                    inv.xor_row_from(r, col);
                }
            }
        }
        Some(inv)
    }

    /// Unique solution of `self * x = b`, or `None` when the matrix is
    /// singular (even if the system happens to be consistent).
    ///
    /// # Panics
    /// Panics if the matrix is not square or `b` has the wrong length.
    pub fn solve(&self, b: &Gf2Vector) -> Option<Gf2Vector> {
        self.invert().map(|inv| inv.mul_vec(b))
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for w in 0..self.row_words {
            self.words.swap(a * self.row_words + w, b * self.row_words + w);
        }
    }

    /// XORs row `src` into row `dst`.
    fn xor_row_from(&mut self, dst: usize, src: usize) {
        for w in 0..self.row_words {
            let s = self.words[src * self.row_words + w];
            self.words[dst * self.row_words + w] ^= s;
        }
    }
}

impl std::fmt::Debug for Gf2Matrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in 0..self.rows {
            writeln!(f, "{:?}", self.row(r))?;
        }
        Ok(())
    }
}

/// `prod_{i=1..dim} (1 - 2^-i)`, the probability that a uniformly random
/// `dim x dim` matrix over GF(2) is invertible.
pub fn invertible_fraction(dim: usize) -> f64 {
    (1..=dim).map(|i| 1.0 - 0.5f64.powi(i as i32)).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    #[test]
    fn dot_matches_hand_parity() {
        let cases: [(&[u8], &[u8], u8); 3] = [
            (&[0, 0, 0, 0], &[1, 0, 1, 1], 0),
            (&[1, 1], &[1, 1], 0),
            (&[1, 0, 1], &[1, 0, 0], 1),
        ];
        for (u, v, expected) in cases {
            let got = Gf2Vector::from_bits(u).dot(&Gf2Vector::from_bits(v));
            assert_eq!(got, expected, "dot({u:?}, {v:?})");
        }
    }

    #[test]
    fn dot_is_symmetric_across_word_boundaries() {
        let mut rng = rng_from_seed(11);
        for len in [1, 63, 64, 65, 130] {
            let u = Gf2Vector::random(len, &mut rng);
            let v = Gf2Vector::random(len, &mut rng);
            assert_eq!(u.dot(&v), v.dot(&u), "len {len}");
        }
    }

    #[test]
    fn invert_identity_is_identity() {
        let id = Gf2Matrix::identity(3);
        assert_eq!(id.invert().expect("identity is invertible"), id);
    }

    #[test]
    fn invert_upper_triangular_is_self_inverse() {
        let m = Gf2Matrix::from_bits(2, 2, &[1, 1, 0, 1]);
        let inv = m.invert().expect("unit upper triangular is invertible");
        assert_eq!(inv, m, "[[1,1],[0,1]] is its own inverse over GF(2)");
        assert_eq!(m.mul(&inv), Gf2Matrix::identity(2));
    }

    #[test]
    fn invert_reports_singular_as_value() {
        let m = Gf2Matrix::from_bits(2, 2, &[1, 1, 1, 1]);
        assert!(m.invert().is_none(), "equal rows are singular");
    }

    #[test]
    fn rank_examples() {
        assert_eq!(Gf2Matrix::identity(4).rank(), 4);
        assert_eq!(Gf2Matrix::zeros(3, 3).rank(), 0);
        assert_eq!(Gf2Matrix::from_bits(3, 2, &[1, 0, 1, 0, 0, 1]).rank(), 2);
    }

    #[test]
    fn mul_examples() {
        let mut rng = rng_from_seed(3);
        let m = Gf2Matrix::random(4, 4, &mut rng);
        assert_eq!(Gf2Matrix::identity(4).mul(&m), m);
        assert_eq!(m.mul(&Gf2Matrix::zeros(4, 4)), Gf2Matrix::zeros(4, 4));

        let a = Gf2Matrix::from_bits(2, 2, &[1, 1, 0, 1]);
        let b = Gf2Matrix::from_bits(2, 2, &[1, 0, 1, 1]);
        assert_eq!(a.mul(&b), Gf2Matrix::from_bits(2, 2, &[0, 1, 1, 1]));
    }

    #[test]
    fn solve_recovers_known_vector() {
        let mut rng = rng_from_seed(5);
        for _ in 0..20 {
            let m = Gf2Matrix::random(6, 6, &mut rng);
            let x = Gf2Vector::random(6, &mut rng);
            if let Some(solved) = m.solve(&m.mul_vec(&x)) {
                assert_eq!(solved, x, "solve must invert mul_vec exactly");
            } else {
                assert!(m.rank() < 6, "solve returned None on a full-rank matrix");
            }
        }
    }

    #[test]
    fn block_roundtrip() {
        let mut rng = rng_from_seed(9);
        let m = Gf2Matrix::random(6, 6, &mut rng);
        let mut rebuilt = Gf2Matrix::zeros(6, 6);
        for r in 0..3 {
            for c in 0..3 {
                rebuilt.set_block(2 * r, 2 * c, &m.block(2 * r, 2 * c, 2, 2));
            }
        }
        assert_eq!(rebuilt, m);
    }

    #[test]
    fn invertible_fraction_matches_monte_carlo() {
        for dim in [2usize, 4, 8] {
            let mut rng = rng_from_seed(1000 + dim as u64);
            let trials = 100_000;
            let hits = (0..trials)
                .filter(|_| Gf2Matrix::random(dim, dim, &mut rng).invert().is_some())
                .count();
            let measured = hits as f64 / trials as f64;
            let expected = invertible_fraction(dim);
            assert!(
                (measured - expected).abs() <= 0.01,
                "dim {dim}: measured {measured}, expected {expected}"
            );
        }
    }

    fn arb_matrix(max_dim: usize) -> impl Strategy<Value = Gf2Matrix> {
        (1..=max_dim, 1..=max_dim)
            .prop_flat_map(|(r, c)| {
                proptest::collection::vec(0u8..=1, r * c).prop_map(move |bits| {
                    Gf2Matrix::from_bits(r, c, &bits)
                })
            })
    }

    proptest! {
        #[test]
        fn product_with_inverse_is_identity(seed in 0u64..1000, dim in 1usize..=8) {
            let m = Gf2Matrix::random(dim, dim, &mut rng_from_seed(seed));
            if let Some(inv) = m.invert() {
                prop_assert_eq!(m.mul(&inv), Gf2Matrix::identity(dim));
                prop_assert_eq!(inv.mul(&m), Gf2Matrix::identity(dim));
            } else {
                prop_assert!(m.rank() < dim);
            }
        }

        #[test]
        fn rank_invariant_under_row_ops(m in arb_matrix(7), a in 0usize..7, b in 0usize..7) {
            let rank = m.rank();
            let a = a % m.rows();
            let b = b % m.rows();

            let mut swapped = m.clone();
            swapped.swap_rows(a, b);
            prop_assert_eq!(swapped.rank(), rank, "row swap changed rank");

            if a != b {
                let mut added = m.clone();
                added.xor_row_from(a, b);
                prop_assert_eq!(added.rank(), rank, "row addition changed rank");
            }
        }

        #[test]
        fn mul_is_associative(seed in 0u64..1000) {
            let mut rng = rng_from_seed(seed);
            let a = Gf2Matrix::random(3, 4, &mut rng);
            let b = Gf2Matrix::random(4, 2, &mut rng);
            let c = Gf2Matrix::random(2, 5, &mut rng);
            prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        }
    }
}
