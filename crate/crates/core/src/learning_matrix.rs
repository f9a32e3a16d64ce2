//! Learning-task matrices over samples x concepts, and real-valued
//! functions on the concept space with expectation-based norms.
//!
//! A [`LearningMatrix`] is a sign matrix `M` over `A x X`: `M(a, x)` is
//! the label sample `a` receives under hidden concept `x`. Four kinds
//! exist: parity (`M(a,x) = (-1)^<a,x>` with `A = X = {0,1}^n`), sparse
//! parity (concepts restricted to Hamming weight exactly `l`), seeded
//! uniformly random signs, and explicit tables. Bit strings are
//! identified with indices through [`Gf2Vector::from_index`], coordinate
//! `i` at bit `i`; where an order on strings matters (sparse parity) we
//! use ascending index order, which is lexicographic with the highest
//! coordinate written first.
//!
//! Norms follow the expectation convention: `lp_norm(f, p)` is
//! `(E_x[|f|^p])^(1/p)` with `x` uniform over the concept space, and
//! `inner(f, g) = E_x[f g]`. Norms are computed in `f64`; the `_exact`
//! variants convert the (dyadic) stored values to big rationals and are
//! what the certifiers and verifiers consume at small scale (intended
//! for concept spaces up to `2^12`).

use num::BigRational;
use rand::Rng;
use crate::error::{Error, Result};
use crate::gf2::Gf2Vector;
use crate::rng::rng_for_stream;

/// How a matrix's entries are defined.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    /// `M(a,x) = (-1)^<a,x>` over `A = X = {0,1}^n`.
    Parity,
    /// Parity with concepts restricted to Hamming weight exactly `weight`.
    SparseParity { weight: u32 },
    /// Entries drawn uniformly from the documented generator.
    Random { seed: u64 },
    /// Entries given by an explicit sign table.
    Explicit,
}

impl MatrixKind {
    fn tag(&self) -> String {
        match self {
            MatrixKind::Parity => "parity".into(),
            MatrixKind::SparseParity { weight } => format!("sparse_parity({weight})"),
            MatrixKind::Random { seed } => format!("random({seed})"),
            MatrixKind::Explicit => "explicit".into(),
        }
    }
}

/// Sign matrix `M` in `{-1,+1}^{A x X}` driving simulations and
/// certificates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LearningMatrix {
    n_a: u32,
    n_x: u32,
    kind: MatrixKind,
    /// Concept strings for sparse parity, ascending index order.
    concepts: Option<Vec<u64>>,
    /// Packed signs for random/explicit kinds, row-major; bit 1 means -1.
    signs: Option<Vec<u64>>,
}

impl LearningMatrix {
    /// The parity matrix on `n`-bit samples and concepts.
    ///
    /// # Panics
    /// Panics unless `1 <= n <= 24`.
    pub fn parity(n: u32) -> Self {
        assert!((1..=24).contains(&n), "parity supports 1..=24 bits, got {n}");
        LearningMatrix { n_a: n, n_x: n, kind: MatrixKind::Parity, concepts: None, signs: None }
    }

    /// Parity restricted to concepts of Hamming weight exactly `weight`;
    /// the concept list is stored explicitly in ascending index order.
    ///
    /// # Panics
    /// Panics unless `1 <= n <= 24` and `1 <= weight <= n`.
    pub fn sparse_parity(n: u32, weight: u32) -> Self {
        assert!((1..=24).contains(&n), "sparse parity supports 1..=24 bits, got {n}");
        assert!(weight >= 1 && weight <= n, "weight {weight} out of range 1..={n}");
        let concepts: Vec<u64> =
            (0..1u64 << n).filter(|x| x.count_ones() == weight).collect();
        LearningMatrix {
            n_a: n,
            n_x: n,
            kind: MatrixKind::SparseParity { weight },
            concepts: Some(concepts),
            signs: None,
        }
    }

    /// Uniformly random signs, reproducible from `seed`: entries are drawn
    /// row-major from stream 0 of the repo generator, one draw per entry.
    ///
    /// # Panics
    /// Panics unless both bit lengths are in `1..=12`.
    pub fn random(n_a: u32, n_x: u32, seed: u64) -> Self {
        assert!(
            (1..=12).contains(&n_a) && (1..=12).contains(&n_x),
            "random matrices support 1..=12 bits per side"
        );
        let rows = 1usize << n_a;
        let cols = 1usize << n_x;
        let mut rng = rng_for_stream(seed, 0);
        let mut signs = vec![0u64; (rows * cols).div_ceil(64)];
        for e in 0..rows * cols {
            if rng.gen::<bool>() {
                signs[e / 64] |= 1 << (e % 64);
            }
        }
        LearningMatrix {
            n_a,
            n_x,
            kind: MatrixKind::Random { seed },
            concepts: None,
            signs: Some(signs),
        }
    }

    /// Matrix from an explicit row-major sign table of `2^n_a * 2^n_x`
    /// entries.
    pub fn explicit(n_a: u32, n_x: u32, table: &[i8]) -> Result<Self> {
        if !(1..=12).contains(&n_a) || !(1..=12).contains(&n_x) {
            return Err(Error::invalid("explicit matrices support 1..=12 bits per side"));
        }
        let rows = 1usize << n_a;
        let cols = 1usize << n_x;
        if table.len() != rows * cols {
            return Err(Error::invalid(format!(
                "explicit table has {} entries, expected {}",
                table.len(),
                rows * cols
            )));
        }
        let mut signs = vec![0u64; (rows * cols).div_ceil(64)];
        for (e, &s) in table.iter().enumerate() {
            match s {
                1 => {}
                -1 => signs[e / 64] |= 1 << (e % 64),
                other => {
                    return Err(Error::invalid(format!("entry {e} is {other}, expected +1 or -1")))
                }
            }
        }
        Ok(LearningMatrix { n_a, n_x, kind: MatrixKind::Explicit, concepts: None, signs: Some(signs) })
    }

    /// Parses a builtin descriptor: `parity(n)`, `sparse_parity(n,l)`, or
    /// `random(n_a,n_x,seed)`.
    pub fn builtin(desc: &str) -> Result<Self> {
        let err = || Error::invalid(format!(
            "unknown matrix descriptor {desc:?}; expected parity(n), sparse_parity(n,l), or random(n_a,n_x,seed)"
        ));
        let (name, rest) = desc.split_once('(').ok_or_else(err)?;
        let args = rest.strip_suffix(')').ok_or_else(err)?;
        let nums: Vec<u64> = args
            .split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err())?;
        match (name, nums.as_slice()) {
            ("parity", [n]) if (1..=24).contains(n) => Ok(LearningMatrix::parity(*n as u32)),
            ("sparse_parity", [n, l]) if (1..=24).contains(n) && *l >= 1 && l <= n => {
                Ok(LearningMatrix::sparse_parity(*n as u32, *l as u32))
            }
            ("random", [n_a, n_x, seed]) if (1..=12).contains(n_a) && (1..=12).contains(n_x) => {
                Ok(LearningMatrix::random(*n_a as u32, *n_x as u32, *seed))
            }
            _ => Err(err()),
        }
    }

    /// Bit length of sample strings; `|A| = 2^sample_bits`.
    pub fn sample_bits(&self) -> u32 {
        self.n_a
    }

    /// Bit length of concept strings. For sparse parity the concept space
    /// is a strict subset of `{0,1}^concept_bits`.
    pub fn concept_bits(&self) -> u32 {
        self.n_x
    }

    pub fn kind(&self) -> &MatrixKind {
        &self.kind
    }

    pub fn num_samples(&self) -> usize {
        1usize << self.n_a
    }

    pub fn num_concepts(&self) -> usize {
        match &self.concepts {
            Some(list) => list.len(),
            None => 1usize << self.n_x,
        }
    }

    /// The bit string of concept index `x`.
    ///
    /// # Panics
    /// Panics if `x` is out of range.
    pub fn concept_vector(&self, x: usize) -> Gf2Vector {
        let index = match &self.concepts {
            Some(list) => list[x],
            None => {
                assert!(x < self.num_concepts(), "concept {x} out of range");
                x as u64
            }
        };
        Gf2Vector::from_index(self.n_x as usize, index)
    }

    /// The bit string of sample index `a`.
    ///
    /// # Panics
    /// Panics if `a` is out of range.
    pub fn sample_vector(&self, a: usize) -> Gf2Vector {
        assert!(a < self.num_samples(), "sample {a} out of range");
        Gf2Vector::from_index(self.n_a as usize, a as u64)
    }

    /// The sign `M(a, x)`, deterministic given the kind and seed.
    ///
    /// # Panics
    /// Panics if either index is out of range.
    pub fn entry(&self, a: usize, x: usize) -> i8 {
        assert!(a < self.num_samples(), "sample {a} out of range");
        assert!(x < self.num_concepts(), "concept {x} out of range");
        match &self.kind {
            MatrixKind::Parity => parity_sign(a as u64, x as u64),
            MatrixKind::SparseParity { .. } => {
                parity_sign(a as u64, self.concepts.as_ref().unwrap()[x])
            }
            MatrixKind::Random { .. } | MatrixKind::Explicit => {
                let e = a * self.num_concepts() + x;
                let bit = self.signs.as_ref().unwrap()[e / 64] >> (e % 64) & 1;
                if bit == 1 {
                    -1
                } else {
                    1
                }
            }
        }
    }

    /// Row `a` as a (sign-valued) function on the concept space.
    pub fn row_function(&self, a: usize) -> ConceptFunction {
        ConceptFunction::new((0..self.num_concepts()).map(|x| self.entry(a, x) as f64).collect())
    }

    /// Serializes to the `L2MAT v1` text format. Only explicit matrices
    /// carry a sign table; the other kinds rebuild their entries from the
    /// header.
    pub fn to_l2mat_string(&self) -> String {
        let mut out = format!(
            "L2MAT v1 n_a={} n_x={} kind={}\n",
            self.n_a,
            self.n_x,
            self.kind.tag()
        );
        if self.kind == MatrixKind::Explicit {
            for a in 0..self.num_samples() {
                for x in 0..self.num_concepts() {
                    out.push(if self.entry(a, x) == 1 { '+' } else { '-' });
                }
                out.push('\n');
            }
        }
        out
    }

    /// Parses the `L2MAT v1` text format; the round trip through
    /// [`LearningMatrix::to_l2mat_string`] is bit-exact.
    pub fn from_l2mat_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or(Error::Parse { line: 1, msg: "empty input".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let bad_header = |msg: &str| Error::Parse { line: 1, msg: msg.into() };
        if fields.len() != 5 || fields[0] != "L2MAT" || fields[1] != "v1" {
            return Err(bad_header("expected `L2MAT v1 n_a=<int> n_x=<int> kind=<tag>`"));
        }
        let parse_dim = |field: &str, key: &str| -> Result<u32> {
            field
                .strip_prefix(&format!("{key}="))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad_header(&format!("malformed {key} field")))
        };
        let n_a = parse_dim(fields[2], "n_a")?;
        let n_x = parse_dim(fields[3], "n_x")?;
        let tag = fields[4]
            .strip_prefix("kind=")
            .ok_or_else(|| bad_header("malformed kind field"))?;

        if tag == "explicit" {
            if n_a > 12 || n_x > 12 {
                return Err(bad_header("explicit matrices support 1..=12 bits per side"));
            }
            let cols = 1usize << n_x;
            let mut table = Vec::with_capacity((1usize << n_a) * cols);
            for (i, line) in lines.enumerate() {
                let line_no = i + 2;
                if line.len() != cols {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("expected {cols} signs, found {}", line.len()),
                    });
                }
                for ch in line.chars() {
                    match ch {
                        '+' => table.push(1),
                        '-' => table.push(-1),
                        other => {
                            return Err(Error::Parse {
                                line: line_no,
                                msg: format!("unexpected sign character {other:?}"),
                            })
                        }
                    }
                }
            }
            if table.len() != (1usize << n_a) * cols {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected {} sign rows, found {}", 1usize << n_a, table.len() / cols),
                });
            }
            return LearningMatrix::explicit(n_a, n_x, &table);
        }
        if lines.next().is_some() {
            return Err(Error::Parse { line: 2, msg: format!("kind {tag} takes no sign table") });
        }
        let built = LearningMatrix::builtin(&format!(
            "{}{}",
            tag_to_builtin_name(tag),
            tag_args(tag, n_a, n_x)?
        ))?;
        if built.n_a != n_a || built.n_x != n_x {
            return Err(bad_header("header dimensions disagree with the kind tag"));
        }
        Ok(built)
    }
}

fn tag_to_builtin_name(tag: &str) -> &str {
    match tag.split_once('(') {
        Some((name, _)) => name,
        None => tag,
    }
}

fn tag_args(tag: &str, n_a: u32, n_x: u32) -> Result<String> {
    let arg = |t: &str| {
        t.split_once('(')
            .and_then(|(_, rest)| rest.strip_suffix(')'))
            .map(str::to_owned)
    };
    match tag {
        "parity" => Ok(format!("({n_x})")),
        t if t.starts_with("sparse_parity(") => {
            let l = arg(t).ok_or(Error::Parse { line: 1, msg: "malformed sparse_parity tag".into() })?;
            Ok(format!("({n_x},{l})"))
        }
        t if t.starts_with("random(") => {
            let seed = arg(t).ok_or(Error::Parse { line: 1, msg: "malformed random tag".into() })?;
            Ok(format!("({n_a},{n_x},{seed})"))
        }
        other => Err(Error::Parse { line: 1, msg: format!("unknown kind tag {other:?}") }),
    }
}

fn parity_sign(a: u64, x: u64) -> i8 {
    if (a & x).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// A real-valued function on a concept space, stored densely by concept
/// index. The extractor definitions quantify over non-negative functions;
/// this container does not enforce the sign so that matrix rows can also
/// be carried around, and the certifiers check non-negativity where it is
/// required.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptFunction {
    values: Vec<f64>,
}

impl ConceptFunction {
    /// # Panics
    /// Panics if `values` is empty or contains a non-finite number.
    pub fn new(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "functions need a nonempty domain");
        assert!(values.iter().all(|v| v.is_finite()), "function values must be finite");
        ConceptFunction { values }
    }

    pub fn constant(domain: usize, value: f64) -> Self {
        ConceptFunction::new(vec![value; domain])
    }

    /// Indicator of a set of concept indices.
    ///
    /// # Panics
    /// Panics if an index repeats or is out of range.
    pub fn indicator(domain: usize, set: &[usize]) -> Self {
        let mut values = vec![0.0; domain];
        for &x in set {
            assert!(x < domain, "index {x} out of domain {domain}");
            assert_eq!(values[x], 0.0, "index {x} repeated");
            values[x] = 1.0;
        }
        ConceptFunction::new(values)
    }

    /// The uniform prior, `1/|X|` everywhere.
    pub fn uniform_prior(domain: usize) -> Self {
        ConceptFunction::constant(domain, 1.0 / domain as f64)
    }

    pub fn domain_size(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, x: usize) -> f64 {
        self.values[x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// `(E_x[|f|^p])^(1/p)`; `p = infinity` takes the max of `|f|`.
    ///
    /// # Panics
    /// Panics unless `p >= 1` or `p` is infinite.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0 || p.is_infinite(), "lp_norm needs p >= 1, got {p}");
        if p.is_infinite() {
            return self.values.iter().fold(0.0, |m, v| m.max(v.abs()));
        }
        let mean: f64 =
            self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() / self.values.len() as f64;
        mean.powf(1.0 / p)
    }

    /// `E_x[f g]`.
    ///
    /// # Panics
    /// Panics on a domain mismatch.
    pub fn inner(&self, other: &ConceptFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "inner product domain mismatch");
        let sum: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        sum / self.values.len() as f64
    }

    /// The tail `f^{>B}`: `f(x)` where `f(x) > B`, else 0. For
    /// non-negative `f` it satisfies `l1(f^{>B}) <= l2(f)^2 / B`.
    ///
    /// # Panics
    /// Panics unless `B > 0`.
    pub fn truncate_above(&self, bound: f64) -> ConceptFunction {
        assert!(bound > 0.0, "truncation bound must be positive, got {bound}");
        ConceptFunction::new(
            self.values.iter().map(|&v| if v > bound { v } else { 0.0 }).collect(),
        )
    }

    /// Exact `E_x[|f|]` over the dyadic stored values.
    pub fn l1_exact(&self) -> BigRational {
        let n = BigRational::from_integer(self.values.len().into());
        self.values
            .iter()
            .map(|&v| BigRational::from_float(v.abs()).expect("finite by construction"))
            .sum::<BigRational>()
            / n
    }

    /// Exact `E_x[f^2]` over the dyadic stored values.
    pub fn l2_squared_exact(&self) -> BigRational {
        let n = BigRational::from_integer(self.values.len().into());
        self.values
            .iter()
            .map(|&v| {
                let r = BigRational::from_float(v).expect("finite by construction");
                &r * &r
            })
            .sum::<BigRational>()
            / n
    }

    /// Exact `E_x[f g]` over the dyadic stored values.
    ///
    /// # Panics
    /// Panics on a domain mismatch.
    pub fn inner_exact(&self, other: &ConceptFunction) -> BigRational {
        assert_eq!(self.values.len(), other.values.len(), "inner product domain mismatch");
        let n = BigRational::from_integer(self.values.len().into());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| {
                BigRational::from_float(a).expect("finite") * BigRational::from_float(b).expect("finite")
            })
            .sum::<BigRational>()
            / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn index_of(bits: &[u8]) -> usize {
        Gf2Vector::from_bits(bits).as_index() as usize
    }

    #[test]
    fn parity_entry_examples() {
        let m = LearningMatrix::parity(2);
        for x in 0..4 {
            assert_eq!(m.entry(0, x), 1, "zero sample row is all +1");
        }
        assert_eq!(m.entry(index_of(&[1, 1]), index_of(&[1, 1])), 1);
        assert_eq!(m.entry(index_of(&[1, 0]), index_of(&[1, 1])), -1);
    }

    #[test]
    fn sparse_parity_concepts_are_ascending_weight_two_strings() {
        let m = LearningMatrix::sparse_parity(4, 2);
        assert_eq!(m.num_concepts(), 6);
        let indices: Vec<u64> = (0..6).map(|x| m.concept_vector(x).as_index()).collect();
        assert_eq!(indices, vec![3, 5, 6, 9, 10, 12]);
        for x in 0..6 {
            assert_eq!(m.concept_vector(x).weight(), 2);
        }
        // Entries agree with the plain parity rule on the restricted list.
        for a in 0..m.num_samples() {
            for x in 0..6 {
                let expected = parity_sign(a as u64, indices[x]);
                assert_eq!(m.entry(a, x), expected);
            }
        }
    }

    #[test]
    fn random_matrices_are_reproducible() {
        let m1 = LearningMatrix::random(3, 3, 42);
        let m2 = LearningMatrix::random(3, 3, 42);
        let m3 = LearningMatrix::random(3, 3, 43);
        assert_eq!(m1, m2);
        let differs = (0..8).any(|a| (0..8).any(|x| m1.entry(a, x) != m3.entry(a, x)));
        assert!(differs, "different seeds should give different matrices");
    }

    #[test]
    fn lp_norm_examples() {
        let one = ConceptFunction::constant(8, 1.0);
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            assert_relative_eq!(one.lp_norm(p), 1.0);
        }

        let n = 3;
        let prior = ConceptFunction::uniform_prior(1 << n);
        assert_relative_eq!(prior.lp_norm(2.0), 0.5f64.powi(n));

        let half = ConceptFunction::indicator(8, &[0, 1, 2, 3]);
        assert_relative_eq!(half.lp_norm(1.0), 0.5);
        assert_relative_eq!(half.lp_norm(2.0), 0.5f64.sqrt());
    }

    #[test]
    fn inner_examples() {
        let f = ConceptFunction::new(vec![0.5, 2.0, 0.0, 1.0]);
        assert_relative_eq!(f.inner(&f), f.lp_norm(2.0).powi(2), max_relative = 1e-12);
        let one = ConceptFunction::constant(4, 1.0);
        assert_relative_eq!(one.inner(&f), f.lp_norm(1.0), max_relative = 1e-12);

        let m = LearningMatrix::parity(3);
        let ones = ConceptFunction::constant(8, 1.0);
        for a in 1..8 {
            assert_eq!(m.row_function(a).inner(&ones), 0.0, "row {a} is balanced");
        }
    }

    #[test]
    fn parity_rows_are_orthonormal() {
        for n in 1..=4u32 {
            let m = LearningMatrix::parity(n);
            for a in 0..m.num_samples() {
                for b in 0..m.num_samples() {
                    let expected = if a == b { 1.0 } else { 0.0 };
                    assert_eq!(
                        m.row_function(a).inner(&m.row_function(b)),
                        expected,
                        "n={n} rows {a},{b}"
                    );
                }
            }
        }
    }

    #[test]
    fn truncate_above_examples() {
        let one = ConceptFunction::constant(4, 1.0);
        assert!(one.truncate_above(2.0).is_zero());
        assert_eq!(one.truncate_above(0.5), one);

        let mut spike = vec![0.0; 8];
        spike[3] = 4.0;
        let f = ConceptFunction::new(spike);
        let tail = f.truncate_above(1.0);
        assert_eq!(tail, f);
        let l1_tail = tail.lp_norm(1.0);
        let bound = f.lp_norm(2.0).powi(2) / 1.0;
        assert_relative_eq!(l1_tail, 0.5);
        assert!(l1_tail <= bound, "truncation guarantee {l1_tail} <= {bound}");
    }

    #[test]
    fn exact_norms_agree_with_float_on_dyadic_values() {
        let f = ConceptFunction::new(vec![0.25, 1.5, 0.0, 3.0]);
        let g = ConceptFunction::new(vec![1.0, 0.5, 2.0, 0.125]);
        let to_f64 = |r: &BigRational| {
            let num: f64 = r.numer().to_string().parse().unwrap();
            let den: f64 = r.denom().to_string().parse().unwrap();
            num / den
        };
        assert_relative_eq!(to_f64(&f.l1_exact()), f.lp_norm(1.0));
        assert_relative_eq!(to_f64(&f.l2_squared_exact()), f.lp_norm(2.0).powi(2));
        assert_relative_eq!(to_f64(&f.inner_exact(&g)), f.inner(&g), max_relative = 1e-12);
    }

    #[test]
    fn l2mat_explicit_roundtrip_is_bit_exact() {
        let table: Vec<i8> = vec![1, -1, -1, 1, 1, 1, -1, -1];
        let m = LearningMatrix::explicit(1, 2, &table).unwrap();
        let text = m.to_l2mat_string();
        assert_eq!(text, "L2MAT v1 n_a=1 n_x=2 kind=explicit\n+--+\n++--\n");
        let back = LearningMatrix::from_l2mat_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_l2mat_string(), text);
    }

    #[test]
    fn l2mat_headers_roundtrip_for_implicit_kinds() {
        for m in [
            LearningMatrix::parity(4),
            LearningMatrix::sparse_parity(5, 2),
            LearningMatrix::random(3, 4, 99),
        ] {
            let text = m.to_l2mat_string();
            let back = LearningMatrix::from_l2mat_str(&text).unwrap();
            assert_eq!(back, m, "round trip of {text:?}");
        }
    }

    #[test]
    fn l2mat_rejects_malformed_input() {
        for bad in [
            "",
            "L2MAT v2 n_a=1 n_x=1 kind=parity\n",
            "L2MAT v1 n_a=1 n_x=1 kind=explicit\n+?\n++\n",
            "L2MAT v1 n_a=1 n_x=2 kind=explicit\n+-\n",
            "L2MAT v1 n_a=1 n_x=1 kind=parity\n++\n",
        ] {
            assert!(LearningMatrix::from_l2mat_str(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn builtin_descriptors_parse() {
        assert_eq!(LearningMatrix::builtin("parity(3)").unwrap(), LearningMatrix::parity(3));
        assert_eq!(
            LearningMatrix::builtin("sparse_parity(4, 2)").unwrap(),
            LearningMatrix::sparse_parity(4, 2)
        );
        assert_eq!(
            LearningMatrix::builtin("random(3,3,7)").unwrap(),
            LearningMatrix::random(3, 3, 7)
        );
        assert!(LearningMatrix::builtin("parity(0)").is_err());
        assert!(LearningMatrix::builtin("fourier(3)").is_err());
    }

    fn arb_nonneg_function() -> impl Strategy<Value = ConceptFunction> {
        proptest::collection::vec(0.0f64..4.0, 1..=16).prop_map(ConceptFunction::new)
    }

    proptest! {
        #[test]
        fn norm_monotone_in_p(f in arb_nonneg_function(), p in 1.0f64..4.0, q in 0.0f64..4.0) {
            let q = p + q;
            prop_assert!(f.lp_norm(p) <= f.lp_norm(q) + 1e-9, "p={p} q={q}");
            prop_assert!(f.lp_norm(q) <= f.lp_norm(f64::INFINITY) + 1e-9);
        }

        #[test]
        fn cauchy_schwarz_and_hoelder(f in arb_nonneg_function(), scale in 0.1f64..3.0) {
            let g = ConceptFunction::new(
                f.values().iter().rev().map(|v| v * scale).collect::<Vec<_>>(),
            );
            prop_assert!(f.inner(&g).abs() <= f.lp_norm(2.0) * g.lp_norm(2.0) + 1e-9);
            let fg = ConceptFunction::new(
                f.values().iter().zip(g.values()).map(|(a, b)| a * b).collect::<Vec<_>>(),
            );
            for p in [1.0, 2.0] {
                prop_assert!(fg.lp_norm(p) <= f.lp_norm(p) * g.lp_norm(f64::INFINITY) + 1e-9);
            }
        }
    }
}
