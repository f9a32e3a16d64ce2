//! Certifies or refutes the L2-extractor property of a learning matrix.
//!
//! A matrix `M` is a `(k, l, r)`-L2-extractor when for every non-negative
//! `f` with `l2(f)/l1(f) <= 2^l`, at most `2^-k |A|` rows satisfy
//! `|<M_a, f>| >= 2^-r l1(f)`; ties at the threshold count as bad. The
//! quantifier ranges over all non-negative reals, which no finite search
//! covers, so the exhaustive mode enumerates the nonempty subset-indicator
//! family and every certificate records that restriction. Refutation
//! needs only one witness and is searched for among indicators and random
//! integer-valued functions; a refuted certificate always carries a
//! witness that re-verifies under independent exact arithmetic.
//!
//! Thresholds are compared exactly whenever the exponents are
//! half-integers (see [`crate::exact`]); otherwise comparisons fall back
//! to `f64` and the boundary behaviour is only as good as the floats.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{cmp_pow2_scaled, ge_pow2_scaled, half_exponent, int};
use crate::learning_matrix::{ConceptFunction, LearningMatrix, MatrixKind};
use crate::rng::rng_for_stream;

/// Parameters `(k, l, r)` of the extractor property, all non-negative
/// exponents of two.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorParams {
    pub k: f64,
    pub l: f64,
    pub r: f64,
}

impl ExtractorParams {
    pub fn new(k: f64, l: f64, r: f64) -> Result<Self> {
        for (name, v) in [("k", k), ("l", l), ("r", r)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "extractor parameter {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(ExtractorParams { k, l, r })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Refuted,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertMode {
    Exhaustive,
    Parseval,
    Montecarlo,
}

/// A violating test function together with the rows it correlates with.
/// Values are non-negative integers (indicators are the 0/1 case), so the
/// witness is exactly re-checkable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    /// Dense values by concept index.
    pub values: Vec<u64>,
    /// Ascending indices of rows that are bad for this function.
    pub bad_rows: Vec<usize>,
}

/// Outcome of a certification attempt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub mode: CertMode,
    pub params: ExtractorParams,
    /// The test family actually searched; `certified` never claims more
    /// than this family.
    pub family: String,
    pub trials: u64,
    pub witness: Option<Witness>,
}

/// Whether row `a` is bad for `f`: `|<M_a, f>| >= 2^-r l1(f)`. Exact when
/// `r` is a half-integer (function values are dyadic), `f64` otherwise.
///
/// Errors when `f` is negative somewhere or identically zero, where the
/// definition is vacuous.
pub fn is_bad_row(m: &LearningMatrix, a: usize, f: &ConceptFunction, r: f64) -> Result<bool> {
    if !f.is_nonnegative() {
        return Err(Error::invalid("is_bad_row needs a non-negative function"));
    }
    if f.is_zero() {
        return Err(Error::invalid("is_bad_row is undefined for the zero function"));
    }
    if f.domain_size() != m.num_concepts() {
        return Err(Error::invalid(format!(
            "function domain {} does not match the {} concepts",
            f.domain_size(),
            m.num_concepts()
        )));
    }
    let row = m.row_function(a);
    match half_exponent(-r) {
        Some(e2) => {
            let inner = f.inner_exact(&row);
            let abs = if inner < int(0) { -inner } else { inner };
            Ok(ge_pow2_scaled(&abs, &f.l1_exact(), e2))
        }
        None => Ok(f.inner(&row).abs() >= 0.5f64.powf(r) * f.lp_norm(1.0)),
    }
}

/// Smallest integer `s` such that `s >= size * 2^-r` — the cutoff above
/// which an absolute subset sign-sum makes a row bad.
fn bad_sum_cutoff(size: u64, r: f64) -> u64 {
    match half_exponent(-r) {
        Some(e2) => {
            let size_rat = int(size);
            let mut lo = 0u64;
            let mut hi = size;
            while lo < hi {
                let mid = (lo + hi) / 2;
                if ge_pow2_scaled(&int(mid), &size_rat, e2) {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            lo
        }
        None => (size as f64 * 0.5f64.powf(r)).ceil() as u64,
    }
}

/// Largest bad-row count that does not refute: `floor` of `2^-k |A|`.
fn max_good_count(num_rows: u64, k: f64) -> u64 {
    match half_exponent(-k) {
        Some(e2) => {
            let rows = int(num_rows);
            let mut lo = 0u64;
            let mut hi = num_rows;
            while lo < hi {
                let mid = (lo + hi).div_ceil(2);
                if cmp_pow2_scaled(&int(mid), &rows, e2) == std::cmp::Ordering::Greater {
                    hi = mid - 1;
                } else {
                    lo = mid;
                }
            }
            lo
        }
        None => (num_rows as f64 * 0.5f64.powf(k)).floor() as u64,
    }
}

/// Whether an integer-valued non-negative `values` satisfies the ratio
/// condition `l2(f)/l1(f) <= 2^l`, i.e. `|X| sum(v^2) <= 2^2l (sum v)^2`.
fn ratio_ok_int(values: &[u64], l: f64) -> bool {
    let domain = values.len() as u64;
    let sum: u128 = values.iter().map(|&v| v as u128).sum();
    let sum_sq: u128 = values.iter().map(|&v| (v as u128) * (v as u128)).sum();
    if sum == 0 {
        return false;
    }
    match half_exponent(2.0 * l) {
        Some(e2) => {
            cmp_pow2_scaled(&int(domain as u128 * sum_sq), &int(sum * sum), e2)
                != std::cmp::Ordering::Greater
        }
        None => {
            ((domain as u128 * sum_sq) as f64).sqrt() <= 2f64.powf(l) * sum as f64
        }
    }
}

/// Exact bad-row test for an integer-valued function.
fn is_bad_row_int(m: &LearningMatrix, a: usize, values: &[u64], r: f64) -> bool {
    let mut dot: i128 = 0;
    let mut total: i128 = 0;
    for (x, &v) in values.iter().enumerate() {
        dot += m.entry(a, x) as i128 * v as i128;
        total += v as i128;
    }
    match half_exponent(-r) {
        Some(e2) => ge_pow2_scaled(&int(dot.unsigned_abs()), &int(total), e2),
        None => dot.unsigned_abs() as f64 >= 0.5f64.powf(r) * total as f64,
    }
}

/// Enumerates every nonempty subset indicator over the concept space and
/// checks the extractor inequality for each one whose ratio qualifies.
/// `certified` means the full indicator family was enumerated and no
/// subset had too many bad rows; a violation is returned as the witness
/// with the smallest subset mask.
///
/// Refuses concept spaces larger than `cap` (default 32) instead of
/// starting an enumeration of more than `2^32` subsets.
pub fn certify_exhaustive(
    m: &LearningMatrix,
    p: ExtractorParams,
    cap: Option<usize>,
) -> Result<Certificate> {
    let cap = cap.unwrap_or(32);
    let nx = m.num_concepts();
    if nx > cap || nx > 64 {
        return Err(Error::Budget {
            what: "certify_exhaustive concept space".into(),
            needed: nx as u128,
            cap: cap.min(64) as u128,
            hint: "raise the cap (hard limit 64) or use refute_montecarlo".into(),
        });
    }
    let na = m.num_samples();
    let plus_masks: Vec<u64> = (0..na)
        .map(|a| {
            (0..nx).fold(0u64, |mask, x| {
                if m.entry(a, x) == 1 {
                    mask | 1 << x
                } else {
                    mask
                }
            })
        })
        .collect();

    let ratio_ok: Vec<bool> = (0..=nx as u64)
        .map(|size| size > 0 && subset_ratio_ok(size, nx as u64, p.l))
        .collect();
    let cutoff: Vec<u64> = (0..=nx as u64).map(|size| bad_sum_cutoff(size, p.r)).collect();
    let max_good = max_good_count(na as u64, p.k);

    let top: u128 = 1u128 << nx;
    let mut found: Option<(u64, Vec<usize>)> = None;
    'masks: for mask in 1..top {
        let mask = mask as u64;
        let size = mask.count_ones() as u64;
        if !ratio_ok[size as usize] {
            continue;
        }
        let min_sum = cutoff[size as usize];
        let mut bad = 0u64;
        for pm in &plus_masks {
            let plus = (mask & pm).count_ones() as i64;
            let sum = (2 * plus - size as i64).unsigned_abs();
            if sum >= min_sum {
                bad += 1;
            }
        }
        if bad > max_good {
            let rows = (0..na)
                .filter(|&a| {
                    let plus = (mask & plus_masks[a]).count_ones() as i64;
                    (2 * plus - size as i64).unsigned_abs() >= min_sum
                })
                .collect();
            found = Some((mask, rows));
            break 'masks;
        }
    }

    let certificate = match found {
        Some((mask, bad_rows)) => {
            let values: Vec<u64> = (0..nx).map(|x| (mask >> x) & 1).collect();
            let witness = Witness { values, bad_rows };
            verify_witness(m, p, &witness)?;
            Certificate {
                verdict: Verdict::Refuted,
                mode: CertMode::Exhaustive,
                params: p,
                family: "indicator".into(),
                trials: mask,
                witness: Some(witness),
            }
        }
        None => Certificate {
            verdict: Verdict::Certified,
            mode: CertMode::Exhaustive,
            params: p,
            family: "indicator".into(),
            trials: (top - 1) as u64,
            witness: None,
        },
    };
    Ok(certificate)
}

/// Ratio condition for a subset indicator: `|X| <= size * 2^2l`.
fn subset_ratio_ok(size: u64, domain: u64, l: f64) -> bool {
    match half_exponent(-2.0 * l) {
        Some(e2) => ge_pow2_scaled(&int(size), &int(domain), e2),
        None => (domain as f64 / size as f64).sqrt() <= 2f64.powf(l),
    }
}

/// The Parseval exponent for parity: `k = max(0, n - 2l - 2r)`. Valid
/// because `<M_a, f>` is the Fourier coefficient of `f` at `a`, and
/// Parseval caps how many coefficients can reach `2^-r l1(f)` when
/// `l2(f) <= 2^l l1(f)`; the formula is cross-validated against
/// [`certify_exhaustive`] in the test suite at `n` in `{3, 4}`.
pub fn parseval_bound(m: &LearningMatrix, l: f64, r: f64) -> Result<f64> {
    if !matches!(m.kind(), MatrixKind::Parity) {
        return Err(Error::invalid("parseval_bound applies to the parity kind only"));
    }
    if !(l.is_finite() && r.is_finite() && l >= 0.0 && r >= 0.0) {
        return Err(Error::invalid("parseval_bound needs finite non-negative l and r"));
    }
    Ok((m.concept_bits() as f64 - 2.0 * l - 2.0 * r).max(0.0))
}

/// Certifies through [`parseval_bound`] alone: certified when the
/// requested `k` is at most the Parseval exponent, inconclusive
/// otherwise (the bound not covering a request refutes nothing). No
/// search runs and no witness is ever produced.
///
/// # Errors
///
/// Same conditions as [`parseval_bound`].
pub fn certify_parseval(m: &LearningMatrix, p: ExtractorParams) -> Result<Certificate> {
    let bound = parseval_bound(m, p.l, p.r)?;
    let verdict = if p.k <= bound { Verdict::Certified } else { Verdict::Inconclusive };
    Ok(Certificate {
        verdict,
        mode: CertMode::Parseval,
        params: p,
        family: "l2-ratio via parseval".into(),
        trials: 0,
        witness: None,
    })
}

/// Randomized refutation search over indicator and integer-valued test
/// functions. Returns `refuted` with a re-checked witness, or
/// `inconclusive`; never `certified`.
///
/// The candidate schedule is deterministic given the seed: the full set
/// first, then each singleton, then seeded random indicators alternating
/// with random sparse integer functions.
///
/// # Panics
/// Panics if `trials` is 0.
pub fn refute_montecarlo(
    m: &LearningMatrix,
    p: ExtractorParams,
    trials: u64,
    seed: u64,
) -> Result<Certificate> {
    assert!(trials >= 1, "refute_montecarlo needs at least one trial");
    let nx = m.num_concepts();
    let na = m.num_samples();
    let max_good = max_good_count(na as u64, p.k);

    for trial in 0..trials {
        let values: Vec<u64> = if trial == 0 {
            vec![1; nx]
        } else if (trial as usize) <= nx {
            let mut v = vec![0; nx];
            v[trial as usize - 1] = 1;
            v
        } else {
            let mut rng = rng_for_stream(seed, trial);
            if trial % 2 == 1 {
                let mut v: Vec<u64> = (0..nx).map(|_| rng.gen::<bool>() as u64).collect();
                if v.iter().all(|&b| b == 0) {
                    v[rng.gen_range(0..nx)] = 1;
                }
                v
            } else {
                let mut v: Vec<u64> = (0..nx)
                    .map(|_| if rng.gen_range(0..4u8) == 0 { rng.gen_range(1..=8u64) } else { 0 })
                    .collect();
                if v.iter().all(|&b| b == 0) {
                    v[rng.gen_range(0..nx)] = rng.gen_range(1..=8);
                }
                v
            }
        };

        if !ratio_ok_int(&values, p.l) {
            continue;
        }
        let bad_rows: Vec<usize> =
            (0..na).filter(|&a| is_bad_row_int(m, a, &values, p.r)).collect();
        if bad_rows.len() as u64 > max_good {
            let witness = Witness { values, bad_rows };
            verify_witness(m, p, &witness)?;
            return Ok(Certificate {
                verdict: Verdict::Refuted,
                mode: CertMode::Montecarlo,
                params: p,
                family: "indicator+integer".into(),
                trials: trial + 1,
                witness: Some(witness),
            });
        }
    }
    Ok(Certificate {
        verdict: Verdict::Inconclusive,
        mode: CertMode::Montecarlo,
        params: p,
        family: "indicator+integer".into(),
        trials,
        witness: None,
    })
}

/// Independently re-checks a refutation witness: the function must be
/// non-negative and nonzero, satisfy the ratio condition, every listed
/// row must be bad under [`is_bad_row`], and the count must exceed the
/// allowance. Arithmetic here goes through the expectation-normalized
/// rational path, separate from the integer counting used by the
/// searches.
pub fn verify_witness(m: &LearningMatrix, p: ExtractorParams, w: &Witness) -> Result<()> {
    if w.values.len() != m.num_concepts() {
        return Err(Error::invariant("witness domain does not match the matrix"));
    }
    let f = ConceptFunction::new(w.values.iter().map(|&v| v as f64).collect());
    if f.is_zero() {
        return Err(Error::invariant("witness function is identically zero"));
    }
    let ratio_holds = match half_exponent(2.0 * p.l) {
        Some(e2) => {
            let l1 = f.l1_exact();
            let l2_sq = f.l2_squared_exact();
            cmp_pow2_scaled(&l2_sq, &(&l1 * &l1), e2) != std::cmp::Ordering::Greater
        }
        None => f.lp_norm(2.0) <= 2f64.powf(p.l) * f.lp_norm(1.0),
    };
    if !ratio_holds {
        return Err(Error::invariant("witness function fails the ratio condition"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &a in &w.bad_rows {
        if a >= m.num_samples() || !seen.insert(a) {
            return Err(Error::invariant(format!("witness row {a} repeated or out of range")));
        }
        if !is_bad_row(m, a, &f, p.r)? {
            return Err(Error::invariant(format!("witness row {a} is not bad")));
        }
    }
    let count = int(w.bad_rows.len() as u64);
    let rows = int(m.num_samples() as u64);
    let violates = match half_exponent(-p.k) {
        Some(e2) => cmp_pow2_scaled(&count, &rows, e2) == std::cmp::Ordering::Greater,
        None => w.bad_rows.len() as f64 > m.num_samples() as f64 * 0.5f64.powf(p.k),
    };
    if !violates {
        return Err(Error::invariant("witness bad-row count does not exceed the allowance"));
    }
    Ok(())
}
