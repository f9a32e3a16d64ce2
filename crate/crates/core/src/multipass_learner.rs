//! The end-to-end multi-pass parity learner and two one-pass baselines.
//!
//! The multi-pass learner solves `Ax = b` by blocked Gaussian
//! elimination: with a pass budget of `q` it picks `K` around `log2(q) /
//! 5`, views `[A | b]` as a `K x (K+1)` block matrix, and evaluates the
//! elimination circuit of [`crate::block_circuit`] as a streaming
//! algorithm. One attempt costs `K * 4^K` passes and succeeds exactly
//! when all `K` pivot blocks are invertible, which happens with
//! probability at least `(1/4)^K`; repeating up to `4^K` times on fresh
//! sample windows boosts that to a constant while keeping the total
//! pass count at `2^(5K) <= q` and the sample count at `4^K * n <= qn`.
//!
//! The baselines bracket the memory spectrum: [`OnepassGe`] keeps a
//! row-reduced system of `n(n+1)` bits and succeeds exactly when `n`
//! samples reach full rank, and [`BruteForce`] keeps only an `n`-bit
//! candidate it advances on contradiction. Both implement
//! [`ImplicitLearner`], so tiny instances can be materialized into
//! explicit programs with [`crate::branching_program::reachable_states`]
//! and analyzed exactly.

use rayon::prelude::*;
use serde::Serialize;

use crate::block_circuit::{
    assemble_solution, build_ge_circuit, eval_streaming, leaf_reader_samples, BlockCircuit,
    ResourceMeter, StreamCursor,
};
use crate::branching_program::{ImplicitLearner, McEstimate};
use crate::error::{Error, Result};
use crate::gf2::Gf2Vector;
use crate::learning_matrix::{LearningMatrix, MatrixKind};
use crate::rng::rng_for_stream;
use rand::Rng;

/// Derived parameters of one multi-pass learning run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LearnerConfig {
    pub n: usize,
    /// Pass budget the run must stay under.
    pub q: u64,
    /// Block count: the largest divisor of `n` at most `log2(q) / 5`.
    pub k_blocks: usize,
    /// Attempt budget `4^K`.
    pub repetitions: usize,
    pub samples_per_attempt: usize,
    /// `repetitions * n`, never more than `q * n`.
    pub total_samples: usize,
}

impl LearnerConfig {
    /// Derives the block count from the pass budget.
    ///
    /// The paper-level choice is `K = log2(q) / 5`, which makes the
    /// worst case `K * 4^K * 4^K <= 2^(5K) <= q` passes. `K` must also
    /// divide `n` for the blocking to be exact, so the largest divisor
    /// of `n` within the budget is used; `K = 1` always qualifies once
    /// `q >= 32`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArg`] when `n` is zero or above 63, or
    /// when `q < 32` (no valid `K` exists).
    pub fn derive(n: usize, q: u64) -> Result<Self> {
        if n == 0 || n > 63 {
            return Err(Error::invalid("dimension must be in 1..=63"));
        }
        let k_max = (63 - q.leading_zeros() as usize) / 5;
        if q == 0 || k_max == 0 {
            return Err(Error::invalid(
                "pass budget must be at least 32 to afford one elimination step",
            ));
        }
        let k_blocks = (1..=k_max.min(n)).rev().find(|&k| n.is_multiple_of(k)).unwrap_or(1);
        let repetitions = 4usize.pow(k_blocks as u32);
        Ok(LearnerConfig {
            n,
            q,
            k_blocks,
            repetitions,
            samples_per_attempt: n,
            total_samples: repetitions * n,
        })
    }

    /// Worst-case live memory of the streaming evaluation, `8 n^2 / K`
    /// bits (the circuit bound `4c(d+m)` with `c = (n/K)^2` and `d = m
    /// = K`).
    pub fn memory_budget_bits(&self) -> u64 {
        8 * (self.n as u64) * (self.n as u64) / self.k_blocks as u64
    }

    /// Worst-case pass count, `K * 4^K` per attempt over `4^K`
    /// attempts.
    pub fn pass_budget(&self) -> u64 {
        (self.k_blocks * self.repetitions * self.repetitions) as u64
    }
}

/// Result of one learning run.
#[derive(Clone, Debug, Serialize)]
pub struct LearnOutcome {
    /// Concept index of the guess, or `None` when the run failed.
    pub guess: Option<u64>,
    pub attempts_used: usize,
    /// Aggregated over attempts: passes and samples add up, the memory
    /// peak takes the maximum.
    pub meter: ResourceMeter,
    /// Which attempts completed their pivot chain, in order.
    pub attempt_completed: Vec<bool>,
}

/// Runs blocked Gaussian elimination attempts until one completes.
///
/// Attempt `r` reads the fresh window `pairs[r*n .. (r+1)*n]`; a
/// singular pivot anywhere in the chain aborts the attempt and the next
/// window is tried. A completed attempt's solution is checked against
/// every equation of its window before it is returned. The matrix
/// argument pins the setting: this algorithm is only correct for parity
/// labels.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] when the matrix is not the parity
/// matrix over `cfg.n` bits or the stream is shorter than
/// `cfg.total_samples`, and [`Error::Invariant`] when a completed
/// attempt violates its own equations or a resource budget (neither
/// can happen unless the circuit or meter is wrong).
pub fn learn_multipass(
    cfg: &LearnerConfig,
    pairs: &[(u64, u8)],
    m: &LearningMatrix,
) -> Result<LearnOutcome> {
    if !matches!(m.kind(), MatrixKind::Parity) || m.concept_bits() as usize != cfg.n {
        return Err(Error::invalid(format!(
            "blocked elimination needs the parity matrix over {} bits",
            cfg.n
        )));
    }
    if pairs.len() < cfg.total_samples {
        return Err(Error::invalid(format!(
            "stream supplies {} samples but the run needs {}",
            pairs.len(),
            cfg.total_samples
        )));
    }
    let cir = build_ge_circuit(cfg.n, cfg.k_blocks)?;
    let mut meter = ResourceMeter::default();
    let mut attempt_completed = Vec::new();
    let mut guess = None;
    for r in 0..cfg.repetitions {
        let window = &pairs[r * cfg.n..(r + 1) * cfg.n];
        let mut cursor = StreamCursor::new(window);
        let mut reader = leaf_reader_samples(cfg.n, cfg.k_blocks);
        let (outputs, attempt_meter) = eval_streaming(&cir, &mut reader, &mut cursor)?;
        meter.absorb(&attempt_meter);
        match assemble_solution(&outputs, cfg.n, cfg.k_blocks)? {
            Some(x) => {
                for &(a, b01) in window {
                    if Gf2Vector::from_index(cfg.n, a).dot(&x) != b01 {
                        return Err(Error::invariant(
                            "completed attempt violates one of its own equations",
                        ));
                    }
                }
                attempt_completed.push(true);
                guess = Some(x.as_index());
            }
            None => attempt_completed.push(false),
        }
        if guess.is_some() {
            break;
        }
    }
    if meter.passes_used > cfg.q {
        return Err(Error::invariant("pass budget exceeded"));
    }
    if meter.samples_touched > (cfg.q * cfg.n as u64).max(cfg.total_samples as u64) {
        return Err(Error::invariant("sample budget exceeded"));
    }
    if meter.peak_live_bits > cfg.memory_budget_bits() {
        return Err(Error::invariant("memory budget exceeded"));
    }
    Ok(LearnOutcome { guess, attempts_used: attempt_completed.len(), meter, attempt_completed })
}

/// One-pass Gaussian elimination: keeps the observed system in reduced
/// row echelon form, `n` rows of `n+1` bits each.
///
/// The state encoding is canonical (row `i` of the state is the
/// reduced row with pivot column `i`, or zero), so distinct
/// observation histories with the same span share a state. `finish`
/// reads the solution off the label column on full rank and returns
/// concept 0 otherwise; [`learn_onepass_ge`] reports that case as a
/// failure instead of a guess.
#[derive(Clone, Copy, Debug)]
pub struct OnepassGe {
    pub n: usize,
}

impl OnepassGe {
    fn row(&self, state: &Gf2Vector, i: usize) -> Gf2Vector {
        let w = self.n + 1;
        let mut row = Gf2Vector::zeros(w);
        for c in 0..w {
            row.set_bit(c, state.bit(i * w + c));
        }
        row
    }

    fn rank(&self, state: &Gf2Vector) -> usize {
        (0..self.n).filter(|&i| state.bit(i * (self.n + 1) + i)).count()
    }
}

impl ImplicitLearner for OnepassGe {
    fn passes(&self) -> usize {
        1
    }

    fn init(&self) -> Gf2Vector {
        Gf2Vector::zeros(self.n * (self.n + 1))
    }

    fn step(&self, state: &Gf2Vector, _j: usize, _pos: usize, a: usize, b01: u8) -> Gf2Vector {
        let w = self.n + 1;
        let mut v = Gf2Vector::from_index(w, a as u64);
        v.set_bit(self.n, b01 == 1);
        for i in 0..self.n {
            if v.bit(i) && state.bit(i * w + i) {
                v.xor_assign(&self.row(state, i));
            }
        }
        let Some(pivot) = (0..self.n).find(|&i| v.bit(i)) else {
            return state.clone();
        };
        let mut next = state.clone();
        for c in 0..w {
            next.set_bit(pivot * w + c, v.bit(c));
        }
        for i in 0..self.n {
            if i != pivot && next.bit(i * w + pivot) {
                let mut row = self.row(&next, i);
                row.xor_assign(&v);
                for c in 0..w {
                    next.set_bit(i * w + c, row.bit(c));
                }
            }
        }
        next
    }

    fn finish(&self, state: &Gf2Vector) -> u64 {
        if self.rank(state) < self.n {
            return 0;
        }
        let w = self.n + 1;
        let mut x = Gf2Vector::zeros(self.n);
        for i in 0..self.n {
            x.set_bit(i, state.bit(i * w + self.n));
        }
        x.as_index()
    }

    fn memory_bits(&self) -> usize {
        self.n * (self.n + 1)
    }
}

/// Runs [`OnepassGe`] over the first `t_len` samples of the stream.
///
/// Succeeds exactly when the samples span the full space; the guess is
/// then the unique solution. Rank deficiency is reported as `guess:
/// None` rather than a lucky partial solve.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] when the stream is shorter than
/// `t_len`.
pub fn learn_onepass_ge(n: usize, pairs: &[(u64, u8)], t_len: usize) -> Result<LearnOutcome> {
    if pairs.len() < t_len {
        return Err(Error::invalid("stream shorter than the requested sample count"));
    }
    let learner = OnepassGe { n };
    let mut state = learner.init();
    for (pos, &(a, b01)) in pairs[..t_len].iter().enumerate() {
        state = learner.step(&state, 1, pos + 1, a as usize, b01);
    }
    let full_rank = learner.rank(&state) == n;
    let mut meter = ResourceMeter::default();
    meter.passes_used = u64::from(t_len > 0);
    meter.samples_touched = t_len as u64;
    meter.peak_live_bits = learner.memory_bits() as u64;
    Ok(LearnOutcome {
        guess: full_rank.then(|| learner.finish(&state)),
        attempts_used: 1,
        meter,
        attempt_completed: vec![full_rank],
    })
}

/// Brute-force scan: keeps one `n`-bit candidate and advances to the
/// next concept (in index order, wrapping) whenever a sample
/// contradicts it. The hidden concept never contradicts itself, so the
/// scan is absorbing at the truth.
#[derive(Clone, Copy, Debug)]
pub struct BruteForce {
    pub n: usize,
}

impl ImplicitLearner for BruteForce {
    fn passes(&self) -> usize {
        1
    }

    fn init(&self) -> Gf2Vector {
        Gf2Vector::zeros(self.n)
    }

    fn step(&self, state: &Gf2Vector, _j: usize, _pos: usize, a: usize, b01: u8) -> Gf2Vector {
        if Gf2Vector::from_index(self.n, a as u64).dot(state) == b01 {
            state.clone()
        } else {
            let next = (state.as_index() + 1) & ((1u64 << self.n) - 1);
            Gf2Vector::from_index(self.n, next)
        }
    }

    fn finish(&self, state: &Gf2Vector) -> u64 {
        state.as_index()
    }

    fn memory_bits(&self) -> usize {
        self.n
    }
}

/// Runs [`BruteForce`] over the first `t_len` samples of the stream.
///
/// Always returns a guess; with `t_len = 0` that is concept 0, correct
/// with probability `2^-n` over a uniform concept.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] when the stream is shorter than
/// `t_len`.
pub fn learn_bruteforce(n: usize, pairs: &[(u64, u8)], t_len: usize) -> Result<LearnOutcome> {
    if pairs.len() < t_len {
        return Err(Error::invalid("stream shorter than the requested sample count"));
    }
    let learner = BruteForce { n };
    let mut state = learner.init();
    for (pos, &(a, b01)) in pairs[..t_len].iter().enumerate() {
        state = learner.step(&state, 1, pos + 1, a as usize, b01);
    }
    let mut meter = ResourceMeter::default();
    meter.passes_used = u64::from(t_len > 0);
    meter.samples_touched = t_len as u64;
    meter.peak_live_bits = learner.memory_bits() as u64;
    Ok(LearnOutcome {
        guess: Some(learner.finish(&state)),
        attempts_used: 1,
        meter,
        attempt_completed: vec![true],
    })
}

/// Draws a hidden concept and a labeled parity stream of `count`
/// samples from the given trial RNG.
pub fn draw_parity_stream(
    n: usize,
    count: usize,
    rng: &mut impl Rng,
) -> (Gf2Vector, Vec<(u64, u8)>) {
    let x = Gf2Vector::random(n, rng);
    let pairs = (0..count)
        .map(|_| {
            let a: u64 = rng.gen_range(0..(1u64 << n));
            let b01 = Gf2Vector::from_index(n, a).dot(&x);
            (a, b01)
        })
        .collect();
    (x, pairs)
}

/// Outcome statistics of repeated multi-pass learning trials.
#[derive(Clone, Debug, Serialize)]
pub struct MultipassStats {
    pub config: LearnerConfig,
    pub successes: u64,
    pub trials: u64,
    /// Per-trial success flags, in trial order.
    pub succeeded: Vec<bool>,
    /// Per-trial meters, in trial order.
    pub meters: Vec<ResourceMeter>,
    pub attempts_used: Vec<usize>,
}

impl MultipassStats {
    pub fn estimate(&self) -> McEstimate {
        let mean = self.successes as f64 / self.trials as f64;
        let ci95 = 1.96 * (mean * (1.0 - mean) / self.trials as f64).sqrt();
        McEstimate { mean, ci95, trials: self.trials }
    }
}

/// Runs seeded multi-pass learning trials in parallel. Each trial
/// draws a fresh concept and stream from its own RNG stream, so the
/// result is deterministic for a given seed.
///
/// # Errors
///
/// As for [`LearnerConfig::derive`] and [`learn_multipass`]; `trials`
/// must be positive.
pub fn multipass_trials(n: usize, q: u64, trials: u64, seed: u64) -> Result<MultipassStats> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let cfg = LearnerConfig::derive(n, q)?;
    let m = LearningMatrix::parity(n as u32);
    let per_trial: Vec<(bool, ResourceMeter, usize)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng_for_stream(seed, trial);
            let (x, pairs) = draw_parity_stream(n, cfg.total_samples, &mut rng);
            let outcome = learn_multipass(&cfg, &pairs, &m)?;
            Ok((
                outcome.guess == Some(x.as_index()),
                outcome.meter,
                outcome.attempts_used,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(MultipassStats {
        config: cfg,
        successes: per_trial.iter().filter(|t| t.0).count() as u64,
        trials,
        succeeded: per_trial.iter().map(|t| t.0).collect(),
        meters: per_trial.iter().map(|t| t.1).collect(),
        attempts_used: per_trial.iter().map(|t| t.2).collect(),
    })
}

fn mc_rate(hits: u64, trials: u64) -> McEstimate {
    let mean = hits as f64 / trials as f64;
    let ci95 = 1.96 * (mean * (1.0 - mean) / trials as f64).sqrt();
    McEstimate { mean, ci95, trials }
}

/// Measures the per-attempt completion rate of the `K`-block pivot
/// chain: the fraction of fresh `n`-sample windows whose `K` pivots
/// are all invertible.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] on a blocking mismatch or zero
/// attempts.
pub fn attempt_completion_rate(
    n: usize,
    k_blocks: usize,
    attempts: u64,
    seed: u64,
) -> Result<McEstimate> {
    if attempts == 0 {
        return Err(Error::invalid("need at least one attempt"));
    }
    let cir: BlockCircuit = build_ge_circuit(n, k_blocks)?;
    let hits: u64 = (0..attempts)
        .into_par_iter()
        .map(|attempt| {
            let mut rng = rng_for_stream(seed, attempt);
            let (_, pairs) = draw_parity_stream(n, n, &mut rng);
            let mut cursor = StreamCursor::new(&pairs);
            let mut reader = leaf_reader_samples(n, k_blocks);
            let (outputs, _) = eval_streaming(&cir, &mut reader, &mut cursor)?;
            Ok(u64::from(assemble_solution(&outputs, n, k_blocks)?.is_some()))
        })
        .sum::<Result<u64>>()?;
    Ok(mc_rate(hits, attempts))
}

/// Measures the success rate of [`learn_onepass_ge`] on fresh
/// `t_len`-sample parity streams.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] on zero trials.
pub fn onepass_ge_rate(n: usize, t_len: usize, trials: u64, seed: u64) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let hits: u64 = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng_for_stream(seed, trial);
            let (x, pairs) = draw_parity_stream(n, t_len, &mut rng);
            let outcome = learn_onepass_ge(n, &pairs, t_len)?;
            Ok(u64::from(outcome.guess == Some(x.as_index())))
        })
        .sum::<Result<u64>>()?;
    Ok(mc_rate(hits, trials))
}

/// Measures the success rate of [`learn_bruteforce`] on fresh
/// `t_len`-sample parity streams.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] on zero trials.
pub fn bruteforce_rate(n: usize, t_len: usize, trials: u64, seed: u64) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let hits: u64 = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng_for_stream(seed, trial);
            let (x, pairs) = draw_parity_stream(n, t_len, &mut rng);
            let outcome = learn_bruteforce(n, &pairs, t_len)?;
            Ok(u64::from(outcome.guess == Some(x.as_index())))
        })
        .sum::<Result<u64>>()?;
    Ok(mc_rate(hits, trials))
}
