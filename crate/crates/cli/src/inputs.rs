//! Loading matrices, programs, and threshold schedules from arguments.
//!
//! Matrix arguments are builtin descriptors when they contain a
//! parenthesis (`parity(4)`) and file paths otherwise; threshold
//! arguments follow the same rule with preset descriptors
//! (`two_pass_table1(l,r_len,r_ext,k_ext)` and
//! `multi_pass_table2(q,l,r_len,r_ext,k_ext)`) or a JSON file carrying
//! the custom schedule fields.

use std::path::Path;

use paritylab_core::branching_program::BranchingProgram;
use paritylab_core::error::{Error, Result};
use paritylab_core::learning_matrix::LearningMatrix;
use paritylab_core::posterior_engine::ThresholdSet;
use serde::Deserialize;

/// A matrix from a builtin descriptor or an `L2MAT v1` file.
pub fn load_matrix(arg: &str) -> Result<LearningMatrix> {
    if arg.contains('(') {
        return LearningMatrix::builtin(arg);
    }
    LearningMatrix::from_l2mat_str(&std::fs::read_to_string(arg)?)
}

/// A program from a `BP v1` file.
pub fn load_program(path: &Path) -> Result<BranchingProgram> {
    BranchingProgram::from_bp_string(&std::fs::read_to_string(path)?)
}

/// The custom-schedule JSON shape; field meanings as in [`ThresholdSet`].
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomThresholds {
    l: u64,
    r_len: u32,
    r_ext: u32,
    k_ext: u32,
    l_sigs: Vec<u64>,
    l_sigv: u64,
    l_high: u64,
    l_bias: Vec<u64>,
    l_flat: Option<u64>,
}

/// A schedule from a preset descriptor or a custom JSON file.
pub fn load_thresholds(arg: &str) -> Result<ThresholdSet> {
    if let Some(rest) = arg.strip_prefix("two_pass_table1(") {
        let v = descriptor_args(rest, 4, arg)?;
        return ThresholdSet::two_pass_table1(v[0], v[1] as u32, v[2] as u32, v[3] as u32);
    }
    if let Some(rest) = arg.strip_prefix("multi_pass_table2(") {
        let v = descriptor_args(rest, 5, arg)?;
        return ThresholdSet::multi_pass_table2(
            v[0] as usize,
            v[1],
            v[2] as u32,
            v[3] as u32,
            v[4] as u32,
        );
    }
    if arg.contains('(') {
        return Err(Error::invalid(format!(
            "unknown threshold preset {arg:?}; expected two_pass_table1(l,r_len,r_ext,k_ext), \
             multi_pass_table2(q,l,r_len,r_ext,k_ext), or a JSON file path"
        )));
    }
    let text = std::fs::read_to_string(arg)?;
    let c: CustomThresholds = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
    ThresholdSet::custom(
        c.l, c.r_len, c.r_ext, c.k_ext, c.l_sigs, c.l_sigv, c.l_high, c.l_bias, c.l_flat,
    )
}

fn descriptor_args(rest: &str, want: usize, arg: &str) -> Result<Vec<u64>> {
    let body = rest
        .strip_suffix(')')
        .ok_or_else(|| Error::invalid(format!("unterminated descriptor {arg:?}")))?;
    let nums: Vec<u64> = body
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid(format!("non-numeric descriptor argument in {arg:?}")))?;
    if nums.len() != want {
        return Err(Error::invalid(format!(
            "descriptor {arg:?} takes {want} arguments, got {}",
            nums.len()
        )));
    }
    Ok(nums)
}
