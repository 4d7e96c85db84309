//! Column-major run-length encoding.
//!
//! Pixels are scanned top-to-bottom within a column, columns left-to-right.
//! Runs alternate background/foreground starting with background, so a mask
//! whose first scanned pixel is foreground begins with a zero run.

use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    pub h: usize,
    pub w: usize,
    pub runs: Vec<u64>,
}

impl Rle {
    pub fn decode(&self) -> Result<BinaryMask> {
        decode_rle(&self.runs, self.h, self.w)
    }

    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).sum()
    }
}

pub fn encode_rle(m: &BinaryMask) -> Rle {
    let (h, w) = m.dims();
    let mut runs = Vec::new();
    let mut current = false;
    let mut count = 0u64;
    for c in 0..w {
        for r in 0..h {
            let v = m.get(r, c);
            if v != current {
                runs.push(count);
                count = 0;
                current = v;
            }
            count += 1;
        }
    }
    runs.push(count);
    Rle { h, w, runs }
}

pub fn decode_rle(runs: &[u64], height: usize, width: usize) -> Result<BinaryMask> {
    let mut m = BinaryMask::new(height, width)?;
    let total = (height * width) as u64;
    if runs.is_empty() {
        return Err(Error::MalformedRle("empty run list".into()));
    }
    if let Some(i) = runs.iter().skip(1).position(|&r| r == 0) {
        return Err(Error::MalformedRle(format!(
            "zero-length run at index {} merges two runs of the same value",
            i + 1
        )));
    }
    let sum = runs
        .iter()
        .try_fold(0u64, |acc, &r| acc.checked_add(r))
        .ok_or_else(|| Error::MalformedRle("run lengths overflow".into()))?;
    if sum != total {
        return Err(Error::MalformedRle(format!(
            "runs sum to {sum}, expected {height}x{width} = {total}"
        )));
    }
    let mut pos = 0usize;
    for (i, &run) in runs.iter().enumerate() {
        let run = run as usize;
        if i % 2 == 1 {
            for p in pos..pos + run {
                m.set(p % height, p / height, true);
            }
        }
        pos += run;
    }
    Ok(m)
}
