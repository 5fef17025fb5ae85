//! Truncated path signatures by explicit tensor algebra.
//!
//! Independent reference for the PDE solver: with a linear static kernel the
//! signature kernel equals `⟨S(x), S(y)⟩`, which the truncated inner product
//! approaches from below as the level grows. Each linear segment with
//! increment `v` has signature `exp(v) = Σ v^{⊗k}/k!`, and segments are
//! concatenated with Chen's identity `S(x * y) = S(x) ⊗ S(y)`.

use crate::error::{Error, Result};
use crate::sigkernel::Path;

pub const MAX_LEVEL: usize = 8;

/// Signature levels `0..=level`; level `k` holds `dim^k` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSignature {
    pub dim: usize,
    pub levels: Vec<Vec<f64>>,
}

impl TruncatedSignature {
    fn identity(dim: usize, level: usize) -> Self {
        let levels = (0..=level)
            .map(|k| {
                let mut v = vec![0.0; dim.pow(k as u32)];
                if k == 0 {
                    v[0] = 1.0;
                }
                v
            })
            .collect();
        Self { dim, levels }
    }

    fn segment(increment: &[f64], level: usize) -> Self {
        let dim = increment.len();
        let mut levels = vec![vec![1.0]];
        for k in 1..=level {
            let prev = &levels[k - 1];
            let mut next = Vec::with_capacity(prev.len() * dim);
            for &p in prev {
                next.extend(increment.iter().map(|v| p * v / k as f64));
            }
            levels.push(next);
        }
        Self { dim, levels }
    }

    /// Truncated tensor product.
    fn mul(&self, other: &Self) -> Self {
        let level = self.levels.len() - 1;
        let mut out = Self::identity(self.dim, level);
        for k in 0..=level {
            let target = &mut out.levels[k];
            target.iter_mut().for_each(|t| *t = 0.0);
            for i in 0..=k {
                let a = &self.levels[i];
                let b = &other.levels[k - i];
                for (ai, &av) in a.iter().enumerate() {
                    let base = ai * b.len();
                    for (bi, &bv) in b.iter().enumerate() {
                        target[base + bi] += av * bv;
                    }
                }
            }
        }
        out
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    /// Concatenation of all levels into one feature vector.
    pub fn flatten(&self) -> Vec<f64> {
        self.levels.concat()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }
}

/// Signature of a piecewise linear path truncated at `level` (1..=8).
pub fn truncated_signature(x: &Path, level: usize) -> Result<TruncatedSignature> {
    if !(1..=MAX_LEVEL).contains(&level) {
        return Err(Error::InvalidArgument(format!(
            "signature level must be in 1..={MAX_LEVEL}, got {level}"
        )));
    }
    let dim = x.dim();
    let mut sig = TruncatedSignature::identity(dim, level);
    for t in 0..x.len() - 1 {
        let inc: Vec<f64> = x
            .point(t + 1)
            .iter()
            .zip(x.point(t))
            .map(|(b, a)| b - a)
            .collect();
        if inc.iter().all(|v| *v == 0.0) {
            continue;
        }
        sig = sig.mul(&TruncatedSignature::segment(&inc, level));
    }
    Ok(sig)
}
