use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DataError;

pub const DEFAULT_RATIOS: [f64; 3] = [0.6, 0.2, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

/// Disjoint train/validation/test index sets covering `0..n`, each sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitIndices {
    pub fn get(&self, kind: SplitKind) -> &[usize] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }

    pub fn n_obs(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

/// Seeded random split.
///
/// Sizes: `train = floor(r0 * n)`, `val = round((n - train) * r1 / (r1 + r2))`,
/// test takes the remainder. With 6:2:2 and `n = 8418` this gives 5050/1684/1684.
pub fn split(n: usize, ratios: [f64; 3], seed: u64) -> Result<SplitIndices, DataError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidRatios(ratios));
    }
    // The epsilon keeps exact products such as 0.6 * 10 from landing just below an integer.
    let n_train = (ratios[0] * n as f64 + 1e-9).floor() as usize;
    let rest = n.saturating_sub(n_train);
    let n_val = (rest as f64 * ratios[1] / (ratios[1] + ratios[2])).round() as usize;
    let n_test = rest.saturating_sub(n_val);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(DataError::SplitTooSmall { n, ratios });
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = perm[..n_train].to_vec();
    let mut val = perm[n_train..n_train + n_val].to_vec();
    let mut test = perm[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices {
        train,
        val,
        test,
        ratios,
        seed,
    })
}
