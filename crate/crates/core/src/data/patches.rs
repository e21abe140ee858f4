//! Aligned patch extraction from full sample triples.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, SampleTriple, RATIO};

/// Cuts aligned windows on a `stride` grid: guide and reference at
/// `(y, x, patch)`, low-resolution input at `(y/4, x/4, patch/4)`.
///
/// With `shuffle_seed`, the emitted order is a seeded permutation of the grid.
pub fn extract_patches(
    triple: &SampleTriple,
    patch: usize,
    stride: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<SampleTriple>, DataError> {
    if patch == 0 || patch % RATIO != 0 {
        return Err(DataError::Config(format!(
            "patch {patch} must be a positive multiple of {RATIO}"
        )));
    }
    if stride == 0 || stride % RATIO != 0 {
        return Err(DataError::Config(format!(
            "stride {stride} must be a positive multiple of {RATIO}"
        )));
    }
    let (h, w, _) = triple.a.dims();
    if patch > h || patch > w {
        return Err(DataError::Config(format!(
            "patch {patch} exceeds image {h}x{w}"
        )));
    }
    let mut origins: Vec<(usize, usize)> = (0..=(h - patch) / stride)
        .flat_map(|i| (0..=(w - patch) / stride).map(move |j| (i * stride, j * stride)))
        .collect();
    if let Some(seed) = shuffle_seed {
        origins.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let lp = patch / RATIO;
    origins
        .into_iter()
        .map(|(y, x)| {
            let a = triple.a.crop(y, x, patch, patch)?;
            let b = triple.b.crop(y / RATIO, x / RATIO, lp, lp)?;
            let gt = triple
                .x
                .as_ref()
                .map(|g| g.crop(y, x, patch, patch))
                .transpose()?;
            SampleTriple::new(format!("{}@{y}_{x}", triple.id), a, b, gt)
        })
        .collect()
}
