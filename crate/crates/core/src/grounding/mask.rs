use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};

/// Binary mask of length `m` with exactly `k` zeros at uniformly chosen
/// positions.
pub fn make_mask<R: Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    if k > m {
        return Err(Error::Parameter(format!("cannot drop {k} of {m} attributes")));
    }
    let mut mask = vec![1.0; m];
    for i in sample(rng, m, k) {
        mask[i] = 0.0;
    }
    Ok(mask)
}
