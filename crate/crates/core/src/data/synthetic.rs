use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Hierarchy, Splits};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAX_ATTEMPTS: usize = 1000;

/// Parameters of the synthetic generator. Seen classes get ids
/// `0..c_seen`, unseen classes follow.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub c_seen: usize,
    pub c_unseen: usize,
    pub m: usize,
    pub b_in: usize,
    pub n_per_class: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Fraction of each seen class held out as `test_seen`.
    pub test_fraction: f64,
    /// Attach the hierarchy `class % q` with this many macroclasses.
    pub macros: Option<usize>,
    /// Emit `h x w` grids; every cell carries its own noise draw.
    pub spatial: Option<(usize, usize)>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            c_seen: 8,
            c_unseen: 4,
            m: 16,
            b_in: 32,
            n_per_class: 25,
            noise_std: 0.1,
            seed: 7,
            test_fraction: 0.2,
            macros: Some(3),
            spatial: None,
        }
    }
}

/// Binary attribute columns, pairwise distinct and non-zero.
fn attribute_table(m: usize, c: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    for _ in 0..MAX_ATTEMPTS {
        let columns: Vec<Vec<bool>> = (0..c).map(|_| (0..m).map(|_| rng.gen_bool(0.5)).collect()).collect();
        let distinct: BTreeSet<&Vec<bool>> = columns.iter().collect();
        if distinct.len() == c && columns.iter().all(|col| col.iter().any(|&b| b)) {
            let data = (0..m)
                .flat_map(|r| columns.iter().map(move |col| if col[r] { 1.0 } else { 0.0 }))
                .collect();
            return Tensor::new(vec![m, c], data);
        }
    }
    Err(Error::Generation(format!(
        "no {c} distinct non-zero attribute vectors after {MAX_ATTEMPTS} attempts; raise M (currently {m})"
    )))
}

/// Samples `features = W a_class + noise` for a random `B_in x M` map `W`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let c = spec.c_seen + spec.c_unseen;
    if spec.c_seen == 0 || spec.m == 0 || spec.b_in == 0 || spec.n_per_class == 0 {
        return Err(Error::Parameter(
            "synthetic data needs seen classes, attributes, inputs and samples".into(),
        ));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::Parameter(format!("noise std {} must be >= 0", spec.noise_std)));
    }
    if !(0.0..1.0).contains(&spec.test_fraction) {
        return Err(Error::Parameter(format!(
            "test fraction {} must lie in [0, 1)",
            spec.test_fraction
        )));
    }
    if spec.macros == Some(0) || spec.spatial.is_some_and(|(h, w)| h == 0 || w == 0) {
        return Err(Error::Parameter("macro count and grid extents must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let attributes = attribute_table(spec.m, c, &mut rng)?;
    let w_dist = Normal::new(0.0, 1.0 / (spec.m as f64).sqrt()).expect("positive std");
    let w: Vec<f64> = (0..spec.b_in * spec.m).map(|_| w_dist.sample(&mut rng)).collect();
    let w = Tensor::new(vec![spec.b_in, spec.m], w)?;
    let means = w.matmul(&attributes)?.transpose(); // C x B_in
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");

    let cells = spec.spatial.map_or(1, |(h, w)| h * w);
    let n = c * spec.n_per_class;
    let mut features = Vec::with_capacity(n * cells * spec.b_in);
    let mut labels = Vec::with_capacity(n);
    let mut splits = Splits::default();
    let held_out = ((spec.n_per_class as f64 * spec.test_fraction).round() as usize).min(spec.n_per_class - 1);
    for class in 0..c {
        for k in 0..spec.n_per_class {
            let i = labels.len();
            labels.push(class);
            for _ in 0..cells {
                for &mu in means.row(class) {
                    let eps = if spec.noise_std > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    features.push(mu + eps);
                }
            }
            if class >= spec.c_seen {
                splits.test_unseen.push(i);
            } else if k < spec.n_per_class - held_out {
                splits.train.push(i);
            } else {
                splits.test_seen.push(i);
            }
        }
    }
    let shape = match spec.spatial {
        Some((h, w)) => vec![n, h, w, spec.b_in],
        None => vec![n, spec.b_in],
    };
    let dataset = Dataset {
        name: format!("synthetic-{}", spec.seed),
        features: Tensor::new(shape, features)?,
        labels,
        attributes,
        seen: (0..spec.c_seen).collect(),
        unseen: (spec.c_seen..c).collect(),
        splits,
        hierarchy: spec.macros.map(|q| Hierarchy::modulo(c, q)),
    };
    dataset.validate()?;
    Ok(dataset)
}
