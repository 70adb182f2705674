//! Feature head: optional pooling of spatial grids, an optional hidden
//! `tanh` layer, and the linear projection `V` into attribute space.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `tanh(x W + b)`, mapping `B_in` inputs to `B` features.
#[derive(Debug, Clone, PartialEq)]
pub struct Hidden {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderParams {
    pub hidden: Option<Hidden>,
    /// `B x M`.
    pub projection: Tensor,
    pub train_hidden: bool,
    pub train_projection: bool,
}

/// Graph handles for one step's copy of the parameters.
#[derive(Debug, Clone, Copy)]
pub struct EmbedderVars {
    pub hidden: Option<(Var, Var)>,
    pub projection: Var,
}

impl EmbedderParams {
    /// Identity head: features are used as they are.
    pub fn linear(projection: Tensor) -> Result<Self> {
        if projection.rank() != 2 {
            return Err(Error::dim("projection", projection.shape(), &[]));
        }
        Ok(EmbedderParams {
            hidden: None,
            projection,
            train_hidden: false,
            train_projection: true,
        })
    }

    pub fn input_dim(&self) -> usize {
        match &self.hidden {
            Some(h) => h.weight.rows(),
            None => self.projection.rows(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn attribute_dim(&self) -> usize {
        self.projection.cols()
    }

    /// Puts the parameters on `g`; frozen groups become constants.
    pub fn bind(&self, g: &mut Graph) -> EmbedderVars {
        let leaf = |g: &mut Graph, t: &Tensor, train: bool| {
            if train {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        let hidden = self.hidden.as_ref().map(|h| {
            (
                leaf(g, &h.weight, self.train_hidden),
                leaf(g, &h.bias, self.train_hidden),
            )
        });
        let projection = leaf(g, &self.projection, self.train_projection);
        EmbedderVars { hidden, projection }
    }

    /// Every parameter tensor, hidden weight and bias first.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        if let Some(h) = &self.hidden {
            out.push(&h.weight);
            out.push(&h.bias);
        }
        out.push(&self.projection);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        if let Some(h) = &mut self.hidden {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out.push(&mut self.projection);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

impl EmbedderVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = Vec::new();
        if let Some((w, b)) = self.hidden {
            out.push(w);
            out.push(b);
        }
        out.push(self.projection);
        out
    }
}

/// Features of one input: a `B_in` vector or an `h x w x B_in` grid, which
/// is mean-pooled first.
pub fn embed(g: &mut Graph, input: Var, vars: &EmbedderVars) -> Result<Var> {
    let pooled = match g.shape(input).len() {
        1 => input,
        3 => g.mean_pool(input)?,
        _ => return Err(Error::dim("embed input", g.shape(input), &[])),
    };
    let n = g.shape(pooled)[0];
    let row = g.reshape(pooled, vec![1, n])?;
    let out = embed_batch(g, row, vars)?;
    let b = g.shape(out)[1];
    g.reshape(out, vec![b])
}

/// Features of every row of an `n x B_in` matrix.
pub fn embed_batch(g: &mut Graph, inputs: Var, vars: &EmbedderVars) -> Result<Var> {
    let shape = g.shape(inputs).to_vec();
    match vars.hidden {
        Some((w, b)) => {
            let b_in = g.shape(w)[0];
            if shape.len() != 2 || shape[1] != b_in {
                return Err(Error::dim("embed_batch", &shape, &[b_in]));
            }
            let z = g.matmul(inputs, w)?;
            let z = g.add_row(z, b)?;
            Ok(g.tanh(z))
        }
        None => {
            let b = g.shape(vars.projection)[0];
            if shape.len() != 2 || shape[1] != b {
                return Err(Error::dim("embed_batch", &shape, &[b]));
            }
            Ok(inputs)
        }
    }
}

/// `V^T x` for a feature vector `x`.
pub fn project(g: &mut Graph, x: Var, projection: Var) -> Result<Var> {
    let (sx, sv) = (g.shape(x).to_vec(), g.shape(projection).to_vec());
    if sx.len() != 1 || sv.len() != 2 || sv[0] != sx[0] {
        return Err(Error::dim("project", &sx, &sv));
    }
    let row = g.reshape(x, vec![1, sx[0]])?;
    let out = g.matmul(row, projection)?;
    g.reshape(out, vec![sv[1]])
}

/// Mean-pools the spatial axes of an `n x h x w x B` array; `n x B` passes
/// through unchanged.
pub fn pool_grid(t: &Tensor) -> Result<Tensor> {
    match t.shape() {
        [_, _] => Ok(t.clone()),
        &[n, h, w, b] if h > 0 && w > 0 => {
            let cells = h * w;
            let mut out = vec![0.0; n * b];
            for (i, sample) in t.data().chunks(cells * b).enumerate() {
                for fiber in sample.chunks(b) {
                    for (o, &x) in out[i * b..(i + 1) * b].iter_mut().zip(fiber) {
                        *o += x;
                    }
                }
            }
            for o in &mut out {
                *o /= cells as f64;
            }
            Tensor::new(vec![n, b], out)
        }
        other => Err(Error::dim("pool_grid", other, &[])),
    }
}

/// Random parameters: a hidden layer only when `b_in != b`. Weights are
/// zero-mean normal with standard deviation `1/sqrt(fan_in)`.
pub fn init_params(b_in: usize, b: usize, m: usize, seed: u64) -> Result<EmbedderParams> {
    init_with(b_in, b, m, seed, b_in != b)
}

/// Like [`init_params`] but always with a hidden layer.
pub fn init_params_hidden(b_in: usize, b: usize, m: usize, seed: u64) -> Result<EmbedderParams> {
    init_with(b_in, b, m, seed, true)
}

fn init_with(b_in: usize, b: usize, m: usize, seed: u64, hidden: bool) -> Result<EmbedderParams> {
    if b_in == 0 || b == 0 || m == 0 {
        return Err(Error::Parameter(format!(
            "embedder dimensions must be positive, got {b_in}, {b}, {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |rows: usize, cols: usize| {
        let dist = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("positive std");
        let data = (0..rows * cols).map(|_| dist.sample(&mut rng)).collect();
        Tensor::new(vec![rows, cols], data).expect("shape matches data")
    };
    let hidden = hidden.then(|| Hidden {
        weight: normal(b_in, b),
        bias: Tensor::zeros(&[b]),
    });
    let projection = normal(b, m);
    Ok(EmbedderParams {
        train_hidden: hidden.is_some(),
        hidden,
        projection,
        train_projection: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_head(b: usize) -> EmbedderParams {
        EmbedderParams::linear(Tensor::identity(b)).unwrap()
    }

    #[test]
    fn identity_head_passes_vectors_and_pools_grids() {
        let mut g = Graph::new();
        let vars = identity_head(1).bind(&mut g);
        let grid = g.constant(Tensor::new(vec![2, 2, 1], vec![1.0, 3.0, 5.0, 7.0]).unwrap());
        let e = embed(&mut g, grid, &vars).unwrap();
        assert_eq!(g.value(e).data(), &[4.0]);

        let vars = identity_head(3).bind(&mut g);
        let x = g.constant(Tensor::vector(vec![0.5, -1.0, 2.0]));
        let e = embed(&mut g, x, &vars).unwrap();
        assert_eq!(g.value(e).data(), &[0.5, -1.0, 2.0]);

        let cell = g.constant(Tensor::new(vec![1, 1, 3], vec![0.5, -1.0, 2.0]).unwrap());
        let e = embed(&mut g, cell, &vars).unwrap();
        assert_eq!(g.value(e).data(), &[0.5, -1.0, 2.0]);

        let wrong = g.constant(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(embed(&mut g, wrong, &vars), Err(Error::Dimension { .. })));
    }

    #[test]
    fn projection_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![3.0, 4.0]));
        let v = g.constant(Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap());
        let p = project(&mut g, x, v).unwrap();
        assert_eq!(g.value(p).data(), &[7.0]);
        let eye = g.constant(Tensor::identity(2));
        let p = project(&mut g, x, eye).unwrap();
        assert_eq!(g.value(p).data(), &[3.0, 4.0]);
        let zero = g.constant(Tensor::zeros(&[2, 5]));
        let p = project(&mut g, x, zero).unwrap();
        assert_eq!(g.value(p).data(), &[0.0; 5]);
    }

    #[test]
    fn pool_grid_matches_graph_pooling() {
        let data: Vec<f64> = (0..2 * 2 * 3 * 2).map(|i| i as f64 * 0.5 - 3.0).collect();
        let t = Tensor::new(vec![2, 2, 3, 2], data.clone()).unwrap();
        let pooled = pool_grid(&t).unwrap();
        let mut g = Graph::new();
        for i in 0..2 {
            let one = g.constant(Tensor::new(vec![2, 3, 2], data[i * 12..(i + 1) * 12].to_vec()).unwrap());
            let p = g.mean_pool(one).unwrap();
            assert_eq!(g.value(p).data(), pooled.row(i));
        }
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(init_params(8, 4, 3, 5).unwrap(), init_params(8, 4, 3, 5).unwrap());
        assert_ne!(init_params(8, 4, 3, 5).unwrap(), init_params(8, 4, 3, 6).unwrap());
        assert!(init_params(4, 4, 3, 1).unwrap().hidden.is_none());
        assert!(init_params(0, 4, 3, 1).is_err());
    }

    #[test]
    fn init_std_follows_fan_in() {
        let p = init_params_hidden(100, 64, 200, 11).unwrap();
        let sample_std = |t: &Tensor| {
            let n = t.len() as f64;
            let mean = t.data().iter().sum::<f64>() / n;
            (t.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
        };
        let v = sample_std(&p.projection);
        assert!((v * 8.0 - 1.0).abs() < 0.2, "{v}");
        let w = sample_std(&p.hidden.as_ref().unwrap().weight);
        assert!((w * 10.0 - 1.0).abs() < 0.2, "{w}");
    }

    #[test]
    fn gradients_reach_every_group() {
        let params = init_params_hidden(3, 4, 2, 9).unwrap();
        let mut g = Graph::new();
        let vars = params.bind(&mut g);
        let x = g.constant(Tensor::from_rows(&[vec![0.3, -0.2, 0.9], vec![1.0, 0.4, -0.5]]).unwrap());
        let h = embed_batch(&mut g, x, &vars).unwrap();
        let e = g.matmul(h, vars.projection).unwrap();
        let s = g.sigmoid(e);
        let loss = g.sum(s);
        g.backward(loss).unwrap();
        for v in vars.all() {
            assert!(g.grad(v).unwrap().data().iter().any(|&d| d != 0.0));
        }
    }

    #[test]
    fn frozen_groups_are_constants() {
        let mut params = init_params_hidden(3, 4, 2, 9).unwrap();
        params.train_hidden = false;
        let mut g = Graph::new();
        let vars = params.bind(&mut g);
        let (w, _) = vars.hidden.unwrap();
        assert!(!g.requires_grad(w));
        assert!(g.requires_grad(vars.projection));
    }
}
