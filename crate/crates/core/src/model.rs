//! Latent factor parameters, the regularized squared-loss objective and its
//! exact gradient.
//!
//! Parameters live in one flat vector `y = vec(Y_U, Y_I)`: all user factors
//! first (`u * f + d`), then all item factors (`n_users * f + i * f + d`).
//! Gradients and curvature products share this layout.
//!
//! The objective is
//!
//! ```text
//! E(y) = 1/2 Σ_{(u,i)∈K} (r_ui - y_u·y_i)^2 + λ/2 Σ_{(u,i)∈K} (|y_u|^2 + |y_i|^2)
//! ```
//!
//! so the regularizer weight of user `u` is `λ |K_u|`, matching the diagonal
//! term of the damped curvature operator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::InteractionIndex;
use crate::error::{Error, Result};
use crate::sam::SamMode;
use crate::vector::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    f: usize,
    n_users: usize,
    n_items: usize,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(n_users: usize, n_items: usize, f: usize) -> Self {
        Self {
            f,
            n_users,
            n_items,
            values: vec![0.0; (n_users + n_items) * f],
        }
    }

    pub fn from_values(n_users: usize, n_items: usize, f: usize, values: Vec<f64>) -> Result<Self> {
        let expected = (n_users + n_items) * f;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        Ok(Self {
            f,
            n_users,
            n_items,
            values,
        })
    }

    /// A vector with the same shape and new contents.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_values(self.n_users, self.n_items, self.f, values)
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Total parameter count `p = (n_users + n_items) * f`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn user_index(&self, u: usize, d: usize) -> usize {
        u * self.f + d
    }

    #[inline]
    pub fn item_index(&self, i: usize, d: usize) -> usize {
        self.item_offset() + i * self.f + d
    }

    #[inline]
    pub fn item_offset(&self) -> usize {
        self.n_users * self.f
    }

    #[inline]
    pub fn user(&self, u: usize) -> &[f64] {
        &self.values[u * self.f..(u + 1) * self.f]
    }

    #[inline]
    pub fn item(&self, i: usize) -> &[f64] {
        let start = self.item_offset() + i * self.f;
        &self.values[start..start + self.f]
    }

    pub fn user_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.values[u * self.f..(u + 1) * self.f]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        let start = self.item_offset() + i * self.f;
        &mut self.values[start..start + self.f]
    }

    /// Split a flat vector in this layout into its user and item blocks.
    pub fn split_blocks<'a>(&self, v: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        v.split_at(self.item_offset())
    }

    pub fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: v.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_index(&self, index: &InteractionIndex) -> Result<()> {
        if index.n_users() != self.n_users {
            return Err(Error::DimensionMismatch {
                expected: self.n_users,
                found: index.n_users(),
            });
        }
        if index.n_items() != self.n_items {
            return Err(Error::DimensionMismatch {
                expected: self.n_items,
                found: index.n_items(),
            });
        }
        Ok(())
    }
}

/// Training configuration for the second-order trainer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Latent dimension.
    pub f: usize,
    /// L2 coefficient.
    pub lambda: f64,
    /// Initial damping.
    pub gamma: f64,
    /// SAM radius; zero disables the perturbation.
    pub rho: f64,
    pub sam_mode: SamMode,
    /// CG iteration cap; the effective cap is `min(p, cg_max_iters)`.
    pub cg_max_iters: usize,
    pub cg_rel_tol: f64,
    pub cg_abs_tol: f64,
    /// Start each CG solve from the previous update instead of zero.
    pub warm_start: bool,
    /// Adapt damping from the reduction ratio after each accepted step.
    pub adapt_damping: bool,
    pub max_epochs: usize,
    pub patience: usize,
    pub init_low: f64,
    pub init_high: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            f: 20,
            lambda: 0.05,
            gamma: 1.0,
            rho: 1e-3,
            sam_mode: SamMode::GradientAndCurvature,
            cg_max_iters: 250,
            cg_rel_tol: 1e-4,
            cg_abs_tol: 1e-12,
            warm_start: false,
            adapt_damping: true,
            max_epochs: 500,
            patience: 10,
            init_low: 0.0,
            init_high: 0.004,
            seed: 42,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidHyperparameter(msg));
        if self.f == 0 {
            return bad("f must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be finite and > 0, got {}", self.gamma));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be finite and >= 0, got {}", self.rho));
        }
        if self.cg_max_iters == 0 {
            return bad("cg_max_iters must be at least 1".into());
        }
        if !(self.cg_rel_tol > 0.0) {
            return bad(format!("cg_rel_tol must be > 0, got {}", self.cg_rel_tol));
        }
        if !(self.cg_abs_tol >= 0.0) {
            return bad(format!("cg_abs_tol must be >= 0, got {}", self.cg_abs_tol));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(self.init_low.is_finite() && self.init_high.is_finite())
            || self.init_low > self.init_high
        {
            return bad(format!(
                "init range [{}, {}) is invalid",
                self.init_low, self.init_high
            ));
        }
        Ok(())
    }
}

/// Draw every entry i.i.d. from `U[init_low, init_high)` with a seeded RNG.
pub fn init_params(n_users: usize, n_items: usize, f: usize, low: f64, high: f64, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = (n_users + n_items) * f;
    let values = (0..p)
        .map(|_| {
            if high > low {
                rng.gen_range(low..high)
            } else {
                low
            }
        })
        .collect();
    ParamVector {
        f,
        n_users,
        n_items,
        values,
    }
}

/// [`init_params`] using the range and seed in `hp`.
pub fn init_from_hyperparams(n_users: usize, n_items: usize, hp: &Hyperparams) -> ParamVector {
    init_params(n_users, n_items, hp.f, hp.init_low, hp.init_high, hp.seed)
}

/// Predicted rating `y_u · y_i`.
pub fn predict(params: &ParamVector, u: usize, i: usize) -> Result<f64> {
    if u >= params.n_users {
        return Err(Error::IndexOutOfRange {
            kind: "user",
            index: u,
            len: params.n_users,
        });
    }
    if i >= params.n_items {
        return Err(Error::IndexOutOfRange {
            kind: "item",
            index: i,
            len: params.n_items,
        });
    }
    Ok(predict_unchecked(params, u, i))
}

#[inline]
pub(crate) fn predict_unchecked(params: &ParamVector, u: usize, i: usize) -> f64 {
    dot(params.user(u), params.item(i))
}

/// Regularized objective `E` over the observed entries of `index`.
pub fn objective(params: &ParamVector, index: &InteractionIndex, lambda: f64) -> Result<f64> {
    params.check_index(index)?;
    let user_terms: Vec<f64> = (0..index.n_users())
        .into_par_iter()
        .map(|u| {
            let yu = params.user(u);
            let (items, ratings) = index.user_row(u);
            let sse: f64 = items
                .iter()
                .zip(ratings)
                .map(|(&i, &r)| {
                    let e = r - dot(yu, params.item(i));
                    e * e
                })
                .sum();
            sse + lambda * index.user_degree(u) as f64 * dot(yu, yu)
        })
        .collect();
    let item_terms: Vec<f64> = (0..index.n_items())
        .into_par_iter()
        .map(|i| {
            let yi = params.item(i);
            lambda * index.item_degree(i) as f64 * dot(yi, yi)
        })
        .collect();
    let total: f64 = user_terms.iter().sum::<f64>() + item_terms.iter().sum::<f64>();
    Ok(0.5 * total)
}

/// Exact gradient of [`objective`], in the parameter layout.
pub fn gradient(params: &ParamVector, index: &InteractionIndex, lambda: f64) -> Result<Vec<f64>> {
    params.check_index(index)?;
    let f = params.f();
    let mut grad = vec![0.0; params.len()];
    let (user_block, item_block) = grad.split_at_mut(params.item_offset());

    user_block
        .par_chunks_mut(f.max(1))
        .enumerate()
        .for_each(|(u, gu)| {
            let yu = params.user(u);
            let (items, ratings) = index.user_row(u);
            for (&i, &r) in items.iter().zip(ratings) {
                let yi = params.item(i);
                let e = r - dot(yu, yi);
                for d in 0..f {
                    gu[d] += -e * yi[d] + lambda * yu[d];
                }
            }
        });
    item_block
        .par_chunks_mut(f.max(1))
        .enumerate()
        .for_each(|(i, gi)| {
            let yi = params.item(i);
            let (users, ratings, _) = index.item_col(i);
            for (&u, &r) in users.iter().zip(ratings) {
                let yu = params.user(u);
                let e = r - dot(yu, yi);
                for d in 0..f {
                    gi[d] += -e * yu[d] + lambda * yi[d];
                }
            }
        });
    Ok(grad)
}
