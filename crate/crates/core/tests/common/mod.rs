//! Shared test fixtures: random small instances and dense oracles built
//! without touching the matrix-free code paths.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sslf::dataset::InteractionIndex;
use sslf::model::ParamVector;

pub struct Instance {
    pub params: ParamVector,
    pub index: InteractionIndex,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random instance with `|U|, |I| <= 5`, `f <= 3`, unit-scale factors and
/// at least one observed entry.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n_users = rng.gen_range(1..=5);
    let n_items = rng.gen_range(1..=5);
    let f = rng.gen_range(1..=3);
    random_instance_with(rng, n_users, n_items, f, 0.6)
}

pub fn random_instance_with(
    rng: &mut ChaCha8Rng,
    n_users: usize,
    n_items: usize,
    f: usize,
    density: f64,
) -> Instance {
    let mut entries = Vec::new();
    for u in 0..n_users {
        for i in 0..n_items {
            if rng.gen::<f64>() < density {
                entries.push((u, i, rng.gen_range(1.0..5.0)));
            }
        }
    }
    if entries.is_empty() {
        entries.push((0, 0, 3.0));
    }
    let index = InteractionIndex::from_entries(n_users, n_items, entries).unwrap();
    let p = (n_users + n_items) * f;
    let values = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let params = ParamVector::from_values(n_users, n_items, f, values).unwrap();
    Instance { params, index }
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Row-major dense matrix.
#[derive(Clone, Debug)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.at(r, c) * x[c]).sum())
            .collect()
    }

    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.at(r, c) * y[r]).sum())
            .collect()
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// Explicit `|K| x p` Jacobian of the predictions, rows in canonical order.
/// Built from the derivative of `y_u . y_i` directly.
pub fn dense_jacobian(params: &ParamVector, index: &InteractionIndex) -> Dense {
    let f = params.f();
    let p = params.len();
    let mut j = Dense::zeros(index.len(), p);
    let nu = params.n_users();
    let mut row = 0;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for u in 0..index.n_users() {
        for i in 0..index.n_items() {
            if index.user_row(u).0.contains(&i) {
                pairs.push((u, i));
            }
        }
    }
    for (u, i) in pairs {
        for d in 0..f {
            let yu = params.values()[u * f + d];
            let yi = params.values()[nu * f + i * f + d];
            j.set(row, u * f + d, yi);
            j.set(row, nu * f + i * f + d, yu);
        }
        row += 1;
    }
    j
}

/// Dense `J^T J + λ D + γ I`.
pub fn dense_damped_matrix(
    params: &ParamVector,
    index: &InteractionIndex,
    lambda: f64,
    gamma: f64,
) -> Dense {
    let j = dense_jacobian(params, index);
    let p = params.len();
    let f = params.f();
    let nu = params.n_users();
    let mut g = Dense::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            let s: f64 = (0..j.rows).map(|r| j.at(r, a) * j.at(r, b)).sum();
            g.set(a, b, s);
        }
    }
    for u in 0..nu {
        for d in 0..f {
            let k = u * f + d;
            g.add(k, k, lambda * index.user_degree(u) as f64 + gamma);
        }
    }
    for i in 0..params.n_items() {
        for d in 0..f {
            let k = nu * f + i * f + d;
            g.add(k, k, lambda * index.item_degree(i) as f64 + gamma);
        }
    }
    g
}

/// Direct objective evaluation straight from the definition.
pub fn objective_oracle(params: &ParamVector, index: &InteractionIndex, lambda: f64) -> f64 {
    let mut e = 0.0;
    for u in 0..index.n_users() {
        let (items, ratings) = index.user_row(u);
        for (&i, &r) in items.iter().zip(ratings) {
            let yu = params.user(u);
            let yi = params.item(i);
            let pred: f64 = yu.iter().zip(yi).map(|(a, b)| a * b).sum();
            let nu2: f64 = yu.iter().map(|a| a * a).sum();
            let ni2: f64 = yi.iter().map(|a| a * a).sum();
            e += 0.5 * (r - pred).powi(2) + 0.5 * lambda * (nu2 + ni2);
        }
    }
    e
}

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|k| {
            work[k] = x[k] + h;
            let plus = f(&work);
            work[k] = x[k] - h;
            let minus = f(&work);
            work[k] = x[k];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Random SPD matrix `M M^T + shift I` of size `n`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Dense {
    let m: Vec<f64> = random_vector(rng, n * n);
    let mut a = Dense::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let s: f64 = (0..n).map(|k| m[r * n + k] * m[c * n + k]).sum();
            a.set(r, c, s + if r == c { shift } else { 0.0 });
        }
    }
    a
}

/// Low-rank matrix `R = A B^T` with entries drawn so ratings are O(1).
pub fn low_rank_matrix(rng: &mut ChaCha8Rng, n_users: usize, n_items: usize, rank: usize) -> Vec<(usize, usize, f64)> {
    let a: Vec<f64> = (0..n_users * rank).map(|_| rng.gen_range(0.2..1.2)).collect();
    let b: Vec<f64> = (0..n_items * rank).map(|_| rng.gen_range(0.2..1.2)).collect();
    let mut out = Vec::new();
    for u in 0..n_users {
        for i in 0..n_items {
            let r: f64 = (0..rank).map(|k| a[u * rank + k] * b[i * rank + k]).sum();
            out.push((u, i, r));
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
