//! Matrix-free curvature operators for the bilinear prediction map
//! `(u, i) ↦ y_u · y_i`.
//!
//! `J` is the `|K| × p` Jacobian of the predictions over the observed entries.
//! Row `(u, i)` has `y_i` in the columns of `y_u` and `y_u` in the columns of
//! `y_i`, so
//!
//! ```text
//! (J v)_(u,i)      = Σ_k v_u,k y_i,k + y_u,k v_i,k
//! (J^T s)_(u,d)    = Σ_{i∈K_u} s_(u,i) y_i,d
//! (J^T s)_(i,d)    = Σ_{u∈K_i} s_(u,i) y_u,d
//! ```
//!
//! The damped operator is `J^T J + λ D + γ I`, with `D` diagonal holding
//! `|K_u|` (resp. `|K_i|`) on every coordinate of that user (item). No `p × p`
//! matrix is ever formed; one application costs `Θ(|K| f)`.

use rayon::prelude::*;

use crate::cg::LinearOperator;
use crate::dataset::InteractionIndex;
use crate::error::{Error, Result};
use crate::model::ParamVector;
use crate::vector::dot;

fn check_k(index: &InteractionIndex, s: &[f64]) -> Result<()> {
    if s.len() != index.len() {
        return Err(Error::DimensionMismatch {
            expected: index.len(),
            found: s.len(),
        });
    }
    Ok(())
}

/// `J v`, one entry per observed pair in canonical (user-major) order.
pub fn jacobian_vector_product(
    params: &ParamVector,
    index: &InteractionIndex,
    v: &[f64],
) -> Result<Vec<f64>> {
    params.check_index(index)?;
    params.check_len(v)?;
    Ok(jvp_unchecked(params, index, v))
}

fn jvp_unchecked(params: &ParamVector, index: &InteractionIndex, v: &[f64]) -> Vec<f64> {
    let f = params.f();
    let off = params.item_offset();
    (0..index.n_users())
        .into_par_iter()
        .flat_map_iter(|u| {
            let yu = params.user(u);
            let vu = &v[u * f..(u + 1) * f];
            let (items, _) = index.user_row(u);
            items.iter().map(move |&i| {
                let yi = params.item(i);
                let vi = &v[off + i * f..off + (i + 1) * f];
                dot(vu, yi) + dot(yu, vi)
            })
        })
        .collect()
}

/// `J^T s` for `s` indexed by canonical entry position.
pub fn jacobian_transpose_vector_product(
    params: &ParamVector,
    index: &InteractionIndex,
    s: &[f64],
) -> Result<Vec<f64>> {
    params.check_index(index)?;
    check_k(index, s)?;
    let mut out = vec![0.0; params.len()];
    scatter_transpose(params, index, s, &mut out, |_, _| 0.0);
    Ok(out)
}

/// Writes `(J^T s)_j + diag(j) * ...` into `out` block by block.
///
/// `diag_term(coord, degree)` supplies the additive diagonal contribution
/// for flat coordinate `coord` of a factor observed `degree` times.
fn scatter_transpose<F>(
    params: &ParamVector,
    index: &InteractionIndex,
    s: &[f64],
    out: &mut [f64],
    diag_term: F,
) where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let f = params.f().max(1);
    let off = params.item_offset();
    let (user_out, item_out) = out.split_at_mut(off);

    user_out.par_chunks_mut(f).enumerate().for_each(|(u, hu)| {
        let (items, _) = index.user_row(u);
        let s_u = &s[index.user_range(u)];
        for (&i, &s_ui) in items.iter().zip(s_u) {
            let yi = params.item(i);
            for d in 0..hu.len() {
                hu[d] += s_ui * yi[d];
            }
        }
        let deg = index.user_degree(u);
        for (d, h) in hu.iter_mut().enumerate() {
            *h += diag_term(u * f + d, deg);
        }
    });
    item_out.par_chunks_mut(f).enumerate().for_each(|(i, hi)| {
        let (users, _, pos) = index.item_col(i);
        for (&u, &p) in users.iter().zip(pos) {
            let yu = params.user(u);
            let s_ui = s[p];
            for d in 0..hi.len() {
                hi[d] += s_ui * yu[d];
            }
        }
        let deg = index.item_degree(i);
        for (d, h) in hi.iter_mut().enumerate() {
            *h += diag_term(off + i * f + d, deg);
        }
    });
}

/// Gauss-Newton product `J^T J v`.
pub fn gauss_newton_vector_product(
    params: &ParamVector,
    index: &InteractionIndex,
    v: &[f64],
) -> Result<Vec<f64>> {
    let s = jacobian_vector_product(params, index, v)?;
    jacobian_transpose_vector_product(params, index, &s)
}

/// The damped, regularized Gauss-Newton operator `J^T J + λ D + γ I`
/// evaluated at a fixed parameter point.
#[derive(Debug, Clone, Copy)]
pub struct HvpOperator<'a> {
    params: &'a ParamVector,
    index: &'a InteractionIndex,
    lambda: f64,
    gamma: f64,
}

impl<'a> HvpOperator<'a> {
    pub fn new(
        params: &'a ParamVector,
        index: &'a InteractionIndex,
        lambda: f64,
        gamma: f64,
    ) -> Result<Self> {
        params.check_index(index)?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "damping must be finite and > 0, got {gamma}"
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(Self {
            params,
            index,
            lambda,
            gamma,
        })
    }

    pub fn params(&self) -> &ParamVector {
        self.params
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.params.check_len(v)?;
        let mut out = vec![0.0; v.len()];
        self.apply_unchecked(v, &mut out);
        Ok(out)
    }

    // One pass computes s = J v per observed pair; both blocks then read the
    // same s while adding their diagonal terms.
    fn apply_unchecked(&self, v: &[f64], out: &mut [f64]) {
        let s = jvp_unchecked(self.params, self.index, v);
        out.iter_mut().for_each(|x| *x = 0.0);
        let (lambda, gamma) = (self.lambda, self.gamma);
        scatter_transpose(self.params, self.index, &s, out, |j, deg| {
            (lambda * deg as f64 + gamma) * v[j]
        });
    }
}

impl LinearOperator for HvpOperator<'_> {
    fn dim(&self) -> usize {
        self.params.len()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.apply_unchecked(x, y);
    }
}

/// `(J^T J + λ D + γ I) v` for the operator `op`.
pub fn damped_hvp(op: &HvpOperator<'_>, v: &[f64]) -> Result<Vec<f64>> {
    op.apply(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_pair() -> (ParamVector, InteractionIndex) {
        let params = ParamVector::from_values(1, 1, 1, vec![2.0, 3.0]).unwrap();
        let index = InteractionIndex::from_entries(1, 1, vec![(0, 0, 1.0)]).unwrap();
        (params, index)
    }

    #[test]
    fn jvp_examples() {
        let (p, k) = single_pair();
        assert_eq!(jacobian_vector_product(&p, &k, &[0.0, 0.0]).unwrap(), vec![0.0]);
        assert_eq!(jacobian_vector_product(&p, &k, &[1.0, 1.0]).unwrap(), vec![5.0]);
        assert!(matches!(
            jacobian_vector_product(&p, &k, &[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn jtvp_examples() {
        let (p, k) = single_pair();
        assert_eq!(
            jacobian_transpose_vector_product(&p, &k, &[0.0]).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            jacobian_transpose_vector_product(&p, &k, &[1.0]).unwrap(),
            vec![3.0, 2.0]
        );
        assert!(jacobian_transpose_vector_product(&p, &k, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gnvp_example() {
        let (p, k) = single_pair();
        assert_eq!(
            gauss_newton_vector_product(&p, &k, &[1.0, 1.0]).unwrap(),
            vec![15.0, 10.0]
        );
        assert_eq!(
            gauss_newton_vector_product(&p, &k, &[0.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn damped_hvp_example() {
        let (p, k) = single_pair();
        let op = HvpOperator::new(&p, &k, 0.1, 0.5).unwrap();
        let h = damped_hvp(&op, &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(h[0], 15.6, epsilon = 1e-12);
        assert_abs_diff_eq!(h[1], 10.6, epsilon = 1e-12);
    }

    #[test]
    fn unobserved_factor_sees_pure_damping() {
        // user 1 has no observed entries
        let p = ParamVector::from_values(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let k = InteractionIndex::from_entries(2, 1, vec![(0, 0, 1.0)]).unwrap();
        let op = HvpOperator::new(&p, &k, 0.0, 1.0).unwrap();
        let v = [0.3, -0.2, 0.7, -1.1, 0.5, 0.25];
        let h = damped_hvp(&op, &v).unwrap();
        assert_eq!(&h[2..4], &v[2..4]);
    }

    #[test]
    fn operator_rejects_nonpositive_damping() {
        let (p, k) = single_pair();
        assert!(HvpOperator::new(&p, &k, 0.0, 0.0).is_err());
        assert!(HvpOperator::new(&p, &k, -1.0, 1.0).is_err());
    }
}
