use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::InteractionIndex;
use crate::error::{Error, Result};
use crate::model::{predict_unchecked, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    pub rmse: f64,
    pub n_evaluated: usize,
}

/// Root mean square error of raw predictions over `eval_set`.
pub fn rmse(params: &ParamVector, eval_set: &InteractionIndex) -> Result<EvalResult> {
    rmse_with_clamp(params, eval_set, None)
}

/// RMSE with predictions optionally clamped to `[lo, hi]` first.
pub fn rmse_with_clamp(
    params: &ParamVector,
    eval_set: &InteractionIndex,
    clamp: Option<(f64, f64)>,
) -> Result<EvalResult> {
    if eval_set.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    params.check_index(eval_set)?;
    let per_user: Vec<f64> = (0..eval_set.n_users())
        .into_par_iter()
        .map(|u| {
            let (items, ratings) = eval_set.user_row(u);
            items
                .iter()
                .zip(ratings)
                .map(|(&i, &r)| {
                    let mut pred = predict_unchecked(params, u, i);
                    if let Some((lo, hi)) = clamp {
                        pred = pred.clamp(lo, hi);
                    }
                    (r - pred) * (r - pred)
                })
                .sum()
        })
        .collect();
    let sse: f64 = per_user.iter().sum();
    let n = eval_set.len();
    Ok(EvalResult {
        rmse: (sse / n as f64).sqrt(),
        n_evaluated: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_predictions() {
        let p = ParamVector::from_values(1, 2, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let k = InteractionIndex::from_entries(1, 2, vec![(0, 0, 2.0), (0, 1, 3.0)]).unwrap();
        assert_eq!(rmse(&p, &k).unwrap().rmse, 0.0);
    }

    #[test]
    fn zero_params() {
        let p = ParamVector::zeros(2, 1, 3);
        let k = InteractionIndex::from_entries(2, 1, vec![(0, 0, 3.0), (1, 0, 4.0)]).unwrap();
        let r = rmse(&p, &k).unwrap();
        assert_abs_diff_eq!(r.rmse, 12.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(r.n_evaluated, 2);
    }

    #[test]
    fn single_entry_residual() {
        let p = ParamVector::from_values(1, 1, 1, vec![1.0, 1.0]).unwrap();
        let k = InteractionIndex::from_entries(1, 1, vec![(0, 0, 3.0)]).unwrap();
        assert_eq!(rmse(&p, &k).unwrap().rmse, 2.0);
    }

    #[test]
    fn clamping_is_opt_in() {
        let p = ParamVector::from_values(1, 1, 1, vec![3.0, 3.0]).unwrap();
        let k = InteractionIndex::from_entries(1, 1, vec![(0, 0, 5.0)]).unwrap();
        assert_eq!(rmse(&p, &k).unwrap().rmse, 4.0);
        assert_eq!(rmse_with_clamp(&p, &k, Some((1.0, 5.0))).unwrap().rmse, 0.0);
    }

    #[test]
    fn empty_set_is_an_error() {
        let p = ParamVector::zeros(1, 1, 1);
        let k = InteractionIndex::from_entries(1, 1, vec![]).unwrap();
        assert!(matches!(rmse(&p, &k), Err(Error::EmptyEvalSet)));
    }
}
