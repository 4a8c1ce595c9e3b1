//! k-nearest-neighbor regression under Minkowski distances. The building
//! block for the standalone kNN baseline and for the Coreg committee.

use alloc::vec::Vec;


use crate::linalg::Matrix;

use super::BaselineError;

/// `(Σ|aᵢ−bᵢ|^p)^(1/p)` for order `p ≥ 1`.
pub fn minkowski_distance(a: &[f64], b: &[f64], order: f64) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs().powf(order))
        .sum();
    s.powf(1.0 / order)
}

/// Mean target of the `k` nearest training rows under the given Minkowski
/// order; distance ties break toward the lower row index.
pub fn knn_predict(
    train_x: &Matrix,
    train_y: &[f64],
    query: &[f64],
    k: usize,
    order: f64,
) -> Result<f64, BaselineError> {
    let n = train_x.rows();
    if n == 0 {
        return Err(BaselineError::EmptyTrainingSet);
    }
    if k == 0 || k > n {
        return Err(BaselineError::InvalidNeighborCount { k, available: n });
    }
    let mut scored: Vec<(f64, usize)> = (0..n)
        .map(|i| (minkowski_distance(train_x.row(i), query, order), i))
        .collect();
    scored.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(scored[..k].iter().map(|&(_, i)| train_y[i]).sum::<f64>() / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_neighbors_gives_global_mean() {
        let x = Matrix::from_rows(&[&[0.0], &[1.0], &[2.0]]);
        let y = [1.0, 2.0, 6.0];
        let p = knn_predict(&x, &y, &[0.5], 3, 2.0).unwrap();
        assert!((p - 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_match_with_k1() {
        let x = Matrix::from_rows(&[&[0.0, 1.0], &[2.0, 3.0]]);
        let y = [5.0, -5.0];
        let p = knn_predict(&x, &y, &[2.0, 3.0], 1, 2.0).unwrap();
        assert_eq!(p, -5.0);
    }

    #[test]
    fn hand_ranked_neighbors() {
        // distances from 0.9: 0.9, 0.1, 1.1 -> two nearest carry labels 1, 0
        let x = Matrix::from_rows(&[&[0.0], &[1.0], &[2.0]]);
        let y = [0.0, 1.0, 2.0];
        let p = knn_predict(&x, &y, &[0.9], 2, 2.0).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tie_breaks_toward_lower_index() {
        let x = Matrix::from_rows(&[&[1.0], &[-1.0], &[1.0]]);
        let y = [10.0, 20.0, 30.0];
        // all at distance 1 from the origin: k=1 picks index 0
        let p = knn_predict(&x, &y, &[0.0], 1, 2.0).unwrap();
        assert_eq!(p, 10.0);
    }

    #[test]
    fn rejects_empty_and_bad_k() {
        let x = Matrix::zeros(0, 1);
        assert!(matches!(
            knn_predict(&x, &[], &[0.0], 1, 2.0),
            Err(BaselineError::EmptyTrainingSet)
        ));
        let x = Matrix::from_rows(&[&[0.0]]);
        assert!(matches!(
            knn_predict(&x, &[1.0], &[0.0], 2, 2.0),
            Err(BaselineError::InvalidNeighborCount { .. })
        ));
    }

    #[test]
    fn minkowski_orders_differ() {
        let a = [0.0, 0.0];
        let b = [3.0, 4.0];
        assert!((minkowski_distance(&a, &b, 2.0) - 5.0).abs() < 1e-12);
        let d5 = minkowski_distance(&a, &b, 5.0);
        assert!(d5 < 5.0 && d5 > 4.0);
    }
}
