use ndarray::Array2;

use super::ObjectiveError;
use crate::sampling::BatchIndex;

/// Soft neighborhood weights over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodMatrix {
    /// Unnormalised `beta / (beta + |dt|)` for neighbours, else 0.
    pub raw: Array2<f64>,
    /// `raw` divided by its row sums.
    pub weights: Array2<f64>,
    pub indicator: Array2<bool>,
}

impl NeighborhoodMatrix {
    pub fn len(&self) -> usize {
        self.raw.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.nrows() == 0
    }

    /// Identity neighborhood: every sample is only its own neighbour.
    pub fn identity(k: usize) -> Self {
        Self {
            raw: Array2::eye(k),
            weights: Array2::eye(k),
            indicator: Array2::from_shape_fn((k, k), |(l, m)| l == m),
        }
    }

    /// Builds weights and indicator from an arbitrary nonnegative `raw`.
    pub fn from_raw(raw: Array2<f64>) -> Result<Self, ObjectiveError> {
        if !raw.is_square() {
            return Err(ObjectiveError::Shape(format!("neighborhood must be square, got {:?}", raw.dim())));
        }
        if raw.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(ObjectiveError::Config("neighborhood weights must be finite and nonnegative".into()));
        }
        let mut weights = raw.clone();
        for (l, mut row) in weights.outer_iter_mut().enumerate() {
            let total: f64 = row.sum();
            if total <= 0.0 {
                return Err(ObjectiveError::Config(format!("neighborhood row {l} is all zero")));
            }
            row.mapv_inplace(|v| v / total);
        }
        let indicator = raw.mapv(|v| v != 0.0);
        Ok(Self { raw, weights, indicator })
    }
}

/// Pairwise weight between two batch samples.
pub fn soft_weight(a: &BatchIndex, b: &BatchIndex, beta: f64) -> f64 {
    if a.stay_index == b.stay_index && a.note_index.abs_diff(b.note_index) <= 1 {
        beta / (beta + (b.target_time - a.target_time).abs())
    } else {
        0.0
    }
}

pub fn soft_neighborhood(indices: &[BatchIndex], beta: f64) -> Result<NeighborhoodMatrix, ObjectiveError> {
    if !(beta >= 1.0) || beta.is_infinite() {
        return Err(ObjectiveError::Config(format!("beta must be a finite value >= 1, got {beta}")));
    }
    if indices.is_empty() {
        return Err(ObjectiveError::BatchTooSmall { k: 0, min: 1 });
    }
    let k = indices.len();
    let raw = Array2::from_shape_fn((k, k), |(l, m)| soft_weight(&indices[l], &indices[m], beta));
    NeighborhoodMatrix::from_raw(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn idx(i: usize, j: usize, t: f64) -> BatchIndex {
        BatchIndex {
            stay_index: i,
            note_index: j,
            target_time: t,
        }
    }

    #[test]
    fn self_weight_is_one() {
        for beta in [1.0, 2.0, 17.5, 1e6] {
            let n = soft_neighborhood(&[idx(0, 0, 3.3)], beta).unwrap();
            assert_eq!(n.raw[[0, 0]], 1.0);
        }
    }

    #[test]
    fn adjacent_pair_decays_with_time() {
        let n = soft_neighborhood(&[idx(0, 3, 10.0), idx(0, 4, 12.0)], 2.0).unwrap();
        assert_eq!(n.raw[[0, 1]], 0.5);
        assert_eq!(n.raw[[1, 0]], 0.5);
    }

    #[test]
    fn row_normalisation() {
        let n = NeighborhoodMatrix::from_raw(array![[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!((n.weights[[0, 0]] - 2.0 / 3.0).abs() < 1e-15);
        assert!((n.weights[[0, 1]] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(n.weights[[0, 2]], 0.0);
        assert_eq!(n.indicator.row(0).to_vec(), vec![true, true, false]);
    }

    #[test]
    fn other_stays_and_distant_notes_are_not_neighbours() {
        let n = soft_neighborhood(&[idx(0, 0, 5.0), idx(1, 0, 5.0), idx(0, 2, 5.0)], 2.0).unwrap();
        assert_eq!(n.raw[[0, 1]], 0.0);
        assert_eq!(n.raw[[0, 2]], 0.0);
        assert_eq!(n.indicator, Array2::from_shape_fn((3, 3), |(l, m)| l == m));
    }

    #[test]
    fn beta_below_one_is_rejected() {
        assert!(soft_neighborhood(&[idx(0, 0, 0.0)], 0.5).is_err());
    }
}
