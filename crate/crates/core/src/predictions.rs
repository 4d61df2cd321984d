//! Per-vertex class probabilities for the two attribute heads.

use serde::{Deserialize, Serialize};

use crate::autodiff::{argmax, Tensor};

pub const LANE_CLASSES: usize = 6;
pub const TYPE_CLASSES: usize = 2;

/// Row-major `vertices × classes` probability table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbTable {
    classes: usize,
    data: Vec<f64>,
}

impl ProbTable {
    /// Panics if `data.len()` is not a multiple of `classes`.
    pub fn new(classes: usize, data: Vec<f64>) -> Self {
        assert!(classes > 0 && data.len().is_multiple_of(classes), "ragged probability table");
        Self { classes, data }
    }

    pub fn from_rows(classes: usize, rows: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * classes);
        for r in rows {
            assert_eq!(r.len(), classes, "row width");
            data.extend_from_slice(r);
        }
        Self { classes, data }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        Self::new(t.cols(), t.data().to_vec())
    }

    pub fn uniform(vertices: usize, classes: usize) -> Self {
        Self::new(classes, vec![1.0 / classes as f64; vertices * classes])
    }

    /// One-hot rows for the given class indices.
    pub fn one_hot(classes: usize, labels: &[usize]) -> Self {
        let mut data = vec![0.0; labels.len() * classes];
        for (v, &c) in labels.iter().enumerate() {
            data[v * classes + c] = 1.0;
        }
        Self { classes, data }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, v: usize) -> &[f64] {
        &self.data[v * self.classes..(v + 1) * self.classes]
    }

    pub fn row_mut(&mut self, v: usize) -> &mut [f64] {
        &mut self.data[v * self.classes..(v + 1) * self.classes]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn argmax(&self) -> Vec<usize> {
        (0..self.len()).map(|v| argmax(self.row(v))).collect()
    }

    pub fn select(&self, rows: &[usize]) -> ProbTable {
        let mut data = Vec::with_capacity(rows.len() * self.classes);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        ProbTable::new(self.classes, data)
    }
}

/// Predictions of both attribute heads over the same vertex set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub lanes: ProbTable,
    pub road_type: ProbTable,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    /// Predicted lane counts, 1-based.
    pub fn lane_counts(&self) -> Vec<u8> {
        self.lanes.argmax().into_iter().map(|c| c as u8 + 1).collect()
    }

    pub fn select(&self, rows: &[usize]) -> PredictionSet {
        PredictionSet {
            lanes: self.lanes.select(rows),
            road_type: self.road_type.select(rows),
        }
    }

    /// Rows of every set stacked in order. All sets must agree on class counts.
    pub fn concat(sets: &[PredictionSet]) -> Option<PredictionSet> {
        let first = sets.first()?;
        let (kl, kt) = (first.lanes.classes(), first.road_type.classes());
        if sets.iter().any(|s| s.lanes.classes() != kl || s.road_type.classes() != kt) {
            return None;
        }
        let stack = |f: fn(&PredictionSet) -> &ProbTable| sets.iter().flat_map(|s| f(s).data().iter().copied()).collect();
        Some(PredictionSet {
            lanes: ProbTable::new(kl, stack(|s| &s.lanes)),
            road_type: ProbTable::new(kt, stack(|s| &s.road_type)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(lanes: &[usize], types: &[usize]) -> PredictionSet {
        PredictionSet {
            lanes: ProbTable::one_hot(6, lanes),
            road_type: ProbTable::one_hot(2, types),
        }
    }

    #[test]
    fn concat_stacks_in_order() {
        let all = PredictionSet::concat(&[set(&[0, 5], &[1, 0]), set(&[3], &[1])]).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all.lanes.argmax(), vec![0, 5, 3]);
        assert_eq!(all.road_type.argmax(), vec![1, 0, 1]);
        assert_eq!(all.select(&[2]), set(&[3], &[1]));
    }

    #[test]
    fn concat_rejects_empty_and_mismatched() {
        assert!(PredictionSet::concat(&[]).is_none());
        let odd = PredictionSet {
            lanes: ProbTable::one_hot(4, &[1]),
            road_type: ProbTable::one_hot(2, &[0]),
        };
        assert!(PredictionSet::concat(&[set(&[0], &[0]), odd]).is_none());
    }
}
