use crate::error::{ensure, Result};
use crate::graph::CausalMatrix;

/// `N` series of `T` observations each, stored row-major `[var][time]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    num_vars: usize,
    steps: usize,
    values: Vec<f64>,
    pub var_names: Vec<String>,
    pub replica_id: usize,
    pub seed: u64,
}

impl TimeSeriesDataset {
    pub fn new(rows: Vec<Vec<f64>>, var_names: Vec<String>) -> Result<Self> {
        let num_vars = rows.len();
        ensure!(num_vars >= 1, "dataset needs at least one variable");
        let steps = rows[0].len();
        ensure!(rows.iter().all(|r| r.len() == steps), "all series must have the same length");
        ensure!(var_names.len() == num_vars, "{} names for {} variables", var_names.len(), num_vars);
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        ensure!(values.iter().all(|v| v.is_finite()), "dataset contains non-finite values");
        Ok(Self {
            num_vars,
            steps,
            values,
            var_names,
            replica_id: 0,
            seed: 0,
        })
    }

    /// Names `x0, x1, ...`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let names = (0..rows.len()).map(|i| format!("x{i}")).collect();
        Self::new(rows, names)
    }

    pub fn with_origin(mut self, replica_id: usize, seed: u64) -> Self {
        self.replica_id = replica_id;
        self.seed = seed;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn row(&self, var: usize) -> &[f64] {
        &self.values[var * self.steps..(var + 1) * self.steps]
    }

    pub fn row_mut(&mut self, var: usize) -> &mut [f64] {
        &mut self.values[var * self.steps..(var + 1) * self.steps]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, var: usize, t: usize) -> f64 {
        self.values[var * self.steps + t]
    }
}

/// A contiguous, inclusive range of 1-based time steps with its own adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub t_start: usize,
    pub t_end: usize,
    pub adjacency: CausalMatrix,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.t_end + 1 - self.t_start
    }

    pub fn is_empty(&self) -> bool {
        self.t_end < self.t_start
    }
}

/// Known causal structure of a generated corpus.
#[derive(Clone, Debug, PartialEq)]
pub enum GroundTruth {
    Static(CausalMatrix),
    /// Segments tiling `[1, T]` in order.
    Dynamic(Vec<Segment>),
}

impl GroundTruth {
    pub fn dynamic(segments: Vec<Segment>, steps: usize) -> Result<Self> {
        ensure!(!segments.is_empty(), "dynamic truth needs at least one segment");
        let n = segments[0].adjacency.n();
        let mut expected = 1;
        for s in &segments {
            ensure!(s.t_start == expected, "segment starting at {} leaves a gap or overlap (expected {expected})", s.t_start);
            ensure!(s.t_end >= s.t_start, "segment [{}, {}] is empty", s.t_start, s.t_end);
            ensure!(s.adjacency.n() == n, "segments disagree on the number of variables");
            expected = s.t_end + 1;
        }
        ensure!(expected == steps + 1, "segments end at {} but the series has {steps} steps", expected - 1);
        Ok(Self::Dynamic(segments))
    }

    pub fn num_vars(&self) -> usize {
        match self {
            GroundTruth::Static(m) => m.n(),
            GroundTruth::Dynamic(segs) => segs[0].adjacency.n(),
        }
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self, GroundTruth::Dynamic(_))
    }

    /// Adjacency in force at 1-based time `t`.
    pub fn at(&self, t: usize) -> Option<&CausalMatrix> {
        match self {
            GroundTruth::Static(m) => Some(m),
            GroundTruth::Dynamic(segs) => segs.iter().find(|s| s.t_start <= t && t <= s.t_end).map(|s| &s.adjacency),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_rejects_ragged_and_nonfinite() {
        assert!(TimeSeriesDataset::from_rows(vec![vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(TimeSeriesDataset::from_rows(vec![vec![1.0, f64::NAN]]).is_err());
        let d = TimeSeriesDataset::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!((d.num_vars(), d.steps()), (2, 2));
        assert_eq!(d.row(1), &[3.0, 4.0]);
        assert_eq!(d.var_names, vec!["x0", "x1"]);
    }

    #[test]
    fn dynamic_truth_must_tile() {
        let m = CausalMatrix::zeros(2);
        let seg = |a, b| Segment {
            t_start: a,
            t_end: b,
            adjacency: m.clone(),
        };
        assert!(GroundTruth::dynamic(vec![seg(1, 5), seg(6, 10)], 10).is_ok());
        assert!(GroundTruth::dynamic(vec![seg(1, 5), seg(5, 10)], 10).is_err());
        assert!(GroundTruth::dynamic(vec![seg(1, 5), seg(7, 10)], 10).is_err());
        assert!(GroundTruth::dynamic(vec![seg(1, 5)], 10).is_err());
        let g = GroundTruth::dynamic(vec![seg(1, 5), seg(6, 10)], 10).unwrap();
        assert!(g.at(6).is_some() && g.at(11).is_none());
    }
}
