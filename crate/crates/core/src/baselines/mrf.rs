use serde::{Deserialize, Serialize};

use super::{home_chains, BaselineError};
use crate::autodiff::argmax;
use crate::metrics_eval::accuracy;
use crate::predictions::{PredictionSet, ProbTable};
use crate::road_graph::RoadChain;

/// Probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-9;

/// Pairwise weight `lambda` and exponent `n` of `λ·|x_i − x_j|^n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrfParams {
    pub lambda: f64,
    pub exponent: u32,
}

impl MrfParams {
    pub fn new(lambda: f64, exponent: u32) -> Result<Self, BaselineError> {
        let p = Self { lambda, exponent };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(BaselineError::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !matches!(self.exponent, 1 | 2) {
            return Err(BaselineError::Config(format!("exponent must be 1 or 2, got {}", self.exponent)));
        }
        Ok(())
    }
}

/// How far apart two class indices are.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelDistance {
    /// `|a − b|`, for ordinal classes such as lane counts.
    Absolute,
    /// 0 when equal, 1 otherwise, for nominal classes.
    Indicator,
}

impl LabelDistance {
    pub fn between(self, a: usize, b: usize) -> f64 {
        match self {
            LabelDistance::Absolute => a.abs_diff(b) as f64,
            LabelDistance::Indicator => f64::from(u8::from(a != b)),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Pairwise {
    params: MrfParams,
    distance: LabelDistance,
}

impl Pairwise {
    fn cost(&self, a: usize, b: usize) -> f64 {
        if self.params.lambda == 0.0 {
            return 0.0;
        }
        self.params.lambda * self.distance.between(a, b).powi(self.params.exponent as i32)
    }
}

/// `−ln max(p, floor)` per vertex and class.
pub fn unaries(table: &ProbTable) -> Vec<Vec<f64>> {
    (0..table.len())
        .map(|v| table.row(v).iter().map(|&p| -p.max(PROB_FLOOR).ln()).collect())
        .collect()
}

/// Energy of one labeling of a chain; a closed chain of three or more
/// vertices also pays for the last-to-first pair.
pub fn chain_energy(
    unary: &[Vec<f64>],
    labels: &[usize],
    closed: bool,
    params: MrfParams,
    distance: LabelDistance,
) -> f64 {
    let pw = Pairwise { params, distance };
    let mut e: f64 = labels.iter().zip(unary).map(|(&l, u)| u[l]).sum();
    e += labels.windows(2).map(|w| pw.cost(w[0], w[1])).sum::<f64>();
    if closed && labels.len() > 2 {
        e += pw.cost(labels[labels.len() - 1], labels[0]);
    }
    e
}

/// Min-sum dynamic program over a path. `first` pins the first label.
/// Returns the labels and the minimum energy of the path (without any
/// closing pair). Ties go to the smallest label.
fn path_dp(unary: &[Vec<f64>], pw: Pairwise, first: Option<usize>, close_to: Option<usize>) -> (Vec<usize>, f64) {
    let n = unary.len();
    let k = unary[0].len();
    let mut cost: Vec<f64> = (0..k)
        .map(|l| match first {
            Some(f) if f != l => f64::INFINITY,
            _ => unary[0][l],
        })
        .collect();
    let mut back = vec![vec![0usize; k]; n];
    for i in 1..n {
        let mut next = vec![0.0; k];
        for l in 0..k {
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for (j, &c) in cost.iter().enumerate() {
                let total = c + pw.cost(j, l);
                if total < best {
                    best = total;
                    arg = j;
                }
            }
            next[l] = best + unary[i][l];
            back[i][l] = arg;
        }
        cost = next;
    }
    let finals: Vec<f64> = (0..k)
        .map(|l| cost[l] + close_to.map_or(0.0, |f| pw.cost(l, f)))
        .collect();
    let mut last = 0;
    for l in 1..k {
        if finals[l] < finals[last] {
            last = l;
        }
    }
    let energy = finals[last];
    let mut labels = vec![0; n];
    labels[n - 1] = last;
    for i in (1..n).rev() {
        labels[i - 1] = back[i][labels[i]];
    }
    (labels, energy)
}

/// Exact minimizer of the chain energy. Closed chains are solved by
/// conditioning on each label of the first vertex.
pub fn chain_min_energy(unary: &[Vec<f64>], closed: bool, params: MrfParams, distance: LabelDistance) -> Vec<usize> {
    if unary.is_empty() {
        return Vec::new();
    }
    let pw = Pairwise { params, distance };
    if !(closed && unary.len() > 2) {
        return path_dp(unary, pw, None, None).0;
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for f in 0..unary[0].len() {
        let (labels, e) = path_dp(unary, pw, Some(f), Some(f));
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, labels));
        }
    }
    best.expect("at least one class").1
}

/// Labels minimizing the chain energy on every chain. A vertex on several
/// chains (a junction) takes the label from the longest of them; vertices
/// on no chain keep their most probable class.
pub fn mrf_infer(table: &ProbTable, chains: &[RoadChain], params: MrfParams, distance: LabelDistance) -> Vec<usize> {
    let unary = unaries(table);
    let mut labels: Vec<usize> = (0..table.len()).map(|v| argmax(table.row(v))).collect();
    let home = home_chains(table.len(), chains);
    for (ci, chain) in chains.iter().enumerate() {
        if chain.is_empty() {
            continue;
        }
        let u: Vec<Vec<f64>> = chain.vertices.iter().map(|&v| unary[v].clone()).collect();
        let best = chain_min_energy(&u, chain.closed, params, distance);
        for (pos, &v) in chain.vertices.iter().enumerate() {
            if home[v].map(|(c, _)| c) == Some(ci) {
                labels[v] = best[pos];
            }
        }
    }
    labels
}

/// One MRF setting per attribute.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrfSettings {
    pub lanes: MrfParams,
    pub road_type: MrfParams,
}

impl Default for MrfSettings {
    fn default() -> Self {
        let p = MrfParams { lambda: 1.0, exponent: 1 };
        Self { lanes: p, road_type: p }
    }
}

/// Post-processes both heads and returns one-hot predictions.
pub fn mrf_predictions(preds: &PredictionSet, chains: &[RoadChain], settings: &MrfSettings) -> PredictionSet {
    let lanes = mrf_infer(&preds.lanes, chains, settings.lanes, LabelDistance::Absolute);
    let types = mrf_infer(&preds.road_type, chains, settings.road_type, LabelDistance::Indicator);
    PredictionSet {
        lanes: ProbTable::one_hot(preds.lanes.classes(), &lanes),
        road_type: ProbTable::one_hot(preds.road_type.classes(), &types),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MrfGrid {
    pub lambdas: Vec<f64>,
    pub exponents: Vec<u32>,
}

impl Default for MrfGrid {
    fn default() -> Self {
        Self {
            lambdas: vec![0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            exponents: vec![1, 2],
        }
    }
}

impl MrfGrid {
    /// Grid points in tie-break order: smallest λ first, then smallest n.
    pub fn points(&self) -> Result<Vec<MrfParams>, BaselineError> {
        let mut pts = Vec::new();
        for &l in &self.lambdas {
            for &n in &self.exponents {
                pts.push(MrfParams::new(l, n)?);
            }
        }
        if pts.is_empty() {
            return Err(BaselineError::Config("empty MRF grid".into()));
        }
        pts.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.exponent.cmp(&b.exponent)));
        pts.dedup();
        Ok(pts)
    }
}

/// One network's validation input for the search.
#[derive(Clone, Copy, Debug)]
pub struct SearchInput<'a> {
    pub probs: &'a ProbTable,
    pub labels: &'a [Option<usize>],
    pub chains: &'a [RoadChain],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub params: MrfParams,
    pub accuracy: f64,
}

/// Tries every grid point and keeps the one with the best pooled
/// validation accuracy; ties go to the earlier point in
/// [`MrfGrid::points`] order. Also returns every point's score.
pub fn mrf_grid_search(
    inputs: &[SearchInput],
    grid: &MrfGrid,
    distance: LabelDistance,
) -> Result<(MrfParams, Vec<GridScore>), BaselineError> {
    let points = grid.points()?;
    let truth: Vec<Option<usize>> = inputs.iter().flat_map(|i| i.labels.iter().copied()).collect();
    let mut scores = Vec::with_capacity(points.len());
    let mut best: Option<GridScore> = None;
    for params in points {
        let pred: Vec<usize> = inputs
            .iter()
            .flat_map(|i| mrf_infer(i.probs, i.chains, params, distance))
            .collect();
        let acc = accuracy(&pred, &truth)?;
        let s = GridScore { params, accuracy: acc };
        if best.is_none_or(|b| acc > b.accuracy) {
            best = Some(s);
        }
        scores.push(s);
    }
    Ok((best.expect("non-empty grid").params, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(unary: &[Vec<f64>], closed: bool, p: MrfParams, d: LabelDistance) -> f64 {
        let n = unary.len();
        let k = unary[0].len();
        let mut labels = vec![0; n];
        let mut best = f64::INFINITY;
        loop {
            best = best.min(chain_energy(unary, &labels, closed, p, d));
            let mut i = 0;
            while i < n && labels[i] == k - 1 {
                labels[i] = 0;
                i += 1;
            }
            if i == n {
                return best;
            }
            labels[i] += 1;
        }
    }

    fn unary_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..=4).prop_flat_map(|k| proptest::collection::vec(proptest::collection::vec(0.0f64..5.0, k), 1..=8))
    }

    proptest! {
        #[test]
        fn dp_matches_enumeration(
            unary in unary_strategy(),
            lambda in 0.0f64..4.0,
            exponent in 1u32..=2,
            closed in any::<bool>(),
            ordinal in any::<bool>(),
        ) {
            let p = MrfParams { lambda, exponent };
            let d = if ordinal { LabelDistance::Absolute } else { LabelDistance::Indicator };
            let labels = chain_min_energy(&unary, closed, p, d);
            let got = chain_energy(&unary, &labels, closed, p, d);
            let want = brute_force(&unary, closed, p, d);
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
        }

        #[test]
        fn never_worse_than_argmax(unary in unary_strategy(), lambda in 0.0f64..4.0) {
            let p = MrfParams { lambda, exponent: 2 };
            let d = LabelDistance::Absolute;
            let greedy: Vec<usize> = unary.iter().map(|u| {
                let neg: Vec<f64> = u.iter().map(|x| -x).collect();
                argmax(&neg)
            }).collect();
            let labels = chain_min_energy(&unary, false, p, d);
            prop_assert!(chain_energy(&unary, &labels, false, p, d) <= chain_energy(&unary, &greedy, false, p, d) + 1e-12);
        }
    }

    fn table(rows: &[Vec<f64>]) -> ProbTable {
        ProbTable::from_rows(rows[0].len(), rows)
    }

    fn chain(n: usize) -> Vec<RoadChain> {
        vec![RoadChain {
            vertices: (0..n).collect(),
            closed: false,
        }]
    }

    #[test]
    fn zero_lambda_is_argmax() {
        let t = table(&[vec![0.2, 0.8], vec![0.9, 0.1], vec![0.3, 0.7]]);
        let p = MrfParams::new(0.0, 2).unwrap();
        assert_eq!(mrf_infer(&t, &chain(3), p, LabelDistance::Indicator), vec![1, 0, 1]);
    }

    #[test]
    fn huge_lambda_makes_chain_constant() {
        let t = table(&[vec![0.2, 0.8], vec![0.9, 0.1], vec![0.3, 0.7], vec![0.4, 0.6]]);
        let p = MrfParams::new(1e6, 1).unwrap();
        assert_eq!(mrf_infer(&t, &chain(4), p, LabelDistance::Indicator), vec![1; 4]);
    }

    #[test]
    fn junction_follows_longest_chain() {
        // Vertex 2 sits on a long chain voting 0 and a short one voting 1.
        let mut rows = vec![vec![0.9, 0.1]; 5];
        rows[2] = vec![0.5, 0.5];
        rows.push(vec![0.05, 0.95]);
        let chains = vec![
            RoadChain { vertices: vec![5, 2], closed: false },
            RoadChain { vertices: vec![0, 1, 2, 3, 4], closed: false },
        ];
        let p = MrfParams::new(5.0, 1).unwrap();
        let labels = mrf_infer(&table(&rows), &chains, p, LabelDistance::Indicator);
        assert_eq!(labels, vec![0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn bad_params_rejected() {
        assert!(MrfParams::new(-1.0, 1).is_err());
        assert!(MrfParams::new(1.0, 3).is_err());
        assert!(MrfGrid { lambdas: vec![], exponents: vec![1] }.points().is_err());
    }

    #[test]
    fn single_point_grid() {
        let t = table(&[vec![0.6, 0.4]]);
        let labels = [Some(0)];
        let c = chain(1);
        let input = [SearchInput { probs: &t, labels: &labels, chains: &c }];
        let grid = MrfGrid { lambdas: vec![2.0], exponents: vec![2] };
        let (p, scores) = mrf_grid_search(&input, &grid, LabelDistance::Absolute).unwrap();
        assert_eq!(p, MrfParams { lambda: 2.0, exponent: 2 });
        assert_eq!(scores.len(), 1);
    }

    #[test]
    fn perfect_predictions_pick_smallest_point() {
        let t = table(&[vec![0.9, 0.1], vec![0.1, 0.9], vec![0.9, 0.1]]);
        let labels = [Some(0), Some(1), Some(0)];
        let c = chain(3);
        let input = [SearchInput { probs: &t, labels: &labels, chains: &c }];
        let (p, _) = mrf_grid_search(&input, &MrfGrid::default(), LabelDistance::Indicator).unwrap();
        assert_eq!(p, MrfParams { lambda: 0.125, exponent: 1 });
    }

    #[test]
    fn smoothing_instance_prefers_larger_lambda() {
        // A long run of class 0 with isolated, mildly confident flips.
        let mut rows = vec![vec![0.7, 0.3]; 20];
        for v in [3, 8, 14] {
            rows[v] = vec![0.4, 0.6];
        }
        let labels = vec![Some(0); 20];
        let c = chain(20);
        let input = [SearchInput { probs: &table(&rows), labels: &labels, chains: &c }];
        let (p, scores) = mrf_grid_search(&input, &MrfGrid::default(), LabelDistance::Indicator).unwrap();
        assert!(p.lambda > 0.125, "{scores:?}");
        assert_eq!(scores.iter().map(|s| s.accuracy).fold(0.0, f64::max), 1.0);
    }
}
