//! Accuracy, absolute lane error, confusion matrices and scheme comparison
//! tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictions::PredictionSet;
use crate::road_graph::RoadChain;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no unmasked vertices to evaluate")]
    EmptyMask,
    #[error("length mismatch: {0} predictions for {1} labels")]
    Length(usize, usize),
    #[error("scheme {scheme} covers {got} vertices, expected {expected}")]
    Coverage {
        scheme: String,
        expected: usize,
        got: usize,
    },
    #[error("no schemes to compare")]
    NoSchemes,
}

fn check_len(pred: usize, labels: usize) -> Result<(), MetricsError> {
    if pred != labels {
        return Err(MetricsError::Length(pred, labels));
    }
    Ok(())
}

/// Fraction of unmasked (`Some`) labels matched exactly.
pub fn accuracy(pred: &[usize], labels: &[Option<usize>]) -> Result<f64, MetricsError> {
    check_len(pred.len(), labels.len())?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, l) in pred.iter().zip(labels) {
        if let Some(l) = l {
            total += 1;
            hit += usize::from(p == l);
        }
    }
    if total == 0 {
        return Err(MetricsError::EmptyMask);
    }
    Ok(hit as f64 / total as f64)
}

/// Mean absolute lane error over unmasked vertices. Lane values may be
/// counts or zero-based class indices; the difference is the same.
pub fn ale(pred: &[usize], labels: &[Option<usize>]) -> Result<f64, MetricsError> {
    check_len(pred.len(), labels.len())?;
    let (mut err, mut total) = (0usize, 0usize);
    for (&p, l) in pred.iter().zip(labels) {
        if let Some(l) = *l {
            total += 1;
            err += p.abs_diff(l);
        }
    }
    if total == 0 {
        return Err(MetricsError::EmptyMask);
    }
    Ok(err as f64 / total as f64)
}

/// Relative reduction `(base − new) / base`, as a percentage.
pub fn reduction_percent(base: f64, new: f64) -> f64 {
    (base - new) / base * 100.0
}

/// `counts[true][pred]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn build(classes: usize, pred: &[usize], labels: &[Option<usize>]) -> Self {
        let mut counts = vec![vec![0u64; classes]; classes];
        for (&p, l) in pred.iter().zip(labels) {
            if let Some(l) = *l {
                counts[l][p] += 1;
            }
        }
        Self { classes, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let t = self.total();
        (t > 0).then(|| self.trace() as f64 / t as f64)
    }

    /// Mean `|true − pred|` over the matrix, treating classes as ordinal.
    pub fn mean_abs_error(&self) -> Option<f64> {
        let t = self.total();
        let e: u64 = (0..self.classes)
            .flat_map(|i| (0..self.classes).map(move |j| (i, j)))
            .map(|(i, j)| self.counts[i][j] * i.abs_diff(j) as u64)
            .sum();
        (t > 0).then(|| e as f64 / t as f64)
    }
}

/// Metrics over one vertex subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetMetrics {
    pub name: String,
    pub lane_vertices: usize,
    pub lane_accuracy: Option<f64>,
    pub type_accuracy: Option<f64>,
    pub ale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: String,
    pub lane_accuracy: f64,
    pub type_accuracy: f64,
    pub ale: f64,
    pub lane_confusion: Confusion,
    pub type_confusion: Confusion,
    pub subsets: Vec<SubsetMetrics>,
}

/// Ground truth and named vertex subsets shared by every scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalLabels {
    pub lanes: Vec<Option<usize>>,
    pub road_type: Vec<Option<usize>>,
    /// `(name, membership)` pairs, e.g. occluded vs clean vertices.
    pub subsets: Vec<(String, Vec<bool>)>,
}

impl EvalLabels {
    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    /// Vertices of every part stacked in order. Subsets are matched by name;
    /// a subset missing from some part counts as empty there.
    pub fn concat(parts: &[EvalLabels]) -> EvalLabels {
        let mut names: Vec<String> = Vec::new();
        for p in parts {
            for (n, _) in &p.subsets {
                if !names.contains(n) {
                    names.push(n.clone());
                }
            }
        }
        let subsets = names
            .into_iter()
            .map(|name| {
                let member = parts
                    .iter()
                    .flat_map(|p| match p.subsets.iter().find(|(n, _)| *n == name) {
                        Some((_, m)) => m.clone(),
                        None => vec![false; p.len()],
                    })
                    .collect();
                (name, member)
            })
            .collect();
        EvalLabels {
            lanes: parts.iter().flat_map(|p| p.lanes.iter().copied()).collect(),
            road_type: parts.iter().flat_map(|p| p.road_type.iter().copied()).collect(),
            subsets,
        }
    }

    /// Labels with everything outside `member` masked out.
    fn restricted(labels: &[Option<usize>], member: &[bool]) -> Vec<Option<usize>> {
        labels.iter().zip(member).map(|(l, &m)| if m { *l } else { None }).collect()
    }
}

/// Scores one prediction set. Class indices are zero-based.
pub fn evaluate(scheme: &str, pred: &PredictionSet, labels: &EvalLabels) -> Result<EvalReport, MetricsError> {
    if pred.len() != labels.len() || pred.road_type.len() != labels.len() {
        return Err(MetricsError::Coverage {
            scheme: scheme.to_string(),
            expected: labels.len(),
            got: pred.len(),
        });
    }
    let lane_pred = pred.lanes.argmax();
    let type_pred = pred.road_type.argmax();
    let subsets = labels
        .subsets
        .iter()
        .map(|(name, member)| {
            let l = EvalLabels::restricted(&labels.lanes, member);
            let t = EvalLabels::restricted(&labels.road_type, member);
            SubsetMetrics {
                name: name.clone(),
                lane_vertices: l.iter().flatten().count(),
                lane_accuracy: accuracy(&lane_pred, &l).ok(),
                type_accuracy: accuracy(&type_pred, &t).ok(),
                ale: ale(&lane_pred, &l).ok(),
            }
        })
        .collect();
    Ok(EvalReport {
        scheme: scheme.to_string(),
        lane_accuracy: accuracy(&lane_pred, &labels.lanes)?,
        type_accuracy: accuracy(&type_pred, &labels.road_type)?,
        ale: ale(&lane_pred, &labels.lanes)?,
        lane_confusion: Confusion::build(pred.lanes.classes(), &lane_pred, &labels.lanes),
        type_confusion: Confusion::build(pred.road_type.classes(), &type_pred, &labels.road_type),
        subsets,
    })
}

/// One scheme's row, with gains relative to the first scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub report: EvalReport,
    /// Accuracy-point differences (`100·(new − base)`); `None` on the base row.
    pub lane_gain: Option<f64>,
    pub type_gain: Option<f64>,
    /// `100·(base − new)/base`; `None` on the base row or when base ALE is 0.
    pub ale_reduction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Builds the comparison table from pre-computed reports; the first report
/// is the reference row.
pub fn compare_reports(reports: Vec<EvalReport>) -> Result<Comparison, MetricsError> {
    let base = reports.first().ok_or(MetricsError::NoSchemes)?.clone();
    let rows = reports
        .into_iter()
        .enumerate()
        .map(|(i, report)| {
            let (lane_gain, type_gain, ale_reduction) = if i == 0 {
                (None, None, None)
            } else {
                (
                    Some(100.0 * (report.lane_accuracy - base.lane_accuracy)),
                    Some(100.0 * (report.type_accuracy - base.type_accuracy)),
                    (base.ale > 0.0).then(|| reduction_percent(base.ale, report.ale)),
                )
            };
            ComparisonRow {
                report,
                lane_gain,
                type_gain,
                ale_reduction,
            }
        })
        .collect();
    Ok(Comparison { rows })
}

/// Scores every scheme against the same labels and compares them.
pub fn compare_report(schemes: &[(String, PredictionSet)], labels: &EvalLabels) -> Result<Comparison, MetricsError> {
    let reports = schemes
        .iter()
        .map(|(name, p)| evaluate(name, p, labels))
        .collect::<Result<Vec<_>, _>>()?;
    compare_reports(reports)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or(String::new(), |x| format!("{x:.digits$}"))
}

impl Comparison {
    fn subset_names(&self) -> Vec<String> {
        self.rows
            .first()
            .map(|r| r.report.subsets.iter().map(|s| s.name.clone()).collect())
            .unwrap_or_default()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "scheme",
            "lane_accuracy",
            "type_accuracy",
            "ale",
            "lane_gain_pts",
            "type_gain_pts",
            "ale_reduction_pct",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for s in self.subset_names() {
            h.push(format!("{s}_lane_accuracy"));
            h.push(format!("{s}_type_accuracy"));
            h.push(format!("{s}_ale"));
        }
        h
    }

    pub fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let rep = &r.report;
                let mut rec = vec![
                    rep.scheme.clone(),
                    format!("{:.4}", rep.lane_accuracy),
                    format!("{:.4}", rep.type_accuracy),
                    format!("{:.4}", rep.ale),
                    opt(r.lane_gain, 1),
                    opt(r.type_gain, 1),
                    opt(r.ale_reduction, 1),
                ];
                for s in &rep.subsets {
                    rec.push(opt(s.lane_accuracy, 4));
                    rec.push(opt(s.type_accuracy, 4));
                    rec.push(opt(s.ale, 4));
                }
                rec
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header()).expect("in-memory write");
        for rec in self.records() {
            w.write_record(rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Column-aligned plain-text rendering of the CSV content.
    pub fn to_text_table(&self) -> String {
        let header = self.header();
        let records = self.records();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                records
                    .iter()
                    .map(|r| r[c].len())
                    .chain(std::iter::once(header[c].len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &header);
        for r in &records {
            line(&mut out, r);
        }
        out
    }
}

/// Replaces each chain's labels with the chain's majority label (ties go to
/// the smallest class). Vertices on several chains take the value from the
/// longest one; vertices on no chain keep their own label.
pub fn chain_majority(labels: &[usize], classes: usize, chains: &[RoadChain]) -> Vec<usize> {
    let mut out = labels.to_vec();
    let mut owner_len = vec![0usize; labels.len()];
    for chain in chains {
        let mut votes = vec![0usize; classes];
        for &v in &chain.vertices {
            votes[labels[v]] += 1;
        }
        let best = (0..classes).max_by_key(|&c| (votes[c], std::cmp::Reverse(c))).unwrap_or(0);
        for &v in &chain.vertices {
            if chain.len() > owner_len[v] {
                owner_len[v] = chain.len();
                out[v] = best;
            }
        }
    }
    out
}
