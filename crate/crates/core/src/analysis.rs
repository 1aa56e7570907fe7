//! Geometry of learned codebooks: pairwise distances within and across the
//! users' codebooks and their normalized correlations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{CodeBook, ModelKind, TrainedPair, User};
use crate::tensor::Tensor2;

/// Self-correlation magnitude below which a pair counts as near-orthogonal.
pub const NEAR_ZERO_CORRELATION: f64 = 0.05;

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sort(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Distances over all unordered pairs of distinct messages of one codebook,
/// ascending.
pub fn self_distances(cb: &CodeBook) -> Result<Vec<f64>> {
    let m = cb.message_count();
    if m < 2 {
        return Err(Error::usage("self distances need at least two codewords"));
    }
    let mut out = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            out.push(euclidean(cb.codeword(i), cb.codeword(j)));
        }
    }
    Ok(sort(out))
}

/// Distances between every user-1 codeword and every user-2 codeword,
/// equal message indices included, ascending.
pub fn cross_distances(cb1: &CodeBook, cb2: &CodeBook) -> Result<Vec<f64>> {
    if cb1.n() != cb2.n() {
        return Err(Error::usage(format!(
            "codeword lengths differ: {} vs {}",
            cb1.n(),
            cb2.n()
        )));
    }
    let mut out = Vec::with_capacity(cb1.message_count() * cb2.message_count());
    for a in cb1.matrix().iter_rows() {
        for b in cb2.matrix().iter_rows() {
            out.push(euclidean(a, b));
        }
    }
    Ok(sort(out))
}

/// Cosine similarity of every row of `a` with every row of `b`.
pub fn correlations(a: &CodeBook, b: &CodeBook) -> Result<Tensor2> {
    if a.n() != b.n() {
        return Err(Error::usage(format!(
            "codeword lengths differ: {} vs {}",
            a.n(),
            b.n()
        )));
    }
    let norms = |cb: &CodeBook| -> Result<Vec<f64>> {
        cb.matrix()
            .iter_rows()
            .enumerate()
            .map(|(i, r)| {
                let v = norm(r);
                if v > 0.0 {
                    Ok(v)
                } else {
                    Err(Error::DegenerateCodeword { message: i })
                }
            })
            .collect()
    };
    let na = norms(a)?;
    let nb = norms(b)?;
    let mut out = Tensor2::zeros(a.message_count(), b.message_count());
    for (i, ra) in a.matrix().iter_rows().enumerate() {
        for (j, rb) in b.matrix().iter_rows().enumerate() {
            let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
            out.row_mut(i)[j] = (dot / (na[i] * nb[j])).clamp(-1.0, 1.0);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Summary { min, max, mean }
    }

    pub fn max_abs(&self) -> f64 {
        self.min.abs().max(self.max.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceReport {
    pub self_user1: Vec<f64>,
    pub self_user2: Vec<f64>,
    pub cross: Vec<f64>,
}

impl DistanceReport {
    pub fn new(cb1: &CodeBook, cb2: &CodeBook) -> Result<Self> {
        Ok(DistanceReport {
            self_user1: self_distances(cb1)?,
            self_user2: self_distances(cb2)?,
            cross: cross_distances(cb1, cb2)?,
        })
    }

    /// Both users' self distances, ascending.
    pub fn self_all(&self) -> Vec<f64> {
        sort([self.self_user1.as_slice(), &self.self_user2].concat())
    }

    pub fn min_self(&self) -> f64 {
        self.self_user1[0].min(self.self_user2[0])
    }

    pub fn min_cross(&self) -> f64 {
        self.cross[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub cross: Tensor2,
    pub self_user1: Tensor2,
    pub self_user2: Tensor2,
}

fn off_diagonal_upper(m: &Tensor2) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..m.rows() {
        for j in i + 1..m.cols() {
            out.push(m.get(i, j));
        }
    }
    out
}

impl CorrelationReport {
    pub fn new(cb1: &CodeBook, cb2: &CodeBook) -> Result<Self> {
        Ok(CorrelationReport {
            cross: correlations(cb1, cb2)?,
            self_user1: correlations(cb1, cb1)?,
            self_user2: correlations(cb2, cb2)?,
        })
    }

    pub fn cross_summary(&self) -> Summary {
        Summary::of(self.cross.data())
    }

    /// Summary over distinct-message pairs of both users.
    pub fn self_summary(&self) -> Summary {
        let vals = [
            off_diagonal_upper(&self.self_user1),
            off_diagonal_upper(&self.self_user2),
        ]
        .concat();
        Summary::of(&vals)
    }

    /// Distinct-message pairs (both users) with |R_self| below
    /// [`NEAR_ZERO_CORRELATION`].
    pub fn near_zero_self_pairs(&self) -> usize {
        [&self.self_user1, &self.self_user2]
            .iter()
            .flat_map(|m| off_diagonal_upper(m))
            .filter(|v| v.abs() < NEAR_ZERO_CORRELATION)
            .count()
    }
}

/// One model's row in the pairwise-distance table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceTableRow {
    pub model_kind: ModelKind,
    pub train_alpha: f64,
    pub min_d_cross: f64,
    pub min_d_self: f64,
}

/// Scalar digest of an [`AnalysisReport`], suitable for JSON export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub table: DistanceTableRow,
    pub d_self_user1: Summary,
    pub d_self_user2: Summary,
    pub d_cross: Summary,
    pub r_cross: Summary,
    pub r_cross_max_abs: f64,
    pub r_self: Summary,
    pub near_zero_self_pairs: usize,
    pub near_zero_threshold: f64,
    pub mean_power_user1: f64,
    pub mean_power_user2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub codebook1: CodeBook,
    pub codebook2: CodeBook,
    pub distances: DistanceReport,
    pub correlations: CorrelationReport,
    pub model_kind: ModelKind,
    pub train_alpha: f64,
}

impl AnalysisReport {
    pub fn summary(&self) -> AnalysisSummary {
        let cross = self.correlations.cross_summary();
        AnalysisSummary {
            table: DistanceTableRow {
                model_kind: self.model_kind,
                train_alpha: self.train_alpha,
                min_d_cross: self.distances.min_cross(),
                min_d_self: self.distances.min_self(),
            },
            d_self_user1: Summary::of(&self.distances.self_user1),
            d_self_user2: Summary::of(&self.distances.self_user2),
            d_cross: Summary::of(&self.distances.cross),
            r_cross: cross,
            r_cross_max_abs: cross.max_abs(),
            r_self: self.correlations.self_summary(),
            near_zero_self_pairs: self.correlations.near_zero_self_pairs(),
            near_zero_threshold: NEAR_ZERO_CORRELATION,
            mean_power_user1: self.codebook1.mean_power(),
            mean_power_user2: self.codebook2.mean_power(),
        }
    }
}

pub fn analyze_codebooks(
    cb1: CodeBook,
    cb2: CodeBook,
    model_kind: ModelKind,
    train_alpha: f64,
) -> Result<AnalysisReport> {
    Ok(AnalysisReport {
        distances: DistanceReport::new(&cb1, &cb2)?,
        correlations: CorrelationReport::new(&cb1, &cb2)?,
        codebook1: cb1,
        codebook2: cb2,
        model_kind,
        train_alpha,
    })
}

pub fn analysis_report(pair: &TrainedPair) -> Result<AnalysisReport> {
    analyze_codebooks(
        pair.extract_codebook(User::One)?,
        pair.extract_codebook(User::Two)?,
        pair.model_kind,
        pair.train_alpha,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_pair, ArchitectureSpec};

    fn cb(rows: &[Vec<f64>]) -> CodeBook {
        CodeBook::from_rows(rows).unwrap()
    }

    #[test]
    fn self_distance_examples() {
        let s = 8f64.sqrt();
        let dup = cb(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![0.0, 0.0]]);
        assert_eq!(self_distances(&dup).unwrap()[0], 0.0);

        let orth = cb(&[vec![s, 0.0], vec![0.0, s]]);
        assert!((self_distances(&orth).unwrap()[0] - 4.0).abs() < 1e-12);

        let anti = cb(&[vec![2.0, 2.0], vec![-2.0, -2.0]]);
        assert!((self_distances(&anti).unwrap()[0] - 32f64.sqrt()).abs() < 1e-12);

        assert!(self_distances(&cb(&[vec![1.0]])).is_err());
    }

    #[test]
    fn cross_distance_examples() {
        let a = cb(&[vec![2.0, 2.0], vec![2.0, -2.0]]);
        assert_eq!(cross_distances(&a, &a).unwrap()[0], 0.0);
        let neg = CodeBook::new(a.matrix().map(|v| -v));
        let d = cross_distances(&a, &neg).unwrap();
        assert_eq!(d.len(), 4);
        // diagonal pairs are antipodal
        assert_eq!(
            d.iter()
                .filter(|&&v| (v - 32f64.sqrt()).abs() < 1e-12)
                .count(),
            2
        );
        assert!(cross_distances(&a, &cb(&[vec![1.0, 2.0, 3.0]])).is_err());
    }

    #[test]
    fn correlation_examples() {
        let a = cb(&[vec![1.0, 0.0], vec![0.0, 3.0], vec![1.0, 1.0]]);
        let r = correlations(&a, &a).unwrap();
        for i in 0..3 {
            assert!((r.get(i, i) - 1.0).abs() < 1e-15);
        }
        assert_eq!(r.get(0, 1), 0.0);
        let zero = cb(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(
            correlations(&a, &zero),
            Err(Error::DegenerateCodeword { message: 1 })
        ));
    }

    #[test]
    fn report_on_untrained_pair() {
        let pair = build_pair(ArchitectureSpec::default(), 4).unwrap();
        let rep = analysis_report(&pair).unwrap();
        assert_eq!(rep.distances.self_all().len(), 2 * 120);
        assert_eq!(rep.distances.cross.len(), 256);
        assert_eq!(rep, analysis_report(&pair).unwrap());
        let s = rep.summary();
        assert!(s.r_cross_max_abs <= 1.0);
        assert_eq!(s.table.model_kind, ModelKind::Untrained);
    }
}
