//! Knockout ground truth, scoring sets, ROC points, top-p0 hits and the
//! flipped-rank diagnostic.
//!
//! A gene pair `(i, j)` has ground truth only when `i` was knocked out. The
//! symmetric scoring set further restricts to pairs where `j` was knocked
//! out as well, so every scored pair is scored together with its reverse.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GenePair {
    pub cause: usize,
    pub effect: usize,
}

impl GenePair {
    pub fn new(cause: usize, effect: usize) -> Self {
        GenePair { cause, effect }
    }

    pub fn reversed(self) -> Self {
        GenePair {
            cause: self.effect,
            effect: self.cause,
        }
    }
}

/// Truth values for every pair whose cause was knocked out.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    p: usize,
    /// Knocked-out gene of each interventional row.
    knockouts: Vec<usize>,
    row_of: Vec<Option<usize>>,
    /// Row-major `n2 x p`; entry `(r, j)` is `F[knockouts[r], j]`.
    truth: Vec<bool>,
}

impl GroundTruth {
    /// Builds ground truth from a knockout list and a labelling function.
    pub fn from_fn(
        p: usize,
        knockouts: Vec<usize>,
        mut label: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut row_of = vec![None; p];
        for (r, &g) in knockouts.iter().enumerate() {
            if g >= p {
                return Err(Error::validation(format!(
                    "knockout gene {g} outside [0, {p})"
                )));
            }
            if row_of[g].replace(r).is_some() {
                return Err(Error::validation(format!("gene {g} knocked out twice")));
            }
        }
        let mut truth = vec![false; knockouts.len() * p];
        for (r, &i) in knockouts.iter().enumerate() {
            for j in (0..p).filter(|&j| j != i) {
                truth[r * p + j] = label(i, j);
            }
        }
        Ok(GroundTruth {
            p,
            knockouts,
            row_of,
            truth,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn knockouts(&self) -> &[usize] {
        &self.knockouts
    }

    pub fn is_knocked_out(&self, gene: usize) -> bool {
        self.row_of.get(gene).is_some_and(Option::is_some)
    }

    /// `Some(F_ij)` when the pair has ground truth.
    pub fn get(&self, pair: GenePair) -> Option<bool> {
        if pair.cause == pair.effect || pair.effect >= self.p {
            return None;
        }
        let r = self.row_of.get(pair.cause).copied().flatten()?;
        Some(self.truth[r * self.p + pair.effect])
    }

    pub fn domain_size(&self) -> usize {
        self.knockouts.len() * (self.p - 1)
    }

    /// Pairs with ground truth, in knockout-row then effect order.
    pub fn pairs(&self) -> impl Iterator<Item = GenePair> + '_ {
        self.knockouts.iter().flat_map(move |&i| {
            (0..self.p)
                .filter(move |&j| j != i)
                .map(move |j| GenePair::new(i, j))
        })
    }

    pub fn count_true(&self) -> usize {
        self.pairs()
            .filter(|&pr| self.get(pr) == Some(true))
            .count()
    }
}

/// `F_ij` is true when, in the sample knocking out `i`, gene `j` lies
/// strictly outside the observational min-max range of `j`.
pub fn derive_ground_truth(ds: &Dataset) -> GroundTruth {
    let obs = ds.obs();
    let ranges: Vec<(f64, f64)> = (0..ds.p())
        .map(|j| {
            let col = obs.column(j);
            (col.min(), col.max())
        })
        .collect();
    let intv = ds.intv();
    let rows: Vec<Option<usize>> = (0..ds.p()).map(|g| ds.knockout_row(g)).collect();
    GroundTruth::from_fn(ds.p(), ds.knockout_map().to_vec(), |i, j| {
        let v = intv[(rows[i].expect("cause is knocked out"), j)];
        let (lo, hi) = ranges[j];
        v < lo || v > hi
    })
    .expect("dataset invariants guarantee a valid knockout map")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringKind {
    Full,
    Symmetric,
}

impl ScoringKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoringKind::Full => "full",
            ScoringKind::Symmetric => "symmetric",
        }
    }
}

impl std::str::FromStr for ScoringKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(ScoringKind::Full),
            "symmetric" | "s" => Ok(ScoringKind::Symmetric),
            other => Err(Error::validation(format!(
                "unknown scoring kind {other:?} (expected full or symmetric)"
            ))),
        }
    }
}

/// Set of pairs to score. Stored implicitly through the knockout list since
/// the full set has `n2 * (p - 1)` members.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringSet {
    pub kind: ScoringKind,
    p: usize,
    knockouts: Vec<usize>,
    knocked: Vec<bool>,
}

impl ScoringSet {
    pub fn len(&self) -> usize {
        let n2 = self.knockouts.len();
        match self.kind {
            ScoringKind::Full => n2 * (self.p - 1),
            ScoringKind::Symmetric => n2 * n2.saturating_sub(1),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, pair: GenePair) -> bool {
        if pair.cause == pair.effect || pair.cause >= self.p || pair.effect >= self.p {
            return false;
        }
        self.knocked[pair.cause]
            && match self.kind {
                ScoringKind::Full => true,
                ScoringKind::Symmetric => self.knocked[pair.effect],
            }
    }

    pub fn pairs(&self) -> impl Iterator<Item = GenePair> + '_ {
        self.knockouts.iter().flat_map(move |&i| {
            (0..self.p)
                .filter(move |&j| j != i)
                .filter(move |&j| self.kind == ScoringKind::Full || self.knocked[j])
                .map(move |j| GenePair::new(i, j))
        })
    }
}

pub fn build_scoring_set(gt: &GroundTruth, kind: ScoringKind) -> ScoringSet {
    let mut knocked = vec![false; gt.p];
    for &g in &gt.knockouts {
        knocked[g] = true;
    }
    ScoringSet {
        kind,
        p: gt.p,
        knockouts: gt.knockouts.clone(),
        knocked,
    }
}

/// Rank of every ordered gene pair; 1 is the most likely causal pair.
/// Ranks may be fractional (average ranks over ties).
#[derive(Debug, Clone)]
pub struct RankedPredictions {
    p: usize,
    /// Row-major `p x p`, NaN where no rank was assigned.
    ranks: Vec<f64>,
}

// Unranked slots compare equal to each other.
impl PartialEq for RankedPredictions {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
            && self
                .ranks
                .iter()
                .zip(&other.ranks)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

impl RankedPredictions {
    pub fn new(p: usize) -> Self {
        RankedPredictions {
            p,
            ranks: vec![f64::NAN; p * p],
        }
    }

    /// Assigns average ranks from scores where smaller is more causal.
    pub fn from_scores(p: usize, scored: &[(GenePair, f64)]) -> Self {
        let ranks = average_ranks(&scored.iter().map(|(_, s)| *s).collect::<Vec<_>>());
        let mut rp = RankedPredictions::new(p);
        for ((pair, _), r) in scored.iter().zip(ranks) {
            rp.set(*pair, r);
        }
        rp
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn set(&mut self, pair: GenePair, rank: f64) {
        assert!(pair.cause != pair.effect, "self pairs carry no rank");
        self.ranks[pair.cause * self.p + pair.effect] = rank;
    }

    pub fn rank(&self, pair: GenePair) -> Option<f64> {
        if pair.cause >= self.p || pair.effect >= self.p || pair.cause == pair.effect {
            return None;
        }
        let r = self.ranks[pair.cause * self.p + pair.effect];
        (!r.is_nan()).then_some(r)
    }

    pub fn ranked_pairs(&self) -> impl Iterator<Item = (GenePair, f64)> + '_ {
        (0..self.p).flat_map(move |i| {
            (0..self.p).filter_map(move |j| {
                let pr = GenePair::new(i, j);
                self.rank(pr).map(|r| (pr, r))
            })
        })
    }

    pub fn len(&self) -> usize {
        self.ranks.iter().filter(|r| !r.is_nan()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// 1-based average ranks of `keys` in ascending order; ties share the mean
/// of the positions they span.
pub fn average_ranks(keys: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    let mut ranks = vec![0.0; keys.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && keys[order[end]] == keys[order[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Rank of the last block included (0 for the origin).
    pub rank_threshold: f64,
    pub fp: usize,
    pub tp: usize,
}

/// Cumulative (FP, TP) counts over the scoring set in ascending rank order.
/// Pairs sharing a rank form one block and contribute a single vertex.
pub fn roc_points(
    rp: &RankedPredictions,
    gt: &GroundTruth,
    ss: &ScoringSet,
) -> Result<Vec<RocPoint>> {
    let mut scored = Vec::with_capacity(ss.len());
    for pair in ss.pairs() {
        let rank = rp.rank(pair).ok_or_else(|| {
            Error::contract(format!(
                "pair ({}, {}) has no rank",
                pair.cause, pair.effect
            ))
        })?;
        let truth = gt.get(pair).ok_or_else(|| {
            Error::contract(format!(
                "pair ({}, {}) has no ground truth",
                pair.cause, pair.effect
            ))
        })?;
        scored.push((rank, truth));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut points = vec![RocPoint {
        rank_threshold: 0.0,
        fp: 0,
        tp: 0,
    }];
    let (mut fp, mut tp) = (0, 0);
    let mut i = 0;
    while i < scored.len() {
        let rank = scored[i].0;
        while i < scored.len() && scored[i].0 == rank {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            rank_threshold: rank,
            fp,
            tp,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlippedRankRow {
    pub cause: usize,
    pub effect: usize,
    pub res: bool,
    pub rank: f64,
    /// `None` when the reverse knockout was not performed.
    pub res_flip: Option<bool>,
    pub rank_flip: f64,
}

/// The `top_n` best-ranked pairs that have ground truth, each annotated with
/// the rank and truth of its reversed pair.
pub fn flipped_rank_report(
    rp: &RankedPredictions,
    gt: &GroundTruth,
    top_n: usize,
) -> Result<Vec<FlippedRankRow>> {
    let mut scored: Vec<(GenePair, f64)> = gt
        .pairs()
        .map(|pr| {
            rp.rank(pr).map(|r| (pr, r)).ok_or_else(|| {
                Error::contract(format!("pair ({}, {}) has no rank", pr.cause, pr.effect))
            })
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored
        .into_iter()
        .take(top_n)
        .map(|(pair, rank)| {
            let flip = pair.reversed();
            let rank_flip = rp.rank(flip).ok_or_else(|| {
                Error::contract(format!(
                    "reversed pair ({}, {}) has no rank",
                    flip.cause, flip.effect
                ))
            })?;
            Ok(FlippedRankRow {
                cause: pair.cause,
                effect: pair.effect,
                res: gt.get(pair).expect("pair drawn from ground truth"),
                rank,
                res_flip: gt.get(flip),
                rank_flip,
            })
        })
        .collect()
}

/// Number of true causes among the `p0` largest-magnitude coefficients.
/// Ties in magnitude go to the lower index.
pub fn top_p0_hits(coeffs: &[f64], true_causes: &[usize], p0: usize) -> usize {
    let mut order: Vec<usize> = (0..coeffs.len()).collect();
    order.sort_by(|&a, &b| coeffs[b].abs().total_cmp(&coeffs[a].abs()).then(a.cmp(&b)));
    order
        .iter()
        .take(p0)
        .filter(|i| true_causes.contains(i))
        .count()
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

pub fn roc_to_tsv(points: &[RocPoint]) -> String {
    let mut out = String::from("rank_threshold\tfp\ttp\n");
    for pt in points {
        writeln!(out, "{}\t{}\t{}", fmt_num(pt.rank_threshold), pt.fp, pt.tp).unwrap();
    }
    out
}

fn truth_label(v: bool) -> &'static str {
    if v {
        "TRUE"
    } else {
        "FALSE"
    }
}

/// Tab-separated flipped-rank table; `label` fills a leading column when the
/// table mixes several estimators.
pub fn flipped_ranks_to_tsv(
    rows: &[(Option<&str>, FlippedRankRow)],
    gene_names: &[String],
) -> String {
    let labelled = rows.iter().any(|(l, _)| l.is_some());
    let mut out = String::new();
    if labelled {
        out.push_str("estimator\t");
    }
    out.push_str("cause\teffect\tres\trank\tres-flip\trank-flip\n");
    for (label, row) in rows {
        if labelled {
            out.push_str(label.unwrap_or(""));
            out.push('\t');
        }
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            gene_names[row.cause],
            gene_names[row.effect],
            truth_label(row.res),
            fmt_num(row.rank),
            row.res_flip.map_or("NA", truth_label),
            fmt_num(row.rank_flip),
        )
        .unwrap();
    }
    out
}
