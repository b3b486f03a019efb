//! Linear SEM simulator with shift knockouts.
//!
//! A system has `p + 1` nodes in topological order `0..=p`. The response `Y`
//! sits at node `p / 2` (0-based); its `p0` designated causes are the nodes
//! immediately before it and its `p0` designated effects the nodes
//! immediately after it. Every column of the weighted adjacency matrix with
//! any nonzero entry is scaled to unit Euclidean norm.
//!
//! A knockout of gene `g` adds `shift` to the structural assignment of `g`,
//! so the shift propagates to every descendant.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_l1r, fit_lasso_k, fit_with_fallback, CoefficientVector, Estimator};
use crate::scoring::top_p0_hits;
use crate::seed;

/// Gene count of the full-scale simulation; reduced-scale runs scale the
/// density parameter by `p / FULL_SCALE_P`.
pub const FULL_SCALE_P: usize = 6400;
pub const PAPER_NT: [f64; 5] = [20.0, 40.0, 80.0, 160.0, 320.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    Strong,
    Weak,
}

impl Regime {
    /// `(s1, s2)`: planted cause and effect edge magnitudes.
    pub fn strengths(self) -> (f64, f64) {
        match self {
            Regime::Strong => (1.0, 1.0),
            Regime::Weak => (1.0, 1000.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Strong => "Strong",
            Regime::Weak => "Weak",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "strong" => Ok(Regime::Strong),
            "weak" => Ok(Regime::Weak),
            other => Err(Error::validation(format!("unknown regime {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Number of genes besides the response; the system has `p + 1` nodes.
    pub p: usize,
    /// Density: each upper-triangular entry is nonzero w.p. `n_t / p`.
    pub n_t: f64,
    pub p0: usize,
    pub regime: Regime,
    pub n1: usize,
    pub n2: usize,
    pub shift: f64,
    pub noise_sd: f64,
    pub trials: usize,
    pub seed: u64,
    /// ICP significance level.
    pub alpha: f64,
    /// Lasso preselection size.
    pub k_lasso: usize,
}

impl SimConfig {
    /// Full-scale settings: `p = 6400`, `n1 = 300`, `n2 = p / 4`, shift -40.
    pub fn full_scale(n_t: f64, p0: usize, regime: Regime) -> Self {
        SimConfig {
            p: FULL_SCALE_P,
            n_t,
            p0,
            regime,
            n1: 300,
            n2: FULL_SCALE_P / 4,
            shift: -40.0,
            noise_sd: 1.0,
            trials: 100,
            seed: 0,
            alpha: 0.05,
            k_lasso: 4,
        }
    }

    /// Reduced-scale settings keeping the full-scale ratios: `n2 = p / 4`,
    /// `n1 = min(300, p / 2)` and `n_t` scaled by `p / 6400`, rounded up.
    pub fn reduced_scale(p: usize, full_scale_n_t: f64, p0: usize, regime: Regime) -> Self {
        SimConfig {
            p,
            n_t: (full_scale_n_t * p as f64 / FULL_SCALE_P as f64).ceil(),
            n1: 300.min(p / 2),
            n2: p / 4,
            ..SimConfig::full_scale(full_scale_n_t, p0, regime)
        }
    }

    pub fn target(&self) -> usize {
        self.p / 2
    }

    pub fn causes(&self) -> Vec<usize> {
        (self.target() - self.p0..self.target()).collect()
    }

    pub fn effects(&self) -> Vec<usize> {
        (self.target() + 1..=self.target() + self.p0).collect()
    }

    /// Genes eligible for knockout: everything except `Y` and its designated
    /// causes and effects.
    pub fn knockout_candidates(&self) -> Vec<usize> {
        let t = self.target();
        (0..=self.p)
            .filter(|&g| g + self.p0 < t || g > t + self.p0)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::validation(format!("{field}: {msg}")));
        if self.p0 != 1 && self.p0 != 2 {
            return bad("p0", format!("must be 1 or 2, got {}", self.p0));
        }
        if self.p < 4 * self.p0 || self.p % 2 != 0 {
            return bad(
                "p",
                format!("must be even and at least {}, got {}", 4 * self.p0, self.p),
            );
        }
        if !(self.n_t > 0.0) || self.n_t > self.p as f64 {
            return bad("n_t", format!("must lie in (0, p], got {}", self.n_t));
        }
        if self.n1 < 2 {
            return bad(
                "n1",
                format!("need at least 2 observational samples, got {}", self.n1),
            );
        }
        let pool = self.p - 2 * self.p0;
        if self.n2 < 2 || self.n2 > pool {
            return bad("n2", format!("must lie in [2, {pool}], got {}", self.n2));
        }
        if !self.shift.is_finite() {
            return bad("shift", "must be finite".into());
        }
        if !(self.noise_sd > 0.0) || !self.noise_sd.is_finite() {
            return bad(
                "noise_sd",
                format!("must be positive, got {}", self.noise_sd),
            );
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("must lie in (0, 1), got {}", self.alpha));
        }
        if self.k_lasso < self.p0 || self.k_lasso > 16 || self.k_lasso > self.p {
            return bad(
                "k_lasso",
                format!("must lie in [p0, 16], got {}", self.k_lasso),
            );
        }
        Ok(())
    }
}

/// Strictly upper-triangular weighted adjacency matrix stored by column.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    size: usize,
    /// `parents[j]` lists `(i, A_ij)` with `i < j`, sorted by `i`.
    parents: Vec<Vec<(usize, f64)>>,
    pub target: usize,
    pub causes: Vec<usize>,
    pub effects: Vec<usize>,
    /// Nonzeros drawn before any zeroing (lower triangle, diagonal, target
    /// row/column).
    pub sampled_nonzeros: usize,
    /// Planted `(row, col, value)` entries before column normalization.
    pub planted: Vec<(usize, usize, f64)>,
}

impl AdjacencyMatrix {
    /// Builds a matrix from explicit strictly upper-triangular edges, without
    /// normalization.
    pub fn from_edges(size: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut parents = vec![Vec::new(); size];
        for &(i, j, w) in edges {
            if i >= j || j >= size {
                return Err(Error::contract(format!(
                    "edge ({i}, {j}) is not strictly upper triangular"
                )));
            }
            if w != 0.0 {
                parents[j].push((i, w));
            }
        }
        for col in &mut parents {
            col.sort_by_key(|e| e.0);
        }
        Ok(AdjacencyMatrix {
            size,
            parents,
            target: size / 2,
            causes: Vec::new(),
            effects: Vec::new(),
            sampled_nonzeros: edges.len(),
            planted: Vec::new(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn parents(&self, j: usize) -> &[(usize, f64)] {
        &self.parents[j]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.parents[j]
            .iter()
            .find(|e| e.0 == i)
            .map_or(0.0, |e| e.1)
    }

    pub fn nonzeros(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn column_norm(&self, j: usize) -> f64 {
        self.parents[j]
            .iter()
            .map(|e| e.1 * e.1)
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for (j, col) in self.parents.iter().enumerate() {
            for &(i, w) in col {
                m[(i, j)] = w;
            }
        }
        m
    }

    pub fn normalize_columns(&mut self) {
        for col in &mut self.parents {
            let norm = col.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
            if norm > 0.0 {
                for e in col.iter_mut() {
                    e.1 /= norm;
                }
            }
        }
    }
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Draws the random DAG. Nonzero positions over the full `(p+1) x (p+1)`
/// grid are visited by geometric skipping, which is equivalent to one
/// Bernoulli(`n_t / p`) draw per entry.
pub fn generate_dag<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<AdjacencyMatrix> {
    let density = cfg.n_t / cfg.p as f64;
    if !(density > 0.0) || density > 1.0 {
        return Err(Error::contract(format!(
            "edge probability n_t/p = {density} outside (0, 1]"
        )));
    }
    if cfg.p0 == 0 || cfg.p < 2 * cfg.p0 + 2 {
        return Err(Error::contract(
            "p too small for the planted causes and effects",
        ));
    }
    let size = cfg.p + 1;
    let total = (size as u64) * (size as u64);
    let t = cfg.target();
    let log_miss = (1.0 - density).ln();

    let mut parents: Vec<Vec<(usize, f64)>> = vec![Vec::new(); size];
    let mut sampled = 0usize;
    let mut pos: u64 = 0;
    let mut first = true;
    loop {
        let skip = if density >= 1.0 {
            0
        } else {
            let u: f64 = rng.random();
            ((1.0 - u).ln() / log_miss).floor() as u64
        };
        pos = if first {
            skip
        } else {
            pos.saturating_add(skip + 1)
        };
        first = false;
        if pos >= total {
            break;
        }
        let sign = random_sign(rng);
        sampled += 1;
        let (i, j) = ((pos / size as u64) as usize, (pos % size as u64) as usize);
        if i < j && i != t && j != t {
            parents[j].push((i, sign));
        }
    }

    let (s1, s2) = cfg.regime.strengths();
    let causes = cfg.causes();
    let effects = cfg.effects();
    let mut planted = Vec::with_capacity(2 * cfg.p0);
    for &c in &causes {
        planted.push((c, t, random_sign(rng) * s1));
    }
    for &e in &effects {
        planted.push((t, e, random_sign(rng) * s2));
    }
    for &(i, j, w) in &planted {
        parents[j].push((i, w));
    }
    for col in &mut parents {
        col.sort_by_key(|e| e.0);
    }
    let mut a = AdjacencyMatrix {
        size,
        parents,
        target: t,
        causes,
        effects,
        sampled_nonzeros: sampled,
        planted,
    };
    a.normalize_columns();
    Ok(a)
}

fn forward_pass<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    noise_sd: f64,
    shifted: Option<(usize, f64)>,
    row: &mut [f64],
    rng: &mut R,
) {
    for j in 0..a.size {
        let eps: f64 = rng.sample(StandardNormal);
        let mut v = noise_sd * eps;
        for &(i, w) in &a.parents[j] {
            v += w * row[i];
        }
        if let Some((g, s)) = shifted {
            if g == j {
                v += s;
            }
        }
        row[j] = v;
    }
}

/// `n` observational samples with unit-variance Gaussian noise.
pub fn sample_observational<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    n: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    sample_observational_sd(a, n, 1.0, rng)
}

pub fn sample_observational_sd<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    n: usize,
    noise_sd: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let mut buf = vec![0.0; n * a.size];
    for row in buf.chunks_mut(a.size) {
        forward_pass(a, noise_sd, None, row, rng);
    }
    DMatrix::from_row_slice(n, a.size, &buf)
}

/// One sample per entry of `knocked`, shifting that gene's assignment.
pub fn sample_shifted<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    knocked: &[usize],
    shift: f64,
    noise_sd: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let mut buf = vec![0.0; knocked.len() * a.size];
    for (row, &g) in buf.chunks_mut(a.size).zip(knocked) {
        forward_pass(a, noise_sd, Some((g, shift)), row, rng);
    }
    DMatrix::from_row_slice(knocked.len(), a.size, &buf)
}

/// Picks `n2` distinct knockout genes uniformly from the eligible pool and
/// samples one shifted observation for each.
pub fn sample_knockouts<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let pool = cfg.knockout_candidates();
    if pool.len() < cfg.n2 {
        return Err(Error::contract(format!(
            "{} knockout candidates cannot supply {} knockouts",
            pool.len(),
            cfg.n2
        )));
    }
    let knocked: Vec<usize> = sample_indices(rng, pool.len(), cfg.n2)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    let data = sample_shifted(a, &knocked, cfg.shift, cfg.noise_sd, rng);
    Ok((data, knocked))
}

pub fn gene_names(count: usize) -> Vec<String> {
    let width = count.saturating_sub(1).to_string().len();
    (0..count).map(|i| format!("G{i:0width$}")).collect()
}

/// Simulates one complete dataset (and its generating DAG) in the on-disk
/// dataset layout.
pub fn simulate_dataset(cfg: &SimConfig, seed_value: u64) -> Result<(Dataset, AdjacencyMatrix)> {
    cfg.validate()?;
    let mut rng = seed::rng(seed_value);
    let a = generate_dag(cfg, &mut rng)?;
    let obs = sample_observational_sd(&a, cfg.n1, cfg.noise_sd, &mut rng);
    let (intv, knocked) = sample_knockouts(&a, cfg, &mut rng)?;
    let ds = Dataset::new(obs, intv, knocked, gene_names(a.size()))?;
    Ok((ds, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Top-p0 hits in `Estimator::ALL` order.
    pub hits: [usize; 4],
    pub cd_fell_back: bool,
    pub icp_fell_back: bool,
    /// True causes among the Lasso-preselected predictors.
    pub causes_preselected: usize,
}

/// One simulation run: fresh DAG and data, Lasso preselection of
/// `k_lasso` predictors for `Y`, then L1/L1R/CD/ICP on those predictors.
pub fn run_trial(cfg: &SimConfig, trial: usize) -> Result<TrialOutcome> {
    let (ds, a) = simulate_dataset(cfg, seed::derive(cfg.seed, &[trial as u64]))?;
    let mut rng = seed::task_rng(cfg.seed, &[trial as u64, 1]);
    let t = a.target;
    let predictors: Vec<usize> = (0..ds.p()).filter(|&g| g != t).collect();
    let all_intv: Vec<usize> = (0..ds.n2()).collect();
    let (obs, intv) = ds.environment_views(t, &predictors, &all_intv)?;

    let lasso_full = fit_lasso_k(&obs, &intv, cfg.k_lasso)?;
    let selected = lasso_full.support();
    let obs = obs.restrict(&selected);
    let intv = intv.restrict(&selected);
    let lasso = CoefficientVector::new(
        selected.iter().map(|&i| lasso_full.values[i]).collect(),
        obs.predictors.clone(),
    );
    let l1r = fit_l1r(&lasso, &mut rng);
    let true_positions: Vec<usize> = obs
        .predictors
        .iter()
        .enumerate()
        .filter(|(_, g)| a.causes.contains(g))
        .map(|(k, _)| k)
        .collect();

    let mut hits = [0; 4];
    let mut cd_fell_back = false;
    let mut icp_fell_back = false;
    for (slot, est) in Estimator::ALL.into_iter().enumerate() {
        let coefs = if selected.is_empty() {
            lasso.clone()
        } else {
            let out = fit_with_fallback(est, &obs, &intv, &lasso, &l1r, cfg.alpha)?;
            match est {
                Estimator::CD => cd_fell_back = out.fell_back,
                Estimator::ICP => icp_fell_back = out.fell_back,
                _ => {}
            }
            out.coefficients
        };
        hits[slot] = top_p0_hits(&coefs.values, &true_positions, cfg.p0);
    }
    Ok(TrialOutcome {
        hits,
        cd_fell_back,
        icp_fell_back,
        causes_preselected: true_positions.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: usize,
    /// Mean top-p0 hits in `Estimator::ALL` order.
    pub mean_hits: [f64; 4],
    pub cd_fallback_rate: f64,
    pub icp_fallback_rate: f64,
    pub mean_causes_preselected: f64,
}

impl TrialSummary {
    pub fn mean(&self, est: Estimator) -> f64 {
        let slot = Estimator::ALL
            .iter()
            .position(|e| *e == est)
            .expect("known estimator");
        self.mean_hits[slot]
    }

    fn from_outcomes<'a>(outcomes: impl ExactSizeIterator<Item = &'a TrialOutcome>) -> Self {
        let n = outcomes.len();
        let mut sums = [0usize; 4];
        let (mut cd, mut icp, mut pre) = (0usize, 0usize, 0usize);
        for o in outcomes {
            for (s, h) in sums.iter_mut().zip(o.hits) {
                *s += h;
            }
            cd += o.cd_fell_back as usize;
            icp += o.icp_fell_back as usize;
            pre += o.causes_preselected;
        }
        let nf = n as f64;
        TrialSummary {
            trials: n,
            mean_hits: sums.map(|s| s as f64 / nf),
            cd_fallback_rate: cd as f64 / nf,
            icp_fallback_rate: icp as f64 / nf,
            mean_causes_preselected: pre as f64 / nf,
        }
    }
}

/// Runs all `cfg.trials` trials in parallel and averages the hit counts.
pub fn run_trials(cfg: &SimConfig) -> Result<TrialSummary> {
    run_trials_resumable(cfg, &BTreeMap::new(), &|_, _| {})
}

/// Like [`run_trials`], skipping trials already present in `done` and
/// reporting each newly finished trial to `on_trial` (from worker threads).
pub fn run_trials_resumable(
    cfg: &SimConfig,
    done: &BTreeMap<usize, TrialOutcome>,
    on_trial: &(dyn Fn(usize, &TrialOutcome) + Sync),
) -> Result<TrialSummary> {
    cfg.validate()?;
    let fresh: Vec<(usize, TrialOutcome)> = (0..cfg.trials)
        .into_par_iter()
        .filter(|t| !done.contains_key(t))
        .map(|t| {
            let out = run_trial(cfg, t)?;
            on_trial(t, &out);
            Ok((t, out))
        })
        .collect::<Result<_>>()?;
    let mut all: BTreeMap<usize, TrialOutcome> = done
        .iter()
        .filter(|(t, _)| **t < cfg.trials)
        .map(|(t, o)| (*t, *o))
        .collect();
    all.extend(fresh);
    Ok(TrialSummary::from_outcomes(all.values()))
}

/// One cell block of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n_t: f64,
    pub p0: usize,
    pub regime: Regime,
    pub summary: TrialSummary,
}

/// Results laid out as rows `(p0, n_t)` by columns `regime x estimator`,
/// restricted to `estimators` (in `Estimator::ALL` order).
pub fn results_table_tsv(cells: &[CellResult], estimators: &[Estimator]) -> String {
    let slots: Vec<(usize, Estimator)> = Estimator::ALL
        .into_iter()
        .enumerate()
        .filter(|(_, e)| estimators.contains(e))
        .collect();
    let mut regimes: Vec<Regime> = cells.iter().map(|c| c.regime).collect();
    regimes.sort();
    regimes.dedup();
    let mut rows: Vec<(usize, f64)> = cells.iter().map(|c| (c.p0, c.n_t)).collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    rows.dedup();

    let mut out = String::from("p0\tn_t");
    for r in &regimes {
        for (_, e) in &slots {
            write!(out, "\t{}_{}", r.name(), e.name()).unwrap();
        }
    }
    out.push('\n');
    for (p0, n_t) in rows {
        write!(out, "{p0}\t{n_t}").unwrap();
        for r in &regimes {
            let cell = cells
                .iter()
                .find(|c| c.p0 == p0 && c.n_t == n_t && c.regime == *r);
            for (slot, _) in &slots {
                match cell {
                    Some(c) => write!(out, "\t{:.3}", c.summary.mean_hits[*slot]).unwrap(),
                    None => out.push_str("\tNA"),
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(regime: Regime, p0: usize) -> SimConfig {
        SimConfig {
            p: 40,
            n_t: 4.0,
            n1: 20,
            n2: 10,
            trials: 4,
            ..SimConfig::full_scale(20.0, p0, regime)
        }
    }

    #[test]
    fn designated_nodes() {
        let cfg = small(Regime::Strong, 2);
        assert_eq!(cfg.target(), 20);
        assert_eq!(cfg.causes(), vec![18, 19]);
        assert_eq!(cfg.effects(), vec![21, 22]);
        let pool = cfg.knockout_candidates();
        assert_eq!(pool.len(), 41 - 5);
        assert!(!pool.iter().any(|g| (18..=22).contains(g)));
    }

    #[test]
    fn target_column_holds_only_causes() {
        for s in 0..20 {
            let cfg = small(Regime::Weak, 2);
            let a = generate_dag(&cfg, &mut seed::rng(s)).unwrap();
            let t = a.target;
            let parents: Vec<usize> = a.parents(t).iter().map(|e| e.0).collect();
            assert_eq!(parents, vec![18, 19]);
            for &(_, w) in a.parents(t) {
                assert!((w.abs() - 1.0 / 2f64.sqrt()).abs() < 1e-12);
            }
            for j in 0..a.size() {
                let w = a.get(t, j);
                assert_eq!(w != 0.0, j == 21 || j == 22, "row {t} col {j}");
            }
        }
    }

    #[test]
    fn weak_effect_planted_at_one_thousand() {
        let cfg = small(Regime::Weak, 1);
        let a = generate_dag(&cfg, &mut seed::rng(3)).unwrap();
        let (_, _, w) = a.planted.iter().find(|e| e.0 == a.target).copied().unwrap();
        assert_eq!(w.abs(), 1000.0);
    }

    #[test]
    fn density_above_one_rejected() {
        let mut cfg = small(Regime::Strong, 1);
        cfg.n_t = 41.0;
        assert!(matches!(
            generate_dag(&cfg, &mut seed::rng(0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn sink_knockout_does_not_propagate() {
        // Node 2 is a sink fed by node 1.
        let a = AdjacencyMatrix::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let base = sample_shifted(&a, &[2], 0.0, 1.0, &mut seed::rng(5));
        let shifted = sample_shifted(&a, &[2], -40.0, 1.0, &mut seed::rng(5));
        assert_eq!(base[(0, 0)], shifted[(0, 0)]);
        assert_eq!(base[(0, 1)], shifted[(0, 1)]);
        assert!((shifted[(0, 2)] - base[(0, 2)] + 40.0).abs() < 1e-12);
    }

    #[test]
    fn pool_too_small() {
        let mut cfg = small(Regime::Strong, 1);
        cfg.n2 = 40;
        let a = generate_dag(&cfg, &mut seed::rng(0)).unwrap();
        assert!(matches!(
            sample_knockouts(&a, &cfg, &mut seed::rng(0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = small(Regime::Strong, 1);
        assert_eq!(run_trials(&cfg).unwrap(), run_trials(&cfg).unwrap());
    }

    #[test]
    fn reduced_scale_ratios() {
        let cfg = SimConfig::reduced_scale(400, 20.0, 1, Regime::Strong);
        assert_eq!((cfg.n1, cfg.n2, cfg.n_t), (200, 100, 2.0));
        let cfg = SimConfig::reduced_scale(400, 320.0, 2, Regime::Weak);
        assert_eq!(cfg.n_t, 20.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn table_layout() {
        let summary = TrialSummary {
            trials: 2,
            mean_hits: [1.0, 0.5, 0.5, 0.0],
            cd_fallback_rate: 0.0,
            icp_fallback_rate: 1.0,
            mean_causes_preselected: 1.0,
        };
        let cells = vec![
            CellResult {
                n_t: 2.0,
                p0: 1,
                regime: Regime::Weak,
                summary: summary.clone(),
            },
            CellResult {
                n_t: 2.0,
                p0: 1,
                regime: Regime::Strong,
                summary,
            },
        ];
        let tsv = results_table_tsv(&cells, &Estimator::ALL);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(
            lines[0],
            "p0\tn_t\tStrong_L1\tStrong_L1R\tStrong_CD\tStrong_ICP\tWeak_L1\tWeak_L1R\tWeak_CD\tWeak_ICP"
        );
        assert_eq!(
            lines[1],
            "1\t2\t1.000\t0.500\t0.500\t0.000\t1.000\t0.500\t0.500\t0.000"
        );
        let only_cd = results_table_tsv(&cells[..1], &[Estimator::CD]);
        assert_eq!(only_cd, "p0\tn_t\tWeak_CD\n1\t2\t0.500\n");
    }
}
