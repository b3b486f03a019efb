//! Cross-validated, bootstrapped ranking of every ordered gene pair.
//!
//! Interventional rows are split into `K` folds. For fold `f` and target gene
//! `j` the training data are all observational rows plus the interventional
//! rows outside `f`, minus the row knocking out `j` itself. Lasso preselects
//! `k_lasso` predictors once per `(f, j)`; the configured estimator is then
//! refitted on `B` stratified bootstrap resamples and the per-bootstrap ranks
//! of the preselected predictors (by descending absolute coefficient) are
//! averaged. Predictors that were not preselected share rank `k_lasso + 1`.
//!
//! A pair `(i, j)` whose cause `i` was knocked out takes its score from the
//! model of the fold holding `i`'s knockout row. Causes that were never
//! knocked out have no held-out fold and take the mean over all folds.
//! Pairs are ordered globally by aggregated rank, then by descending
//! absolute aggregated coefficient; exact ties share their average rank.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_l1r, fit_lasso_k, fit_with_fallback, CoefficientVector, Estimator};
use crate::scoring::{average_ranks, GenePair, RankedPredictions};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of_row: Vec<usize>,
}

impl FoldAssignment {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of_row {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Uniformly random balanced partition of `n2` rows into `k` folds.
pub fn make_folds(n2: usize, k: usize, seed_value: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::contract(format!("need at least 2 folds, got {k}")));
    }
    if n2 < k {
        return Err(Error::contract(format!(
            "{n2} interventional rows cannot fill {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n2).collect();
    order.shuffle(&mut seed::task_rng(seed_value, &[u64::MAX]));
    let mut fold_of_row = vec![0; n2];
    for (pos, &row) in order.iter().enumerate() {
        fold_of_row[row] = pos % k;
    }
    Ok(FoldAssignment { k, fold_of_row })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub folds: usize,
    pub bootstraps: usize,
    pub k_lasso: usize,
    pub alpha: f64,
    pub seed: u64,
    pub estimator: Estimator,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            folds: 3,
            bootstraps: 100,
            k_lasso: 4,
            alpha: 0.05,
            seed: 0,
            estimator: Estimator::L1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::validation(format!(
                "folds: need at least 2, got {}",
                self.folds
            )));
        }
        if self.bootstraps == 0 {
            return Err(Error::validation("bootstraps: need at least 1"));
        }
        if self.k_lasso == 0 || self.k_lasso > 16 {
            return Err(Error::validation(format!(
                "k_lasso: must lie in [1, 16], got {}",
                self.k_lasso
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::validation(format!(
                "alpha: must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Aggregated result of one `(fold, target)` task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub fold: usize,
    pub target: usize,
    pub preselected: Vec<usize>,
    /// Mean within-target rank of each preselected predictor.
    pub mean_rank: Vec<f64>,
    pub mean_coef: Vec<f64>,
    /// Bootstraps in which CD/ICP fell back to the permuted Lasso.
    pub fallbacks: usize,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub jobs: Option<usize>,
    /// Checkpoint file for resuming long runs.
    pub checkpoint: Option<PathBuf>,
    /// Record training rows and score provenance for leakage auditing.
    pub audit: bool,
}

/// Training rows and scored causes of one `(fold, target)` model.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskAudit {
    pub fold: usize,
    pub target: usize,
    pub training_intv_rows: Vec<usize>,
    /// Knocked-out causes whose pair `(cause, target)` was scored by this
    /// model alone.
    pub scored_causes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub predictions: RankedPredictions,
    pub folds: FoldAssignment,
    pub tasks: Vec<TaskResult>,
    pub audit: Vec<TaskAudit>,
}

/// Elementwise mean of equally long rank vectors.
pub fn bootstrap_rank_aggregate(per_bootstrap: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = per_bootstrap
        .first()
        .ok_or_else(|| Error::contract("need at least one bootstrap rank vector"))?;
    if per_bootstrap.iter().any(|v| v.len() != first.len()) {
        return Err(Error::contract("bootstrap rank vectors differ in length"));
    }
    let b = per_bootstrap.len() as f64;
    Ok((0..first.len())
        .map(|i| per_bootstrap.iter().map(|v| v[i]).sum::<f64>() / b)
        .collect())
}

pub(crate) fn training_intv_rows(
    ds: &Dataset,
    folds: &FoldAssignment,
    fold: usize,
    target: usize,
) -> Vec<usize> {
    (0..ds.n2())
        .filter(|&r| folds.fold_of_row[r] != fold && ds.knockout_map()[r] != target)
        .collect()
}

fn resample<R: Rng + ?Sized>(rows: &[usize], rng: &mut R) -> Vec<usize> {
    if rows.is_empty() {
        return Vec::new();
    }
    (0..rows.len())
        .map(|_| rows[rng.random_range(0..rows.len())])
        .collect()
}

/// Within-bootstrap ranks: 1 for the largest absolute coefficient, average
/// ranks over ties.
fn coefficient_ranks(coefs: &[f64]) -> Vec<f64> {
    average_ranks(&coefs.iter().map(|c| -c.abs()).collect::<Vec<_>>())
}

fn run_task(
    ds: &Dataset,
    cfg: &PipelineConfig,
    folds: &FoldAssignment,
    fold: usize,
    target: usize,
) -> Result<TaskResult> {
    let predictors: Vec<usize> = (0..ds.p()).filter(|&g| g != target).collect();
    let train_intv = training_intv_rows(ds, folds, fold, target);
    let obs_rows: Vec<usize> = (0..ds.n1()).collect();
    let (obs, intv) =
        ds.environment_views_with_rows(target, &predictors, &obs_rows, &train_intv)?;
    let k = cfg.k_lasso.min(predictors.len());
    let lasso = fit_lasso_k(&obs, &intv, k)?;
    let preselected: Vec<usize> = lasso.support().iter().map(|&i| predictors[i]).collect();
    let mut result = TaskResult {
        fold,
        target,
        preselected: preselected.clone(),
        mean_rank: Vec::new(),
        mean_coef: Vec::new(),
        fallbacks: 0,
    };
    if preselected.is_empty() {
        return Ok(result);
    }

    let mut ranks = Vec::with_capacity(cfg.bootstraps);
    let mut coef_sum = vec![0.0; preselected.len()];
    for b in 0..cfg.bootstraps {
        let mut rng = seed::task_rng(cfg.seed, &[fold as u64, target as u64, b as u64]);
        let boot_obs = resample(&obs_rows, &mut rng);
        let boot_intv = resample(&train_intv, &mut rng);
        let (bo, bi) =
            ds.environment_views_with_rows(target, &preselected, &boot_obs, &boot_intv)?;
        let lasso_b = fit_lasso_k(&bo, &bi, preselected.len())?;
        let l1r_b = fit_l1r(&lasso_b, &mut rng);
        let coefs: CoefficientVector = match cfg.estimator {
            Estimator::CD if bi.n_samples() == 0 => {
                result.fallbacks += 1;
                l1r_b
            }
            Estimator::ICP if bi.n_samples() < 2 => {
                result.fallbacks += 1;
                l1r_b
            }
            est => {
                let out = fit_with_fallback(est, &bo, &bi, &lasso_b, &l1r_b, cfg.alpha)?;
                result.fallbacks += out.fell_back as usize;
                out.coefficients
            }
        };
        for (s, c) in coef_sum.iter_mut().zip(&coefs.values) {
            *s += c;
        }
        ranks.push(coefficient_ranks(&coefs.values));
    }
    result.mean_rank = bootstrap_rank_aggregate(&ranks)?;
    result.mean_coef = coef_sum.iter().map(|s| s / cfg.bootstraps as f64).collect();
    Ok(result)
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    config: PipelineConfig,
    p: usize,
    n1: usize,
    n2: usize,
    tasks: Vec<TaskResult>,
}

fn load_checkpoint(
    path: &Path,
    ds: &Dataset,
    cfg: &PipelineConfig,
) -> Result<BTreeMap<(usize, usize), TaskResult>> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if ck.config != *cfg || (ck.p, ck.n1, ck.n2) != (ds.p(), ds.n1(), ds.n2()) {
        return Err(Error::validation(format!(
            "checkpoint {} was written for a different dataset or configuration",
            path.display()
        )));
    }
    Ok(ck
        .tasks
        .into_iter()
        .map(|t| ((t.fold, t.target), t))
        .collect())
}

fn save_checkpoint(
    path: &Path,
    ds: &Dataset,
    cfg: &PipelineConfig,
    tasks: &BTreeMap<(usize, usize), TaskResult>,
) -> Result<()> {
    let ck = Checkpoint {
        config: cfg.clone(),
        p: ds.p(),
        n1: ds.n1(),
        n2: ds.n2(),
        tasks: tasks.values().cloned().collect(),
    };
    let tmp = path.with_extension("tmp");
    let text = serde_json::to_string(&ck).expect("checkpoint serializes");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn rank_all_pairs(ds: &Dataset, cfg: &PipelineConfig) -> Result<RankedPredictions> {
    Ok(rank_all_pairs_with(ds, cfg, &PipelineOptions::default())?.predictions)
}

pub fn rank_all_pairs_with(
    ds: &Dataset,
    cfg: &PipelineConfig,
    opts: &PipelineOptions,
) -> Result<PipelineRun> {
    cfg.validate()?;
    match opts.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| Error::validation(format!("cannot start {jobs} workers: {e}")))?;
            pool.install(|| run_pipeline(ds, cfg, opts))
        }
        None => run_pipeline(ds, cfg, opts),
    }
}

fn run_pipeline(ds: &Dataset, cfg: &PipelineConfig, opts: &PipelineOptions) -> Result<PipelineRun> {
    let folds = make_folds(ds.n2(), cfg.folds, cfg.seed)?;
    let mut done = match &opts.checkpoint {
        Some(path) => load_checkpoint(path, ds, cfg)?,
        None => BTreeMap::new(),
    };
    for fold in 0..cfg.folds {
        let pending: Vec<usize> = (0..ds.p())
            .filter(|t| !done.contains_key(&(fold, *t)))
            .collect();
        if pending.is_empty() {
            continue;
        }
        let fresh: Vec<TaskResult> = pending
            .into_par_iter()
            .map(|target| run_task(ds, cfg, &folds, fold, target))
            .collect::<Result<_>>()?;
        done.extend(fresh.into_iter().map(|t| ((t.fold, t.target), t)));
        if let Some(path) = &opts.checkpoint {
            save_checkpoint(path, ds, cfg, &done)?;
        }
    }
    let tasks: Vec<TaskResult> = done.into_values().collect();
    assemble(ds, cfg, folds, tasks, opts.audit)
}

fn assemble(
    ds: &Dataset,
    cfg: &PipelineConfig,
    folds: FoldAssignment,
    tasks: Vec<TaskResult>,
    audit: bool,
) -> Result<PipelineRun> {
    let p = ds.p();
    let worst = (cfg.k_lasso + 1) as f64;
    let index = |fold: usize, target: usize| fold * p + target;
    if tasks.len() != cfg.folds * p {
        return Err(Error::contract(format!(
            "expected {} tasks, have {}",
            cfg.folds * p,
            tasks.len()
        )));
    }
    let mut by_slot: Vec<Option<&TaskResult>> = vec![None; cfg.folds * p];
    for t in &tasks {
        by_slot[index(t.fold, t.target)] = Some(t);
    }
    let task =
        |fold: usize, target: usize| by_slot[index(fold, target)].expect("every task present");

    // Dense per-task lookup of (rank, coef) for one predictor.
    let score = |t: &TaskResult, gene: usize| -> (f64, f64) {
        match t.preselected.iter().position(|&g| g == gene) {
            Some(k) => (t.mean_rank[k], t.mean_coef[k]),
            None => (worst, 0.0),
        }
    };

    let mut audits: Vec<TaskAudit> = if audit {
        tasks
            .iter()
            .map(|t| TaskAudit {
                fold: t.fold,
                target: t.target,
                training_intv_rows: training_intv_rows(ds, &folds, t.fold, t.target),
                scored_causes: Vec::new(),
            })
            .collect()
    } else {
        Vec::new()
    };
    let audit_slot: BTreeMap<(usize, usize), usize> = audits
        .iter()
        .enumerate()
        .map(|(k, a)| ((a.fold, a.target), k))
        .collect();

    let mut keyed = Vec::with_capacity(p * (p - 1));
    for cause in 0..p {
        let home_fold = ds.knockout_row(cause).map(|r| folds.fold_of_row[r]);
        for effect in (0..p).filter(|&e| e != cause) {
            let (rank, coef) = match home_fold {
                Some(f) => {
                    if audit {
                        audits[audit_slot[&(f, effect)]].scored_causes.push(cause);
                    }
                    score(task(f, effect), cause)
                }
                None => {
                    let (rs, cs) = (0..cfg.folds)
                        .map(|f| score(task(f, effect), cause))
                        .fold((0.0, 0.0), |acc, (r, c)| (acc.0 + r, acc.1 + c));
                    (rs / cfg.folds as f64, cs / cfg.folds as f64)
                }
            };
            keyed.push((GenePair::new(cause, effect), rank, coef.abs()));
        }
    }

    let mut order: Vec<usize> = (0..keyed.len()).collect();
    let cmp = |a: &(GenePair, f64, f64), b: &(GenePair, f64, f64)| {
        a.1.total_cmp(&b.1).then(b.2.total_cmp(&a.2))
    };
    order.sort_by(|&a, &b| cmp(&keyed[a], &keyed[b]));
    let mut predictions = RankedPredictions::new(p);
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && cmp(&keyed[order[start]], &keyed[order[end]]).is_eq() {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            predictions.set(keyed[k].0, avg);
        }
        start = end;
    }

    Ok(PipelineRun {
        predictions,
        folds,
        tasks,
        audit: audits,
    })
}

/// Scored pairs `(i, j)` whose model saw `i`'s knockout row in training.
pub fn leakage_violations(ds: &Dataset, run: &PipelineRun) -> usize {
    run.audit
        .iter()
        .map(|a| {
            a.scored_causes
                .iter()
                .filter(|&&cause| {
                    let row = ds
                        .knockout_row(cause)
                        .expect("scored causes were knocked out");
                    a.training_intv_rows.binary_search(&row).is_ok()
                })
                .count()
        })
        .sum()
}
