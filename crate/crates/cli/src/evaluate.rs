use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use kobias_core::dataset::{load_dataset, Dataset};
use kobias_core::pipeline::{rank_all_pairs_with, PipelineOptions};
use kobias_core::scoring::{
    build_scoring_set, derive_ground_truth, flipped_rank_report, flipped_ranks_to_tsv, roc_points,
    roc_to_tsv, GroundTruth,
};

use crate::config::{DatasetPaths, EvaluateConfig};
use crate::manifest::{check_resumable, tracked, Run};

fn checkpoint_name(est: &str) -> String {
    format!(".checkpoint_{est}.json")
}

/// `paths` must already be resolved against the config file's directory.
pub fn run(cfg: &EvaluateConfig, paths: &DatasetPaths, out: &Path, resume: bool) -> Result<()> {
    cfg.validate()?;
    if resume {
        check_resumable(out, "evaluate", cfg)?;
    } else {
        for est in &cfg.estimators {
            let path = out.join(checkpoint_name(est.name()));
            if path.exists() {
                fs::remove_file(&path)?;
            }
        }
    }

    tracked(out, "evaluate", cfg.pipeline.seed, cfg, |run: &mut Run| {
        let ds = load_dataset(&paths.obs, &paths.intv, &paths.meta).context("loading dataset")?;
        let gt = derive_ground_truth(&ds);
        let ss = build_scoring_set(&gt, cfg.scoring);
        if ss.is_empty() {
            // Nothing to score; the pipeline is skipped since it may not even
            // be able to form folds (e.g. a single knockout).
            eprintln!(
                "warning: the {} scoring set is empty ({} knockouts); writing header-only outputs",
                cfg.scoring.name(),
                ds.n2()
            );
            for est in &cfg.estimators {
                run.write(
                    &format!("roc_{}_{}.tsv", est.name(), cfg.scoring.name()),
                    &roc_to_tsv(&[]),
                )?;
            }
            run.write(
                "flipped_ranks.tsv",
                &flipped_ranks_to_tsv(&[], ds.gene_names()),
            )?;
            run.set_summary(summary(&ds, &gt, cfg, 0));
            return Ok(());
        }
        let mut flipped = Vec::new();
        for &est in &cfg.estimators {
            let ck = out.join(checkpoint_name(est.name()));
            let opts = PipelineOptions {
                checkpoint: Some(ck.clone()),
                ..Default::default()
            };
            let result = rank_all_pairs_with(&ds, &cfg.pipeline.for_estimator(est), &opts)
                .with_context(|| format!("running the {est} pipeline"))?;
            let points = roc_points(&result.predictions, &gt, &ss)?;
            run.write(
                &format!("roc_{}_{}.tsv", est.name(), cfg.scoring.name()),
                &roc_to_tsv(&points),
            )?;
            let label = (cfg.estimators.len() > 1).then_some(est.name());
            for row in flipped_rank_report(&result.predictions, &gt, cfg.top_n)? {
                flipped.push((label, row));
            }
            if ck.exists() {
                fs::remove_file(&ck).with_context(|| format!("removing {}", ck.display()))?;
            }
            eprintln!("{est}: ranked {} pairs", result.predictions.len());
        }
        run.write(
            "flipped_ranks.tsv",
            &flipped_ranks_to_tsv(&flipped, ds.gene_names()),
        )?;
        run.set_summary(summary(&ds, &gt, cfg, ss.len()));
        Ok(())
    })
}

fn summary(
    ds: &Dataset,
    gt: &GroundTruth,
    cfg: &EvaluateConfig,
    scoring_set_size: usize,
) -> serde_json::Value {
    serde_json::json!({
        "p": ds.p(),
        "n1": ds.n1(),
        "n2": ds.n2(),
        "ground_truth_pairs": gt.domain_size(),
        "true_pairs": gt.count_true(),
        "scoring_set": cfg.scoring.name(),
        "scoring_set_size": scoring_set_size,
    })
}
