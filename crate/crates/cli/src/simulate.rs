use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use anyhow::{Context, Result};
use kobias_core::seed;
use kobias_core::simulator::{
    results_table_tsv, run_trials_resumable, simulate_dataset, CellResult, TrialOutcome,
};
use serde::{Deserialize, Serialize};

use crate::config::SimulateConfig;
use crate::manifest::{check_resumable, tracked, Run};

pub const CHECKPOINT: &str = ".trials.jsonl";

#[derive(Serialize, Deserialize)]
struct Line {
    cell: usize,
    trial: usize,
    outcome: TrialOutcome,
}

/// Reads finished trials; a torn final line from an interrupted write is
/// skipped.
fn read_checkpoint(path: &Path) -> Result<BTreeMap<usize, BTreeMap<usize, TrialOutcome>>> {
    let mut done: BTreeMap<usize, BTreeMap<usize, TrialOutcome>> = BTreeMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    for line in BufReader::new(file).lines() {
        if let Ok(l) = serde_json::from_str::<Line>(&line?) {
            done.entry(l.cell).or_default().insert(l.trial, l.outcome);
        }
    }
    Ok(done)
}

pub fn run(cfg: &SimulateConfig, out: &Path, resume: bool) -> Result<()> {
    let cells = cfg.cells()?;
    let ck_path = out.join(CHECKPOINT);
    let done = if resume {
        check_resumable(out, "simulate", cfg)?;
        read_checkpoint(&ck_path)?
    } else {
        if ck_path.exists() {
            fs::remove_file(&ck_path)?;
        }
        BTreeMap::new()
    };

    tracked(out, "simulate", cfg.seed, cfg, |run: &mut Run| {
        let writer = Mutex::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(&ck_path)
                .with_context(|| format!("opening {}", ck_path.display()))?,
        );
        let empty = BTreeMap::new();
        let mut results = Vec::with_capacity(cells.len());
        for (idx, (cell, &full_n_t)) in cells.iter().zip(cfg.n_t.iter().cycle()).enumerate() {
            let log = |trial: usize, outcome: &TrialOutcome| {
                let mut line = serde_json::to_string(&Line {
                    cell: idx,
                    trial,
                    outcome: *outcome,
                })
                .expect("trial serializes");
                line.push('\n');
                let mut w = writer.lock().expect("checkpoint writer");
                // Losing a checkpoint line only costs a recomputation.
                let _ = w.write_all(line.as_bytes()).and_then(|_| w.flush());
            };
            let summary = run_trials_resumable(cell, done.get(&idx).unwrap_or(&empty), &log)
                .with_context(|| {
                    format!(
                        "cell p0={} regime={} n_t={}",
                        cell.p0,
                        cell.regime.name(),
                        cell.n_t
                    )
                })?;
            eprintln!(
                "p0={} {} n_t={}: {}",
                cell.p0,
                cell.regime.name(),
                full_n_t,
                cfg.estimators
                    .iter()
                    .map(|e| format!("{e}={:.2}", summary.mean(*e)))
                    .collect::<Vec<_>>()
                    .join(" ")
            );
            results.push(CellResult {
                n_t: full_n_t,
                p0: cell.p0,
                regime: cell.regime,
                summary,
            });
        }

        run.write(
            "results_table.tsv",
            &results_table_tsv(&results, &cfg.estimators),
        )?;
        let mut cells_json = serde_json::to_string_pretty(&results)?;
        cells_json.push('\n');
        run.write("cell_summaries.json", &cells_json)?;
        if cfg.emit_dataset {
            let first = &cells[0];
            let (ds, _) = simulate_dataset(first, seed::derive(first.seed, &[0]))?;
            fs::create_dir_all(run.dir().join("dataset"))?;
            let rels = ["dataset/obs.tsv", "dataset/intv.tsv", "dataset/meta.json"];
            for rel in rels {
                run.record(rel);
            }
            let p = |rel: &str| run.dir().join(rel);
            ds.save(&p(rels[0]), &p(rels[1]), &p(rels[2]))?;
        }
        run.set_summary(serde_json::json!({ "cells": results.len() }));
        drop(writer);
        fs::remove_file(&ck_path)?;
        Ok(())
    })
}
