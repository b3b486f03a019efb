//! End-to-end acceptance checks, one report line per criterion.
//!
//! Criteria that cannot be met at desk scale are still evaluated at their
//! stated tolerance and reported as FAIL; they only fail the process under
//! `--strict`. Any other failure always does.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use kobias_core::estimators::{
    causal_dantzig_raw, fit_l1r, lasso_path, CoefficientVector, Estimator, LassoSettings,
};
use kobias_core::pipeline::{
    leakage_violations, rank_all_pairs_with, PipelineConfig, PipelineOptions,
};
use kobias_core::scoring::{
    build_scoring_set, roc_points, top_p0_hits, GenePair, GroundTruth, RankedPredictions,
    ScoringKind,
};
use kobias_core::seed;
use kobias_core::simulator::{generate_dag, simulate_dataset, Regime, SimConfig, PAPER_NT};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;
use rand_distr::StandardNormal;

struct Check {
    id: &'static str,
    what: &'static str,
    pass: bool,
    /// Failure is explained by the scale or data limits of this check.
    known_gap: bool,
    detail: String,
}

fn check(id: &'static str, what: &'static str, pass: bool, detail: String) -> Check {
    Check {
        id,
        what,
        pass,
        known_gap: false,
        detail,
    }
}

fn gap(mut c: Check) -> Check {
    c.known_gap = true;
    c
}

fn normal(rng: &mut seed::Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn kobias(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_kobias"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "kobias {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `(p0, n_t) -> column -> value` from a results table.
type Table = BTreeMap<(usize, u64), BTreeMap<String, f64>>;

fn parse_table(text: &str) -> Table {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    lines
        .map(|line| {
            let cells: Vec<&str> = line.split('\t').collect();
            let key = (cells[0].parse().unwrap(), cells[1].parse().unwrap());
            let cols = header[2..]
                .iter()
                .zip(&cells[2..])
                .map(|(h, v)| (h.to_string(), v.parse().unwrap()))
                .collect();
            (key, cols)
        })
        .collect()
}

fn table3() -> Vec<Check> {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let start = Instant::now();
    // The default sweep is the reduced-scale replication: p = 400, N = 100.
    kobias(&["simulate", "--out", s(&out)]);
    let secs = start.elapsed().as_secs_f64();
    let table = parse_table(&fs::read_to_string(out.join("results_table.tsv")).unwrap());
    let v = |p0: usize, n_t: u64, col: &str| table[&(p0, n_t)][col];
    let cells: Vec<(usize, u64)> = table.keys().copied().collect();
    assert_eq!(cells.len(), 10);

    let failing = |pred: &dyn Fn(usize, u64) -> Option<String>| -> Vec<String> {
        cells
            .iter()
            .filter_map(|&(p0, n_t)| pred(p0, n_t))
            .collect()
    };
    let summary = |bad: &[String]| {
        if bad.is_empty() {
            format!("all cells ({secs:.0} s sweep)")
        } else {
            bad.join(", ")
        }
    };

    let l1_strong = failing(&|p0, n_t| {
        let x = v(p0, n_t, "Strong_L1");
        (x < 0.95 * p0 as f64).then(|| format!("p0={p0} n_t={n_t}: {x:.2}"))
    });
    let l1_weak = failing(&|p0, n_t| {
        let x = v(p0, n_t, "Weak_L1");
        (x > 0.05 * p0 as f64).then(|| format!("p0={p0} n_t={n_t}: {x:.2}"))
    });
    let l1r = failing(&|p0, n_t| {
        let (lo, hi) = if p0 == 1 { (0.13, 0.37) } else { (0.8, 1.2) };
        ["Strong_L1R", "Weak_L1R"]
            .iter()
            .map(|c| v(p0, n_t, c))
            .find(|x| !(lo..=hi).contains(x))
            .map(|x| format!("p0={p0} n_t={n_t}: {x:.2}"))
    });
    let mut ordering = Vec::new();
    let mut ordering_ok = true;
    for p0 in [1, 2] {
        let held = PAPER_NT
            .iter()
            .filter(|&&n_t| {
                let n_t = n_t as u64;
                let (l1r, cd, l1) = (
                    v(p0, n_t, "Strong_L1R"),
                    v(p0, n_t, "Strong_CD"),
                    v(p0, n_t, "Strong_L1"),
                );
                l1r < cd && cd < l1
            })
            .count();
        ordering_ok &= held >= 4;
        ordering.push(format!("p0={p0}: {held}/5"));
    }
    let icp = failing(&|p0, n_t| {
        ["Strong", "Weak"].iter().find_map(|r| {
            let d = (v(p0, n_t, &format!("{r}_ICP")) - v(p0, n_t, &format!("{r}_L1R"))).abs();
            (d > 0.15).then(|| format!("{r} p0={p0} n_t={n_t}: {d:.2}"))
        })
    });

    vec![
        gap(check(
            "1a",
            "L1 Strong mean >= 0.95 p0",
            l1_strong.is_empty(),
            summary(&l1_strong),
        )),
        gap(check(
            "1b",
            "L1 Weak mean <= 0.05 p0",
            l1_weak.is_empty(),
            summary(&l1_weak),
        )),
        check(
            "1c",
            "L1R mean within binomial band",
            l1r.is_empty(),
            summary(&l1r),
        ),
        gap(check(
            "1d",
            "L1R < CD < L1 (Strong) in >= 4 of 5 n_t",
            ordering_ok,
            ordering.join(", "),
        )),
        gap(check(
            "1e",
            "ICP within 0.15 of L1R",
            icp.is_empty(),
            summary(&icp),
        )),
    ]
}

fn scoring_set_sizes() -> Vec<Check> {
    let start = Instant::now();
    let (p, n2) = (6170, 1479);
    let knockouts: Vec<usize> = (0..n2).map(|k| k * 4).collect();
    let gt = GroundTruth::from_fn(p, knockouts, |_, _| false).unwrap();
    let sym = build_scoring_set(&gt, ScoringKind::Symmetric).len();
    let full = build_scoring_set(&gt, ScoringKind::Full).len();
    let secs = start.elapsed().as_secs_f64();
    vec![
        check(
            "2a",
            "symmetric set size 2,185,962",
            sym == 2_185_962 && secs < 1.0,
            format!("{sym} in {secs:.3} s"),
        ),
        gap(check(
            "2b",
            "full set size 9,125,430",
            full == 9_125_430 && secs < 1.0,
            format!("{full} = n2 (p - 1) in {secs:.3} s"),
        )),
    ]
}

/// Centered columns with `x_j . x_k / n = delta_jk`.
fn orthonormal_design(n: usize, m: usize, rng: &mut seed::Rng) -> DMatrix<f64> {
    let mut basis = vec![DVector::from_element(n, 1.0 / (n as f64).sqrt())];
    let mut x = DMatrix::zeros(n, m);
    for j in 0..m {
        let mut v = DVector::from_fn(n, |_, _| normal(rng));
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        v /= v.norm();
        basis.push(v.clone());
        x.set_column(j, &(v * (n as f64).sqrt()));
    }
    x
}

fn lasso_oracle() -> Vec<Check> {
    let n = 50;
    let mut worst: f64 = 0.0;
    for s in 0..200u64 {
        let mut rng = seed::rng(50_000 + s);
        let m = 1 + (s as usize % 10);
        let x = orthonormal_design(n, m, &mut rng);
        let beta: Vec<f64> = (0..m).map(|_| 2.0 * normal(&mut rng)).collect();
        let y = DVector::from_fn(n, |i, _| {
            (0..m).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + 0.5 * normal(&mut rng) - 3.0
        });
        let ybar = y.mean();
        let z: Vec<f64> = (0..m)
            .map(|j| (0..n).map(|i| x[(i, j)] * (y[i] - ybar)).sum::<f64>() / n as f64)
            .collect();
        let path = lasso_path(&x, &y, &LassoSettings::default());
        for (lambda, coefs) in path.lambdas.iter().zip(&path.coefs) {
            for j in 0..m {
                let soft = z[j].signum() * (z[j].abs() - lambda).max(0.0);
                worst = worst.max((coefs[j] - soft).abs());
            }
        }
    }
    vec![check(
        "3",
        "Lasso path vs soft-thresholding (200 problems)",
        worst < 1e-6,
        format!("max error {worst:.2e}"),
    )]
}

/// Sample-by-sample `(G1 - G2, h1 - h2)`.
fn moment_difference(
    x1: &DMatrix<f64>,
    y1: &DVector<f64>,
    x2: &DMatrix<f64>,
    y2: &DVector<f64>,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = x1.ncols();
    let mut g = vec![vec![0.0; m]; m];
    let mut h = vec![0.0; m];
    for (x, y, sign) in [(x1, y1, 1.0), (x2, y2, -1.0)] {
        let n = x.nrows() as f64;
        for i in 0..x.nrows() {
            for a in 0..m {
                h[a] += sign * x[(i, a)] * y[i] / n;
                for b in 0..m {
                    g[a][b] += sign * x[(i, a)] * x[(i, b)] / n;
                }
            }
        }
    }
    (g, h)
}

fn dantzig_oracle() -> Vec<Check> {
    let n = 10_000;
    let (mut worst_oracle, mut worst_truth): (f64, f64) = (0.0, 0.0);
    for s in 0..100u64 {
        let mut rng = seed::rng(60_000 + s);
        let b = rng.random_range(-2.0..2.0);
        let (x1, y1, x2, y2, truth) = if s % 2 == 0 {
            let mut draw = |shift: f64| {
                let x = DMatrix::from_fn(n, 1, |_, _| normal(&mut rng) + shift);
                let y = DVector::from_fn(n, |i, _| b * x[(i, 0)] + normal(&mut rng));
                (x, y)
            };
            let (x1, y1) = draw(0.0);
            let (x2, y2) = draw(-40.0);
            (x1, y1, x2, y2, vec![b])
        } else {
            // X2 is a child of X1 only; environment 2 pools knockouts of each.
            let c = rng.random_range(-1.0..1.0);
            let mut draw = |pooled: bool| {
                let mut x = DMatrix::zeros(n, 2);
                let mut y = DVector::zeros(n);
                for i in 0..n {
                    let (s1, s2) = match (pooled, i % 2) {
                        (false, _) => (0.0, 0.0),
                        (true, 0) => (-40.0, 0.0),
                        (true, _) => (0.0, -40.0),
                    };
                    let a = normal(&mut rng) + s1;
                    x[(i, 0)] = a;
                    x[(i, 1)] = c * a + normal(&mut rng) + s2;
                    y[i] = b * a + normal(&mut rng);
                }
                (x, y)
            };
            let (x1, y1) = draw(false);
            let (x2, y2) = draw(true);
            (x1, y1, x2, y2, vec![b, 0.0])
        };
        let (g, h) = moment_difference(&x1, &y1, &x2, &y2);
        let oracle = if truth.len() == 1 {
            vec![h[0] / g[0][0]]
        } else {
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            vec![
                (h[0] * g[1][1] - g[0][1] * h[1]) / det,
                (g[0][0] * h[1] - h[0] * g[1][0]) / det,
            ]
        };
        let est = causal_dantzig_raw(&x1, &y1, &x2, &y2).unwrap();
        for k in 0..truth.len() {
            worst_oracle = worst_oracle.max((est[k] - oracle[k]).abs() / oracle[k].abs().max(1.0));
            worst_truth = worst_truth.max((est[k] - truth[k]).abs());
        }
    }
    vec![check(
        "4",
        "Causal Dantzig vs linear-solve oracle and truth (100 problems)",
        worst_oracle <= 1e-10 && worst_truth < 0.05,
        format!("oracle gap {worst_oracle:.1e}, truth gap {worst_truth:.3}"),
    )]
}

fn roc_oracle(mut items: Vec<(f64, bool)>) -> Vec<(f64, usize, usize)> {
    items.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out = vec![(0.0, 0, 0)];
    let (mut fp, mut tp) = (0, 0);
    for (idx, &(rank, truth)) in items.iter().enumerate() {
        if truth {
            tp += 1;
        } else {
            fp += 1;
        }
        if idx + 1 == items.len() || items[idx + 1].0 != rank {
            out.push((rank, fp, tp));
        }
    }
    out
}

fn roc_equivalence() -> Vec<Check> {
    let mut mismatches = 0;
    let mut max_pairs = 0;
    for s in 0..500u64 {
        let mut rng = seed::rng(70_000 + s);
        let p = rng.random_range(2..=32);
        let knockouts: Vec<usize> = (0..p).filter(|_| rng.random_bool(0.6)).collect();
        let density = rng.random_range(0.0..1.0);
        let truth: Vec<bool> = (0..p * p).map(|_| rng.random_bool(density)).collect();
        let gt = GroundTruth::from_fn(p, knockouts, |i, j| truth[i * p + j]).unwrap();
        let levels = rng.random_range(1..50);
        let mut rp = RankedPredictions::new(p);
        for i in 0..p {
            for j in (0..p).filter(|&j| j != i) {
                rp.set(
                    GenePair::new(i, j),
                    rng.random_range(0..levels) as f64 * 0.5 + 1.0,
                );
            }
        }
        let kind = if s % 2 == 0 {
            ScoringKind::Full
        } else {
            ScoringKind::Symmetric
        };
        let ss = build_scoring_set(&gt, kind);
        max_pairs = max_pairs.max(ss.len());
        let items = ss
            .pairs()
            .map(|pr| (rp.rank(pr).unwrap(), gt.get(pr).unwrap()))
            .collect();
        let got: Vec<(f64, usize, usize)> = roc_points(&rp, &gt, &ss)
            .unwrap()
            .iter()
            .map(|pt| (pt.rank_threshold, pt.fp, pt.tp))
            .collect();
        mismatches += (got != roc_oracle(items)) as usize;
    }
    vec![check(
        "5",
        "ROC points vs sort-and-scan oracle (500 instances)",
        mismatches == 0 && max_pairs <= 1000,
        format!("{mismatches} mismatches, largest set {max_pairs} pairs"),
    )]
}

fn leakage() -> Vec<Check> {
    let cfg = SimConfig {
        p: 60,
        n_t: 6.0,
        n1: 40,
        n2: 15,
        ..SimConfig::full_scale(20.0, 1, Regime::Strong)
    };
    let (ds, _) = simulate_dataset(&cfg, 9).unwrap();
    let opts = PipelineOptions {
        audit: true,
        ..Default::default()
    };
    let mut violations = 0;
    let mut scored = 0;
    for est in Estimator::ALL {
        let pc = PipelineConfig {
            folds: 3,
            bootstraps: 3,
            estimator: est,
            ..PipelineConfig::default()
        };
        let run = rank_all_pairs_with(&ds, &pc, &opts).unwrap();
        violations += leakage_violations(&ds, &run);
        scored += run
            .audit
            .iter()
            .map(|a| a.scored_causes.len())
            .sum::<usize>();
    }
    vec![check(
        "6",
        "no scored pair trained on its own knockout",
        violations == 0 && scored == 4 * ds.count_ground_truth_pairs(),
        format!("{violations} violations over {scored} audited scores"),
    )]
}

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "manifest.json" {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Vec<Check> {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let sim = root.join("sim.toml");
    fs::write(
        &sim,
        "p = 100\ntrials = 5\nseed = 42\nemit_dataset = true\n",
    )
    .unwrap();
    kobias(&[
        "--jobs",
        "1",
        "simulate",
        "--config",
        s(&sim),
        "--out",
        s(&root.join("s1")),
    ]);
    kobias(&[
        "--jobs",
        "4",
        "simulate",
        "--config",
        s(&sim),
        "--out",
        s(&root.join("s2")),
    ]);
    let (s1, s2) = (outputs(&root.join("s1")), outputs(&root.join("s2")));

    let eval = root.join("eval.toml");
    fs::write(
        &eval,
        "[dataset]\nobs = \"s1/dataset/obs.tsv\"\nintv = \"s1/dataset/intv.tsv\"\nmeta = \"s1/dataset/meta.json\"\n\
         [pipeline]\nbootstraps = 5\nseed = 42\n",
    )
    .unwrap();
    kobias(&[
        "--jobs",
        "1",
        "evaluate",
        "--config",
        s(&eval),
        "--out",
        s(&root.join("e1")),
    ]);
    kobias(&[
        "--jobs",
        "4",
        "evaluate",
        "--config",
        s(&eval),
        "--out",
        s(&root.join("e2")),
    ]);
    let (e1, e2) = (outputs(&root.join("e1")), outputs(&root.join("e2")));
    vec![check(
        "7",
        "simulate and evaluate reruns are byte-identical",
        s1 == s2 && e1 == e2 && s1.len() == 5 && e1.len() == 5,
        format!(
            "{} simulate and {} evaluate files compared",
            s1.len(),
            e1.len()
        ),
    )]
}

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    })
}

fn property(id: &'static str, what: &'static str, result: Result<(), String>) -> Check {
    let pass = result.is_ok();
    check(
        id,
        what,
        pass,
        result.err().unwrap_or_else(|| "1000 cases".into()),
    )
}

fn dag_strategy() -> impl Strategy<Value = (SimConfig, u64)> {
    (
        (4usize..60).prop_map(|p| p * 2),
        0.01..1.0f64,
        1usize..=2,
        any::<bool>(),
        any::<u64>(),
    )
        .prop_map(|(p, density, p0, weak, s)| {
            let cfg = SimConfig {
                p,
                n_t: (density * p as f64).max(0.5),
                n2: p / 4,
                ..SimConfig::full_scale(20.0, p0, if weak { Regime::Weak } else { Regime::Strong })
            };
            (cfg, s)
        })
}

fn invariants() -> Vec<Check> {
    let acyclic = runner()
        .run(&dag_strategy(), |(cfg, s)| {
            let a = generate_dag(&cfg, &mut seed::rng(s)).unwrap();
            let dense = a.to_dense();
            for i in 0..a.size() {
                for j in 0..=i {
                    prop_assert_eq!(dense[(i, j)], 0.0);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string());
    let norms = runner()
        .run(&dag_strategy(), |(cfg, s)| {
            let a = generate_dag(&cfg, &mut seed::rng(s)).unwrap();
            for j in 0..a.size() {
                let norm = a.column_norm(j);
                prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12);
            }
            Ok(())
        })
        .map_err(|e| e.to_string());
    let closure = runner()
        .run(
            &(2usize..40, prop::collection::btree_set(0usize..40, 0..40)),
            |(p, picks)| {
                let knocks: Vec<usize> = picks.into_iter().filter(|g| *g < p).collect();
                let n2 = knocks.len();
                let gt = GroundTruth::from_fn(p, knocks, |i, j| (i + j) % 3 == 0).unwrap();
                let ss = build_scoring_set(&gt, ScoringKind::Symmetric);
                prop_assert_eq!(ss.len(), n2 * n2.saturating_sub(1));
                for pr in ss.pairs() {
                    prop_assert!(ss.contains(pr.reversed()));
                    prop_assert!(gt.get(pr).is_some() && gt.get(pr.reversed()).is_some());
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string());
    let multiset = runner()
        .run(
            &(
                prop::collection::vec(prop_oneof![Just(0.0), -10.0..10.0f64], 1..20),
                any::<u64>(),
            ),
            |(values, s)| {
                let m = values.len();
                let c = CoefficientVector::new(values.clone(), (0..m).collect());
                let out = fit_l1r(&c, &mut seed::rng(s));
                prop_assert_eq!(out.support(), c.support());
                let sorted = |v: &[f64]| {
                    let mut v = v.to_vec();
                    v.sort_by(f64::total_cmp);
                    v
                };
                prop_assert_eq!(sorted(&out.values), sorted(&values));
                Ok(())
            },
        )
        .map_err(|e| e.to_string());
    let argsort = runner()
        .run(
            &(
                prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), -5.0..5.0f64], 2..16),
                prop::collection::btree_set(0usize..16, 0..4),
                1usize..=2,
                1e-3..1e3f64,
            ),
            |(coeffs, causes, p0, scale)| {
                let causes: Vec<usize> = causes.into_iter().filter(|c| *c < coeffs.len()).collect();
                let scaled: Vec<f64> = coeffs.iter().map(|c| c * scale).collect();
                prop_assert_eq!(
                    top_p0_hits(&coeffs, &causes, p0),
                    top_p0_hits(&scaled, &causes, p0)
                );
                Ok(())
            },
        )
        .map_err(|e| e.to_string());
    vec![
        property("8a", "generated DAGs are acyclic", acyclic),
        property("8b", "nonzero DAG columns have unit norm", norms),
        property(
            "8c",
            "symmetric scoring set is closed under reversal",
            closure,
        ),
        property("8d", "L1R preserves support and value multiset", multiset),
        property("8e", "top-p0 argsort is scale invariant", argsort),
    ]
}

fn main() -> ExitCode {
    let strict = std::env::args().any(|a| a == "--strict");
    let suites: [(&str, fn() -> Vec<Check>); 8] = [
        ("table 3 replication", table3),
        ("scoring-set sizes", scoring_set_sizes),
        ("lasso oracle", lasso_oracle),
        ("causal dantzig oracle", dantzig_oracle),
        ("roc oracle", roc_equivalence),
        ("leakage guard", leakage),
        ("determinism", determinism),
        ("invariants", invariants),
    ];
    let mut fatal = 0;
    let mut failed = 0;
    for (name, suite) in suites {
        let start = Instant::now();
        let checks = suite();
        eprintln!("[{name}: {:.1} s]", start.elapsed().as_secs_f64());
        for c in checks {
            let status = match (c.pass, c.known_gap) {
                (true, _) => "PASS",
                (false, true) => "FAIL (known gap)",
                (false, false) => "FAIL",
            };
            println!(
                "criterion {:<3} {status:<17} {}: {}",
                c.id, c.what, c.detail
            );
            if !c.pass {
                failed += 1;
                if strict || !c.known_gap {
                    fatal += 1;
                }
            }
        }
    }
    println!("{failed} failing checks, {fatal} fatal");
    if fatal == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
