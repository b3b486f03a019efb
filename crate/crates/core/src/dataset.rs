//! Two-environment expression data with single-gene knockouts.
//!
//! On disk a dataset is three files: an observational matrix, an
//! interventional matrix (both tab-separated with a `#genes` header line) and
//! a JSON metadata sidecar naming the gene knocked out in each interventional
//! row. In memory genes are dense indices fixed at load time.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER_TAG: &str = "#genes";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    obs: DMatrix<f64>,
    intv: DMatrix<f64>,
    knockout_map: Vec<usize>,
    gene_names: Vec<String>,
    /// Inverse of `knockout_map`: gene index -> interventional row.
    knockout_row: Vec<Option<usize>>,
}

impl Dataset {
    pub fn new(
        obs: DMatrix<f64>,
        intv: DMatrix<f64>,
        knockout_map: Vec<usize>,
        gene_names: Vec<String>,
    ) -> Result<Self> {
        let p = obs.ncols();
        if p < 2 {
            return Err(Error::validation(format!("need at least 2 genes, got {p}")));
        }
        if intv.ncols() != p {
            return Err(Error::validation(format!(
                "observational matrix has {p} columns but interventional has {}",
                intv.ncols()
            )));
        }
        if obs.nrows() < 2 {
            return Err(Error::validation(format!(
                "need at least 2 observational samples, got {}",
                obs.nrows()
            )));
        }
        if gene_names.len() != p {
            return Err(Error::validation(format!(
                "{} gene names for {p} columns",
                gene_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &gene_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::validation(format!("duplicate gene name {name:?}")));
            }
        }
        if knockout_map.len() != intv.nrows() {
            return Err(Error::validation(format!(
                "knockout map has {} entries for {} interventional rows",
                knockout_map.len(),
                intv.nrows()
            )));
        }
        let mut knockout_row = vec![None; p];
        for (row, &gene) in knockout_map.iter().enumerate() {
            if gene >= p {
                return Err(Error::validation(format!(
                    "knockout row {row} names gene index {gene} outside [0, {p})"
                )));
            }
            if let Some(prev) = knockout_row[gene] {
                return Err(Error::validation(format!(
                    "gene {:?} knocked out twice (rows {prev} and {row})",
                    gene_names[gene]
                )));
            }
            knockout_row[gene] = Some(row);
        }
        if obs.iter().chain(intv.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation("expression values must be finite"));
        }
        Ok(Dataset {
            obs,
            intv,
            knockout_map,
            gene_names,
            knockout_row,
        })
    }

    pub fn p(&self) -> usize {
        self.obs.ncols()
    }

    pub fn n1(&self) -> usize {
        self.obs.nrows()
    }

    pub fn n2(&self) -> usize {
        self.intv.nrows()
    }

    pub fn obs(&self) -> &DMatrix<f64> {
        &self.obs
    }

    pub fn intv(&self) -> &DMatrix<f64> {
        &self.intv
    }

    pub fn knockout_map(&self) -> &[usize] {
        &self.knockout_map
    }

    pub fn gene_names(&self) -> &[String] {
        &self.gene_names
    }

    /// Interventional row in which `gene` was knocked out, if any.
    pub fn knockout_row(&self, gene: usize) -> Option<usize> {
        self.knockout_row.get(gene).copied().flatten()
    }

    pub fn is_knocked_out(&self, gene: usize) -> bool {
        self.knockout_row(gene).is_some()
    }

    pub fn gene_index(&self, name: &str) -> Option<usize> {
        self.gene_names.iter().position(|g| g == name)
    }

    /// Ordered pairs `(i, j)` that have knockout ground truth: `n2 * (p - 1)`.
    pub fn count_ground_truth_pairs(&self) -> usize {
        self.n2() * (self.p() - 1)
    }

    pub fn environment_views(
        &self,
        target: usize,
        predictors: &[usize],
        included_intv_rows: &[usize],
    ) -> Result<(EnvironmentView, EnvironmentView)> {
        let all_obs: Vec<usize> = (0..self.n1()).collect();
        self.environment_views_with_rows(target, predictors, &all_obs, included_intv_rows)
    }

    /// Like [`Dataset::environment_views`] but with an explicit (possibly
    /// repeating) selection of observational rows, as used by bootstrapping.
    pub fn environment_views_with_rows(
        &self,
        target: usize,
        predictors: &[usize],
        obs_rows: &[usize],
        intv_rows: &[usize],
    ) -> Result<(EnvironmentView, EnvironmentView)> {
        let p = self.p();
        if target >= p {
            return Err(Error::contract(format!("target {target} outside [0, {p})")));
        }
        if let Some(&bad) = predictors.iter().find(|&&g| g >= p) {
            return Err(Error::contract(format!("predictor {bad} outside [0, {p})")));
        }
        if predictors.contains(&target) {
            return Err(Error::contract(format!(
                "target gene {target} cannot be its own predictor"
            )));
        }
        if let Some(&bad) = obs_rows.iter().find(|&&r| r >= self.n1()) {
            return Err(Error::contract(format!(
                "observational row {bad} out of range"
            )));
        }
        if let Some(&bad) = intv_rows.iter().find(|&&r| r >= self.n2()) {
            return Err(Error::contract(format!(
                "interventional row {bad} out of range"
            )));
        }
        Ok((
            EnvironmentView::select(
                &self.obs,
                obs_rows,
                target,
                predictors,
                Environment::Observational,
            ),
            EnvironmentView::select(
                &self.intv,
                intv_rows,
                target,
                predictors,
                Environment::Interventional,
            ),
        ))
    }

    /// Writes the three-file representation read by [`load_dataset`].
    pub fn save(&self, obs_path: &Path, intv_path: &Path, meta_path: &Path) -> Result<()> {
        write_matrix(obs_path, &self.gene_names, &self.obs)?;
        write_matrix(intv_path, &self.gene_names, &self.intv)?;
        let meta = Metadata {
            n1: self.n1(),
            n2: self.n2(),
            p: self.p(),
            genes: Some(self.gene_names.clone()),
            knockouts: self
                .knockout_map
                .iter()
                .enumerate()
                .map(|(row, &g)| KnockoutEntry {
                    row,
                    gene_name: self.gene_names[g].clone(),
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        fs::write(meta_path, text + "\n").map_err(|e| Error::io(meta_path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Observational,
    Interventional,
}

/// Regression data for one target gene within one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentView {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub env: Environment,
    /// Gene index of each design column.
    pub predictors: Vec<usize>,
}

impl EnvironmentView {
    fn select(
        source: &DMatrix<f64>,
        rows: &[usize],
        target: usize,
        predictors: &[usize],
        env: Environment,
    ) -> Self {
        let design = DMatrix::from_fn(rows.len(), predictors.len(), |r, c| {
            source[(rows[r], predictors[c])]
        });
        let response = DVector::from_fn(rows.len(), |r, _| source[(rows[r], target)]);
        EnvironmentView {
            design,
            response,
            env,
            predictors: predictors.to_vec(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.response.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.design.ncols()
    }

    /// Keeps only the listed design columns (positions, not gene indices),
    /// in the given order.
    pub fn restrict(&self, columns: &[usize]) -> Self {
        EnvironmentView {
            design: self.design.select_columns(columns),
            response: self.response.clone(),
            env: self.env,
            predictors: columns.iter().map(|&c| self.predictors[c]).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnockoutEntry {
    pub row: usize,
    pub gene_name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub n1: usize,
    pub n2: usize,
    pub p: usize,
    /// Column order for the in-memory dataset; defaults to the
    /// observational file's header order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genes: Option<Vec<String>>,
    pub knockouts: Vec<KnockoutEntry>,
}

pub fn read_metadata(path: &Path) -> Result<Metadata> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a `#genes`-headed tab-separated matrix file.
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected a #genes header".into()))?;
    let mut fields = header.trim_end_matches('\r').split('\t');
    if fields.next() != Some(HEADER_TAG) {
        return Err(parse_err(
            1,
            format!("header must start with {HEADER_TAG:?}"),
        ));
    }
    let names: Vec<String> = fields.map(str::to_owned).collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(parse_err(
            1,
            "header lists no gene names or an empty name".into(),
        ));
    }
    let p = names.len();

    let mut values = Vec::new();
    let mut rows = 0;
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let before = values.len();
        for (col, cell) in line.split('\t').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(
                    lineno,
                    format!("sample row {rows}, column {col}: non-numeric cell {cell:?}"),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    lineno,
                    format!("sample row {rows}, column {col}: non-finite value"),
                ));
            }
            values.push(v);
        }
        let got = values.len() - before;
        if got != p {
            return Err(parse_err(
                lineno,
                format!("ragged sample row {rows}: {got} values, header has {p} genes"),
            ));
        }
        rows += 1;
    }
    Ok((names, DMatrix::from_row_slice(rows, p, &values)))
}

/// Writes a matrix in the `#genes` format. Values use shortest round-trip
/// formatting, so reading the file back reproduces them exactly.
pub fn write_matrix(path: &Path, names: &[String], m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(names, m)).map_err(|e| Error::io(path, e))
}

pub fn format_matrix(names: &[String], m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(16 * (m.len() + names.len()));
    out.push_str(HEADER_TAG);
    for name in names {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push('\t');
            }
            write!(out, "{}", m[(r, c)]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn load_dataset(obs_path: &Path, intv_path: &Path, meta_path: &Path) -> Result<Dataset> {
    let (obs_names, obs) = read_matrix(obs_path)?;
    let (intv_names, intv) = read_matrix(intv_path)?;
    let meta = read_metadata(meta_path)?;

    if obs_names != intv_names {
        return Err(Error::validation(format!(
            "{} and {} have different gene headers",
            obs_path.display(),
            intv_path.display()
        )));
    }
    if meta.p != obs_names.len() {
        return Err(Error::validation(format!(
            "metadata p = {} but matrices have {} genes",
            meta.p,
            obs_names.len()
        )));
    }
    if meta.n1 != obs.nrows() {
        return Err(Error::validation(format!(
            "metadata n1 = {} but {} has {} samples",
            meta.n1,
            obs_path.display(),
            obs.nrows()
        )));
    }
    if meta.n2 != intv.nrows() {
        return Err(Error::validation(format!(
            "metadata n2 = {} but {} has {} samples",
            meta.n2,
            intv_path.display(),
            intv.nrows()
        )));
    }

    let file_index: HashMap<&str, usize> = obs_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let gene_names = meta.genes.clone().unwrap_or_else(|| obs_names.clone());
    if gene_names.len() != obs_names.len() {
        return Err(Error::validation(format!(
            "metadata lists {} genes but matrices have {}",
            gene_names.len(),
            obs_names.len()
        )));
    }
    let mut order = Vec::with_capacity(gene_names.len());
    for name in &gene_names {
        match file_index.get(name.as_str()) {
            Some(&i) => order.push(i),
            None => {
                return Err(Error::validation(format!(
                    "metadata gene {name:?} is missing from the matrix header"
                )))
            }
        }
    }
    let obs = obs.select_columns(&order);
    let intv = intv.select_columns(&order);

    let name_index: HashMap<&str, usize> = gene_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut knockout_map: Vec<Option<usize>> = vec![None; meta.n2];
    for entry in &meta.knockouts {
        if entry.row >= meta.n2 {
            return Err(Error::validation(format!(
                "knockout row {} outside [0, {})",
                entry.row, meta.n2
            )));
        }
        let gene = *name_index.get(entry.gene_name.as_str()).ok_or_else(|| {
            Error::validation(format!(
                "knockout gene {:?} is not a known gene",
                entry.gene_name
            ))
        })?;
        if knockout_map[entry.row].replace(gene).is_some() {
            return Err(Error::validation(format!(
                "interventional row {} has more than one knockout entry",
                entry.row
            )));
        }
    }
    let knockout_map = knockout_map
        .into_iter()
        .enumerate()
        .map(|(row, g)| {
            g.ok_or_else(|| {
                Error::validation(format!("interventional row {row} has no knockout entry"))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Dataset::new(obs, intv, knockout_map, gene_names)
}
