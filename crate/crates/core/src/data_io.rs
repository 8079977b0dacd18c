//! CSV ingestion and validation, row-max scaling, group labels, and
//! factor serialization.
//!
//! Canonical internal orientation is features x learners. Spreadsheet
//! exports are usually one row per learner, so that is the default CSV
//! orientation; the flag is explicit, no sniffing. Numbers are written
//! with Rust's shortest round-trip rendering, which reproduces the exact
//! double on load.

use crate::matrix::Matrix;
use crate::nmf::{FactorPair, FitConfig, RescaleMode};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const FACTORS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: file has no data rows")]
    Empty { path: String },
    #[error("{path}: row {row} has {got} fields, expected {expected}")]
    Ragged {
        path: String,
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("{path}: non-numeric cell '{value}' at row {row}, column {col}")]
    NonNumeric {
        path: String,
        row: usize,
        col: String,
        value: String,
    },
    #[error("{path}: negative value {value} at row {row} (id '{id}'), column {col}; the feature matrix must be non-negative")]
    Negative {
        path: String,
        row: usize,
        id: String,
        col: String,
        value: f64,
    },
    #[error("{path}: duplicate id '{id}' at row {row}")]
    DuplicateId { path: String, id: String, row: usize },
    #[error("feature row '{name}' (index {row}) is entirely zero; drop the feature before scaling")]
    AllZeroRow { row: usize, name: String },
    #[error("groups file is missing learner '{id}'")]
    MissingLearner { id: String },
    #[error("groups file names unknown learner '{id}'")]
    UnknownLearner { id: String },
    #[error("groups file has {got} distinct tags ({tags:?}); exactly two are required")]
    BadTagCount { got: usize, tags: Vec<String> },
    #[error("group '{tag}' is empty")]
    EmptyGroup { tag: String },
    #[error("learner '{id}' is labeled more than once")]
    DuplicateLabel { id: String },
    #[error("factors schema version {got} not supported (expected {expected})")]
    SchemaVersion { got: u32, expected: u32 },
    #[error("factors directory inconsistent: {0}")]
    InconsistentFactors(String),
    #[error("negative entry {value} in {file} at row {row}, column {col}; factors must be non-negative")]
    NegativeFactor {
        file: String,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("feature schema invalid: {0}")]
    BadSchema(String),
}

fn io_err(path: &Path, source: std::io::Error) -> DataIoError {
    DataIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// One CSV row per learner, feature names in the header.
    LearnersAsRows,
    /// One CSV row per feature, learner ids in the header.
    FeaturesAsRows,
}

impl std::str::FromStr for Orientation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "learners-as-rows" | "learners_as_rows" => Ok(Orientation::LearnersAsRows),
            "features-as-rows" | "features_as_rows" => Ok(Orientation::FeaturesAsRows),
            other => Err(format!(
                "unknown orientation '{other}' (expected learners-as-rows or features-as-rows)"
            )),
        }
    }
}

/// One behavioral feature: name plus presentation metadata. The style
/// annotations are never interpreted numerically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureInfo {
    pub name: String,
    pub description: String,
    pub addressed_styles: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureInfo>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureInfo>) -> Result<Self, DataIoError> {
        let mut seen = BTreeSet::new();
        for f in &features {
            if f.name.is_empty() {
                return Err(DataIoError::BadSchema("empty feature name".into()));
            }
            if !seen.insert(f.name.clone()) {
                return Err(DataIoError::BadSchema(format!(
                    "duplicate feature name '{}'",
                    f.name
                )));
            }
        }
        Ok(FeatureSchema { features })
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn find(&self, name: &str) -> Option<&FeatureInfo> {
        self.features.iter().find(|f| f.name == name)
    }
}

/// The built-in 21-feature schema of quiz, content, timing, and forum
/// behavior with the learning styles each feature is meant to address.
pub fn default_schema() -> FeatureSchema {
    fn f(name: &str, description: &str, styles: &[&str]) -> FeatureInfo {
        FeatureInfo {
            name: name.to_string(),
            description: description.to_string(),
            addressed_styles: styles.iter().map(|s| s.to_string()).collect(),
        }
    }
    FeatureSchema::new(vec![
        f("a_try", "average number of attempts on quizzes", &["active", "sensing"]),
        f("a_tryx", "average attempts on quizzes after the 50% threshold", &["active", "achieving"]),
        f("opt_try", "average attempts on optional final quizzes", &["active", "global"]),
        f("a_time", "average time passed when solving quiz", &["reflective", "sensing"]),
        f("a_score", "average score on quizzes", &["sensing", "achieving"]),
        f("th_score", "scores on quiz questions with theoretical emphasis", &["intuitive"]),
        f("st_score", "scores on quiz questions with standard tasks", &["sensing"]),
        f("m_score", "average score exceeding the 50% threshold", &["achieving"]),
        f("p_noans", "mean number of quiz questions without an answer", &["global", "surface"]),
        f("q_dur", "queries on the content during quiz solving", &["reflective", "surface"]),
        f("p_quizc", "proportion of completed quizzes", &["active", "intuitive", "sequential"]),
        f("p_cont", "proportion of retrieved lecture notes", &["reflective", "intuitive"]),
        f("p_prac", "proportion of retrieved exercises", &["reflective", "sensing"]),
        f("p_links", "proportion of clicked links", &["reflective"]),
        f("p_vids", "proportion of seen videos", &["reflective"]),
        f("review_q", "number of quizzes reviewed later", &["active", "global"]),
        f("a_early", "average time surplus of early completions", &["sequential"]),
        f("on_time", "proportion of activities completed on time", &["sequential"]),
        f("a_late", "average delay of late completions", &["global"]),
        f("words_frm", "total number of words in forum posts", &["active"]),
        f("posts_frm", "total number of posted messages", &["active"]),
    ])
    .expect("built-in schema is valid")
}

/// Two-group partition of the learners. Tags are kept in sorted order;
/// the first tag plays the "f" role in group differences (so with the
/// canonical tags, diffs are mean_f - mean_p).
#[derive(Debug, Clone)]
pub struct GroupLabeling {
    labels: BTreeMap<String, String>,
    tags: [String; 2],
}

impl GroupLabeling {
    pub fn new(labels: BTreeMap<String, String>) -> Result<Self, DataIoError> {
        let tags: Vec<String> = labels
            .values()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .cloned()
            .collect();
        if tags.len() != 2 {
            return Err(DataIoError::BadTagCount {
                got: tags.len(),
                tags,
            });
        }
        let mut it = tags.into_iter();
        let tags = [it.next().unwrap(), it.next().unwrap()];
        for tag in &tags {
            if !labels.values().any(|t| t == tag) {
                return Err(DataIoError::EmptyGroup { tag: tag.clone() });
            }
        }
        Ok(GroupLabeling { labels, tags })
    }

    pub fn tag_of(&self, id: &str) -> Option<&str> {
        self.labels.get(id).map(|s| s.as_str())
    }

    /// (first, second) tags in sorted order.
    pub fn tags(&self) -> (&str, &str) {
        (&self.tags[0], &self.tags[1])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn group_size(&self, tag: &str) -> usize {
        self.labels.values().filter(|t| t.as_str() == tag).count()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.labels.keys().map(|s| s.as_str())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub row_maxima: Vec<f64>,
}

fn read_records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), DataIoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| DataIoError::Csv {
            path: path.display().to_string(),
            source: e,
        })?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| DataIoError::Csv {
            path: path.display().to_string(),
            source: e,
        })?;
        rows.push(rec.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>());
    }
    if rows.len() < 2 {
        return Err(DataIoError::Empty {
            path: path.display().to_string(),
        });
    }
    let header = rows.remove(0);
    Ok((header, rows))
}

/// Load a feature matrix CSV (header row plus one id column) into the
/// canonical features x learners orientation.
pub fn load_matrix(path: &Path, orientation: Orientation) -> Result<Matrix, DataIoError> {
    let pathstr = path.display().to_string();
    let (header, rows) = read_records(path)?;
    let col_headers: Vec<String> = header[1..].to_vec();
    let expected = header.len();

    let mut ids = Vec::new();
    let mut seen = BTreeSet::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in rows.iter().enumerate() {
        let row_no = idx + 2; // 1-based, after the header
        if rec.len() != expected {
            return Err(DataIoError::Ragged {
                path: pathstr.clone(),
                row: row_no,
                got: rec.len(),
                expected,
            });
        }
        let id = rec[0].clone();
        if !seen.insert(id.clone()) {
            return Err(DataIoError::DuplicateId {
                path: pathstr.clone(),
                id,
                row: row_no,
            });
        }
        let mut vals = Vec::with_capacity(expected - 1);
        for (j, cell) in rec[1..].iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| DataIoError::NonNumeric {
                path: pathstr.clone(),
                row: row_no,
                col: col_headers[j].clone(),
                value: cell.clone(),
            })?;
            if v < 0.0 {
                return Err(DataIoError::Negative {
                    path: pathstr.clone(),
                    row: row_no,
                    id: id.clone(),
                    col: col_headers[j].clone(),
                    value: v,
                });
            }
            vals.push(v);
        }
        ids.push(id);
        values.push(vals);
    }

    let parsed = Matrix::from_rows(&values)
        .expect("rows validated rectangular")
        .with_row_names(ids)
        .expect("one id per row")
        .with_col_names(col_headers)
        .expect("one header per column");

    Ok(match orientation {
        // Parsed as learners x features; internal layout is the transpose.
        Orientation::LearnersAsRows => parsed.transpose(),
        Orientation::FeaturesAsRows => parsed,
    })
}

/// Write a matrix in the same CSV layout `load_matrix` reads.
pub fn save_matrix(x: &Matrix, path: &Path, orientation: Orientation) -> Result<(), DataIoError> {
    let view;
    let m = match orientation {
        Orientation::LearnersAsRows => {
            view = x.transpose();
            &view
        }
        Orientation::FeaturesAsRows => x,
    };
    let mut out = String::new();
    out.push_str("id");
    for j in 0..m.cols() {
        out.push(',');
        match m.col_names() {
            Some(names) => out.push_str(&names[j]),
            None => out.push_str(&format!("c{}", j + 1)),
        }
    }
    out.push('\n');
    for i in 0..m.rows() {
        match m.row_names() {
            Some(names) => out.push_str(&names[i]),
            None => out.push_str(&format!("r{}", i + 1)),
        }
        for j in 0..m.cols() {
            out.push(',');
            out.push_str(&format!("{}", m.get(i, j)));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Indices of learner columns that are entirely zero. These are legal
/// (zero affinities approximate them exactly) but worth a warning.
pub fn zero_columns(x: &Matrix) -> Vec<usize> {
    (0..x.cols())
        .filter(|&j| (0..x.rows()).all(|i| x.get(i, j) == 0.0))
        .collect()
}

/// Divide every feature row by its maximum so each row peaks at exactly 1.
pub fn scale_rows(x: &Matrix) -> Result<(Matrix, ScalingRecord), DataIoError> {
    let mut maxima = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let m = x.row(i).iter().cloned().fold(0.0f64, f64::max);
        if m == 0.0 {
            let name = x
                .row_names()
                .map(|n| n[i].clone())
                .unwrap_or_else(|| format!("row {i}"));
            return Err(DataIoError::AllZeroRow { row: i, name });
        }
        maxima.push(m);
    }
    let mut scaled = x.clone();
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            scaled.set(i, j, x.get(i, j) / maxima[i]);
        }
    }
    Ok((scaled, ScalingRecord { row_maxima: maxima }))
}

/// Load a two-column `id,group` CSV into a complete two-group labeling
/// over exactly the given learner ids.
pub fn load_groups(path: &Path, learner_ids: &[String]) -> Result<GroupLabeling, DataIoError> {
    let pathstr = path.display().to_string();
    let (header, rows) = read_records(path)?;
    let expected = header.len().max(2);
    let known: BTreeSet<&String> = learner_ids.iter().collect();
    let mut labels = BTreeMap::new();
    for (idx, rec) in rows.iter().enumerate() {
        let row_no = idx + 2;
        if rec.len() != 2 {
            return Err(DataIoError::Ragged {
                path: pathstr.clone(),
                row: row_no,
                got: rec.len(),
                expected,
            });
        }
        let id = rec[0].clone();
        if !known.contains(&id) {
            return Err(DataIoError::UnknownLearner { id });
        }
        if labels.insert(id.clone(), rec[1].clone()).is_some() {
            return Err(DataIoError::DuplicateLabel { id });
        }
    }
    for id in learner_ids {
        if !labels.contains_key(id) {
            return Err(DataIoError::MissingLearner { id: id.clone() });
        }
    }
    GroupLabeling::new(labels)
}

/// meta.json contents for a factors directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorsMeta {
    pub schema_version: u32,
    pub k: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub rescale_mode: RescaleMode,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Row maxima used to scale the input, when scaling was applied;
    /// lets downstream commands rebuild the fitted X exactly.
    pub row_maxima: Option<Vec<f64>>,
}

impl FactorsMeta {
    pub fn from_fit(fp: &FactorPair, cfg: &FitConfig, row_maxima: Option<Vec<f64>>) -> Self {
        FactorsMeta {
            schema_version: FACTORS_SCHEMA_VERSION,
            k: fp.k,
            seed: fp.seed,
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            restarts: cfg.restarts,
            rescale_mode: cfg.rescale_mode,
            objective: fp.objective,
            objective_trace: fp.objective_trace.clone(),
            converged: fp.converged,
            row_maxima,
        }
    }
}

/// Write patterns.csv, affinities.csv, and meta.json to `dir`. Pattern
/// columns are headed pattern_1..pattern_K unless `labels` supplies
/// user names.
pub fn save_factors(
    dir: &Path,
    fp: &FactorPair,
    meta: &FactorsMeta,
    labels: Option<&[String]>,
) -> Result<(), DataIoError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let pattern_names: Vec<String> = match labels {
        Some(l) if l.len() == fp.k => l.to_vec(),
        _ => (1..=fp.k).map(|i| format!("pattern_{i}")).collect(),
    };

    let write_table = |file: &str, m: &Matrix, id_header: &str| -> Result<(), DataIoError> {
        let path = dir.join(file);
        let f = std::fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = std::io::BufWriter::new(f);
        let mut res = (|| -> std::io::Result<()> {
            write!(w, "{id_header}")?;
            for name in &pattern_names {
                write!(w, ",{name}")?;
            }
            writeln!(w)?;
            for i in 0..m.rows() {
                match m.row_names() {
                    Some(names) => write!(w, "{}", names[i])?,
                    None => write!(w, "r{}", i + 1)?,
                }
                for j in 0..m.cols() {
                    write!(w, ",{}", m.get(i, j))?;
                }
                writeln!(w)?;
            }
            Ok(())
        })();
        if res.is_ok() {
            res = w.flush();
        }
        res.map_err(|e| io_err(&path, e))
    };

    write_table("patterns.csv", &fp.p_mat, "feature")?;
    write_table("affinities.csv", &fp.a_mat, "id")?;

    let meta_path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(meta).map_err(|e| DataIoError::Json {
        path: meta_path.display().to_string(),
        source: e,
    })?;
    std::fs::write(&meta_path, json + "\n").map_err(|e| io_err(&meta_path, e))
}

fn load_factor_table(path: &Path, file: &str) -> Result<Matrix, DataIoError> {
    let pathstr = path.display().to_string();
    let (header, rows) = read_records(path)?;
    let col_names: Vec<String> = header[1..].to_vec();
    let expected = header.len();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (idx, rec) in rows.iter().enumerate() {
        let row_no = idx + 2;
        if rec.len() != expected {
            return Err(DataIoError::Ragged {
                path: pathstr.clone(),
                row: row_no,
                got: rec.len(),
                expected,
            });
        }
        ids.push(rec[0].clone());
        let mut vals = Vec::with_capacity(expected - 1);
        for (j, cell) in rec[1..].iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| DataIoError::NonNumeric {
                path: pathstr.clone(),
                row: row_no,
                col: col_names[j].clone(),
                value: cell.clone(),
            })?;
            if v < 0.0 {
                return Err(DataIoError::NegativeFactor {
                    file: file.to_string(),
                    row: row_no,
                    col: j + 1,
                    value: v,
                });
            }
            vals.push(v);
        }
        values.push(vals);
    }
    Ok(Matrix::from_rows(&values)
        .expect("rows validated rectangular")
        .with_row_names(ids)
        .expect("one id per row")
        .with_col_names(col_names)
        .expect("one header per column"))
}

/// Inverse of `save_factors`.
pub fn load_factors(dir: &Path) -> Result<(FactorPair, FactorsMeta), DataIoError> {
    let meta_path = dir.join("meta.json");
    let raw = std::fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: FactorsMeta = serde_json::from_str(&raw).map_err(|e| DataIoError::Json {
        path: meta_path.display().to_string(),
        source: e,
    })?;
    if meta.schema_version != FACTORS_SCHEMA_VERSION {
        return Err(DataIoError::SchemaVersion {
            got: meta.schema_version,
            expected: FACTORS_SCHEMA_VERSION,
        });
    }
    let p_mat = load_factor_table(&dir.join("patterns.csv"), "patterns.csv")?;
    let a_mat = load_factor_table(&dir.join("affinities.csv"), "affinities.csv")?;
    if p_mat.cols() != meta.k || a_mat.cols() != meta.k {
        return Err(DataIoError::InconsistentFactors(format!(
            "meta.json says k = {}, patterns.csv has {} columns, affinities.csv has {}",
            meta.k,
            p_mat.cols(),
            a_mat.cols()
        )));
    }
    let fp = FactorPair {
        p_mat,
        a_mat,
        k: meta.k,
        objective: meta.objective,
        objective_trace: meta.objective_trace.clone(),
        seed: meta.seed,
        restarts_used: meta.restarts,
        converged: meta.converged,
    };
    Ok((fp, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nmf::{fit, FitConfig};

    fn write_file(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn default_schema_has_21_unique_features() {
        let schema = default_schema();
        assert_eq!(schema.features.len(), 21);
        assert_eq!(schema.names().first(), Some(&"a_try"));
        assert_eq!(schema.names().last(), Some(&"posts_frm"));
        assert!(schema.find("p_quizc").is_some());
    }

    #[test]
    fn load_matrix_transposes_learner_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "m.csv", "id,f1,f2\ns1,1,2\ns2,3,4\ns3,5,6\n");
        let m = load_matrix(&path, Orientation::LearnersAsRows).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
        assert_eq!(m.row_names().unwrap(), ["f1", "f2"]);
        assert_eq!(m.col_names().unwrap(), ["s1", "s2", "s3"]);
        assert_eq!(m.data(), &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn orientations_are_transposes_of_each_other() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = write_file(dir.path(), "a.csv", "id,f1,f2\ns1,1,2\ns2,3,4\n");
        let p2 = write_file(dir.path(), "b.csv", "id,s1,s2\nf1,1,3\nf2,2,4\n");
        let a = load_matrix(&p1, Orientation::LearnersAsRows).unwrap();
        let b = load_matrix(&p2, Orientation::FeaturesAsRows).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn load_matrix_rejects_bad_cells() {
        let dir = tempfile::tempdir().unwrap();
        let neg = write_file(dir.path(), "neg.csv", "id,f1\ns1,1\ns2,-0.5\n");
        let err = load_matrix(&neg, Orientation::LearnersAsRows).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("f1") && msg.contains("-0.5"), "{msg}");

        let txt = write_file(dir.path(), "txt.csv", "id,f1\ns1,abc\n");
        assert!(matches!(
            load_matrix(&txt, Orientation::LearnersAsRows),
            Err(DataIoError::NonNumeric { .. })
        ));

        let dup = write_file(dir.path(), "dup.csv", "id,f1\ns1,1\ns1,2\n");
        assert!(matches!(
            load_matrix(&dup, Orientation::LearnersAsRows),
            Err(DataIoError::DuplicateId { .. })
        ));

        let ragged = write_file(dir.path(), "rag.csv", "id,f1,f2\ns1,1\n");
        assert!(matches!(
            load_matrix(&ragged, Orientation::LearnersAsRows),
            Err(DataIoError::Ragged { row: 2, .. })
        ));
    }

    #[test]
    fn matrix_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let vals = vec![0.1, 1.0 / 3.0, 2e-17, 123456.789012345, 0.0, 5e300];
        let m = Matrix::from_vec(2, 3, vals)
            .unwrap()
            .with_row_names(vec!["f1".into(), "f2".into()])
            .unwrap()
            .with_col_names(vec!["s1".into(), "s2".into(), "s3".into()])
            .unwrap();
        let path = dir.path().join("rt.csv");
        save_matrix(&m, &path, Orientation::LearnersAsRows).unwrap();
        let back = load_matrix(&path, Orientation::LearnersAsRows).unwrap();
        assert_eq!(back.data(), m.data());
        assert_eq!(back.row_names(), m.row_names());
    }

    #[test]
    fn scale_rows_examples() {
        let x = Matrix::from_vec(1, 3, vec![2.0, 4.0, 8.0]).unwrap();
        let (scaled, rec) = scale_rows(&x).unwrap();
        assert_eq!(scaled.data(), &[0.25, 0.5, 1.0]);
        assert_eq!(rec.row_maxima, vec![8.0]);

        // Already scaled input is unchanged.
        let (again, rec2) = scale_rows(&scaled).unwrap();
        assert_eq!(again.data(), scaled.data());
        assert_eq!(rec2.row_maxima, vec![1.0]);
    }

    #[test]
    fn scale_rows_rejects_zero_row() {
        let x = Matrix::from_vec(2, 2, vec![1.0, 2.0, 0.0, 0.0])
            .unwrap()
            .with_row_names(vec!["good".into(), "dead".into()])
            .unwrap();
        let err = scale_rows(&x).unwrap_err();
        assert!(err.to_string().contains("dead"), "{err}");
    }

    #[test]
    fn scale_rows_inverse_recovers_input() {
        let mut x = Matrix::zeros(21, 50);
        for i in 0..21 {
            for j in 0..50 {
                x.set(i, j, ((i * 53 + j * 7 + 1) % 101) as f64 / 10.0 + 0.01);
            }
        }
        let (scaled, rec) = scale_rows(&x).unwrap();
        for i in 0..21 {
            let row_max = scaled.row(i).iter().cloned().fold(0.0f64, f64::max);
            assert!((row_max - 1.0).abs() <= 1e-15);
            for j in 0..50 {
                let back = scaled.get(i, j) * rec.row_maxima[i];
                assert!((back - x.get(i, j)).abs() <= 1e-12 * x.get(i, j).abs());
            }
        }
    }

    #[test]
    fn load_groups_happy_path_and_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "g.csv",
            "id,group\ns1,f\ns2,p\ns3,p\ns4,f\ns5,p\ns6,p\ns7,f\ns8,p\ns9,p\ns10,p\n",
        );
        let ids: Vec<String> = (1..=10).map(|i| format!("s{i}")).collect();
        let g = load_groups(&path, &ids).unwrap();
        assert_eq!(g.tags(), ("f", "p"));
        assert_eq!(g.group_size("f"), 3);
        assert_eq!(g.group_size("p"), 7);
        assert_eq!(g.tag_of("s4"), Some("f"));
    }

    #[test]
    fn load_groups_validation() {
        let dir = tempfile::tempdir().unwrap();
        let ids: Vec<String> = vec!["s1".into(), "s2".into(), "s3".into()];

        let missing = write_file(dir.path(), "m.csv", "id,group\ns1,f\ns2,p\n");
        let err = load_groups(&missing, &ids).unwrap_err();
        assert!(err.to_string().contains("s3"), "{err}");

        let unknown = write_file(dir.path(), "u.csv", "id,group\ns1,f\ns2,p\ns3,p\nsX,f\n");
        assert!(matches!(
            load_groups(&unknown, &ids),
            Err(DataIoError::UnknownLearner { .. })
        ));

        let three = write_file(dir.path(), "t.csv", "id,group\ns1,f\ns2,p\ns3,x\n");
        assert!(matches!(
            load_groups(&three, &ids),
            Err(DataIoError::BadTagCount { got: 3, .. })
        ));
    }

    #[test]
    fn factors_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = Matrix::from_vec(3, 4, vec![1.0, 2.0, 0.5, 1.5, 0.2, 0.9, 1.1, 0.3, 2.2, 0.1, 0.7, 1.9])
            .unwrap()
            .with_row_names(vec!["f1".into(), "f2".into(), "f3".into()])
            .unwrap()
            .with_col_names(vec!["s1".into(), "s2".into(), "s3".into(), "s4".into()])
            .unwrap();
        let cfg = FitConfig::new(2);
        let fp = fit(&x, &cfg).unwrap();
        let meta = FactorsMeta::from_fit(&fp, &cfg, None);
        save_factors(dir.path(), &fp, &meta, None).unwrap();
        let (back, back_meta) = load_factors(dir.path()).unwrap();

        assert_eq!(back.p_mat.data(), fp.p_mat.data());
        assert_eq!(back.a_mat.data(), fp.a_mat.data());
        assert_eq!(back.objective, fp.objective);
        assert_eq!(back.objective_trace, fp.objective_trace);
        assert_eq!(back_meta.k, 2);
        assert_eq!(back.a_mat.row_names().unwrap(), ["s1", "s2", "s3", "s4"]);

        // meta objective must equal the recomputed residual.
        let approx = back.p_mat.multiply(&back.a_mat.transpose()).unwrap();
        let resid = x.sub(&approx).unwrap().frobenius_sq();
        assert!((back_meta.objective - resid).abs() <= 1e-9 * resid.max(1e-30));
    }

    #[test]
    fn tampered_negative_affinity_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let x = Matrix::from_vec(2, 3, vec![1.0, 2.0, 0.5, 1.5, 0.2, 0.9]).unwrap();
        let cfg = FitConfig::new(1);
        let fp = fit(&x, &cfg).unwrap();
        let meta = FactorsMeta::from_fit(&fp, &cfg, None);
        save_factors(dir.path(), &fp, &meta, None).unwrap();

        let aff_path = dir.path().join("affinities.csv");
        let contents = std::fs::read_to_string(&aff_path).unwrap();
        let tampered = contents.replacen("0.", "-0.", 1);
        assert_ne!(contents, tampered);
        std::fs::write(&aff_path, tampered).unwrap();
        assert!(matches!(
            load_factors(dir.path()),
            Err(DataIoError::NegativeFactor { .. })
        ));
    }

    #[test]
    fn schema_version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let x = Matrix::from_vec(2, 3, vec![1.0, 2.0, 0.5, 1.5, 0.2, 0.9]).unwrap();
        let cfg = FitConfig::new(1);
        let fp = fit(&x, &cfg).unwrap();
        let mut meta = FactorsMeta::from_fit(&fp, &cfg, None);
        meta.schema_version = 99;
        save_factors(dir.path(), &fp, &meta, None).unwrap();
        assert!(matches!(
            load_factors(dir.path()),
            Err(DataIoError::SchemaVersion { got: 99, .. })
        ));
    }

    #[test]
    fn user_pattern_labels_survive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = Matrix::from_vec(3, 3, vec![1.0, 0.2, 0.5, 0.1, 2.0, 0.9, 0.8, 0.4, 1.3]).unwrap();
        let cfg = FitConfig::new(2);
        let fp = fit(&x, &cfg).unwrap();
        let meta = FactorsMeta::from_fit(&fp, &cfg, None);
        let labels = vec!["active".to_string(), "reflective".to_string()];
        save_factors(dir.path(), &fp, &meta, Some(&labels)).unwrap();
        let (back, _) = load_factors(dir.path()).unwrap();
        assert_eq!(back.p_mat.col_names().unwrap(), ["active", "reflective"]);
    }
}
