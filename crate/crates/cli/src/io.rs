//! Response, gold and export files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crowdtruth_core::dataset::{GoldLabels, ResponseMatrix, ResponseRecord};
use crowdtruth_core::evaluation::ValidationTable;
use crowdtruth_core::subjectivity::{QuestionRankings, SubjectivityEstimate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Jsonl,
}

impl DataFormat {
    /// `.jsonl` and `.ndjson` files are JSON lines, anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson") => Self::Jsonl,
            _ => Self::Csv,
        }
    }
}

fn open(path: &Path, missing: fn(&Path) -> CliError) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => missing(path),
        _ => CliError::io(path, e),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    let message = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        _ => CliError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
    }
}

/// Reads `worker,question,response` rows from CSV or JSON lines.
pub fn read_records(path: &Path, format: DataFormat) -> Result<Vec<ResponseRecord>> {
    let file = open(path, |p| CliError::DatasetNotFound(p.to_path_buf()))?;
    match format {
        DataFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
            reader
                .deserialize::<ResponseRecord>()
                .map(|row| row.map_err(|e| csv_error(path, e)))
                .collect()
        }
        DataFormat::Jsonl => {
            let mut out = Vec::new();
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| CliError::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record = serde_json::from_str(&line).map_err(|e| CliError::Parse {
                    path: path.to_path_buf(),
                    line: n as u64 + 1,
                    message: e.to_string(),
                })?;
                out.push(record);
            }
            Ok(out)
        }
    }
}

/// Loads and encodes a response file; the format defaults to the one implied
/// by the extension and options to the sorted distinct labels.
pub fn load_responses(path: &Path, format: Option<DataFormat>, options: Option<&[String]>) -> Result<ResponseMatrix> {
    let records = read_records(path, format.unwrap_or_else(|| DataFormat::from_path(path)))?;
    Ok(ResponseMatrix::from_records(&records, options)?)
}

pub fn write_responses(path: &Path, data: &ResponseMatrix, format: DataFormat) -> Result<()> {
    let mut out = create(path)?;
    let records = data.records();
    match format {
        DataFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for r in &records {
                w.serialize(r).map_err(|e| csv_error(path, e))?;
            }
            w.flush().map_err(|e| CliError::io(path, e))?;
        }
        DataFormat::Jsonl => {
            for r in &records {
                let line = serde_json::to_string(r).map_err(|e| CliError::Json {
                    path: path.to_path_buf(),
                    source: e,
                })?;
                writeln!(out, "{line}").map_err(|e| CliError::io(path, e))?;
            }
        }
    }
    out.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct GoldRow {
    question: String,
    label: String,
}

/// Reads a `question,label` CSV.
pub fn load_gold(path: &Path, data: &ResponseMatrix) -> Result<GoldLabels> {
    let file = open(path, |p| CliError::FileNotFound(p.to_path_buf()))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let rows: Vec<GoldRow> = reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect::<Result<_>>()?;
    Ok(GoldLabels::from_labels(
        data,
        rows.iter().map(|r| (r.question.as_str(), r.label.as_str())),
    )?)
}

pub fn write_gold(path: &Path, data: &ResponseMatrix, gold: &GoldLabels) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for (j, k) in gold.iter() {
        w.serialize(GoldRow {
            question: data.questions()[j].clone(),
            label: data.options()[k].clone(),
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// SHA-256 over the option list and the responses in (worker, question)
/// order, so row order in the source file does not matter.
pub fn dataset_checksum(data: &ResponseMatrix) -> String {
    let mut triplets = data.triplets().to_vec();
    triplets.sort_by_key(|t| (t.worker, t.question));
    let mut hasher = Sha256::new();
    for o in data.options() {
        hasher.update(o.as_bytes());
        hasher.update(b"\x1f");
    }
    hasher.update(b"\x1e");
    for t in &triplets {
        for field in [&data.workers()[t.worker], &data.questions()[t.question], &data.options()[t.option]] {
            hasher.update(field.as_bytes());
            hasher.update(b"\x1f");
        }
        hasher.update(b"\x1e");
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    writeln!(out).map_err(|e| CliError::io(path, e))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = open(path, |p| CliError::FileNotFound(p.to_path_buf()))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct TruthRow<'a> {
    question: &'a str,
    predicted_label: &'a str,
    confidence: f64,
}

/// `question,predicted_label,confidence`.
pub fn write_truth_csv(path: &Path, data: &ResponseMatrix, predicted: &[usize], confidence: &[f64]) -> Result<()> {
    write_rows(
        path,
        predicted.iter().zip(confidence).enumerate().map(|(j, (&k, &c))| TruthRow {
            question: &data.questions()[j],
            predicted_label: &data.options()[k],
            confidence: c,
        }),
    )
}

#[derive(Serialize)]
struct ClusterRow<'a> {
    worker: &'a str,
    cluster: usize,
}

/// `worker,cluster`.
pub fn write_clusters_csv(path: &Path, data: &ResponseMatrix, assignment: &[usize]) -> Result<()> {
    write_rows(
        path,
        assignment.iter().enumerate().map(|(i, &c)| ClusterRow {
            worker: &data.workers()[i],
            cluster: c,
        }),
    )
}

#[derive(Serialize)]
struct RankingRow<'a> {
    question: &'a str,
    difficulty_estimate: f64,
    difficulty_rank: usize,
    subjectivity_estimate: f64,
    subjectivity_rank: usize,
}

/// `question,difficulty_estimate,difficulty_rank,subjectivity_estimate,subjectivity_rank`.
pub fn write_rankings_csv(
    path: &Path,
    data: &ResponseMatrix,
    difficulty: &[f64],
    subjectivity: &[SubjectivityEstimate],
    rankings: &QuestionRankings,
) -> Result<()> {
    write_rows(
        path,
        (0..data.num_questions()).map(|j| RankingRow {
            question: &data.questions()[j],
            difficulty_estimate: difficulty[j],
            difficulty_rank: rankings.difficulty_rank[j],
            subjectivity_estimate: subjectivity[j].value,
            subjectivity_rank: rankings.subjectivity_rank[j],
        }),
    )
}

#[derive(Serialize)]
struct ResultRow<'a> {
    config_id: &'a str,
    metric: &'a str,
    mean: f64,
    std: f64,
    repetitions: usize,
}

/// `config_id,metric,mean,std,repetitions`; failed configurations report
/// the repetitions that succeeded.
pub fn write_results_csv(path: &Path, table: &ValidationTable) -> Result<()> {
    write_rows(
        path,
        table.rows.iter().map(|r| ResultRow {
            config_id: &r.config_id,
            metric: "worker_accuracy_1mae",
            mean: r.mean,
            std: r.std,
            repetitions: r.scores.iter().flatten().count(),
        }),
    )
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    worker: &'a str,
    question: &'a str,
    response: &'a str,
    predicted: &'a str,
}

/// `worker,question,response,predicted` for held-out responses.
pub fn write_predictions_csv(
    path: &Path,
    data: &ResponseMatrix,
    heldout: &[crowdtruth_core::dataset::Triplet],
    predicted: &[usize],
) -> Result<()> {
    write_rows(
        path,
        heldout.iter().zip(predicted).map(|(t, &p)| PredictionRow {
            worker: &data.workers()[t.worker],
            question: &data.questions()[t.question],
            response: &data.options()[t.option],
            predicted: &data.options()[p],
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[(&str, &str, &str)]) -> ResponseMatrix {
        let records: Vec<_> = rows.iter().map(|&(w, q, r)| ResponseRecord::new(w, q, r)).collect();
        ResponseMatrix::from_records(&records, None).unwrap()
    }

    #[test]
    fn checksum_ignores_row_order_but_not_content() {
        let a = matrix(&[("w1", "q1", "x"), ("w2", "q1", "y"), ("w1", "q2", "y")]);
        let b = matrix(&[("w1", "q2", "y"), ("w1", "q1", "x"), ("w2", "q1", "y")]);
        let c = matrix(&[("w1", "q1", "y"), ("w2", "q1", "y"), ("w1", "q2", "x")]);
        assert_eq!(dataset_checksum(&a), dataset_checksum(&b));
        assert_ne!(dataset_checksum(&a), dataset_checksum(&c));
        assert_eq!(dataset_checksum(&a).len(), 64);
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("bad.csv");
        fs::write(&csv_path, "worker,question,response\nw1,q1,a\nw2,q1\n").unwrap();
        match read_records(&csv_path, DataFormat::Csv) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let jsonl_path = dir.path().join("bad.jsonl");
        fs::write(&jsonl_path, "{\"worker\":\"w\",\"question\":\"q\",\"response\":\"a\"}\n\n{\"worker\":1}\n").unwrap();
        match read_records(&jsonl_path, DataFormat::Jsonl) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn format_follows_the_extension() {
        assert_eq!(DataFormat::from_path(Path::new("a/b.jsonl")), DataFormat::Jsonl);
        assert_eq!(DataFormat::from_path(Path::new("b.CSV")), DataFormat::Csv);
        assert_eq!(DataFormat::from_path(Path::new("b")), DataFormat::Csv);
    }

    #[test]
    fn labels_with_delimiters_survive_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let data = matrix(&[("a, b", "q \"1\"", "yes\nno"), ("c", "q2", "plain")]);
        write_responses(&path, &data, DataFormat::Csv).unwrap();
        assert_eq!(load_responses(&path, None, None).unwrap(), data);
    }
}
