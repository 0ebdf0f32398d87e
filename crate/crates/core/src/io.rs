//! Artifact ingestion and persistence.
//!
//! Text formats are UTF-8 with LF line endings. Sequences travel as JSON
//! lines (`{"pid", "item", "actions": [...]}`); responses as a person-by-item
//! CSV grid with empty cells for missing scores; dissimilarity matrices as
//! CSV with person-id header row and column; item parameters, embeddings,
//! scoring rules, simulation truth, and evaluation summaries as JSON
//! documents carrying a schema-version field that loaders verify.

use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{EstimatorKind, EvalReport};
use crate::irt::{GrmItemParams, ResponseMatrix, MISSING};
use crate::mds::{EmbeddingModel, FeatureMatrix, ItemFeatures};
use crate::rbscore::ScoringRule;
use crate::seqdiss::{ActionSequence, DissimilarityMatrix};

pub const SCHEMA_PARAMS: &str = "procscore.params.v1";
pub const SCHEMA_EMBEDDING: &str = "procscore.embedding.v1";
pub const SCHEMA_RULE: &str = "procscore.rule.v1";
pub const SCHEMA_TRUTH: &str = "procscore.truth.v1";
pub const SCHEMA_REPORT: &str = "procscore.report.v1";

fn check_schema(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::SchemaMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sequences (JSON lines)
// ---------------------------------------------------------------------------

pub fn read_sequences_jsonl(path: &Path) -> Result<Vec<ActionSequence>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: ActionSequence =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                reason: e.to_string(),
            })?;
        if seq.actions.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                reason: "empty action list".into(),
            });
        }
        out.push(seq);
    }
    Ok(out)
}

pub fn write_sequences_jsonl(path: &Path, seqs: &[ActionSequence]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for seq in seqs {
        serde_json::to_writer(&mut w, seq)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Responses (CSV grid)
// ---------------------------------------------------------------------------

/// Reads a person-by-item score grid. When `declared_levels` is given, each
/// cell is validated against its item's category count and violations name
/// the row and column; otherwise levels are inferred from the observed
/// maxima.
pub fn read_responses_csv(
    path: &Path,
    declared_levels: Option<&BTreeMap<String, usize>>,
) -> Result<ResponseMatrix> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            reason: "need a person-id column and at least one item column".into(),
        });
    }
    let item_ids: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    let mut person_ids = Vec::new();
    let mut rows: Vec<Vec<i32>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let lineno = idx + 2; // header is line 1
        if record.len() != item_ids.len() + 1 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno,
                reason: format!("expected {} fields, got {}", item_ids.len() + 1, record.len()),
            });
        }
        person_ids.push(record[0].to_string());
        let mut row = Vec::with_capacity(item_ids.len());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                row.push(MISSING);
                continue;
            }
            let value: i32 = cell.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: lineno,
                reason: format!("non-integer score {cell:?} in column {}", item_ids[j]),
            })?;
            if value < 0 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno,
                    reason: format!("negative score in column {}", item_ids[j]),
                });
            }
            if let Some(declared) = declared_levels {
                if let Some(&levels) = declared.get(&item_ids[j]) {
                    if value as usize >= levels {
                        return Err(Error::Parse {
                            path: path.display().to_string(),
                            line: lineno,
                            reason: format!(
                                "score {value} exceeds the {} levels of item {}",
                                levels, item_ids[j]
                            ),
                        });
                    }
                }
            }
            row.push(value);
        }
        rows.push(row);
    }
    let n = person_ids.len();
    let j = item_ids.len();
    let mut scores = ndarray::Array2::from_elem((n, j), MISSING);
    for (i, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            scores[[i, c]] = v;
        }
    }
    let n_levels: Vec<usize> = (0..j)
        .map(|c| {
            if let Some(declared) = declared_levels {
                if let Some(&levels) = declared.get(&item_ids[c]) {
                    return levels;
                }
            }
            let observed_max = (0..n)
                .filter_map(|i| (scores[[i, c]] != MISSING).then_some(scores[[i, c]]))
                .max()
                .unwrap_or(1);
            (observed_max as usize + 1).max(2)
        })
        .collect();
    ResponseMatrix::new(person_ids, item_ids, n_levels, scores)
}

pub fn write_responses_csv(path: &Path, responses: &ResponseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "pid")?;
    for id in &responses.item_ids {
        write!(w, ",{id}")?;
    }
    writeln!(w)?;
    for i in 0..responses.n_persons() {
        write!(w, "{}", responses.person_ids[i])?;
        for j in 0..responses.n_items() {
            match responses.score(i, j) {
                Some(y) => write!(w, ",{y}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Dissimilarity matrices (CSV)
// ---------------------------------------------------------------------------

pub fn write_dissimilarity_csv(path: &Path, dmat: &DissimilarityMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "pid")?;
    for id in &dmat.ids {
        write!(w, ",{id}")?;
    }
    writeln!(w)?;
    for (i, id) in dmat.ids.iter().enumerate() {
        write!(w, "{id}")?;
        for j in 0..dmat.n() {
            write!(w, ",{}", dmat.get(i, j))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dissimilarity_csv(path: &Path) -> Result<DissimilarityMatrix> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let ids: Vec<String> = reader.headers()?.iter().skip(1).map(String::from).collect();
    let n = ids.len();
    let mut values = ndarray::Array2::zeros((n, n));
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        for j in 0..n {
            values[[i, j]] = record[j + 1].parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: i + 2,
                reason: format!("bad dissimilarity value {:?}", &record[j + 1]),
            })?;
        }
    }
    DissimilarityMatrix::from_values(ids, values)
}

// ---------------------------------------------------------------------------
// Item parameters (JSON)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    schema: String,
    items: Vec<GrmItemParams>,
}

pub fn save_params(path: &Path, params: &[GrmItemParams]) -> Result<()> {
    let mut sorted = params.to_vec();
    sorted.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let file = ParamsFile {
        schema: SCHEMA_PARAMS.to_string(),
        items: sorted,
    };
    write_json(path, &file)
}

pub fn load_params(path: &Path) -> Result<Vec<GrmItemParams>> {
    let file: ParamsFile = read_json(path)?;
    check_schema(&file.schema, SCHEMA_PARAMS)?;
    for p in &file.items {
        // revalidate invariants on the way in
        GrmItemParams::new(p.item_id.clone(), p.slope, p.intercepts.clone())?;
    }
    Ok(file.items)
}

// ---------------------------------------------------------------------------
// Embeddings and scoring rules (JSON)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct EmbeddingFile {
    schema: String,
    #[serde(flatten)]
    model: EmbeddingModel,
}

pub fn save_embedding(path: &Path, model: &EmbeddingModel) -> Result<()> {
    write_json(
        path,
        &EmbeddingFile {
            schema: SCHEMA_EMBEDDING.to_string(),
            model: model.clone(),
        },
    )
}

pub fn load_embedding(path: &Path) -> Result<EmbeddingModel> {
    let file: EmbeddingFile = read_json(path)?;
    check_schema(&file.schema, SCHEMA_EMBEDDING)?;
    Ok(file.model)
}

#[derive(Serialize, Deserialize)]
struct RuleFile {
    schema: String,
    #[serde(flatten)]
    rule: ScoringRule,
}

pub fn save_rule(path: &Path, rule: &ScoringRule) -> Result<()> {
    write_json(
        path,
        &RuleFile {
            schema: SCHEMA_RULE.to_string(),
            rule: rule.clone(),
        },
    )
}

pub fn load_rule(path: &Path) -> Result<ScoringRule> {
    let file: RuleFile = read_json(path)?;
    check_schema(&file.schema, SCHEMA_RULE)?;
    file.rule.validate()?;
    Ok(file.rule)
}

// ---------------------------------------------------------------------------
// Simulation truth (JSON)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct PersonTheta {
    pub pid: String,
    pub theta: f64,
}

#[derive(Serialize, Deserialize)]
pub struct TruthFile {
    pub schema: String,
    pub theta: Vec<PersonTheta>,
    pub params: Vec<GrmItemParams>,
}

pub fn save_truth(path: &Path, person_ids: &[String], theta: &[f64], params: &[GrmItemParams]) -> Result<()> {
    let file = TruthFile {
        schema: SCHEMA_TRUTH.to_string(),
        theta: person_ids
            .iter()
            .zip(theta)
            .map(|(pid, &theta)| PersonTheta {
                pid: pid.clone(),
                theta,
            })
            .collect(),
        params: params.to_vec(),
    };
    write_json(path, &file)
}

pub fn load_truth(path: &Path) -> Result<TruthFile> {
    let file: TruthFile = read_json(path)?;
    check_schema(&file.schema, SCHEMA_TRUTH)?;
    Ok(file)
}

// ---------------------------------------------------------------------------
// Feature matrices (CSV)
// ---------------------------------------------------------------------------

/// Writes per-item blocks column-bound into one labeled grid. All blocks must
/// share the same person order.
pub fn write_features_csv(path: &Path, blocks: &[ItemFeatures]) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::Domain("no feature blocks to write".into()));
    }
    let persons = &blocks[0].person_ids;
    for b in blocks {
        if &b.person_ids != persons {
            return Err(Error::InvalidConfig(
                "feature blocks disagree on the person order".into(),
            ));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "pid")?;
    for b in blocks {
        for label in &b.labels {
            write!(w, ",{label}")?;
        }
    }
    writeln!(w)?;
    for (i, pid) in persons.iter().enumerate() {
        write!(w, "{pid}")?;
        for b in blocks {
            for c in 0..b.values.ncols() {
                write!(w, ",{}", b.values[[i, c]])?;
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a labeled feature grid back into per-item blocks; columns group by
/// the `item:` prefix of their label, preserving order.
pub fn read_features_csv(path: &Path) -> Result<Vec<ItemFeatures>> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let labels: Vec<String> = reader.headers()?.iter().skip(1).map(String::from).collect();
    let mut item_order: Vec<String> = Vec::new();
    let mut columns_of: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (c, label) in labels.iter().enumerate() {
        let item = label.split(':').next().unwrap_or(label).to_string();
        if !columns_of.contains_key(&item) {
            item_order.push(item.clone());
        }
        columns_of.entry(item).or_default().push(c);
    }
    let mut person_ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        person_ids.push(record[0].to_string());
        let row: Vec<f64> = (1..record.len())
            .map(|c| {
                record[c].parse().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: idx + 2,
                    reason: format!("bad feature value {:?}", &record[c]),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != labels.len() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: idx + 2,
                reason: "wrong field count".into(),
            });
        }
        rows.push(row);
    }
    let mut blocks = Vec::new();
    for item in item_order {
        let cols = &columns_of[&item];
        let mut values = ndarray::Array2::zeros((rows.len(), cols.len()));
        for (i, row) in rows.iter().enumerate() {
            for (k, &c) in cols.iter().enumerate() {
                values[[i, k]] = row[c];
            }
        }
        blocks.push(ItemFeatures::new(item, person_ids.clone(), values)?);
    }
    Ok(blocks)
}

/// Writes an assembled feature matrix with its column labels.
pub fn write_feature_matrix_csv(path: &Path, matrix: &FeatureMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "pid")?;
    for label in &matrix.labels {
        write!(w, ",{label}")?;
    }
    writeln!(w)?;
    for (i, pid) in matrix.person_ids.iter().enumerate() {
        write!(w, "{pid}")?;
        for c in 0..matrix.values.ncols() {
            write!(w, ",{}", matrix.values[[i, c]])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

/// Tidy metrics export: one row per partition, test length, fold, estimator,
/// and metric.
pub fn write_report_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "partition,t,fold,estimator,metric,value")?;
    for r in &report.records {
        writeln!(
            w,
            "{},{},{},{},mse,{}",
            r.partition, r.t, r.fold, r.estimator, r.mse
        )?;
        writeln!(
            w,
            "{},{},{},{},tau,{}",
            r.partition, r.t, r.fold, r.estimator, r.tau
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Decile table export: one row per partition and decile.
pub fn write_deciles_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "partition,decile,mse_response,mse_process")?;
    for r in &report.deciles {
        writeln!(
            w,
            "{},{},{},{}",
            r.partition, r.decile, r.mse_response, r.mse_process
        )?;
    }
    w.flush()?;
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Summary document: per (test length, estimator) medians of the
/// partition-level averages, plus the mean decile table.
pub fn report_summary(report: &EvalReport) -> serde_json::Value {
    let mut medians = Vec::new();
    for kind in [EstimatorKind::Response, EstimatorKind::Process] {
        for t in report.t_values(kind) {
            let mut mses: Vec<f64> = Vec::new();
            let mut taus: Vec<f64> = Vec::new();
            for p in 0..report.partitions.len() {
                if let Some((m, tau)) = report.partition_mean(p, t, kind) {
                    mses.push(m);
                    taus.push(tau);
                }
            }
            medians.push(json!({
                "t": t,
                "estimator": kind.to_string(),
                "mse_median": median(&mut mses),
                "tau_median": median(&mut taus),
            }));
        }
    }
    let deciles: Vec<serde_json::Value> = report
        .decile_means()
        .into_iter()
        .enumerate()
        .map(|(b, (resp, proc))| {
            json!({
                "decile": b + 1,
                "mse_response": resp,
                "mse_process": proc,
            })
        })
        .collect();
    json!({
        "schema": SCHEMA_REPORT,
        "seed": report.seed,
        "folds": report.folds,
        "n_partitions": report.partitions.len(),
        "partitions": report.partitions,
        "medians": medians,
        "deciles": deciles,
    })
}

pub fn write_summary_json(path: &Path, report: &EvalReport) -> Result<()> {
    let value = report_summary(report);
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn sequences_round_trip_and_report_bad_lines() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("seqs.jsonl");
        let seqs = vec![
            ActionSequence::new("p1", "i1", vec!["Start".into(), "Next".into()]).unwrap(),
            ActionSequence::new("p2", "i1", vec!["Start".into(), "A".into(), "Next".into()])
                .unwrap(),
        ];
        write_sequences_jsonl(&path, &seqs).unwrap();
        assert_eq!(read_sequences_jsonl(&path).unwrap(), seqs);

        std::fs::write(&path, "{\"pid\":\"p1\",\"item\":\"i1\",\"actions\":[\"a\"]}\nnot json\n")
            .unwrap();
        match read_sequences_jsonl(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn responses_round_trip_with_missing_cells() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("responses.csv");
        let rm = ResponseMatrix::new(
            vec!["p1".into(), "p2".into()],
            vec!["i1".into(), "i2".into()],
            vec![2, 4],
            ndarray::arr2(&[[1, 3], [0, MISSING]]),
        )
        .unwrap();
        write_responses_csv(&path, &rm).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "pid,i1,i2\np1,1,3\np2,0,\n");
        let back = read_responses_csv(&path, None).unwrap();
        assert_eq!(back.scores(), rm.scores());
        assert_eq!(back.n_levels, vec![2, 4]);
    }

    #[test]
    fn declared_levels_catch_out_of_range_cells() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("responses.csv");
        std::fs::write(&path, "pid,i1\np1,5\n").unwrap();
        let mut declared = BTreeMap::new();
        declared.insert("i1".to_string(), 4usize);
        match read_responses_csv(&path, Some(&declared)).unwrap_err() {
            Error::Parse { line, reason, .. } => {
                assert_eq!(line, 2);
                assert!(reason.contains("i1"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn params_round_trip_and_schema_check() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("params.json");
        let params = vec![
            GrmItemParams::new("b", 1.2, vec![0.5, -0.5]).unwrap(),
            GrmItemParams::new("a", 0.9, vec![1.0]).unwrap(),
        ];
        save_params(&path, &params).unwrap();
        let loaded = load_params(&path).unwrap();
        // persisted sorted by item id
        assert_eq!(loaded[0].item_id, "a");
        assert_eq!(loaded[1].item_id, "b");
        assert_eq!(loaded[1].intercepts, vec![0.5, -0.5]);

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"a\": 0.9"));
        assert!(text.contains("\"d\": ["));
        let tampered = text.replace("procscore.params.v1", "procscore.params.v9");
        std::fs::write(&path, tampered).unwrap();
        assert!(matches!(
            load_params(&path),
            Err(Error::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn dissimilarity_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("dmat.csv");
        let dmat = DissimilarityMatrix::from_values(
            vec!["p1".into(), "p2".into()],
            ndarray::arr2(&[[0.0, 0.25], [0.25, 0.0]]),
        )
        .unwrap();
        write_dissimilarity_csv(&path, &dmat).unwrap();
        let back = read_dissimilarity_csv(&path).unwrap();
        assert_eq!(back.ids, dmat.ids);
        assert_eq!(back.get(0, 1), 0.25);
    }

    #[test]
    fn features_round_trip_groups_by_item_prefix() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let persons: Vec<String> = vec!["p1".into(), "p2".into(), "p3".into()];
        let blocks = vec![
            ItemFeatures::new("itemA", persons.clone(), ndarray::arr2(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
                .unwrap(),
            ItemFeatures::new("itemB", persons.clone(), ndarray::arr2(&[[0.5], [1.5], [2.5]]))
                .unwrap(),
        ];
        write_features_csv(&path, &blocks).unwrap();
        let back = read_features_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].item_id, "itemA");
        assert_eq!(back[0].values, blocks[0].values);
        assert_eq!(back[1].values, blocks[1].values);
        assert_eq!(back[0].person_ids, persons);
    }

    #[test]
    fn assembled_feature_matrix_exports_with_labels() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("matrix.csv");
        let persons: Vec<String> = vec!["p1".into(), "p2".into()];
        let rm = ResponseMatrix::new(
            persons.clone(),
            vec!["itemA".into()],
            vec![3],
            ndarray::arr2(&[[2], [0]]),
        )
        .unwrap();
        let block =
            ItemFeatures::new("itemA", persons.clone(), ndarray::arr2(&[[0.5], [1.5]])).unwrap();
        let matrix =
            crate::mds::build_feature_matrix(&[block], Some(&rm), true, &persons).unwrap();
        write_feature_matrix_csv(&path, &matrix).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "pid,itemA:f0,itemA:y=0,itemA:y=1,itemA:y=2\np1,0.5,0,0,1\np2,1.5,1,0,0\n"
        );
    }

    #[test]
    fn truth_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("truth.json");
        let params = vec![GrmItemParams::new("i1", 1.1, vec![0.0]).unwrap()];
        save_truth(
            &path,
            &["p1".into(), "p2".into()],
            &[0.3, -0.7],
            &params,
        )
        .unwrap();
        let truth = load_truth(&path).unwrap();
        assert_eq!(truth.theta.len(), 2);
        assert_eq!(truth.theta[1].theta, -0.7);
        assert_eq!(truth.params[0].item_id, "i1");
    }
}
