//! Configuration parsing, result emission and CSV ingestion.
//!
//! All CSV inputs need a header row, use `.` as the decimal point and may not
//! contain NaN or infinite values.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde_json::{Map, Value};

use crate::conformal::{LossMonotonicity, RiskGrid, ScoreSample};
use crate::error::{Error, Result};
use crate::hypothesis::TwoSampleData;
use crate::multiple::PValueVector;
use crate::sim::{ExperimentSpec, ItemRecord, MetricRow, MetricsTable, OutlierTable, Source, Task};

pub const CSV_HEADER: [&str; 9] = [
    "sweep_param",
    "sweep_value",
    "method",
    "metric",
    "mean",
    "std",
    "inner_trials",
    "outer_reps",
    "seed",
];

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| io_err(path, e))?;
    Ok(s)
}

// ---------------------------------------------------------------- config

/// Keys whose values are replaced wholesale rather than merged; their own
/// types reject unknown fields.
const OPAQUE: [&str; 3] = ["sweep", "real", "synth"];

fn unknown_keys(
    user: &Map<String, Value>,
    defaults: &Map<String, Value>,
    prefix: &str,
    out: &mut Vec<String>,
) {
    for (k, v) in user {
        let name = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match defaults.get(k) {
            None => out.push(name),
            Some(Value::Object(d)) if !OPAQUE.contains(&k.as_str()) => {
                if let Value::Object(u) = v {
                    unknown_keys(u, d, &name, out);
                }
            }
            Some(_) => {}
        }
    }
}

fn merge(base: &mut Value, user: Value) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) if !OPAQUE.contains(&k.as_str()) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Build a validated spec for `task` from a JSON object; absent keys take
/// their defaults. An optional `task` key must agree with `task`.
pub fn parse_config_value(user: Value, task: Task) -> Result<ExperimentSpec> {
    let Value::Object(user) = user else {
        return Err(Error::Config("configuration must be a JSON object".into()));
    };
    let mut base = serde_json::to_value(ExperimentSpec::default_for(task))
        .map_err(|e| Error::Config(e.to_string()))?;
    let Value::Object(defaults) = &base else {
        unreachable!("spec serializes to an object")
    };
    let mut unknown = Vec::new();
    unknown_keys(&user, defaults, "", &mut unknown);
    if !unknown.is_empty() {
        return Err(Error::Config(format!(
            "unknown configuration keys: {}",
            unknown.join(", ")
        )));
    }
    if let Some(t) = user.get("task") {
        let given: Task =
            serde_json::from_value(t.clone()).map_err(|e| Error::Config(format!("task: {e}")))?;
        if given != task {
            return Err(Error::Config(format!(
                "configuration is for {given:?}, not {task:?}"
            )));
        }
    }
    merge(&mut base, Value::Object(user));
    let spec: ExperimentSpec =
        serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
    spec.validate().map_err(|e| match e {
        Error::Domain(msg) => Error::Config(msg),
        other => other,
    })?;
    Ok(spec)
}

pub fn parse_config_str(text: &str, task: Task) -> Result<ExperimentSpec> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    parse_config_value(value, task)
}

pub fn parse_config(path: &Path, task: Task) -> Result<ExperimentSpec> {
    parse_config_str(&read_to_string(path)?, task).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

// ---------------------------------------------------------------- results

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

pub fn write_csv<W: Write>(table: &MetricsTable, w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let ingest = |e: csv::Error| Error::Ingest(e.to_string());
    wr.write_record(CSV_HEADER).map_err(ingest)?;
    for row in &table.rows {
        wr.serialize(row).map_err(ingest)?;
    }
    wr.flush().map_err(|e| Error::Ingest(e.to_string()))
}

pub fn write_json<W: Write>(table: &MetricsTable, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, table).map_err(|e| Error::Ingest(e.to_string()))?;
    w.write_all(b"\n").map_err(|e| Error::Ingest(e.to_string()))
}

/// Render a table in memory; byte-stable for a fixed table.
pub fn render(table: &MetricsTable, format: Format) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(table, &mut buf)?,
        Format::Json => write_json(table, &mut buf)?,
    }
    Ok(buf)
}

pub fn emit_results(table: &MetricsTable, path: &Path, format: Format) -> Result<()> {
    let bytes = render(table, format)?;
    let mut f = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    f.write_all(&bytes)
        .and_then(|_| f.flush())
        .map_err(|e| io_err(path, e))
}

/// Re-ingest rows written by [`write_csv`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let mut rd = reader(path)?;
    let headers = rd.headers().map_err(|e| ingest_err(path, e))?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Ingest(format!(
            "{}: expected header {}",
            path.display(),
            CSV_HEADER.join(",")
        )));
    }
    rd.deserialize()
        .map(|r| r.map_err(|e| ingest_err(path, e)))
        .collect()
}

pub fn read_metrics_json(path: &Path) -> Result<MetricsTable> {
    serde_json::from_str(&read_to_string(path)?)
        .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- ingestion

fn ingest_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Ingest(format!("{}: {e}", path.display()))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(f))
}

/// A headed CSV file loaded into memory with column lookup by name.
struct Table<'a> {
    path: &'a Path,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl<'a> Table<'a> {
    fn load(path: &'a Path) -> Result<Self> {
        let mut rd = reader(path)?;
        let headers: Vec<String> = rd
            .headers()
            .map_err(|e| ingest_err(path, e))?
            .iter()
            .map(str::to_owned)
            .collect();
        if headers.iter().all(String::is_empty) {
            return Err(Error::Ingest(format!(
                "{}: missing header row",
                path.display()
            )));
        }
        let rows = rd
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| ingest_err(path, e))?;
        Ok(Self {
            path,
            headers,
            rows,
        })
    }

    fn find(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.find(name).ok_or_else(|| {
            Error::Ingest(format!("{}: missing column '{name}'", self.path.display()))
        })
    }

    fn cell<'r>(&self, row: &'r csv::StringRecord, line: usize, col: usize) -> Result<&'r str> {
        row.get(col).ok_or_else(|| {
            Error::Ingest(format!(
                "{}: line {}: missing value for '{}'",
                self.path.display(),
                line + 2,
                self.headers[col]
            ))
        })
    }

    fn float(&self, row: &csv::StringRecord, line: usize, col: usize) -> Result<f64> {
        let raw = self.cell(row, line, col)?;
        match raw.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(Error::Ingest(format!(
                "{}: line {}: column '{}' has non-finite or malformed value '{raw}'",
                self.path.display(),
                line + 2,
                self.headers[col]
            ))),
        }
    }

    fn boolean(&self, row: &csv::StringRecord, line: usize, col: usize) -> Result<bool> {
        match self.cell(row, line, col)?.to_ascii_lowercase().as_str() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            raw => Err(Error::Ingest(format!(
                "{}: line {}: column '{}' expects 0/1/true/false, got '{raw}'",
                self.path.display(),
                line + 2,
                self.headers[col]
            ))),
        }
    }
}

/// One row of a scores file: `value`, optionally `group`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub value: f64,
    pub group: Option<String>,
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let t = Table::load(path)?;
    let value = t.column("value")?;
    let group = t.find("group");
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(ScoreRecord {
                value: t.float(r, i, value)?,
                group: group
                    .map(|g| t.cell(r, i, g).map(str::to_owned))
                    .transpose()?,
            })
        })
        .collect()
}

pub fn read_score_sample(path: &Path) -> Result<ScoreSample> {
    ScoreSample::new(read_scores(path)?.into_iter().map(|r| r.value).collect())
}

/// Two-sample data from a scores file whose `group` column holds `A` or `B`.
pub fn read_two_sample(path: &Path) -> Result<TwoSampleData> {
    let records = read_scores(path)?;
    let mut data = TwoSampleData {
        group_a: vec![],
        group_b: vec![],
    };
    for (i, r) in records.into_iter().enumerate() {
        match r.group.as_deref() {
            Some("A") => data.group_a.push(r.value),
            Some("B") => data.group_b.push(r.value),
            Some(g) => {
                return Err(ingest_err(
                    path,
                    format!("line {}: group must be A or B, got '{g}'", i + 2),
                ))
            }
            None => return Err(ingest_err(path, "missing column 'group'")),
        }
    }
    Ok(data)
}

pub fn read_winrate_records(path: &Path) -> Result<Vec<ItemRecord>> {
    let t = Table::load(path)?;
    let (id, a) = (t.column("item_id")?, t.column("model_a_correct")?);
    let (b, src) = (t.column("model_b_correct")?, t.column("source")?);
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let source = match t.cell(r, i, src)?.to_ascii_lowercase().as_str() {
                "real" => Source::Real,
                "synthetic" | "synth" => Source::Synthetic,
                other => {
                    return Err(ingest_err(
                        path,
                        format!(
                            "line {}: source must be real or synthetic, got '{other}'",
                            i + 2
                        ),
                    ))
                }
            };
            Ok(ItemRecord {
                item_id: t.cell(r, i, id)?.to_owned(),
                model_a_correct: t.boolean(r, i, a)?,
                model_b_correct: t.boolean(r, i, b)?,
                source,
            })
        })
        .collect()
}

/// Hypothesis ids and p-values in file order.
pub fn read_pvalues(path: &Path) -> Result<(Vec<String>, PValueVector)> {
    let t = Table::load(path)?;
    let (id, p) = (t.column("hypothesis_id")?, t.column("pvalue")?);
    let mut ids = Vec::with_capacity(t.rows.len());
    let mut ps = Vec::with_capacity(t.rows.len());
    for (i, r) in t.rows.iter().enumerate() {
        ids.push(t.cell(r, i, id)?.to_owned());
        ps.push(t.float(r, i, p)?);
    }
    Ok((ids, PValueVector::new(ps)?))
}

/// Long-format losses (`point_id,lambda,loss`). Every point must report the
/// same set of lambdas; points keep their order of first appearance.
pub fn read_risk_grid(path: &Path, bound: f64, direction: LossMonotonicity) -> Result<RiskGrid> {
    let t = Table::load(path)?;
    let (pid, lam, loss) = (
        t.column("point_id")?,
        t.column("lambda")?,
        t.column("loss")?,
    );
    let mut order: Vec<String> = Vec::new();
    let mut points: BTreeMap<String, BTreeMap<u64, f64>> = BTreeMap::new();
    let mut lambdas: BTreeMap<u64, f64> = BTreeMap::new();
    for (i, r) in t.rows.iter().enumerate() {
        let id = t.cell(r, i, pid)?.to_owned();
        let l = t.float(r, i, lam)?;
        // key on the bit pattern of a total-order-preserving transform
        let key = ordered_bits(l);
        lambdas.insert(key, l);
        let entry = points.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            BTreeMap::new()
        });
        if entry.insert(key, t.float(r, i, loss)?).is_some() {
            return Err(ingest_err(
                path,
                format!("line {}: duplicate lambda {l} for point '{id}'", i + 2),
            ));
        }
    }
    let axis: Vec<f64> = lambdas.values().copied().collect();
    let rows = order
        .iter()
        .map(|id| {
            let p = &points[id];
            if p.len() != axis.len() {
                return Err(ingest_err(
                    path,
                    format!("point '{id}' has {} of {} lambdas", p.len(), axis.len()),
                ));
            }
            Ok(p.values().copied().collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    RiskGrid::new(axis, rows, bound, direction)
}

fn ordered_bits(x: f64) -> u64 {
    let b = (x + 0.0).to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | 1 << 63
    }
}

/// Outlier data: a `score` column, or every column except `label` as features.
/// `label` is optional (absent means all inliers) and takes 0/1, true/false
/// or inlier/outlier.
pub fn read_outlier_table(path: &Path) -> Result<OutlierTable> {
    let t = Table::load(path)?;
    let label = t.find("label");
    let (cols, scored): (Vec<usize>, bool) = match t.find("score") {
        Some(s) => (vec![s], true),
        None => (
            (0..t.headers.len()).filter(|&c| Some(c) != label).collect(),
            false,
        ),
    };
    if cols.is_empty() {
        return Err(ingest_err(path, "no feature or score columns"));
    }
    let mut table = OutlierTable {
        inliers: vec![],
        outliers: vec![],
        scored,
    };
    for (i, r) in t.rows.iter().enumerate() {
        let x = cols
            .iter()
            .map(|&c| t.float(r, i, c))
            .collect::<Result<Vec<_>>>()?;
        let is_outlier = match label {
            None => false,
            Some(l) => match t.cell(r, i, l)?.to_ascii_lowercase().as_str() {
                "outlier" => true,
                "inlier" => false,
                _ => t.boolean(r, i, l)?,
            },
        };
        if is_outlier {
            table.outliers.push(x);
        } else {
            table.inliers.push(x);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Method, Metric, Sweep, SweepParam};

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn empty_config_gives_defaults() {
        let spec = parse_config_str("{}", Task::BinomialTest).unwrap();
        assert_eq!(spec, ExperimentSpec::default_for(Task::BinomialTest));
        assert_eq!(
            (spec.n, spec.big_n, spec.alpha, spec.epsilon),
            (50, 500, 0.05, 0.02)
        );
        assert_eq!((spec.inner_trials, spec.outer_reps), (100, 100));
    }

    #[test]
    fn config_errors_name_fields() {
        let e = parse_config_str(r#"{"alpha": 1.5}"#, Task::BinomialTest)
            .unwrap_err()
            .to_string();
        assert!(e.contains("alpha") && e.contains("1.5"), "{e}");
        let e = parse_config_str(
            r#"{"alpah": 0.1, "crc": {"bogus": 1}, "N": 3}"#,
            Task::RiskControl,
        )
        .unwrap_err()
        .to_string();
        assert!(e.contains("alpah") && e.contains("crc.bogus"), "{e}");
        assert!(parse_config_str(r#"{"task": "Conformal"}"#, Task::BinomialTest).is_err());
        assert!(parse_config_str("[1]", Task::BinomialTest).is_err());
        assert!(parse_config_str(r#"{"n": "fifty"}"#, Task::BinomialTest).is_err());
        let e = parse_config_str(
            r#"{"contamination": {"trim_rate": 1.0}}"#,
            Task::OutlierSingle,
        )
        .unwrap_err();
        assert!(e.to_string().contains("trim_rate"));
    }

    #[test]
    fn range_sweep_config() {
        let spec = parse_config_str(
            r#"{"sweep": {"param": "rho_synt", "start": 0.45, "stop": 0.65, "step": 0.05}}"#,
            Task::BinomialTest,
        )
        .unwrap();
        assert_eq!(spec.sweep_points().unwrap().1.len(), 5);
        assert!(parse_config_str(
            r#"{"sweep": {"param": "rho_synt", "values": [0.5], "extra": 1}}"#,
            Task::BinomialTest
        )
        .is_err());
    }

    #[test]
    fn nested_defaults_are_kept() {
        let spec = parse_config_str(
            r#"{"contamination": {"trim_rate": 0.1}}"#,
            Task::OutlierFWER,
        )
        .unwrap();
        assert_eq!(spec.contamination.trim_rate, 0.1);
        assert_eq!(spec.contamination.clean_size, 100);
        let spec = parse_config_str(
            r#"{"conformal": {"synth": {"kind": "discrete", "support": [0, 1], "probs": [0.5, 0.5]}}}"#,
            Task::Conformal,
        )
        .unwrap();
        assert!(matches!(
            spec.conformal.synth,
            crate::sim::ScoreLaw::Discrete { .. }
        ));
    }

    fn table() -> MetricsTable {
        let mut rows = vec![];
        for v in [0.0, 0.01, 1.0 / 3.0] {
            for method in [Method::OnlyReal, Method::Gespi] {
                for metric in [Metric::Power, Metric::TypeIError] {
                    rows.push(MetricRow {
                        sweep_param: SweepParam::RhoSynt,
                        sweep_value: v,
                        method,
                        metric,
                        mean: v * 0.7 + 1e-9,
                        std: 0.1 / 3.0,
                        inner_trials: 100,
                        outer_reps: 100,
                        seed: u64::MAX,
                    });
                }
            }
        }
        MetricsTable {
            rows,
            sandwich_violations: 0,
        }
    }

    #[test]
    fn csv_emission_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        emit_results(&MetricsTable::default(), &p, Format::Csv).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            CSV_HEADER.join(",") + "\n"
        );

        let t = table();
        emit_results(&t, &p, Format::Csv).unwrap();
        let first = std::fs::read(&p).unwrap();
        assert_eq!(
            String::from_utf8(first.clone()).unwrap().lines().count(),
            13
        );
        emit_results(&t, &p, Format::Csv).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first);
        assert_eq!(read_metrics_csv(&p).unwrap(), t.rows);

        let j = dir.path().join("out.json");
        emit_results(&t, &j, Format::Json).unwrap();
        assert_eq!(read_metrics_json(&j).unwrap(), t);
        let text = std::fs::read_to_string(&j).unwrap();
        for field in CSV_HEADER {
            assert!(text.contains(&format!("\"{field}\"")));
        }
    }

    #[test]
    fn emit_reports_path_on_failure() {
        let e =
            emit_results(&table(), Path::new("/nonexistent/dir/x.csv"), Format::Csv).unwrap_err();
        assert!(e.to_string().contains("/nonexistent/dir/x.csv"));
    }

    #[test]
    fn ingest_scores_and_two_sample() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.csv", "value,group\n1.5,A\n-2,B\n3,A\n");
        assert_eq!(read_score_sample(&p).unwrap().scores(), &[1.5, -2.0, 3.0]);
        let d = read_two_sample(&p).unwrap();
        assert_eq!((d.group_a.len(), d.group_b.len()), (2, 1));

        let bad = write(&dir, "b.csv", "value\n1\nNaN\n");
        assert!(read_scores(&bad).unwrap_err().to_string().contains("value"));
        let inf = write(&dir, "i.csv", "value\ninf\n");
        assert!(read_scores(&inf).is_err());
        let missing = write(&dir, "m.csv", "score\n1\n");
        assert!(read_scores(&missing)
            .unwrap_err()
            .to_string()
            .contains("'value'"));
        let comma = write(&dir, "c.csv", "value\n\"1,5\"\n");
        assert!(read_scores(&comma).is_err());
    }

    #[test]
    fn ingest_winrate() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "w.csv",
            "item_id,model_a_correct,model_b_correct,source\nq1,1,0,real\nq2,true,true,synthetic\n",
        );
        let r = read_winrate_records(&p).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r[0].model_a_correct && !r[0].model_b_correct && r[0].source == Source::Real);
        let bad = write(&dir, "x.csv", "item_id,model_a_correct,source\nq1,1,real\n");
        assert!(read_winrate_records(&bad)
            .unwrap_err()
            .to_string()
            .contains("model_b_correct"));
    }

    #[test]
    fn ingest_pvalues_and_grid() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "p.csv", "hypothesis_id,pvalue\nh1,0.01\nh2,0.5\n");
        let (ids, pv) = read_pvalues(&p).unwrap();
        assert_eq!(ids, vec!["h1", "h2"]);
        assert_eq!(pv.values(), &[0.01, 0.5]);
        let zero = write(&dir, "z.csv", "hypothesis_id,pvalue\nh1,0\n");
        assert!(read_pvalues(&zero).is_err());

        let g = write(
            &dir,
            "g.csv",
            "point_id,lambda,loss\nb,1,0\na,0,1\nb,0,1\na,1,0.5\n",
        );
        let grid = read_risk_grid(&g, 1.0, LossMonotonicity::NonIncreasing).unwrap();
        assert_eq!(grid.lambdas(), &[0.0, 1.0]);
        assert_eq!(grid.row(0), &[1.0, 0.0]);
        assert_eq!(grid.row(1), &[1.0, 0.5]);
        let ragged = write(&dir, "r.csv", "point_id,lambda,loss\na,0,1\na,1,0\nb,0,1\n");
        assert!(read_risk_grid(&ragged, 1.0, LossMonotonicity::NonIncreasing).is_err());
    }

    #[test]
    fn ingest_outlier_tables() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "o.csv", "x1,x2,label\n0,1,0\n5,5,1\n1,0,inlier\n");
        let t = read_outlier_table(&p).unwrap();
        assert!(!t.scored);
        assert_eq!((t.inliers.len(), t.outliers.len()), (2, 1));
        assert_eq!(t.outliers[0], vec![5.0, 5.0]);
        let s = write(&dir, "s.csv", "id,score\n1,0.3\n2,0.9\n");
        let t = read_outlier_table(&s).unwrap();
        assert!(t.scored);
        assert_eq!(t.inliers, vec![vec![0.3], vec![0.9]]);
        let bad = write(&dir, "b.csv", "x1,label\n1,maybe\n");
        assert!(read_outlier_table(&bad)
            .unwrap_err()
            .to_string()
            .contains("label"));
    }

    #[test]
    fn winrate_records_drive_experiment() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("item_id,model_a_correct,model_b_correct,source\n");
        for i in 0..40 {
            let src = if i < 20 { "real" } else { "synthetic" };
            body.push_str(&format!(
                "q{i},{},{},{src}\n",
                u8::from(i % 2 == 0),
                u8::from(i % 4 == 0)
            ));
        }
        let p = write(&dir, "w.csv", &body);
        let mut spec = ExperimentSpec::default_for(Task::WinRate);
        spec.n = 10;
        spec.big_n = 15;
        spec.inner_trials = 5;
        spec.outer_reps = 3;
        spec.winrate.records = Some(p);
        spec.sweep = Some(Sweep::values(SweepParam::Epsilon, vec![0.0, 0.1]));
        let t = crate::sim::run_experiment(&spec).unwrap();
        assert_eq!(t.rows.len(), 6);
    }
}
