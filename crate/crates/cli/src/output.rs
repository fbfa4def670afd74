//! CSV tables and run manifests.
//!
//! A result table holds one row per (parameter point, seed) followed by one
//! summary row per point. Reruns with the same configuration must produce
//! byte-identical CSV bodies, so everything time-dependent lives in `#`
//! comment lines and all floats are printed in fixed scientific notation.
//! The reader recomputes every summary from the sample rows it just parsed
//! and refuses files where they disagree — a regression guard for both the
//! writer and the statistics.

use std::fs;
use std::io;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use mpoqem::stats;
use serde::Serialize;

use crate::config::ExperimentConfig;

/// How a table's value columns are summarized over seeds. Channel-level
/// distances span decades and get geometric statistics; state-level
/// distances are tame and get arithmetic ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Geometric,
    Arithmetic,
}

impl Statistic {
    pub fn describe(self) -> &'static str {
        match self {
            Statistic::Geometric => {
                "geometric mean (value columns) and geometric std (spread columns) over seeds"
            }
            Statistic::Arithmetic => {
                "arithmetic mean (value columns) and sample std (spread columns) over seeds"
            }
        }
    }

    /// Center and spread of one value column's samples. `None` when the
    /// statistic is undefined (geometric summaries of nonpositive data).
    pub fn summarize(self, xs: &[f64]) -> Option<(f64, f64)> {
        match self {
            Statistic::Geometric => {
                if xs.iter().any(|&x| x <= 0.0) {
                    None
                } else {
                    Some((stats::geometric_mean(xs), stats::geometric_std(xs)))
                }
            }
            Statistic::Arithmetic => Some((stats::mean(xs), stats::std_dev(xs))),
        }
    }
}

/// Column layout of a result table. Point columns identify the parameter
/// point, sample columns carry per-seed annotations that are not averaged
/// (sweep counts, convergence flags), value columns hold the measured
/// distances that summaries are computed from.
#[derive(Debug, Clone)]
pub struct TableSchema {
    pub point_cols: Vec<&'static str>,
    pub sample_cols: Vec<&'static str>,
    pub value_cols: Vec<&'static str>,
    pub statistic: Statistic,
}

struct SampleRow {
    point: Vec<String>,
    seed: u64,
    sample: Vec<String>,
    values: Vec<f64>,
}

/// Accumulates sample rows and emits them plus per-point summaries.
pub struct ResultTable {
    schema: TableSchema,
    rows: Vec<SampleRow>,
}

/// Fixed-width scientific notation for measured values; deterministic and
/// uniform across platforms.
pub fn fmt_value(x: f64) -> String {
    format!("{x:.12e}")
}

impl ResultTable {
    pub fn new(schema: TableSchema) -> Self {
        Self {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn push_sample(
        &mut self,
        point: Vec<String>,
        seed: u64,
        sample: Vec<String>,
        values: Vec<f64>,
    ) {
        assert_eq!(point.len(), self.schema.point_cols.len());
        assert_eq!(sample.len(), self.schema.sample_cols.len());
        assert_eq!(values.len(), self.schema.value_cols.len());
        self.rows.push(SampleRow {
            point,
            seed,
            sample,
            values,
        });
    }

    /// Samples of one value column, grouped by point in first-appearance
    /// order.
    fn grouped(&self) -> Vec<(&[String], Vec<&SampleRow>)> {
        let mut groups: Vec<(&[String], Vec<&SampleRow>)> = Vec::new();
        for row in &self.rows {
            match groups.iter_mut().find(|(p, _)| *p == row.point.as_slice()) {
                Some((_, rows)) => rows.push(row),
                None => groups.push((row.point.as_slice(), vec![row])),
            }
        }
        groups
    }

    fn header(&self) -> String {
        let mut cols = vec!["kind".to_string()];
        cols.extend(self.schema.point_cols.iter().map(|s| s.to_string()));
        cols.push("seed".into());
        cols.extend(self.schema.sample_cols.iter().map(|s| s.to_string()));
        cols.extend(self.schema.value_cols.iter().map(|s| s.to_string()));
        cols.extend(
            self.schema
                .value_cols
                .iter()
                .map(|s| format!("spread_{s}")),
        );
        cols.join(",")
    }

    /// Header plus sample and summary rows — everything except the comment
    /// preamble. This is the part reruns must reproduce byte for byte.
    pub fn body(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header());
        out.push('\n');
        let empties = self.schema.value_cols.len();
        for row in &self.rows {
            let mut cells = vec!["sample".to_string()];
            cells.extend(row.point.iter().cloned());
            cells.push(row.seed.to_string());
            cells.extend(row.sample.iter().cloned());
            cells.extend(row.values.iter().map(|&v| fmt_value(v)));
            cells.extend(std::iter::repeat(String::new()).take(empties));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        for (point, rows) in self.grouped() {
            let mut cells = vec!["summary".to_string()];
            cells.extend(point.iter().cloned());
            cells.push(String::new());
            cells.extend(
                std::iter::repeat(String::new()).take(self.schema.sample_cols.len()),
            );
            let mut centers = Vec::with_capacity(empties);
            let mut spreads = Vec::with_capacity(empties);
            for v in 0..empties {
                let xs: Vec<f64> = rows.iter().map(|r| r.values[v]).collect();
                match self.schema.statistic.summarize(&xs) {
                    Some((c, s)) => {
                        centers.push(fmt_value(c));
                        spreads.push(fmt_value(s));
                    }
                    None => {
                        centers.push(String::new());
                        spreads.push(String::new());
                    }
                }
            }
            cells.extend(centers);
            cells.extend(spreads);
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes the table with its comment preamble and immediately reads it
    /// back through [`read_and_verify`], so a malformed file fails the run
    /// that produced it rather than some later analysis.
    pub fn write(&self, path: &Path, title: &str) -> io::Result<()> {
        let mut text = format!(
            "# {title}\n# written-unix {}\n# statistic: {}\n",
            unix_now(),
            self.schema.statistic.describe()
        );
        text.push_str(&self.body());
        fs::write(path, text)?;
        read_and_verify(path, &self.schema)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Ok(())
    }
}

/// Reads a table written by [`ResultTable::write`], recomputes all summary
/// statistics from the sample rows, and checks them against the summary
/// rows in the file. Returns the number of sample rows.
pub fn read_and_verify(path: &Path, schema: &TableSchema) -> Result<usize, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().ok_or("missing header line")?;
    let cols: Vec<&str> = header.split(',').collect();
    let np = schema.point_cols.len();
    let ns = schema.sample_cols.len();
    let nv = schema.value_cols.len();
    if cols.len() != 1 + np + 1 + ns + 2 * nv {
        return Err(format!(
            "header has {} columns, schema wants {}",
            cols.len(),
            1 + np + 1 + ns + 2 * nv
        ));
    }
    let mut rebuilt = ResultTable::new(schema.clone());
    let mut summaries: Vec<(Vec<String>, Vec<Option<(f64, f64)>>)> = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(format!("row has {} cells, header {}", cells.len(), cols.len()));
        }
        let point: Vec<String> = cells[1..1 + np].iter().map(|s| s.to_string()).collect();
        match cells[0] {
            "sample" => {
                let seed: u64 = cells[1 + np]
                    .parse()
                    .map_err(|_| format!("bad seed {:?}", cells[1 + np]))?;
                let sample: Vec<String> = cells[2 + np..2 + np + ns]
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                let values = cells[2 + np + ns..2 + np + ns + nv]
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|_| format!("bad value {s:?}")))
                    .collect::<Result<Vec<f64>, String>>()?;
                rebuilt.push_sample(point, seed, sample, values);
            }
            "summary" => {
                let mut stats = Vec::with_capacity(nv);
                for v in 0..nv {
                    let c = cells[2 + np + ns + v];
                    let s = cells[2 + np + ns + nv + v];
                    if c.is_empty() && s.is_empty() {
                        stats.push(None);
                    } else {
                        let c: f64 = c.parse().map_err(|_| format!("bad summary {c:?}"))?;
                        let s: f64 = s.parse().map_err(|_| format!("bad spread {s:?}"))?;
                        stats.push(Some((c, s)));
                    }
                }
                summaries.push((point, stats));
            }
            other => return Err(format!("unknown row kind {other:?}")),
        }
    }
    let expected = rebuilt.grouped();
    if expected.len() != summaries.len() {
        return Err(format!(
            "{} summary rows for {} parameter points",
            summaries.len(),
            expected.len()
        ));
    }
    for ((point, rows), (spoint, sstats)) in expected.iter().zip(&summaries) {
        if *point != spoint.as_slice() {
            return Err(format!("summary order mismatch at point {spoint:?}"));
        }
        for (v, got) in sstats.iter().enumerate() {
            let xs: Vec<f64> = rows.iter().map(|r| r.values[v]).collect();
            let want = schema.statistic.summarize(&xs);
            match (want, got) {
                (None, None) => {}
                (Some((wc, ws)), Some((gc, gs))) => {
                    let (gc, gs) = (*gc, *gs);
                    let ok = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
                    if !ok(wc, gc) || !ok(ws, gs) {
                        return Err(format!(
                            "summary for {spoint:?}/{} disagrees with samples: \
                             file ({gc:e}, {gs:e}) vs recomputed ({wc:e}, {ws:e})",
                            schema.value_cols[v]
                        ));
                    }
                }
                _ => {
                    return Err(format!(
                        "summary definedness mismatch for {spoint:?}/{}",
                        schema.value_cols[v]
                    ))
                }
            }
        }
    }
    Ok(rebuilt.n_samples())
}

/// A raw CSV without summary machinery, for per-sweep histories.
pub fn write_plain_csv(
    path: &Path,
    title: &str,
    header: &str,
    rows: &[Vec<String>],
) -> io::Result<()> {
    let mut text = format!("# {title}\n# written-unix {}\n{header}\n", unix_now());
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text)
}

/// A job that produced no row, kept for the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub point: String,
    pub seed: u64,
    pub error: String,
}

/// Provenance record written next to the CSV files.
#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub experiment: &'a str,
    pub written_unix: u64,
    pub paper_scale: bool,
    pub threads: usize,
    pub config: &'a ExperimentConfig,
    pub statistic: &'a str,
    pub csv_files: Vec<String>,
    pub sample_rows: usize,
    pub failures: &'a [Failure],
    /// Experiment-specific derived quantities: power-law fits, threshold
    /// verdicts.
    pub derived: serde_json::Value,
    pub wall_seconds: f64,
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
