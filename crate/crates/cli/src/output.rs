//! Run directories, manifests, CSV rows and plain-text tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use simcim_core::stats::BatchStats;

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Clone)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        std::fs::create_dir_all(&path).with_context(|| format!("creating run directory {}", path.display()))?;
        Ok(Self { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.file(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn subdir(&self, name: &str) -> Result<Self> {
        Self::create(self.path.join(name))
    }

    /// The manifest is a valid configuration file: replaying it reproduces the run.
    pub fn write_manifest(&self, config: &RunConfig) -> Result<PathBuf> {
        let text = format!(
            "# simcim {} run manifest; replay with `simcim replay <this file>`\n{}",
            env!("CARGO_PKG_VERSION"),
            config.to_toml()?
        );
        self.write(MANIFEST, text)
    }
}

/// Column layout shared by every per-instance summary.
pub const INSTANCE_HEADER: &str =
    "instance,n,edges,label,best_known,max,median,difference,solved,probability,normalized_max,normalized_median,learning_rate";

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRow {
    pub instance: String,
    pub n: usize,
    pub edges: usize,
    pub label: String,
    pub stats: BatchStats,
    pub learning_rate: f64,
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl InstanceRow {
    pub fn cells(&self) -> Vec<String> {
        let s = &self.stats;
        vec![
            self.instance.clone(),
            self.n.to_string(),
            self.edges.to_string(),
            self.label.clone(),
            opt(s.best_known),
            s.max.to_string(),
            s.median.to_string(),
            opt(s.difference()),
            opt(s.solved()),
            format!("{:.4}", s.probability_of_max),
            opt(s.normalized_max().map(|v| format!("{v:.6}"))),
            opt(s.normalized_median().map(|v| format!("{v:.6}"))),
            format!("{:.6e}", self.learning_rate),
        ]
    }

    pub fn csv_row(&self) -> String {
        self.cells().join(",")
    }
}

pub fn instance_csv(rows: &[InstanceRow]) -> String {
    let mut out = String::from(INSTANCE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn instance_table(rows: &[InstanceRow]) -> String {
    let headers: Vec<&str> = INSTANCE_HEADER.split(',').collect();
    let body: Vec<Vec<String>> = rows.iter().map(InstanceRow::cells).collect();
    render_table(&headers, &body)
}

pub const BENCH_HEADER: &str = "label,instances,normalized_max,normalized_median,solved_fraction";

/// One benchmark summary row: per-instance normalized values averaged over the
/// instances that have a best-known value.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub label: String,
    pub instances: usize,
    pub normalized_max: f64,
    pub normalized_median: f64,
    pub solved_fraction: f64,
}

impl BenchRow {
    pub fn aggregate(label: &str, rows: &[InstanceRow]) -> Option<Self> {
        let known: Vec<&BatchStats> = rows.iter().map(|r| &r.stats).filter(|s| s.best_known.is_some()).collect();
        if known.is_empty() {
            return None;
        }
        let k = known.len() as f64;
        Some(Self {
            label: label.to_string(),
            instances: known.len(),
            normalized_max: known.iter().filter_map(|s| s.normalized_max()).sum::<f64>() / k,
            normalized_median: known.iter().filter_map(|s| s.normalized_median()).sum::<f64>() / k,
            solved_fraction: known.iter().filter(|s| s.solved() == Some(true)).count() as f64 / k,
        })
    }

    pub fn cells(&self) -> Vec<String> {
        vec![
            self.label.clone(),
            self.instances.to_string(),
            format!("{:.6}", self.normalized_max),
            format!("{:.6}", self.normalized_median),
            format!("{:.4}", self.solved_fraction),
        ]
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        anyhow::ensure!(f.len() == 5, "bench row {line:?} does not have 5 fields");
        Ok(Self {
            label: f[0].to_string(),
            instances: f[1].parse().with_context(|| format!("bad instance count in {line:?}"))?,
            normalized_max: f[2].parse().with_context(|| format!("bad normalized_max in {line:?}"))?,
            normalized_median: f[3].parse().with_context(|| format!("bad normalized_median in {line:?}"))?,
            solved_fraction: f[4].parse().with_context(|| format!("bad solved_fraction in {line:?}"))?,
        })
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.cells().join(","));
        out.push('\n');
    }
    out
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let headers: Vec<&str> = BENCH_HEADER.split(',').collect();
    let body: Vec<Vec<String>> = rows.iter().map(BenchRow::cells).collect();
    render_table(&headers, &body)
}

/// Left-aligned fixed-width table.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells.zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &mut headers.iter().copied());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for row in rows {
        line(&mut out, &mut row.iter().map(String::as_str));
    }
    out
}

pub fn cuts_csv(batches: &[Vec<f64>]) -> String {
    let mut out = String::from("batch,episode,cut\n");
    for (b, cuts) in batches.iter().enumerate() {
        for (e, c) in cuts.iter().enumerate() {
            let _ = writeln!(out, "{b},{e},{c}");
        }
    }
    out
}
