//! On-disk posterior samples: seven text files with one retained sweep per
//! line, plus `manifest.json`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::quantile_sorted;
use crate::error::{Error, Result};
use crate::sampler::{ChainState, RunManifest};

pub const PARAMETERS: [&str; 7] = ["beta", "gamma", "alpha", "delta", "cbeta", "calpha", "sigma2"];
pub const MANIFEST: &str = "manifest.json";
pub const TIMING: &str = "timing.json";

/// Quantile levels reported by [`chain_summary`].
pub const SUMMARY_PROBS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

/// Shortest decimal text that parses back to exactly `v`.
pub fn format_value(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::store(dir, format!("cannot create directory: {e}")))
}

pub struct SampleStore {
    dir: PathBuf,
    files: Vec<BufWriter<File>>,
    lines: usize,
}

impl SampleStore {
    /// Create (or truncate) the seven parameter files.
    pub fn create(dir: &Path) -> Result<Self> {
        ensure_dir(dir)?;
        let files = PARAMETERS
            .iter()
            .map(|name| {
                let path = dir.join(format!("{name}.txt"));
                File::create(&path)
                    .map(BufWriter::new)
                    .map_err(|e| Error::store(&path, format!("cannot create: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleStore {
            dir: dir.to_path_buf(),
            files,
            lines: 0,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_sweep(&mut self, state: &ChainState) -> Result<()> {
        let beta = state
            .beta
            .as_ref()
            .ok_or_else(|| Error::store(&self.dir, "retained sweep has no coefficient draw"))?;
        let reals = |v: &[f64]| v.iter().map(|x| format_value(*x)).collect::<Vec<_>>().join(" ");
        let bits = |v: &[bool]| v.iter().map(|&b| if b { "1" } else { "0" }).collect::<Vec<_>>().join(" ");
        let lines = [
            reals(beta),
            bits(&state.gamma),
            reals(&state.alpha),
            bits(&state.delta),
            format_value(state.c_beta),
            format_value(state.c_alpha),
            format_value(state.sigma2),
        ];
        for (file, line) in self.files.iter_mut().zip(lines) {
            writeln!(file, "{line}").map_err(|e| Error::store(&self.dir, format!("write failed: {e}")))?;
        }
        self.lines += 1;
        Ok(())
    }

    /// Flush everything; returns the number of sweeps written.
    pub fn finish(mut self) -> Result<usize> {
        for f in &mut self.files {
            f.flush().map_err(|e| Error::store(&self.dir, format!("flush failed: {e}")))?;
        }
        Ok(self.lines)
    }
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(dir.join(MANIFEST), text + "\n").map_err(|e| Error::store(dir, format!("cannot write manifest: {e}")))
}

/// Wall-clock of a run, kept apart from the manifest so that repeated runs
/// leave identical manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

pub fn write_timing(dir: &Path, timing: &Timing) -> Result<()> {
    let text = serde_json::to_string_pretty(timing)?;
    fs::write(dir.join(TIMING), text + "\n").map_err(|e| Error::store(dir, format!("cannot write timing: {e}")))
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::store(&path, format!("cannot read: {e}")))?;
    let mut m: RunManifest = serde_json::from_str(&text)?;
    m.store_dir = dir.to_path_buf();
    Ok(m)
}

/// S × k samples of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub name: String,
    pub labels: Vec<String>,
    /// One row per retained sweep.
    pub rows: Vec<Vec<f64>>,
}

impl Samples {
    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn n_columns(&self) -> usize {
        self.labels.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

fn labels_for(manifest: &RunManifest, name: &str) -> Vec<String> {
    match name {
        "beta" => manifest.beta_labels.clone(),
        "gamma" => manifest.gamma_labels.clone(),
        "alpha" | "delta" => manifest.alpha_labels.clone(),
        other => vec![other.to_string()],
    }
}

/// Read the raw rows of `<dir>/<name>.txt`, checking every row has `width`
/// fields.
pub fn read_rows(dir: &Path, name: &str, width: usize) -> Result<Vec<Vec<f64>>> {
    if !PARAMETERS.contains(&name) {
        return Err(Error::store(dir, format!("unknown parameter `{name}`")));
    }
    let path = dir.join(format!("{name}.txt"));
    let file = File::open(&path).map_err(|e| Error::store(&path, format!("cannot open: {e}")))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::store(&path, format!("line {}: {e}", i + 1)))?;
        if row.len() != width {
            return Err(Error::store(
                &path,
                format!("line {} has {} fields, expected {width}", i + 1, row.len()),
            ));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Samples of one parameter with labels from the manifest.
pub fn read_parameter(dir: &Path, name: &str) -> Result<Samples> {
    let manifest = read_manifest(dir)?;
    read_parameter_with(&manifest, name)
}

pub fn read_parameter_with(manifest: &RunManifest, name: &str) -> Result<Samples> {
    let labels = labels_for(manifest, name);
    let rows = read_rows(&manifest.store_dir, name, labels.len())?;
    Ok(Samples {
        name: name.to_string(),
        labels,
        rows,
    })
}

/// Every parameter of a completed run.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub manifest: RunManifest,
    pub beta: Samples,
    pub gamma: Samples,
    pub alpha: Samples,
    pub delta: Samples,
    pub cbeta: Samples,
    pub calpha: Samples,
    pub sigma2: Samples,
}

impl Posterior {
    /// Load a store, failing when any file disagrees with the manifest's
    /// retained count.
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        let read = |name: &str| -> Result<Samples> {
            let s = read_parameter_with(&manifest, name)?;
            if s.n_samples() != manifest.retained {
                return Err(Error::store(
                    dir,
                    format!(
                        "{name}.txt has {} lines but the manifest records {} retained sweeps",
                        s.n_samples(),
                        manifest.retained
                    ),
                ));
            }
            Ok(s)
        };
        Ok(Posterior {
            beta: read("beta")?,
            gamma: read("gamma")?,
            alpha: read("alpha")?,
            delta: read("delta")?,
            cbeta: read("cbeta")?,
            calpha: read("calpha")?,
            sigma2: read("sigma2")?,
            manifest,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.manifest.retained
    }

    pub fn get(&self, name: &str) -> Option<&Samples> {
        match name {
            "beta" => Some(&self.beta),
            "gamma" => Some(&self.gamma),
            "alpha" => Some(&self.alpha),
            "delta" => Some(&self.delta),
            "cbeta" => Some(&self.cbeta),
            "calpha" => Some(&self.calpha),
            "sigma2" => Some(&self.sigma2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    pub naive_se: f64,
    pub time_series_se: f64,
    /// At [`SUMMARY_PROBS`].
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub n_samples: usize,
    pub columns: Vec<ColumnSummary>,
}

fn mean_of(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sd_of(x: &[f64], mean: f64) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Standard error of the mean from `⌊√S⌋` non-overlapping batches.
pub fn batch_means_se(x: &[f64]) -> f64 {
    let s = x.len();
    let batches = (s as f64).sqrt().floor() as usize;
    if batches < 2 {
        return 0.0;
    }
    let len = s / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean_of(&x[b * len..(b + 1) * len])).collect();
    let grand = mean_of(&means);
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

pub fn summarize_column(label: &str, x: &[f64]) -> ColumnSummary {
    let mean = mean_of(x);
    let sd = sd_of(x, mean);
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    ColumnSummary {
        label: label.to_string(),
        mean,
        sd,
        naive_se: sd / (x.len() as f64).sqrt(),
        time_series_se: batch_means_se(x),
        quantiles: SUMMARY_PROBS.iter().map(|&p| quantile_sorted(&sorted, p)).collect(),
    }
}

pub fn chain_summary(samples: &Samples) -> ChainSummary {
    ChainSummary {
        n_samples: samples.n_samples(),
        columns: samples
            .labels
            .iter()
            .enumerate()
            .map(|(j, l)| summarize_column(l, &samples.column(j)))
            .collect(),
    }
}
