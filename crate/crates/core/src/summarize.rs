//! Marginal inclusion probabilities, most visited models and deviances.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::basis::DesignMatrices;
use crate::linalg::dot;
use crate::store::Posterior;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LINE_WIDTH: usize = 80;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub label: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalInclusion {
    pub mean: Vec<Inclusion>,
    pub variance: Vec<Inclusion>,
}

fn column_means(labels: &[String], rows: &[Vec<f64>]) -> Vec<Inclusion> {
    let s = rows.len().max(1) as f64;
    labels
        .iter()
        .enumerate()
        .map(|(j, l)| Inclusion {
            label: l.clone(),
            probability: rows.iter().map(|r| r[j]).sum::<f64>() / s,
        })
        .collect()
}

pub fn marginal_inclusion(post: &Posterior) -> MarginalInclusion {
    MarginalInclusion {
        mean: column_means(&post.gamma.labels, &post.gamma.rows),
        variance: column_means(&post.delta.labels, &post.delta.rows),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub gamma: Vec<bool>,
    pub delta: Vec<bool>,
    pub freq: usize,
    /// Percent of retained sweeps.
    pub prob: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTable {
    pub mean_labels: Vec<String>,
    pub var_labels: Vec<String>,
    pub rows: Vec<ModelRow>,
    pub visited: usize,
    pub n_samples: usize,
}

impl ModelTable {
    pub fn total_prob(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cumulative)
    }
}

fn to_bits(row: &[f64]) -> Vec<bool> {
    row.iter().map(|&v| v != 0.0).collect()
}

/// All visited models, most frequent first; ties keep first-visit order.
pub fn visited_models(post: &Posterior) -> ModelTable {
    let mut index: HashMap<(Vec<bool>, Vec<bool>), usize> = HashMap::new();
    let mut models: Vec<(Vec<bool>, Vec<bool>, usize)> = Vec::new();
    for (g, d) in post.gamma.rows.iter().zip(&post.delta.rows) {
        let key = (to_bits(g), to_bits(d));
        match index.get(&key) {
            Some(&i) => models[i].2 += 1,
            None => {
                index.insert(key.clone(), models.len());
                models.push((key.0, key.1, 1));
            }
        }
    }
    // stable sort keeps first-visit order among ties
    models.sort_by(|a, b| b.2.cmp(&a.2));
    let s = post.gamma.rows.len();
    let mut cumulative = 0.0;
    let rows = models
        .into_iter()
        .map(|(gamma, delta, freq)| {
            let prob = 100.0 * freq as f64 / s as f64;
            cumulative += prob;
            ModelRow {
                gamma,
                delta,
                freq,
                prob,
                cumulative,
            }
        })
        .collect::<Vec<_>>();
    ModelTable {
        mean_labels: post.gamma.labels.clone(),
        var_labels: post.delta.labels.clone(),
        visited: rows.len(),
        rows,
        n_samples: s,
    }
}

pub fn top_models(post: &Posterior, n_models: usize) -> ModelTable {
    let mut t = visited_models(post);
    t.rows.truncate(n_models.max(1));
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviances {
    pub null: f64,
    pub mean_posterior: f64,
}

/// Deviance of the intercept-only Gaussian model at its MLE.
pub fn null_deviance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    n * (LN_2PI + var.ln() + 1.0)
}

/// `-2 Σᵢ log N(yᵢ; x*ᵢᵀβ, σ² exp(zᵢᵀα))`.
pub fn deviance(design: &DesignMatrices, beta: &[f64], alpha: &[f64], sigma2: f64) -> f64 {
    let mut ll = 0.0;
    for i in 0..design.n() {
        let mu = dot(design.xstar.row(i), beta);
        let eta = if design.p2() == 0 { 0.0 } else { dot(design.z.row(i), alpha) };
        let var = sigma2 * eta.exp();
        ll += -0.5 * (LN_2PI + var.ln()) - (design.response[i] - mu).powi(2) / (2.0 * var);
    }
    -2.0 * ll
}

pub fn deviances(post: &Posterior, design: &DesignMatrices) -> Deviances {
    let s = post.n_samples();
    let total: f64 = (0..s)
        .map(|k| deviance(design, &post.beta.rows[k], &post.alpha.rows[k], post.sigma2.rows[k][0]))
        .sum();
    Deviances {
        null: null_deviance(&design.response),
        mean_posterior: total / s as f64,
    }
}

/// Lay out named columns side by side, wrapping at 80 characters.
fn wrapped_table(headers: &[String], cells: &[Vec<String>], row_names: &[String]) -> String {
    let name_w = row_names.iter().map(String::len).max().unwrap_or(0);
    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(j, h)| cells.iter().map(|r| r[j].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let mut start = 0;
    while start < headers.len() {
        let mut end = start;
        let mut used = name_w;
        while end < headers.len() && (end == start || used + 1 + widths[end] <= LINE_WIDTH) {
            used += 1 + widths[end];
            end += 1;
        }
        let _ = write!(out, "{:name_w$}", "");
        for j in start..end {
            let _ = write!(out, " {:>w$}", headers[j], w = widths[j]);
        }
        out.push('\n');
        for (r, row) in cells.iter().enumerate() {
            let _ = write!(out, "{:<name_w$}", row_names[r]);
            for j in start..end {
                let _ = write!(out, " {:>w$}", row[j], w = widths[j]);
            }
            out.push('\n');
        }
        start = end;
    }
    out
}

fn inclusion_block(title: &str, incl: &[Inclusion]) -> String {
    let headers: Vec<String> = incl.iter().map(|i| i.label.clone()).collect();
    let cells = vec![incl.iter().map(|i| format!("{:.4}", i.probability)).collect()];
    format!("{title}\n{}", wrapped_table(&headers, &cells, &[String::new()]))
}

/// The `print`-style report written after a fit.
pub fn print_report(post: &Posterior) -> String {
    let m = &post.manifest;
    let incl = marginal_inclusion(post);
    let mut out = String::new();
    let _ = writeln!(out, "Model: {}", m.formula);
    let _ = writeln!(out, "Priors: {}", m.prior_summary.join("; "));
    let _ = writeln!(out, "\n{} posterior samples\n", post.n_samples());
    if !incl.mean.is_empty() {
        out.push_str(&inclusion_block("Mean model - marginal inclusion probabilities", &incl.mean));
        out.push('\n');
    }
    if !incl.variance.is_empty() {
        out.push_str(&inclusion_block("Variance model - marginal inclusion probabilities", &incl.variance));
        out.push('\n');
    }
    out
}

pub fn render_model_table(table: &ModelTable) -> String {
    let mut headers: Vec<String> = table.mean_labels.iter().map(|l| format!("mean.{l}")).collect();
    headers.extend(table.var_labels.iter().map(|l| format!("var.{l}")));
    headers.extend(["freq", "prob", "cumulative"].map(String::from));
    let bit = |b: &bool| if *b { "1".to_string() } else { "0".to_string() };
    let cells: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let mut row: Vec<String> = r.gamma.iter().chain(&r.delta).map(bit).collect();
            row.push(r.freq.to_string());
            row.push(format!("{:.2}", r.prob));
            row.push(format!("{:.2}", r.cumulative));
            row
        })
        .collect();
    let names: Vec<String> = (1..=cells.len()).map(|i| i.to_string()).collect();
    let mut out = String::from("Joint mean/variance model posterior probabilities:\n");
    out.push_str(&wrapped_table(&headers, &cells, &names));
    let _ = writeln!(out, "Displaying {} models of the {} visited", table.rows.len(), table.visited);
    let _ = writeln!(out, "{} models account for {:.2}", table.rows.len(), table.total_prob());
    out
}

/// Machine-readable counterpart of [`summary_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryJson {
    pub formula: String,
    pub priors: Vec<String>,
    pub samples: usize,
    pub burn: usize,
    pub thin: usize,
    pub deviances: Option<Deviances>,
    pub inclusion: MarginalInclusion,
    pub models: ModelTable,
}

pub fn summary_json(post: &Posterior, design: Option<&DesignMatrices>, n_models: usize) -> SummaryJson {
    let m = &post.manifest;
    SummaryJson {
        formula: m.formula.clone(),
        priors: m.prior_summary.clone(),
        samples: post.n_samples(),
        burn: m.burn,
        thin: m.thin,
        deviances: design.map(|d| deviances(post, d)),
        inclusion: marginal_inclusion(post),
        models: top_models(post, n_models),
    }
}

/// The `summary`-style report: model, priors, run, deviances and the most
/// visited models.
pub fn summary_report(post: &Posterior, design: Option<&DesignMatrices>, n_models: usize) -> String {
    let s = summary_json(post, design, n_models);
    let mut out = String::new();
    let _ = writeln!(out, "Specified model for the mean and variance:\n{}\n", s.formula);
    let _ = writeln!(out, "Specified priors:\n{}\n", s.priors.join("  "));
    let _ = writeln!(
        out,
        "Total posterior samples: {} ; burn-in: {} ; thinning: {}\n",
        s.samples, s.burn, s.thin
    );
    let _ = writeln!(out, "Files stored in {}\n", post.manifest.store_dir.display());
    if let Some(d) = s.deviances {
        let _ = writeln!(out, "Null deviance:           {:.3}", d.null);
        let _ = writeln!(out, "Mean posterior deviance: {:.3}\n", d.mean_posterior);
    }
    out.push_str(&render_model_table(&s.models));
    out
}
