//! Posterior functionals on new data and term curves on a grid.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{quantile_sorted, Side, TermBuild, Value};
use crate::data::{Column, DataTable};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::store::{format_value, Posterior};

pub const DEFAULT_CREDIBLE_LEVEL: f64 = 0.80;
pub const DEFAULT_PREDICTION_LEVEL: f64 = 0.95;
pub const DEFAULT_GRID: usize = 30;
pub const DEFAULT_BAND: [f64; 2] = [0.1, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    Credible,
    Prediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub fit: f64,
    pub lwr: f64,
    pub upr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTable {
    pub kind: IntervalKind,
    pub level: f64,
    pub rows: Vec<PredictionRow>,
}

impl PredictionTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fit,lwr,upr\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", format_value(r.fit), format_value(r.lwr), format_value(r.upr));
        }
        out
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("level must lie in (0, 1), got {level}")))
    }
}

fn interval(mut draws: Vec<f64>, level: f64) -> (f64, f64) {
    draws.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(&draws, tail), quantile_sorted(&draws, 1.0 - tail))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// `μᵢ⁽ˢ⁾` for every sweep (outer) and new row (inner).
fn mean_draws(post: &Posterior, x: &Matrix) -> Vec<Vec<f64>> {
    post.beta
        .rows
        .iter()
        .map(|beta| (0..x.rows()).map(|i| dot(x.row(i), beta)).collect())
        .collect()
}

fn by_row(draws: &[Vec<f64>], i: usize) -> Vec<f64> {
    draws.iter().map(|d| d[i]).collect()
}

fn require_samples(post: &Posterior) -> Result<()> {
    if post.n_samples() == 0 {
        Err(Error::store(&post.manifest.store_dir, "no retained samples"))
    } else {
        Ok(())
    }
}

/// Credible intervals for the mean response.
pub fn predict_mean(post: &Posterior, newdata: &DataTable, level: f64) -> Result<PredictionTable> {
    check_level(level)?;
    require_samples(post)?;
    let x = post.manifest.recipe.mean_matrix(newdata)?;
    let mu = mean_draws(post, &x);
    let rows = (0..x.rows())
        .map(|i| {
            let d = by_row(&mu, i);
            let fit = mean(&d);
            let (lwr, upr) = interval(d, level);
            PredictionRow { fit, lwr, upr }
        })
        .collect();
    Ok(PredictionTable {
        kind: IntervalKind::Credible,
        level,
        rows,
    })
}

/// Prediction intervals for a new response; one normal draw per sweep and row.
pub fn predict_response<R: Rng + ?Sized>(
    post: &Posterior,
    newdata: &DataTable,
    level: f64,
    rng: &mut R,
) -> Result<PredictionTable> {
    check_level(level)?;
    require_samples(post)?;
    let recipe = &post.manifest.recipe;
    let x = recipe.mean_matrix(newdata)?;
    let z = recipe.var_matrix(newdata)?;
    let mu = mean_draws(post, &x);
    let ystar: Vec<Vec<f64>> = mu
        .iter()
        .enumerate()
        .map(|(s, m)| {
            let alpha = &post.alpha.rows[s];
            let sigma2 = post.sigma2.rows[s][0];
            (0..x.rows())
                .map(|i| {
                    let eta = if z.cols() == 0 { 0.0 } else { dot(z.row(i), alpha) };
                    let sd = (sigma2 * eta.exp()).sqrt();
                    let xi: f64 = StandardNormal.sample(rng);
                    m[i] + sd * xi
                })
                .collect()
        })
        .collect();
    let rows = (0..x.rows())
        .map(|i| {
            let fit = mean(&by_row(&mu, i));
            let (lwr, upr) = interval(by_row(&ystar, i), level);
            PredictionRow { fit, lwr, upr }
        })
        .collect();
    Ok(PredictionTable {
        kind: IntervalKind::Prediction,
        level,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridValue {
    Num(f64),
    Level(String),
}

impl GridValue {
    fn as_value(&self) -> Value<'_> {
        match self {
            GridValue::Num(x) => Value::Num(*x),
            GridValue::Level(s) => Value::Level(s),
        }
    }

    fn render(&self) -> String {
        match self {
            GridValue::Num(x) => format_value(*x),
            GridValue::Level(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveSide {
    Mean,
    Stdev,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptions {
    pub side: CurveSide,
    pub term: String,
    pub grid: usize,
    pub intercept: bool,
    pub centre_effects: bool,
    /// Probabilities of the band columns; empty suppresses bands.
    pub quantiles: Vec<f64>,
}

impl GridOptions {
    pub fn new(side: CurveSide, term: &str) -> Self {
        GridOptions {
            side,
            term: term.to_string(),
            grid: DEFAULT_GRID,
            intercept: false,
            centre_effects: false,
            quantiles: DEFAULT_BAND.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermGrid {
    pub side: CurveSide,
    pub term: String,
    pub variables: Vec<String>,
    pub intercept: bool,
    pub centre_effects: bool,
    /// One entry per grid point, values in the order of `variables`.
    pub points: Vec<Vec<GridValue>>,
    pub fit: Vec<f64>,
    pub quantiles: Vec<f64>,
    /// `bands[k][i]` is quantile `quantiles[k]` at point `i`.
    pub bands: Vec<Vec<f64>>,
}

impl TermGrid {
    pub fn to_csv(&self) -> String {
        let mut header: Vec<String> = self.variables.clone();
        header.push("fit".into());
        header.extend(self.quantiles.iter().map(|q| format!("q{q}")));
        let mut out = header.join(",") + "\n";
        for (i, p) in self.points.iter().enumerate() {
            let mut cells: Vec<String> = p.iter().map(GridValue::render).collect();
            cells.push(format_value(self.fit[i]));
            cells.extend(self.bands.iter().map(|b| format_value(b[i])));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn axis(data: &DataTable, name: &str, grid: usize) -> Result<Vec<GridValue>> {
    match data.column(name) {
        Some(Column::Numeric(v)) => {
            let (lo, hi) = v
                .iter()
                .filter(|x| !x.is_nan())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            if !lo.is_finite() {
                return Err(Error::Data(format!("column `{name}` has no observed values")));
            }
            Ok(linspace(lo, hi, grid).into_iter().map(GridValue::Num).collect())
        }
        Some(Column::Categorical(_)) => Err(Error::Data(format!("column `{name}` is categorical"))),
        None => Err(Error::Data(format!("unknown column `{name}`"))),
    }
}

fn levels(build: &TermBuild) -> Vec<GridValue> {
    match build {
        TermBuild::Categorical { levels, .. } | TermBuild::SmoothByFactor { levels, .. } => {
            levels.iter().cloned().map(GridValue::Level).collect()
        }
        _ => Vec::new(),
    }
}

/// Posterior mean and bands of one term's contribution over a grid spanning
/// the observed covariate range in `data`.
pub fn term_grid(post: &Posterior, data: &DataTable, opts: &GridOptions) -> Result<TermGrid> {
    require_samples(post)?;
    for q in &opts.quantiles {
        if !(0.0..=1.0).contains(q) {
            return Err(Error::Config(format!("quantile {q} outside [0, 1]")));
        }
    }
    let recipe = &post.manifest.recipe;
    let side = match opts.side {
        CurveSide::Mean => Side::Mean,
        CurveSide::Stdev => Side::Variance,
    };
    let t = recipe.find_term(side, &opts.term)?;
    let terms = recipe.terms(side);
    let term = &terms[t];
    let offset: usize = terms[..t].iter().map(|x| x.width()).sum();
    let variables: Vec<String> = term.variables().into_iter().map(String::from).collect();

    let points: Vec<Vec<GridValue>> = match &term.build {
        TermBuild::Linear { var } | TermBuild::Smooth1 { var, .. } => {
            axis(data, var, opts.grid)?.into_iter().map(|v| vec![v]).collect()
        }
        TermBuild::Categorical { .. } => levels(&term.build).into_iter().map(|v| vec![v]).collect(),
        TermBuild::Smooth2 { vars, .. } => {
            let a = axis(data, &vars[0], opts.grid)?;
            let b = axis(data, &vars[1], opts.grid)?;
            b.iter()
                .flat_map(|y| a.iter().map(move |x| vec![x.clone(), y.clone()]))
                .collect()
        }
        TermBuild::SmoothByFactor { var, .. } => {
            let a = axis(data, var, opts.grid)?;
            levels(&term.build)
                .into_iter()
                .flat_map(|l| a.iter().map(move |x| vec![x.clone(), l.clone()]))
                .collect()
        }
    };
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| term.row(&p.iter().map(GridValue::as_value).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;

    let m = points.len();
    let curves: Vec<Vec<f64>> = (0..post.n_samples())
        .map(|s| {
            let mut curve: Vec<f64> = match opts.side {
                CurveSide::Mean => {
                    let beta = &post.beta.rows[s][1 + offset..1 + offset + term.width()];
                    rows.iter().map(|r| dot(r, beta)).collect()
                }
                CurveSide::Stdev => {
                    let alpha = &post.alpha.rows[s][offset..offset + term.width()];
                    rows.iter().map(|r| (0.5 * dot(r, alpha)).exp()).collect()
                }
            };
            if opts.centre_effects {
                let avg = mean(&curve);
                match opts.side {
                    CurveSide::Mean => curve.iter_mut().for_each(|v| *v -= avg),
                    CurveSide::Stdev => curve.iter_mut().for_each(|v| *v /= avg),
                }
            }
            if opts.intercept {
                match opts.side {
                    CurveSide::Mean => {
                        let b0 = post.beta.rows[s][0];
                        curve.iter_mut().for_each(|v| *v += b0);
                    }
                    CurveSide::Stdev => {
                        let sigma = post.sigma2.rows[s][0].sqrt();
                        curve.iter_mut().for_each(|v| *v *= sigma);
                    }
                }
            }
            curve
        })
        .collect();

    let mut fit = Vec::with_capacity(m);
    let mut bands = vec![Vec::with_capacity(m); opts.quantiles.len()];
    for i in 0..m {
        let mut d = by_row(&curves, i);
        fit.push(mean(&d));
        d.sort_by(f64::total_cmp);
        for (k, q) in opts.quantiles.iter().enumerate() {
            bands[k].push(quantile_sorted(&d, *q));
        }
    }
    Ok(TermGrid {
        side: opts.side,
        term: term.label.clone(),
        variables,
        intercept: opts.intercept,
        centre_effects: opts.centre_effects,
        points,
        fit,
        quantiles: opts.quantiles.clone(),
        bands,
    })
}
