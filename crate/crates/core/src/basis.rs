//! Knot placement, basis evaluation and design-matrix assembly.
//!
//! A fitted design is described by a [`DesignRecipe`]: for each term it keeps
//! the knots, categorical levels and the column means subtracted during
//! centering. The recipe is serialized with every fit so that new data can be
//! mapped onto exactly the same columns at prediction time.

use std::collections::BTreeSet;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{Column, DataTable};
use crate::error::{Error, Result};
use crate::formula::{BasisCode, ModelSpec, Smooth, Term, TermKind};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnotSource {
    Quantile,
    User,
}

/// Knot locations, stored row-major with `dim` coordinates per knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotSet {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub source: KnotSource,
}

impl KnotSet {
    pub fn univariate(points: Vec<f64>, source: KnotSource) -> Self {
        KnotSet {
            dim: 1,
            coords: points,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }
}

/// Type-7 sample quantile of sorted data (linear interpolation between order
/// statistics).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// `count` knots: the minimum, the `j/(count-1)` quantiles and the maximum.
pub fn place_knots(values: &[f64], count: usize, variable: &str) -> Result<KnotSet> {
    if count < 2 {
        return Err(Error::Design(format!(
            "variable `{variable}`: at least 2 knots are needed, got {count}"
        )));
    }
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < count {
        return Err(Error::Design(format!(
            "variable `{variable}` has {} distinct values, fewer than the {count} knots requested",
            distinct.len()
        )));
    }
    let mut knots: Vec<f64> = (0..count)
        .map(|j| quantile_sorted(&sorted, j as f64 / (count - 1) as f64))
        .collect();
    knots.dedup();
    if knots.len() < count {
        warn!(
            "variable `{variable}`: tied quantiles collapsed, using {} knots instead of {count}",
            knots.len()
        );
    }
    Ok(KnotSet::univariate(knots, KnotSource::Quantile))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// `[u, r² log r² …]` for univariate `u`.
    Radial1,
    /// `[u, (u - ξ)₊ …]`.
    TruncatedLinear,
    /// `[u₁, u₂, ‖u - ξ‖² log ‖u - ξ‖² …]` for bivariate `u`.
    Radial2,
}

/// `r² log r²` with the limit value 0 at `r = 0`.
#[inline]
pub fn radial(r2: f64) -> f64 {
    if r2 == 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

pub fn eval_basis(kind: BasisKind, x: &[f64], knots: &KnotSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(knots.len() + 2);
    eval_basis_into(kind, x, knots, &mut out);
    out
}

fn eval_basis_into(kind: BasisKind, x: &[f64], knots: &KnotSet, out: &mut Vec<f64>) {
    match kind {
        BasisKind::Radial1 => {
            let u = x[0];
            out.push(u);
            out.extend(knots.coords.iter().map(|&k| radial((u - k) * (u - k))));
        }
        BasisKind::TruncatedLinear => {
            let u = x[0];
            out.push(u);
            out.extend(knots.coords.iter().map(|&k| (u - k).max(0.0)));
        }
        BasisKind::Radial2 => {
            out.push(x[0]);
            out.push(x[1]);
            out.extend(knots.points().map(|k| {
                let d0 = x[0] - k[0];
                let d1 = x[1] - k[1];
                radial(d0 * d0 + d1 * d1)
            }));
        }
    }
}

fn basis_kind(code: BasisCode) -> BasisKind {
    match code {
        BasisCode::Radial => BasisKind::Radial1,
        BasisCode::TruncatedLinear => BasisKind::TruncatedLinear,
    }
}

/// How one term turns data into design columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TermBuild {
    Linear {
        var: String,
    },
    /// Reference-level dummies; `levels[0]` is the reference.
    Categorical {
        var: String,
        levels: Vec<String>,
    },
    Smooth1 {
        var: String,
        basis: BasisCode,
        knots: KnotSet,
    },
    Smooth2 {
        vars: [String; 2],
        knots: KnotSet,
    },
    /// Univariate basis of `var` repeated once per level of `factor`.
    SmoothByFactor {
        var: String,
        factor: String,
        levels: Vec<String>,
        basis: BasisCode,
        knots: KnotSet,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecipe {
    pub label: String,
    pub build: TermBuild,
    pub column_labels: Vec<String>,
    /// Subtracted column means (0 for uncentered columns).
    pub offsets: Vec<f64>,
    pub centered: Vec<bool>,
}

/// A value of one term variable at a single observation.
#[derive(Debug, Clone, PartialEq)]
pub enum Value<'a> {
    Num(f64),
    Level(&'a str),
}

impl TermRecipe {
    pub fn width(&self) -> usize {
        self.column_labels.len()
    }

    pub fn variables(&self) -> Vec<&str> {
        match &self.build {
            TermBuild::Linear { var } | TermBuild::Categorical { var, .. } | TermBuild::Smooth1 { var, .. } => {
                vec![var]
            }
            TermBuild::Smooth2 { vars, .. } => vec![&vars[0], &vars[1]],
            TermBuild::SmoothByFactor { var, factor, .. } => vec![var, factor],
        }
    }

    pub fn knots(&self) -> Option<&KnotSet> {
        match &self.build {
            TermBuild::Smooth1 { knots, .. }
            | TermBuild::Smooth2 { knots, .. }
            | TermBuild::SmoothByFactor { knots, .. } => Some(knots),
            _ => None,
        }
    }

    /// Uncentered basis values for one observation, in the order of
    /// [`TermRecipe::variables`].
    pub fn raw_row(&self, values: &[Value<'_>], out: &mut Vec<f64>) -> Result<()> {
        let num = |i: usize| -> Result<f64> {
            match values[i] {
                Value::Num(x) => Ok(x),
                Value::Level(_) => Err(Error::Data(format!("term `{}` expects a numeric value", self.label))),
            }
        };
        let level = |i: usize| -> Result<&str> {
            match &values[i] {
                Value::Level(s) => Ok(s),
                Value::Num(_) => Err(Error::Data(format!("term `{}` expects a categorical value", self.label))),
            }
        };
        match &self.build {
            TermBuild::Linear { .. } => out.push(num(0)?),
            TermBuild::Categorical { var, levels } => {
                let l = level(0)?;
                let idx = levels
                    .iter()
                    .position(|x| x == l)
                    .ok_or_else(|| Error::Data(format!("unseen level `{l}` of `{var}`")))?;
                out.extend((1..levels.len()).map(|j| if j == idx { 1.0 } else { 0.0 }));
            }
            TermBuild::Smooth1 { basis, knots, .. } => {
                eval_basis_into(basis_kind(*basis), &[num(0)?], knots, out);
            }
            TermBuild::Smooth2 { knots, .. } => {
                eval_basis_into(BasisKind::Radial2, &[num(0)?, num(1)?], knots, out);
            }
            TermBuild::SmoothByFactor {
                factor,
                levels,
                basis,
                knots,
                ..
            } => {
                let l = level(1)?;
                let idx = levels
                    .iter()
                    .position(|x| x == l)
                    .ok_or_else(|| Error::Data(format!("unseen level `{l}` of `{factor}`")))?;
                let start = out.len();
                eval_basis_into(basis_kind(*basis), &[num(0)?], knots, out);
                let base: Vec<f64> = out.drain(start..).collect();
                for j in 0..levels.len() {
                    if j == idx {
                        out.extend_from_slice(&base);
                    } else {
                        out.extend(std::iter::repeat_n(0.0, base.len()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Centered columns for one observation.
    pub fn row(&self, values: &[Value<'_>]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.width());
        self.raw_row(values, &mut out)?;
        for (v, off) in out.iter_mut().zip(&self.offsets) {
            *v -= off;
        }
        Ok(out)
    }

    fn values_at<'a>(&self, table: &'a DataTable, row: usize) -> Result<Vec<Value<'a>>> {
        self.variables()
            .into_iter()
            .map(|name| match table.column(name) {
                Some(Column::Numeric(v)) => Ok(Value::Num(v[row])),
                Some(Column::Categorical(v)) => v[row]
                    .as_deref()
                    .map(Value::Level)
                    .ok_or_else(|| Error::Data(format!("missing value in `{name}` at row {}", row + 1))),
                None => Err(Error::Data(format!("unknown column `{name}`"))),
            })
            .collect()
    }

    /// Range of each continuous variable covered by the knots, used to flag
    /// extrapolation.
    fn knot_range(&self) -> Option<Vec<(f64, f64)>> {
        let knots = self.knots()?;
        Some(
            (0..knots.dim)
                .map(|d| {
                    knots.points().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                        (lo.min(p[d]), hi.max(p[d]))
                    })
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Mean,
    Variance,
}

/// Everything needed to rebuild the design columns on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecipe {
    pub response: String,
    pub mean: Vec<TermRecipe>,
    pub var: Vec<TermRecipe>,
}

/// Contiguous column range owned by one term (indices exclude the intercept).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

fn blocks_of(terms: &[TermRecipe]) -> Vec<Block> {
    let mut start = 0;
    terms
        .iter()
        .map(|t| {
            let b = Block {
                label: t.label.clone(),
                start,
                end: start + t.width(),
            };
            start = b.end;
            b
        })
        .collect()
}

impl DesignRecipe {
    pub fn terms(&self, side: Side) -> &[TermRecipe] {
        match side {
            Side::Mean => &self.mean,
            Side::Variance => &self.var,
        }
    }

    pub fn mean_width(&self) -> usize {
        self.mean.iter().map(TermRecipe::width).sum()
    }

    pub fn var_width(&self) -> usize {
        self.var.iter().map(TermRecipe::width).sum()
    }

    pub fn blocks(&self, side: Side) -> Vec<Block> {
        blocks_of(self.terms(side))
    }

    pub fn column_labels(&self, side: Side) -> Vec<String> {
        self.terms(side)
            .iter()
            .flat_map(|t| t.column_labels.iter().cloned())
            .collect()
    }

    /// Find a term by label, or by 1-based index given as a string.
    pub fn find_term(&self, side: Side, key: &str) -> Result<usize> {
        let terms = self.terms(side);
        if let Some(i) = terms.iter().position(|t| t.label == key) {
            return Ok(i);
        }
        if let Ok(i) = key.parse::<usize>() {
            if i >= 1 && i <= terms.len() {
                return Ok(i - 1);
            }
        }
        Err(Error::UnknownTerm(key.to_string()))
    }

    /// Variables needed to evaluate both sides.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in self.mean.iter().chain(&self.var) {
            for v in t.variables() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    fn side_matrix(&self, side: Side, table: &DataTable, with_intercept: bool) -> Result<Matrix> {
        let terms = self.terms(side);
        let width = terms.iter().map(TermRecipe::width).sum::<usize>() + usize::from(with_intercept);
        let n = table.n_rows();
        let mut m = Matrix::zeros(n, width);
        let mut warned = vec![false; terms.len()];
        for i in 0..n {
            let row = m.row_mut(i);
            let mut at = 0;
            if with_intercept {
                row[0] = 1.0;
                at = 1;
            }
            for (t, term) in terms.iter().enumerate() {
                let values = term.values_at(table, i)?;
                if !warned[t] {
                    if let Some(range) = term.knot_range() {
                        let outside = values.iter().zip(&range).any(|(v, (lo, hi))| match v {
                            Value::Num(x) => x < lo || x > hi,
                            Value::Level(_) => false,
                        });
                        if outside {
                            warn!("term `{}`: covariate outside the knot range, basis extrapolates", term.label);
                            warned[t] = true;
                        }
                    }
                }
                let vals = term.row(&values)?;
                row[at..at + vals.len()].copy_from_slice(&vals);
                at += vals.len();
            }
        }
        Ok(m)
    }

    /// Mean design `[1, X]` for a table holding the model variables.
    pub fn mean_matrix(&self, table: &DataTable) -> Result<Matrix> {
        self.side_matrix(Side::Mean, table, true)
    }

    /// Variance design `Z` (no intercept column).
    pub fn var_matrix(&self, table: &DataTable) -> Result<Matrix> {
        self.side_matrix(Side::Variance, table, false)
    }
}

/// Centered design matrices and the response.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub response: Vec<f64>,
    /// `n × (1 + p₁)`, first column all ones.
    pub xstar: Matrix,
    /// `n × p₂`.
    pub z: Matrix,
    pub mean_blocks: Vec<Block>,
    pub var_blocks: Vec<Block>,
    pub recipe: DesignRecipe,
    /// Rows removed for missing values.
    pub dropped_rows: usize,
}

impl DesignMatrices {
    pub fn n(&self) -> usize {
        self.response.len()
    }

    /// Number of mean-side columns excluding the intercept.
    pub fn p1(&self) -> usize {
        self.xstar.cols() - 1
    }

    pub fn p2(&self) -> usize {
        self.z.cols()
    }

    pub fn mean_labels(&self) -> Vec<String> {
        self.recipe.column_labels(Side::Mean)
    }

    pub fn var_labels(&self) -> Vec<String> {
        self.recipe.column_labels(Side::Variance)
    }

    pub fn beta_labels(&self) -> Vec<String> {
        std::iter::once("(Intercept)".to_string())
            .chain(self.mean_labels())
            .collect()
    }

    /// Rebuild from a recipe and a table that has the model variables.
    pub fn from_recipe(recipe: DesignRecipe, table: &DataTable) -> Result<Self> {
        let mut names = vec![recipe.response.as_str()];
        names.extend(recipe.variables());
        let (table, dropped_rows) = table.complete_cases(&names)?;
        let response = table.numeric(&recipe.response)?.to_vec();
        let xstar = recipe.mean_matrix(&table)?;
        let z = recipe.var_matrix(&table)?;
        Ok(DesignMatrices {
            response,
            xstar,
            z,
            mean_blocks: recipe.blocks(Side::Mean),
            var_blocks: recipe.blocks(Side::Variance),
            recipe,
            dropped_rows,
        })
    }
}

fn levels_of(values: &[Option<String>]) -> Vec<String> {
    values
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Read a knot CSV: optional header, one or two numeric columns.
pub fn read_knot_file(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Design(format!("cannot read knot file {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim().trim_matches('"')).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) => {
                if v.is_empty() || v.len() > 2 {
                    return Err(Error::Design(format!(
                        "knot file {}: line {} must have 1 or 2 columns",
                        path.display(),
                        i + 1
                    )));
                }
                if *width.get_or_insert(v.len()) != v.len() {
                    return Err(Error::Design(format!(
                        "knot file {}: ragged line {}",
                        path.display(),
                        i + 1
                    )));
                }
                rows.push(v);
            }
            Err(_) if rows.is_empty() && width.is_none() => {
                // header
                width = Some(fields.len());
            }
            Err(_) => {
                return Err(Error::Design(format!(
                    "knot file {}: non-numeric value on line {}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Design(format!("knot file {} has no knots", path.display())));
    }
    Ok(rows)
}

fn univariate_knots_from_file(path: &str, column: usize, var: &str) -> Result<KnotSet> {
    let rows = read_knot_file(path)?;
    let col = column.min(rows[0].len() - 1);
    let mut pts: Vec<f64> = rows.iter().map(|r| r[col]).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.is_empty() {
        return Err(Error::Design(format!("no knots for `{var}`")));
    }
    Ok(KnotSet::univariate(pts, KnotSource::User))
}

fn numeric_column<'a>(table: &'a DataTable, name: &str) -> Result<&'a [f64]> {
    match table.column(name) {
        Some(Column::Numeric(v)) => Ok(v),
        Some(Column::Categorical(_)) => Err(Error::Design(format!("`{name}` must be numeric in this term"))),
        None => Err(Error::Design(format!("unknown column `{name}`"))),
    }
}

fn smooth_labels(var: &str, label: &str, n_knots: usize) -> Vec<String> {
    std::iter::once(var.to_string())
        .chain((1..=n_knots).map(|j| format!("{label}.{j}")))
        .collect()
}

fn resolve_term(term: &Term, table: &DataTable) -> Result<Option<(TermBuild, Vec<String>)>> {
    let is_cat = |name: &str| -> Result<bool> {
        table
            .column(name)
            .map(Column::is_categorical)
            .ok_or_else(|| Error::Design(format!("unknown column `{name}`")))
    };
    Ok(Some(match &term.kind {
        TermKind::Intercept => return Ok(None),
        TermKind::Linear(var) | TermKind::Categorical(var) => {
            if is_cat(var)? {
                let levels = match table.column(var) {
                    Some(Column::Categorical(v)) => levels_of(v),
                    _ => unreachable!(),
                };
                if levels.len() < 2 {
                    return Err(Error::Design(format!("categorical `{var}` has only one level")));
                }
                let labels = levels[1..].iter().map(|l| format!("{var}{l}")).collect();
                (TermBuild::Categorical { var: var.clone(), levels }, labels)
            } else {
                (TermBuild::Linear { var: var.clone() }, vec![var.clone()])
            }
        }
        TermKind::Smooth(s) => resolve_smooth(s, &term.label, table, &is_cat)?,
    }))
}

fn resolve_smooth(
    s: &Smooth,
    label: &str,
    table: &DataTable,
    is_cat: &dyn Fn(&str) -> Result<bool>,
) -> Result<(TermBuild, Vec<String>)> {
    match s.vars.as_slice() {
        [var] => {
            if is_cat(var)? {
                return Err(Error::Design(format!("smooth term `{label}` needs a numeric variable")));
            }
            let knots = match &s.knots {
                Some(path) => univariate_knots_from_file(path, 0, var)?,
                None => place_knots(numeric_column(table, var)?, s.k, var)?,
            };
            let labels = smooth_labels(var, label, knots.len());
            Ok((
                TermBuild::Smooth1 {
                    var: var.clone(),
                    basis: s.basis,
                    knots,
                },
                labels,
            ))
        }
        [a, b] => {
            let (ca, cb) = (is_cat(a)?, is_cat(b)?);
            if ca && cb {
                return Err(Error::Design(format!(
                    "smooth term `{label}`: at most one variable may be categorical"
                )));
            }
            if ca || cb {
                let (var, factor, var_col) = if ca { (b, a, 1) } else { (a, b, 0) };
                let levels = match table.column(factor) {
                    Some(Column::Categorical(v)) => levels_of(v),
                    _ => unreachable!(),
                };
                if levels.len() < 2 {
                    return Err(Error::Design(format!("categorical `{factor}` has only one level")));
                }
                let knots = match &s.knots {
                    Some(path) => univariate_knots_from_file(path, var_col, var)?,
                    None => place_knots(numeric_column(table, var)?, s.k, var)?,
                };
                let base = smooth_labels(var, &format!("sm({var})"), knots.len());
                let labels = levels
                    .iter()
                    .flat_map(|l| base.iter().map(move |c| format!("{c}:{factor}{l}")))
                    .collect();
                return Ok((
                    TermBuild::SmoothByFactor {
                        var: var.clone(),
                        factor: factor.clone(),
                        levels,
                        basis: s.basis,
                        knots,
                    },
                    labels,
                ));
            }
            if s.basis != BasisCode::Radial {
                return Err(Error::Design(format!(
                    "smooth term `{label}`: bivariate surfaces use the radial basis"
                )));
            }
            let knots = match &s.knots {
                Some(path) => {
                    let rows = read_knot_file(path)?;
                    if rows[0].len() != 2 {
                        return Err(Error::Design(format!("bivariate term `{label}` needs a two-column knot file")));
                    }
                    KnotSet {
                        dim: 2,
                        coords: rows.into_iter().flatten().collect(),
                        source: KnotSource::User,
                    }
                }
                None => {
                    let ka = place_knots(numeric_column(table, a)?, s.k, a)?;
                    let kb = place_knots(numeric_column(table, b)?, s.k, b)?;
                    let mut coords = Vec::with_capacity(2 * ka.len() * kb.len());
                    for &vb in &kb.coords {
                        for &va in &ka.coords {
                            coords.push(va);
                            coords.push(vb);
                        }
                    }
                    KnotSet {
                        dim: 2,
                        coords,
                        source: KnotSource::Quantile,
                    }
                }
            };
            let labels = std::iter::once(a.clone())
                .chain(std::iter::once(b.clone()))
                .chain((1..=knots.len()).map(|j| format!("{label}.{j}")))
                .collect();
            Ok((
                TermBuild::Smooth2 {
                    vars: [a.clone(), b.clone()],
                    knots,
                },
                labels,
            ))
        }
        _ => Err(Error::Design(format!("smooth term `{label}` must have one or two variables"))),
    }
}

fn fit_terms(terms: &[Term], table: &DataTable) -> Result<Vec<TermRecipe>> {
    let mut out = Vec::new();
    for term in terms {
        let Some((build, column_labels)) = resolve_term(term, table)? else {
            continue;
        };
        let centered = match &build {
            TermBuild::Categorical { .. } => vec![false; column_labels.len()],
            _ => vec![true; column_labels.len()],
        };
        let mut recipe = TermRecipe {
            label: term.label.clone(),
            build,
            offsets: vec![0.0; column_labels.len()],
            column_labels,
            centered,
        };
        let n = table.n_rows();
        let mut sums = vec![0.0; recipe.width()];
        let mut buf = Vec::with_capacity(recipe.width());
        for i in 0..n {
            buf.clear();
            let values = recipe.values_at(table, i)?;
            recipe.raw_row(&values, &mut buf)?;
            for (s, v) in sums.iter_mut().zip(&buf) {
                *s += v;
            }
        }
        for ((off, s), c) in recipe.offsets.iter_mut().zip(sums).zip(&recipe.centered) {
            if *c {
                *off = s / n as f64;
            }
        }
        out.push(recipe);
    }
    Ok(out)
}

/// Build the centered design for `spec` on `data`, placing quantile knots
/// where none were supplied.
pub fn build_design(spec: &ModelSpec, data: &DataTable) -> Result<DesignMatrices> {
    let vars = spec.variables();
    for v in &vars {
        if data.column(v).is_none() {
            return Err(Error::Design(format!("unknown column `{v}`")));
        }
    }
    let (table, dropped) = data.complete_cases(&vars)?;
    if dropped > 0 {
        warn!("removed {dropped} rows with missing values");
    }
    if table.n_rows() == 0 {
        return Err(Error::Design("no complete rows".into()));
    }
    if table.column(&spec.response).is_some_and(Column::is_categorical) {
        return Err(Error::Design(format!("response `{}` must be numeric", spec.response)));
    }
    let recipe = DesignRecipe {
        response: spec.response.clone(),
        mean: fit_terms(&spec.mean_terms, &table)?,
        var: fit_terms(&spec.var_terms, &table)?,
    };
    let widest = recipe
        .mean
        .iter()
        .chain(&recipe.var)
        .map(TermRecipe::width)
        .max()
        .unwrap_or(0);
    if table.n_rows() < widest {
        warn!(
            "{} observations but a term with {widest} basis columns; the design is rank deficient",
            table.n_rows()
        );
    }
    let mut design = DesignMatrices::from_recipe(recipe, &table)?;
    design.dropped_rows = dropped;
    Ok(design)
}
