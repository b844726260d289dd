//! Likelihood of `y` with the regression coefficients integrated out.
//!
//! With `D(α)` diagonal with entries `exp(zᵢᵀα/2)`, `ỹ = D⁻¹y` and
//! `X̃ = D⁻¹X*`, the collapsed log-likelihood is
//!
//! ```text
//! -½ log|σ² D²| - ((N(γ)+1)/2) log(c_β + 1) - S / 2σ²
//! S = ỹᵀỹ - c_β/(1+c_β) · ỹᵀX̃_γ (X̃_γᵀX̃_γ)⁻¹ X̃_γᵀỹ
//! ```
//!
//! Everything that depends on `α` alone lives in [`Weighted`]; the part that
//! also depends on `γ` lives in [`Projection`]. Gram matrices are formed once
//! for the full design so that indicator moves only extract submatrices.

use crate::basis::DesignMatrices;
use crate::linalg::{dot, Cholesky, Matrix};

use super::ChainState;

/// Quantities that depend on the variance coefficients only.
#[derive(Debug, Clone)]
pub struct Weighted {
    /// `zᵢᵀα` per observation.
    pub eta: Vec<f64>,
    /// `exp(-zᵢᵀα)`.
    pub weights: Vec<f64>,
    /// `X*ᵀ W X*` over all mean columns.
    pub gram: Matrix,
    /// `X*ᵀ W y`.
    pub xty: Vec<f64>,
    /// `yᵀ W y`.
    pub yty: f64,
    /// `Σᵢ zᵢᵀα`, i.e. `log |D²(α)|`.
    pub eta_sum: f64,
}

impl Weighted {
    pub fn new(design: &DesignMatrices, alpha: &[f64]) -> Self {
        let n = design.n();
        let eta: Vec<f64> = if design.p2() == 0 {
            vec![0.0; n]
        } else {
            let active: Vec<usize> = (0..alpha.len()).filter(|&j| alpha[j] != 0.0).collect();
            (0..n)
                .map(|i| {
                    let row = design.z.row(i);
                    active.iter().map(|&j| row[j] * alpha[j]).sum()
                })
                .collect()
        };
        let weights: Vec<f64> = eta.iter().map(|e| (-e).exp()).collect();
        let y = &design.response;
        let gram = design.xstar.weighted_gram(&weights);
        let xty = design.xstar.weighted_tmul(&weights, y);
        let yty = y.iter().zip(&weights).map(|(v, w)| w * v * v).sum();
        let eta_sum = eta.iter().sum();
        Weighted {
            eta,
            weights,
            gram,
            xty,
            yty,
            eta_sum,
        }
    }
}

/// Projection of `ỹ` onto the columns selected by `γ` (intercept always in).
#[derive(Debug, Clone)]
pub struct Projection {
    /// Column indices into `X*`.
    pub active: Vec<usize>,
    pub chol: Cholesky,
    /// `(X̃_γᵀX̃_γ)⁻¹ X̃_γᵀỹ`.
    pub coef: Vec<f64>,
    /// `ỹᵀX̃_γ (X̃_γᵀX̃_γ)⁻¹ X̃_γᵀỹ`.
    pub quad: f64,
}

pub fn active_columns(gamma: &[bool]) -> Vec<usize> {
    std::iter::once(0)
        .chain(gamma.iter().enumerate().filter(|(_, &g)| g).map(|(j, _)| j + 1))
        .collect()
}

impl Projection {
    /// `None` when the selected columns are numerically rank deficient.
    pub fn new(weighted: &Weighted, gamma: &[bool]) -> Option<Self> {
        let active = active_columns(gamma);
        let g = weighted.gram.submatrix(&active);
        let chol = Cholesky::new(&g)?;
        let b: Vec<f64> = active.iter().map(|&j| weighted.xty[j]).collect();
        let half = chol.forward(&b);
        let quad = dot(&half, &half);
        let coef = chol.backward(&half);
        Some(Projection {
            active,
            chol,
            coef,
            quad,
        })
    }

    pub fn n_included(&self) -> usize {
        self.active.len() - 1
    }

    /// Posterior mean `c/(1+c) · coef` of the included coefficients.
    pub fn shrunk_coef(&self, c_beta: f64) -> Vec<f64> {
        let f = c_beta / (1.0 + c_beta);
        self.coef.iter().map(|b| f * b).collect()
    }
}

/// `S` as a function of `c_β` for a fixed projection.
#[inline]
pub fn residual_s(yty: f64, quad: f64, c_beta: f64) -> f64 {
    yty - c_beta / (1.0 + c_beta) * quad
}

/// Collapsed log-likelihood from cached pieces.
pub fn log_lik(n: usize, sigma2: f64, c_beta: f64, weighted: &Weighted, proj: &Projection) -> f64 {
    let s = residual_s(weighted.yty, proj.quad, c_beta);
    -0.5 * n as f64 * sigma2.ln()
        - 0.5 * weighted.eta_sum
        - 0.5 * (proj.n_included() as f64 + 1.0) * (c_beta + 1.0).ln()
        - s / (2.0 * sigma2)
}

/// Collapsed log-likelihood of `state`, computed from scratch. Returns `-∞`
/// when `X̃_γᵀX̃_γ` is singular.
pub fn log_marginal_likelihood(state: &ChainState, design: &DesignMatrices) -> f64 {
    let weighted = Weighted::new(design, &state.alpha);
    match Projection::new(&weighted, &state.gamma) {
        Some(proj) => log_lik(design.n(), state.sigma2, state.c_beta, &weighted, &proj),
        None => f64::NEG_INFINITY,
    }
}

/// `S` for `state`, or `None` when the projection is singular.
pub fn residual_sum(state: &ChainState, design: &DesignMatrices) -> Option<f64> {
    let weighted = Weighted::new(design, &state.alpha);
    let proj = Projection::new(&weighted, &state.gamma)?;
    Some(residual_s(weighted.yty, proj.quad, state.c_beta))
}
