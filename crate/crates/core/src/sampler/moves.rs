//! The six updates of one sweep.

use log::warn;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::basis::{Block, DesignMatrices};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::priors::{sample_block_from_conditional_prior, BetaParams, InvGamma, PriorConfig, SigmaPrior};

use super::likelihood::{log_lik, residual_s, Projection, Weighted};
use super::tuning::{MoveKind, TuningState};
use super::ChainState;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Largest block proposed by the default block-size distribution.
pub const MAX_DEFAULT_BLOCK: usize = 20;

const MAX_IRLS_ITER: usize = 100;
const IRLS_TOL: f64 = 1e-10;

/// Distribution of indicator block sizes.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockSizes {
    /// `P(s) ∝ 0.5^s` for `s = 1..=min(term size, 20)`.
    Geometric,
    /// `P(s) ∝ weights[s-1]`, truncated to the term size.
    User(Vec<f64>),
}

impl BlockSizes {
    pub fn weights(&self, term_len: usize) -> Vec<f64> {
        match self {
            BlockSizes::Geometric => (1..=term_len.min(MAX_DEFAULT_BLOCK)).map(|s| 0.5f64.powi(s as i32)).collect(),
            BlockSizes::User(w) => w.iter().take(term_len).copied().collect(),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, term_len: usize) -> usize {
        let w = self.weights(term_len);
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return 1;
        }
        let mut u = rng.random::<f64>() * total;
        for (i, wi) in w.iter().enumerate() {
            if u < *wi {
                return i + 1;
            }
            u -= wi;
        }
        // rounding
        w.iter().rposition(|&x| x > 0.0).map_or(1, |i| i + 1)
    }
}

/// Draw from `IG(shape, scale)`.
pub fn draw_inv_gamma<R: Rng + ?Sized>(rng: &mut R, p: InvGamma) -> f64 {
    let g = Gamma::new(p.shape, 1.0).expect("positive shape").sample(rng);
    p.scale / g
}

fn std_normals<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    (0..k).map(|_| StandardNormal.sample(rng)).collect()
}

fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln()) - (x - mean) * (x - mean) / (2.0 * var)
}

/// Gaussian proposal for the active variance coefficients: mean `mean`,
/// covariance `h · precision⁻¹`.
#[derive(Debug, Clone)]
pub struct AlphaProposal {
    pub active: Vec<usize>,
    pub precision: Matrix,
    pub chol: Cholesky,
    pub mean: Vec<f64>,
}

impl AlphaProposal {
    pub fn ln_density(&self, alpha: &[f64], h: f64) -> f64 {
        let k = self.active.len();
        if k == 0 {
            return 0.0;
        }
        let diff: Vec<f64> = self.active.iter().zip(&self.mean).map(|(&j, m)| alpha[j] - m).collect();
        let quad = dot(&diff, &self.precision.mul_vec(&diff));
        -0.5 * k as f64 * (LN_2PI + h.ln()) + 0.5 * self.chol.log_det() - quad / (2.0 * h)
    }

    /// Full-length α with the drawn values on the active set.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, h: f64, p2: usize) -> Vec<f64> {
        let xi = std_normals(rng, self.active.len());
        let noise = self.chol.backward(&xi);
        let sd = h.sqrt();
        let mut alpha = vec![0.0; p2];
        for ((&j, m), e) in self.active.iter().zip(&self.mean).zip(noise) {
            alpha[j] = m + sd * e;
        }
        alpha
    }
}

/// Cached likelihood pieces for a candidate α.
#[derive(Debug, Clone)]
pub struct AlphaEval {
    pub weighted: Weighted,
    pub proj: Projection,
    pub loglik: f64,
}

/// Outcome of a Newton-Raphson search for the mode of `ln c_β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CBetaMode {
    Found { mode: f64, curvature: f64 },
    Failed,
}

/// Log full conditional of c_β (up to a constant) and its derivatives.
#[derive(Debug, Clone, Copy)]
pub struct CBetaTarget {
    pub n_included: usize,
    pub yty: f64,
    pub quad: f64,
    pub sigma2: f64,
    pub prior: InvGamma,
}

impl CBetaTarget {
    pub fn ln_density(&self, c: f64) -> f64 {
        if !(c > 0.0) {
            return f64::NEG_INFINITY;
        }
        let s = residual_s(self.yty, self.quad, c);
        -0.5 * (self.n_included as f64 + 1.0) * (c + 1.0).ln() - s / (2.0 * self.sigma2)
            - (self.prior.shape + 1.0) * c.ln()
            - self.prior.scale / c
    }

    pub fn d1(&self, c: f64) -> f64 {
        let k = 0.5 * (self.n_included as f64 + 1.0);
        -k / (c + 1.0) + self.quad / (2.0 * self.sigma2 * (1.0 + c).powi(2)) - (self.prior.shape + 1.0) / c
            + self.prior.scale / (c * c)
    }

    pub fn d2(&self, c: f64) -> f64 {
        let k = 0.5 * (self.n_included as f64 + 1.0);
        k / (c + 1.0).powi(2) - self.quad / (self.sigma2 * (1.0 + c).powi(3)) + (self.prior.shape + 1.0) / (c * c)
            - 2.0 * self.prior.scale / (c * c * c)
    }

    /// Log density of `t = ln c`, including the Jacobian.
    pub fn ln_density_log(&self, t: f64) -> f64 {
        self.ln_density(t.exp()) + t
    }

    pub fn d1_log(&self, t: f64) -> f64 {
        let c = t.exp();
        c * self.d1(c) + 1.0
    }

    pub fn d2_log(&self, t: f64) -> f64 {
        let c = t.exp();
        c * self.d1(c) + c * c * self.d2(c)
    }

    /// Newton-Raphson for the mode of `ln c`, from `ln start`, at most 100 iterations.
    pub fn find_mode(&self, start: f64) -> CBetaMode {
        let mut t = start.ln();
        for _ in 0..100 {
            let g = self.d1_log(t);
            let h = self.d2_log(t);
            let step = if h < 0.0 { -g / h } else { g.signum() };
            let step = step.clamp(-2.0, 2.0);
            if !step.is_finite() {
                return CBetaMode::Failed;
            }
            t += step;
            if step.abs() <= 1e-10 * t.abs().max(1.0) {
                let curvature = self.d2_log(t);
                return if curvature < 0.0 && t.is_finite() {
                    CBetaMode::Found { mode: t, curvature }
                } else {
                    CBetaMode::Failed
                };
            }
        }
        CBetaMode::Failed
    }
}

/// One MCMC chain over a fixed design.
pub struct Sampler<'a, R> {
    design: &'a DesignMatrices,
    priors: &'a PriorConfig,
    block_sizes: BlockSizes,
    pub state: ChainState,
    pub tuning: TuningState,
    weighted: Weighted,
    proj: Projection,
    ztz: Matrix,
    rng: R,
}

fn nonempty(blocks: &[Block]) -> Vec<usize> {
    (0..blocks.len()).filter(|&i| !blocks[i].is_empty()).collect()
}

impl<'a, R: Rng> Sampler<'a, R> {
    pub fn new(
        design: &'a DesignMatrices,
        priors: &'a PriorConfig,
        block_sizes: BlockSizes,
        state: ChainState,
        rng: R,
    ) -> Option<Self> {
        let weighted = Weighted::new(design, &state.alpha);
        let proj = Projection::new(&weighted, &state.gamma)?;
        let ztz = design.z.weighted_gram(&vec![1.0; design.n()]);
        Some(Sampler {
            design,
            priors,
            block_sizes,
            tuning: TuningState::starting_at(state.sigma2, design.n()),
            state,
            weighted,
            proj,
            ztz,
            rng,
        })
    }

    pub fn design(&self) -> &DesignMatrices {
        self.design
    }

    pub fn rng(&mut self) -> &mut R {
        &mut self.rng
    }

    /// Current `S`.
    pub fn residual(&self) -> f64 {
        residual_s(self.weighted.yty, self.proj.quad, self.state.c_beta)
    }

    pub fn log_likelihood(&self) -> f64 {
        log_lik(self.design.n(), self.state.sigma2, self.state.c_beta, &self.weighted, &self.proj)
    }

    /// `Σᵢ zᵢᵀα` for the current α.
    pub fn eta_sum(&self) -> f64 {
        self.weighted.eta_sum
    }

    /// Replace the state and refresh the caches. Returns `false` when the new
    /// γ gives a singular projection (the state is left unchanged).
    pub fn set_state(&mut self, state: ChainState) -> bool {
        let weighted = Weighted::new(self.design, &state.alpha);
        match Projection::new(&weighted, &state.gamma) {
            Some(proj) => {
                self.state = state;
                self.weighted = weighted;
                self.proj = proj;
                true
            }
            None => false,
        }
    }

    /// Pick a term, a block of its columns, and propose the block from the
    /// Beta-Bernoulli conditional prior. Returns the proposed indicator vector.
    fn propose_indicators(&mut self, blocks: &[Block], current: &[bool], priors: &[BetaParams]) -> Vec<bool> {
        let candidates = nonempty(blocks);
        let t = candidates[self.rng.random_range(0..candidates.len())];
        let block = &blocks[t];
        let q = block.len();
        let size = self.block_sizes.draw(&mut self.rng, q);
        let chosen: Vec<usize> = sample_indices(&mut self.rng, q, size)
            .into_iter()
            .map(|i| block.start + i)
            .collect();
        let on_in_term = current[block.start..block.end].iter().filter(|&&b| b).count();
        let on_in_block = chosen.iter().filter(|&&j| current[j]).count();
        let prior = priors[t];
        let bits = sample_block_from_conditional_prior(
            &mut self.rng,
            size,
            on_in_term - on_in_block,
            q,
            prior.c,
            prior.d,
        );
        let mut proposed = current.to_vec();
        for (&j, b) in chosen.iter().zip(bits) {
            proposed[j] = b;
        }
        proposed
    }

    /// Step 1: block update of the mean indicators.
    pub fn update_gamma(&mut self) -> bool {
        if self.design.p1() == 0 {
            return false;
        }
        let (design, priors) = (self.design, self.priors);
        let current = self.state.gamma.clone();
        let proposed = self.propose_indicators(&design.mean_blocks, &current, &priors.pi_mu);
        let accepted = if proposed == self.state.gamma {
            true
        } else {
            match Projection::new(&self.weighted, &proposed) {
                None => false,
                Some(proj) => {
                    let ll_new = log_lik(self.design.n(), self.state.sigma2, self.state.c_beta, &self.weighted, &proj);
                    let ratio = ll_new - self.log_likelihood();
                    if self.rng.random::<f64>().ln() < ratio {
                        self.state.gamma = proposed;
                        self.proj = proj;
                        true
                    } else {
                        false
                    }
                }
            }
        };
        self.tuning.record(MoveKind::Gamma, accepted);
        accepted
    }

    fn eval_alpha(&self, alpha: &[f64]) -> Option<AlphaEval> {
        let weighted = Weighted::new(self.design, alpha);
        let proj = Projection::new(&weighted, &self.state.gamma)?;
        let loglik = log_lik(self.design.n(), self.state.sigma2, self.state.c_beta, &weighted, &proj);
        Some(AlphaEval { weighted, proj, loglik })
    }

    /// Squared residuals `(yᵢ − x*ᵢᵀβ̂)²` at the shrunk posterior mean of β.
    pub fn squared_residuals(&self, proj: &Projection) -> Vec<f64> {
        let beta_hat = proj.shrunk_coef(self.state.c_beta);
        let y = &self.design.response;
        (0..self.design.n())
            .map(|i| {
                let row = self.design.xstar.row(i);
                let fit: f64 = proj.active.iter().zip(&beta_hat).map(|(&j, b)| row[j] * b).sum();
                (y[i] - fit).powi(2)
            })
            .collect()
    }

    fn alpha_objective(&self, active: &[usize], coef: &[f64], resid_sq: &[f64]) -> (f64, Vec<f64>) {
        let z = &self.design.z;
        let sigma2 = self.state.sigma2;
        let mut obj = -dot(coef, coef) / (2.0 * self.state.c_alpha);
        let eta: Vec<f64> = (0..self.design.n())
            .map(|i| {
                let row = z.row(i);
                let eta: f64 = active.iter().zip(coef).map(|(&j, a)| row[j] * a).sum();
                obj -= eta + resid_sq[i] / (sigma2 * eta.exp());
                eta
            })
            .collect();
        (obj, eta)
    }

    /// Penalized IRLS for the Gamma GLM on squared residuals, restricted to
    /// the columns active under `delta`, started from `start` and iterated
    /// to its fixed point.
    pub fn alpha_proposal(&self, delta: &[bool], resid_sq: &[f64], start: &[f64]) -> Option<AlphaProposal> {
        let active: Vec<usize> = (0..delta.len()).filter(|&j| delta[j]).collect();
        let mut precision = self.ztz.submatrix(&active);
        let inv_c = 1.0 / self.state.c_alpha;
        for a in 0..active.len() {
            precision[(a, a)] += inv_c;
        }
        let chol = Cholesky::new(&precision)?;
        let z = &self.design.z;
        let sigma2 = self.state.sigma2;
        let mut coef: Vec<f64> = active.iter().map(|&j| start[j]).collect();
        let (mut obj, mut eta) = self.alpha_objective(&active, &coef, resid_sq);
        for _ in 0..MAX_IRLS_ITER {
            let ztd: Vec<f64> = active
                .iter()
                .map(|&j| {
                    (0..self.design.n())
                        .map(|i| {
                            let v = sigma2 * eta[i].exp();
                            z[(i, j)] * (eta[i] + (resid_sq[i] - v) / v)
                        })
                        .sum()
                })
                .collect();
            let target = chol.solve(&ztd);
            let mut step = 1.0;
            let accepted = loop {
                let trial: Vec<f64> = coef.iter().zip(&target).map(|(c, t)| c + step * (t - c)).collect();
                let (trial_obj, trial_eta) = self.alpha_objective(&active, &trial, resid_sq);
                if trial_obj.is_finite() && trial_obj >= obj {
                    break Some((trial, trial_obj, trial_eta));
                }
                step *= 0.5;
                if step < 1e-8 {
                    break None;
                }
            };
            let Some((next, next_obj, next_eta)) = accepted else { break };
            let change = next.iter().zip(&coef).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            coef = next;
            obj = next_obj;
            eta = next_eta;
            if change <= IRLS_TOL * (1.0 + coef.iter().map(|c| c.abs()).fold(0.0, f64::max)) {
                break;
            }
        }
        if !coef.iter().all(|c| c.is_finite()) {
            return None;
        }
        Some(AlphaProposal {
            active,
            precision,
            chol,
            mean: coef,
        })
    }

    fn ln_alpha_prior(&self, delta: &[bool], alpha: &[f64]) -> f64 {
        let c = self.state.c_alpha;
        let k = delta.iter().filter(|&&d| d).count() as f64;
        let ss: f64 = alpha.iter().map(|a| a * a).sum();
        -0.5 * k * (LN_2PI + c.ln()) - ss / (2.0 * c)
    }

    /// Log acceptance ratio for moving from `(δᶜ, αᶜ)` to `(δᴾ, αᴾ)` with all
    /// other parameters at their current values, given cached evaluations.
    fn alpha_delta_ratio_with(
        &self,
        cur: (&[bool], &[f64], &AlphaEval),
        prop: (&[bool], &[f64], &AlphaEval),
    ) -> Option<f64> {
        let h = self.tuning.h;
        let resid_c = self.squared_residuals(&cur.2.proj);
        let forward = self.alpha_proposal(prop.0, &resid_c, cur.1)?;
        let resid_p = self.squared_residuals(&prop.2.proj);
        let reverse = self.alpha_proposal(cur.0, &resid_p, prop.1)?;
        Some(
            prop.2.loglik - cur.2.loglik + self.ln_alpha_prior(prop.0, prop.1) - self.ln_alpha_prior(cur.0, cur.1)
                + reverse.ln_density(cur.1, h)
                - forward.ln_density(prop.1, h),
        )
    }

    /// Log acceptance ratio of the (δ, α) move between two arbitrary states.
    /// `-∞` when the proposed state is not admissible.
    pub fn alpha_delta_log_ratio(&self, cur_delta: &[bool], cur_alpha: &[f64], prop_delta: &[bool], prop_alpha: &[f64]) -> f64 {
        let (Some(c), Some(p)) = (self.eval_alpha(cur_alpha), self.eval_alpha(prop_alpha)) else {
            return f64::NEG_INFINITY;
        };
        self.alpha_delta_ratio_with((cur_delta, cur_alpha, &c), (prop_delta, prop_alpha, &p))
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// Step 2: joint update of δ (in blocks) and the whole of α.
    pub fn update_alpha_delta(&mut self) -> bool {
        if self.design.p2() == 0 {
            return false;
        }
        let (design, priors) = (self.design, self.priors);
        let current_delta = self.state.delta.clone();
        let delta_p = self.propose_indicators(&design.var_blocks, &current_delta, &priors.pi_sigma);
        let current = AlphaEval {
            weighted: self.weighted.clone(),
            proj: self.proj.clone(),
            loglik: self.log_likelihood(),
        };
        let resid = self.squared_residuals(&current.proj);
        let Some(forward) = self.alpha_proposal(&delta_p, &resid, &self.state.alpha) else {
            warn!("variance proposal covariance is not positive definite; move rejected");
            self.tuning.record(MoveKind::AlphaDelta, false);
            return false;
        };
        let alpha_p = forward.draw(&mut self.rng, self.tuning.h, self.design.p2());
        let accepted = match self.eval_alpha(&alpha_p) {
            None => false,
            Some(prop) => {
                let ratio = self.alpha_delta_ratio_with(
                    (&self.state.delta, &self.state.alpha, &current),
                    (&delta_p, &alpha_p, &prop),
                );
                match ratio {
                    Some(r) if self.rng.random::<f64>().ln() < r => {
                        self.state.delta = delta_p;
                        self.state.alpha = alpha_p;
                        self.weighted = prop.weighted;
                        self.proj = prop.proj;
                        true
                    }
                    Some(_) => false,
                    None => {
                        warn!("reverse variance proposal is not positive definite; move rejected");
                        false
                    }
                }
            }
        };
        self.tuning.record(MoveKind::AlphaDelta, accepted);
        accepted
    }

    /// Log full conditional of σ² under the half-normal prior, up to a constant.
    pub fn ln_sigma2_half_normal(&self, sigma2: f64, variance: f64) -> f64 {
        let n = self.design.n() as f64;
        -0.5 * n * sigma2.ln() - self.residual() / (2.0 * sigma2) - sigma2 / (2.0 * variance)
    }

    /// Step 3. Returns whether the state changed (always true for the Gibbs
    /// draw under an inverse-gamma prior).
    pub fn update_sigma2(&mut self) -> bool {
        match self.priors.sigma {
            SigmaPrior::InverseGamma(p) => {
                let post = InvGamma {
                    shape: self.design.n() as f64 / 2.0 + p.shape,
                    scale: self.residual() / 2.0 + p.scale,
                };
                self.state.sigma2 = draw_inv_gamma(&mut self.rng, post);
                true
            }
            SigmaPrior::HalfNormal { variance } => {
                let xi: f64 = StandardNormal.sample(&mut self.rng);
                let proposal = self.state.sigma2 + self.tuning.f2.sqrt() * xi;
                let accepted = if proposal <= 0.0 {
                    false
                } else {
                    let ratio = self.ln_sigma2_half_normal(proposal, variance)
                        - self.ln_sigma2_half_normal(self.state.sigma2, variance);
                    if self.rng.random::<f64>().ln() < ratio {
                        self.state.sigma2 = proposal;
                        true
                    } else {
                        false
                    }
                };
                self.tuning.record(MoveKind::Sigma2, accepted);
                accepted
            }
        }
    }

    pub fn cbeta_target(&self) -> CBetaTarget {
        CBetaTarget {
            n_included: self.proj.n_included(),
            yty: self.weighted.yty,
            quad: self.proj.quad,
            sigma2: self.state.sigma2,
            prior: self.priors.c_beta,
        }
    }

    /// Step 4: Metropolis-Hastings with a normal approximation at the mode of `ln c_β`.
    pub fn update_cbeta(&mut self) -> bool {
        let target = self.cbeta_target();
        let current = self.state.c_beta.ln();
        let g2 = self.tuning.g2;
        let xi: f64 = StandardNormal.sample(&mut self.rng);
        let (proposal, ln_correction) = match target.find_mode(self.state.c_beta) {
            CBetaMode::Found { mode, curvature } => {
                let var = -g2 / curvature;
                let p = mode + var.sqrt() * xi;
                (p, ln_normal(current, mode, var) - ln_normal(p, mode, var))
            }
            CBetaMode::Failed => (current + g2.sqrt() * xi, 0.0),
        };
        let ratio = target.ln_density_log(proposal) - target.ln_density_log(current) + ln_correction;
        let accepted = ratio.is_finite() && self.rng.random::<f64>().ln() < ratio;
        if accepted {
            self.state.c_beta = proposal.exp();
        }
        self.tuning.record(MoveKind::CBeta, accepted);
        accepted
    }

    /// Step 5: Gibbs draw of c_α.
    pub fn update_calpha(&mut self) {
        let k = self.state.delta.iter().filter(|&&d| d).count() as f64;
        let ss: f64 = self.state.alpha.iter().map(|a| a * a).sum();
        let post = InvGamma {
            shape: self.priors.c_alpha.shape + k / 2.0,
            scale: self.priors.c_alpha.scale + ss / 2.0,
        };
        self.state.c_alpha = draw_inv_gamma(&mut self.rng, post);
    }

    /// Step 6: draw β from its Gaussian full conditional; excluded
    /// coefficients are exactly zero.
    pub fn draw_beta(&mut self) -> Vec<f64> {
        let c = self.state.c_beta;
        let f = c / (1.0 + c);
        let sd = (self.state.sigma2 * f).sqrt();
        let xi = std_normals(&mut self.rng, self.proj.active.len());
        let noise = self.proj.chol.backward(&xi);
        let mut beta = vec![0.0; self.design.p1() + 1];
        for ((&j, b), e) in self.proj.active.iter().zip(&self.proj.coef).zip(noise) {
            beta[j] = f * b + sd * e;
        }
        beta
    }

    /// Posterior mean and covariance of the included coefficients given the
    /// current state.
    pub fn beta_conditional(&self) -> (Vec<usize>, Vec<f64>, Matrix) {
        let c = self.state.c_beta;
        let f = c / (1.0 + c);
        let mean = self.proj.coef.iter().map(|b| f * b).collect();
        let mut cov = self.proj.chol.inverse();
        let k = cov.rows();
        for i in 0..k {
            for j in 0..k {
                cov[(i, j)] *= self.state.sigma2 * f;
            }
        }
        (self.proj.active.clone(), mean, cov)
    }

    /// Steps 1-5, in order. β is drawn separately for retained sweeps.
    pub fn sweep(&mut self) {
        self.update_gamma();
        self.update_alpha_delta();
        self.update_sigma2();
        self.update_cbeta();
        self.update_calpha();
    }
}
