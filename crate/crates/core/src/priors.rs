//! Prior configuration, log-densities and the Beta-Bernoulli block masses used
//! to propose indicator blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::formula::{parse_prior_string, PriorFamily, PriorSpec};

pub const DEFAULT_C_BETA: &str = "IG(0.5,0.5*n)";
pub const DEFAULT_C_ALPHA: &str = "IG(1.1,1.1)";
pub const DEFAULT_PI: &str = "Beta(1,1)";
pub const DEFAULT_SIGMA: &str = "HN(2)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGamma {
    pub shape: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SigmaPrior {
    /// `σ² ~ IG(a, b)`.
    InverseGamma(InvGamma),
    /// `σ ~ N(0, φ²)` truncated to `σ > 0`; holds `φ²`.
    HalfNormal { variance: f64 },
}

/// Prior strings as supplied by the user; `None`/empty means default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorStrings {
    pub c_beta: Option<String>,
    pub c_alpha: Option<String>,
    pub pi_mu: Vec<String>,
    pub pi_sigma: Vec<String>,
    pub sigma: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub c_beta: InvGamma,
    pub c_alpha: InvGamma,
    /// One per mean term.
    pub pi_mu: Vec<BetaParams>,
    /// One per variance term.
    pub pi_sigma: Vec<BetaParams>,
    pub sigma: SigmaPrior,
    /// Source strings, in the order c.beta, c.alpha, pi.mu…, pi.sigma…, sigma.
    pub raw: PriorStrings,
}

fn expect_family(spec: &PriorSpec, family: PriorFamily, what: &str) -> Result<()> {
    if spec.family != family {
        return Err(Error::Prior(format!(
            "{what} needs a {} prior, got {}",
            family.name(),
            spec.raw
        )));
    }
    Ok(())
}

fn inv_gamma(text: &str, n: usize, what: &str) -> Result<InvGamma> {
    let spec = parse_prior_string(text, n)?;
    expect_family(&spec, PriorFamily::InverseGamma, what)?;
    Ok(InvGamma {
        shape: spec.params[0],
        scale: spec.params[1],
    })
}

fn beta_list(texts: &[String], n: usize, terms: usize, what: &str) -> Result<Vec<BetaParams>> {
    let parse = |t: &str| -> Result<BetaParams> {
        let spec = parse_prior_string(t, n)?;
        expect_family(&spec, PriorFamily::Beta, what)?;
        Ok(BetaParams {
            c: spec.params[0],
            d: spec.params[1],
        })
    };
    match texts.len() {
        0 => Ok(vec![parse(DEFAULT_PI)?; terms]),
        1 => Ok(vec![parse(&texts[0])?; terms]),
        k if k == terms => texts.iter().map(|t| parse(t)).collect(),
        k => Err(Error::Prior(format!(
            "{what}: {k} priors given for {terms} terms (give one, or one per term)"
        ))),
    }
}

impl PriorConfig {
    /// Resolve prior strings for a model with `n` observations and the given
    /// numbers of mean and variance terms.
    pub fn from_strings(strings: &PriorStrings, n: usize, mean_terms: usize, var_terms: usize) -> Result<Self> {
        let c_beta = inv_gamma(strings.c_beta.as_deref().unwrap_or(DEFAULT_C_BETA), n, "c.beta")?;
        let c_alpha = inv_gamma(strings.c_alpha.as_deref().unwrap_or(DEFAULT_C_ALPHA), n, "c.alpha")?;
        let pi_mu = beta_list(&strings.pi_mu, n, mean_terms, "pi.mu")?;
        let pi_sigma = beta_list(&strings.pi_sigma, n, var_terms, "pi.sigma")?;
        let sigma_spec = parse_prior_string(strings.sigma.as_deref().unwrap_or(DEFAULT_SIGMA), n)?;
        let sigma = match sigma_spec.family {
            PriorFamily::InverseGamma => SigmaPrior::InverseGamma(InvGamma {
                shape: sigma_spec.params[0],
                scale: sigma_spec.params[1],
            }),
            PriorFamily::HalfNormal => SigmaPrior::HalfNormal {
                variance: sigma_spec.params[0],
            },
            PriorFamily::Beta => {
                return Err(Error::Prior(format!(
                    "sigma needs an IG or HN prior, got {}",
                    sigma_spec.raw
                )))
            }
        };
        Ok(PriorConfig {
            c_beta,
            c_alpha,
            pi_mu,
            pi_sigma,
            sigma,
            raw: strings.clone(),
        })
    }

    pub fn defaults(n: usize, mean_terms: usize, var_terms: usize) -> Self {
        PriorConfig::from_strings(&PriorStrings::default(), n, mean_terms, var_terms)
            .expect("default priors are valid")
    }

    /// Display strings in `c.beta = …` form.
    pub fn describe(&self) -> Vec<String> {
        let r = &self.raw;
        let list = |v: &[String]| {
            if v.is_empty() {
                DEFAULT_PI.to_string()
            } else {
                v.join(",")
            }
        };
        vec![
            format!("c.beta = {}", r.c_beta.as_deref().unwrap_or(DEFAULT_C_BETA)),
            format!("c.alpha = {}", r.c_alpha.as_deref().unwrap_or(DEFAULT_C_ALPHA)),
            format!("pi.mu = {}", list(&r.pi_mu)),
            format!("pi.sigma = {}", list(&r.pi_sigma)),
            format!("sigma = {}", r.sigma.as_deref().unwrap_or(DEFAULT_SIGMA)),
        ]
    }
}

pub fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Log-density of `IG(shape, scale)` at `x > 0`.
pub fn ln_inv_gamma_pdf(x: f64, p: InvGamma) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    p.shape * p.scale.ln() - ln_gamma(p.shape) - (p.shape + 1.0) * x.ln() - p.scale / x
}

pub fn ln_beta_pdf(x: f64, p: BetaParams) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return f64::NEG_INFINITY;
    }
    (p.c - 1.0) * x.ln() + (p.d - 1.0) * (1.0 - x).ln() - ln_beta_fn(p.c, p.d)
}

/// Log-density of `σ` under the half-normal with variance `φ²`.
pub fn ln_half_normal_pdf(sigma: f64, variance: f64) -> f64 {
    if sigma < 0.0 {
        return f64::NEG_INFINITY;
    }
    0.5 * (2.0 / (std::f64::consts::PI * variance)).ln() - sigma * sigma / (2.0 * variance)
}

/// Log of `p(block | rest)` with the inclusion probability integrated out:
/// `Beta(c + N, d + q - N) / Beta(c + N_rest, d + q - L - N_rest)`.
pub fn ln_block_conditional_prior_mass(block: &[bool], rest_on: usize, rest_total: usize, q: usize, c: f64, d: f64) -> f64 {
    debug_assert!(rest_on <= rest_total && rest_total + block.len() == q);
    if block.is_empty() {
        return 0.0;
    }
    let total_on = rest_on + block.iter().filter(|&&b| b).count();
    let (qf, on, ron) = (q as f64, total_on as f64, rest_on as f64);
    let len = block.len() as f64;
    ln_beta_fn(c + on, d + qf - on) - ln_beta_fn(c + ron, d + qf - len - ron)
}

pub fn block_conditional_prior_mass(block: &[bool], rest_on: usize, rest_total: usize, q: usize, c: f64, d: f64) -> f64 {
    ln_block_conditional_prior_mass(block, rest_on, rest_total, q, c, d).exp()
}

/// Pólya-urn predictive probability that the next indicator is 1.
#[inline]
pub fn predictive_on(c: f64, d: f64, on: usize, assigned: usize) -> f64 {
    (c + on as f64) / (c + d + assigned as f64)
}

/// Probability that the sequential sampler produces `block`.
pub fn block_path_probability(block: &[bool], rest_on: usize, q: usize, c: f64, d: f64) -> f64 {
    let mut on = rest_on;
    let mut assigned = q - block.len();
    let mut prob = 1.0;
    for &bit in block {
        let p1 = predictive_on(c, d, on, assigned);
        prob *= if bit { p1 } else { 1.0 - p1 };
        assigned += 1;
        on += usize::from(bit);
    }
    prob
}

/// Draw a block of indicators one at a time from the Beta-Bernoulli
/// predictive given the `rest_on` indicators already set among the other
/// `q - block_len` members of the term.
pub fn sample_block_from_conditional_prior<R: Rng + ?Sized>(
    rng: &mut R,
    block_len: usize,
    rest_on: usize,
    q: usize,
    c: f64,
    d: f64,
) -> Vec<bool> {
    let mut on = rest_on;
    let mut assigned = q - block_len;
    (0..block_len)
        .map(|_| {
            let bit = rng.random::<f64>() < predictive_on(c, d, on, assigned);
            assigned += 1;
            on += usize::from(bit);
            bit
        })
        .collect()
}
