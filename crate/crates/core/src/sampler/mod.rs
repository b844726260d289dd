//! The Markov chain: state, the six updates, and the driver that writes
//! retained sweeps to a store.

pub mod likelihood;
pub mod moves;
pub mod tuning;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{build_design, DesignMatrices, DesignRecipe};
use crate::data::{DataTable, Fingerprint};
use crate::error::{Error, Result};
use crate::formula::ModelSpec;
use crate::priors::{PriorConfig, PriorStrings};
use crate::store::{SampleStore, Timing};

pub use likelihood::{log_marginal_likelihood, residual_sum};
pub use moves::{BlockSizes, CBetaMode, CBetaTarget, Sampler};
pub use tuning::{MoveKind, TuningState};

pub const GENERATOR: &str = "ChaCha20Rng::seed_from_u64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub gamma: Vec<bool>,
    pub delta: Vec<bool>,
    /// Zero wherever `delta` is 0.
    pub alpha: Vec<f64>,
    pub sigma2: f64,
    pub c_beta: f64,
    pub c_alpha: f64,
    /// `1 + p₁` coefficients, only for retained sweeps.
    pub beta: Option<Vec<f64>>,
}

impl ChainState {
    /// Empty model, `σ²` at the sample variance of `y`, `c_β = n`, `c_α = 1`.
    pub fn initial(design: &DesignMatrices) -> Self {
        let y = &design.response;
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        ChainState {
            gamma: vec![false; design.p1()],
            delta: vec![false; design.p2()],
            alpha: vec![0.0; design.p2()],
            sigma2: if var.is_finite() && var > 0.0 { var } else { 1.0 },
            c_beta: n,
            c_alpha: 1.0,
            beta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sweeps: usize,
    pub burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub block_sizes: BlockSizes,
}

impl RunConfig {
    pub fn new(sweeps: usize, burn: usize, thin: usize, seed: u64) -> Self {
        RunConfig {
            sweeps,
            burn,
            thin,
            seed,
            block_sizes: BlockSizes::Geometric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::Config("sweeps must be positive".into()));
        }
        if self.burn >= self.sweeps {
            return Err(Error::Config(format!(
                "burn ({}) must be smaller than sweeps ({})",
                self.burn, self.sweeps
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if let BlockSizes::User(w) = &self.block_sizes {
            if w.is_empty() || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !(w[0] > 0.0) {
                return Err(Error::Config(
                    "block size probabilities must be non-negative with a positive first entry".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.sweeps - self.burn) / self.thin
    }

    pub fn is_retained(&self, sweep: usize) -> bool {
        sweep > self.burn && (sweep - self.burn) % self.thin == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalTuning {
    pub h: f64,
    pub f2: f64,
    pub g2: f64,
    pub batches: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Largest `|Σᵢ zᵢᵀα|` over all sweeps.
    pub max_abs_eta_sum: f64,
}

/// Everything needed to interpret a store after the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub sweeps: usize,
    pub burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub generator: String,
    pub formula: String,
    pub priors: PriorStrings,
    pub prior_summary: Vec<String>,
    pub block_size_probs: Option<Vec<f64>>,
    pub data_path: Option<String>,
    pub categorical: Vec<String>,
    pub fingerprint: Option<Fingerprint>,
    pub n: usize,
    pub dropped_rows: usize,
    pub recipe: DesignRecipe,
    pub beta_labels: Vec<String>,
    pub gamma_labels: Vec<String>,
    pub alpha_labels: Vec<String>,
    pub retained: usize,
    pub tuning: FinalTuning,
    pub acceptance_burn_in: BTreeMap<String, Option<f64>>,
    pub acceptance: BTreeMap<String, Option<f64>>,
    pub diagnostics: Diagnostics,
    #[serde(skip)]
    pub store_dir: PathBuf,
}

impl RunManifest {
    pub fn acceptance_rate(&self, kind: MoveKind) -> Option<f64> {
        self.acceptance.get(move_name(kind)).copied().flatten()
    }
}

pub fn move_name(kind: MoveKind) -> &'static str {
    match kind {
        MoveKind::Gamma => "gamma",
        MoveKind::AlphaDelta => "alpha_delta",
        MoveKind::Sigma2 => "sigma2",
        MoveKind::CBeta => "cbeta",
    }
}

/// Inputs that describe the run beyond the design itself.
#[derive(Debug, Clone, Default)]
pub struct RunContext {
    pub formula: String,
    pub data_path: Option<String>,
    pub categorical: Vec<String>,
    pub fingerprint: Option<Fingerprint>,
}

/// Run one chain on a built design and write retained sweeps to `store_dir`.
pub fn run_chain(
    design: &DesignMatrices,
    priors: &PriorConfig,
    config: &RunConfig,
    context: &RunContext,
    store_dir: &Path,
) -> Result<RunManifest> {
    config.validate()?;
    let started = Instant::now();
    let mut store = SampleStore::create(store_dir)?;
    let rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut sampler = Sampler::new(design, priors, config.block_sizes.clone(), ChainState::initial(design), rng)
        .ok_or_else(|| Error::Numerical("intercept-only design is singular".into()))?;
    let mut diagnostics = Diagnostics::default();
    if config.burn == 0 {
        sampler.tuning.freeze();
    }
    for s in 1..=config.sweeps {
        sampler.sweep();
        let st = &sampler.state;
        if !(st.sigma2.is_finite() && st.c_beta.is_finite() && st.c_alpha.is_finite())
            || st.alpha.iter().any(|a| !a.is_finite())
        {
            return Err(Error::Numerical(format!("non-finite state at sweep {s}")));
        }
        diagnostics.max_abs_eta_sum = diagnostics.max_abs_eta_sum.max(sampler.eta_sum().abs());
        if s <= config.burn && s % tuning::BATCH_LEN == 0 {
            sampler.tuning.end_batch();
        }
        if s == config.burn {
            sampler.tuning.freeze();
        }
        if config.is_retained(s) {
            let beta = sampler.draw_beta();
            if beta.iter().any(|b| !b.is_finite()) {
                return Err(Error::Numerical(format!("non-finite coefficient draw at sweep {s}")));
            }
            sampler.state.beta = Some(beta);
            store.write_sweep(&sampler.state)?;
            sampler.state.beta = None;
        }
    }
    let retained = store.finish()?;
    let t = &sampler.tuning;
    let rates = |f: &dyn Fn(MoveKind) -> Option<f64>| {
        MoveKind::ALL
            .iter()
            .map(|&k| (move_name(k).to_string(), f(k)))
            .collect::<BTreeMap<_, _>>()
    };
    let manifest = RunManifest {
        sweeps: config.sweeps,
        burn: config.burn,
        thin: config.thin,
        seed: config.seed,
        generator: GENERATOR.to_string(),
        formula: context.formula.clone(),
        priors: priors.raw.clone(),
        prior_summary: priors.describe(),
        block_size_probs: match &config.block_sizes {
            BlockSizes::Geometric => None,
            BlockSizes::User(w) => Some(w.clone()),
        },
        data_path: context.data_path.clone(),
        categorical: context.categorical.clone(),
        fingerprint: context.fingerprint.clone(),
        n: design.n(),
        dropped_rows: design.dropped_rows,
        recipe: design.recipe.clone(),
        beta_labels: design.beta_labels(),
        gamma_labels: design.mean_labels(),
        alpha_labels: design.var_labels(),
        retained,
        tuning: FinalTuning {
            h: t.h,
            f2: t.f2,
            g2: t.g2,
            batches: t.batches,
        },
        acceptance_burn_in: rates(&|k| t.burn_in_rate(k)),
        acceptance: rates(&|k| t.post_burn_rate(k)),
        diagnostics,
        store_dir: store_dir.to_path_buf(),
    };
    crate::store::write_manifest(store_dir, &manifest)?;
    crate::store::write_timing(
        store_dir,
        &Timing {
            seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    Ok(manifest)
}

/// A parsed model fitted to a table.
pub struct FitRequest<'a> {
    pub spec: &'a ModelSpec,
    pub data: &'a DataTable,
    pub priors: &'a PriorStrings,
    pub config: RunConfig,
    pub data_path: Option<String>,
    pub categorical: Vec<String>,
}

impl FitRequest<'_> {
    pub fn prepare(&self) -> Result<(DesignMatrices, PriorConfig, RunContext)> {
        self.config.validate()?;
        let design = build_design(self.spec, self.data)?;
        let priors = PriorConfig::from_strings(
            self.priors,
            design.n(),
            design.mean_blocks.len(),
            design.var_blocks.len(),
        )?;
        let context = RunContext {
            formula: self.spec.to_string(),
            data_path: self.data_path.clone(),
            categorical: self.categorical.clone(),
            fingerprint: self.data.fingerprint().cloned(),
        };
        Ok((design, priors, context))
    }

    pub fn run(&self, store_dir: &Path) -> Result<RunManifest> {
        let (design, priors, context) = self.prepare()?;
        run_chain(&design, &priors, &self.config, &context, store_dir)
    }

    /// `chains` independent chains in parallel; chain `j` uses seed `seed + j`
    /// and writes to `store_dir/chain-j`.
    pub fn run_chains(&self, store_dir: &Path, chains: usize) -> Result<Vec<RunManifest>> {
        let (design, priors, context) = self.prepare()?;
        crate::store::ensure_dir(store_dir)?;
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..chains)
                .map(|j| {
                    let mut config = self.config.clone();
                    config.seed = self.config.seed.wrapping_add(j as u64);
                    let dir = store_dir.join(format!("chain-{j}"));
                    let (design, priors, context) = (&design, &priors, &context);
                    scope.spawn(move || run_chain(design, priors, &config, context, &dir))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect()
        })
    }
}
