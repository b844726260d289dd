//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use locscale_core::linalg::Matrix;
use locscale_core::priors::{block_conditional_prior_mass, block_path_probability, InvGamma, PriorConfig, SigmaPrior};
use locscale_core::sampler::residual_sum;
use locscale_core::{build_design, parse_model_formula, BlockSizes, ChainState, DataTable, Posterior, Sampler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, InverseGamma};
use tempfile::TempDir;

const MTCARS_FORMULA: &str = "mpg ~ disp + hp + wt + qsec | 1";
const MTCARS_MIN_TOP_TWO: f64 = 70.0;
const MTCARS_MAX_RUNTIME: Duration = Duration::from_secs(120);

const M1_FORMULA: &str = r#"y ~ sm(u, k = 20, bs = "rd") | sm(u, k = 20, bs = "rd")"#;
const M1_N: &str = "500";
const M1_MIN_LINEAR: f64 = 0.95;
const M1_MAX_NONLINEAR: f64 = 0.10;
const M1_MAX_RUNTIME: Duration = Duration::from_secs(300);

const GRID_POINTS: usize = 30;
const MEAN_BAND_MIN_HITS: usize = 27;
const STDEV_BAND_MIN_HITS: usize = 24;

const KS_DRAWS: usize = 100_000;
const KS_MIN_P: f64 = 0.01;

const BLOCK_MAX_Q: usize = 6;
const BLOCK_TOL: f64 = 1e-12;

const GPRIOR_N: usize = 50;
const GPRIOR_DRAWS: usize = 40_000;
const GPRIOR_MAX_SE: f64 = 4.0;

const HAND_S_TOL: f64 = 1e-12;
const ETA_SUM_TOL: f64 = 1e-8;

const ACCEPT_LOW: f64 = 0.15;
const ACCEPT_HIGH: f64 = 0.30;

const PI_WIDTH_RATIO: f64 = 0.5;

fn locscale(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_locscale")).args(args).output().expect("failed to launch locscale");
    assert!(
        out.status.success(),
        "locscale {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn mtcars() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mtcars.csv")
}

fn read_csv(p: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(p).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Shared mechanism-1 run for criteria 2, 3, 7, 8 and 10.
struct M1Run {
    dir: TempDir,
    store: PathBuf,
    elapsed: Duration,
}

fn m1_run() -> M1Run {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("m1.csv");
    locscale(&["simulate", "--mechanism", "m1", "--n", M1_N, "--seed", "1", "--out", path(&data)]);
    let store = dir.path().join("store");
    let start = Instant::now();
    locscale(&[
        "fit", "--data", path(&data), "--formula", M1_FORMULA, "--sweeps", "10000", "--burn", "5000", "--thin", "2",
        "--seed", "1", "--store-dir", path(&store),
    ]);
    M1Run { elapsed: start.elapsed(), dir, store }
}

fn criterion_1() -> Outcome {
    let dir = TempDir::new().unwrap();
    let store = dir.path().join("store");
    let start = Instant::now();
    locscale(&[
        "fit", "--data", path(&mtcars()), "--formula", MTCARS_FORMULA, "--sweeps", "50000", "--burn", "25000",
        "--thin", "2", "--seed", "1", "--store-dir", path(&store),
    ]);
    let elapsed = start.elapsed();
    let json: serde_json::Value =
        serde_json::from_str(&locscale(&["summary", "--store-dir", path(&store), "--json", "--n-models", "3"])).unwrap();
    let rows = json["models"]["rows"].as_array().unwrap();
    let labels: Vec<&str> = json["models"]["mean_labels"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let set = |row: &serde_json::Value| -> Vec<&str> {
        row["gamma"].as_array().unwrap().iter().zip(&labels).filter(|(b, _)| b.as_bool().unwrap()).map(|(_, l)| *l).collect()
    };
    let top: Vec<Vec<&str>> = rows.iter().take(2).map(set).collect();
    let probs: Vec<f64> = rows.iter().take(2).map(|r| r["prob"].as_f64().unwrap()).collect();
    let want = [vec!["hp", "wt"], vec!["wt", "qsec"]];
    let right_pair = top.len() == 2 && want.iter().all(|w| top.contains(w));
    let combined = probs.iter().sum::<f64>();
    outcome(
        right_pair && combined >= MTCARS_MIN_TOP_TWO && elapsed < MTCARS_MAX_RUNTIME,
        format!(
            "mtcars top models {{{}}} {:.2}%, {{{}}} {:.2}% (combined {combined:.2}% >= {MTCARS_MIN_TOP_TWO}%), runtime {:.1}s",
            top.first().map(|t| t.join(",")).unwrap_or_default(),
            probs.first().unwrap_or(&0.0),
            top.get(1).map(|t| t.join(",")).unwrap_or_default(),
            probs.get(1).unwrap_or(&0.0),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(run: &M1Run) -> Outcome {
    let post = Posterior::open(&run.store).unwrap();
    let s = post.n_samples() as f64;
    let mean_of = |rows: &[Vec<f64>], j: usize| rows.iter().map(|r| r[j]).sum::<f64>() / s;
    let mean_linear = mean_of(&post.gamma.rows, 0);
    let max_nonlinear = (1..post.gamma.n_columns()).map(|j| mean_of(&post.gamma.rows, j)).fold(0.0, f64::max);
    let var_linear = mean_of(&post.delta.rows, 0);
    outcome(
        mean_linear >= M1_MIN_LINEAR
            && max_nonlinear <= M1_MAX_NONLINEAR
            && var_linear >= M1_MIN_LINEAR
            && run.elapsed < M1_MAX_RUNTIME,
        format!(
            "mechanism 1 inclusion: mean u {mean_linear:.4}, max mean smooth column {max_nonlinear:.4}, variance u {var_linear:.4}, runtime {:.1}s",
            run.elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3(run: &M1Run) -> Outcome {
    let mean_csv = run.dir.path().join("mean.csv");
    let sd_csv = run.dir.path().join("sd.csv");
    let grid = GRID_POINTS.to_string();
    locscale(&[
        "plotdata", "--store-dir", path(&run.store), "--term", "sm(u)", "--intercept", "--grid", &grid,
        "--quantiles", "0.005,0.995", "--out", path(&mean_csv),
    ]);
    locscale(&[
        "plotdata", "--store-dir", path(&run.store), "--side", "stdev", "--term", "sm(u)", "--intercept", "--grid",
        &grid, "--quantiles", "0.05,0.95", "--out", path(&sd_csv),
    ]);
    let hits = |rows: &[Vec<f64>], truth: fn(f64) -> f64| rows.iter().filter(|r| r[2] <= truth(r[0]) && truth(r[0]) <= r[3]).count();
    let mean_hits = hits(&read_csv(&mean_csv), |u| 2.0 * u);
    let sd_hits = hits(&read_csv(&sd_csv), |u| 0.1 + u);
    outcome(
        mean_hits >= MEAN_BAND_MIN_HITS && sd_hits >= STDEV_BAND_MIN_HITS,
        format!(
            "coverage: 99% mean band holds 2u at {mean_hits}/{GRID_POINTS} (need {MEAN_BAND_MIN_HITS}), 90% stdev band holds 0.1+u at {sd_hits}/{GRID_POINTS} (need {STDEV_BAND_MIN_HITS})"
        ),
    )
}

fn ks_p(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let d = sample
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let p: f64 = (1..100)
        .map(|k| 2.0 * (-1f64).powi(k - 1) * (-2.0 * f64::from(k * k) * lambda * lambda).exp())
        .sum();
    p.clamp(0.0, 1.0)
}

fn small_m1_design() -> locscale_core::DesignMatrices {
    let sim = locscale_core::simulate(locscale_core::Mechanism::M1, 200, 4).unwrap();
    let data = DataTable::from_numeric(vec![("y", sim.columns[0].clone()), ("u", sim.columns[1].clone())]).unwrap();
    build_design(&parse_model_formula(r#"y ~ sm(u, k = 8) | sm(u, k = 8)"#).unwrap(), &data).unwrap()
}

fn criterion_4() -> Outcome {
    let design = small_m1_design();
    let mut priors = PriorConfig::defaults(design.n(), 1, 1);
    let sigma_prior = InvGamma { shape: 2.0, scale: 0.5 };
    priors.sigma = SigmaPrior::InverseGamma(sigma_prior);
    let mut state = ChainState::initial(&design);
    state.gamma[0] = true;
    state.delta[0] = true;
    state.delta[2] = true;
    state.alpha[0] = 1.2;
    state.alpha[2] = -0.4;
    state.sigma2 = 0.3;
    let mut s = Sampler::new(&design, &priors, BlockSizes::Geometric, state, ChaCha20Rng::seed_from_u64(11)).unwrap();

    let sigma_ig = InverseGamma::new(design.n() as f64 / 2.0 + sigma_prior.shape, s.residual() / 2.0 + sigma_prior.scale).unwrap();
    let mut sigma_draws: Vec<f64> = (0..KS_DRAWS).map(|_| { s.update_sigma2(); s.state.sigma2 }).collect();
    let p_sigma = ks_p(&mut sigma_draws, |x| sigma_ig.cdf(x));

    let ss: f64 = s.state.alpha.iter().map(|a| a * a).sum();
    let calpha_ig = InverseGamma::new(priors.c_alpha.shape + 1.0, priors.c_alpha.scale + ss / 2.0).unwrap();
    let mut calpha_draws: Vec<f64> = (0..KS_DRAWS).map(|_| { s.update_calpha(); s.state.c_alpha }).collect();
    let p_calpha = ks_p(&mut calpha_draws, |x| calpha_ig.cdf(x));
    outcome(
        p_sigma > KS_MIN_P && p_calpha > KS_MIN_P,
        format!("conjugacy KS over {KS_DRAWS} draws: sigma2 p = {p_sigma:.3}, c_alpha p = {p_calpha:.3} (need > {KS_MIN_P})"),
    )
}

fn criterion_5() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut configs = 0;
    for q in 1..=BLOCK_MAX_Q {
        for len in 1..=q {
            for rest_on in 0..=q - len {
                for (c, d) in [(1.0, 1.0), (0.5, 2.0), (3.0, 0.7)] {
                    let mut total = 0.0;
                    for mask in 0..1usize << len {
                        let block: Vec<bool> = (0..len).map(|i| mask >> i & 1 == 1).collect();
                        let path = block_path_probability(&block, rest_on, q, c, d);
                        let closed = block_conditional_prior_mass(&block, rest_on, q - len, q, c, d);
                        worst = worst.max((path - closed).abs());
                        total += path;
                        configs += 1;
                    }
                    worst_sum = worst_sum.max((total - 1.0).abs());
                }
            }
        }
    }
    outcome(
        worst < BLOCK_TOL && worst_sum < BLOCK_TOL,
        format!("block proposal over {configs} configurations (q <= {BLOCK_MAX_Q}): max |path - closed form| = {worst:.1e}, max |sum - 1| = {worst_sum:.1e}"),
    )
}

fn invert(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut m = a.clone();
    let mut inv = Matrix::identity(n);
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[(x, col)].abs().total_cmp(&m[(y, col)].abs())).unwrap();
        for j in 0..n {
            let (t, u) = (m[(col, j)], inv[(col, j)]);
            m[(col, j)] = m[(piv, j)];
            inv[(col, j)] = inv[(piv, j)];
            m[(piv, j)] = t;
            inv[(piv, j)] = u;
        }
        let p = m[(col, col)];
        for j in 0..n {
            m[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for r in (0..n).filter(|&r| r != col) {
            let f = m[(r, col)];
            for j in 0..n {
                m[(r, j)] -= f * m[(col, j)];
                inv[(r, j)] -= f * inv[(col, j)];
            }
        }
    }
    inv
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..GPRIOR_N).map(|_| rng.random::<f64>()).collect()).collect();
    let y: Vec<f64> = (0..GPRIOR_N)
        .map(|i| 0.5 + 1.5 * xs[0][i] - 2.0 * xs[1][i] + 0.7 * xs[3][i] + 3.0 * xs[4][i] + rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let mut cols = vec![("y", y)];
    cols.extend(["x1", "x2", "x3", "x4", "x5"].into_iter().zip(xs));
    let data = DataTable::from_numeric(cols).unwrap();
    let design = build_design(&parse_model_formula("y ~ x1 + x2 + x3 + x4 + x5").unwrap(), &data).unwrap();
    let priors = PriorConfig::defaults(design.n(), 5, 1);
    let mut state = ChainState::initial(&design);
    state.gamma = vec![true; 5];
    state.sigma2 = 0.9;
    state.c_beta = 50.0;
    let f = state.c_beta / (1.0 + state.c_beta);
    let sigma2 = state.sigma2;
    let mut s = Sampler::new(&design, &priors, BlockSizes::Geometric, state, ChaCha20Rng::seed_from_u64(5)).unwrap();

    let k = 6;
    let mut xtx = Matrix::zeros(k, k);
    let mut xty = vec![0.0; k];
    for i in 0..GPRIOR_N {
        let row = design.xstar.row(i);
        for a in 0..k {
            xty[a] += row[a] * design.response[i];
            for b in 0..k {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    let inv = invert(&xtx);
    let mean: Vec<f64> = (0..k).map(|a| f * (0..k).map(|b| inv[(a, b)] * xty[b]).sum::<f64>()).collect();
    let cov = |a: usize, b: usize| sigma2 * f * inv[(a, b)];

    let draws: Vec<Vec<f64>> = (0..GPRIOR_DRAWS).map(|_| s.draw_beta()).collect();
    let n = GPRIOR_DRAWS as f64;
    let emp_mean: Vec<f64> = (0..k).map(|a| draws.iter().map(|d| d[a]).sum::<f64>() / n).collect();
    let mut worst: f64 = 0.0;
    for a in 0..k {
        worst = worst.max((emp_mean[a] - mean[a]).abs() / (cov(a, a) / n).sqrt());
        for b in 0..k {
            let emp = draws.iter().map(|d| (d[a] - emp_mean[a]) * (d[b] - emp_mean[b])).sum::<f64>() / (n - 1.0);
            let se = ((cov(a, a) * cov(b, b) + cov(a, b).powi(2)) / n).sqrt();
            worst = worst.max((emp - cov(a, b)).abs() / se);
        }
    }
    outcome(
        worst < GPRIOR_MAX_SE,
        format!("g-prior oracle (n = {GPRIOR_N}, {GPRIOR_DRAWS} draws): worst mean/covariance deviation {worst:.2} MC SEs (need < {GPRIOR_MAX_SE})"),
    )
}

fn criterion_7(run: &M1Run) -> Outcome {
    let data = DataTable::from_numeric(vec![("y", vec![1.0, 2.0, 3.0])]).unwrap();
    let design = build_design(&parse_model_formula("y ~ 1").unwrap(), &data).unwrap();
    let mut state = ChainState::initial(&design);
    state.c_beta = 1.0;
    let s = residual_sum(&state, &design).unwrap();
    let post = Posterior::open(&run.store).unwrap();
    let eta = post.manifest.diagnostics.max_abs_eta_sum;
    outcome(
        (s - 8.0).abs() < HAND_S_TOL && eta < ETA_SUM_TOL,
        format!("hand check S = {s} (|S - 8| < {HAND_S_TOL:.0e}); max over sweeps |sum z'alpha| = {eta:.2e} (need < {ETA_SUM_TOL:.0e})"),
    )
}

fn criterion_8(run: &M1Run) -> Outcome {
    let post = Posterior::open(&run.store).unwrap();
    let rate = |k: &str| post.manifest.acceptance.get(k).copied().flatten();
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, key) in [("(delta, alpha)", "alpha_delta"), ("c_beta", "cbeta"), ("sigma2", "sigma2")] {
        match rate(key) {
            Some(r) => {
                pass &= (ACCEPT_LOW..=ACCEPT_HIGH).contains(&r);
                parts.push(format!("{name} {r:.3}"));
            }
            None => {
                pass = false;
                parts.push(format!("{name} missing"));
            }
        }
    }
    outcome(pass, format!("post-burn-in acceptance {} (need [{ACCEPT_LOW}, {ACCEPT_HIGH}])", parts.join(", ")))
}

fn hash_store(dir: &Path) -> Vec<(String, String)> {
    ["beta", "gamma", "alpha", "delta", "cbeta", "calpha", "sigma2"]
        .iter()
        .map(|name| {
            let bytes = std::fs::read(dir.join(format!("{name}.txt"))).unwrap();
            let digest = Sha256::digest(&bytes);
            (name.to_string(), digest.iter().map(|b| format!("{b:02x}")).collect())
        })
        .collect()
}

fn criterion_9() -> Outcome {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("m1.csv");
    locscale(&["simulate", "--mechanism", "m1", "--n", "200", "--seed", "2", "--out", path(&data)]);
    let fit = |name: &str| {
        let store = dir.path().join(name);
        locscale(&[
            "fit", "--data", path(&data), "--formula", M1_FORMULA, "--sweeps", "2000", "--burn", "1000", "--thin", "2",
            "--seed", "7", "--store-dir", path(&store),
        ]);
        hash_store(&store)
    };
    let (a, b) = (fit("a"), fit("b"));
    let same = a == b;
    outcome(same, format!("reproducibility: SHA-256 of all 7 store files {}", if same { "identical" } else { "differ" }))
}

fn criterion_10(run: &M1Run) -> Outcome {
    let newdata = run.dir.path().join("new.csv");
    let us: Vec<f64> = (0..19).map(|i| 0.05 + 0.05 * i as f64).collect();
    let text = std::iter::once("u".to_string()).chain(us.iter().map(|u| u.to_string())).collect::<Vec<_>>().join("\n") + "\n";
    std::fs::write(&newdata, text).unwrap();
    let predict = |kind: &str, out: &str| {
        let out = run.dir.path().join(out);
        locscale(&[
            "predict", "--store-dir", path(&run.store), "--newdata", path(&newdata), "--interval", kind, "--level", "0.95",
            "--out", path(&out),
        ]);
        read_csv(&out)
    };
    let cred = predict("credible", "cred.csv");
    let pred = predict("prediction", "pred.csv");
    let width = |r: &Vec<f64>| r[2] - r[1];
    let nested = cred.iter().zip(&pred).all(|(c, p)| width(p) >= width(c));
    let ratio = width(&pred[0]) / width(&pred[pred.len() - 1]);
    outcome(
        nested && ratio < PI_WIDTH_RATIO,
        format!(
            "prediction intervals {} credible intervals at all {} points; width(u=0.05)/width(u=0.95) = {ratio:.3} (need < {PI_WIDTH_RATIO})",
            if nested { "at least as wide as" } else { "narrower than" },
            us.len()
        ),
    )
}

fn main() {
    let m1 = m1_run();
    let results = [
        (1, criterion_1()),
        (2, criterion_2(&m1)),
        (3, criterion_3(&m1)),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7(&m1)),
        (8, criterion_8(&m1)),
        (9, criterion_9()),
        (10, criterion_10(&m1)),
    ];
    let mut failed = 0;
    for (i, r) in &results {
        println!("{} criterion {i}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
