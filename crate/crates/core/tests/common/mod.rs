#![allow(dead_code)]

use locscale_core::{build_design, parse_model_formula, simulate, DataTable, DesignMatrices, Mechanism};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// One-sample Kolmogorov-Smirnov statistic against `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` for sample size `n`.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k as i32 - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    ks_p_value(ks_statistic(sample, cdf), sample.len())
}

/// CDF on a grid from unnormalized log density values by the trapezoid rule.
pub struct GridCdf {
    x: Vec<f64>,
    cum: Vec<f64>,
}

impl GridCdf {
    pub fn new(x: Vec<f64>, ln_f: impl Fn(f64) -> f64) -> Self {
        let lf: Vec<f64> = x.iter().map(|&v| ln_f(v)).collect();
        let top = lf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let f: Vec<f64> = lf.iter().map(|v| (v - top).exp()).collect();
        let mut cum = vec![0.0; x.len()];
        for i in 1..x.len() {
            cum[i] = cum[i - 1] + 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]);
        }
        let total = cum[x.len() - 1];
        cum.iter_mut().for_each(|c| *c /= total);
        GridCdf { x, cum }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match self.x.partition_point(|&g| g <= v) {
            0 => 0.0,
            i if i == self.x.len() => 1.0,
            i => {
                let w = (v - self.x[i - 1]) / (self.x[i] - self.x[i - 1]);
                self.cum[i - 1] + w * (self.cum[i] - self.cum[i - 1])
            }
        }
    }

    pub fn mean(&self) -> f64 {
        (1..self.x.len())
            .map(|i| 0.5 * (self.x[i] + self.x[i - 1]) * (self.cum[i] - self.cum[i - 1]))
            .sum()
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn m1_design(n: usize, seed: u64, formula: &str) -> DesignMatrices {
    let sim = simulate(Mechanism::M1, n, seed).unwrap();
    let data = DataTable::from_numeric(vec![("y", sim.columns[0].clone()), ("u", sim.columns[1].clone())]).unwrap();
    build_design(&parse_model_formula(formula).unwrap(), &data).unwrap()
}

/// Five uniform covariates and a linear response with unit noise.
pub fn linear_data(n: usize, seed: u64) -> DataTable {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
    let coef = [1.5, -2.0, 0.0, 0.7, 3.0];
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let noise: f64 = rng.sample(rand_distr::StandardNormal);
            0.5 + (0..5).map(|j| coef[j] * xs[j][i]).sum::<f64>() + noise
        })
        .collect();
    let names = ["x1", "x2", "x3", "x4", "x5"];
    let mut cols = vec![("y", y)];
    cols.extend(names.iter().copied().zip(xs));
    DataTable::from_numeric(cols).unwrap()
}
