//! Data-generating mechanisms of the simulation studies.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::store::format_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    /// `μ(u) = 2u`, `σ(u) = 0.1 + u`.
    M1,
    /// Mixture-of-normal-densities mean and standard deviation.
    M2,
    /// Two covariates, bivariate normal density bumps.
    Biv,
    /// Four additive covariates.
    Gam4,
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m1" => Ok(Mechanism::M1),
            "m2" => Ok(Mechanism::M2),
            "biv" => Ok(Mechanism::Biv),
            "gam4" => Ok(Mechanism::Gam4),
            other => Err(Error::Config(format!(
                "unknown mechanism `{other}` (expected m1, m2, biv or gam4)"
            ))),
        }
    }
}

impl Mechanism {
    pub fn default_n(self) -> usize {
        match self {
            Mechanism::Gam4 => 1000,
            _ => 500,
        }
    }
}

/// Normal density with mean `m` and variance `v`.
pub fn normal_pdf(x: f64, m: f64, v: f64) -> f64 {
    (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
}

/// Bivariate normal density.
pub fn bivariate_pdf(x: [f64; 2], m: [f64; 2], s: [[f64; 2]; 2]) -> f64 {
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let (d0, d1) = (x[0] - m[0], x[1] - m[1]);
    let q = (s[1][1] * d0 * d0 - (s[0][1] + s[1][0]) * d0 * d1 + s[0][0] * d1 * d1) / det;
    (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
}

fn bumps(u: f64) -> f64 {
    normal_pdf(u, 0.2, 0.004) + normal_pdf(u, 0.6, 0.1)
}

pub fn m1_mean(u: f64) -> f64 {
    2.0 * u
}

pub fn m1_sd(u: f64) -> f64 {
    0.1 + u
}

pub fn m2_mean(u: f64) -> f64 {
    bumps(u) / 4.0
}

pub fn m2_sd(u: f64) -> f64 {
    bumps(u) / 6.0
}

const BIV_M1: [f64; 2] = [0.25, 0.75];
const BIV_S1: [[f64; 2]; 2] = [[0.03, 0.01], [0.01, 0.03]];
const BIV_M2: [f64; 2] = [0.65, 0.35];
const BIV_S2: [[f64; 2]; 2] = [[0.09, 0.01], [0.01, 0.09]];

fn biv_bumps(w: [f64; 2]) -> f64 {
    bivariate_pdf(w, BIV_M1, BIV_S1) + bivariate_pdf(w, BIV_M2, BIV_S2)
}

pub fn biv_mean(w: [f64; 2]) -> f64 {
    0.1 + biv_bumps(w)
}

pub fn biv_variance(w: [f64; 2]) -> f64 {
    0.1 + biv_bumps(w) / 2.0
}

pub fn gam4_mean(w: [f64; 4]) -> f64 {
    1.5 * w[0] + bumps(w[1]) / 2.0 + 1.0 + (2.0 * PI * w[2]).sin() - w[3]
}

pub fn gam4_sd(w: [f64; 4]) -> f64 {
    (bumps(w[0]) / 2.0) * (0.6 + 0.5 * (2.0 * PI * w[1]).sin()) * (1.1 - w[2]) * (0.2 + 1.5 * w[3])
}

/// A simulated dataset: the response first, then the covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl SimData {
    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.names.join(",") + "\n";
        for i in 0..self.n() {
            let row: Vec<String> = self.columns.iter().map(|c| format_value(c[i])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn normal<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    let xi: f64 = StandardNormal.sample(rng);
    mean + sd * xi
}

/// Generate `n` rows from `mechanism` with uniform(0, 1) covariates.
pub fn simulate(mechanism: Mechanism, n: usize, seed: u64) -> Result<SimData> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    Ok(match mechanism {
        Mechanism::M1 | Mechanism::M2 => {
            let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            u.sort_by(f64::total_cmp);
            let (mu, sd): (fn(f64) -> f64, fn(f64) -> f64) = match mechanism {
                Mechanism::M1 => (m1_mean, m1_sd),
                _ => (m2_mean, m2_sd),
            };
            let y = u.iter().map(|&x| normal(&mut rng, mu(x), sd(x))).collect();
            SimData {
                names: names(&["y", "u"]),
                columns: vec![y, u],
            }
        }
        Mechanism::Biv => {
            let w1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let w2: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let y = (0..n)
                .map(|i| {
                    let w = [w1[i], w2[i]];
                    normal(&mut rng, biv_mean(w), biv_variance(w).sqrt())
                })
                .collect();
            SimData {
                names: names(&["y", "w1", "w2"]),
                columns: vec![y, w1, w2],
            }
        }
        Mechanism::Gam4 => {
            let w: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
            let y = (0..n)
                .map(|i| {
                    let x = [w[0][i], w[1][i], w[2][i], w[3][i]];
                    normal(&mut rng, gam4_mean(x), gam4_sd(x))
                })
                .collect();
            let mut columns = vec![y];
            columns.extend(w);
            SimData {
                names: names(&["y", "w1", "w2", "w3", "w4"]),
                columns,
            }
        }
    })
}
