//! Seeded sample generators and analytic ground truths.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{MisedError, Result};
use crate::kernel::{hermite, MultiIndex};
use crate::matrix::SampleMatrix;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` draws from the `d`-dimensional standard normal.
pub fn sample_normal(n: usize, d: usize, seed: u64) -> Result<SampleMatrix> {
    let mut r = rng(seed);
    let data = (0..n * d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    SampleMatrix::new(n, d, data)
}

/// Partial derivative `j` of the standard normal density at each query:
/// `prod_m (-1)^{j_m} He_{j_m}(x_m) phi(x_m)`.
pub fn normal_derivative_truth(queries: &SampleMatrix, j: &MultiIndex) -> Result<Vec<f64>> {
    if j.dim() != queries.ncols() {
        return Err(MisedError::invalid(format!(
            "multi-index has dimension {}, queries {}",
            j.dim(),
            queries.ncols()
        )));
    }
    let norm = (2.0 * PI).sqrt().recip();
    Ok(queries
        .rows()
        .map(|x| {
            x.iter()
                .zip(j.entries())
                .map(|(&v, &e)| {
                    let sign = if e % 2 == 0 { 1.0 } else { -1.0 };
                    sign * hermite(e, v) * norm * (-0.5 * v * v).exp()
                })
                .product()
        })
        .collect())
}

/// Generalized Gaussian `p(x) = beta^{1/2} / (2 Gamma(1 + 1/rho)) exp(-beta^{rho/2} |x - mu|^rho)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GGParams {
    pub mu: f64,
    pub beta: f64,
    pub rho: f64,
}

impl GGParams {
    pub fn new(mu: f64, beta: f64, rho: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) || !(rho.is_finite() && rho > 0.0) || !mu.is_finite() {
            return Err(MisedError::invalid(format!(
                "generalized Gaussian needs finite mu, beta > 0, rho > 0; got ({mu}, {beta}, {rho})"
            )));
        }
        Ok(Self { mu, beta, rho })
    }

    /// Unit-variance parameters with the given mean and shape.
    pub fn unit_variance(mu: f64, rho: f64) -> Result<Self> {
        Self::new(mu, solve_unit_variance_beta(rho)?, rho)
    }

    pub fn variance(&self) -> f64 {
        gamma(3.0 / self.rho) / (self.beta * gamma(1.0 / self.rho))
    }

    pub fn log_density(&self, x: f64) -> f64 {
        0.5 * self.beta.ln()
            - (2.0f64).ln()
            - ln_gamma(1.0 + 1.0 / self.rho)
            - self.beta.powf(self.rho / 2.0) * (x - self.mu).abs().powf(self.rho)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        use statrs::function::gamma::gamma_lr;
        let y = self.beta.sqrt() * (x - self.mu).abs();
        let half = 0.5 * gamma_lr(1.0 / self.rho, y.powf(self.rho));
        if x >= self.mu {
            0.5 + half
        } else {
            0.5 - half
        }
    }

    fn draw(&self, r: &mut ChaCha8Rng, g: &Gamma<f64>) -> f64 {
        let magnitude = g.sample(r).powf(1.0 / self.rho) / self.beta.sqrt();
        if r.random::<bool>() {
            self.mu + magnitude
        } else {
            self.mu - magnitude
        }
    }
}

/// The `beta` giving unit variance: `Gamma(3/rho) / Gamma(1/rho)`.
pub fn solve_unit_variance_beta(rho: f64) -> Result<f64> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(MisedError::invalid(format!("rho must be finite and > 0, got {rho}")));
    }
    Ok(gamma(3.0 / rho) / gamma(1.0 / rho))
}

/// Exact draws via `|x - mu| = G^{1/rho} / sqrt(beta)` with `G ~ Gamma(1/rho, 1)`
/// and a fair random sign.
pub fn sample_gg(n: usize, params: &GGParams, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let g = Gamma::new(1.0 / params.rho, 1.0).expect("shape validated positive");
    (0..n).map(|_| params.draw(&mut r, &g)).collect()
}

/// Composite Simpson rule on `[a, b]`, doubling the panel count until
/// successive estimates differ by less than `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let simpson = |panels: usize| {
        let h = (b - a) / panels as f64;
        let mut s = f(a) + f(b);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    };
    let mut panels = 64;
    let mut prev = simpson(panels);
    while panels < (1 << 22) {
        panels *= 2;
        let cur = simpson(panels);
        if (cur - prev).abs() < tol {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(MisedError::numerical("quadrature did not converge"))
}

/// [`integrate`] over consecutive pieces split at `breaks`.
fn integrate_piecewise(f: impl Fn(f64) -> f64 + Copy, breaks: &[f64], tol: f64) -> Result<f64> {
    let pieces = breaks.len().saturating_sub(1).max(1) as f64;
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| integrate(f, w[0], w[1], tol / pieces))
        .sum()
}

/// `KL(p_a || p_b)` for two generalized Gaussians sharing `beta` and `rho`,
/// by quadrature over `[min mu - 12, max mu + 12]` split at both means.
pub fn gg_kl(a: &GGParams, b: &GGParams) -> Result<f64> {
    let lo = a.mu.min(b.mu) - 12.0;
    let hi = a.mu.max(b.mu) + 12.0;
    let mut breaks = vec![lo, a.mu.min(b.mu), a.mu.max(b.mu), hi];
    breaks.dedup();
    let f = |x: f64| {
        let la = a.log_density(x);
        la.exp() * (la - b.log_density(x))
    };
    integrate_piecewise(f, &breaks, 1e-10)
}

/// The two product densities of the divergence experiment: unit-variance
/// generalized Gaussians in every coordinate, the second shifted by `shift`
/// in the first coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDensities {
    pub rho: f64,
    pub d: usize,
    pub shift: f64,
    pub beta: f64,
    pub true_kl: f64,
}

pub fn make_experiment_densities(rho: f64, d: usize) -> Result<ExperimentDensities> {
    make_shifted_densities(rho, d, 2.0)
}

pub fn make_shifted_densities(rho: f64, d: usize, shift: f64) -> Result<ExperimentDensities> {
    if d == 0 {
        return Err(MisedError::invalid("dimension must be >= 1"));
    }
    let beta = solve_unit_variance_beta(rho)?;
    // The product densities differ only in the first coordinate.
    let true_kl = if shift == 0.0 {
        0.0
    } else {
        gg_kl(&GGParams::new(0.0, beta, rho)?, &GGParams::new(shift, beta, rho)?)?
    };
    Ok(ExperimentDensities {
        rho,
        d,
        shift,
        beta,
        true_kl,
    })
}

impl ExperimentDensities {
    fn sample(&self, n: usize, seed: u64, first_mean: f64) -> SampleMatrix {
        let mut r = rng(seed);
        let g = Gamma::new(1.0 / self.rho, 1.0).expect("rho validated positive");
        let first = GGParams { mu: first_mean, beta: self.beta, rho: self.rho };
        let rest = GGParams { mu: 0.0, ..first };
        let mut data = Vec::with_capacity(n * self.d);
        for _ in 0..n {
            data.push(first.draw(&mut r, &g));
            for _ in 1..self.d {
                data.push(rest.draw(&mut r, &g));
            }
        }
        SampleMatrix::new(n, self.d, data).expect("shape is consistent")
    }

    pub fn sample_p1(&self, n: usize, seed: u64) -> SampleMatrix {
        self.sample(n, seed, 0.0)
    }

    pub fn sample_p2(&self, n: usize, seed: u64) -> SampleMatrix {
        self.sample(n, seed, self.shift)
    }
}

/// Distribution of one stationary stretch of a change series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    Normal { mean: f64, std: f64 },
    GeneralizedGaussian(GGParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub regime: Regime,
    pub duration: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeSeriesSpec {
    pub segments: Vec<Segment>,
    /// Standard deviation of additive Gaussian noise on every observation.
    pub noise: f64,
    pub seed: u64,
}

impl ChangeSeriesSpec {
    /// Three unit-variance normal regimes of `duration` steps whose means
    /// step by `shift` standard deviations (0, shift, 0).
    pub fn three_regime(duration: usize, shift: f64, seed: u64) -> Self {
        let seg = |mean| Segment {
            regime: Regime::Normal { mean, std: 1.0 },
            duration,
        };
        Self {
            segments: vec![seg(0.0), seg(shift), seg(0.0)],
            noise: 0.0,
            seed,
        }
    }

    fn validate(&self, allow_single: bool) -> Result<()> {
        if self.segments.is_empty() || (!allow_single && self.segments.len() < 2) {
            return Err(MisedError::invalid("a change series needs at least two segments"));
        }
        if self.segments.iter().any(|s| s.duration == 0) {
            return Err(MisedError::invalid("segment durations must be positive"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(MisedError::invalid("noise level must be finite and >= 0"));
        }
        for s in &self.segments {
            if let Regime::Normal { std, mean } = s.regime {
                if !(std.is_finite() && std >= 0.0 && mean.is_finite()) {
                    return Err(MisedError::invalid("normal regime needs finite mean and std >= 0"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChangeSeries {
    pub values: Vec<f64>,
    /// Index of the first observation of every segment after the first.
    pub change_points: Vec<usize>,
}

/// Concatenates the regimes of `spec`. A single segment is accepted and
/// yields no change points.
pub fn generate_change_series(spec: &ChangeSeriesSpec) -> Result<ChangeSeries> {
    spec.validate(true)?;
    let mut r = rng(spec.seed);
    let mut values = Vec::new();
    let mut change_points = Vec::new();
    for (i, seg) in spec.segments.iter().enumerate() {
        if i > 0 {
            change_points.push(values.len());
        }
        match &seg.regime {
            Regime::Normal { mean, std } => {
                for _ in 0..seg.duration {
                    let z: f64 = r.sample(StandardNormal);
                    values.push(mean + std * z);
                }
            }
            Regime::GeneralizedGaussian(p) => {
                let p = GGParams::new(p.mu, p.beta, p.rho)?;
                let g = Gamma::new(1.0 / p.rho, 1.0).expect("validated");
                for _ in 0..seg.duration {
                    values.push(p.draw(&mut r, &g));
                }
            }
        }
    }
    if spec.noise > 0.0 {
        for v in &mut values {
            let z: f64 = r.sample(StandardNormal);
            *v += spec.noise * z;
        }
    }
    Ok(ChangeSeries {
        values,
        change_points,
    })
}
