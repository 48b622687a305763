//! Gaussian kernels, their exact partial derivatives, and closed-form Gram
//! integrals.
//!
//! Partial derivatives factorize across coordinates. In one dimension,
//! `d^n/du^n exp(-u^2/2) = (-1)^n He_n(u) exp(-u^2/2)` where `He_n` is the
//! probabilists' Hermite polynomial, so the derivative of
//! `exp(-|x - c|^2 / 2 sigma^2)` of multi-index `j` is the kernel value times
//! `prod_m (-1)^{j_m} He_{j_m}(u_m) sigma^{-j_m}` with `u_m = (x_m - c_m) / sigma`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MisedError, Result};
use crate::matrix::{squared_distance, SampleMatrix};

/// Orders of differentiation per coordinate, `(j_1, ..., j_d)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    entries: Vec<u32>,
}

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Result<Self> {
        if entries.is_empty() {
            return Err(MisedError::invalid("multi-index must have at least one entry"));
        }
        Ok(Self { entries })
    }

    /// The all-zero index of dimension `d`.
    pub fn zero(d: usize) -> Self {
        Self {
            entries: vec![0; d.max(1)],
        }
    }

    /// Second-order index differentiating once along `a` and once along `b`
    /// (twice along `a` when `a == b`).
    pub fn pair(d: usize, a: usize, b: usize) -> Self {
        let mut entries = vec![0; d];
        entries[a] += 1;
        entries[b] += 1;
        Self { entries }
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn order(&self) -> u32 {
        self.entries.iter().sum()
    }

    /// Entry-wise sum, used to differentiate an already differentiated kernel.
    pub fn combined(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(MisedError::invalid("multi-index dimensions differ"));
        }
        Ok(Self {
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        })
    }

    /// All multi-indices of order `k` over `d` coordinates, in descending
    /// lexicographic order. There are `C(k + d - 1, d - 1)` of them.
    pub fn enumerate(d: usize, k: u32) -> Vec<Self> {
        assert!(d >= 1, "dimension must be positive");
        let mut out = Vec::new();
        let mut current = vec![0u32; d];
        fill_descending(&mut current, 0, k, &mut out);
        out
    }

    pub fn key(&self) -> String {
        self.to_string()
    }
}

fn fill_descending(current: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex {
            entries: current.to_vec(),
        });
        return;
    }
    for v in (0..=remaining).rev() {
        current[pos] = v;
        fill_descending(current, pos + 1, remaining - v, out);
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl FromStr for MultiIndex {
    type Err = MisedError;

    fn from_str(s: &str) -> Result<Self> {
        let entries = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u32>()
                    .map_err(|_| MisedError::invalid(format!("bad multi-index entry {p:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }
}

/// Bandwidth plus kernel centers of a Gaussian kernel model.
#[derive(Clone, Debug)]
pub struct KernelConfig {
    pub sigma: f64,
    pub centers: SampleMatrix,
}

impl KernelConfig {
    pub fn new(sigma: f64, centers: SampleMatrix) -> Result<Self> {
        check_sigma(sigma)?;
        if centers.is_empty() {
            return Err(MisedError::invalid("at least one kernel center is required"));
        }
        if !centers.all_finite() {
            return Err(MisedError::invalid("kernel centers must be finite"));
        }
        Ok(Self { sigma, centers })
    }
}

/// How kernel centers are drawn from the training samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[derive(Default)]
pub struct CenterSelection {
    /// Maximum number of centers; `None` uses every sample.
    pub cap: Option<usize>,
    pub seed: u64,
}


impl CenterSelection {
    pub fn capped(cap: usize, seed: u64) -> Self {
        Self {
            cap: Some(cap),
            seed,
        }
    }

    /// Picks centers from `samples`. A capped selection is a uniform random
    /// subset drawn in the samples' sorted order, so it does not depend on
    /// how the rows were ordered on input.
    pub fn select(&self, samples: &SampleMatrix) -> SampleMatrix {
        match self.cap {
            Some(cap) if cap < samples.nrows() => {
                let mut order = samples.sorted_row_order();
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                order.shuffle(&mut rng);
                order.truncate(cap.max(1));
                order.sort_unstable();
                samples.select_rows(&order)
            }
            _ => samples.clone(),
        }
    }
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(MisedError::invalid(format!("bandwidth must be finite and > 0, got {sigma}")));
    }
    Ok(())
}

fn check_dims(x: &[f64], c: &[f64]) -> Result<()> {
    if x.len() != c.len() || x.is_empty() {
        return Err(MisedError::invalid(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            c.len()
        )));
    }
    Ok(())
}

/// Probabilists' Hermite polynomial `He_n(u)` via the three-term recurrence
/// `He_{n+1} = u He_n - n He_{n-1}`.
pub fn hermite(n: u32, u: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = u;
    for i in 1..n {
        let next = u * cur - f64::from(i) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[n] = (-1)^n He_n(u) sigma^{-n}` for `n = 0..out.len()`.
fn derivative_factors(u: f64, sigma: f64, out: &mut [f64]) {
    let mut prev = 1.0;
    let mut cur = u;
    let inv = 1.0 / sigma;
    let mut scale = 1.0;
    for (n, slot) in out.iter_mut().enumerate() {
        let he = match n {
            0 => 1.0,
            1 => u,
            _ => {
                let next = u * cur - (n - 1) as f64 * prev;
                prev = cur;
                cur = next;
                next
            }
        };
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        *slot = sign * he * scale;
        scale *= inv;
    }
}

/// `exp(-|x - c|^2 / (2 sigma^2))`.
pub fn gauss_kernel(x: &[f64], c: &[f64], sigma: f64) -> Result<f64> {
    check_dims(x, c)?;
    check_sigma(sigma)?;
    Ok(kernel_value(x, c, sigma))
}

#[inline]
fn kernel_value(x: &[f64], c: &[f64], sigma: f64) -> f64 {
    (-squared_distance(x, c) / (2.0 * sigma * sigma)).exp()
}

/// Exact partial derivative of [`gauss_kernel`] with respect to `x`.
pub fn gauss_kernel_partial(x: &[f64], c: &[f64], sigma: f64, j: &MultiIndex) -> Result<f64> {
    check_dims(x, c)?;
    check_sigma(sigma)?;
    if j.dim() != x.len() {
        return Err(MisedError::invalid(format!(
            "multi-index has dimension {}, data has {}",
            j.dim(),
            x.len()
        )));
    }
    let mut table = PartialTable::new(x.len(), j.order());
    table.load(x, c, sigma);
    Ok(table.value(j))
}

/// Scratch space for evaluating many partial derivatives of one kernel
/// `(x, c)` pair while computing the exponential and Hermite factors once.
pub(crate) struct PartialTable {
    d: usize,
    width: usize,
    kernel: f64,
    factors: Vec<f64>,
}

impl PartialTable {
    pub(crate) fn new(d: usize, max_order: u32) -> Self {
        let width = max_order as usize + 1;
        Self {
            d,
            width,
            kernel: 0.0,
            factors: vec![0.0; d * width],
        }
    }

    #[inline]
    pub(crate) fn load(&mut self, x: &[f64], c: &[f64], sigma: f64) {
        self.kernel = kernel_value(x, c, sigma);
        for m in 0..self.d {
            let u = (x[m] - c[m]) / sigma;
            derivative_factors(u, sigma, &mut self.factors[m * self.width..(m + 1) * self.width]);
        }
    }

    #[inline]
    pub(crate) fn value(&self, j: &MultiIndex) -> f64 {
        let mut v = self.kernel;
        for (m, &e) in j.entries.iter().enumerate() {
            if e != 0 {
                v *= self.factors[m * self.width + e as usize];
            }
        }
        v
    }
}

/// Closed-form `int psi_i(x) psi_j(x) dx = (pi sigma^2)^{d/2} exp(-|ci - cj|^2 / 4 sigma^2)`.
pub fn gram_entry(ci: &[f64], cj: &[f64], sigma: f64, d: usize) -> Result<f64> {
    check_dims(ci, cj)?;
    check_sigma(sigma)?;
    if d != ci.len() {
        return Err(MisedError::invalid(format!(
            "dimension {d} does not match center length {}",
            ci.len()
        )));
    }
    Ok(gram_prefactor(sigma, d) * (-squared_distance(ci, cj) / (4.0 * sigma * sigma)).exp())
}

#[inline]
pub(crate) fn gram_prefactor(sigma: f64, d: usize) -> f64 {
    (PI * sigma * sigma).powf(d as f64 / 2.0)
}

/// Gram matrix of kernel-product integrals over all pairs of centers.
pub fn gram_matrix(centers: &SampleMatrix, sigma: f64) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    let m = centers.nrows();
    let d = centers.ncols();
    let pre = gram_prefactor(sigma, d);
    let denom = 4.0 * sigma * sigma;
    let mut g = DMatrix::zeros(m, m);
    for a in 0..m {
        g[(a, a)] = pre;
        for b in 0..a {
            let v = pre * (-squared_distance(centers.row(a), centers.row(b)) / denom).exp();
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    Ok(g)
}

/// Mean over `samples` of the `j`-th kernel partial at each center.
pub fn h_vector(
    centers: &SampleMatrix,
    samples: &SampleMatrix,
    sigma: f64,
    j: &MultiIndex,
) -> Result<DVector<f64>> {
    let mut out = h_vectors(centers, samples, sigma, std::slice::from_ref(j))?;
    Ok(out.pop().expect("one index requested"))
}

/// [`h_vector`] for several multi-indices of a common dimension at once.
pub fn h_vectors(
    centers: &SampleMatrix,
    samples: &SampleMatrix,
    sigma: f64,
    indices: &[MultiIndex],
) -> Result<Vec<DVector<f64>>> {
    check_sigma(sigma)?;
    if samples.is_empty() {
        return Err(MisedError::invalid("h vector needs at least one sample"));
    }
    let d = centers.ncols();
    if samples.ncols() != d {
        return Err(MisedError::invalid(format!(
            "samples have dimension {}, centers {}",
            samples.ncols(),
            d
        )));
    }
    if let Some(bad) = indices.iter().find(|j| j.dim() != d) {
        return Err(MisedError::invalid(format!("multi-index {bad} does not have dimension {d}")));
    }
    let max_order = indices.iter().map(MultiIndex::order).max().unwrap_or(0);
    let m = centers.nrows();
    let mut out = vec![DVector::zeros(m); indices.len()];
    let mut table = PartialTable::new(d, max_order);
    let inv_n = 1.0 / samples.nrows() as f64;
    for l in 0..m {
        let c = centers.row(l);
        let mut sums = vec![0.0; indices.len()];
        for x in samples.rows() {
            table.load(x, c, sigma);
            for (s, j) in sums.iter_mut().zip(indices) {
                *s += table.value(j);
            }
        }
        for (v, s) in out.iter_mut().zip(sums) {
            v[l] = s * inv_n;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binom(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(gauss_kernel(&[0.3, -1.0], &[0.3, -1.0], 0.7).unwrap(), 1.0);
        let v = gauss_kernel(&[1.0], &[0.0], 1.0).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        let v = gauss_kernel(&[2.0, 2.0], &[0.0, 0.0], 2.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn kernel_rejects_bad_input() {
        assert!(gauss_kernel(&[1.0], &[1.0, 2.0], 1.0).is_err());
        assert!(gauss_kernel(&[1.0], &[1.0], 0.0).is_err());
        assert!(gauss_kernel(&[1.0], &[1.0], -2.0).is_err());
        let j = MultiIndex::new(vec![1, 0]).unwrap();
        assert!(gauss_kernel_partial(&[1.0], &[0.0], 1.0, &j).is_err());
    }

    #[test]
    fn partial_examples() {
        let x = [0.4, -0.2, 1.1];
        let c = [0.0, 0.5, 0.9];
        let zero = MultiIndex::zero(3);
        assert_eq!(
            gauss_kernel_partial(&x, &c, 0.8, &zero).unwrap(),
            gauss_kernel(&x, &c, 0.8).unwrap()
        );
        let j1 = MultiIndex::new(vec![1]).unwrap();
        assert_eq!(gauss_kernel_partial(&[2.0], &[2.0], 1.3, &j1).unwrap(), 0.0);
        // Frozen from a central finite difference of gauss_kernel with step 1e-5.
        let v = gauss_kernel_partial(&[1.0], &[0.0], 1.0, &j1).unwrap();
        assert!((v + 0.606_530_659_7).abs() < 1e-9);
        let j2 = MultiIndex::new(vec![2]).unwrap();
        let v = gauss_kernel_partial(&[0.0], &[0.0], 1.0, &j2).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
    }

    #[test]
    fn hermite_low_orders() {
        let u = 0.7;
        assert_eq!(hermite(0, u), 1.0);
        assert_eq!(hermite(1, u), u);
        assert!((hermite(2, u) - (u * u - 1.0)).abs() < 1e-15);
        assert!((hermite(3, u) - (u * u * u - 3.0 * u)).abs() < 1e-15);
        assert!((hermite(4, u) - (u.powi(4) - 6.0 * u * u + 3.0)).abs() < 1e-14);
    }

    #[test]
    fn enumeration_is_descending_and_complete() {
        let idx = MultiIndex::enumerate(2, 2);
        let keys: Vec<String> = idx.iter().map(MultiIndex::key).collect();
        assert_eq!(keys, ["2,0", "1,1", "0,2"]);
        for d in 1..=5u64 {
            for k in 0..=4u32 {
                let all = MultiIndex::enumerate(d as usize, k);
                assert_eq!(all.len() as u64, binom(k as u64 + d - 1, d - 1));
                assert!(all.iter().all(|j| j.order() == k && j.dim() == d as usize));
                assert!(all.windows(2).all(|w| w[0] > w[1]));
            }
        }
    }

    #[test]
    fn key_round_trips() {
        let j = MultiIndex::new(vec![3, 0, 1]).unwrap();
        assert_eq!(j.key(), "3,0,1");
        assert_eq!(j.key().parse::<MultiIndex>().unwrap(), j);
        assert!("1,x".parse::<MultiIndex>().is_err());
    }

    #[test]
    fn gram_examples() {
        let pi = std::f64::consts::PI;
        assert!((gram_entry(&[0.2], &[0.2], 1.0, 1).unwrap() - pi.sqrt()).abs() < 1e-15);
        assert!((gram_entry(&[0.0, 1.0], &[0.0, 1.0], 1.0, 2).unwrap() - pi).abs() < 1e-15);
        let v = gram_entry(&[0.0], &[2.0], 1.0, 1).unwrap();
        assert!((v - 0.652_049_332_7).abs() < 1e-9);

        let one = SampleMatrix::from_rows(&[[0.5, 0.5]]).unwrap();
        let g = gram_matrix(&one, 2.0).unwrap();
        assert_eq!(g.shape(), (1, 1));
        assert!((g[(0, 0)] - 4.0 * pi).abs() < 1e-12);

        let dup = SampleMatrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let g = gram_matrix(&dup, 0.5).unwrap();
        assert!(g.iter().all(|&v| v == g[(0, 0)]));
        assert!(g.determinant().abs() < 1e-15);
    }

    #[test]
    fn h_vector_examples() {
        let c = SampleMatrix::from_rows(&[[1.5, -0.5]]).unwrap();
        let h = h_vector(&c, &c, 0.9, &MultiIndex::zero(2)).unwrap();
        assert_eq!(h[0], 1.0);

        // Mirror-symmetric about the center along the first axis.
        let center = SampleMatrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let s = SampleMatrix::from_rows(&[[0.7, 0.3], [-0.7, 0.3], [1.9, -2.0], [-1.9, -2.0]]).unwrap();
        let j = MultiIndex::new(vec![3, 0]).unwrap();
        let h = h_vector(&center, &s, 1.1, &j).unwrap();
        assert_eq!(h[0], 0.0);

        let empty = SampleMatrix::new(0, 2, vec![]).unwrap();
        assert!(h_vector(&center, &empty, 1.0, &j).is_err());
    }

    #[test]
    fn h_vector_matches_double_loop() {
        let centers = SampleMatrix::from_rows(&[[0.1, 0.2], [-1.0, 0.4], [0.9, -0.3]]).unwrap();
        let samples =
            SampleMatrix::from_rows(&[[0.0, 0.0], [1.2, -0.7], [-0.4, 0.8], [0.3, 0.3]]).unwrap();
        let j = MultiIndex::new(vec![1, 2]).unwrap();
        let h = h_vector(&centers, &samples, 0.6, &j).unwrap();
        for l in 0..3 {
            let mut s = 0.0;
            for i in 0..4 {
                s += gauss_kernel_partial(samples.row(i), centers.row(l), 0.6, &j).unwrap();
            }
            assert!((h[l] - s / 4.0).abs() <= 1e-12 * s.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn parity_under_argument_swap(
            x in prop::collection::vec(-3.0f64..3.0, 3),
            c in prop::collection::vec(-3.0f64..3.0, 3),
            sigma in 0.1f64..4.0,
            e in prop::collection::vec(0u32..4, 3),
        ) {
            let j = MultiIndex::new(e).unwrap();
            let a = gauss_kernel_partial(&x, &c, sigma, &j).unwrap();
            let b = gauss_kernel_partial(&c, &x, sigma, &j).unwrap();
            let sign = if j.order().is_multiple_of(2) { 1.0 } else { -1.0 };
            prop_assert_eq!(a, sign * b);
        }

        #[test]
        fn kernel_value_in_unit_interval(
            x in prop::collection::vec(-5.0f64..5.0, 2),
            c in prop::collection::vec(-5.0f64..5.0, 2),
            sigma in 0.05f64..10.0,
        ) {
            let v = gauss_kernel(&x, &c, sigma).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
