//! Acceptance suite. Every criterion prints one PASS/FAIL line and then
//! asserts, so `cargo test --test acceptance -- --nocapture` gives a
//! readable summary.

use mised::applications::{normalized_mse, roc_auc_labels};
use mised::derivative::{fit_mised, CvGrid};
use mised::divergence::{build_b_tilde, local_metric_from_b, nn_kl, nn_kl_metric, KlMethod, LocalMetric, MisedMetricConfig};
use mised::experiments::{
    change_detection_auc, compare_over_seeds, dim_sweep, feature_selection_runs, kl_trial, ChangeDetectionConfig,
    FeatureSelectionConfig,
};
use mised::kernel::{gauss_kernel_partial, gram_entry};
use mised::synthetic::{make_shifted_densities, sample_normal};
use mised::{CenterSelection, MultiIndex, SampleMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

fn report(criterion: u32, pass: bool, detail: &str) {
    println!("criterion {criterion}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// Kernel partials of order <= 2 written out by hand.
fn psi(x: &[f64], c: &[f64], s: f64) -> f64 {
    let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
    (-r2 / (2.0 * s * s)).exp()
}

fn psi_partial(x: &[f64], c: &[f64], s: f64, j: &[u32]) -> f64 {
    let s2 = s * s;
    let nz: Vec<usize> = (0..j.len()).filter(|&m| j[m] > 0).collect();
    let p = psi(x, c, s);
    match nz.as_slice() {
        [] => p,
        [a] if j[*a] == 1 => -(x[*a] - c[*a]) / s2 * p,
        [a] => {
            let u = x[*a] - c[*a];
            (u * u / (s2 * s2) - 1.0 / s2) * p
        }
        [a, b] => (x[*a] - c[*a]) * (x[*b] - c[*b]) / (s2 * s2) * p,
        _ => unreachable!(),
    }
}

/// Minimizes `t'Gt - 2(-1)^k t'h + lambda t't` by restarted conjugate gradients.
fn iterative_minimizer(g: &DMatrix<f64>, h: &DVector<f64>, lambda: f64, sign: f64) -> DVector<f64> {
    let n = h.len();
    let grad = |t: &DVector<f64>| (g * t + t * lambda) * 2.0 - h * (2.0 * sign);
    let stop = 1e-15 * h.norm().max(f64::MIN_POSITIVE);
    let mut t = DVector::zeros(n);
    for _restart in 0..50 {
        let mut r = -grad(&t);
        if r.norm() <= stop {
            break;
        }
        let mut p = r.clone();
        for _ in 0..n {
            let ap = (g * &p + &p * lambda) * 2.0;
            let alpha = r.dot(&r) / p.dot(&ap);
            t += &p * alpha;
            let r_new = -grad(&t);
            if r_new.norm() <= stop {
                break;
            }
            let beta = r_new.dot(&r_new) / r.dot(&r);
            p = &r_new + &p * beta;
            r = r_new;
        }
    }
    t
}

#[test]
fn criterion_01_solver_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(5..=30);
        let d = rng.random_range(1..=3);
        let k = rng.random_range(1..=2u32);
        let sigma = rng.random_range(0.5..2.0);
        let lambda = rng.random_range(0.01..1.0);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let x = SampleMatrix::from_rows(&rows).unwrap();
        let model = fit_mised(&x, k, sigma, lambda, CenterSelection::default()).unwrap();
        let c = model.centers();
        let pre = (std::f64::consts::PI * sigma * sigma).powf(d as f64 / 2.0);
        let g = DMatrix::from_fn(n, n, |a, b| {
            let r2: f64 = c.row(a).iter().zip(c.row(b)).map(|(u, v)| (u - v) * (u - v)).sum();
            pre * (-r2 / (4.0 * sigma * sigma)).exp()
        });
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        for j in MultiIndex::enumerate(d, k) {
            let h = DVector::from_fn(n, |l, _| {
                rows.iter().map(|xi| psi_partial(xi, c.row(l), sigma, j.entries())).sum::<f64>() / n as f64
            });
            let oracle = iterative_minimizer(&g, &h, lambda, sign);
            let got = model.coefficients(&j).unwrap();
            worst = worst.max((got - oracle).amax());
        }
    }
    let pass = worst < 1e-6;
    report(1, pass, &format!("max inf-norm gap {worst:.3e} over 20 instances"));
    assert!(pass);
}

fn nested_difference(x: &[f64], c: &[f64], s: f64, j: &[u32], step: f64) -> f64 {
    match j.iter().position(|&e| e > 0) {
        None => psi(x, c, s),
        Some(m) => {
            let mut rest = j.to_vec();
            rest[m] -= 1;
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[m] += step;
            xm[m] -= step;
            (nested_difference(&xp, c, s, &rest, step) - nested_difference(&xm, c, s, &rest, step)) / (2.0 * step)
        }
    }
}

#[test]
fn criterion_02_kernel_partials_vs_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < 200 {
        let d = rng.random_range(1..=3);
        let order = rng.random_range(1..=4u32);
        let mut j = vec![0u32; d];
        for _ in 0..order {
            j[rng.random_range(0..d)] += 1;
        }
        let sigma = rng.random_range(0.7..2.0);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let exact = gauss_kernel_partial(&x, &c, sigma, &MultiIndex::new(j.clone()).unwrap()).unwrap();
        let scale = psi(&x, &c, sigma) / sigma.powi(order as i32);
        if exact.abs() < 1e-2 * scale {
            // Near a root of the Hermite product a relative error is meaningless.
            continue;
        }
        // One Richardson step cancels the leading h^2 error term.
        let step = sigma * [0.0, 1e-4, 1e-3, 5e-3, 1.5e-2][order as usize];
        let coarse = nested_difference(&x, &c, sigma, &j, step);
        let fine = nested_difference(&x, &c, sigma, &j, step / 2.0);
        let fd = (4.0 * fine - coarse) / 3.0;
        let err = ((fd - exact) / exact).abs();
        worst = worst.max(err);
        cases += 1;
    }
    let pass = worst < 1e-4;
    report(2, pass, &format!("max relative error {worst:.3e} over {cases} cases"));
    assert!(pass);
}

fn trapezoid_line(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
    let h = (hi - lo) / steps as f64;
    let mut s = 0.5 * (f(lo) + f(hi));
    for i in 1..steps {
        s += f(lo + i as f64 * h);
    }
    s * h
}

#[test]
fn criterion_03_gram_entry_vs_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let d = 1 + case % 2;
        let sigma = rng.random_range(0.3..2.0);
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let exact = gram_entry(&a, &b, sigma, d).unwrap();
        let lo = a.iter().chain(&b).cloned().fold(f64::INFINITY, f64::min) - 12.0 * sigma;
        let hi = a.iter().chain(&b).cloned().fold(f64::NEG_INFINITY, f64::max) + 12.0 * sigma;
        let steps = 800;
        let quad = if d == 1 {
            trapezoid_line(|t| psi(&[t], &a, sigma) * psi(&[t], &b, sigma), lo, hi, steps)
        } else {
            trapezoid_line(
                |u| trapezoid_line(|v| psi(&[u, v], &a, sigma) * psi(&[u, v], &b, sigma), lo, hi, steps),
                lo,
                hi,
                steps,
            )
        };
        worst = worst.max(((quad - exact) / exact).abs());
    }
    let pass = worst < 1e-6;
    report(3, pass, &format!("max relative error {worst:.3e} over 50 cases"));
    assert!(pass);
}

#[test]
fn criterion_04_one_dimensional_comparison() {
    let grid = CvGrid::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for (k, need) in [(1u32, 7usize), (2, 8)] {
        let runs = compare_over_seeds(500, 1, k, &SEEDS, &grid, None).unwrap();
        let wins = runs.iter().filter(|r| r.mised_nmse < r.kde_nmse).count();
        for r in &runs {
            eprintln!(
                "k={k} seed={} mised={:.4} (sigma {:.3}, lambda {:.3}) kde={:.4} (h {:.3})",
                r.seed, r.mised_nmse, r.mised_sigma, r.mised_lambda, r.kde_nmse, r.kde_bandwidth
            );
        }
        pass &= wins >= need;
        lines.push(format!("k={k}: MISED better in {wins}/10, need {need}"));
    }
    report(4, pass, &lines.join("; "));
    assert!(pass);
}

#[test]
fn criterion_05_dimension_sweep() {
    let grid = CvGrid::default();
    let dims = [1, 2, 3, 4, 5];
    let mut lines = Vec::new();
    let mut pass = true;
    for k in [1u32, 2] {
        let (rows, _) = dim_sweep(&dims, 500, k, &SEEDS, &grid, None).unwrap();
        let get = |d: usize, m: &str| rows.iter().find(|r| r.d == d && r.method == m).unwrap().mean;
        for r in &rows {
            eprintln!("k={k} d={} {} mean={:.4} std={:.4}", r.d, r.method, r.mean, r.std);
        }
        let (m1, m5, k1, k5) = (get(1, "mised"), get(5, "mised"), get(1, "kde"), get(5, "kde"));
        let ok = m5 < k5 && (m5 - m1) < (k5 - k1);
        pass &= ok;
        lines.push(format!(
            "k={k}: d=5 MISED {m5:.3} vs KDE {k5:.3}, growth {:.3} vs {:.3}",
            m5 - m1,
            k5 - k1
        ));
    }
    report(5, pass, &lines.join("; "));
    assert!(pass);
}

fn kl_means(rho: f64, methods: &[KlMethod]) -> Vec<f64> {
    methods
        .iter()
        .map(|m| {
            let v: Vec<f64> = SEEDS.iter().map(|&s| kl_trial(rho, 5, 1000, m, s).unwrap()).collect();
            eprintln!("rho={rho} {m}: {v:?}");
            mean(&v)
        })
        .collect()
}

#[test]
fn criterion_06_gaussian_anchor() {
    let truth = make_shifted_densities(2.0, 5, 2.0).unwrap().true_kl;
    let means = kl_means(2.0, &[KlMethod::Gp, KlMethod::Mised(MisedMetricConfig::default())]);
    let (gp, mised) = (means[0], means[1]);
    let pass = (truth - 2.0).abs() < 1e-9 && (gp - 2.0).abs() <= 0.3 && (mised - 2.0).abs() <= 0.6;
    report(6, pass, &format!("true {truth:.6}, GP {gp:.4}, MISED {mised:.4}"));
    assert!(pass);
}

#[test]
fn criterion_07_non_gaussian_improvement() {
    let mut lines = Vec::new();
    let mut pass = true;
    for rho in [1.0, 3.0] {
        let truth = make_shifted_densities(rho, 5, 2.0).unwrap().true_kl;
        let means = kl_means(rho, &[KlMethod::Mised(MisedMetricConfig::default()), KlMethod::Nn]);
        let (em, en) = ((means[0] - truth).abs(), (means[1] - truth).abs());
        pass &= em < en;
        lines.push(format!(
            "rho={rho}: true {truth:.4}, MISED {:.4} (err {em:.4}), NN {:.4} (err {en:.4})",
            means[0], means[1]
        ));
    }
    report(7, pass, &lines.join("; "));
    assert!(pass);
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn criterion_08_exact_invariants() {
    let mut failures: Vec<&str> = Vec::new();
    let x1 = sample_normal(80, 3, 11).unwrap();
    let x2 = sample_normal(90, 3, 12).unwrap().map_rows(|r, o| {
        o.copy_from_slice(r);
        o[0] += 0.7;
    });

    // Similarity transform x -> sRx + c.
    let (s, th) = (2.5, 0.6f64);
    let sim = |m: &SampleMatrix| {
        m.map_rows(|r, o| {
            o[0] = s * (th.cos() * r[0] - th.sin() * r[1]) + 3.0;
            o[1] = s * (th.sin() * r[0] + th.cos() * r[1]) - 1.0;
            o[2] = s * r[2] + 0.5;
        })
    };
    if !close(nn_kl(&x1, &x2).unwrap(), nn_kl(&sim(&x1), &sim(&x2)).unwrap()) {
        failures.push("nn similarity");
    }

    let ident: Vec<LocalMetric> = x1.rows().map(LocalMetric::identity).collect();
    if nn_kl_metric(&x1, &x2, &ident).unwrap() != nn_kl(&x1, &x2).unwrap() {
        failures.push("identity metric");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for _ in 0..50 {
        let h1 = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let h2 = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let b = build_b_tilde(&(&h1 + h1.transpose()), &(&h2 + h2.transpose()), 1.3, 80, 90, 3).unwrap();
        let anchor = [0.0, 0.0, 0.0];
        let a = local_metric_from_b(&b, &anchor).unwrap();
        let scaled = local_metric_from_b(&(&b * 7.5), &anchor).unwrap();
        let m = a.matrix();
        let eig = nalgebra::SymmetricEigen::new(m.clone());
        if eig.eigenvalues.min() <= 0.0 || !close(m.determinant(), 1.0) || (m - m.transpose()).amax() > 1e-12 {
            failures.push("metric SPD det 1");
            break;
        }
        if (m - scaled.matrix()).amax() > 1e-9 {
            failures.push("B scale invariance");
            break;
        }
    }

    // Reflection and translation of a fixed-hyper-parameter MISED fit.
    let x = sample_normal(40, 2, 13).unwrap();
    let q = sample_normal(15, 2, 14).unwrap();
    for k in [1u32, 2] {
        let base = fit_mised(&x, k, 0.8, 0.1, CenterSelection::default()).unwrap();
        let refl = |m: &SampleMatrix| m.map_rows(|r, o| o.iter_mut().zip(r).for_each(|(o, v)| *o = -v));
        let shift = |m: &SampleMatrix| m.map_rows(|r, o| o.iter_mut().zip(r).for_each(|(o, v)| *o = v + 4.25));
        let reflected = fit_mised(&refl(&x), k, 0.8, 0.1, CenterSelection::default()).unwrap();
        let shifted = fit_mised(&shift(&x), k, 0.8, 0.1, CenterSelection::default()).unwrap();
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        for j in MultiIndex::enumerate(2, k) {
            let p = base.predict(&j, &q).unwrap();
            let pr = reflected.predict(&j, &refl(&q)).unwrap();
            let ps = shifted.predict(&j, &shift(&q)).unwrap();
            if p.iter().zip(&pr).any(|(a, b)| !close(sign * a, *b)) {
                failures.push("reflection equivariance");
            }
            if p.iter().zip(&ps).any(|(a, b)| !close(*a, *b)) {
                failures.push("translation equivariance");
            }
        }
    }

    let est = vec![vec![0.3, -1.2, 2.0], vec![0.4]];
    let tru = vec![vec![0.5, -1.0, 1.7], vec![0.1]];
    let scale = |v: &Vec<Vec<f64>>| v.iter().map(|r| r.iter().map(|x| -3.7 * x).collect()).collect::<Vec<Vec<f64>>>();
    if !close(normalized_mse(&est, &tru).unwrap(), normalized_mse(&scale(&est), &scale(&tru)).unwrap()) {
        failures.push("nmse scale");
    }

    let scores: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
    let labels: Vec<bool> = (0..200).map(|i| i % 7 == 0).collect();
    let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
    let a = roc_auc_labels(&scores, &labels).unwrap();
    let b = roc_auc_labels(&neg, &labels).unwrap();
    if !close(a + b, 1.0) {
        failures.push("roc complement");
    }

    failures.dedup();
    let pass = failures.is_empty();
    report(8, pass, &if pass { "all invariants hold".to_owned() } else { failures.join(", ") });
    assert!(pass);
}

#[test]
fn criterion_09_change_detection() {
    let cfg = acceptance_change_config();
    let (auc, _) = change_detection_auc(&cfg, &KlMethod::Mised(MisedMetricConfig::default()), &SEEDS).unwrap();
    eprintln!("per-seed AUC {:?}", auc.auc);
    let pass = auc.mean > 0.8;
    report(
        9,
        pass,
        &format!("mean AUC {:.4} (r={}, m={}, w={})", auc.mean, cfg.window.r, cfg.window.m, cfg.window.tolerance()),
    );
    assert!(pass);
}

fn acceptance_change_config() -> ChangeDetectionConfig {
    ChangeDetectionConfig {
        duration: 200,
        shift: 5.0,
        window: mised::applications::WindowConfig::new(50, 5).unwrap(),
    }
}

#[test]
fn criterion_10_feature_selection() {
    let cfg = FeatureSelectionConfig::default();
    let runs = feature_selection_runs(&cfg, &KlMethod::Mised(MisedMetricConfig::default()), &SEEDS).unwrap();
    let hits = runs.iter().filter(|s| s.features[0] == cfg.informative[0]).count();
    let pass = hits >= 8;
    report(10, pass, &format!("informative feature first in {hits}/10 seeds"));
    assert!(pass);
}
