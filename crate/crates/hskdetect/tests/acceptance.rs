//! Acceptance suite: one test per release criterion, each printing a
//! single PASS/FAIL line (visible with `--nocapture`, and always shown
//! for failures).
//!
//! Criterion 1 is expected to fail: it demands that the exact 5% quantile
//! of `sup |B0|` equal 1.1779, but that number solves the reference
//! study's threshold equation `sqrt(b) K(b) = 0.95`, not `K(b) = 0.95`;
//! the exact quantile is 1.3581. The library keeps the distribution exact
//! and exposes the 1.1779 threshold separately as
//! `published_critical_value`, which is what the reproduced tables use.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use hskdetect::detection::standardize_weights;
use hskdetect::empirical::{run_test, sup_weighted_ecdf, TestConfig};
use hskdetect::locpoly::{self, BandwidthRule, FitTarget, MultiIndexSet, SmootherConfig};
use hskdetect::nulldist::{self, SeriesPolicy};
use hskdetect::rng::{stream, Purpose};
use hskdetect::simulate::{monte_carlo, DetectionId, ExampleId, QuantilePolicy, ScenarioSpec};
use hskdetect::{Dataset, DetectionFunction};

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {verdict} - {detail}");
    assert!(pass, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_01_quantile_fidelity() {
    let start = Instant::now();
    let q = nulldist::quantile_sup_bridge(0.05, SeriesPolicy::default()).unwrap();
    let elapsed = start.elapsed();
    let pass = (q - 1.1779).abs() <= 1e-3 && elapsed.as_secs_f64() < 1.0;
    report(
        1,
        pass,
        &format!(
            "exact 5% quantile of sup |B0| is {q:.4} in {elapsed:.0?}; the required 1.1779 \
             solves sqrt(b) K(b) = 0.95 instead and is available as the published threshold"
        ),
    );
}

#[test]
fn criterion_02_series_oracle_equivalence() {
    let start = Instant::now();
    let policy = SeriesPolicy::default();
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let b = 0.2 + 4.8 * i as f64 / 999.0;
        let diff = (nulldist::cdf_sup_bridge(b, policy) - nulldist::oracle_cdf_kolmogorov(b)).abs();
        worst = worst.max(diff);
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-10 && elapsed.as_secs_f64() < 1.0;
    report(2, pass, &format!("max |series - oracle| = {worst:.2e} on 1000 points in {elapsed:.0?}"));
}

fn mc(spec: &ScenarioSpec) -> f64 {
    monte_carlo(spec).expect("scenario runs").rejection_rate
}

#[test]
fn criterion_03_table1_level_cell() {
    let mut spec = ScenarioSpec::new(ExampleId::Ex1, 0, DetectionId::Estimated, 300, 1000);
    spec.fast_cv = true;
    let rate = mc(&spec);
    let pass = (rate - 0.039).abs() <= 0.025;
    report(3, pass, &format!("level at n = 300: {rate:.3}, target 0.039 +/- 0.025"));
}

#[test]
fn criterion_04_table1_power_cell() {
    let spec = ScenarioSpec::new(ExampleId::Ex1, 1, DetectionId::Estimated, 100, 1000);
    let rate = mc(&spec);
    let pass = (rate - 0.939).abs() <= 0.03;
    report(4, pass, &format!("power vs sigma1 at n = 100: {rate:.3}, target 0.939 +/- 0.03"));
}

#[test]
fn criterion_05_table2_mar_cell() {
    let mut spec = ScenarioSpec::new(ExampleId::Ex1, 1, DetectionId::Estimated, 200, 1000);
    spec.missing = true;
    let rate = mc(&spec);
    let pass = (rate - 0.957).abs() <= 0.03;
    report(5, pass, &format!("MAR power vs sigma1 at n = 200: {rate:.3}, target 0.957 +/- 0.03"));
}

#[test]
fn criterion_06_table1_bootstrap_cell() {
    let mut spec = ScenarioSpec::new(ExampleId::Ex1, 2, DetectionId::Estimated, 50, 1000);
    spec.quantile = QuantilePolicy::Bootstrap { replications: 500 };
    spec.fast_cv = true;
    let rate = mc(&spec);
    let pass = (rate - 0.631).abs() <= 0.05;
    report(
        6,
        pass,
        &format!("bootstrap power vs sigma2 at n = 50, B = 500: {rate:.3}, target 0.631 +/- 0.05"),
    );
}

#[test]
fn criterion_07_detection_sensitivity_contrast() {
    let mut hit = ScenarioSpec::new(ExampleId::Ex2, 1, DetectionId::Omega1Ex2, 200, 500);
    hit.fast_cv = true;
    let rate_hit = mc(&hit);
    let mut miss = ScenarioSpec::new(ExampleId::Ex2, 2, DetectionId::Omega1Ex2, 200, 500);
    miss.fast_cv = true;
    let rate_miss = mc(&miss);
    let pass = rate_hit >= 0.95 && rate_miss <= 0.10;
    report(
        7,
        pass,
        &format!(
            "omega1 detects sigma1 at {rate_hit:.3} (need >= 0.95) and misses sigma2 at \
             {rate_miss:.3} (need <= 0.10)"
        ),
    );
}

#[test]
fn criterion_08_remark1_zero_power() {
    let spec = ScenarioSpec::new(ExampleId::Remark1, 0, DetectionId::Remark1Omega, 200, 1000);
    let rate = mc(&spec);
    let pass = (rate - 0.05).abs() <= 0.03;
    report(
        8,
        pass,
        &format!("designed zero-power rejection rate: {rate:.3}, target 0.05 +/- 0.03"),
    );
}

#[test]
fn criterion_09_polynomial_reproduction() {
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for case in 0..100u64 {
        let mut rng = stream(900, case, Purpose::Covariates);
        let degree = (rng.gen::<u32>() % 4) as u32;
        let m = 1 + (rng.gen::<u32>() % 2) as usize;
        let n = 30 + (rng.gen::<u64>() % 71) as usize;
        let basis = MultiIndexSet::new(degree, m);
        let coeffs: Vec<f64> = (0..basis.len()).map(|_| 4.0 * rng.gen::<f64>() - 2.0).collect();
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.gen::<f64>()).collect()).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| {
                basis
                    .indices()
                    .iter()
                    .zip(&coeffs)
                    .map(|(idx, c)| c * locpoly::basis_eval(idx, x))
                    .sum()
            })
            .collect();
        let data = Dataset::new(xs, ys, None).unwrap();
        let cfg = SmootherConfig::new(degree).with_bandwidth(BandwidthRule::Fixed(2.0));
        let fit = locpoly::fit(&data, FitTarget::Response, &cfg).unwrap();
        for j in 0..n {
            if fit.fallback_rows().contains(&j) {
                continue;
            }
            let resid = (data.response()[j] - fit.fitted()[j]).abs()
                / (1.0 + data.response()[j].abs());
            worst = worst.max(resid);
            checked += 1;
        }
    }
    let pass = worst < 1e-8 && checked > 0;
    report(
        9,
        pass,
        &format!(
            "largest relative residual {worst:.2e} over {checked} nonsingular rows of 100 \
             polynomial datasets"
        ),
    );
}

/// Step-process evaluation on a fine grid around the jump points.
fn brute_force_sup(weights: &[f64], residuals: &[f64]) -> f64 {
    let n = residuals.len() as f64;
    let mut grid: Vec<f64> = Vec::new();
    for &r in residuals {
        grid.push(r - 1e-9);
        grid.push(r);
        grid.push(r + 1e-9);
    }
    grid.push(f64::NEG_INFINITY);
    grid.push(f64::INFINITY);
    let mut sup = 0.0f64;
    for &t in &grid {
        let s: f64 = weights
            .iter()
            .zip(residuals)
            .filter_map(|(&w, &r)| (r <= t).then_some(w))
            .sum();
        sup = sup.max(s.abs());
    }
    sup / n.sqrt()
}

#[test]
fn criterion_10_statistic_oracle() {
    let mut worst = 0.0f64;
    for rep in 0..1000u64 {
        let mut rng = stream(1000, rep, Purpose::Errors);
        let n = 2 + (rng.gen::<u64>() % 49) as usize;
        let mut residuals: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        if rep % 2 == 0 && n > 3 {
            residuals[1] = residuals[0];
            residuals[3] = residuals[2];
        }
        let weights: Vec<f64> = (0..n).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
        let fast = sup_weighted_ecdf(&weights, &residuals).unwrap();
        worst = worst.max((fast - brute_force_sup(&weights, &residuals)).abs());
    }
    let pass = worst < 1e-12;
    report(10, pass, &format!("max |fast - brute force| = {worst:.2e} over 1000 instances"));
}

fn random_dataset(seed: u64, delta: Option<u8>) -> Dataset {
    let mut xr = stream(seed, 0, Purpose::Covariates);
    let mut er = stream(seed, 0, Purpose::Errors);
    let n = 20 + (xr.gen::<u64>() % 41) as usize;
    let xs: Vec<f64> = (0..n).map(|_| 2.0 * xr.gen::<f64>() - 1.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let e: f64 = StandardNormal.sample(&mut er);
            2.0 * x + 3.0 * (std::f64::consts::PI * x).cos() + (0.5 + x * x) * e
        })
        .collect();
    let d = delta.map(|v| vec![v; n]);
    Dataset::new(xs.iter().map(|&x| vec![x]).collect(), ys, d).unwrap()
}

#[test]
fn criterion_11_complete_case_identity() {
    let mut all_bit_identical = true;
    for case in 0..100u64 {
        let with = random_dataset(1100 + case, Some(1));
        let without = random_dataset(1100 + case, None);
        let sm = SmootherConfig::new(1).with_bandwidth(BandwidthRule::Fixed(1.0));
        let cfg = TestConfig::new(sm, DetectionFunction::EstimatedScale);
        let a = run_test(&with, &cfg).unwrap();
        let b = run_test(&without, &cfg).unwrap();
        if a.statistic.to_bits() != b.statistic.to_bits() || a != b {
            all_bit_identical = false;
            break;
        }
    }
    report(
        11,
        all_bit_identical,
        "MAR path with delta = 1 everywhere is bit-identical to the full path on 100 datasets",
    );
}

#[test]
fn criterion_12_rank_and_affine_invariances() {
    let mut worst_affine = 0.0f64;
    let mut rank_exact = true;
    for case in 0..100u64 {
        let mut rng = stream(1200, case, Purpose::Errors);
        let n = 10 + (rng.gen::<u64>() % 40) as usize;
        let residuals: Vec<f64> = (0..n).map(|_| 4.0 * rng.gen::<f64>() - 2.0).collect();
        let omega: Vec<f64> = (0..n).map(|_| 4.0 * rng.gen::<f64>() - 2.0).collect();
        let w = standardize_weights(&omega, DetectionFunction::User(omega.clone())).unwrap();
        let base = sup_weighted_ecdf(&w.values, &residuals).unwrap();

        // Strictly increasing residual transform: same order and ties.
        let mapped: Vec<f64> = residuals.iter().map(|&r| (r * 0.3).tanh() * 2.0 + r).collect();
        if sup_weighted_ecdf(&w.values, &mapped).unwrap() != base {
            rank_exact = false;
        }

        // omega -> a omega + b with a of either sign.
        let a = if case % 2 == 0 { 0.1 + rng.gen::<f64>() } else { -(0.1 + rng.gen::<f64>()) };
        let b = 4.0 * rng.gen::<f64>() - 2.0;
        let shifted: Vec<f64> = omega.iter().map(|&v| a * v + b).collect();
        let w2 = standardize_weights(&shifted, DetectionFunction::User(shifted.clone())).unwrap();
        let t2 = sup_weighted_ecdf(&w2.values, &residuals).unwrap();
        worst_affine = worst_affine.max((t2 - base).abs());
    }
    let pass = rank_exact && worst_affine < 1e-10;
    report(
        12,
        pass,
        &format!(
            "rank invariance exact, affine invariance max deviation {worst_affine:.2e} over \
             100 instances"
        ),
    );
}
