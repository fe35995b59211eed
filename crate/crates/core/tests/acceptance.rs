//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use mi_bci::classify::fit_bagging;
use mi_bci::classify::lda::fit_rows;
use mi_bci::data::{split, Class, SplitSpec, TrialSet};
use mi_bci::features::ar::{fit_ar, yule_walker};
use mi_bci::features::csp::log_variance_ratio;
use mi_bci::features::{CspModel, FeatureVector, Method};
use mi_bci::pipeline::{run_adaptive, run_static, EvalReport, PipelineConfig};
use mi_bci::select::{class_balance_penalty, estimate_pdf, grid_search, pdf_correlation, SearchSpace};
use mi_bci::synth::{generate, SynthConfig};
use mi_bci::Error;

const PLANTED_BAND: (f64, f64) = (12.0, 14.0);

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn overlaps(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn max_off_diagonal(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                worst = worst.max(m[(i, j)].abs());
            }
        }
    }
    worst
}

fn csp_oracle() -> Outcome {
    const TOL: f64 = 1e-8;
    let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 / 3.0, 1.0 / 3.0]));
    let pos = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / 3.0, 2.0 / 3.0]));
    let model = CspModel::from_covariances(&neg, &pos, 1).unwrap();
    let eig_err = (model.eigenvalues[0] - 2.0 / 3.0)
        .abs()
        .max((model.eigenvalues[1] - 1.0 / 3.0).abs());
    let w = &model.filters;
    let off = max_off_diagonal(&(w * &neg * w.transpose())).max(max_off_diagonal(&(w * &pos * w.transpose())));
    check(
        eig_err < TOL && off < TOL,
        format!("eigenvalue error {eig_err:.1e}, largest off-diagonal {off:.1e} (tol {TOL:.0e})"),
    )
}

fn ar_oracle() -> Outcome {
    const EXACT_TOL: f64 = 1e-10;
    const SIM_TOL: f64 = 0.05;
    let phi: f64 = 0.9;
    // Autocovariance of x(n) = 0.9 x(n-1) + u(n) with unit innovation.
    let r: Vec<f64> = (0..=3).map(|k| phi.powi(k) / (1.0 - phi * phi)).collect();
    let exact = yule_walker(&r, 1).unwrap();
    let exact3 = yule_walker(&r, 3).unwrap();
    let exact_err = (exact.a[0] + phi)
        .abs()
        .max((exact3.a[0] + phi).abs())
        .max(exact3.a[1].abs())
        .max(exact3.a[2].abs())
        .max((exact.noise_variance - 1.0).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut x = vec![0.0; 10_500];
    for n in 1..x.len() {
        x[n] = phi * x[n - 1] + gaussian(&mut rng);
    }
    let sim = fit_ar(&x[500..], 1).unwrap();
    let sim_err = (sim.a[0] + phi).abs();
    check(
        exact_err < EXACT_TOL && sim_err < SIM_TOL,
        format!(
            "analytic a1 = {:.12} (err {exact_err:.1e}), simulated a1 = {:.4} (err {sim_err:.4}, tol {SIM_TOL})",
            exact.a[0], sim.a[0]
        ),
    )
}

fn lda_oracle() -> Outcome {
    const B_TOL: f64 = 1e-9;
    const ANGLE_TOL: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mu = [1.5, -0.5, 0.25];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..40 {
        let e: Vec<f64> = (0..3).map(|_| gaussian(&mut rng)).collect();
        rows.push(mu.iter().zip(&e).map(|(m, e)| m + e).collect::<Vec<f64>>());
        labels.push(Class::Pos);
        rows.push(mu.iter().zip(&e).map(|(m, e)| -m - e).collect::<Vec<f64>>());
        labels.push(Class::Neg);
    }
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let model = fit_rows(&refs, &labels).unwrap();

    // Closed form: S_w⁻¹ (μ₊ − μ₋) from the pooled within-class scatter.
    let class_mean = |c: Class| -> DVector<f64> {
        let members: Vec<&Vec<f64>> = rows.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
        members
            .iter()
            .fold(DVector::zeros(3), |acc, r| acc + DVector::from_column_slice(r))
            / members.len() as f64
    };
    let (mp, mn) = (class_mean(Class::Pos), class_mean(Class::Neg));
    let mut sw = DMatrix::<f64>::zeros(3, 3);
    for (r, &l) in rows.iter().zip(&labels) {
        let d = DVector::from_column_slice(r) - if l == Class::Pos { &mp } else { &mn };
        sw += &d * d.transpose();
    }
    let oracle = sw.lu().solve(&(&mp - &mn)).unwrap();
    let w = DVector::from_column_slice(&model.w);
    let cos = (w.dot(&oracle) / (w.norm() * oracle.norm())).clamp(-1.0, 1.0);
    let angle = cos.acos();

    // Separable variant: shift the classes far apart.
    let far: Vec<Vec<f64>> = rows
        .iter()
        .zip(&labels)
        .map(|(r, &l)| r.iter().enumerate().map(|(i, v)| if i == 0 { v + l.sign() * 20.0 } else { *v }).collect())
        .collect();
    let far_refs: Vec<&[f64]> = far.iter().map(Vec::as_slice).collect();
    let sep = fit_rows(&far_refs, &labels).unwrap();
    let hits = far_refs
        .iter()
        .zip(&labels)
        .filter(|(r, &l)| Class::from_score(sep.score_values(r).unwrap()) == l)
        .count();
    let train_acc = 100.0 * hits as f64 / labels.len() as f64;
    check(
        model.b.abs() < B_TOL && angle < ANGLE_TOL && train_acc == 100.0,
        format!(
            "|b| = {:.1e} (tol {B_TOL:.0e}), angle {angle:.1e} rad (tol {ANGLE_TOL:.0e}), separable training accuracy {train_acc:.1}%",
            model.b.abs()
        ),
    )
}

fn feature_forced_values() -> Outcome {
    const TOL: f64 = 1e-12;
    let equal = (log_variance_ratio(2.5, 2.5).unwrap() - 0.5f64.ln()).abs();
    let three = (log_variance_ratio(3.0, 1.0).unwrap() - 0.75f64.ln()).abs();
    check(
        equal < TOL && three < TOL,
        format!("equal variances err {equal:.1e}, 3:1 err {three:.1e} (tol {TOL:.0e})"),
    )
}

fn selection_criteria() -> Outcome {
    const TOL: f64 = 1e-12;
    let symmetric = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
    let penalty = class_balance_penalty(&symmetric).unwrap();
    let scores = [-1.2, -0.3, 0.1, 0.4, 0.4, 0.9, 1.7];
    let p = estimate_pdf(&scores, (-2.0, 2.0)).unwrap();
    let rho = pdf_correlation(&p, &p.clone()).unwrap();
    let spread: Vec<f64> = (0..40).map(|i| -2.0 + 0.1 * i as f64 + 0.05).collect();
    let flat = estimate_pdf(&spread, (-2.0, 2.0)).unwrap();
    let flat_err = pdf_correlation(&flat, &p);
    let infeasible = matches!(flat_err, Err(Error::CriterionUndefined(_)));
    check(
        penalty == 0.0 && (rho - 1.0).abs() < TOL && infeasible,
        format!(
            "penalty {penalty}, identical rho {rho}, flat histogram -> {}",
            match flat_err {
                Err(e) => e.to_string(),
                Ok(v) => format!("rho {v}"),
            }
        ),
    )
}

/// Feature-level set: the first coordinate carries the class with margin ≥ 1,
/// the remaining coordinates are pure noise.
fn labeled_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<FeatureVector>, Vec<Class>) {
    (0..n)
        .map(|i| {
            let class = if i % 2 == 0 { Class::Neg } else { Class::Pos };
            let mut v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
            v[0] = class.sign() * (1.0 + 0.5 * rng.random::<f64>());
            (FeatureVector::new(v, Method::Csp), class)
        })
        .unzip()
}

fn bagging_robustness() -> Outcome {
    const FLIP: f64 = 0.3;
    const DIM: usize = 5;
    const N_TRAIN: usize = 60;
    let (mut ens, mut comp) = (Vec::new(), Vec::new());
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, mut y) = labeled_points(&mut rng, N_TRAIN, DIM);
        let mut order: Vec<usize> = (0..N_TRAIN).collect();
        order.shuffle(&mut rng);
        for &i in order.iter().take((FLIP * N_TRAIN as f64).round() as usize) {
            y[i] = y[i].flipped();
        }
        let (xt, yt) = labeled_points(&mut rng, 2000, DIM);
        let model = fit_bagging(&x, &y, 50, 0.5, seed).unwrap();
        let acc = |f: &dyn Fn(&FeatureVector) -> Class| {
            100.0 * xt.iter().zip(&yt).filter(|(x, &y)| f(x) == y).count() as f64 / xt.len() as f64
        };
        ens.push(acc(&|x| model.predict(x).unwrap()));
        comp.push(mean(
            &model
                .components
                .iter()
                .map(|c| acc(&|x| Class::from_score(c.score(x).unwrap())))
                .collect::<Vec<_>>(),
        ));
    }
    let (e, c) = (mean(&ens), mean(&comp));
    check(
        e >= c && e >= 90.0 && c <= e - 2.0,
        format!("ensemble {e:.2}%, mean component {c:.2}% over 10 seeds (need ensemble >= 90 and gap >= 2)"),
    )
}

fn accuracy_by_fraction(set: &TrialSet, config: &PipelineConfig, fractions: &[f64]) -> Vec<f64> {
    fractions
        .iter()
        .map(|&f| {
            let (train, test) = split(set, &SplitSpec::prefix(f)).unwrap();
            run_static(&train, &test, config).unwrap().test_accuracy.unwrap()
        })
        .collect()
}

fn fraction_trend() -> Outcome {
    let set = generate(&SynthConfig {
        noise_sigma_uv: 10.0,
        seed: 0,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(set.len(), 280);
    let fractions = [0.8, 0.6, 0.3, 0.2, 0.1];
    let csp = accuracy_by_fraction(&set, &PipelineConfig::with_method(Method::Csp), &fractions);
    let mut ar_cfg = PipelineConfig::with_method(Method::Ar);
    ar_cfg.ar.n_channels = 1;
    let ar = accuracy_by_fraction(&set, &ar_cfg, &fractions);
    let spread = csp.iter().cloned().fold(f64::MIN, f64::max) - csp.iter().cloned().fold(f64::MAX, f64::min);
    let drop = ar[0] - ar[4];
    let fmt = |v: &[f64]| v.iter().map(|a| format!("{a:.1}")).collect::<Vec<_>>().join("/");
    check(
        spread < 5.0 && drop >= 5.0,
        format!(
            "csp {} (spread {spread:.1}), ar-1ch {} (drop {drop:.1})",
            fmt(&csp),
            fmt(&ar)
        ),
    )
}

fn planted_band() -> Outcome {
    let mut bands = Vec::new();
    for seed in 0..10 {
        let set = generate(&SynthConfig { seed, ..Default::default() }).unwrap();
        let (train, test) = split(&set, &SplitSpec::prefix(0.1)).unwrap();
        let result = grid_search(&train, &test.without_labels(), &SearchSpace::default_grid(), &PipelineConfig::default())
            .unwrap();
        bands.push(result.winning().band_hz);
    }
    let hits = bands.iter().filter(|&&b| overlaps(b, PLANTED_BAND)).count();
    let listed: Vec<String> = bands.iter().map(|b| format!("{}-{}", b.0, b.1)).collect();
    check(hits >= 9, format!("{hits}/10 winners overlap 12-14 Hz: {}", listed.join(" ")))
}

fn sessions_3_4(report: &EvalReport) -> f64 {
    report.accuracy_on_sessions(&[3, 4]).unwrap()
}

fn adaptive_mean_gain(drift: f64) -> (f64, f64) {
    let spec = SplitSpec::prefix(0.1);
    let config = PipelineConfig::default();
    let (mut adaptive, mut fixed) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let set = generate(&SynthConfig {
            seed,
            session_drift: drift,
            ..Default::default()
        })
        .unwrap();
        let (train, test) = split(&set, &spec).unwrap();
        fixed.push(sessions_3_4(&run_static(&train, &test, &config).unwrap()));
        adaptive.push(sessions_3_4(&run_adaptive(&set, &spec, &config).unwrap()));
    }
    (mean(&adaptive), mean(&fixed))
}

fn adaptive_gain() -> Outcome {
    const DRIFT: f64 = 0.1;
    let (ad, st) = adaptive_mean_gain(DRIFT);
    let (ad0, st0) = adaptive_mean_gain(0.0);
    check(
        ad >= st && ad0 >= st0 - 1.0,
        format!(
            "sessions 3-4 over 20 seeds: drift {DRIFT} adaptive {ad:.2}% vs static {st:.2}%, no drift adaptive {ad0:.2}% vs static {st0:.2}%"
        ),
    )
}

fn small_training_set() -> Outcome {
    let mut config = PipelineConfig::default();
    config.search = Some(SearchSpace::default_grid());
    let accs: Vec<f64> = (0..5)
        .map(|seed| {
            let set = generate(&SynthConfig { seed, ..Default::default() }).unwrap();
            let (train, test) = split(&set, &SplitSpec::prefix(0.1)).unwrap();
            run_static(&train, &test, &config).unwrap().test_accuracy.unwrap()
        })
        .collect();
    let m = mean(&accs);
    let listed: Vec<String> = accs.iter().map(|a| format!("{a:.1}")).collect();
    check(
        m >= 90.0,
        format!("28 training trials, mean test accuracy {m:.2}% over seeds 0-4 ({})", listed.join("/")),
    )
}

fn hide_after(set: &TrialSet, n_train: usize) -> TrialSet {
    let labels: Vec<Option<Class>> = set
        .labels()
        .into_iter()
        .enumerate()
        .map(|(i, l)| if i < n_train { l } else { None })
        .collect();
    set.relabeled(&labels).unwrap()
}

fn same_predictions(a: &EvalReport, b: &EvalReport) -> bool {
    a.predictions.len() == b.predictions.len()
        && a.predictions
            .iter()
            .zip(&b.predictions)
            .all(|(p, q)| p.predicted == q.predicted && p.mean_score.to_bits() == q.mean_score.to_bits())
}

fn determinism_and_leakage() -> Outcome {
    let synth = SynthConfig {
        session_drift: 0.1,
        seed: 4,
        ..Default::default()
    };
    let set = generate(&synth).unwrap();
    let same_data = set == generate(&synth).unwrap();
    let spec = SplitSpec::prefix(0.1);
    let (train, test) = split(&set, &spec).unwrap();
    let mut searched = PipelineConfig::default();
    searched.search = Some(SearchSpace {
        windows_s: vec![(0.5, 4.5)],
        ..Default::default()
    });
    let json = |r: &EvalReport| serde_json::to_string(r).unwrap();

    let s1 = run_static(&train, &test, &searched).unwrap();
    let s2 = run_static(&train, &test, &searched).unwrap();
    let a1 = run_adaptive(&set, &spec, &PipelineConfig::default()).unwrap();
    let a2 = run_adaptive(&set, &spec, &PipelineConfig::default()).unwrap();
    let identical = same_data && json(&s1) == json(&s2) && json(&a1) == json(&a2);

    let s_hidden = run_static(&train, &test.without_labels(), &searched).unwrap();
    let hidden_set = hide_after(&set, spec.train_len(&set).unwrap());
    let a_hidden = run_adaptive(&hidden_set, &spec, &PipelineConfig::default()).unwrap();
    let no_leak = same_predictions(&s1, &s_hidden) && same_predictions(&a1, &a_hidden);
    check(
        identical && no_leak,
        format!(
            "reruns bitwise identical: {identical}; predictions unchanged with hidden test labels: {no_leak} ({} static, {} adaptive)",
            s1.predictions.len(),
            a1.predictions.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 11] = [
        ("1 csp oracle", csp_oracle, Duration::from_secs(1)),
        ("2 ar oracle", ar_oracle, Duration::from_secs(5)),
        ("3 lda oracle", lda_oracle, Duration::from_secs(1)),
        ("4 log variance ratio forced values", feature_forced_values, Duration::from_secs(1)),
        ("5 balance and pdf criteria", selection_criteria, Duration::from_secs(1)),
        ("6 bagging under label noise", bagging_robustness, Duration::from_secs(30)),
        ("7 accuracy versus training fraction", fraction_trend, Duration::from_secs(120)),
        ("8 planted band selection", planted_band, Duration::from_secs(300)),
        ("9 adaptive gain", adaptive_gain, Duration::from_secs(600)),
        ("10 small training set", small_training_set, Duration::from_secs(120)),
        ("11 determinism and leakage", determinism_and_leakage, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.2}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
