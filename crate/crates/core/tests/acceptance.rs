//! Acceptance run for the reproduction targets.
//!
//! Built with `harness = false` so every PASS/FAIL line lands in the
//! `cargo test` log. All Monte Carlo seeds are fixed below and were not
//! tuned. The process exits non-zero on any FAIL that is not listed in
//! `KNOWN_RED`.

use std::cell::Cell;
use std::f64::consts::PI;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use stein_sphere::alternatives::{AlternativeModel, AlternativeSpec};
use stein_sphere::asymptotics::{power_approx, sigma2_rotsym, tau_rotsym, AlternativeHarmonics};
use stein_sphere::fields::{field_grid, FieldKind, FieldRequest, SphereGrid};
use stein_sphere::harness::{run_power_study, ExperimentConfig, PowerTable};
use stein_sphere::null_dist::{
    finite_n_mean_h0, finite_n_variance_h0, mc_critical_value, null_draws, uniform_sample, upper_quantile,
    ChiSquareMixture,
};
use stein_sphere::quadrature::GaussLegendre;
use stein_sphere::rng::{replicate_rng, Purpose};
use stein_sphere::specfun::{gamma_kp, gegenbauer, linearization_coeff, ln_m_kp, m_kp, GegenbauerTable};
use stein_sphere::stein_statistic::{
    max_pair, rayleigh, t_n, t_n_bruteforce_p2, CoefficientSequence, GegenbauerGram, DEFAULT_TOL,
};
use stein_sphere::SampleSet;

const SEED: u64 = 1;

/// Checks that fail for a documented reason (see the decisions ledger).
/// 8b-literal: the large-λ limit is `max ‖X_i + X_j‖ = √(2 + 2 max_pair)`,
/// not `max_pair` itself; the two differ by about 1.
/// S1: `1 - Φ(√n (c_n/n - τ)/σ)` ignores the O(1) null part of `T_n`, which
/// at n = 100 is comparable to `nτ` for vMF(0.5); it lands near 35%.
const KNOWN_RED: &[&str] = &["8b-literal", "S1"];

#[derive(Default)]
struct Report {
    failed: Vec<String>,
}

impl Report {
    fn check(&mut self, id: &str, pass: bool, detail: impl AsRef<str>) {
        println!("{} {:<11} {}", if pass { "PASS" } else { "FAIL" }, id, detail.as_ref());
        if !pass {
            self.failed.push(id.to_string());
        }
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn config(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).expect("valid acceptance config")
}

fn rate(t: &PowerTable, alt: &str, n: usize, test: &str) -> f64 {
    let cell = t.get(alt, n, test).unwrap_or_else(|| panic!("no cell {alt} {n} {test}"));
    cell.rejection.unwrap_or_else(|| panic!("cell {alt} {n} {test} failed: {:?}", cell.error))
}

fn fixed_tests_study(p: usize, m: usize, sizes: &str) -> ExperimentConfig {
    let alts = if p == 3 {
        r#"[{"kind":"uniform"},{"kind":"vmf","kappa":0.5},{"kind":"watson","kappa":1},{"kind":"multi_vmf","kappa":30}]"#
    } else {
        r#"[{"kind":"uniform"},{"kind":"vmf","kappa":0.5}]"#
    };
    config(&format!(
        r#"{{"p":{p},"sample_sizes":{sizes},"m_critical":{m},"m_power":{m},"seed":{SEED},
            "tests":[{{"test":"stein","lambda":1}},{{"test":"stein","lambda":4}},{{"test":"dksd","lambda":1}},
                     {{"test":"softmax","lambda":1}},{{"test":"rayleigh"}},{{"test":"bingham"}}],
            "alternatives":{alts}}}"#
    ))
}

fn tuned_study(m: usize, n: usize, test: &str) -> ExperimentConfig {
    config(&format!(
        r#"{{"p":3,"sample_sizes":[{n}],"m_critical":{m},"m_power":{m},"seed":{SEED},
            "tests":[{test}],"alternatives":[{{"kind":"vmf","kappa":0.5}}]}}"#
    ))
}

// 1, 2 and the power approximation ------------------------------------------------

fn sizes_and_powers(r: &mut Report) {
    let labels = ["T_n(1)", "T_n(4)", "dKSD(1)", "softmax(1)", "Rayleigh", "Bingham"];
    let mut p3 = None;
    for p in [2, 3, 5] {
        let start = Instant::now();
        let table = run_power_study(&fixed_tests_study(p, 5000, "[50,100]")).expect("size study");
        eprintln!("size/power study p={p}: {:.1}s", start.elapsed().as_secs_f64());
        let mut rates = Vec::new();
        for n in [50, 100] {
            for l in labels {
                rates.push((rate(&table, "Unif", n, l), n, l));
            }
        }
        let bad: Vec<String> = rates
            .iter()
            .filter(|(x, ..)| !within(*x, 5.0, 1.0))
            .map(|(x, n, l)| format!("{l}@{n}={x:.2}"))
            .collect();
        let (lo, hi) = rates.iter().fold((f64::MAX, f64::MIN), |(lo, hi), (x, ..)| (lo.min(*x), hi.max(*x)));
        r.check(
            &format!("1 p={p}"),
            bad.is_empty(),
            format!(
                "size under uniformity, 12 cells, M=5000: range {lo:.2}..{hi:.2}% (target 5.0 ± 1.0){}",
                if bad.is_empty() { String::new() } else { format!("; out of band: {}", bad.join(", ")) }
            ),
        );
        let v = rate(&table, "vMF(0.5)", 50, "T_n(1)");
        let (id, target) = match p {
            2 => ("2b", 48.6),
            3 => ("2a", 34.6),
            _ => ("2c", 17.8),
        };
        r.check(id, within(v, target, 2.0), format!("p={p} n=50 vMF(0.5) T_n(1): {v:.2}% (target {target} ± 2.0)"));
        if p == 3 {
            let w_b = rate(&table, "W(1)", 50, "Bingham");
            r.check("2d", within(w_b, 37.6, 2.0), format!("p=3 n=50 W(1) Bingham: {w_b:.2}% (target 37.6 ± 2.0)"));
            let w_t = rate(&table, "W(1)", 50, "T_n(4)");
            r.check("2e", within(w_t, 26.9, 2.0), format!("p=3 n=50 W(1) T_n(4): {w_t:.2}% (target 26.9 ± 2.0)"));
            let mv = rate(&table, "MvMF(30)", 50, "T_n(4)");
            r.check("2f", mv >= 99.0, format!("p=3 n=50 MvMF(30) T_n(4): {mv:.2}% (target ≥ 99.0)"));
            p3 = Some(rate(&table, "vMF(0.5)", 100, "T_n(1)"));
        }
    }

    // Asymptotic power approximation against the Monte Carlo power at n = 100.
    let mc_power = p3.expect("p=3 study ran");
    let crit = mc_critical_value("T_n(1)", Some(1.0), |x| t_n(x, 1.0), 100, 3, 5000, 0.05, SEED)
        .expect("critical value")
        .critical_value;
    let model = AlternativeModel::new(AlternativeSpec::Vmf { kappa: 0.5, mu: None }, 3).unwrap();
    let h = AlternativeHarmonics::for_lambda(&model, 1.0).unwrap();
    let (tau, sigma) = (tau_rotsym(&h, 1.0).unwrap(), sigma2_rotsym(&h, 1.0).unwrap().sqrt());
    let approx = 100.0 * power_approx(crit, 100, tau, sigma).unwrap();
    // Diagnostic only: the same formula with the O(1) null mean removed from c_n.
    let null_mean = finite_n_mean_h0(3, 1.0, CoefficientSequence::stein(3, 1.0, DEFAULT_TOL).unwrap().order()).unwrap();
    let shifted = 100.0 * power_approx(crit - null_mean, 100, tau, sigma).unwrap();
    r.check(
        "S1",
        within(approx, mc_power, 10.0) && within(approx, 64.6, 10.0),
        format!(
            "power approximation vMF(0.5) p=3 n=100 λ=1: {approx:.2}% vs MC {mc_power:.2}% and 64.6 (± 10); \
             c_n {crit:.3}, nτ {:.3}, σ {sigma:.4}, E_H0 T_n {null_mean:.3}, with c_n − E_H0 T_n: {shifted:.2}%",
            100.0 * tau
        ),
    );
}

// 3 and oracle dominance ---------------------------------------------------------

fn tuned_tests(r: &mut Report) {
    let start = Instant::now();
    let t = run_power_study(&tuned_study(2000, 50, r#"{"test":"stein_tuned","pilot_size":10000}"#)).unwrap();
    let c = t.get("vMF(0.5)", 50, "T_n(tuned)").unwrap();
    let v = c.rejection.expect("tuned cell");
    r.check(
        "3a",
        within(v, 36.5, 2.5),
        format!("oracle-pilot T_n(λ̃) p=3 n=50 vMF(0.5), M=2000: {v:.2}% at λ̃={:.1} (target 36.5 ± 2.5)", c.lambda.unwrap()),
    );
    let t = run_power_study(&tuned_study(2000, 100, r#"{"test":"stein_kfold","folds":20}"#)).unwrap();
    let c = t.get("vMF(0.5)", 100, "T_n(20-fold)").unwrap();
    let v = c.rejection.expect("k-fold cell");
    r.check(
        "3b",
        within(v, 53.4, 2.5),
        format!(
            "20-fold T_n p=3 n=100 vMF(0.5), M=2000: {v:.2}% (mean λ̂ {:.2}; target 53.4 ± 2.5)",
            c.lambda.unwrap()
        ),
    );
    eprintln!("tuned tests: {:.1}s", start.elapsed().as_secs_f64());

    let start = Instant::now();
    let cfg = config(&format!(
        r#"{{"p":3,"sample_sizes":[50],"m_critical":5000,"m_power":5000,"seed":{SEED},
            "tests":[{{"test":"stein_tuned"}},{{"test":"stein","lambda":1}},{{"test":"stein","lambda":4}}],
            "alternatives":[{{"kind":"vmf","kappa":0.5}},{{"kind":"cauchy_like","kappa":0.25}},
                {{"kind":"watson","kappa":1}},{{"kind":"small_circle","kappa":0.5,"nu":0.5}},
                {{"kind":"proj_normal_mixture","k":5}},{{"kind":"multi_vmf","kappa":30}},
                {{"kind":"vmf_mixture_poles","q":0.3}},{{"kind":"small_circle_mixture","k":3}}]}}"#
    ));
    let t = run_power_study(&cfg).unwrap();
    let mut worst = (f64::MAX, String::new());
    for alt in &cfg.alternatives {
        let a = alt.to_string();
        let tuned = rate(&t, &a, 50, "T_n(tuned)");
        for fixed in ["T_n(1)", "T_n(4)"] {
            let gap = tuned - rate(&t, &a, 50, fixed);
            if gap < worst.0 {
                worst = (gap, format!("{a} vs {fixed}"));
            }
        }
    }
    r.check(
        "S2",
        worst.0 >= -2.0,
        format!("oracle dominance, 8 alternatives p=3 n=50 M=5000: smallest margin {:+.2}pp ({}; need ≥ -2.0)", worst.0, worst.1),
    );
    eprintln!("oracle dominance: {:.1}s", start.elapsed().as_secs_f64());
}

// 4, 5 ----------------------------------------------------------------------------

/// Two-sample Kolmogorov distance.
fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn null_limit_and_moments(r: &mut Report) {
    let start = Instant::now();
    for (p, lambda) in [(2, 1.0), (3, 1.0), (3, 4.0), (5, 1.0)] {
        let n = 200;
        let order = CoefficientSequence::stein(p, lambda, DEFAULT_TOL).unwrap().order();
        let draws = null_draws(|x| t_n(x, lambda), n, p, 20_000, SEED).unwrap();
        let limit = ChiSquareMixture::stein(p, lambda, order).unwrap().sample_many(100_000, SEED);
        let ks = ks_distance(&draws, &limit);
        let (qd, ql) = (upper_quantile(&draws, 0.05).unwrap(), upper_quantile(&limit, 0.05).unwrap());
        let gap = (qd - ql).abs() / ql;
        r.check(
            &format!("4 p={p} λ={lambda}"),
            ks < 0.02 && gap < 0.03,
            format!("n=200, 20000 MC vs 10^5 mixture draws: KS {ks:.4} (< 0.02), q95 gap {:.2}% (< 3%)", 100.0 * gap),
        );

        let m = &draws[..5000];
        let len = m.len() as f64;
        let mean = m.iter().sum::<f64>() / len;
        let var = m.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (len - 1.0);
        let m4 = m.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / len;
        let se_mean = (var / len).sqrt();
        let se_var = ((m4 - var * var) / len).sqrt();
        let want_mean = finite_n_mean_h0(p, lambda, order).unwrap();
        let want_var = finite_n_variance_h0(n, p, lambda, order).unwrap();
        let (zm, zv) = ((mean - want_mean) / se_mean, (var - want_var) / se_var);
        r.check(
            &format!("5 p={p} λ={lambda}"),
            zm.abs() <= 3.0 && zv.abs() <= 3.0,
            format!(
                "n=200, 5000 reps: mean {mean:.5} vs {want_mean:.5} ({zm:+.2} SE), var {var:.5} vs {want_var:.5} ({zv:+.2} SE)"
            ),
        );
    }
    eprintln!("null limit and moments: {:.1}s", start.elapsed().as_secs_f64());
}

// 6 -------------------------------------------------------------------------------

fn vmf1() -> AlternativeModel {
    AlternativeModel::new(AlternativeSpec::Vmf { kappa: 1.0, mu: None }, 3).unwrap()
}

/// `T_n / n` for `runs` samples of size `n` from vMF(1), p = 3, at λ = 1.
fn tn_over_n(n: usize, runs: usize, tag: u64) -> Vec<f64> {
    use rayon::prelude::*;
    let model = vmf1();
    (0..runs)
        .into_par_iter()
        .map(|i| {
            let x = model.sample(n, &mut replicate_rng(SEED, Purpose::Other(tag), i as u64)).unwrap();
            t_n(&x, 1.0).unwrap() / n as f64
        })
        .collect()
}

fn fixed_alternative(r: &mut Report) {
    let start = Instant::now();
    let h = AlternativeHarmonics::for_lambda(&vmf1(), 1.0).unwrap();
    let (tau, sigma2) = (tau_rotsym(&h, 1.0).unwrap(), sigma2_rotsym(&h, 1.0).unwrap());

    let big = tn_over_n(20_000, 1, 6)[0];
    let se = (sigma2 / 20_000.0).sqrt();
    r.check(
        "6a",
        within(big, tau, 3.0 * se),
        format!("T_n/n at n=20000: {big:.6} vs τ {tau:.6} ({:+.2} SE, SE {se:.2e})", (big - tau) / se),
    );

    let n = 5000;
    let runs = tn_over_n(n, 2000, 66);
    let scaled: Vec<f64> = runs.iter().map(|t| (n as f64).sqrt() * (t - tau)).collect();
    let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
    let var = scaled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (scaled.len() - 1) as f64;
    let rel = (var - sigma2) / sigma2;
    r.check(
        "6b",
        rel.abs() <= 0.15,
        format!("Var √n(T_n/n − τ), n=5000, 2000 runs: {var:.5} vs σ² {sigma2:.5} ({:+.1}%, within 15%)", 100.0 * rel),
    );
    eprintln!("fixed alternative: {:.1}s", start.elapsed().as_secs_f64());
}

// 7 -------------------------------------------------------------------------------

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

/// `m_k` by projecting `e^{λu}` onto `C_k` with Gauss–Legendre in the angle.
fn projection_oracle(k: usize, p: usize, lambda: f64) -> f64 {
    let gl = GaussLegendre::shared(200);
    let w = |th: f64| th.sin().powi(p as i32 - 2);
    let num = gl.integrate(0.0, PI, |th| (lambda * th.cos()).exp() * gegenbauer(k, p, th.cos()).unwrap() * w(th));
    let den = gl.integrate(0.0, PI, |th| gegenbauer(k, p, th.cos()).unwrap().powi(2) * w(th));
    num / den
}

fn oracles(r: &mut Report) {
    let worst = Cell::new(0.0f64);
    let res = runner(200).run(
        &(prop::collection::vec(0.0..2.0 * PI, 1..=10), prop::sample::select(vec![0.5, 1.0, 4.0])),
        |(angles, lambda)| {
            let rows: Vec<Vec<f64>> = angles.iter().map(|a| vec![a.cos(), a.sin()]).collect();
            let x = SampleSet::from_rows(&rows).unwrap();
            let (series, brute) = (t_n(&x, lambda).unwrap(), t_n_bruteforce_p2(&x, lambda).unwrap());
            let rel = (series - brute).abs() / brute.abs();
            worst.set(worst.get().max(rel));
            prop_assert!(rel <= 1e-6, "λ={} n={}: {} vs {}", lambda, angles.len(), series, brute);
            Ok(())
        },
    );
    r.check("7a", res.is_ok(), format!("T_n series vs circle quadrature, 200 cases n ≤ 10: max rel err {:.1e} (≤ 1e-6)", worst.get()));

    worst.set(0.0);
    let res = runner(300).run(&(0usize..=10, 2usize..=6, 0.3f64..10.0), |(k, p, lambda)| {
        let (got, want) = (m_kp(k, p, lambda).unwrap(), projection_oracle(k, p, lambda));
        let err = (got - want).abs() / want.abs().max(1e-6);
        worst.set(worst.get().max(err));
        prop_assert!(err <= 1e-8, "k={} p={} λ={}: {} vs {}", k, p, lambda, got, want);
        Ok(())
    });
    r.check("7b", res.is_ok(), format!("m_kp vs Gauss–Legendre projection, k ≤ 10, p ≤ 6: max err {:.1e} (≤ 1e-8)", worst.get()));

    worst.set(0.0);
    let res = runner(300).run(&(0usize..=12, 0usize..=12, 2usize..=7, -1.0f64..=1.0), |(k1, k2, p, u)| {
        let lhs = gegenbauer(k1, p, u).unwrap() * gegenbauer(k2, p, u).unwrap();
        let rhs: f64 = (0..=k1.min(k2))
            .map(|l| linearization_coeff(k1, k2, l, p).unwrap() * gegenbauer(k1 + k2 - 2 * l, p, u).unwrap())
            .sum();
        let scale = gegenbauer(k1, p, 1.0).unwrap() * gegenbauer(k2, p, 1.0).unwrap();
        let err = (lhs - rhs).abs() / scale;
        worst.set(worst.get().max(err));
        prop_assert!(err <= 1e-9, "k1={} k2={} p={} u={}: {} vs {}", k1, k2, p, u, lhs, rhs);
        Ok(())
    });
    r.check("7c", res.is_ok(), format!("linearization C_k1 C_k2 = Σ a_l C_(k1+k2-2l), k ≤ 12, p ≤ 7: max err {:.1e} (≤ 1e-9)", worst.get()));

    // Funk–Hecke: normalised inner products of C_j, C_k under the projected
    // uniform law vanish for j ≠ k and equal γ_k C_k(1) for j = k.
    let gl = GaussLegendre::shared(200);
    let mut worst = 0.0f64;
    for p in 2..=7 {
        let w = |th: f64| th.sin().powi(p as i32 - 2);
        let total = gl.integrate(0.0, PI, w);
        let ip = |j: usize, k: usize| {
            gl.integrate(0.0, PI, |th| gegenbauer(j, p, th.cos()).unwrap() * gegenbauer(k, p, th.cos()).unwrap() * w(th))
                / total
        };
        let ones = GegenbauerTable::new(p, 12).values_at_one();
        for j in 0..=12 {
            let njj = ip(j, j);
            worst = worst.max((njj - gamma_kp(j, p) * ones[j]).abs() / njj);
            for k in 0..j {
                worst = worst.max(ip(j, k).abs() / (njj * ip(k, k)).sqrt());
            }
        }
    }
    r.check("7d", worst <= 1e-10, format!("Funk–Hecke orthogonality and γ_k C_k(1) norms, k ≤ 12, p ≤ 7: max residual {worst:.1e} (≤ 1e-10)"));
}

// 8 -------------------------------------------------------------------------------

fn ranks(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0; v.len()];
    for (rank, i) in idx.into_iter().enumerate() {
        r[i] = rank;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// `λ⁻¹ log((2/n) p_λ(r) e^{λr})` for the closest pair, where
/// `p_λ(r) e^{λr} = F · m_0(λr)` is the Laplace-method value of one pair's
/// kernel, `r = ‖X_i + X_j‖ = √(2 + 2u)` and `F = (λ²(1-u)/2 - λ(p-1)r/2)²`
/// is the squared Laplacian factor at the saddle `t = (X_i + X_j)/r`.
fn large_lambda_correction(p: usize, n: usize, lambda: f64, u: f64) -> (f64, f64) {
    let r = (2.0 + 2.0 * u).sqrt();
    let f = (lambda * lambda * (1.0 - u) / 2.0 - lambda * (p as f64 - 1.0) * r / 2.0).powi(2);
    let log_pref = (2.0 / n as f64).ln() + f.ln() + ln_m_kp(0, p, lambda * r).unwrap() - lambda * r;
    (r, log_pref / lambda)
}

fn limit_regimes(r: &mut Report) {
    let lambda = 1e-3;
    let (mut tn, mut ray) = (Vec::new(), Vec::new());
    for s in 0..20 {
        let x = uniform_sample(20, 3, &mut replicate_rng(SEED, Purpose::Other(8), s));
        tn.push(t_n(&x, lambda).unwrap() / (lambda * lambda));
        ray.push(rayleigh(&x));
    }
    let rho = spearman(&tn, &ray);
    r.check("8a", rho == 1.0, format!("Spearman(λ⁻²T_n at λ=1e-3, Rayleigh) over 20 samples n=20 p=3: {rho}"));

    let lambda = 200.0;
    let (p, n) = (3, 10);
    let coeffs = CoefficientSequence::stein(p, lambda, DEFAULT_TOL).unwrap();
    let (mut worst_lit, mut worst_fix) = (0.0f64, 0.0f64);
    let mut example = String::new();
    for s in 0..10 {
        let x = uniform_sample(n, p, &mut replicate_rng(SEED, Purpose::Other(88), s));
        let off = GegenbauerGram::new(&x, coeffs.order()).unwrap().off_diagonal(coeffs.coeffs()).unwrap();
        let lhs = off.ln() / lambda;
        let u = max_pair(&x).unwrap();
        let (rr, corr) = large_lambda_correction(p, n, lambda, u);
        worst_lit = worst_lit.max((lhs - (u + corr)).abs());
        worst_fix = worst_fix.max((lhs - (rr + corr)).abs());
        if s == 0 {
            example = format!("sample 0: lhs {lhs:.4}, max_pair {u:.4}, √(2+2 max_pair) {rr:.4}, correction {corr:+.4}");
        }
    }
    r.check(
        "8b-literal",
        worst_lit <= 0.05,
        format!("λ⁻¹log(T_n−D_n) at λ=200 vs max_pair + correction, 10 samples n=10 p=3: max gap {worst_lit:.4} (≤ 0.05)"),
    );
    r.check(
        "8b",
        worst_fix <= 0.05,
        format!("λ⁻¹log(T_n−D_n) at λ=200 vs √(2+2 max_pair) + correction: max gap {worst_fix:.4} (≤ 0.05); {example}"),
    );
}

// 9 -------------------------------------------------------------------------------

fn fields(r: &mut Report) {
    let start = Instant::now();
    let grid = SphereGrid::default();
    let lambdas = [0.1, 1.0, 10.0];
    let mu = [0.0, -1.0, 0.0];
    let (i_mu, i_anti) = (grid.nearest(&mu), grid.nearest(&[0.0, 1.0, 0.0]));
    let (mut local, mut legend) = (Vec::new(), Vec::new());
    let (mut local_ok, mut legend_ok) = (true, true);
    for kappa in [0.1, 1.0, 10.0] {
        let mut ratios = Vec::new();
        let mut maxima = Vec::new();
        for &lambda in &lambdas {
            let f = field_grid(&FieldRequest::new(FieldKind::AbsZ, kappa, lambda), &grid).unwrap().values;
            let max = f.iter().cloned().fold(f64::MIN, f64::max);
            local_ok &= f[i_mu] >= max * (1.0 - 1e-12);
            ratios.push(f[i_anti] / f[i_mu]);
            maxima.push(max);
        }
        local_ok &= ratios.windows(2).all(|w| w[1] < w[0]);
        legend_ok &= maxima.windows(2).all(|w| w[1] > w[0]);
        local.push(format!("κ={kappa}: {}", ratios.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" > ")));
        legend.push(format!("κ={kappa}: {}", maxima.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" < ")));
    }
    r.check(
        "9a",
        local_ok,
        format!("181×91 grid: |z| peaks at μ for all (κ, λ); |z(−μ)|/|z(μ)| over λ=0.1,1,10 {}", local.join("; ")),
    );
    r.check("9b", legend_ok, format!("max √n|z| increasing over λ=0.1,1,10 {}", legend.join("; ")));

    let t_ref = [0.0, 0.0, 1.0];
    let crossings: Vec<f64> = lambdas
        .iter()
        .map(|&lambda| {
            let f = field_grid(&FieldRequest::new(FieldKind::RhoNull, 0.0, lambda), &grid).unwrap();
            f.grid
                .points()
                .iter()
                .zip(&f.values)
                .filter(|(_, v)| **v <= 0.0)
                .map(|(s, _)| s.iter().zip(&t_ref).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::MIN, f64::max)
        })
        .collect();
    r.check(
        "9c",
        crossings.windows(2).all(|w| w[1] > w[0]) && crossings[2] > 0.5,
        format!(
            "ρ_null zero crossing sᵀt over λ=0.1,1,10: {} (increasing toward 1)",
            crossings.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" < ")
        ),
    );
    eprintln!("fields: {:.1}s", start.elapsed().as_secs_f64());
}

// 10 ------------------------------------------------------------------------------

/// Reduced-size versions of every Monte Carlo path above, as raw bits.
fn mc_fingerprint() -> Vec<u64> {
    let mut out: Vec<f64> = Vec::new();
    let cells = |t: PowerTable| -> Vec<f64> {
        t.cells.iter().flat_map(|c| [c.rejection.unwrap_or(f64::NAN), c.lambda.unwrap_or(-1.0)]).collect()
    };
    out.extend(cells(run_power_study(&fixed_tests_study(3, 200, "[20]")).unwrap()));
    let mut tuned = tuned_study(150, 30, r#"{"test":"stein_tuned","pilot_size":1000},{"test":"stein_kfold","folds":5}"#);
    tuned.lambda_grid = Some((1..=20).map(|i| i as f64 / 2.0).collect());
    out.extend(cells(run_power_study(&tuned).unwrap()));
    out.extend(null_draws(|x| t_n(x, 4.0), 50, 3, 300, SEED).unwrap());
    out.extend(ChiSquareMixture::stein(3, 1.0, 12).unwrap().sample_many(1000, SEED));
    out.extend(tn_over_n(500, 20, 6));
    let mut req = FieldRequest::new(FieldKind::RhoAlt, 1.0, 1.0);
    req.seed = SEED;
    out.extend(field_grid(&req, &SphereGrid::new(13, 7).unwrap()).unwrap().values);
    out.into_iter().map(f64::to_bits).collect()
}

fn determinism(r: &mut Report) {
    let start = Instant::now();
    let prints: Vec<Vec<u64>> = [1, 4, 8]
        .iter()
        .map(|&w| {
            rayon::ThreadPoolBuilder::new().num_threads(w).build().unwrap().install(mc_fingerprint)
        })
        .collect();
    let same = prints.windows(2).all(|w| w[0] == w[1]);
    r.check(
        "10",
        same,
        format!("{} Monte Carlo outputs bit-identical under 1, 4 and 8 workers", prints[0].len()),
    );
    eprintln!("determinism: {:.1}s", start.elapsed().as_secs_f64());
}

fn main() {
    let start = Instant::now();
    let mut r = Report::default();
    oracles(&mut r);
    limit_regimes(&mut r);
    fields(&mut r);
    determinism(&mut r);
    null_limit_and_moments(&mut r);
    fixed_alternative(&mut r);
    sizes_and_powers(&mut r);
    tuned_tests(&mut r);
    eprintln!("acceptance total: {:.1}s", start.elapsed().as_secs_f64());

    let unexpected: Vec<&String> = r.failed.iter().filter(|id| !KNOWN_RED.contains(&id.as_str())).collect();
    let known = r.failed.len() - unexpected.len();
    println!(
        "acceptance: {} failed ({} documented in KNOWN_RED), unexpected: {:?}",
        r.failed.len(),
        known,
        unexpected
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
