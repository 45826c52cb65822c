//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use herdalign::analysis::{
    compare_gradient_norms, h1_curve, noisy_pdf, default_grid_supports, pareto_pdf, ModelFamily,
    SupportInterval, Trend,
};
use herdalign::dataset::{build_grid, generate_dataset, read_records, DatasetConfig, Generator, GridSpec, TemplateId};
use herdalign::elicitation::{alpha_from_p, p_from_alpha, theta_from_reliance, RelianceScore};
use herdalign::market::MarketParams;
use herdalign::metrics::{
    correlation_rho, difference_d, format_reduction, mse_reduction, one_sample_ttest, overall_mse, ClassMeans,
};
use herdalign::solver::{eta_map, herd_distance, merton_path, optimal_p1, optimal_path, solve_eta, HerdKind, SolverConfig};

type Outcome = Result<String, String>;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

// 1. Merton reduction ---------------------------------------------------------

fn merton_reduction() -> Outcome {
    let p = MarketParams::default();
    let cfg = SolverConfig::default();
    let expected_t = 0.03 / (0.2 * 0.17 * 0.17);
    for alpha2 in [0.2, 0.3, 0.05] {
        let sol = solve_eta(&p, 0.2, alpha2, 0.0, &cfg).map_err(|e| e.to_string())?;
        let at_t = optimal_p1(&p, 0.2, alpha2, 0.0, sol.eta, 10.0);
        if (at_t - expected_t).abs() / expected_t > 1e-10 {
            return Err(format!("alpha2 = {alpha2}: P1(T) = {at_t}, expected {expected_t}"));
        }
        let path = optimal_path(&p, 0.2, alpha2, 0.0, &cfg).map_err(|e| e.to_string())?;
        for (i, &t) in p.decision_times.iter().enumerate() {
            let m = 0.03 / (0.2 * 0.17 * 0.17) * (0.04 * (t - 10.0)).exp();
            if (path.amounts[i] - m).abs() / m > 1e-10 {
                return Err(format!("alpha2 = {alpha2}, t = {t}: {} vs Merton {m}", path.amounts[i]));
            }
        }
    }
    Ok(format!("P1(T) = {expected_t:.10} and path equals Merton(0.2) to 1e-10"))
}

// 2. Fixed-point convergence ----------------------------------------------------

fn eta_convergence() -> Outcome {
    let p = MarketParams::default();
    let cfg = SolverConfig::default();
    let spec = GridSpec::default();
    let mut worst_iter = 0;
    let mut worst_res: f64 = 0.0;
    for &a in &spec.alphas {
        for &th in &spec.thetas {
            let sol = solve_eta(&p, a, 0.2, th, &cfg).map_err(|e| format!("alpha {a}, theta {th}: {e}"))?;
            if sol.residual >= 1e-10 || sol.iterations > 100 {
                return Err(format!("alpha {a}, theta {th}: {sol:?}"));
            }
            // the returned value is a fixed point of the map itself
            let again = eta_map(&p, a, 0.2, th, sol.eta, cfg.quadrature_panels);
            if (again - sol.eta).abs() >= 1e-10 {
                return Err(format!("alpha {a}, theta {th}: map moves eta by {}", again - sol.eta));
            }
            worst_iter = worst_iter.max(sol.iterations);
            worst_res = worst_res.max(sol.residual);
        }
        let zero = solve_eta(&p, a, 0.2, 0.0, &cfg).map_err(|e| e.to_string())?;
        if zero.iterations != 1 {
            return Err(format!("theta = 0, alpha {a}: {} iterations", zero.iterations));
        }
    }
    for &th in &spec.thetas {
        let same = solve_eta(&p, 0.2, 0.2, th, &cfg).map_err(|e| e.to_string())?;
        if same.iterations != 1 {
            return Err(format!("alpha1 = alpha2, theta {th}: {} iterations", same.iterations));
        }
    }
    Ok(format!("100 pairs, max iterations {worst_iter}, max residual {worst_res:.2e}"))
}

// 3. H1 ---------------------------------------------------------------------------

fn h1_theory() -> Outcome {
    let p = MarketParams::default();
    let cfg = SolverConfig::default();
    let thetas: Vec<f64> = (1..=10).map(|k| f64::from(k) / 1e8).collect();
    let advisor = merton_path(&p, 0.2);
    for a in [0.09, 0.13, 0.19, 0.26, 0.38] {
        let curve = h1_curve(&p, a, 0.2, &thetas, HerdKind::Absolute, &cfg).map_err(|e| e.to_string())?;
        // recompute each distance directly
        let direct: Vec<f64> = thetas
            .iter()
            .map(|&th| {
                let path = optimal_path(&p, a, 0.2, th, &cfg).unwrap();
                path.amounts
                    .iter()
                    .zip(&advisor.amounts)
                    .map(|(x, y)| 0.5 * (x - y) * (x - y))
                    .sum::<f64>()
            })
            .collect();
        if direct.windows(2).any(|w| w[1] >= w[0]) || curve.trend != Trend::Decreasing {
            return Err(format!("alpha1 {a}: distances {direct:?}"));
        }
        let lib = herd_distance(&optimal_path(&p, a, 0.2, 1e-8, &cfg).unwrap(), &advisor, HerdKind::Absolute).unwrap();
        if !close(lib.value, direct[0], 1e-12) {
            return Err(format!("alpha1 {a}: library distance {} vs direct {}", lib.value, direct[0]));
        }
    }
    Ok("strictly decreasing for all five alpha1".into())
}

// 4. Dataset fidelity -----------------------------------------------------------

fn dataset_fidelity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let g = Generator::new(DatasetConfig::default()).map_err(|e| e.to_string())?;
    let spec = GridSpec::default();
    let paths = ["par1.jsonl", "par2.jsonl", "serial.jsonl"].map(|f| dir.path().join(f));
    let mut counts = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        counts.push(generate_dataset(&g, &spec, TemplateId::P3Sft, path, i < 2).map_err(|e| e.to_string())?);
    }
    if counts.iter().any(|&c| c != 1000) {
        return Err(format!("record counts {counts:?}"));
    }
    let bytes: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
    if bytes[0] != bytes[1] {
        return Err("parallel reruns differ".into());
    }
    if bytes[0] != bytes[2] {
        return Err("serial and parallel output differ".into());
    }
    let text = String::from_utf8(bytes[0].clone()).map_err(|e| e.to_string())?;
    if text.lines().count() != 1000 {
        return Err("line count is not 1000".into());
    }
    let records = read_records(&paths[0]).map_err(|e| e.to_string())?;
    let mut grid_pairs: Vec<(u64, u64)> = build_grid(&spec)
        .unwrap()
        .iter()
        .map(|c| (c.alpha.to_bits(), c.theta.to_bits()))
        .collect();
    let mut rec_pairs: Vec<(u64, u64)> = records.iter().map(|r| (r.meta.alpha.to_bits(), r.meta.theta.to_bits())).collect();
    grid_pairs.sort_unstable();
    rec_pairs.sort_unstable();
    if grid_pairs != rec_pairs {
        return Err("(alpha, theta) multiset differs from the grid".into());
    }
    for (line, rec) in text.lines().zip(&records) {
        let again = g.regenerate(&rec.meta).map_err(|e| e.to_string())?;
        if again.to_line() != line {
            return Err(format!("record alpha {} theta {} does not regenerate", rec.meta.alpha, rec.meta.theta));
        }
    }
    Ok("1000 records; reruns, serial/parallel, and regeneration byte-identical".into())
}

// 5. Density suite ----------------------------------------------------------------

/// Composite Simpson with `n` panels; deliberately independent of the crate's
/// adaptive rule.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn pieces(f: impl Fn(f64) -> f64 + Copy, cuts: &[f64], n: usize) -> f64 {
    cuts.windows(2).map(|w| simpson(f, w[0], w[1], n)).sum()
}

fn suite_supports() -> Vec<SupportInterval> {
    let mut s = default_grid_supports(&MarketParams::default(), 0.2, &SolverConfig::default()).unwrap();
    s.push(SupportInterval::new(2.0, 4.0).unwrap());
    s
}

fn density_suite() -> Outcome {
    let mut worst_mass: f64 = 0.0;
    let mut worst_conv: f64 = 0.0;
    for s in suite_supports() {
        let mass = pieces(|x| pareto_pdf(x, &s), &[s.pmin, s.pmax], 20_000);
        worst_mass = worst_mass.max((mass - 1.0).abs());
        for frac in [0.01, 0.05, 0.1] {
            let eps = frac * s.width();
            let (lo, hi) = (s.pmin - eps, s.pmax + eps);
            if !(lo < s.pmin && s.pmax < hi) {
                return Err(format!("support [{}, {}] not strictly inside [{lo}, {hi}]", s.pmin, s.pmax));
            }
            let f = |x: f64| noisy_pdf(x, &s, eps).unwrap();
            let mut cuts = vec![lo, s.pmin + eps, s.pmax - eps, hi];
            cuts.sort_by(f64::total_cmp);
            let mass = pieces(f, &cuts, 20_000);
            worst_mass = worst_mass.max((mass - 1.0).abs());
            for i in 0..1000 {
                let x = lo + (hi - lo) * (i as f64 + 0.5) / 1000.0;
                let (a, b) = ((x - eps).max(s.pmin), (x + eps).min(s.pmax));
                let brute = if a < b { simpson(|y| pareto_pdf(y, &s), a, b, 2000) / (2.0 * eps) } else { 0.0 };
                worst_conv = worst_conv.max((f(x) - brute).abs());
            }
        }
    }
    if worst_mass > 1e-6 || worst_conv > 1e-6 {
        return Err(format!("mass error {worst_mass:.2e}, convolution error {worst_conv:.2e}"));
    }
    Ok(format!("mass error {worst_mass:.1e}, convolution error {worst_conv:.1e}"))
}

// 6. Gradient-norm inequality ------------------------------------------------------

fn gradient_inequality() -> Outcome {
    let supports = default_grid_supports(&MarketParams::default(), 0.2, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let mut families = Vec::new();
    for a in [1.0, 1.5, 2.0, 2.5, 3.0] {
        families.push(ModelFamily::TruncatedPareto { exponent: a });
    }
    for r in [0.1, 0.5, 1.0, 1.5, 2.0] {
        families.push(ModelFamily::TruncatedExponential { rate: r });
    }
    let mut failures = Vec::new();
    let mut min_gap = f64::INFINITY;
    for fam in &families {
        for frac in [0.01, 0.05, 0.1] {
            let c = compare_gradient_norms(&supports, frac, *fam).map_err(|e| e.to_string())?;
            min_gap = min_gap.min(c.factor_theory - c.factor_user);
            if !c.inequality_holds {
                failures.push(format!(
                    "{} eps {frac}: theory {} <= user {}",
                    c.family, c.factor_theory, c.factor_user
                ));
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("{} cases, smallest margin {min_gap:.3e}", families.len() * 3))
    } else {
        Err(failures.join("; "))
    }
}

// 7. Metrics oracle -------------------------------------------------------------

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn exact_div(r: &BigRational) -> f64 {
    r.to_f64().expect("representable")
}

fn rat_mean(v: &[f64]) -> BigRational {
    let s: BigRational = v.iter().map(|&x| rat(x)).fold(BigRational::zero(), |a, b| a + b);
    s / BigRational::from_integer(BigInt::from(v.len()))
}

/// Two-sided Student-t tail for integer df from the finite series.
fn t_two_sided(t: f64, df: u32) -> f64 {
    let theta = (t.abs() / f64::from(df).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    // A(t | df) = P(|T| < t)
    let a = if df % 2 == 1 {
        let mut sum = 0.0;
        if df > 1 {
            let mut term = c;
            sum = term;
            let mut k = 3;
            while k < df {
                term *= c * c * f64::from(k - 1) / f64::from(k);
                sum += term;
                k += 2;
            }
        }
        2.0 / std::f64::consts::PI * (theta + s * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 2;
        while k < df {
            term *= c * c * f64::from(k - 1) / f64::from(k);
            sum += term;
            k += 2;
        }
        s * sum
    };
    1.0 - a
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let tol = 1e-10;
    for case in 0..100 {
        let classes = rng.random_range(1..=5);
        let t = rng.random_range(2..=10);
        let mut a = ClassMeans::new();
        let mut b = ClassMeans::new();
        for k in 0..classes {
            a.insert((k, k % 3), (0..t).map(|_| rng.random_range(-5.0..20.0)).collect());
            b.insert((k, k % 3), (0..t).map(|_| rng.random_range(-5.0..20.0)).collect());
        }
        let mut sq = BigRational::zero();
        for (k, pa) in &a {
            for (x, y) in pa.iter().zip(&b[k]) {
                let d = rat(*x) - rat(*y);
                sq += &d * &d;
            }
        }
        let exact_mse = exact_div(&(sq / BigRational::from_integer(BigInt::from(classes * t))));
        let got = overall_mse(&a, &b).map_err(|e| e.to_string())?;
        if !close(got, exact_mse, tol) {
            return Err(format!("case {case}: mse {got} vs {exact_mse}"));
        }

        let members = rng.random_range(2..=20);
        let mut ds = Vec::new();
        let mut rhos = Vec::new();
        for _ in 0..members {
            let user: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..15.0)).collect();
            let theory: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..15.0)).collect();
            let exact_d = exact_div(&user.iter().zip(&theory).fold(BigRational::zero(), |s, (u, v)| s + rat(*u) - rat(*v)));
            let d = difference_d(&user, &theory).map_err(|e| e.to_string())?;
            if !close(d, exact_d, tol) {
                return Err(format!("case {case}: d {d} vs {exact_d}"));
            }
            let (mu, mt) = (rat_mean(&user), rat_mean(&theory));
            let (mut sxy, mut sxx, mut syy) = (BigRational::zero(), BigRational::zero(), BigRational::zero());
            for (u, v) in user.iter().zip(&theory) {
                let du = rat(*u) - &mu;
                let dv = rat(*v) - &mt;
                sxy += &du * &dv;
                sxx += &du * &du;
                syy += &dv * &dv;
            }
            let exact_rho = exact_div(&sxy) / exact_div(&(sxx * syy)).sqrt();
            let rho = correlation_rho(&user, &theory).map_err(|e| e.to_string())?;
            if !close(rho, exact_rho, tol) {
                return Err(format!("case {case}: rho {rho} vs {exact_rho}"));
            }
            ds.push(d);
            rhos.push(rho);
        }
        for (values, mu0) in [(&ds, 0.0), (&rhos, 0.85)] {
            let n = values.len();
            let mean = rat_mean(values);
            let ss = values.iter().fold(BigRational::zero(), |s, &x| {
                let d = rat(x) - &mean;
                s + &d * &d
            });
            let var = exact_div(&(ss / BigRational::from_integer(BigInt::from(n - 1))));
            let exact_t = exact_div(&(mean - rat(mu0))) / (var / n as f64).sqrt();
            let r = one_sample_ttest(values, mu0, 0.01).map_err(|e| e.to_string())?;
            let exact_p = t_two_sided(exact_t, (n - 1) as u32);
            if !close(r.t, exact_t, tol) || r.df != (n - 1) as f64 || !close(r.p_value, exact_p, tol) {
                return Err(format!("case {case}: t {} vs {exact_t}, p {} vs {exact_p}", r.t, r.p_value));
            }
            if r.reject != (r.p_value < 0.01) {
                return Err(format!("case {case}: reject flag inconsistent"));
            }
        }
    }
    let r1 = format_reduction(mse_reduction(4.44, 1.72).map_err(|e| e.to_string())?);
    let r2 = format_reduction(mse_reduction(15.66, 6.12).map_err(|e| e.to_string())?);
    if r1 != "-61.26%" || r2 != "-60.92%" {
        return Err(format!("reductions {r1}, {r2}"));
    }
    Ok(format!("100 fixtures within 1e-10; reductions {r1}, {r2}"))
}

// 8. Elicitation ------------------------------------------------------------------

fn elicitation_round_trip() -> Outcome {
    let n = 20_000;
    let mut worst: f64 = 0.0;
    for i in 0..=n {
        let a = 0.01 + 0.99 * f64::from(i) / f64::from(n);
        let back = alpha_from_p(p_from_alpha(a, 20.0, 6.0), 20.0, 6.0).map_err(|e| format!("alpha {a}: {e}"))?;
        worst = worst.max((back - a).abs());
    }
    if worst >= 1e-8 {
        return Err(format!("worst round-trip error {worst:e}"));
    }
    for k in 0..=10u32 {
        let th = theta_from_reliance(RelianceScore::new(k).unwrap());
        let decimal: f64 = format!("{k}e-8").parse().unwrap();
        if th != decimal {
            return Err(format!("k = {k}: {th:e} is not the double nearest {k}e-8"));
        }
    }
    Ok(format!("worst alpha error {worst:.1e}; theta exact for k = 0..10"))
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "Merton reduction", Duration::from_secs(1), merton_reduction),
        (2, "eta convergence on grid", Duration::from_secs(10), eta_convergence),
        (3, "H1 strict decrease", Duration::from_secs(10), h1_theory),
        (4, "dataset fidelity", Duration::MAX, dataset_fidelity),
        (5, "density suite", Duration::from_secs(5), density_suite),
        (6, "gradient-norm inequality", Duration::from_secs(30), gradient_inequality),
        (7, "metrics oracle", Duration::MAX, metrics_oracle),
        (8, "elicitation round-trips", Duration::MAX, elicitation_round_trip),
    ];
    let mut failed = 0;
    for (id, name, limit, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > limit => Err(format!("{msg}; took {took:?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("criterion {id} ({name}): PASS [{:.3}s] {msg}", took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{:.3}s] {msg}", took.as_secs_f64());
            }
        }
    }
    println!(
        "criterion 9 (not reproducible here): model-dependent numbers (pre/post fine-tuning MSE magnitudes, \
         result figures, gradient-norm curves from real training runs, and the human-study t-statistics) \
         need fine-tuning runs and participant data that are not part of this repository; \
         the suites above exercise the same code paths on synthetic inputs"
    );
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
