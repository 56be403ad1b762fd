//! Acceptance suite: one PASS/FAIL line per criterion, with the measured
//! quantity next to its tolerance. Runs every criterion even after a failure
//! and exits non-zero if any failed.
//!
//! `cargo test -p volcast --test acceptance` runs everything;
//! `cargo test -p volcast --test acceptance -- 3 7` runs selected criteria.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use volcast::backtest::{self, dm_test, BacktestPlan, DmOptions, RosterEntry};
use volcast::dist::LN_SQRT_2PI;
use volcast::forecast::{ForecastConfig, PredictiveDensity};
use volcast::market_data::{load_series, ReturnSeries, ValueKind};
use volcast::mle::{self, OptimizerConfig};
use volcast::scoring::{self, gaussian_crps, ScoringGrid, WeightKind};
use volcast::smc::{pmmh, run_filter, PmmhConfig, SmcConfig};
use volcast::volmodels::{
    beta_t_score, folded_t_mean, log_density, simulate_path, EgarchParams, Family, ModelSpec, Params, SvParams,
};

const TEG: ModelSpec = ModelSpec::new(Family::Tegarch, true);
const TEG_NL: ModelSpec = ModelSpec::new(Family::Tegarch, false);
const BETA: ModelSpec = ModelSpec::new(Family::BetaTEgarch, true);
const SPE: ModelSpec = ModelSpec::new(Family::Spegarch, true);
const SV: ModelSpec = ModelSpec::new(Family::Sv, true);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Verdict,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        name: "Beta-t score identity",
        budget: Duration::from_secs(1),
        run: score_identity,
    },
    Criterion {
        id: 2,
        name: "wCRPS Gaussian oracle",
        budget: Duration::from_secs(5),
        run: wcrps_oracle,
    },
    Criterion {
        id: 3,
        name: "particle filter vs quadrature",
        budget: Duration::from_secs(30),
        run: pf_vs_quadrature,
    },
    Criterion {
        id: 4,
        name: "PMMH recovery",
        budget: Duration::from_secs(30 * 60),
        run: pmmh_recovery,
    },
    Criterion {
        id: 5,
        name: "MLE recovery",
        budget: Duration::from_secs(10 * 60),
        run: mle_recovery,
    },
    Criterion {
        id: 6,
        name: "Diebold-Mariano size",
        budget: Duration::from_secs(60),
        run: dm_size,
    },
    Criterion {
        id: 7,
        name: "leverage beats no-leverage",
        budget: Duration::from_secs(20 * 60),
        run: directional,
    },
    Criterion {
        id: 8,
        name: "backtest determinism",
        budget: Duration::from_secs(120),
        run: determinism,
    },
    Criterion {
        id: 9,
        name: "martingale and normalization",
        budget: Duration::from_secs(30),
        run: martingale,
    },
];

fn main() -> ExitCode {
    // libtest-style flags (e.g. from `cargo test -- --nocapture`) are ignored;
    // bare numbers select criteria.
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in CRITERIA
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let v = (c.run)();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= c.budget;
        let pass = v.pass && in_budget;
        failed += usize::from(!pass);
        println!(
            "{} criterion {}: {} - {} [{:.1} s, budget {} s{}]",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            v.detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            if in_budget { "" } else { ", over budget" },
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

fn egarch(omega: f64, alpha: f64, gamma: f64, beta: f64, nu: Option<f64>, h1: f64) -> EgarchParams {
    EgarchParams {
        omega,
        alpha,
        gamma,
        beta,
        nu,
        h1,
    }
}

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let dx = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * dx) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + f(b) + inner) * dx / 3.0
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

// 1. The Beta-t-EGARCH score is the derivative of the log-density in h.
fn score_identity() -> Verdict {
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for &nu in &[3.5, 8.0, 25.0] {
        let params = Params::Egarch(egarch(0.0, 0.05, 0.0, 0.9, Some(nu), 0.0));
        for &y in &[-5.0, -1.1, 0.2, 0.9, 3.0] {
            for &h in &[-1.5, -0.5, 0.1, 0.6, 1.4] {
                let ld = |h| log_density(&BETA, &params, h, y).unwrap();
                let fd = (ld(h + step) - ld(h - step)) / (2.0 * step);
                let u = beta_t_score(y * (-h as f64).exp(), nu);
                worst = worst.max(((fd - u) / u).abs());
            }
        }
    }
    verdict(
        worst < 1e-6,
        format!("max relative error {worst:.2e} over 5x5x3 (y, h, nu) grid, tolerance 1e-6"),
    )
}

// 2. Uniform-weight wCRPS of a Gaussian forecast against closed-form CRPS.
fn wcrps_oracle() -> Verdict {
    let grid = ScoringGrid::default();
    let single = scoring::wcrps(&PredictiveDensity::normal(0.0, 1.0), 0.0, WeightKind::Uniform, &grid).value;
    let single_err = (single - 0.23369).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mu = rng.random_range(-2.0..2.0);
        let sigma = rng.random_range(0.3..3.0);
        let y = mu + sigma * rng.sample::<f64, _>(StandardNormal);
        let w = scoring::wcrps(&PredictiveDensity::normal(mu, sigma), y, WeightKind::Uniform, &grid).value;
        worst = worst.max((w - gaussian_crps(mu, sigma, y)).abs());
    }
    verdict(
        single_err <= 1e-3 && worst <= 2e-3,
        format!(
            "N(0,1), y=0 scores {single:.6} (|err| {single_err:.2e}, tolerance 1e-3); \
             max |err| over 100 random (mu, sigma, y) {worst:.2e}, tolerance 2e-3. \
             On the specified grid (K=1000 on [-100, 100], spacing 0.2) the indicator step leaves an \
             O(spacing) error when F(y) != 1/2, and at the median the kink still leaves spacing^2 f(y)/6 \
             plus the K/(K-1) prefactor inflation, so these tolerances are out of reach"
        ),
    )
}

// 3. Bootstrap filter log-likelihood against a dense-grid forward recursion.
fn pf_vs_quadrature() -> Verdict {
    let theta = SvParams {
        mu: -0.021,
        phi: 0.97,
        sigma: 0.15,
        rho: 0.0,
    };
    let ys = simulate_path(&SV.twin(), &Params::Sv(theta), theta.stationary_mean(), 50, 31, None)
        .unwrap()
        .returns;

    // forward recursion on G points spanning +-10 stationary sd
    let (m0, s0) = (theta.stationary_mean(), theta.stationary_sd());
    let g = 2001;
    let (lo, hi) = (m0 - 10.0 * s0, m0 + 10.0 * s0);
    let dh = (hi - lo) / (g - 1) as f64;
    let hs: Vec<f64> = (0..g).map(|i| lo + i as f64 * dh).collect();
    let trap = |i: usize| if i == 0 || i == g - 1 { 0.5 * dh } else { dh };
    let normal =
        |x: f64, m: f64, s: f64| (-0.5 * ((x - m) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let kernel: Vec<f64> = (0..g)
        .flat_map(|j| hs.iter().map(move |&h| (j, h)))
        .map(|(j, h)| normal(hs[j], theta.mu + theta.phi * h, theta.sigma))
        .collect();
    let mut density: Vec<f64> = hs.iter().map(|&h| normal(h, m0, s0)).collect();
    let mut quad = 0.0;
    for &y in &ys {
        let joint: Vec<f64> = hs
            .iter()
            .zip(&density)
            .map(|(&h, &p)| p * (-LN_SQRT_2PI - 0.5 * h - 0.5 * y * y * (-h).exp()).exp())
            .collect();
        let lik: f64 = (0..g).map(|i| joint[i] * trap(i)).sum();
        quad += lik.ln();
        density = (0..g)
            .map(|j| (0..g).map(|i| kernel[j * g + i] * joint[i] * trap(i)).sum::<f64>() / lik)
            .collect();
    }

    let reps: Vec<f64> = (0..30)
        .map(|r| run_filter(&theta, &ys, 10_000, &mut ChaCha8Rng::seed_from_u64(100 + r)).loglik)
        .collect();
    let (_, se_of_mean) = mean_and_se(&reps);
    let sd = se_of_mean * (reps.len() as f64).sqrt();
    let diff = (reps[0] - quad).abs();
    verdict(
        diff <= 3.0 * sd,
        format!(
            "PF loglik {:.4} vs quadrature {quad:.4}: |diff| {diff:.4} <= 3 x {sd:.4} (sd over 30 runs, M=1e4, T=50)",
            reps[0]
        ),
    )
}

// 4. PMMH posterior intervals cover the truth.
fn pmmh_recovery() -> Verdict {
    let phi = 0.97;
    let theta = SvParams {
        mu: -0.7 * (1.0 - phi),
        phi,
        sigma: 0.15,
        rho: -0.6,
    };
    let (mut covered, mut rates, mut misses) = (0, Vec::new(), Vec::new());
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4_000 + seed);
        let h0 = theta.stationary_mean() + theta.stationary_sd() * rng.sample::<f64, _>(StandardNormal);
        let ys = simulate_path(&SV, &Params::Sv(theta), h0, 2000, rng.random(), None)
            .unwrap()
            .returns;
        let smc = SmcConfig { n_particles: 100, seed };
        let cfg = PmmhConfig {
            seed,
            ..PmmhConfig::default()
        };
        let post = pmmh(&ys, true, &smc, &cfg).unwrap();
        let (p_lo, p_hi) = post.interval(|p| p.phi, 0.95);
        let (r_lo, r_hi) = post.interval(|p| p.rho, 0.95);
        let (phi_in, rho_in) = ((p_lo..=p_hi).contains(&theta.phi), (r_lo..=r_hi).contains(&theta.rho));
        covered += usize::from(phi_in && rho_in);
        if !phi_in {
            misses.push(format!("seed {seed} phi [{p_lo:.4}, {p_hi:.4}]"));
        }
        if !rho_in {
            misses.push(format!("seed {seed} rho [{r_lo:.3}, {r_hi:.3}]"));
        }
        rates.push(post.acceptance_rate);
    }
    let (min_rate, max_rate) = rates.iter().fold((1.0_f64, 0.0_f64), |(a, b), &r| (a.min(r), b.max(r)));
    verdict(
        covered >= 18 && min_rate > 0.05 && max_rate < 0.7,
        format!(
            "phi and rho both covered in {covered}/20 seeds (need >= 18); \
             acceptance rates in [{min_rate:.3}, {max_rate:.3}] (need inside (0.05, 0.7)); misses: {}",
            if misses.is_empty() {
                "none".to_owned()
            } else {
                misses.join(", ")
            }
        ),
    )
}

// 5. MLE recovers every parameter within 3 asymptotic standard errors.
fn mle_recovery() -> Verdict {
    let cases = [
        (TEG, egarch(0.0, 0.10, -0.05, 0.95, Some(8.0), 0.0)),
        (BETA, egarch(0.0, 0.05, -0.02, 0.95, Some(8.0), 0.0)),
    ];
    let cfg = OptimizerConfig {
        std_errors: true,
        ..OptimizerConfig::default()
    };
    let mut parts = Vec::new();
    let mut pass = true;
    for (spec, truth) in cases {
        let mut ok = 0;
        for seed in 0..50u64 {
            let ys = simulate_path(&spec, &Params::Egarch(truth), truth.h1, 5000, 5_000 + seed, None)
                .unwrap()
                .returns;
            let Ok(fit) = mle::fit(&spec, &ys, &cfg, seed) else {
                continue;
            };
            let Some(se) = fit.std_errors else { continue };
            let p = fit.params;
            let within = |est: f64, tru: f64, s: f64| (est - tru).abs() <= 3.0 * s;
            let all = within(p.omega, truth.omega, se.omega)
                && within(p.alpha, truth.alpha, se.alpha)
                && within(p.gamma, truth.gamma, se.gamma.unwrap_or(0.0))
                && within(p.beta, truth.beta, se.beta)
                && within(p.nu.unwrap(), truth.nu.unwrap(), se.nu.unwrap_or(0.0))
                && within(p.h1, truth.h1, se.h1);
            ok += usize::from(fit.converged && all);
        }
        pass &= ok >= 45;
        parts.push(format!("{spec}: {ok}/50"));
    }
    verdict(
        pass,
        format!(
            "{} seeds with every parameter within 3 SE (need >= 45 each, T=5000)",
            parts.join(", ")
        ),
    )
}

// 6. Rejection rate of the DM test under equal accuracy.
fn dm_size() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 10_000;
    let reps = 500;
    let mut rejections = 0;
    for _ in 0..reps {
        // squared-error losses of two forecasts with identically distributed errors
        let mut loss = || -> Vec<f64> { (0..n).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).collect() };
        let (a, b) = (loss(), loss());
        let r = dm_test(&a, &b, 1, &DmOptions::default()).unwrap();
        rejections += usize::from(r.p_value < 0.05);
    }
    let rate = rejections as f64 / reps as f64;
    verdict(
        (rate - 0.05).abs() <= 0.02,
        format!("rejection rate {rate:.3} at the 5% level over {reps} replications (need 0.05 +- 0.02)"),
    )
}

// 7. On a leverage DGP, the leverage model forecasts better, especially the left tail.
fn directional() -> Verdict {
    let truth = egarch(0.0, 0.10, -0.10, 0.95, Some(8.0), 0.0);
    let plan = BacktestPlan {
        window: 1000,
        refit_every: 40,
        horizons: vec![1],
        weights: vec![WeightKind::Uniform, WeightKind::TailLeft, WeightKind::TailRight],
        roster: vec![RosterEntry::new(TEG), RosterEntry::new(TEG_NL)],
        workers: 1,
        ..BacktestPlan::default()
    };
    let (mut better, mut left_sharper, mut right_sharper) = (0, 0, 0);
    let mut ratios: [Vec<f64>; 3] = Default::default();
    for seed in 0..20u64 {
        let ys = simulate_path(&TEG, &Params::Egarch(truth), truth.h1, 2000, 7_000 + seed, None)
            .unwrap()
            .returns;
        let start = chrono::NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let series = [ReturnSeries::with_daily_index(format!("sim{seed}"), start, ys).unwrap()];
        let plan = BacktestPlan { seed, ..plan.clone() };
        let report = backtest::run(&plan, &series, &TEG_NL.id(), &DmOptions::default()).unwrap();
        let ratio = |w| report.ratio(&TEG.id(), w, 1).unwrap();
        let (uniform, left, right) = (
            ratio(WeightKind::Uniform),
            ratio(WeightKind::TailLeft),
            ratio(WeightKind::TailRight),
        );
        better += usize::from(uniform < 1.0);
        left_sharper += usize::from(left <= uniform);
        right_sharper += usize::from(right <= uniform);
        for (v, r) in ratios.iter_mut().zip([uniform, left, right]) {
            v.push(r);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    verdict(
        better >= 16 && left_sharper > 10,
        format!(
            "uniform ratio < 1 in {better}/20 seeds (need >= 16); left-tail ratio <= uniform ratio in \
             {left_sharper}/20 (need a majority; right tail: {right_sharper}/20); mean ratios uniform {:.4}, \
             tail_l {:.4}, tail_r {:.4}",
            mean(&ratios[0]),
            mean(&ratios[1]),
            mean(&ratios[2])
        ),
    )
}

// 8. The smoke plan gives byte-identical score files across runs and worker counts.
fn determinism() -> Verdict {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/smoke_sample.csv");
    let series = [load_series(&path, ValueKind::Returns).unwrap().series];
    let plan = BacktestPlan {
        seed: 11,
        window: 200,
        refit_every: 10,
        horizons: vec![1, 2],
        weights: WeightKind::ALL.to_vec(),
        roster: vec![RosterEntry::new(TEG), RosterEntry::new(TEG_NL)],
        forecast: ForecastConfig {
            n_paths: 2000,
            ..ForecastConfig::default()
        },
        ..BacktestPlan::default()
    };
    let csv = |workers: usize| {
        let plan = BacktestPlan {
            workers,
            ..plan.clone()
        };
        let mut out = Vec::new();
        scoring::write_scores(&mut out, &backtest::run_scores(&plan, &series).unwrap()).unwrap();
        out
    };
    let runs = [csv(1), csv(1), csv(16), csv(16)];
    let identical = runs.iter().all(|r| r == &runs[0]);
    let rows = runs[0].iter().filter(|&&b| b == b'\n').count() - 1;
    verdict(
        identical && rows > 0,
        format!(
            "{} ({rows} score rows; two runs each at 1 and 16 workers)",
            if identical { "byte-identical" } else { "outputs differ" }
        ),
    )
}

// 9. Score and news terms are martingale differences; densities integrate to one.
fn martingale() -> Verdict {
    let n = 1_000_000;
    let mut worst_z: f64 = 0.0;
    let mut notes = Vec::new();
    for (i, &nu) in [5.0_f64, 10.0].iter().enumerate() {
        let t = StudentT::new(nu).unwrap();
        let scale = ((nu - 2.0) / nu).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(90 + i as u64);
        let eps: Vec<f64> = (0..n).map(|_| t.sample(&mut rng) * scale).collect();
        let e_abs = folded_t_mean(nu).unwrap();
        let u: Vec<f64> = eps.iter().map(|&e| beta_t_score(e, nu)).collect();
        let news: Vec<f64> = eps.iter().map(|&e| e.abs() - e_abs).collect();
        for (name, xs) in [("u", &u), ("|eps|-E|eps|", &news)] {
            let (m, se) = mean_and_se(xs);
            worst_z = worst_z.max((m / se).abs());
            notes.push(format!("{name}(nu={nu}) {:+.2} SE", m / se));
        }
    }

    let cases = [
        (TEG, Params::Egarch(egarch(0.0, 0.1, 0.0, 0.9, Some(4.0), 0.0)), 0.3),
        (BETA, Params::Egarch(egarch(0.0, 0.1, 0.0, 0.9, Some(6.0), 0.0)), -0.2),
        (SPE, Params::Egarch(egarch(0.0, 0.1, 0.0, 0.9, None, 0.0)), 0.5),
        (
            SV,
            Params::Sv(SvParams {
                mu: 0.0,
                phi: 0.9,
                sigma: 0.2,
                rho: -0.3,
            }),
            1.0,
        ),
    ];
    let worst_mass = cases
        .iter()
        .map(|(spec, params, h)| {
            let mass = simpson(
                |y| log_density(spec, params, *h, y).unwrap().exp(),
                -300.0,
                300.0,
                60_000,
            );
            (mass - 1.0).abs()
        })
        .fold(0.0_f64, f64::max);
    verdict(
        worst_z <= 3.0 && worst_mass <= 1e-6,
        format!(
            "MC means at 1e6 draws: {} (need |z| <= 3); worst |mass - 1| {worst_mass:.1e} over 4 families (need <= 1e-6)",
            notes.join(", ")
        ),
    )
}
