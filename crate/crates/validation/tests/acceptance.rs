//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when
//! any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{kaplan_meier, ks_p_value, ks_statistic, random_illness_death, random_two_state, survival_data};
use msm_core::estimators::{estimate_aj_from, estimate_haj, estimate_lmaj, Estimator, NonMarkovSet};
use msm_core::markov_tests::{CoxData, CoxSpell, TestMethod};
use msm_core::metrics::{CurveKey, Measures};
use msm_core::rng::stream;
use msm_core::simulation::{
    draw_censoring, draw_frailty_time, draw_markov_time, draw_semi_markov_time, fit_weibull, transition_observations,
    weibull_log_likelihood, CensoringSpec, Clock, CohortSpec, FrailtyDist, FrailtyPreset, Setting, Simulator,
    WeibullObservation, WeibullParams,
};
use msm_core::study::{run_study, StudyConfig, StudyResult};
use msm_core::MsmError;
use rand::RngExt;

const LANDMARK: f64 = 245.57;
const LANDMARK_INDEX: usize = 1;
const MIN_AT_RISK: f64 = 50.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, elapsed: Duration, outcome: &Outcome) {
    let status = if outcome.pass { "PASS" } else { "FAIL" };
    println!(
        "criterion {id:>2} [{name}]: {status} ({:.1}s) {}",
        elapsed.as_secs_f64(),
        outcome.detail
    );
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

/// Numeric Hessian of the Weibull log-likelihood in `(log a, log b)` from
/// central differences of the analytic gradient.
fn weibull_hessian(obs: &[WeibullObservation], x: [f64; 2]) -> [[f64; 2]; 2] {
    let h = 1e-5;
    let mut hess = [[0.0; 2]; 2];
    for k in 0..2 {
        let mut up = x;
        let mut down = x;
        up[k] += h;
        down[k] -= h;
        let gu = weibull_log_likelihood(obs, up[0], up[1]).1;
        let gd = weibull_log_likelihood(obs, down[0], down[1]).1;
        for j in 0..2 {
            hess[j][k] = (gu[j] - gd[j]) / (2.0 * h);
        }
    }
    hess
}

fn criterion_1() -> Outcome {
    let sim = Simulator::with_defaults(Setting::Markov).unwrap();
    let cohort = sim.simulate_cohort(&CohortSpec::new(5000, 1)).unwrap();
    let table = WeibullParams::markov();
    let mut pass = true;
    let mut parts = Vec::new();
    for (tr, truth) in table.iter() {
        let obs = transition_observations(&cohort, tr, Clock::Forward);
        let fit = match fit_weibull(&obs, None) {
            Ok(f) => f,
            Err(e) => {
                pass = false;
                parts.push(format!("{tr}: fit failed ({e})"));
                continue;
            }
        };
        let ra = fit.params.scale / truth.scale - 1.0;
        let rb = fit.params.shape / truth.shape - 1.0;
        let ok = ra.abs() <= 0.10 && rb.abs() <= 0.10;
        pass &= ok;
        // standard errors from the observed information on the log scale
        let x = [fit.params.scale.ln(), fit.params.shape.ln()];
        let hs = weibull_hessian(&obs, x);
        let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
        let se_la = (-hs[1][1] / det).sqrt();
        let se_lb = (-hs[0][0] / det).sqrt();
        let za = (x[0] - truth.scale.ln()) / se_la;
        let zb = (x[1] - truth.shape.ln()) / se_lb;
        parts.push(format!(
            "{tr}: a {:.5} ({:+.1}%, z {za:+.2}) b {:.4} ({:+.1}%, z {zb:+.2}){}",
            fit.params.scale,
            100.0 * ra,
            fit.params.shape,
            100.0 * rb,
            if ok { "" } else { " OUT" }
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_2() -> Outcome {
    let mut worst_p: f64 = 0.0;
    let mut worst_v: f64 = 0.0;
    let mut rng = stream(2, 0);
    for k in 0..200 {
        let n = rng.random_range(1..=200usize);
        let cohort = random_two_state(1000 + k, n);
        let data = survival_data(&cohort);
        let curve = estimate_aj_from(&cohort, 0.0, 1);
        for t in (0..=62).map(|i| f64::from(i) * 0.5) {
            let (km, gw) = kaplan_meier(&data, t);
            worst_p = worst_p.max((curve.value_at(t).unwrap()[0] - km).abs());
            worst_v = worst_v.max((curve.variance_at(t).unwrap()[0] - gw).abs());
        }
    }
    Outcome {
        pass: worst_p <= 1e-10 && worst_v <= 1e-10,
        detail: format!("max |P11 - KM| {worst_p:.2e}, max |var - Greenwood| {worst_v:.2e}"),
    }
}

fn criterion_3() -> Outcome {
    let mut mismatches = 0;
    let mut compared = 0;
    for k in 0..100 {
        let cohort = random_illness_death(3000 + k, 20 + (k as usize * 13) % 200, k % 2 == 0);
        let all = NonMarkovSet::all(cohort.state_space());
        for (s, h) in [(0.0, 1), (5.0, 1), (5.0, 2), (15.0, 2)] {
            compared += 1;
            let aj = estimate_aj_from(&cohort, s, h);
            if estimate_haj(&cohort, s, h, &NonMarkovSet::empty()).ok() != Some(aj) {
                mismatches += 1;
            }
            match (estimate_lmaj(&cohort, s, h), estimate_haj(&cohort, s, h, &all)) {
                (Ok(a), Ok(b)) if a == b => {}
                (Err(MsmError::EmptyLandmark { .. }), Err(MsmError::EmptyLandmark { .. })) => {}
                _ => mismatches += 1,
            }
        }
    }
    let markov = Simulator::with_defaults(Setting::Markov).unwrap();
    let unit = Simulator::with_defaults(Setting::Frailty {
        frailty: FrailtyDist::Fixed(1.0),
    })
    .unwrap();
    let mut path_mismatches = 0;
    for k in 0..20 {
        let spec = CohortSpec::new(488, 30 + k);
        if markov.simulate_cohort(&spec).unwrap().paths() != unit.simulate_cohort(&spec).unwrap().paths() {
            path_mismatches += 1;
        }
    }
    Outcome {
        pass: mismatches == 0 && path_mismatches == 0,
        detail: format!(
            "{mismatches} estimator mismatches in {compared} cases x 2; {path_mismatches}/20 frailty(W=1) cohorts differ from Markov"
        ),
    }
}

fn criterion_4(study: &StudyResult) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (method, lo, hi) in [(TestMethod::Cox, 0.03, 0.07), (TestMethod::LogRank, 0.02, 0.08)] {
        let rates: Vec<String> = WeibullParams::markov()
            .iter()
            .map(|(tr, _)| {
                let r = study.rejection_rate(method, tr);
                let ok = (lo..=hi).contains(&r);
                pass &= ok;
                format!("{tr} {r:.3}{}", if ok { "" } else { " OUT" })
            })
            .collect();
        parts.push(format!("{method} [{lo}, {hi}]: {}", rates.join(", ")));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

/// Measures of one estimator on the 1 -> 2 curve from the landmark time.
fn curve(study: &StudyResult, estimator: Estimator) -> Vec<Option<Measures>> {
    study
        .evaluation
        .measures(CurveKey {
            estimator,
            from: 1,
            to: 2,
            s_index: LANDMARK_INDEX,
        })
        .expect("estimator evaluated")
}

fn well_populated(study: &StudyResult) -> Vec<bool> {
    study.well_populated(LANDMARK_INDEX, MIN_AT_RISK, &[1, 2])
}

fn max_abs_bias(m: &[Option<Measures>], mask: Option<&[bool]>) -> f64 {
    m.iter()
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|w| w[*i]))
        .filter_map(|(_, x)| x.map(|x| x.bias.abs()))
        .fold(0.0, f64::max)
}

struct CoverageSummary {
    points: usize,
    in_band: usize,
    below: usize,
    mean: f64,
    min: f64,
}

fn coverage_summary(m: &[Option<Measures>], mask: &[bool], band: (f64, f64), below: f64) -> CoverageSummary {
    let cov: Vec<f64> = m
        .iter()
        .zip(mask)
        .filter(|(_, &w)| w)
        .filter_map(|(x, _)| x.map(|x| x.coverage))
        .collect();
    CoverageSummary {
        points: cov.len(),
        in_band: cov.iter().filter(|&&c| (band.0..=band.1).contains(&c)).count(),
        below: cov.iter().filter(|&&c| c < below).count(),
        mean: cov.iter().sum::<f64>() / cov.len().max(1) as f64,
        min: cov.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

fn criterion_5(study: &StudyResult) -> Outcome {
    let aj = max_abs_bias(&curve(study, Estimator::Aj), None);
    let lmaj = max_abs_bias(&curve(study, Estimator::Lmaj), None);
    let pass = aj > 0.05 && (aj - 0.130).abs() <= 0.03 && lmaj < 0.01;
    Outcome {
        pass,
        detail: format!("max|bias| AJ {aj:.4} (need > 0.05 and within 0.130 +/- 0.03), LMAJ {lmaj:.4} (need < 0.01)"),
    }
}

fn criterion_6(study: &StudyResult) -> Outcome {
    let mask = well_populated(study);
    let aj = coverage_summary(&curve(study, Estimator::Aj), &mask, (0.92, 0.975), 0.10);
    let lmaj = coverage_summary(&curve(study, Estimator::Lmaj), &mask, (0.92, 0.975), 0.10);
    let pass = aj.points > 0 && 2 * aj.below > aj.points && 2 * lmaj.in_band > lmaj.points;
    Outcome {
        pass,
        detail: format!(
            "{} well-populated points; AJ coverage < 0.10 at {} (mean {:.3}); LMAJ in [0.92, 0.975] at {} (mean {:.3}, min {:.3})",
            aj.points, aj.below, aj.mean, lmaj.in_band, lmaj.mean, lmaj.min
        ),
    }
}

fn criterion_7(study: &StudyResult) -> Outcome {
    let mask = well_populated(study);
    let mut pass = mask.iter().any(|&w| w);
    let mut parts = Vec::new();
    for e in Estimator::ALL {
        let m = curve(study, e);
        let bias = max_abs_bias(&m, Some(&mask));
        let cov = coverage_summary(&m, &mask, (0.92, 0.975), 0.0);
        let ok = bias < 0.01 && 2 * cov.in_band > cov.points;
        pass &= ok;
        parts.push(format!(
            "{e}: max|bias| {bias:.4}, coverage in band {}/{} (mean {:.3}, min {:.3}){}",
            cov.in_band,
            cov.points,
            cov.mean,
            cov.min,
            if ok { "" } else { " OUT" }
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_8(study: &StudyResult) -> Outcome {
    let mask = well_populated(study);
    let aj = curve(study, Estimator::Aj);
    let lmaj = curve(study, Estimator::Lmaj);
    let mut pass = true;
    let mut parts = Vec::new();
    for e in [Estimator::HajLogRank, Estimator::HajCox] {
        let haj = curve(study, e);
        let mut points = 0;
        let mut between = 0;
        for i in (0..mask.len()).filter(|&i| mask[i]) {
            if let (Some(a), Some(h), Some(l)) = (aj[i], haj[i], lmaj[i]) {
                points += 1;
                if a.variance <= h.variance && h.variance <= l.variance {
                    between += 1;
                }
            }
        }
        let frac = between as f64 / points.max(1) as f64;
        pass &= points > 0 && frac >= 0.8;
        parts.push(format!("{e}: {between}/{points} ({:.1}%)", 100.0 * frac));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_9() -> Outcome {
    let n = 100_000;
    let mut failures = Vec::new();
    let mut tests = 0;
    let mut min_p: f64 = 1.0;
    let mut check = |name: String, mut sample: Vec<f64>, cdf: &dyn Fn(f64) -> f64, keep: &dyn Fn(f64) -> bool| {
        let d = ks_statistic(&mut sample, cdf, keep);
        let p = ks_p_value(d, sample.len());
        tests += 1;
        min_p = min_p.min(p);
        if p <= 0.01 {
            failures.push(format!("{name} (p {p:.4})"));
        }
    };
    let markov = WeibullParams::markov();
    let semi = WeibullParams::semi_markov();
    for (k, (tr, w)) in markov.iter().enumerate() {
        for t0 in [0.0, 300.0] {
            let mut rng = stream(9, 10 * k as u64 + t0 as u64);
            let sample = (0..n).map(|_| draw_markov_time(&markov, tr, t0, &mut rng)).collect();
            let cdf = |t: f64| 1.0 - (-(w.cumulative_hazard(t) - w.cumulative_hazard(t0))).exp();
            check(format!("markov {tr} t0={t0}"), sample, &cdf, &|_| true);
        }
        let mult = if k % 2 == 0 { 0.5 } else { 2.0 };
        let t0 = 100.0;
        let mut rng = stream(9, 100 + k as u64);
        let sample = (0..n)
            .map(|_| draw_frailty_time(&markov, tr, t0, mult, &mut rng))
            .collect();
        let cdf = |t: f64| 1.0 - (-mult * (w.cumulative_hazard(t) - w.cumulative_hazard(t0))).exp();
        check(format!("frailty {tr} w={mult}"), sample, &cdf, &|_| true);
    }
    for (k, (tr, w)) in semi.iter().enumerate() {
        let t0 = 250.0;
        let mut rng = stream(9, 200 + k as u64);
        let sample = (0..n).map(|_| draw_semi_markov_time(&semi, tr, t0, &mut rng)).collect();
        let cdf = |t: f64| 1.0 - w.survival(t - t0);
        check(format!("semi-markov {tr}"), sample, &cdf, &|_| true);
    }
    let censoring = CensoringSpec::default();
    let mut rng = stream(9, 300);
    let sample = (0..n).map(|_| draw_censoring(&censoring, &mut rng)).collect();
    check("censoring".into(), sample, &|c| censoring.cdf(c), &|c| {
        c < censoring.horizon
    });

    let mut var_parts = Vec::new();
    let mut var_ok = true;
    for (preset, target) in [
        (FrailtyPreset::A, 0.5),
        (FrailtyPreset::B, 1.0),
        (FrailtyPreset::C, 2.0),
    ] {
        let dist = preset.distribution();
        let mut rng = stream(9, 400 + preset.label() as u64);
        let m = 4_000_000;
        let draws: Vec<f64> = (0..m).map(|_| dist.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / m as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        let ok = (var / target - 1.0).abs() <= 0.01;
        var_ok &= ok;
        var_parts.push(format!("{} {var:.4}", preset.label()));
    }
    Outcome {
        pass: failures.is_empty() && var_ok,
        detail: format!(
            "{tests} KS tests at 1e5 draws, min p {min_p:.4}{}; Var(W): {}",
            if failures.is_empty() {
                String::new()
            } else {
                format!(", rejected: {}", failures.join(", "))
            },
            var_parts.join(", ")
        ),
    }
}

fn criterion_10() -> Outcome {
    const TOL: f64 = 1e-6;
    let mut worst_cox: f64 = 0.0;
    let mut worst_weibull: f64 = 0.0;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
    for k in 0..100u64 {
        let mut rng = stream(10, k);
        let spells: Vec<CoxSpell> = (0..rng.random_range(5..80))
            .map(|_| {
                let entry: f64 = if rng.random_bool(0.4) {
                    rng.random_range(0.0..5.0)
                } else {
                    0.0
                };
                CoxSpell {
                    entry,
                    exit: entry + rng.random_range(0.05..10.0),
                    covariate: rng.random_range(-2.0..4.0),
                    event: rng.random_bool(0.6),
                }
            })
            .collect();
        let data = CoxData::new(&spells);
        let theta: f64 = rng.random_range(-1.5..1.5);
        let h = 1e-5;
        let (_, score, info) = data.evaluate(theta);
        let fd_score = (data.evaluate(theta + h).0 - data.evaluate(theta - h).0) / (2.0 * h);
        let fd_info = -(data.evaluate(theta + h).1 - data.evaluate(theta - h).1) / (2.0 * h);
        worst_cox = worst_cox.max(rel(score, fd_score)).max(rel(info, fd_info));

        let obs: Vec<WeibullObservation> = (0..rng.random_range(5..200))
            .map(|_| {
                let entry: f64 = if rng.random_bool(0.3) {
                    rng.random_range(0.0..50.0)
                } else {
                    0.0
                };
                WeibullObservation {
                    entry,
                    time: entry + rng.random_range(0.5..500.0),
                    event: rng.random_bool(0.5),
                }
            })
            .collect();
        let x = [rng.random_range(-8.0..-2.0), rng.random_range(-0.7..0.5)];
        let (_, g) = weibull_log_likelihood(&obs, x[0], x[1]);
        for j in 0..2 {
            let mut up = x;
            let mut down = x;
            up[j] += h;
            down[j] -= h;
            let fd = (weibull_log_likelihood(&obs, up[0], up[1]).0 - weibull_log_likelihood(&obs, down[0], down[1]).0)
                / (2.0 * h);
            worst_weibull = worst_weibull.max(rel(g[j], fd));
        }
    }
    Outcome {
        pass: worst_cox <= TOL && worst_weibull <= TOL,
        detail: format!(
            "max relative error vs central differences (h = 1e-5, tolerance {TOL:.0e}): Cox {worst_cox:.2e}, Weibull {worst_weibull:.2e}"
        ),
    }
}

fn study(label: &str, seed: u64) -> (StudyResult, Duration) {
    timed(|| {
        let sim = Simulator::with_defaults(Setting::from_label(label).unwrap()).unwrap();
        let config = StudyConfig::new(label, sim, seed);
        assert_eq!(config.start_times[LANDMARK_INDEX], LANDMARK);
        run_study(&config).unwrap_or_else(|e| panic!("setting {label} study failed: {e}"))
    })
}

fn main() -> ExitCode {
    let mut failed = Vec::new();
    let mut record = |id: u32, name: &str, elapsed: Duration, outcome: Outcome| {
        report(id, name, elapsed, &outcome);
        if !outcome.pass {
            failed.push(id);
        }
    };

    let (o, d) = timed(criterion_1);
    let under_a_minute = d < Duration::from_secs(60);
    let o = Outcome {
        pass: o.pass && under_a_minute,
        detail: if under_a_minute {
            o.detail
        } else {
            format!("{} (over 1 min)", o.detail)
        },
    };
    record(1, "Weibull round trip", d, o);
    let (o, d) = timed(criterion_2);
    record(2, "Kaplan-Meier equivalence", d, o);
    let (o, d) = timed(criterion_3);
    record(3, "definitional reductions", d, o);
    let (o, d) = timed(criterion_9);
    record(9, "sampler distributions", d, o);
    let (o, d) = timed(criterion_10);
    record(10, "gradient checks", d, o);

    let (s1, d1) = study("1", 101);
    println!("setting 1 study: 500 replicates in {:.1}s", d1.as_secs_f64());
    record(4, "test calibration", d1, criterion_4(&s1));
    record(7, "setting-1 neutrality", Duration::ZERO, criterion_7(&s1));
    drop(s1);

    let (s3, d3) = study("3c", 303);
    println!("setting 3c study: 500 replicates in {:.1}s", d3.as_secs_f64());
    record(5, "bias ordering 3c", d3, criterion_5(&s3));
    record(6, "AJ coverage failure 3c", Duration::ZERO, criterion_6(&s3));
    drop(s3);

    let (s4, d4) = study("4c", 404);
    println!("setting 4c study: 500 replicates in {:.1}s", d4.as_secs_f64());
    record(8, "variance ordering 4c", d4, criterion_8(&s4));

    failed.sort();
    if failed.is_empty() {
        println!("acceptance: all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        let ids: Vec<String> = failed.iter().map(u32::to_string).collect();
        println!("acceptance: {} of 10 criteria failed: {}", failed.len(), ids.join(", "));
        ExitCode::FAILURE
    }
}
