//! Acceptance criteria. Each criterion prints one PASS or FAIL line; the
//! process exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use pa_core::adversary::AttackStrategy;
use pa_core::binning::{asymptotic_key_rate, BinningParams, DEFAULT_CAP_BITS};
use pa_core::finite::{exact_leakage_audit, finite_key_rate, ChallengePolicy, Decision, DEFAULT_AUDIT_BUDGET};
use pa_core::info::{fano_guess_bound, JointDist, JointSource, RateSlack, TypicalityParams};
use pa_core::make_field;
use pa_core::sim::{
    codebook_seed, estimate_completeness, estimate_leakage, estimate_privacy, estimate_soundness, replay_experiment,
    write_jsonl, BinningSetting, FiniteSetting, Setting,
};
use pa_core::streams::{stream, Purpose};
use rand::Rng;

const SEED: u64 = 0x5EED_2026;

struct Outcome {
    pass: bool,
    detail: String,
}

fn within_sigmas(events: u64, trials: u64, p: f64, sigmas: f64) -> bool {
    let phat = events as f64 / trials as f64;
    (phat - p).abs() <= sigmas * (p * (1.0 - p) / trials as f64).sqrt()
}

fn finite_setting(q: u64, k: usize) -> Setting {
    Setting::Finite(FiniteSetting { field: make_field(q, 1).unwrap(), k })
}

fn c1_completeness() -> Outcome {
    let est = estimate_completeness(&finite_setting(101, 5), 100_000, SEED).unwrap();
    let consistent = est.records.iter().all(|r| (r.decision == Decision::Accept) == (r.s == r.s_hat));
    Outcome {
        pass: est.report.events == 0 && consistent,
        detail: format!("GF(101) K=5: {} rejections in {} honest sessions", est.report.events, est.report.trials),
    }
}

fn c2_soundness() -> Outcome {
    let setting = finite_setting(101, 5);
    let field = make_field(101, 1).unwrap();
    let strategies = [
        ("uniform", AttackStrategy::FiniteUniformGuess),
        ("constant", AttackStrategy::FiniteConstant { guess: field.element(42).unwrap() }),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, strat) in strategies {
        let r = estimate_soundness(&setting, &strat, 100_000, SEED).unwrap().report;
        let ok = within_sigmas(r.events, r.trials, 1.0 / 101.0, 4.0);
        pass &= ok;
        parts.push(format!("{name} {:.6} [{:.6}, {:.6}]", r.point, r.ci_low, r.ci_high));
    }
    Outcome { pass, detail: format!("target {:.6}, 4 sigma; {}", 1.0 / 101.0, parts.join("; ")) }
}

fn c3_audit() -> Outcome {
    let a = exact_leakage_audit(5, 1, 2, DEFAULT_AUDIT_BUDGET).unwrap();
    let zero = a.i_sm.exact.is_some_and(|r| r.num == 0);
    let fifth = |b: &pa_core::finite::AttackBound| b.exact.num * 5 == b.exact.den;
    let pass = zero && a.s_m_independent && fifth(&a.attack_success_min) && fifth(&a.attack_success_max);
    Outcome {
        pass,
        detail: format!(
            "GF(5) K=2: {} configurations, I(S;M) = {}/{}, attack success over all g in [{}/{}, {}/{}]",
            a.configurations,
            a.i_sm.exact.map_or(0, |r| r.num),
            a.i_sm.exact.map_or(0, |r| r.den),
            a.attack_success_min.exact.num,
            a.attack_success_min.exact.den,
            a.attack_success_max.exact.num,
            a.attack_success_max.exact.den
        ),
    }
}

fn c4_privacy() -> Outcome {
    let est = estimate_privacy(&finite_setting(101, 5), 10_000, SEED).unwrap();
    let all_equal_s = est.records.iter().all(|r| r.s_hat == r.s);
    Outcome {
        pass: est.report.events == 0 && all_equal_s && est.records.len() == 50_000,
        detail: format!("GF(101) K=5: {} violations in {} sessions", est.report.events, est.report.trials),
    }
}

/// `K/2 + log2 C(2^L, K) / (2L)` for `q = 2`, summing logs of the falling factorial.
fn rate_oracle(degree: u32, k: u64) -> f64 {
    let n = 2f64.powi(degree as i32);
    let log_binom: f64 = (0..k).map(|i| (n - i as f64).log2() - ((i + 1) as f64).log2()).sum();
    k as f64 / 2.0 + log_binom / (2.0 * degree as f64)
}

fn sig5(a: f64, b: f64) -> bool {
    (a - b).abs() <= 5e-6 * b.abs()
}

fn c5_rates() -> Outcome {
    let r = finite_key_rate(2, 3, 2).unwrap().rate;
    let closed = 1.0 + 28f64.log2() / 6.0;
    let mut pass = sig5(r, closed);
    let ls = [8u32, 16, 32, 64];
    let rates: Vec<f64> = ls.iter().map(|&l| finite_key_rate(2, l, 3).unwrap().rate).collect();
    pass &= ls.iter().zip(&rates).all(|(&l, &r)| sig5(r, rate_oracle(l, 3)));
    pass &= rates.windows(2).all(|w| w[0] < w[1]);
    let gap = 3.0 - rates[3];
    pass &= gap < 0.05;
    Outcome {
        pass,
        detail: format!("R(2,3,2) = {r:.6} vs {closed:.6}; q=2 K=3 L=8..64 rates {rates:.5?}, gap at L=64 {gap:.5}"),
    }
}

fn c6_replay() -> Outcome {
    let field = make_field(101, 1).unwrap();
    let cached = replay_experiment(&field, 5, ChallengePolicy::Cached, 1_000, 10, SEED).unwrap();
    let cached_ok = within_sigmas(cached.successes, cached.sessions, 1.0 / 101.0, 4.0);
    let fresh = replay_experiment(&field, 5, ChallengePolicy::UnsafeFresh, 1_000, 10, SEED).unwrap();
    let settled = fresh.settled_within(5);
    Outcome {
        pass: cached_ok && settled >= 990,
        detail: format!(
            "cached: {} / {} successes (target {:.6}); fresh: {settled} / 1000 experiments succeed in every session from one at or before session 5",
            cached.successes,
            cached.sessions,
            1.0 / 101.0
        ),
    }
}

fn c7_lemma() -> Outcome {
    let mut rng = stream(SEED, Purpose::Training, 7);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for _ in 0..100 {
        let w: Vec<f64> = (0..6).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let total: f64 = w.iter().sum();
        // rows Q, columns U
        let joint = JointDist::new(3, 2, w.iter().map(|x| x / total).collect()).unwrap();
        let h_u = -joint.col_marginal().iter().filter(|&&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>();
        let bound = fano_guess_bound(joint.mutual_information(), 1.0, h_u.min(1.0)).unwrap();
        for g in 0..8u32 {
            let hit: f64 = (0..3).map(|q| joint.get(q, ((g >> q) & 1) as usize)).sum();
            if hit > bound {
                violations += 1;
            }
            worst = worst.max(hit - bound);
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("800 guessers over 100 sources: {violations} above the bound, largest excess {worst:.4}"),
    }
}

fn nonincreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn c8_binning() -> Outcome {
    let joint = JointSource::bsc(0.5, 0.1).unwrap();
    let typ = TypicalityParams::new(0.2, 0.1).unwrap();
    let trials = 2_000;
    let (mut pe1, mut pp, mut leak) = (Vec::new(), Vec::new(), Vec::new());
    let mut b_ok = true;
    let mut b_parts = Vec::new();
    for n in [8usize, 16, 24] {
        let params = BinningParams::new(joint.clone(), n, typ, RateSlack::Zero).unwrap();
        let bs = BinningSetting::new(params, 3, codebook_seed(SEED, n), DEFAULT_CAP_BITS).unwrap();
        let bin_size = bs.codebook.bin_size();
        let samples = trials.max(8 * bs.codebook.num_sequences());
        let l = estimate_leakage(&bs, samples, SEED).unwrap();
        let setting = Setting::Binning(bs);
        pe1.push(estimate_completeness(&setting, trials, SEED).unwrap().report.point);
        pp.push(estimate_privacy(&setting, trials, SEED).unwrap().report.point);
        let s = estimate_soundness(&setting, &AttackStrategy::BinUniformGuess, trials, SEED).unwrap().report;
        let ok = within_sigmas(s.events, s.trials, 1.0 / bin_size as f64, 4.0);
        b_ok &= ok;
        b_parts.push(format!("{:.5}~{:.5}", s.point, 1.0 / bin_size as f64));
        leak.push(l.mi_per_symbol);
    }
    let a = nonincreasing(&pe1);
    let c = nonincreasing(&pp);
    let d = leak.windows(2).all(|w| w[1] < w[0]);
    let tag = |ok: bool| if ok { "ok" } else { "violated" };
    Outcome {
        pass: a && b_ok && c && d,
        detail: format!(
            "n = 8, 16, 24: (a) P_e1 {pe1:.4?} {}; (b) guess {} {}; (c) privacy {pp:.4?} {}; (d) I/n {leak:.5?} {}",
            tag(a),
            b_parts.join(" "),
            tag(b_ok),
            tag(c),
            tag(d)
        ),
    }
}

fn h2(p: f64) -> f64 {
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

fn c9_asymptotic() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for eps in [0.05, 0.1, 0.2] {
        let r = asymptotic_key_rate(&JointSource::bsc(0.5, eps).unwrap(), 1);
        pass &= sig5(r.achieved, h2(eps)) && sig5(r.capacity, 1.0) && sig5(r.gap, 1.0 - h2(eps));
        parts.push(format!("eps {eps}: {:.5} / {:.5}", r.achieved, r.capacity));
    }
    Outcome { pass, detail: parts.join("; ") }
}

/// Transcript and report bytes of a mixed finite and binning run.
fn artifacts() -> Vec<u8> {
    let mut out = Vec::new();
    let finite = finite_setting(101, 5);
    let joint = JointSource::bsc(0.5, 0.1).unwrap();
    let typ = TypicalityParams::new(0.2, 0.1).unwrap();
    let mut settings = vec![finite];
    for n in [8usize, 16] {
        let params = BinningParams::new(joint.clone(), n, typ, RateSlack::Zero).unwrap();
        settings
            .push(Setting::Binning(BinningSetting::new(params, 3, codebook_seed(SEED, n), DEFAULT_CAP_BITS).unwrap()));
    }
    for s in &settings {
        let strat = match s {
            Setting::Finite(_) => AttackStrategy::FiniteUniformGuess,
            Setting::Binning(_) => AttackStrategy::BinUniformGuess,
        };
        for est in [
            estimate_completeness(s, 2_000, SEED).unwrap(),
            estimate_soundness(s, &strat, 2_000, SEED).unwrap(),
            estimate_privacy(s, 2_000, SEED).unwrap(),
        ] {
            write_jsonl(&est.records, &mut out).unwrap();
            serde_json::to_writer(&mut out, &est.report).unwrap();
            out.push(b'\n');
        }
        if let Setting::Binning(bs) = s {
            serde_json::to_writer(&mut out, &estimate_leakage(bs, 50_000, SEED).unwrap()).unwrap();
        }
    }
    out
}

fn c10_reproducibility() -> Outcome {
    let run = |threads| rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(artifacts);
    let one = run(1);
    let again = run(1);
    let four = run(4);
    Outcome {
        pass: one == again && one == four && !one.is_empty(),
        detail: format!(
            "{} bytes of transcripts and reports; repeat equal {}, 1 vs 4 threads equal {}",
            one.len(),
            one == again,
            one == four
        ),
    }
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 finite completeness", c1_completeness, Duration::from_secs(30)),
        ("2 finite soundness", c2_soundness, Duration::from_secs(60)),
        ("3 exact secrecy audit", c3_audit, Duration::from_secs(10)),
        ("4 finite privacy", c4_privacy, Duration::from_secs(30)),
        ("5 finite rate", c5_rates, Duration::from_secs(1)),
        ("6 replay hazard", c6_replay, Duration::from_secs(60)),
        ("7 guessing lemma", c7_lemma, Duration::from_secs(5)),
        ("8 binning trends", c8_binning, Duration::from_secs(600)),
        ("9 asymptotic rate", c9_asymptotic, Duration::from_secs(1)),
        ("10 reproducibility", c10_reproducibility, Duration::MAX),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run, limit) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.starts_with(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = o.pass && in_time;
        failed += !pass as u32;
        let limit_note = if limit == Duration::MAX { String::new() } else { format!(" (limit {}s)", limit.as_secs()) };
        println!(
            "{} criterion {name}: {} [{:.2}s{limit_note}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
