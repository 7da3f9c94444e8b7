//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its criterion.
//!
//! Lines go straight to stdout so they are visible without `--nocapture`.
//! Tests run one at a time so the wall-clock limits are measured without contention.

use std::collections::HashSet;
use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use privmatch::bloom::{candidate_uncertainty, remaining_entropy, EntropyParams};
use privmatch::cipher::{commute_decrypt, commute_encrypt, encrypt_priority, hash_to_group, CipherContext, SafePrime, SecretExponent};
use privmatch::protocol::pmatch::{PMatchInitiator, PMatchResponder, Variant};
use privmatch::protocol::run_session;
use privmatch::similarity::AttributeProfile;
use privmatch::{Role, Session};
use privmatch_harness::bench::bench_scenario;
use privmatch_harness::counters::expected_counters;
use privmatch_harness::montecarlo::{coverage, rank_accuracy, simulate_pair, summarize, McParams};
use privmatch_harness::transport::{drive, InProcess};
use privmatch_harness::{
    energy_estimate, oracle_match, run_scenario, run_scenario_with, verify_counters, EnergyModel, ProtocolKind, Scenario, TransportKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(criterion: &str, ok: bool, detail: &str) {
    let line = format!("{} [{criterion}] {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(ok, "{criterion}: {detail}");
}

fn table2_profile(name: &str) -> AttributeProfile {
    let p = Scenario::table2().prepare().unwrap();
    if name == p.initiator_name {
        return p.initiator;
    }
    p.candidates.into_iter().find(|c| c.name == name).unwrap().profile
}

fn mc(lambda: u32, l: u32, lprime: u32, trials: u32, seed: u64) -> McParams {
    McParams {
        lambda,
        l,
        lprime,
        trials,
        seed,
    }
}

#[test]
fn table2_pmatch_golden() {
    let _g = serial();
    let started = Instant::now();
    let run = run_scenario(&Scenario::table2()).unwrap();
    let elapsed = started.elapsed();
    let expected = [
        ("Bob", 0.9667),
        ("Charles", 0.3972),
        ("David", 0.8243),
        ("Emmy", 0.2316),
        ("Frank", 0.9870),
    ];
    let mut worst = 0.0f64;
    let mut all = true;
    for (name, want) in expected {
        match run.candidate(name).and_then(|c| c.initiator.as_ref()).and_then(|o| o.similarity) {
            Some(got) => worst = worst.max((got - want).abs()),
            None => all = false,
        }
    }
    let ok = all && worst <= 1e-4 && elapsed < Duration::from_secs(5);
    verdict(
        "table2-golden",
        ok,
        &format!("max |error| {worst:.2e} (<= 1e-4), {elapsed:.2?} at 256-bit (< 5 s)"),
    );
}

#[test]
fn ranking_follows_the_similarity_measure() {
    let _g = serial();
    let s = Scenario::table2();
    let basic = run_scenario_with(&s, ProtocolKind::PMatch, TransportKind::InProcess).unwrap();
    let plus = run_scenario_with(&s, ProtocolKind::PMatchPlus, TransportKind::InProcess).unwrap();
    let order = |r: &[(String, f64)]| r.iter().map(|x| x.0.clone()).collect::<Vec<_>>();
    let pos = |r: &[String], n: &str| r.iter().position(|x| x == n);
    let (b, p) = (order(&basic.ranking), order(&plus.ranking));
    let ok = pos(&b, "Bob") < pos(&b, "David")
        && pos(&p, "David") < pos(&p, "Bob")
        && p == ["Frank", "David", "Bob", "Charles", "Emmy"]
        && pos(&b, "Bob").is_some();
    verdict("ranking", ok, &format!("P-match {} | P-match+ {}", b.join(" > "), p.join(" > ")));
}

#[test]
fn cipher_properties() {
    let _g = serial();
    let prime = Arc::new(SafePrime::for_bits(256, b"acceptance-cipher").unwrap());
    let failures: Vec<(u32, &str)> = (0..1000u32)
        .into_par_iter()
        .flat_map_iter(|t| {
            let mut rng = ChaCha20Rng::seed_from_u64(u64::from(t));
            let x = hash_to_group(&rng.gen::<[u8; 16]>(), &prime);
            let ka = SecretExponent::derive(prime.clone(), format!("a{t}").as_bytes());
            let kb = SecretExponent::derive(prime.clone(), format!("b{t}").as_bytes());
            let ab = commute_encrypt(&commute_encrypt(&x, &ka).unwrap(), &kb).unwrap();
            let ba = commute_encrypt(&commute_encrypt(&x, &kb).unwrap(), &ka).unwrap();
            let back = commute_decrypt(&commute_encrypt(&x, &ka).unwrap(), &ka.invert().unwrap()).unwrap();
            let images: HashSet<BigUint> = (1..=10u64).map(|a| encrypt_priority(a, &ka).unwrap().value().clone()).collect();
            let mut bad = Vec::new();
            if ab != ba {
                bad.push((t, "commutativity"));
            }
            if back != x {
                bad.push((t, "roundtrip"));
            }
            if images.len() != 10 {
                bad.push((t, "injectivity"));
            }
            bad
        })
        .collect();
    verdict(
        "cipher-properties",
        failures.is_empty(),
        &format!(
            "3 x 1000 trials at 256-bit, {} failures {:?}",
            failures.len(),
            &failures[..failures.len().min(5)]
        ),
    );
}

const SWEEP_POOL: [&str; 8] = ["art", "books", "chess", "dance", "film", "golf", "hiking", "jazz"];

/// Every subset of 1..=5 attributes, with seeded priorities in `1..=κ`.
fn sweep_profiles(kappa: u32) -> Vec<AttributeProfile> {
    let mut rng = ChaCha20Rng::seed_from_u64(u64::from(kappa));
    (1u32..256)
        .filter(|mask| mask.count_ones() <= 5)
        .map(|mask| {
            let entries: Vec<(&str, u32)> = SWEEP_POOL
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, a)| (*a, rng.gen_range(1..=kappa)))
                .collect();
            AttributeProfile::new(entries, kappa).unwrap()
        })
        .collect()
}

#[test]
fn oracle_equivalence_sweep() {
    let _g = serial();
    let started = Instant::now();
    let prime = Arc::new(SafePrime::generate(128, b"acceptance-sweep").unwrap());
    let by_kappa: Vec<Vec<AttributeProfile>> = (1..=4).map(sweep_profiles).collect();
    let n = by_kappa[0].len();
    let keys: Vec<CipherContext> = (0..n)
        .map(|i| CipherContext::derive(prime.clone(), format!("user{i}").as_bytes()))
        .collect();
    let failures: Vec<String> = (0..n * n)
        .into_par_iter()
        .filter_map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let profiles = &by_kappa[idx % 4];
            let (a, b) = (&profiles[i], &profiles[j]);
            let oracle = oracle_match(a, b);
            let seed = idx.to_le_bytes();
            let run = |variant| {
                let mut init = PMatchInitiator::new(variant, a, keys[i].clone(), &seed).ok()?;
                let mut resp = PMatchResponder::new(variant, b, keys[j].clone(), 0.0, &seed).ok()?;
                run_session(&mut init, &mut resp).ok()?;
                init.outcome().cloned()
            };
            let (Some(basic), Some(plus)) = (run(Variant::Basic), run(Variant::Plus)) else {
                return Some(format!("({i},{j}) session failed"));
            };
            let close = |got: Option<f64>, want: Option<f64>| match (got, want) {
                (Some(g), Some(w)) => (g - w).abs() <= 1e-9,
                (None, None) => true,
                _ => false,
            };
            let want_p = (oracle.common_count > 0).then_some(oracle.priority_ochiai);
            let ok = close(basic.similarity, oracle.tanimoto)
                && close(plus.similarity, want_p)
                && plus.common_count == Some(oracle.common_count);
            (!ok).then(|| {
                format!(
                    "({i},{j}) basic {:?} plus {:?} oracle {oracle:?}",
                    basic.similarity, plus.similarity
                )
            })
        })
        .collect();
    let elapsed = started.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(120);
    verdict(
        "oracle-equivalence",
        ok,
        &format!(
            "{} pairs x 2 protocols, {} failures, {elapsed:.2?} (< 2 min) {:?}",
            n * n,
            failures.len(),
            failures.first()
        ),
    );
}

#[test]
fn estimator_bias() {
    let _g = serial();
    let p = mc(400, 12, 11, 5000, 4);
    let (a, b) = (table2_profile("Alice"), table2_profile("Bob"));
    let pool = Scenario::table2().prepare().unwrap().pool;
    let trials = simulate_pair(&a, &b, &pool, &p).unwrap();
    let s = summarize(&trials, &a, &b, &p);
    let ok = (s.q1.mean - 18.0).abs() <= 0.5 && (s.qprime.mean - 8.0).abs() <= 0.5 && s.q1.n == 5000 && s.qprime.n == 5000;
    verdict(
        "estimator-bias",
        ok,
        &format!(
            "mean q1* {:.4} (18 +- 0.5), mean q'* {:.4} (8 +- 0.5), {} saturated",
            s.q1.mean, s.qprime.mean, s.saturated
        ),
    );
}

#[test]
fn estimator_variance() {
    let _g = serial();
    let p = mc(400, 12, 11, 5000, 5);
    let (a, b) = (table2_profile("Alice"), table2_profile("Bob"));
    let pool = Scenario::table2().prepare().unwrap().pool;
    let trials = simulate_pair(&a, &b, &pool, &p).unwrap();
    let s = summarize(&trials, &a, &b, &p);
    let r1 = s.q1.variance / s.formula_var_q1 - 1.0;
    let r2 = s.qprime.variance / s.formula_var_qprime - 1.0;
    let ok = r1.abs() <= 0.20 && r2.abs() <= 0.25;
    verdict(
        "estimator-variance",
        ok,
        &format!(
            "Var q1* {:.4} vs formula {:.4} ({:+.1}%, +-20%); Var q'* {:.4} vs formula {:.4} ({:+.1}%, +-25%)",
            s.q1.variance,
            s.formula_var_q1,
            100.0 * r1,
            s.qprime.variance,
            s.formula_var_qprime,
            100.0 * r2
        ),
    );
}

#[test]
fn chebyshev_coverage() {
    let _g = serial();
    let pool = Scenario::table2().prepare().unwrap().pool;
    let pairs = [("Alice", "Bob"), ("Alice", "David"), ("Alice", "Frank")];
    let configs = [(400, 12, 11), (600, 12, 11), (400, 10, 8), (800, 16, 12)];
    let mut rows = Vec::new();
    for (x, y) in pairs {
        let (a, b) = (table2_profile(x), table2_profile(y));
        for (lambda, l, lprime) in configs {
            let p = mc(lambda, l, lprime, 2000, 6);
            let trials = simulate_pair(&a, &b, &pool, &p).unwrap();
            let s = summarize(&trials, &a, &b, &p);
            for eps in [0.2, 0.3] {
                rows.push((y, coverage(&trials, &s, &p, eps).unwrap()));
            }
        }
    }
    let failing: Vec<String> = rows
        .iter()
        .filter(|(_, r)| !r.holds_q1())
        .map(|(y, r)| {
            format!(
                "{y} λ={} l={} eps={}: {:.3} < {:.3}",
                r.lambda,
                r.l,
                r.eps1,
                r.empirical_q1,
                1.0 - r.p1
            )
        })
        .collect();
    let tightest = rows
        .iter()
        .map(|(_, r)| r.empirical_q1 - (1.0 - r.p1))
        .fold(f64::INFINITY, f64::min);
    verdict(
        "chebyshev-coverage",
        failing.is_empty(),
        &format!("{} configurations, smallest margin {tightest:.3}, failing {failing:?}", rows.len()),
    );
}

#[test]
fn ematch_rank_accuracy() {
    let _g = serial();
    let prepared = Scenario::table2().prepare().unwrap();
    let r = rank_accuracy(&prepared, &mc(400, 12, 11, 1000, 8)).unwrap();
    let ok = r.expected_best == "Frank" && r.accuracy >= 0.80;
    verdict(
        "ematch-rank-accuracy",
        ok,
        &format!(
            "best = {} in {}/{} trials ({:.3} >= 0.80)",
            r.expected_best, r.hits, r.trials, r.accuracy
        ),
    );
}

#[test]
fn table3_counters() {
    let _g = serial();
    let prime = Arc::new(SafePrime::well_known(1024).unwrap());
    let failures: Vec<String> = (1..=50u64)
        .into_par_iter()
        .filter_map(|m| {
            let mut rng = ChaCha20Rng::seed_from_u64(m);
            let names: Vec<String> = (0..m).map(|i| format!("attr-{i}")).collect();
            let profile = AttributeProfile::new(names.iter().map(|n| (n.as_str(), rng.gen_range(1..=10))), 10).unwrap();
            let mut init = PMatchInitiator::new(Variant::Basic, &profile, CipherContext::derive(prime.clone(), b"init"), b"t3").unwrap();
            let mut resp =
                PMatchResponder::new(Variant::Basic, &profile, CipherContext::derive(prime.clone(), b"resp"), 0.0, b"t3").unwrap();
            if let Err(e) = drive(&mut init, &mut resp, &mut InProcess) {
                return Some(format!("m={m}: {e}"));
            }
            let mut bad = Vec::new();
            for (role, measured) in [(Role::Initiator, init.counters()), (Role::Responder, resp.counters())] {
                let report = verify_counters(measured, &expected_counters(ProtocolKind::PMatch, role, m, 10).unwrap());
                bad.extend(report.mismatches().into_iter().map(|f| format!("m={m} {role:?} {f:?}")));
            }
            (!bad.is_empty()).then(|| bad.join("; "))
        })
        .collect();
    verdict(
        "table3-counters",
        failures.is_empty(),
        &format!(
            "m = 1..50 at 1024-bit, both roles, {} mismatching m {:?}",
            failures.len(),
            failures.first()
        ),
    );
}

#[test]
fn energy_model() {
    let _g = serial();
    let secs = Duration::from_secs;
    let d = EnergyModel::default();
    let defaults = d.p_comp == 0.38 && d.p_run == 0.3167 && d.e_tx == 4.8e-6 && d.e_rx == 6.7e-6;
    let zero = energy_estimate(&Default::default(), Duration::ZERO, Duration::ZERO).joules;
    let timed = energy_estimate(&Default::default(), secs(1), secs(1)).joules;
    let traffic = d.estimate(10_000, 10_000, Duration::ZERO, Duration::ZERO).joules;
    let ok = defaults && zero == 0.0 && (timed - 0.6967).abs() <= 1e-9 && (traffic - 0.115).abs() <= 1e-9;
    verdict(
        "energy-model",
        ok,
        &format!("0 J -> {zero}, 1 s + 1 s -> {timed:.10} J, 10 kB each way -> {traffic:.10} J, default constants {defaults}"),
    );
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * u128::from(n - i) / u128::from(i + 1))
}

/// Direct summation of every term with exact integer binomials.
fn entropy_oracle(p: &EntropyParams) -> f64 {
    let l = u64::from(p.l);
    let bit = 1.0 - (-(f64::from(p.l)) * p.q1 as f64 / p.lambda).exp();
    let pass: f64 = (1..=l)
        .map(|i| binomial(l, i) as f64 * bit.powi(i as i32) * (1.0 - bit).powi((l - i) as i32))
        .sum();
    let total = u64::from(p.kappa) * u64::from(p.n);
    let expectation: f64 = (1..=total)
        .map(|x| binomial(total, x) as f64 * pass.powi(x as i32) * (1.0 - pass).powi((total - x) as i32) * (x as f64).log2())
        .sum();
    p.q1 as f64 * expectation
}

#[test]
fn entropy_and_uncertainty() {
    let _g = serial();
    let mut worst_entropy = 0.0f64;
    let mut cases = 0;
    for (kappa, n) in [(1, 8), (2, 16), (4, 8), (4, 16), (8, 8), (10, 6)] {
        for lambda in [40.0, 100.0, 400.0] {
            for l in [1, 4, 12] {
                for q1 in [1, kappa * n / 4 + 1, kappa * n / 2, kappa * n] {
                    let p = EntropyParams {
                        lambda,
                        l,
                        q1: u64::from(q1),
                        kappa,
                        n,
                    };
                    let got = remaining_entropy(&p).unwrap();
                    let want = entropy_oracle(&p);
                    let rel = if want == 0.0 { got.abs() } else { ((got - want) / want).abs() };
                    worst_entropy = worst_entropy.max(rel);
                    cases += 1;
                }
            }
        }
    }
    let mut worst_log = 0.0f64;
    for (kappa, n) in [(10, 5), (10, 12), (4, 30), (1, 100)] {
        let total = kappa * n;
        for q in 0..=total {
            let jitter = if q % 2 == 0 { 0.3 } else { -0.4 };
            let q1_star = (f64::from(q) + jitter).clamp(0.0, f64::from(total));
            let got = candidate_uncertainty(kappa, n, q1_star).unwrap();
            let want = (binomial(u64::from(total), u64::from(q)) as f64).log2();
            worst_log = worst_log.max((got - want).abs() / want.max(1.0));
        }
    }
    let ok = worst_entropy <= 1e-6 && worst_log <= 1e-9;
    verdict(
        "entropy",
        ok,
        &format!("{cases} entropy cases, worst relative error {worst_entropy:.2e} (<= 1e-6); worst log2 C error {worst_log:.2e} (<= 1e-9)"),
    );
}

#[test]
fn online_compute_ordering() {
    let _g = serial();
    let scenario = bench_scenario(100, 10, 1024, 12);
    let mut best = [Duration::MAX; 3];
    for _ in 0..5 {
        for (slot, protocol) in ProtocolKind::ALL.into_iter().enumerate() {
            let run = run_scenario_with(&scenario, protocol, TransportKind::InProcess).unwrap();
            let c = &run.candidates[0];
            assert!(c.error.is_none(), "{protocol}: {:?}", c.error);
            best[slot] = best[slot].min(c.timing.online_compute());
        }
    }
    let [pmatch, plus, ematch] = best;
    let ok = ematch < pmatch && pmatch < plus;
    verdict(
        "online-ordering",
        ok,
        &format!("m=100 κ=10 best of 5: E-match {ematch:.2?} < P-match {pmatch:.2?} < P-match+ {plus:.2?}"),
    );
}
