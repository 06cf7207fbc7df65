//! Acceptance suite: every release gate runs here, one pass/fail line per
//! criterion. Run with
//!   cargo test --release -p distilltrain --test acceptance -- --nocapture
//! The two training gates (10, 11) are long; 11 is ignored by default.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use distilltrain::agent::{
    ActionMode, AgentConfig, SacAgent, Trainer, TreeTransition,
};
use distilltrain::cli::{load_problem, product_report};
use distilltrain::column::{solve_column, ColumnSpec};
use distilltrain::economics::{stream_revenue, EconomicParams};
use distilltrain::env::{
    decode_action, BranchOutcome, DistillEnv, EnvError, EpisodeStats, Observation, StepOutcome,
    TerminalKind, TreeEnv,
};
use distilltrain::nn::{self, forward, gradient, init_network};
use distilltrain::thermo::{bundled, bundled_components, Stream, ATM};
use distilltrain::ProblemSpec;

fn pass(criterion: &str, detail: String) {
    println!("PASS {criterion}: {detail}");
}

fn problems_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("problems")
}

fn btx_problem() -> ProblemSpec {
    load_problem(&problems_dir().join("btx.json")).unwrap().spec
}

fn hydrocarbon_problem() -> ProblemSpec {
    load_problem(&problems_dir().join("hydrocarbon.json")).unwrap().spec
}

/// Criterion 1: revenue reconstruction for the three-aromatics problem
/// at the reported best-design recoveries totals $13.17M/yr within 1%.
#[test]
fn criterion_01_btx_revenue_reconstruction() {
    let problem = btx_problem();
    let params = EconomicParams::default();
    let recoveries = [0.982, 0.997, 1.0];
    let mut total = 0.0;
    for (i, rec) in recoveries.iter().enumerate() {
        let mut flows = vec![0.0; 3];
        flows[i] = problem.feed.flows[i] * rec;
        let stream = Stream::new(flows, 353.0, ATM);
        total += stream_revenue(&problem.components, &stream, &problem.pricing, &params);
    }
    let expected = 13.17e6;
    let rel = (total - expected).abs() / expected;
    assert!(rel < 0.01, "total {total:.0} vs {expected:.0} (rel {rel:.4})");
    pass(
        "criterion 1 (BTX revenue reconstruction)",
        format!("${:.3}M/yr vs $13.17M/yr, rel err {:.3}%", total / 1e6, rel * 100.0),
    );
}

/// Criterion 2: the six-component problem at its reported recoveries
/// totals $1588M/yr within 2%.
#[test]
fn criterion_02_hydrocarbon_revenue_reconstruction() {
    let problem = hydrocarbon_problem();
    let params = EconomicParams::default();
    let recoveries = [0.0, 0.989, 0.973, 0.911, 0.996, 0.970];
    let mut total = 0.0;
    for (i, rec) in recoveries.iter().enumerate() {
        if *rec == 0.0 {
            continue;
        }
        let mut flows = vec![0.0; 6];
        flows[i] = problem.feed.flows[i] * rec;
        let stream = Stream::new(flows, 320.0, problem.feed.pressure);
        total += stream_revenue(&problem.components, &stream, &problem.pricing, &params);
    }
    let expected = 1588e6;
    let rel = (total - expected).abs() / expected;
    assert!(rel < 0.02, "total {total:.0} vs {expected:.0} (rel {rel:.4})");
    pass(
        "criterion 2 (hydrocarbon revenue reconstruction)",
        format!("${:.1}M/yr vs $1588M/yr, rel err {:.3}%", total / 1e6, rel * 100.0),
    );
}

/// Criterion 3: the reported TAC totals are not reproducible (no cost
/// model is given); the substitute checks are TAC positivity and
/// monotonicity in stage count and duties, plus the frozen correlation
/// evaluation.
#[test]
fn criterion_03_tac_substitute_properties() {
    use distilltrain::economics::column_tac;
    let problem = btx_problem();
    let feed = problem.feed.clone();
    let params = EconomicParams::default();
    let solve = |n: usize| {
        let spec = ColumnSpec {
            pressure: ATM,
            n_stages: n,
            reflux_ratio: 3.0,
            boilup_ratio: 3.0,
        };
        let r = solve_column(&problem.components, &feed, &spec);
        assert!(r.converged);
        (r, spec)
    };
    let (r20, s20) = solve(20);
    let base = column_tac(&problem.components, &r20, &s20, &params).unwrap();
    assert!(base > 0.0);

    // more trays cost more, all else equal
    let (mut r_tall, s40) = solve(40);
    r_tall.condenser_duty = r20.condenser_duty;
    r_tall.reboiler_duty = r20.reboiler_duty;
    r_tall.max_vapor_flow = r20.max_vapor_flow;
    r_tall.stage_temperatures[0] = r20.stage_temperatures[0];
    let taller = column_tac(&problem.components, &r_tall, &s40, &params).unwrap();
    assert!(taller > base, "taller column must cost more: {taller} vs {base}");

    // duty monotonicity, one side at a time
    let mut r_hot = r20.clone();
    r_hot.reboiler_duty *= 2.0;
    let hotter = column_tac(&problem.components, &r_hot, &s20, &params).unwrap();
    assert!(hotter > base);
    let mut r_cold = r20.clone();
    r_cold.condenser_duty *= 2.0;
    let colder = column_tac(&problem.components, &r_cold, &s20, &params).unwrap();
    assert!(colder > base);

    // frozen evaluation of the correlation pieces (spreadsheet oracle)
    let dt_lm = (10.0f64) / ((353.25f64 - 303.0) / (353.25 - 313.0)).ln();
    let a_c: f64 = 1e6 / (800.0 * dt_lm);
    let a_r: f64 = 1e6 / (820.0 * 40.0);
    let capital = 17640.0 * 22f64.powf(0.802)
        + 230.0 * 30.0
        + 7296.0 * (a_c.powf(0.65) + a_r.powf(0.65));
    let operating = 8.7e6 * 8000.0 * 3600.0 / 1e9;
    let tac = capital / 3.0 + operating;
    assert!((tac - 366510.3384).abs() < 0.01);
    pass(
        "criterion 3 (TAC substitute properties)",
        format!("base TAC ${base:.0}/yr; monotone in N, Qr, Qc; oracle ${tac:.0}/yr"),
    );
}

/// Criterion 4: all nine bundled components reproduce their normal
/// boiling points within 1.5 K of standard-table values.
#[test]
fn criterion_04_normal_boiling_point_pins() {
    let reference = [
        ("benzene", 353.24),
        ("toluene", 383.75),
        ("p-xylene", 411.48),
        ("ethane", 184.55),
        ("propane", 231.05),
        ("isobutane", 261.42),
        ("n-butane", 272.66),
        ("isopentane", 300.98),
        ("n-pentane", 309.21),
    ];
    assert_eq!(bundled_components().len(), reference.len());
    let mut worst: f64 = 0.0;
    for (name, expected) in reference {
        let c = bundled(name).unwrap();
        let bp = c.boiling_point(ATM);
        worst = worst.max((bp - expected).abs());
        assert!(
            (bp - expected).abs() < 1.5,
            "{name}: boiling point {bp:.2} K vs {expected:.2} K"
        );
    }
    pass(
        "criterion 4 (normal boiling point pins)",
        format!("9/9 components within 1.5 K (worst {worst:.3} K)"),
    );
}

/// Criterion 5: 200 randomized converged solves on both problems close
/// per-component balances to 1e-8 relative with ordered end temperatures.
#[test]
fn criterion_05_column_conservation() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut checked = 0;
    let mut attempts = 0;
    for problem in [btx_problem(), hydrocarbon_problem()] {
        let mut converged = 0;
        while converged < 100 && attempts < 4000 {
            attempts += 1;
            let action = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let spec = decode_action(action, &problem.action_bounds);
            let r = solve_column(&problem.components, &problem.feed, &spec);
            if !r.converged {
                continue;
            }
            converged += 1;
            for i in 0..problem.components.len() {
                let f = problem.feed.flows[i];
                let total = r.distillate.flows[i] + r.bottoms.flows[i];
                let tol = 1e-8 * f.max(problem.feed.total_flow() * 1e-12);
                assert!(
                    (total - f).abs() <= tol,
                    "component {i}: {total} vs {f} under spec {spec:?}"
                );
            }
            let t0 = r.stage_temperatures[0];
            let tn = *r.stage_temperatures.last().unwrap();
            assert!(tn >= t0, "reboiler {tn} < condenser {t0}");
        }
        assert_eq!(converged, 100, "not enough converged solves in {attempts} attempts");
        checked += converged;
    }
    pass(
        "criterion 5 (column conservation)",
        format!("{checked} converged solves closed balances to 1e-8 ({attempts} sampled)"),
    );
}

/// Criterion 6: near-total-reflux separation factor within a factor of 3
/// of the Fenske estimate from the geometric-mean relative volatility.
#[test]
fn criterion_06_fenske_consistency() {
    let comps = vec![bundled("benzene").unwrap(), bundled("toluene").unwrap()];
    let feed = Stream::new(vec![5.0, 5.0], 298.15, ATM);
    let spec = ColumnSpec {
        pressure: ATM,
        n_stages: 20,
        reflux_ratio: 100.0,
        boilup_ratio: 100.0,
    };
    let r = solve_column(&comps, &feed, &spec);
    assert!(r.converged);
    let sep = (r.distillate.flows[0] / r.bottoms.flows[0])
        * (r.bottoms.flows[1] / r.distillate.flows[1]);
    let alpha = |t: f64| comps[0].psat(t).unwrap() / comps[1].psat(t).unwrap();
    let alpha_bar = (alpha(r.stage_temperatures[0])
        * alpha(*r.stage_temperatures.last().unwrap()))
    .sqrt();
    let fenske = alpha_bar.powi(21);
    let ratio = sep / fenske;
    assert!(ratio > 1.0 / 3.0 && ratio < 3.0, "ratio {ratio}");
    pass(
        "criterion 6 (Fenske consistency)",
        format!("separation {sep:.3e} vs Fenske {fenske:.3e} (ratio {ratio:.2})"),
    );
}

/// Criterion 7: reverse-mode gradients match central finite differences
/// to 1e-4 relative over randomized architectures up to [10, 64, 64, 4].
#[test]
fn criterion_07_gradient_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let architectures: [&[usize]; 4] =
        [&[3, 8, 1], &[5, 16, 2], &[10, 64, 64, 4], &[7, 32, 32, 3]];
    let mut probes = 0;
    let mut worst: f64 = 0.0;
    'outer: for arch in architectures {
        loop {
            let net = init_network(arch, &mut rng).unwrap();
            let input: Vec<f64> = (0..arch[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cot: Vec<f64> = (0..*arch.last().unwrap())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let (_, cache) = forward(&net, &input).unwrap();
            let (grads, _) = gradient(&net, &cache, &cot).unwrap();

            // probe a spread of parameters with central differences
            let h = 1e-5;
            for layer in 0..net.layers.len() {
                let stride = (net.layers[layer].weights.len() / 5).max(1);
                for w in (0..net.layers[layer].weights.len()).step_by(stride) {
                    let mut plus = net.clone();
                    plus.layers[layer].weights[w] += h;
                    let mut minus = net.clone();
                    minus.layers[layer].weights[w] -= h;
                    let f = |n: &nn::NetParams| {
                        nn::evaluate(n, &input)
                            .unwrap()
                            .iter()
                            .zip(&cot)
                            .map(|(o, c)| o * c)
                            .sum::<f64>()
                    };
                    let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                    let an = grads.layers[layer].weights[w];
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                    worst = worst.max(rel);
                    assert!(rel < 1e-4, "arch {arch:?} layer {layer} w{w}: {fd} vs {an}");
                    probes += 1;
                    if probes >= 100 {
                        break 'outer;
                    }
                }
            }
        }
    }
    pass(
        "criterion 7 (gradient exactness)",
        format!("{probes} probes, worst relative error {worst:.2e}"),
    );
}

/// Single-decision environment with reward -(a1 - 0.3)^2 and both
/// branches terminal; the smallest end-to-end check of the learning
/// plumbing.
struct QuadraticToy {
    done: bool,
}

impl TreeEnv for QuadraticToy {
    fn reset(&mut self) -> Observation {
        self.done = false;
        Observation(vec![0.0])
    }

    fn current_observation(&self) -> Option<Observation> {
        if self.done {
            None
        } else {
            Some(Observation(vec![0.0]))
        }
    }

    fn step_separate(&mut self, action: [f64; 4]) -> Result<StepOutcome, EnvError> {
        self.done = true;
        Ok(StepOutcome {
            reward: -(action[0] - 0.3).powi(2),
            tops: BranchOutcome::Terminal(TerminalKind::Outlet),
            bottoms: BranchOutcome::Terminal(TerminalKind::Outlet),
            episode_done: true,
            failure: false,
        })
    }

    fn step_decline(&mut self) -> Result<StepOutcome, EnvError> {
        self.done = true;
        Ok(StepOutcome {
            reward: 0.0,
            tops: BranchOutcome::Terminal(TerminalKind::Outlet),
            bottoms: BranchOutcome::Terminal(TerminalKind::Outlet),
            episode_done: true,
            failure: false,
        })
    }

    fn done(&self) -> bool {
        self.done
    }

    fn episode_stats(&self) -> EpisodeStats {
        EpisodeStats::default()
    }
}

/// Criterion 8: on the quadratic toy, the evaluate-mode first action
/// coordinate lands in [0.2, 0.4] after 2000 training steps, 3/3 seeds.
#[test]
fn criterion_08_agent_sanity_on_quadratic_toy() {
    let mut landed = Vec::new();
    for seed in [1, 2, 3] {
        let config = AgentConfig {
            // The toy stores a transition only when the agent separates;
            // a long uniform warmup keeps the buffer growing while the
            // critics learn the quadratic.
            warmup_steps: 1200,
            ..AgentConfig::default()
        };
        let env = QuadraticToy { done: true };
        let agent = SacAgent::new(1, config, seed).unwrap();
        let mut trainer = Trainer::new(env, agent);
        for _ in 0..2000 {
            trainer.run_episode();
        }
        let d = trainer
            .agent
            .select_action(&Observation(vec![0.0]), ActionMode::Evaluate);
        assert!(
            d.action[0] > 0.2 && d.action[0] < 0.4,
            "seed {seed}: a1 = {}",
            d.action[0]
        );
        landed.push(d.action[0]);
    }
    pass(
        "criterion 8 (agent sanity, quadratic toy)",
        format!("3/3 seeds landed a1 in [0.2, 0.4]: {landed:?}"),
    );
}

/// Criterion 9: fuzzed target computations satisfy y >= r elementwise.
#[test]
fn criterion_09_target_clamp_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut agent = SacAgent::new(3, AgentConfig::default(), 99).unwrap();
    let mut cases = 0;
    for _ in 0..10_000 {
        let branch = |rng: &mut ChaCha8Rng| {
            if rng.gen_bool(0.5) {
                Some(Observation(vec![
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ]))
            } else {
                None
            }
        };
        let t = TreeTransition {
            state: Observation(vec![
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ]),
            action: [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ],
            reward: rng.gen_range(-10.0..10.0),
            tops_next: branch(&mut rng),
            bottoms_next: branch(&mut rng),
        };
        let y = agent.compute_target(&[&t]);
        assert!(y[0] >= t.reward - 1e-12, "y {} < r {}", y[0], t.reward);
        cases += 1;
    }
    pass(
        "criterion 9 (target clamp property)",
        format!("{cases} fuzzed targets all satisfied y >= r"),
    );
}

/// Criterion 10: end-to-end training on the three-aromatics problem with
/// defaults: within 5000 episodes, at least 2 of 3 seeds find a best
/// flowsheet with all three products at >= 95% purity and >= 90%
/// per-component recovery, and the mean return over the last tenth of
/// episodes beats the first tenth.
#[test]
fn criterion_10_btx_training_end_to_end() {
    let episodes = 3000;
    let mut seeds_ok = 0;
    let mut trend_ok = 0;
    let mut details = Vec::new();
    for seed in [1, 2, 3] {
        let problem = btx_problem();
        let env = DistillEnv::new(problem.clone(), seed).unwrap();
        let agent =
            SacAgent::new(problem.observation_len(), AgentConfig::default(), seed).unwrap();
        let mut trainer = Trainer::new(env, agent);
        let mut returns = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            let row = trainer.run_episode();
            returns.push(row.episode_return);
        }
        let tenth = episodes / 10;
        let head: f64 = returns[..tenth].iter().sum::<f64>() / tenth as f64;
        let tail: f64 = returns[episodes - tenth..].iter().sum::<f64>() / tenth as f64;
        if tail > head {
            trend_ok += 1;
        }

        let sheet = trainer.best_flowsheet.as_ref().expect("best flowsheet recorded");
        let report = product_report(sheet, &problem.feed);
        let mut per_component = vec![(0.0f64, 0.0f64); 3]; // (best purity, total recovery)
        for p in &report {
            let idx = problem
                .components
                .iter()
                .position(|c| c.name == p.component)
                .unwrap();
            per_component[idx].0 = per_component[idx].0.max(p.purity);
            per_component[idx].1 += p.recovery;
        }
        let all_ok = per_component
            .iter()
            .all(|(purity, recovery)| *purity >= 0.95 && *recovery >= 0.90);
        if all_ok {
            seeds_ok += 1;
        }
        details.push(format!(
            "seed {seed}: head {head:.3} tail {tail:.3} best {:.3} products {per_component:?}",
            trainer.best_return.unwrap_or(f64::NAN)
        ));
    }
    println!("{}", details.join("\n"));
    assert!(
        seeds_ok >= 2,
        "only {seeds_ok}/3 seeds reached full product slates: {details:?}"
    );
    assert!(
        trend_ok >= 2,
        "returns did not improve on {trend_ok}/3 seeds: {details:?}"
    );
    pass(
        "criterion 10 (BTX end-to-end training)",
        format!("{seeds_ok}/3 seeds with full product slate, {trend_ok}/3 improving"),
    );
}

/// Criterion 11 (extended, hours): hydrocarbon training recovers at
/// least 4 of 6 components as 95%-purity products in the best flowsheet.
#[test]
#[ignore = "extended gate: multi-hour hydrocarbon training run"]
fn criterion_11_hydrocarbon_training_extended() {
    let problem = hydrocarbon_problem();
    let env = DistillEnv::new(problem.clone(), 1).unwrap();
    let agent = SacAgent::new(problem.observation_len(), AgentConfig::default(), 1).unwrap();
    let mut trainer = Trainer::new(env, agent);
    for _ in 0..5000 {
        trainer.run_episode();
    }
    let sheet = trainer.best_flowsheet.as_ref().expect("best flowsheet recorded");
    let report = product_report(sheet, &problem.feed);
    let mut recovered = std::collections::BTreeSet::new();
    for p in &report {
        if p.purity >= 0.95 {
            recovered.insert(p.component.clone());
        }
    }
    assert!(
        recovered.len() >= 4,
        "only {} components recovered as products: {recovered:?}",
        recovered.len()
    );
    pass(
        "criterion 11 (hydrocarbon extended training)",
        format!("{} of 6 components recovered as products: {recovered:?}", recovered.len()),
    );
}

/// Criterion 12: identical seeds and configs produce byte-identical
/// training logs (wall_ms excluded) and best flowsheets.
#[test]
fn criterion_12_run_determinism() {
    use distilltrain::cli::{csv_row, CSV_HEADER};
    let run = || {
        let problem = btx_problem();
        let env = DistillEnv::new(problem.clone(), 12).unwrap();
        let agent =
            SacAgent::new(problem.observation_len(), AgentConfig::default(), 12).unwrap();
        let mut trainer = Trainer::new(env, agent);
        let mut log = vec![CSV_HEADER.to_string()];
        for _ in 0..60 {
            let row = trainer.run_episode();
            let full = csv_row(&row);
            // drop the wall_ms column
            log.push(full.rsplit_once(',').unwrap().0.to_string());
        }
        let best = trainer
            .best_flowsheet
            .as_ref()
            .map(|s| s.to_json().unwrap())
            .unwrap_or_default();
        (log.join("\n"), best)
    };
    let (log_a, best_a) = run();
    let (log_b, best_b) = run();
    assert_eq!(log_a, log_b, "training logs must match byte for byte");
    assert_eq!(best_a, best_b, "best flowsheets must match byte for byte");
    pass(
        "criterion 12 (determinism)",
        format!("60-episode logs and best.json byte-identical ({} bytes)", best_a.len()),
    );
}
