//! The tree-MDP environment: a deque of unconnected streams, separate and
//! decline decisions, column simulation, economic rewards and the growing
//! flowsheet.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::column::{solve_column, ColumnSpec};
use crate::economics::{
    column_tac, size_column, step_reward, stream_revenue, EconomicParams, ProductPricing,
};
use crate::flowsheet::{ColumnSummary, Flowsheet, LeafLabel};
use crate::thermo::{Component, Stream, ATM};

/// Branch streams smaller than this fraction of the feed total are
/// treated as numerically empty.
const NEGLIGIBLE_FRACTION: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode is finished; call reset before stepping")]
    EpisodeFinished,
    #[error("invalid problem configuration:\n{}", .0.join("\n"))]
    InvalidProblem(Vec<String>),
}

/// Bounds of the agent's continuous action box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionBounds {
    /// Pa
    pub pressure_min: f64,
    /// Pa
    pub pressure_max: f64,
    pub stages_min: usize,
    pub stages_max: usize,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        ActionBounds {
            pressure_min: 0.3 * ATM,
            pressure_max: 40.0 * ATM,
            stages_min: 5,
            stages_max: 60,
            ratio_min: 0.1,
            ratio_max: 20.0,
        }
    }
}

impl ActionBounds {
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.pressure_min > 0.0 && self.pressure_min < self.pressure_max) {
            v.push("action_bounds: pressure bounds must be positive and ordered".into());
        }
        if self.stages_min < 3 {
            v.push("action_bounds.stages_min must be at least 3".into());
        }
        if self.stages_min >= self.stages_max {
            v.push("action_bounds: stage bounds must be ordered".into());
        }
        if !(self.ratio_min > 0.0 && self.ratio_min < self.ratio_max) {
            v.push("action_bounds: ratio bounds must be positive and ordered".into());
        }
        v
    }
}

/// Full user problem definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub components: Vec<Component>,
    pub feed: Stream,
    pub pricing: ProductPricing,
    pub economics: EconomicParams,
    pub action_bounds: ActionBounds,
    pub max_columns: usize,
    /// Penalty (in scaled reward units) for a failed separation.
    pub fail_penalty: f64,
    /// $/yr divisor that makes rewards O(1).
    pub reward_scale: f64,
}

impl ProblemSpec {
    /// Validate every invariant, collecting all violations.
    pub fn validate(&self) -> Result<(), EnvError> {
        let mut v = Vec::new();
        if self.components.is_empty() {
            v.push("components must be nonempty".into());
        }
        for c in &self.components {
            v.extend(c.invariant_violations());
        }
        if self.feed.flows.len() != self.components.len() {
            v.push(format!(
                "feed.flows has {} entries, expected {}",
                self.feed.flows.len(),
                self.components.len()
            ));
        }
        if self.feed.flows.iter().any(|f| *f < 0.0) {
            v.push("feed.flows must be nonnegative".into());
        }
        if !(self.feed.total_flow() > 0.0) {
            v.push("feed must carry positive total flow".into());
        }
        if !(self.feed.temperature > 0.0) {
            v.push("feed.temperature must be positive".into());
        }
        if !(self.feed.pressure > 0.0) {
            v.push("feed.pressure must be positive".into());
        }
        v.extend(self.pricing.invariant_violations(self.components.len()));
        v.extend(self.economics.invariant_violations());
        v.extend(self.action_bounds.invariant_violations());
        if self.max_columns < 1 {
            v.push("max_columns must be at least 1".into());
        }
        if !(self.fail_penalty >= 0.0) {
            v.push("fail_penalty must be nonnegative".into());
        }
        if !(self.reward_scale > 0.0) {
            v.push("reward_scale must be positive".into());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(EnvError::InvalidProblem(v))
        }
    }

    pub fn component_names(&self) -> Vec<String> {
        self.components.iter().map(|c| c.name.clone()).collect()
    }

    pub fn observation_len(&self) -> usize {
        self.components.len() + 2
    }
}

/// Fixed-shape state encoding of a single stream: normalized component
/// flows, then (T - T_feed)/100, then ln(P / P_feed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Encode a stream against the problem's feed references.
pub fn encode_state(stream: &Stream, problem: &ProblemSpec) -> Observation {
    let feed_total = problem.feed.total_flow();
    let mut v: Vec<f64> = stream.flows.iter().map(|f| f / feed_total).collect();
    v.push((stream.temperature - problem.feed.temperature) / 100.0);
    v.push((stream.pressure / problem.feed.pressure).ln());
    Observation(v)
}

/// Map an action in [-1, 1]^4 onto a column spec: log mapping for
/// pressure and ratios, linear (rounded) for the stage count.
pub fn decode_action(action: [f64; 4], bounds: &ActionBounds) -> ColumnSpec {
    let unit = |a: f64| (a.clamp(-1.0, 1.0) + 1.0) / 2.0;
    let log_map = |a: f64, lo: f64, hi: f64| lo * (hi / lo).powf(unit(a));
    let pressure = log_map(action[0], bounds.pressure_min, bounds.pressure_max);
    let span = (bounds.stages_max - bounds.stages_min) as f64;
    let n_stages = (bounds.stages_min as f64 + unit(action[1]) * span).round() as usize;
    let reflux_ratio = log_map(action[2], bounds.ratio_min, bounds.ratio_max);
    let boilup_ratio = log_map(action[3], bounds.ratio_min, bounds.ratio_max);
    ColumnSpec { pressure, n_stages, reflux_ratio, boilup_ratio }
}

/// Why a branch left the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    Product,
    Outlet,
    Negligible,
}

/// One branch of a step outcome: either an open stream (encoded) or a
/// terminal label.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchOutcome {
    Open(Observation),
    Terminal(TerminalKind),
}

impl BranchOutcome {
    pub fn observation(&self) -> Option<&Observation> {
        match self {
            BranchOutcome::Open(obs) => Some(obs),
            BranchOutcome::Terminal(_) => None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, BranchOutcome::Terminal(_))
    }
}

/// The environment's reply to one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Scaled reward.
    pub reward: f64,
    pub tops: BranchOutcome,
    pub bottoms: BranchOutcome,
    pub episode_done: bool,
    /// True when the column simulation or its costing failed.
    pub failure: bool,
}

/// Per-episode counters surfaced to training logs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeStats {
    pub columns_placed: usize,
    pub failures: usize,
    /// $/yr over the whole episode.
    pub revenue_usd_per_yr: f64,
    /// $/yr over the whole episode.
    pub tac_usd_per_yr: f64,
}

/// Minimal interface the trainer needs from a tree-structured episode.
pub trait TreeEnv {
    fn reset(&mut self) -> Observation;
    /// Encoding of the stream the next decision is about, None when done.
    fn current_observation(&self) -> Option<Observation>;
    fn step_separate(&mut self, action: [f64; 4]) -> Result<StepOutcome, EnvError>;
    fn step_decline(&mut self) -> Result<StepOutcome, EnvError>;
    fn done(&self) -> bool;
    fn episode_stats(&self) -> EpisodeStats {
        EpisodeStats::default()
    }
    fn flowsheet(&self) -> Option<&Flowsheet> {
        None
    }
}

/// The distillation-train environment. Breadth-first over the deque of
/// unconnected streams; one instance per training context.
#[derive(Debug)]
pub struct DistillEnv {
    problem: ProblemSpec,
    /// Streams awaiting a decision, with their flowsheet leaf ids.
    deque: VecDeque<(Stream, usize)>,
    sheet: Flowsheet,
    columns_placed: usize,
    done: bool,
    episode_return: f64,
    stats: EpisodeStats,
    seed: u64,
}

impl DistillEnv {
    /// Build an environment for a validated problem. The seed is kept for
    /// reproducibility metadata; the environment itself is deterministic.
    pub fn new(problem: ProblemSpec, seed: u64) -> Result<Self, EnvError> {
        problem.validate()?;
        let sheet = Flowsheet::new(problem.component_names(), problem.feed.clone());
        let mut env = DistillEnv {
            problem,
            deque: VecDeque::new(),
            sheet,
            columns_placed: 0,
            done: false,
            episode_return: 0.0,
            stats: EpisodeStats::default(),
            seed,
        };
        env.reset_internal();
        Ok(env)
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    fn reset_internal(&mut self) {
        self.sheet = Flowsheet::new(self.problem.component_names(), self.problem.feed.clone());
        self.deque.clear();
        self.deque.push_back((self.problem.feed.clone(), self.sheet.root));
        self.columns_placed = 0;
        self.done = false;
        self.episode_return = 0.0;
        self.stats = EpisodeStats::default();
    }

    fn check_steppable(&self) -> Result<(), EnvError> {
        if self.done || self.deque.is_empty() {
            return Err(EnvError::EpisodeFinished);
        }
        Ok(())
    }

    /// Mark every stream still waiting in the deque as a process outlet.
    fn drain_open_to_outlets(&mut self) {
        while let Some((_, node)) = self.deque.pop_front() {
            self.sheet.set_leaf_label(node, LeafLabel::Outlet);
        }
    }

    fn finish_step(&mut self, reward: f64) -> bool {
        self.episode_return += reward;
        self.sheet.episode_return = self.episode_return;
        if self.columns_placed >= self.problem.max_columns {
            self.drain_open_to_outlets();
        }
        if self.deque.is_empty() {
            self.done = true;
        }
        self.done
    }

    /// Classify a product branch: negligible, saleable product, or open.
    fn classify_branch(&self, stream: &Stream) -> (LeafLabel, f64) {
        let feed_total = self.problem.feed.total_flow();
        if stream.total_flow() < NEGLIGIBLE_FRACTION * feed_total {
            return (LeafLabel::Negligible, 0.0);
        }
        let revenue = stream_revenue(
            &self.problem.components,
            stream,
            &self.problem.pricing,
            &self.problem.economics,
        );
        if revenue > 0.0 {
            (LeafLabel::Product, revenue)
        } else {
            (LeafLabel::Outlet, 0.0) // label rewritten to Open if enqueued
        }
    }
}

impl TreeEnv for DistillEnv {
    fn reset(&mut self) -> Observation {
        self.reset_internal();
        encode_state(&self.problem.feed, &self.problem)
    }

    fn current_observation(&self) -> Option<Observation> {
        if self.done {
            return None;
        }
        self.deque
            .front()
            .map(|(stream, _)| encode_state(stream, &self.problem))
    }

    fn step_separate(&mut self, action: [f64; 4]) -> Result<StepOutcome, EnvError> {
        self.check_steppable()?;
        let (feed, node) = self.deque.pop_front().expect("deque nonempty");
        let spec = decode_action(action, &self.problem.action_bounds);
        let result = solve_column(&self.problem.components, &feed, &spec);

        let costing = if result.converged {
            size_column(&self.problem.components, &result, &spec, &self.problem.economics)
                .and_then(|(d, h)| {
                    column_tac(&self.problem.components, &result, &spec, &self.problem.economics)
                        .map(|tac| (d, h, tac))
                })
                .ok()
        } else {
            None
        };

        let (d, h, tac) = match costing {
            Some(v) => v,
            None => {
                // Simulation or costing failure: fixed penalty, the stream
                // leaves the process unseparated.
                let reward = -self.problem.fail_penalty;
                self.stats.failures += 1;
                self.sheet.set_leaf_label(node, LeafLabel::Outlet);
                self.sheet.set_leaf_reward(node, reward);
                let done = self.finish_step(reward);
                return Ok(StepOutcome {
                    reward,
                    tops: BranchOutcome::Terminal(TerminalKind::Outlet),
                    bottoms: BranchOutcome::Terminal(TerminalKind::Outlet),
                    episode_done: done,
                    failure: true,
                });
            }
        };

        let (tops_label, tops_rev) = self.classify_branch(&result.distillate);
        let (bottoms_label, bottoms_rev) = self.classify_branch(&result.bottoms);
        let reward = step_reward(tac, tops_rev, bottoms_rev, self.problem.reward_scale);

        self.columns_placed += 1;
        self.stats.columns_placed += 1;
        self.stats.revenue_usd_per_yr += tops_rev + bottoms_rev;
        self.stats.tac_usd_per_yr += tac;
        self.sheet.total_revenue_usd_per_yr += tops_rev + bottoms_rev;
        self.sheet.total_tac_usd_per_yr += tac;

        let summary = ColumnSummary {
            condenser_duty: result.condenser_duty,
            reboiler_duty: result.reboiler_duty,
            condenser_temperature: result.stage_temperatures[0],
            reboiler_temperature: *result.stage_temperatures.last().unwrap(),
            max_vapor_flow: result.max_vapor_flow,
            iterations: result.iterations,
            diameter: d,
            height: h,
        };
        let enqueue_tops = tops_label == LeafLabel::Outlet;
        let enqueue_bottoms = bottoms_label == LeafLabel::Outlet;
        let (tops_id, bottoms_id) = self.sheet.place_column(
            node,
            self.columns_placed,
            spec,
            summary,
            tac,
            tops_rev + bottoms_rev,
            reward,
            (
                result.distillate.clone(),
                if enqueue_tops { LeafLabel::Open } else { tops_label },
            ),
            (
                result.bottoms.clone(),
                if enqueue_bottoms { LeafLabel::Open } else { bottoms_label },
            ),
        );

        let tops = if enqueue_tops {
            self.deque.push_back((result.distillate.clone(), tops_id));
            BranchOutcome::Open(encode_state(&result.distillate, &self.problem))
        } else {
            BranchOutcome::Terminal(match tops_label {
                LeafLabel::Product => TerminalKind::Product,
                LeafLabel::Negligible => TerminalKind::Negligible,
                _ => TerminalKind::Outlet,
            })
        };
        let bottoms = if enqueue_bottoms {
            self.deque.push_back((result.bottoms.clone(), bottoms_id));
            BranchOutcome::Open(encode_state(&result.bottoms, &self.problem))
        } else {
            BranchOutcome::Terminal(match bottoms_label {
                LeafLabel::Product => TerminalKind::Product,
                LeafLabel::Negligible => TerminalKind::Negligible,
                _ => TerminalKind::Outlet,
            })
        };

        let done = self.finish_step(reward);
        Ok(StepOutcome { reward, tops, bottoms, episode_done: done, failure: false })
    }

    fn step_decline(&mut self) -> Result<StepOutcome, EnvError> {
        self.check_steppable()?;
        let (_, node) = self.deque.pop_front().expect("deque nonempty");
        self.sheet.set_leaf_label(node, LeafLabel::Outlet);
        let done = self.finish_step(0.0);
        Ok(StepOutcome {
            reward: 0.0,
            tops: BranchOutcome::Terminal(TerminalKind::Outlet),
            bottoms: BranchOutcome::Terminal(TerminalKind::Outlet),
            episode_done: done,
            failure: false,
        })
    }

    fn done(&self) -> bool {
        self.done
    }

    fn episode_stats(&self) -> EpisodeStats {
        self.stats
    }

    fn flowsheet(&self) -> Option<&Flowsheet> {
        Some(&self.sheet)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermo::bundled;

    pub(crate) fn btx_problem() -> ProblemSpec {
        ProblemSpec {
            components: vec![
                bundled("benzene").unwrap(),
                bundled("toluene").unwrap(),
                bundled("p-xylene").unwrap(),
            ],
            feed: Stream::new(vec![3.35, 3.35, 3.35], 298.15, ATM),
            pricing: ProductPricing {
                purity_spec: 0.95,
                prices: vec![488.0, 488.0, 510.0],
            },
            economics: EconomicParams::default(),
            action_bounds: ActionBounds::default(),
            max_columns: 12,
            fail_penalty: 0.1,
            reward_scale: 1e7,
        }
    }

    #[test]
    fn reset_encodes_feed() {
        let mut env = DistillEnv::new(btx_problem(), 7).unwrap();
        let obs = env.reset();
        let third = 1.0 / 3.0;
        assert_eq!(obs.len(), 5);
        for i in 0..3 {
            assert!((obs.0[i] - third).abs() < 1e-12);
        }
        assert_eq!(obs.0[3], 0.0);
        assert_eq!(obs.0[4], 0.0);
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = DistillEnv::new(btx_problem(), 3).unwrap();
        let mut b = DistillEnv::new(btx_problem(), 3).unwrap();
        assert_eq!(a.reset(), b.reset());
    }

    #[test]
    fn invalid_problem_lists_fields() {
        let mut p = btx_problem();
        p.pricing.prices.pop();
        p.feed.flows[0] = -1.0;
        let err = DistillEnv::new(p, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("pricing.prices"), "{msg}");
        assert!(msg.contains("feed.flows"), "{msg}");
    }

    #[test]
    fn decode_action_midpoint_and_endpoints() {
        let bounds = ActionBounds::default();
        let mid = decode_action([0.0; 4], &bounds);
        assert!((mid.pressure / ATM - 12f64.sqrt()).abs() < 1e-9);
        assert_eq!(mid.n_stages, 33); // round(32.5) away from zero
        assert!((mid.reflux_ratio - 2f64.sqrt()).abs() < 1e-9);
        assert!((mid.boilup_ratio - 2f64.sqrt()).abs() < 1e-9);

        let lo = decode_action([-1.0; 4], &bounds);
        assert_eq!(lo.pressure, bounds.pressure_min);
        assert_eq!(lo.n_stages, bounds.stages_min);
        assert_eq!(lo.reflux_ratio, bounds.ratio_min);

        let hi = decode_action([1.0; 4], &bounds);
        assert!((hi.pressure - bounds.pressure_max).abs() < 1e-9 * bounds.pressure_max);
        assert_eq!(hi.n_stages, bounds.stages_max);
        assert!((hi.boilup_ratio - bounds.ratio_max).abs() < 1e-12 * bounds.ratio_max);
    }

    #[test]
    fn encode_state_pressure_term() {
        let p = btx_problem();
        let s = Stream::new(vec![1.0, 0.0, 0.0], 298.15, 10.0 * ATM);
        let obs = encode_state(&s, &p);
        assert!((obs.0[4] - 10f64.ln()).abs() < 1e-12);
    }

    /// Action-space coordinate hitting a given physical value.
    pub(crate) fn action_for(spec: (f64, usize, f64, f64), bounds: &ActionBounds) -> [f64; 4] {
        let log_coord = |v: f64, lo: f64, hi: f64| 2.0 * ((v / lo).ln() / (hi / lo).ln()) - 1.0;
        [
            log_coord(spec.0, bounds.pressure_min, bounds.pressure_max),
            2.0 * (spec.1 as f64 - bounds.stages_min as f64)
                / (bounds.stages_max - bounds.stages_min) as f64
                - 1.0,
            log_coord(spec.2, bounds.ratio_min, bounds.ratio_max),
            log_coord(spec.3, bounds.ratio_min, bounds.ratio_max),
        ]
    }

    #[test]
    fn separate_btx_labels_benzene_product() {
        let mut env = DistillEnv::new(btx_problem(), 0).unwrap();
        env.reset();
        // R = 5, s = 3 puts the distillate rate at the benzene feed rate,
        // so 30 trays cut a saleable benzene top.
        let a = action_for((ATM, 30, 5.0, 3.0), &ActionBounds::default());
        let out = env.step_separate(a).unwrap();
        assert!(!out.failure);
        // The tops should be nearly pure benzene and sold.
        assert_eq!(out.tops, BranchOutcome::Terminal(TerminalKind::Product));
        // The bottoms (toluene + xylene) stay open for further separation.
        assert!(matches!(out.bottoms, BranchOutcome::Open(_)));
        assert!(out.reward > 0.0, "reward = {}", out.reward);
        assert!(!out.episode_done);
    }

    #[test]
    fn infeasible_pressure_is_failure_with_penalty() {
        let mut env = DistillEnv::new(btx_problem(), 0).unwrap();
        env.reset();
        // Max pressure pushes the condenser far above cooling water range
        // only if it converges; more typically the bubble-point solve
        // fails outright. Either way: failure contract.
        let out = env.step_separate([1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(out.failure);
        assert!((out.reward + 0.1).abs() < 1e-12);
        assert!(out.tops.is_terminal() && out.bottoms.is_terminal());
        assert!(out.episode_done);
    }

    #[test]
    fn decline_single_stream_ends_episode() {
        let mut env = DistillEnv::new(btx_problem(), 0).unwrap();
        env.reset();
        let out = env.step_decline().unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(out.episode_done);
        assert!(env.done());
        let sheet = env.flowsheet().unwrap();
        assert_eq!(sheet.columns_placed(), 0);
        assert_eq!(sheet.leaves().count(), 1);
        assert!(env.step_decline().is_err());
    }

    #[test]
    fn max_columns_drains_deque() {
        let mut p = btx_problem();
        p.max_columns = 1;
        let mut env = DistillEnv::new(p, 0).unwrap();
        env.reset();
        let out = env.step_separate([0.0, 0.0, 0.5, 0.5]).unwrap();
        assert!(out.episode_done, "episode must end at max_columns");
        assert!(env.done());
        assert!(!env.flowsheet().unwrap().has_open_leaves());
    }

    #[test]
    fn episode_conserves_mass_across_leaves() {
        let mut env = DistillEnv::new(btx_problem(), 0).unwrap();
        env.reset();
        let mut all_converged = true;
        while !env.done() {
            let out = env.step_separate([0.0, 0.2, 0.3, 0.3]).unwrap();
            all_converged &= !out.failure;
        }
        if all_converged {
            let totals = env.flowsheet().unwrap().leaf_flow_totals();
            for (t, f) in totals.iter().zip(&env.problem().feed.flows) {
                assert!((t - f).abs() <= 1e-6 * f, "leaf total {t} vs feed {f}");
            }
        }
    }

    #[test]
    fn tree_reward_sum_matches_episode_return() {
        let mut env = DistillEnv::new(btx_problem(), 0).unwrap();
        env.reset();
        while !env.done() {
            env.step_separate([0.0, 0.2, 0.3, 0.3]).unwrap();
        }
        let sheet = env.flowsheet().unwrap();
        assert!(
            (sheet.tree_reward_sum() - env.episode_return()).abs() < 1e-12,
            "tree {} vs return {}",
            sheet.tree_reward_sum(),
            env.episode_return()
        );
    }

    #[test]
    fn observations_keep_fixed_shape() {
        let mut env = DistillEnv::new(btx_problem(), 0).unwrap();
        let first = env.reset();
        let mut lens = vec![first.len()];
        while !env.done() {
            if let Some(obs) = env.current_observation() {
                lens.push(obs.len());
            }
            env.step_separate([0.1, 0.0, 0.25, 0.25]).unwrap();
        }
        assert!(lens.iter().all(|&l| l == first.len()));
    }

    #[test]
    fn identical_action_sequences_are_deterministic() {
        let actions = [
            [0.0, 0.2, 0.3, 0.3],
            [-0.2, 0.1, 0.4, 0.2],
            [0.1, -0.1, 0.2, 0.5],
        ];
        let run = || {
            let mut env = DistillEnv::new(btx_problem(), 11).unwrap();
            env.reset();
            let mut rewards = Vec::new();
            let mut i = 0;
            while !env.done() {
                let out = env.step_separate(actions[i % actions.len()]).unwrap();
                rewards.push(out.reward);
                i += 1;
            }
            (rewards, env.flowsheet().unwrap().to_json().unwrap())
        };
        let (r1, j1) = run();
        let (r2, j2) = run();
        assert_eq!(r1, r2);
        assert_eq!(j1, j2);
    }
}
