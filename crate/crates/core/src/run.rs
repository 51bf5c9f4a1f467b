//! Runs: round-by-round traces of β-sets with derived histories.
//!
//! A run stores what happened in each round as ground truth and keeps the
//! environment history and each agent's local history as caches. Rounds are
//! produced either by the five-phase transition ([`step_round`]) or, for the
//! prefix of an adjusted run, directly from intervention outputs.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter;
use crate::hap::{AgentId, GlobalHap, HapSet, Label, LocalHistory, LocalSet, Time};
use crate::protocol::{Admissibility, AgentContext};
use crate::text::{parse_hap_set, set_string};

/// Budget used when a single step has to list the closure of `P_ε(t)`.
pub const STEP_BUDGET: usize = 1 << 20;

/// The adversary's pick from `P_ε(t)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EnvPick {
    /// Position in the listed range (base options first).
    Index(usize),
    /// An explicit member of the range.
    Set(HapSet),
}

/// Phase-2 choices for one round. Missing agent indices default to 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundChoice {
    pub env: EnvPick,
    pub agents: Vec<usize>,
}

impl RoundChoice {
    pub fn first() -> Self {
        RoundChoice {
            env: EnvPick::Index(0),
            agents: Vec::new(),
        }
    }

    pub fn agent(&self, agent: AgentId) -> usize {
        self.agents.get(agent.index()).copied().unwrap_or(0)
    }
}

/// A full adversary script: initial state and per-round choices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Script {
    pub initial: usize,
    pub rounds: Vec<RoundChoice>,
}

/// Attempted haps of a transitional round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alpha {
    pub env: HapSet,
    pub agents: Vec<HapSet>,
    pub choice: RoundChoice,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Round {
    /// `None` for rounds written directly by an adjustment.
    pub alpha: Option<Alpha>,
    pub beta_env: HapSet,
    pub beta_agents: Vec<HapSet>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct LocalTrack {
    records: Vec<LocalSet>,
    /// Number of records at each timestamp.
    count_at: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Run {
    initial: Vec<Label>,
    rounds: Vec<Round>,
    surgical_prefix: usize,
    env_records: Vec<HapSet>,
    locals: Vec<LocalTrack>,
}

impl Run {
    pub fn new(initial: Vec<Label>) -> Self {
        let locals = initial
            .iter()
            .map(|_| LocalTrack {
                records: Vec::new(),
                count_at: vec![0],
            })
            .collect();
        Run {
            initial,
            rounds: Vec::new(),
            surgical_prefix: 0,
            env_records: Vec::new(),
            locals,
        }
    }

    pub fn n(&self) -> usize {
        self.initial.len()
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> {
        (0..self.n()).map(AgentId::from_index)
    }

    pub fn initial(&self) -> &[Label] {
        &self.initial
    }

    /// Current timestamp: the number of rounds so far.
    pub fn time(&self) -> Time {
        self.rounds.len() as Time
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn round(&self, m: Time) -> &Round {
        &self.rounds[m as usize]
    }

    pub fn beta_env(&self, m: Time) -> &HapSet {
        &self.rounds[m as usize].beta_env
    }

    pub fn beta_agent(&self, agent: AgentId, m: Time) -> &HapSet {
        &self.rounds[m as usize].beta_agents[agent.index()]
    }

    /// Number of leading rounds written by an adjustment rather than the
    /// transition relation.
    pub fn surgical_prefix(&self) -> usize {
        self.surgical_prefix
    }

    /// `r_ε(t)` as the list of round records, oldest first.
    pub fn env_history(&self, t: Time) -> &[HapSet] {
        &self.env_records[..t as usize]
    }

    /// `r_i(t)`.
    pub fn local(&self, agent: AgentId, t: Time) -> LocalHistory {
        let (initial, records) = self.local_view(agent, t);
        LocalHistory {
            initial: initial.clone(),
            records: records.to_vec(),
        }
    }

    pub fn local_view(&self, agent: AgentId, t: Time) -> (&Label, &[LocalSet]) {
        let track = &self.locals[agent.index()];
        (
            &self.initial[agent.index()],
            &track.records[..track.count_at[t as usize]],
        )
    }

    /// Number of records in `r_i(t)`.
    pub fn local_len(&self, agent: AgentId, t: Time) -> usize {
        self.locals[agent.index()].count_at[t as usize]
    }

    pub fn truncated(&self, t: Time) -> Run {
        let mut out = Run::new(self.initial.clone());
        for r in &self.rounds[..t as usize] {
            out.push(r.clone());
        }
        out.surgical_prefix = self.surgical_prefix.min(t as usize);
        out
    }

    /// Appends a round, updating histories with `update_ε` and `update_i`.
    pub(crate) fn push(&mut self, round: Round) {
        self.env_records
            .push(filter::env_record(&round.beta_env, &round.beta_agents));
        for (k, track) in self.locals.iter_mut().enumerate() {
            let agent = AgentId::from_index(k);
            if filter::triggers_update(agent, &round.beta_env) {
                let mine = round
                    .beta_env
                    .iter()
                    .filter(|h| h.is_event() && h.agent() == agent)
                    .chain(round.beta_agents[k].iter());
                track.records.push(crate::hap::sigma(mine));
            }
            track.count_at.push(track.records.len());
        }
        self.rounds.push(round);
    }

    /// Appends a round written directly by an adjustment.
    pub fn push_surgical(&mut self, beta_env: HapSet, beta_agents: Vec<HapSet>) -> Result<()> {
        if self.surgical_prefix != self.rounds.len() {
            return Err(Error::Precondition(
                "surgical rounds must precede transitional ones".into(),
            ));
        }
        self.push(Round {
            alpha: None,
            beta_env,
            beta_agents,
        });
        self.surgical_prefix += 1;
        Ok(())
    }

    /// Round in which `agent` first suffered a fault event.
    pub fn first_fault(&self, agent: AgentId) -> Option<Time> {
        self.rounds
            .iter()
            .position(|r| r.beta_env.iter().any(|h| h.is_fault_of(agent)))
            .map(|m| m as Time)
    }

    /// Agents with a fault event in rounds before `t`.
    pub fn faulty_by(&self, t: Time) -> Vec<AgentId> {
        self.agents()
            .filter(|a| self.first_fault(*a).is_some_and(|m| m < t))
            .collect()
    }

    pub fn trace_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (m, r) in self.rounds.iter().enumerate() {
            let tag = if m < self.surgical_prefix { " surgical" } else { "" };
            if let Some(a) = &r.alpha {
                out.push(format!("round {m} alpha env {}", set_string(&a.env)));
            }
            out.push(format!("round {m}{tag} env {}", set_string(&r.beta_env)));
            for (k, b) in r.beta_agents.iter().enumerate() {
                out.push(format!("round {m}{tag} agent {} {}", k + 1, set_string(b)));
            }
        }
        out
    }
}

/// Phases 1 to 5 of round `run.time()`.
pub fn step_round(ctx: &AgentContext, run: &Run, choice: &RoundChoice) -> Result<Run> {
    let mut next = run.clone();
    step_in_place(ctx, &mut next, choice)?;
    Ok(next)
}

fn env_pick(ctx: &AgentContext, t: Time, pick: &EnvPick) -> Result<HapSet> {
    match pick {
        EnvPick::Index(k) => {
            let base = ctx.env.base_range(t);
            if let Some(x) = base.get(*k) {
                return Ok(x.clone());
            }
            let full = ctx.env.materialize(&ctx.sig, t, STEP_BUDGET)?;
            full.get(*k).cloned().ok_or_else(|| Error::Choice {
                round: t,
                reason: format!("environment option {k} of {}", full.len()),
            })
        }
        EnvPick::Set(x) => {
            if ctx.env.contains(&ctx.sig, t, x) {
                Ok(x.clone())
            } else {
                Err(Error::Choice {
                    round: t,
                    reason: format!("{} is not offered by the environment", set_string(x)),
                })
            }
        }
    }
}

fn step_in_place(ctx: &AgentContext, run: &mut Run, choice: &RoundChoice) -> Result<()> {
    let t = run.time();
    if t >= ctx.horizon() {
        return Err(Error::Horizon(format!("no round {t} below horizon {}", ctx.horizon())));
    }
    let alpha_env = env_pick(ctx, t, &choice.env)?;
    apply_choice(ctx, run, alpha_env, choice)
}

/// Phases 2 to 5 once the environment's set is fixed.
fn apply_choice(
    ctx: &AgentContext,
    run: &mut Run,
    alpha_env: HapSet,
    choice: &RoundChoice,
) -> Result<()> {
    let t = run.time();
    if t >= ctx.horizon() {
        return Err(Error::Horizon(format!("no round {t} below horizon {}", ctx.horizon())));
    }
    if choice.agents.len() > ctx.sig.n() {
        return Err(Error::Choice {
            round: t,
            reason: format!("{} agent choices for {} agents", choice.agents.len(), ctx.sig.n()),
        });
    }
    let mut alpha_agents = Vec::with_capacity(ctx.sig.n());
    for agent in ctx.sig.agents() {
        let (initial, records) = run.local_view(agent, t);
        let history = LocalHistory {
            initial: initial.clone(),
            records: records.to_vec(),
        };
        let range = ctx.protocol(agent).range(&history);
        let k = choice.agent(agent);
        let picked = range.get(k).ok_or_else(|| Error::Choice {
            round: t,
            reason: format!("agent {agent} option {k} of {}", range.len()),
        })?;
        let globals = picked
            .iter()
            .map(|a| ctx.sig.globalize(agent, t, a))
            .collect::<Result<HapSet>>()?;
        alpha_agents.push(globals);
    }
    let beta_env = filter::filter_env(run.env_history(t), &alpha_env, &alpha_agents, ctx.f);
    let beta_agents = ctx
        .sig
        .agents()
        .map(|a| filter::filter_agent(a, &alpha_agents, &beta_env))
        .collect();
    run.push(Round {
        alpha: Some(Alpha {
            env: alpha_env,
            agents: alpha_agents,
            choice: choice.clone(),
        }),
        beta_env,
        beta_agents,
    });
    Ok(())
}

pub fn run_script(ctx: &AgentContext, script: &Script) -> Result<Run> {
    let mut run = Run::new(ctx.initial_state(script.initial)?);
    for c in &script.rounds {
        step_in_place(ctx, &mut run, c)?;
    }
    Ok(run)
}

/// How a run is extended after its adjusted prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Continuation {
    /// First offered option everywhere.
    FirstOption,
    /// Explicit choices; must cover every remaining round.
    Script(Vec<RoundChoice>),
}

/// Extends `run` transitionally up to the horizon.
pub fn continue_run(ctx: &AgentContext, run: &Run, continuation: &Continuation) -> Result<Run> {
    let mut out = run.clone();
    let remaining = ctx.horizon().saturating_sub(run.time()) as usize;
    match continuation {
        Continuation::FirstOption => {
            for _ in 0..remaining {
                step_in_place(ctx, &mut out, &RoundChoice::first())?;
            }
        }
        Continuation::Script(choices) => {
            if choices.len() < remaining {
                return Err(Error::Horizon(format!(
                    "continuation covers {} of {remaining} remaining rounds",
                    choices.len()
                )));
            }
            for c in &choices[..remaining] {
                step_in_place(ctx, &mut out, c)?;
            }
        }
    }
    Ok(out)
}

/// Which environment options enumeration and random drivers draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RangeMode {
    /// The full closure over the bounded fault domain.
    Full,
    /// Only the options listed explicitly.
    Base,
}

fn env_ranges(ctx: &AgentContext, mode: RangeMode, budget: usize) -> Result<Vec<Vec<HapSet>>> {
    (0..ctx.horizon())
        .map(|t| match mode {
            RangeMode::Base => Ok(ctx.env.base_range(t).to_vec()),
            RangeMode::Full => ctx.env.materialize(&ctx.sig, t, budget),
        })
        .collect()
}

/// Upper bound on the number of runs `enumerate_runs` would produce.
pub fn estimate_runs(ctx: &AgentContext, mode: RangeMode, budget: usize) -> Result<u128> {
    let ranges = env_ranges(ctx, mode, budget)?;
    let per_round: u128 = ctx.agents.iter().map(|p| p.max_range() as u128).product();
    Ok(ranges
        .iter()
        .fold(ctx.initial_count() as u128, |acc, r| {
            acc.saturating_mul(r.len() as u128).saturating_mul(per_round)
        }))
}

fn agent_choices(ctx: &AgentContext, run: &Run) -> Vec<Vec<usize>> {
    let t = run.time();
    let mut out = vec![Vec::new()];
    for agent in ctx.sig.agents() {
        let (initial, records) = run.local_view(agent, t);
        let h = LocalHistory {
            initial: initial.clone(),
            records: records.to_vec(),
        };
        let len = ctx.protocol(agent).range(&h).len();
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..len).map(move |k| {
                    let mut p = prefix.clone();
                    p.push(k);
                    p
                })
            })
            .collect();
    }
    out
}

fn branch_choices(ctx: &AgentContext, run: &Run, env_len: usize) -> Vec<RoundChoice> {
    let agents = agent_choices(ctx, run);
    (0..env_len)
        .flat_map(|e| {
            agents.iter().map(move |a| RoundChoice {
                env: EnvPick::Index(e),
                agents: a.clone(),
            })
        })
        .collect()
}

struct Enumerator<'a> {
    ctx: &'a AgentContext,
    ranges: Vec<Vec<HapSet>>,
    budget: usize,
    count: AtomicUsize,
    estimate: u128,
}

impl Enumerator<'_> {
    fn step(&self, run: &Run, c: &RoundChoice) -> Result<Run> {
        let t = run.time();
        let EnvPick::Index(e) = c.env else {
            unreachable!("enumeration picks by index")
        };
        let mut next = run.clone();
        apply_choice(self.ctx, &mut next, self.ranges[t as usize][e].clone(), c)?;
        Ok(next)
    }

    fn dfs(&self, run: Run, out: &mut Vec<Run>) -> Result<()> {
        if run.time() >= self.ctx.horizon() {
            let n = self.count.fetch_add(1, Ordering::Relaxed) + 1;
            if n > self.budget {
                return Err(Error::Budget {
                    limit: self.budget,
                    explored: n,
                    estimate: self.estimate,
                });
            }
            out.push(run);
            return Ok(());
        }
        let env_len = self.ranges[run.time() as usize].len();
        for c in branch_choices(self.ctx, &run, env_len) {
            let next = self.step(&run, &c)?;
            self.dfs(next, out)?;
        }
        Ok(())
    }
}

/// Every weakly consistent run prefix up to the horizon, filtered by the
/// admissibility approximation. Order: initial state, then choices in
/// lexicographic order (environment first, then agents by id).
pub fn enumerate_runs(ctx: &AgentContext, mode: RangeMode, budget: usize) -> Result<Vec<Run>> {
    let ranges = env_ranges(ctx, mode, budget)?;
    let estimate = estimate_runs(ctx, mode, budget)?;
    let e = Enumerator {
        ctx,
        ranges,
        budget,
        count: AtomicUsize::new(0),
        estimate,
    };
    let mut starts = Vec::new();
    for k in 0..ctx.initial_count() {
        let run = Run::new(ctx.initial_state(k)?);
        for c in branch_choices(ctx, &run, e.ranges[0].len()) {
            starts.push((run.clone(), c));
        }
    }
    let parts: Vec<Result<Vec<Run>>> = starts
        .par_iter()
        .map(|(run, c)| {
            let mut out = Vec::new();
            e.dfs(e.step(run, c)?, &mut out)?;
            Ok(out)
        })
        .collect();
    let mut runs = Vec::new();
    for p in parts {
        runs.extend(p?);
    }
    Ok(runs
        .into_iter()
        .filter(|r| match ctx.admissibility {
            Admissibility::None => true,
            Admissibility::FairSchedule { window } => check_fair_schedule_prefix(r, window),
        })
        .collect())
}

/// Every agent gets a system event within every `window` consecutive rounds.
pub fn check_fair_schedule_prefix(run: &Run, window: u32) -> bool {
    let w = window.max(1) as usize;
    let rounds = run.rounds();
    if rounds.len() < w {
        return true;
    }
    run.agents().all(|a| {
        rounds.windows(w).all(|span| {
            span.iter().any(|r| {
                r.beta_env
                    .iter()
                    .any(|h| h.is_system() && h.agent() == a)
            })
        })
    })
}

/// Draws a script uniformly at random from a seeded generator.
pub fn random_script(ctx: &AgentContext, seed: u64, mode: RangeMode) -> Result<(Script, Run)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = rng.gen_range(0..ctx.initial_count());
    let mut run = Run::new(ctx.initial_state(initial)?);
    let mut rounds = Vec::new();
    for t in 0..ctx.horizon() {
        let env_len = match mode {
            RangeMode::Base => ctx.env.base_range(t).len(),
            RangeMode::Full => ctx.env.materialize(&ctx.sig, t, STEP_BUDGET)?.len(),
        };
        let env = EnvPick::Index(rng.gen_range(0..env_len));
        let mut agents = Vec::new();
        for agent in ctx.sig.agents() {
            let h = run.local(agent, t);
            agents.push(rng.gen_range(0..ctx.protocol(agent).range(&h).len()));
        }
        let c = RoundChoice { env, agents };
        step_in_place(ctx, &mut run, &c)?;
        rounds.push(c);
    }
    Ok((Script { initial, rounds }, run))
}

#[derive(Serialize, Deserialize)]
struct RoundDump {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    env: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    env_set: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    agents: Vec<usize>,
    beta_env: String,
    beta_agents: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RunDump {
    initial: Vec<String>,
    rounds: Vec<RoundDump>,
}

/// Machine-readable dump: initial state, choices and β-sets per round.
pub fn dump_run(run: &Run) -> String {
    let rounds = run
        .rounds()
        .iter()
        .map(|r| {
            let (kind, env, env_set, agents) = match &r.alpha {
                None => ("surgical", None, None, Vec::new()),
                Some(a) => match &a.choice.env {
                    EnvPick::Index(k) => ("step", Some(*k), None, a.choice.agents.clone()),
                    EnvPick::Set(x) => ("step", None, Some(set_string(x)), a.choice.agents.clone()),
                },
            };
            RoundDump {
                kind: kind.into(),
                env,
                env_set,
                agents,
                beta_env: set_string(&r.beta_env),
                beta_agents: r.beta_agents.iter().map(set_string).collect(),
            }
        })
        .collect();
    let dump = RunDump {
        initial: run.initial().iter().map(|l| l.to_string()).collect(),
        rounds,
    };
    serde_json::to_string_pretty(&dump).expect("dump serializes")
}

/// Rebuilds a dumped run: adjusted rounds are taken as recorded, transitional
/// rounds are re-executed and must reproduce the recorded β-sets.
pub fn replay_run(ctx: &AgentContext, dump: &str) -> Result<Run> {
    let d: RunDump = serde_json::from_str(dump).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if d.initial.len() != ctx.sig.n() {
        return Err(Error::Validation("dump has the wrong number of agents".into()));
    }
    let mut run = Run::new(d.initial.iter().map(|s| Label::new(s)).collect());
    for (m, r) in d.rounds.iter().enumerate() {
        let beta_env = parse_hap_set(&ctx.sig, &r.beta_env)?;
        let beta_agents = r
            .beta_agents
            .iter()
            .map(|s| parse_hap_set(&ctx.sig, s))
            .collect::<Result<Vec<_>>>()?;
        match r.kind.as_str() {
            "surgical" => run.push_surgical(beta_env, beta_agents)?,
            "step" => {
                let env = match (&r.env, &r.env_set) {
                    (Some(k), None) => EnvPick::Index(*k),
                    (None, Some(s)) => EnvPick::Set(parse_hap_set(&ctx.sig, s)?),
                    _ => {
                        return Err(Error::Validation(format!(
                            "round {m}: exactly one of env and env_set"
                        )))
                    }
                };
                let choice = RoundChoice {
                    env,
                    agents: r.agents.clone(),
                };
                step_in_place(ctx, &mut run, &choice)?;
                let got = run.rounds.last().expect("just pushed");
                if got.beta_env != beta_env || got.beta_agents != beta_agents {
                    return Err(Error::Integrity(format!(
                        "round {m} does not reproduce the recorded β-sets"
                    )));
                }
            }
            other => return Err(Error::Validation(format!("unknown round kind `{other}`"))),
        }
    }
    Ok(run)
}

/// Correct receives in `run` that no send grounds in
/// the same or an earlier round; empty for transitional runs.
pub fn ungrounded_receives(run: &Run) -> Vec<(Time, GlobalHap)> {
    let mut out = Vec::new();
    for m in 0..run.time() {
        for h in run.beta_env(m) {
            if let GlobalHap::Recv(r) = h {
                let grounded = run.env_history(m + 1).iter().any(|rec| {
                    rec.iter().any(|x| match x {
                        GlobalHap::Send(s) => r.matches(s),
                        other => other.fake_performed_send().is_some_and(|s| r.matches(s)),
                    })
                });
                if !grounded {
                    out.push((m, h.clone()));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hap::{LocalHap, Signature};
    use crate::protocol::{AgentFlags, AgentProtocol, EnvProtocol, FaultDomain};
    use std::collections::BTreeMap;

    fn sig(n: u16, h: Time) -> Signature {
        Signature::new(n, vec!["m".into()], vec!["o".into()], vec![], 1, h).unwrap()
    }

    fn ctx_with(sig: Signature, env: EnvProtocol, agents: Vec<AgentProtocol>, f: usize) -> AgentContext {
        let n = sig.n();
        AgentContext::new(sig, env, agents, vec![vec!["s0".into()]; n], f, Admissibility::None)
            .unwrap()
    }

    fn sender(s: &Signature) -> AgentProtocol {
        let send: LocalSet = [LocalHap::Send {
            to: AgentId(2),
            msg: "m".into(),
            copy: 0,
        }]
        .into();
        AgentProtocol::new(
            s,
            [(LocalHistory::new("s0".into()), vec![send])].into(),
            vec![],
            vec![LocalSet::new()],
        )
        .unwrap()
    }

    #[test]
    fn empty_step() {
        let s = sig(2, 3);
        let env = EnvProtocol::uniform(&s, vec![HapSet::new()]).unwrap();
        let ctx = ctx_with(s, env, vec![AgentProtocol::idle(), AgentProtocol::idle()], 0);
        let run = step_round(&ctx, &Run::new(ctx.initial_state(0).unwrap()), &RoundChoice::first())
            .unwrap();
        assert_eq!(run.env_history(1), &[HapSet::new()]);
        assert_eq!(run.local_len(AgentId(1), 1), 0);
        assert_eq!(run.local_len(AgentId(2), 1), 0);
    }

    #[test]
    fn send_and_deliver_in_one_round() {
        let s = sig(2, 2);
        let g = s.encode_gmi(AgentId(1), AgentId(2), &"m".into(), 0, 0).unwrap();
        let x = crate::text::parse_hap_set(&s, &format!("{{go(1), go(2), grecv(2<-1, m, {g})}}"))
            .unwrap();
        let env = EnvProtocol::uniform(&s, vec![x]).unwrap();
        let ctx = ctx_with(s.clone(), env, vec![sender(&s), AgentProtocol::idle()], 0);
        let run = step_round(&ctx, &Run::new(ctx.initial_state(0).unwrap()), &RoundChoice::first())
            .unwrap();
        let r2 = run.local(AgentId(2), 1);
        assert_eq!(
            r2.records,
            vec![[LocalHap::Recv {
                from: AgentId(1),
                msg: "m".into()
            }]
            .into()]
        );
        assert_eq!(run.beta_agent(AgentId(1), 0).len(), 1);
    }

    #[test]
    fn orphan_receive_filtered() {
        let s = sig(2, 2);
        let g = s.encode_gmi(AgentId(1), AgentId(2), &"m".into(), 0, 0).unwrap();
        let x = crate::text::parse_hap_set(&s, &format!("{{grecv(2<-1, m, {g})}}")).unwrap();
        let env = EnvProtocol::uniform(&s, vec![x]).unwrap();
        let ctx = ctx_with(s, env, vec![AgentProtocol::idle(), AgentProtocol::idle()], 0);
        let run = step_round(&ctx, &Run::new(ctx.initial_state(0).unwrap()), &RoundChoice::first())
            .unwrap();
        assert!(run.beta_env(0).is_empty());
        assert_eq!(run.local_len(AgentId(2), 1), 0);
    }

    #[test]
    fn invalid_choices() {
        let s = sig(1, 2);
        let env = EnvProtocol::uniform(&s, vec![HapSet::new()]).unwrap();
        let ctx = ctx_with(s, env, vec![AgentProtocol::idle()], 0);
        let run = Run::new(ctx.initial_state(0).unwrap());
        let bad_env = RoundChoice {
            env: EnvPick::Index(1),
            agents: vec![],
        };
        assert!(matches!(step_round(&ctx, &run, &bad_env), Err(Error::Choice { .. })));
        let bad_agent = RoundChoice {
            env: EnvPick::Index(0),
            agents: vec![3],
        };
        assert!(matches!(step_round(&ctx, &run, &bad_agent), Err(Error::Choice { .. })));
    }

    #[test]
    fn enumeration_counts() {
        let s = sig(1, 3);
        let env = EnvProtocol::uniform(&s, vec![HapSet::new()]).unwrap();
        let ctx = ctx_with(s, env, vec![AgentProtocol::idle()], 0);
        assert_eq!(enumerate_runs(&ctx, RangeMode::Base, 100).unwrap().len(), 1);

        let s = sig(1, 2);
        let go = crate::text::parse_hap_set(&s, "{go(1)}").unwrap();
        let env = EnvProtocol::new(
            &s,
            [(0, vec![HapSet::new(), go.clone()])].into(),
            vec![go],
            vec![AgentFlags::default()],
            FaultDomain::default(),
        )
        .unwrap();
        let ctx = ctx_with(s, env, vec![AgentProtocol::idle()], 0);
        assert_eq!(enumerate_runs(&ctx, RangeMode::Base, 100).unwrap().len(), 2);
        assert!(matches!(
            enumerate_runs(&ctx, RangeMode::Base, 1),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn fair_schedule_windows() {
        let s = sig(2, 4);
        let all = crate::text::parse_hap_set(&s, "{go(1), go(2)}").unwrap();
        let one = crate::text::parse_hap_set(&s, "{go(1)}").unwrap();
        let env = EnvProtocol::uniform(&s, vec![all, one]).unwrap();
        let ctx = ctx_with(s.clone(), env, vec![AgentProtocol::idle(), AgentProtocol::idle()], 0);
        let by = |e: Vec<usize>| Script {
            initial: 0,
            rounds: e
                .into_iter()
                .map(|k| RoundChoice {
                    env: EnvPick::Index(k),
                    agents: vec![],
                })
                .collect(),
        };
        let always = run_script(&ctx, &by(vec![0, 0, 0, 0])).unwrap();
        assert!(check_fair_schedule_prefix(&always, 1));
        let never2 = run_script(&ctx, &by(vec![1, 1, 1, 1])).unwrap();
        assert!(!check_fair_schedule_prefix(&never2, 3));
        let alt = run_script(&ctx, &by(vec![0, 1, 0, 1])).unwrap();
        assert!(check_fair_schedule_prefix(&alt, 2));
        assert!(!check_fair_schedule_prefix(&alt, 1));
    }

    #[test]
    fn dump_replay_round_trip() {
        let s = sig(2, 3);
        let g = s.encode_gmi(AgentId(1), AgentId(2), &"m".into(), 0, 0).unwrap();
        let x = crate::text::parse_hap_set(&s, &format!("{{go(1), go(2), grecv(2<-1, m, {g})}}"))
            .unwrap();
        let env = EnvProtocol::new(
            &s,
            BTreeMap::new(),
            vec![x, HapSet::new()],
            vec![AgentFlags::ALL; 2],
            FaultDomain {
                fake_sends: false,
                ..Default::default()
            },
        )
        .unwrap();
        let ctx = ctx_with(s.clone(), env, vec![sender(&s), AgentProtocol::idle()], 1);
        for seed in 0..5 {
            let (script, run) = random_script(&ctx, seed, RangeMode::Full).unwrap();
            assert_eq!(run_script(&ctx, &script).unwrap(), run);
            let text = dump_run(&run);
            let back = replay_run(&ctx, &text).unwrap();
            assert_eq!(back, run);
            assert_eq!(dump_run(&back), text);
            assert!(ungrounded_receives(&run).is_empty());
        }
    }
}
