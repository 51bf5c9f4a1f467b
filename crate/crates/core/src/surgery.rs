//! Run surgery: interventions, adjustments and the cone-equivalent run.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use crate::causal::{build_causal_graph, node_correct, partition_with, path_exists, Class, ConePartition, Node};
use crate::error::{Error, Result};
use crate::filter;
use crate::hap::{AgentId, CorrectAction, GlobalHap, HapSet, Signature, Time};
use crate::protocol::AgentContext;
use crate::run::{continue_run, Continuation, Run};
use crate::text::set_string;

/// What an adjustment does to one agent in one round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Intervention {
    /// No actions, no events.
    Freeze,
    /// Fails and repeats the round's sends in byzantine form.
    Echo,
    /// The round as it was, minus receives from senders outside the focus.
    Chatter(BTreeSet<Node>),
    /// Everything the agent perceived, turned byzantine.
    Vat,
    Custom { actions: HapSet, events: HapSet },
}

impl fmt::Display for Intervention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Intervention::Freeze => write!(f, "freeze"),
            Intervention::Echo => write!(f, "echo"),
            Intervention::Chatter(focus) => {
                write!(f, "chatter [")?;
                for (k, v) in focus.iter().enumerate() {
                    if k > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
            Intervention::Vat => write!(f, "vat"),
            Intervention::Custom { actions, events } => {
                write!(f, "custom actions {} events {}", set_string(actions), set_string(events))
            }
        }
    }
}

/// Joint interventions for rounds `0..len`, indexed by round then agent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Adjustment {
    pub joints: Vec<Vec<Intervention>>,
}

impl Adjustment {
    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn get(&self, m: Time, agent: AgentId) -> &Intervention {
        &self.joints[m as usize][agent.index()]
    }

    /// One line per round and agent.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (m, joint) in self.joints.iter().enumerate() {
            for (k, iv) in joint.iter().enumerate() {
                writeln!(s, "round {m} agent {} {iv}", k + 1).unwrap();
            }
        }
        s
    }
}

/// Byzantine repeat of the sends `agent` performed in round `m` of `base`,
/// correctly or not.
fn echoed_sends(base: &Run, agent: AgentId, m: Time) -> HapSet {
    let correct = base.beta_agent(agent, m).iter().filter_map(|h| match h {
        GlobalHap::Send(s) => Some(s.clone()),
        _ => None,
    });
    let faked = base
        .beta_env(m)
        .iter()
        .filter(|h| h.agent() == agent)
        .filter_map(|h| h.fake_performed_send().cloned());
    correct
        .chain(faked)
        .map(|s| GlobalHap::FakeAction {
            agent,
            performed: Some(CorrectAction::Send(s)),
            perceived: None,
        })
        .collect()
}

/// The `(actions, events)` an intervention assigns to `agent` in round `m`.
pub fn eval_intervention(
    sig: &Signature,
    iv: &Intervention,
    base: &Run,
    agent: AgentId,
    m: Time,
) -> (HapSet, HapSet) {
    match iv {
        Intervention::Freeze => (HapSet::new(), HapSet::new()),
        Intervention::Echo => {
            let mut events = echoed_sends(base, agent, m);
            events.insert(GlobalHap::fail(agent));
            (HapSet::new(), events)
        }
        Intervention::Chatter(focus) => {
            let events = base
                .beta_env(m)
                .iter()
                .filter(|h| h.is_event() && h.agent() == agent)
                .filter(|h| match h {
                    GlobalHap::Recv(r) => sig.decode_gmi(r.gmi).is_some_and(|p| {
                        focus.contains(&Node {
                            agent: p.sender,
                            time: p.time,
                        })
                    }),
                    _ => true,
                })
                .cloned()
                .collect();
            (base.beta_agent(agent, m).clone(), events)
        }
        Intervention::Vat => (HapSet::new(), vat_events(base, agent, m)),
        Intervention::Custom { actions, events } => (actions.clone(), events.clone()),
    }
}

fn vat_events(base: &Run, agent: AgentId, m: Time) -> HapSet {
    let env = base.beta_env(m);
    let mut out = HapSet::new();
    for h in env.iter().filter(|h| h.is_event() && h.agent() == agent) {
        match h {
            GlobalHap::Recv(_) | GlobalHap::External { .. } => {
                out.insert(GlobalHap::Fake(h.as_correct_event().expect("correct event")));
            }
            GlobalHap::Fake(_) => {
                out.insert(h.clone());
            }
            GlobalHap::FakeAction { perceived, .. } => {
                out.insert(GlobalHap::FakeAction {
                    agent,
                    performed: None,
                    perceived: perceived.clone(),
                });
            }
            _ => {}
        }
    }
    for a in base.beta_agent(agent, m) {
        if let Some(c) = a.as_correct_action() {
            out.insert(GlobalHap::FakeAction {
                agent,
                performed: None,
                perceived: Some(c),
            });
        }
    }
    if filter::triggers_update(agent, env) {
        out.insert(GlobalHap::Sleep(agent));
    }
    if m == 0 {
        out.insert(GlobalHap::fail(agent));
    }
    out
}

/// The adjusted prefix of `base`: rounds `0..adj.len()` written from the
/// intervention outputs, without any filtering.
pub fn adjusted_prefix(sig: &Signature, base: &Run, adj: &Adjustment) -> Result<Run> {
    if adj.len() > base.time() as usize {
        return Err(Error::Horizon(format!(
            "adjustment of length {} for a run of length {}",
            adj.len(),
            base.time()
        )));
    }
    let mut out = Run::new(base.initial().to_vec());
    for (m, joint) in adj.joints.iter().enumerate() {
        if joint.len() != base.n() {
            return Err(Error::Validation(format!(
                "round {m} of the adjustment covers {} of {} agents",
                joint.len(),
                base.n()
            )));
        }
        let mut beta_env = HapSet::new();
        let mut beta_agents = Vec::with_capacity(base.n());
        for agent in base.agents() {
            let (a, e) = eval_intervention(sig, &joint[agent.index()], base, agent, m as Time);
            beta_env.extend(e);
            beta_agents.push(a);
        }
        out.push_surgical(beta_env, beta_agents)?;
    }
    Ok(out)
}

/// The run obtained from `base` by `adj`, extended transitionally.
pub fn apply_adjustment(
    ctx: &AgentContext,
    base: &Run,
    adj: &Adjustment,
    continuation: &Continuation,
) -> Result<Run> {
    let prefix = adjusted_prefix(&ctx.sig, base, adj)?;
    continue_run(ctx, &prefix, continuation)
}

/// Chatter on the cone, Echo on the buffer, Freeze on the masses, for every
/// round before `theta`.
pub fn cone_adjustment(sig: &Signature, base: &Run, theta: Node) -> Result<(Adjustment, ConePartition)> {
    if theta.time > base.time() {
        return Err(Error::Range {
            time: theta.time,
            horizon: base.time(),
        });
    }
    if !node_correct(base, theta) {
        return Err(Error::Precondition(format!("node {theta} is not correct")));
    }
    let graph = build_causal_graph(sig, base)?;
    let part = partition_with(base, &graph, theta)?;
    let focus = part.voiced();
    let joints = (0..theta.time)
        .map(|m| {
            base.agents()
                .map(|a| match part.class(Node { agent: a, time: m }) {
                    Class::Cone => Intervention::Chatter(focus.clone()),
                    Class::Buffer => Intervention::Echo,
                    Class::Masses => Intervention::Freeze,
                })
                .collect()
        })
        .collect();
    Ok((Adjustment { joints }, part))
}

/// Attempted haps that make one adjusted round transitional.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub env: HapSet,
    pub agents: Vec<HapSet>,
}

/// Witness α-sets for rounds `0..theta.time` of the cone-equivalent run.
///
/// Agents repeat their choices inside the cone and take their first
/// offered option elsewhere. The environment keeps the `≤ f`-filtered
/// events of cone nodes and replaces buffer nodes by their echo.
pub fn construct_witness_alphas(
    ctx: &AgentContext,
    base: &Run,
    part: &ConePartition,
    adjusted: &Run,
) -> Result<Vec<Witness>> {
    let t = part.theta.time;
    if adjusted.time() < t || base.time() < t {
        return Err(Error::Range {
            time: t,
            horizon: adjusted.time().min(base.time()),
        });
    }
    let mut out = Vec::with_capacity(t as usize);
    for m in 0..t {
        let round = base.round(m);
        let mut agents = Vec::with_capacity(base.n());
        for agent in base.agents() {
            let node = Node { agent, time: m };
            let alpha = if part.class(node) == Class::Cone {
                match &round.alpha {
                    Some(a) => a.agents[agent.index()].clone(),
                    None => round.beta_agents[agent.index()].clone(),
                }
            } else {
                let history = adjusted.local(agent, m);
                let first = ctx.protocol(agent).range(&history)[0]
                    .iter()
                    .map(|h| ctx.sig.globalize(agent, m, h))
                    .collect::<Result<HapSet>>()?;
                first
            };
            agents.push(alpha);
        }
        let base_env = match &round.alpha {
            Some(a) => a.env.clone(),
            None => round.beta_env.clone(),
        };
        let kept = filter::filter_env_leq_f(base.env_history(m), &base_env, ctx.f);
        let mut env: HapSet = kept
            .into_iter()
            .filter(|h| part.class(Node { agent: h.agent(), time: m }) == Class::Cone)
            .collect();
        for agent in base.agents() {
            if part.class(Node { agent, time: m }) == Class::Buffer {
                env.insert(GlobalHap::fail(agent));
                env.extend(echoed_sends(base, agent, m));
            }
        }
        out.push(Witness { env, agents });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Property {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Property {
    pub const ALL: [Property; 6] = [
        Property::A,
        Property::B,
        Property::C,
        Property::D,
        Property::E,
        Property::F,
    ];

    fn describe(self) -> &'static str {
        match self {
            Property::A => "cone nodes keep their local states",
            Property::B => "theta's agent keeps its local states",
            Property::C => "faults exactly on the buffer",
            Property::D => "correct nodes stay correct",
            Property::E => "faulty agents do not increase",
            Property::F => "adjusted prefix is transitional",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub property: Property,
    /// First round (or timestamp) where the property fails.
    pub counterexample: Option<Time>,
    pub detail: String,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub theta: Node,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn check(&self, p: Property) -> &Check {
        self.checks.iter().find(|c| c.property == p).expect("every property is checked")
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cone equivalence at {}", self.theta)?;
        for c in &self.checks {
            match c.counterexample {
                None => writeln!(f, "  {:?} pass  {}", c.property, c.property.describe())?,
                Some(m) => writeln!(
                    f,
                    "  {:?} FAIL  {} (first at {m}: {})",
                    c.property,
                    c.property.describe(),
                    c.detail
                )?,
            }
        }
        Ok(())
    }
}

fn first_failure(
    property: Property,
    range: impl IntoIterator<Item = Time>,
    mut probe: impl FnMut(Time) -> Option<String>,
) -> Check {
    for m in range {
        if let Some(detail) = probe(m) {
            return Check {
                property,
                counterexample: Some(m),
                detail,
            };
        }
    }
    Check {
        property,
        counterexample: None,
        detail: String::new(),
    }
}

/// Whether `adjusted` is a cone-equivalent version of `base` at `theta`.
pub fn verify_cone_equivalence(
    ctx: &AgentContext,
    base: &Run,
    part: &ConePartition,
    adjusted: &Run,
) -> Result<Report> {
    let theta = part.theta;
    let t = theta.time;
    let sig = &ctx.sig;
    let graph = build_causal_graph(sig, base)?;
    let witness = construct_witness_alphas(ctx, base, part, adjusted)?;
    let mut checks = Vec::new();

    checks.push(first_failure(Property::A, 0..=t, |m| {
        base.agents()
            .map(|a| Node { agent: a, time: m })
            .find(|v| part.cone.contains(v) && adjusted.local_view(v.agent, m) != base.local_view(v.agent, m))
            .map(|v| format!("local state at {v} differs"))
    }));
    checks.push(first_failure(Property::B, 0..=t, |m| {
        (adjusted.local_view(theta.agent, m) != base.local_view(theta.agent, m))
            .then(|| format!("local state of agent {} at {m} differs", theta.agent))
    }));
    checks.push(first_failure(Property::C, 1..=t, |m| {
        base.agents().find_map(|j| {
            let faulted = adjusted.beta_env(m - 1).iter().any(|h| h.is_fault_of(j));
            let expected = path_exists(&graph, Node { agent: j, time: m - 1 }, theta)
                && !node_correct(base, Node { agent: j, time: m });
            (faulted != expected).then(|| format!("agent {j}: faults {faulted}, expected {expected}"))
        })
    }));
    checks.push(first_failure(Property::D, 0..=t, |m| {
        base.agents()
            .map(|a| Node { agent: a, time: m })
            .find(|v| node_correct(base, *v) && !node_correct(adjusted, *v))
            .map(|v| format!("{v} became faulty"))
    }));
    checks.push(first_failure(Property::E, 0..=t, |m| {
        let before: BTreeSet<AgentId> = base.faulty_by(m).into_iter().collect();
        let after: BTreeSet<AgentId> = adjusted.faulty_by(m).into_iter().collect();
        if after.len() > ctx.f {
            Some(format!("{} faulty agents exceed f = {}", after.len(), ctx.f))
        } else if after.len() > before.len() {
            Some(format!("{} faulty agents, {} before", after.len(), before.len()))
        } else {
            None
        }
    }));
    checks.push(first_failure(Property::F, 0..t, |m| {
        let w = &witness[m as usize];
        if !ctx.env.contains(sig, m, &w.env) {
            return Some(format!("environment witness {} is not offered", set_string(&w.env)));
        }
        for agent in base.agents() {
            let history = adjusted.local(agent, m);
            let offered = ctx.protocol(agent).range(&history).iter().any(|x| {
                x.iter()
                    .map(|h| sig.globalize(agent, m, h))
                    .collect::<Result<HapSet>>()
                    .is_ok_and(|g| g == w.agents[agent.index()])
            });
            if !offered {
                return Some(format!("agent {agent} witness is not offered"));
            }
        }
        let beta_env = filter::filter_env(adjusted.env_history(m), &w.env, &w.agents, ctx.f);
        if &beta_env != adjusted.beta_env(m) {
            return Some(format!(
                "filtering yields {} but the adjusted round has {}",
                set_string(&beta_env),
                set_string(adjusted.beta_env(m))
            ));
        }
        base.agents().find_map(|agent| {
            let b = filter::filter_agent(agent, &w.agents, &beta_env);
            (&b != adjusted.beta_agent(agent, m)).then(|| format!("agent {agent} actions differ"))
        })
    }));
    Ok(Report { theta, checks })
}

/// Everything produced for one cone-equivalence construction.
#[derive(Clone, Debug)]
pub struct ConeOutcome {
    pub partition: ConePartition,
    pub adjustment: Adjustment,
    pub adjusted: Run,
    pub report: Report,
}

/// Builds, applies and verifies the cone adjustment of `base` at `theta`.
pub fn cone_equivalent_run(
    ctx: &AgentContext,
    base: &Run,
    theta: Node,
    continuation: &Continuation,
) -> Result<ConeOutcome> {
    if !ctx.cone_ready() {
        return Err(Error::Precondition(
            "every agent must be gullible, correctable and delayable".into(),
        ));
    }
    let (adjustment, partition) = cone_adjustment(&ctx.sig, base, theta)?;
    let adjusted = apply_adjustment(ctx, base, &adjustment, continuation)?;
    let report = verify_cone_equivalence(ctx, base, &partition, &adjusted)?;
    Ok(ConeOutcome {
        partition,
        adjustment,
        adjusted,
        report,
    })
}

/// The cone adjustment at `theta` with `fail(j)` added in round 0 for every
/// agent in `seed`.
pub fn seeded_adjustment(
    sig: &Signature,
    base: &Run,
    theta: Node,
    seed: &BTreeSet<AgentId>,
) -> Result<Adjustment> {
    let (mut adj, _) = cone_adjustment(sig, base, theta)?;
    if adj.is_empty() {
        if base.time() == 0 {
            return Err(Error::Horizon("no round to seed faults in".into()));
        }
        adj.joints.push(vec![Intervention::Freeze; base.n()]);
    }
    for j in seed {
        let iv = &adj.joints[0][j.index()];
        let (actions, mut events) = eval_intervention(sig, iv, base, *j, 0);
        events.insert(GlobalHap::fail(*j));
        adj.joints[0][j.index()] = Intervention::Custom { actions, events };
    }
    Ok(adj)
}

/// Outcome of the brain-in-a-vat construction.
#[derive(Clone, Debug)]
pub struct VatOutcome {
    pub run: Run,
    pub victim_state_kept: bool,
    /// No correct event or action occurs before the cut.
    pub silent: bool,
    pub others_initial: bool,
    /// Round where re-filtering the rebuilt prefix fails to reproduce it.
    pub not_transitional_at: Option<Time>,
}

impl VatOutcome {
    pub fn ok(&self) -> bool {
        self.victim_state_kept && self.silent && self.others_initial && self.not_transitional_at.is_none()
    }
}

/// Rebuilds the first `t` rounds of `base` so that `victim` perceives the
/// same history while every hap it perceives is byzantine and everyone else
/// is frozen.
///
/// For `t = 0` the victim is failed in round 0 before perceiving anything,
/// so its state at timestamp 1 is the initial one.
pub fn brain_in_vat(
    ctx: &AgentContext,
    base: &Run,
    victim: AgentId,
    t: Time,
    continuation: &Continuation,
) -> Result<VatOutcome> {
    let sig = &ctx.sig;
    sig.check_agent(victim)?;
    if ctx.f == 0 {
        return Err(Error::Precondition("a vat needs f >= 1".into()));
    }
    if !ctx.env.flags(victim).gullible {
        return Err(Error::Precondition(format!("agent {victim} is not gullible")));
    }
    if let Some(j) = sig.agents().find(|j| *j != victim && !ctx.env.flags(*j).delayable) {
        return Err(Error::Precondition(format!("agent {j} is not delayable")));
    }
    let cut = t.max(1);
    let joints = (0..cut)
        .map(|_| {
            sig.agents()
                .map(|j| match j == victim {
                    false => Intervention::Freeze,
                    true if t == 0 => Intervention::Custom {
                        actions: HapSet::new(),
                        events: [GlobalHap::fail(victim)].into(),
                    },
                    true => Intervention::Vat,
                })
                .collect()
        })
        .collect();
    let adj = Adjustment { joints };
    let run = apply_adjustment(ctx, base, &adj, continuation)?;
    let victim_state_kept = run.local_view(victim, cut) == base.local_view(victim, t);
    let silent = (0..cut).all(|m| {
        run.beta_env(m).iter().all(|h| !h.is_correct())
            && sig.agents().all(|j| run.beta_agent(j, m).is_empty())
    });
    let others_initial = sig
        .agents()
        .filter(|j| *j != victim)
        .all(|j| run.local_len(j, cut) == 0);
    let not_transitional_at = (0..cut).find(|&m| {
        let env = run.beta_env(m);
        let agents: Vec<HapSet> = sig
            .agents()
            .map(|j| {
                ctx.protocol(j).range(&run.local(j, m))[0]
                    .iter()
                    .map(|h| sig.globalize(j, m, h))
                    .collect::<Result<HapSet>>()
                    .unwrap_or_default()
            })
            .collect();
        !ctx.env.contains(sig, m, env)
            || &filter::filter_env(run.env_history(m), env, &agents, ctx.f) != env
            || sig
                .agents()
                .any(|j| !filter::filter_agent(j, &agents, env).is_empty())
    });
    Ok(VatOutcome {
        run,
        victim_state_kept,
        silent,
        others_initial,
        not_transitional_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hap::{LocalHap, LocalSet};
    use crate::protocol::{Admissibility, AgentFlags, AgentProtocol, EnvProtocol, FaultDomain};
    use crate::run::{run_script, EnvPick, RoundChoice, Script};
    use crate::text::parse_hap_set;
    use std::collections::BTreeMap;

    fn sig(n: u16, h: Time) -> Signature {
        Signature::new(n, vec!["m".into()], vec!["o".into()], vec![], 1, h).unwrap()
    }

    /// Agent 1 sends `m` to agent 2 whenever it can; agent 2 is idle.
    fn ping_ctx(s: Signature, env: Vec<&str>, f: usize) -> AgentContext {
        let n = s.n();
        let send: LocalSet = [LocalHap::Send {
            to: AgentId(2),
            msg: "m".into(),
            copy: 0,
        }]
        .into();
        let mut agents = vec![AgentProtocol::new(&s, BTreeMap::new(), vec![], vec![send]).unwrap()];
        agents.extend((1..n).map(|_| AgentProtocol::idle()));
        let options = env.iter().map(|x| parse_hap_set(&s, x).unwrap()).collect();
        let env = EnvProtocol::new(&s, BTreeMap::new(), options, vec![AgentFlags::ALL; n], FaultDomain::default())
            .unwrap();
        AgentContext::new(s, env, agents, vec![vec!["s0".into()]; n], f, Admissibility::None).unwrap()
    }

    fn script(rounds: &[usize]) -> Script {
        Script {
            initial: 0,
            rounds: rounds
                .iter()
                .map(|k| RoundChoice {
                    env: EnvPick::Index(*k),
                    agents: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn intervention_outputs() {
        let s = sig(2, 3);
        let ctx = ping_ctx(s.clone(), vec!["{go(1)}", "{go(1), go(2)}"], 1);
        let base = run_script(&ctx, &script(&[0, 0, 0])).unwrap();
        let a1 = AgentId(1);
        assert_eq!(eval_intervention(&s, &Intervention::Freeze, &base, a1, 0), Default::default());
        let (acts, evs) = eval_intervention(&s, &Intervention::Echo, &base, a1, 0);
        assert!(acts.is_empty());
        assert_eq!(evs.len(), 2);
        assert!(evs.contains(&GlobalHap::fail(a1)));
        let all: BTreeSet<Node> = (0..=3).flat_map(|t| [Node::new(1, t), Node::new(2, t)]).collect();
        let (acts, evs) = eval_intervention(&s, &Intervention::Chatter(all), &base, a1, 1);
        assert_eq!(&acts, base.beta_agent(a1, 1));
        assert_eq!(evs, parse_hap_set(&s, "{go(1)}").unwrap());
    }

    #[test]
    fn identity_surgery_reproduces_prefix() {
        let s = sig(2, 3);
        let ctx = ping_ctx(s.clone(), vec!["{go(1)}", "{go(1), go(2)}"], 1);
        let base = run_script(&ctx, &script(&[0, 1, 0])).unwrap();
        let joints = (0..3)
            .map(|m| {
                base.agents()
                    .map(|a| Intervention::Custom {
                        actions: base.beta_agent(a, m).clone(),
                        events: base.beta_env(m).iter().filter(|h| h.agent() == a).cloned().collect(),
                    })
                    .collect()
            })
            .collect();
        let out = adjusted_prefix(&s, &base, &Adjustment { joints }).unwrap();
        for m in 0..3 {
            assert_eq!(out.beta_env(m), base.beta_env(m));
            for a in base.agents() {
                assert_eq!(out.local(a, m + 1), base.local(a, m + 1));
            }
        }
    }

    #[test]
    fn all_freeze() {
        let s = sig(2, 3);
        let ctx = ping_ctx(s.clone(), vec!["{go(1)}"], 1);
        let base = run_script(&ctx, &script(&[0, 0, 0])).unwrap();
        let adj = Adjustment {
            joints: vec![vec![Intervention::Freeze; 2]; 3],
        };
        let out = adjusted_prefix(&s, &base, &adj).unwrap();
        assert_eq!(out.env_history(3).len(), 3);
        assert!(out.agents().all(|a| out.local_len(a, 3) == 0));
    }

    #[test]
    fn fault_free_cone_equivalence() {
        let s = sig(2, 4);
        let ctx = ping_ctx(s, vec!["{go(1), go(2)}"], 1);
        let base = run_script(&ctx, &script(&[0, 0, 0, 0])).unwrap();
        for t in 0..=4 {
            for a in [1, 2] {
                let theta = Node::new(a, t);
                let out = cone_equivalent_run(&ctx, &base, theta, &Continuation::FirstOption).unwrap();
                assert!(out.partition.buffer.is_empty());
                assert!(out.report.all_pass(), "{}", out.report);
            }
        }
    }

    #[test]
    fn faulty_theta_rejected() {
        let s = sig(2, 2);
        let ctx = ping_ctx(s.clone(), vec!["{fail(2)}"], 1);
        let base = run_script(&ctx, &script(&[0, 0])).unwrap();
        assert!(matches!(
            cone_adjustment(&s, &base, Node::new(2, 1)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn tampered_adjustment_fails() {
        let s = sig(2, 3);
        let ctx = ping_ctx(s.clone(), vec!["{go(1), go(2)}"], 1);
        let base = run_script(&ctx, &script(&[0, 0, 0])).unwrap();
        let theta = Node::new(2, 3);
        let (mut adj, part) = cone_adjustment(&s, &base, theta).unwrap();
        adj.joints[1][1] = Intervention::Freeze;
        let adjusted = apply_adjustment(&ctx, &base, &adj, &Continuation::FirstOption).unwrap();
        let report = verify_cone_equivalence(&ctx, &base, &part, &adjusted).unwrap();
        assert!(!report.check(Property::B).passed());
        assert!(!report.check(Property::F).passed());
    }

    #[test]
    fn vat_keeps_victim_state() {
        let s = sig(2, 3);
        let ctx = ping_ctx(s.clone(), vec!["{go(1), go(2)}"], 1);
        let base = run_script(&ctx, &script(&[0, 0, 0])).unwrap();
        let out = brain_in_vat(&ctx, &base, AgentId(2), 3, &Continuation::FirstOption).unwrap();
        assert!(out.ok(), "{out:?}");
        let start = brain_in_vat(&ctx, &base, AgentId(2), 0, &Continuation::FirstOption).unwrap();
        assert!(start.ok(), "{start:?}");
        assert_eq!(start.run.local_len(AgentId(2), 1), 0);
        assert_eq!(start.run.first_fault(AgentId(2)), Some(0));
        let no_f = ping_ctx(s, vec!["{go(1), go(2)}"], 0);
        assert!(matches!(
            brain_in_vat(&no_f, &base, AgentId(2), 3, &Continuation::FirstOption),
            Err(Error::Precondition(_))
        ));
    }
}
