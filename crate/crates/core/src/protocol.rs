//! Agent and environment protocols, t-coherency and fault types.
//!
//! Agent protocols are lookup tables over local histories. The environment
//! protocol is a per-timestamp list of base options closed under the
//! operations that make agents correctable, delayable, error-prone or
//! gullible. Membership in the closure is decided exactly; enumerating it
//! requires concretizing "any set of faults", which is done over a bounded
//! fault domain (see [`FaultDomain`]).

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::hap::{
    AgentId, CorrectAction, GlobalHap, HapSet, Label, LocalHap, LocalHistory, LocalSet, Signature,
    Time,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Clause {
    /// More than one system event for an agent.
    SystemEvents,
    /// A correct event and a fake one the agent would record the same way.
    RightAndWrong,
    /// A byzantine action stamped with the wrong sender or round.
    Stamp,
}

impl std::fmt::Display for Clause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = match self {
            Clause::SystemEvents => 'a',
            Clause::RightAndWrong => 'b',
            Clause::Stamp => 'c',
        };
        write!(f, "t-coherency ({c})")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub clause: Clause,
    pub agent: AgentId,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoherenceReport {
    pub violations: Vec<Violation>,
}

impl CoherenceReport {
    pub fn is_coherent(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, clause: Clause) -> bool {
        self.violations.iter().any(|v| v.clause == clause)
    }
}

fn stamp_ok(sig: &Signature, agent: AgentId, action: &CorrectAction, time: Time) -> bool {
    match action {
        CorrectAction::Send(s) => {
            s.from == agent
                && sig
                    .decode_gmi(s.gmi)
                    .is_some_and(|p| p.sender == agent && p.time == time && p.copy == s.copy)
        }
        CorrectAction::Internal { agent: a, time: at, .. } => *a == agent && *at == time,
    }
}

/// Checks t-coherency of a set of events.
///
/// Correct actions are a format error. Stamp checks apply to both the
/// performed and the perceived action of a byzantine action.
pub fn check_t_coherent(sig: &Signature, events: &HapSet, time: Time) -> Result<CoherenceReport> {
    if let Some(a) = events.iter().find(|h| h.is_action()) {
        return Err(Error::Format(format!("`{a}` is an action, not an event")));
    }
    let mut report = CoherenceReport::default();
    let mut system: BTreeMap<AgentId, usize> = BTreeMap::new();
    for h in events.iter().filter(|h| h.is_system()) {
        *system.entry(h.agent()).or_default() += 1;
    }
    for (agent, count) in system {
        if count > 1 {
            report.violations.push(Violation {
                clause: Clause::SystemEvents,
                agent,
                detail: format!("{count} system events"),
            });
        }
    }
    let correct: BTreeSet<(AgentId, LocalHap)> = events
        .iter()
        .filter(|h| h.is_correct_event())
        .filter_map(|h| Some((h.agent(), h.local()?)))
        .collect();
    for h in events {
        match h {
            GlobalHap::Fake(e) => {
                if correct.contains(&(e.agent(), e.local())) {
                    report.violations.push(Violation {
                        clause: Clause::RightAndWrong,
                        agent: e.agent(),
                        detail: format!("`{h}` accompanies the correct event it imitates"),
                    });
                }
            }
            GlobalHap::FakeAction {
                agent,
                performed,
                perceived,
            } => {
                for a in performed.iter().chain(perceived.iter()) {
                    if !stamp_ok(sig, *agent, a, time) {
                        report.violations.push(Violation {
                            clause: Clause::Stamp,
                            agent: *agent,
                            detail: format!("`{a}` in `{h}` is not stamped for agent {agent} at {time}"),
                        });
                    }
                }
            }
            _ => {}
        }
    }
    Ok(report)
}

fn coherent(sig: &Signature, events: &HapSet, time: Time) -> bool {
    check_t_coherent(sig, events, time).is_ok_and(|r| r.is_coherent())
}

/// Closure properties the environment protocol grants an agent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AgentFlags {
    pub correctable: bool,
    pub delayable: bool,
    pub error_prone: bool,
    pub gullible: bool,
}

impl AgentFlags {
    pub const ALL: AgentFlags = AgentFlags {
        correctable: true,
        delayable: true,
        error_prone: true,
        gullible: true,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentType {
    Correctable,
    Delayable,
    ErrorProne,
    Gullible,
    FullyByzantine,
}

/// Which faults are used when a closure step adds an arbitrary set of
/// faults and the result has to be listed explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaultDomain {
    /// `sleep(i)` and `hib(i)`.
    pub system: bool,
    pub fail: bool,
    /// Fakes of correct events offered to the agent at the same timestamp.
    pub fake_events: bool,
    /// `gsend -> noop` and `noop -> gsend` for every send in the alphabet.
    pub fake_sends: bool,
    pub fake_internal: bool,
}

impl Default for FaultDomain {
    fn default() -> Self {
        FaultDomain {
            system: true,
            fail: true,
            fake_events: true,
            fake_sends: true,
            fake_internal: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Part {
    Base,
    Empty,
    /// Any set of faults (F-part only).
    Any,
}

/// Abstract components `(correct part, fault part)` reachable from a base
/// component under the agent's closure operations.
fn reachable(flags: AgentFlags) -> BTreeSet<(Part, Part)> {
    let mut seen = BTreeSet::from([(Part::Base, Part::Base)]);
    let mut stack = vec![(Part::Base, Part::Base)];
    while let Some((c, _)) = stack.pop() {
        let mut next = Vec::new();
        if flags.correctable {
            next.push((c, Part::Empty));
        }
        if flags.delayable {
            next.push((Part::Empty, Part::Empty));
        }
        if flags.error_prone {
            next.push((c, Part::Any));
        }
        if flags.gullible {
            next.push((Part::Empty, Part::Any));
        }
        for p in next {
            if seen.insert(p) {
                stack.push(p);
            }
        }
    }
    seen
}

fn component(set: &HapSet, agent: AgentId) -> (HapSet, HapSet) {
    set.iter()
        .filter(|h| h.is_event() && h.agent() == agent)
        .cloned()
        .partition(|h| !h.is_fault())
}

/// The environment's protocol `P_ε`.
#[derive(Clone, Debug)]
pub struct EnvProtocol {
    base: BTreeMap<Time, Vec<HapSet>>,
    default: Vec<HapSet>,
    flags: Vec<AgentFlags>,
    domain: FaultDomain,
    reach: Vec<BTreeSet<(Part, Part)>>,
}

impl EnvProtocol {
    /// Validates that every offered set consists of events of the alphabet
    /// and is coherent at every timestamp it is offered at.
    pub fn new(
        sig: &Signature,
        base: BTreeMap<Time, Vec<HapSet>>,
        default: Vec<HapSet>,
        flags: Vec<AgentFlags>,
        domain: FaultDomain,
    ) -> Result<Self> {
        if flags.len() != sig.n() {
            return Err(Error::Validation(format!(
                "closure flags given for {} agents, expected {}",
                flags.len(),
                sig.n()
            )));
        }
        if default.is_empty() {
            return Err(Error::Validation("the default environment range is empty".into()));
        }
        for (t, options) in &base {
            if *t >= sig.horizon() {
                return Err(Error::Validation(format!(
                    "environment options given for time {t}, horizon is {}",
                    sig.horizon()
                )));
            }
            if options.is_empty() {
                return Err(Error::Validation(format!("empty environment range at time {t}")));
            }
        }
        let env = EnvProtocol {
            reach: flags.iter().map(|f| reachable(*f)).collect(),
            base,
            default,
            flags,
            domain,
        };
        for t in 0..sig.horizon() {
            for x in env.base_range(t) {
                let report = check_t_coherent(sig, x, t)?;
                if let Some(v) = report.violations.first() {
                    return Err(Error::Validation(format!(
                        "environment option at time {t} violates {} [{:?}]: {}",
                        v.clause, v.clause, v.detail
                    )));
                }
            }
        }
        Ok(env)
    }

    /// An environment offering only `options` at every time, with no closure.
    pub fn uniform(sig: &Signature, options: Vec<HapSet>) -> Result<Self> {
        EnvProtocol::new(
            sig,
            BTreeMap::new(),
            options,
            vec![AgentFlags::default(); sig.n()],
            FaultDomain::default(),
        )
    }

    pub fn flags(&self, agent: AgentId) -> AgentFlags {
        self.flags[agent.index()]
    }

    pub fn all_flagged(&self, pred: impl Fn(AgentFlags) -> bool) -> bool {
        self.flags.iter().all(|f| pred(*f))
    }

    /// The options listed explicitly for time `t`.
    pub fn base_range(&self, t: Time) -> &[HapSet] {
        self.base.get(&t).unwrap_or(&self.default)
    }

    /// Exact membership of `set` in `P_ε(t)` including the closure.
    pub fn contains(&self, sig: &Signature, t: Time, set: &HapSet) -> bool {
        if set.iter().any(|h| h.is_action()) || !coherent(sig, set, t) {
            return false;
        }
        if set.iter().any(|h| sig.check_agent(h.agent()).is_err()) {
            return false;
        }
        self.base_range(t).iter().any(|x0| {
            sig.agents().all(|j| {
                let (c0, f0) = component(x0, j);
                let (c, f) = component(set, j);
                let c_tags: Vec<Part> = [(c == c0, Part::Base), (c.is_empty(), Part::Empty)]
                    .into_iter()
                    .filter_map(|(ok, p)| ok.then_some(p))
                    .collect();
                let f_tags: Vec<Part> = [
                    (f == f0, Part::Base),
                    (f.is_empty(), Part::Empty),
                    (true, Part::Any),
                ]
                .into_iter()
                .filter_map(|(ok, p)| ok.then_some(p))
                .collect();
                let reach = &self.reach[j.index()];
                c_tags
                    .iter()
                    .any(|ct| f_tags.iter().any(|ft| reach.contains(&(*ct, *ft))))
            })
        })
    }

    /// The bounded fault domain of `agent` at `t`.
    pub fn fault_domain(&self, sig: &Signature, t: Time, agent: AgentId) -> HapSet {
        let mut d = HapSet::new();
        let dom = self.domain;
        if dom.system {
            d.insert(GlobalHap::Sleep(agent));
            d.insert(GlobalHap::Hibernate(agent));
        }
        if dom.fail {
            d.insert(GlobalHap::fail(agent));
        }
        for x in self.base_range(t) {
            for h in x.iter().filter(|h| h.agent() == agent) {
                if h.is_fault() {
                    d.insert(h.clone());
                } else if dom.fake_events {
                    if let Some(e) = h.as_correct_event() {
                        d.insert(GlobalHap::Fake(e));
                    }
                }
            }
        }
        let mut actions = Vec::new();
        if dom.fake_sends && t < sig.horizon() {
            for to in sig.agents() {
                for msg in sig.messages() {
                    for copy in 0..sig.max_copies() {
                        let s = sig.gsend(agent, to, msg, copy, t).expect("alphabet send");
                        actions.push(CorrectAction::Send(s));
                    }
                }
            }
        }
        if dom.fake_internal {
            for label in sig.internal() {
                actions.push(CorrectAction::Internal {
                    agent,
                    time: t,
                    label: label.clone(),
                });
            }
        }
        for a in actions {
            d.insert(GlobalHap::FakeAction {
                agent,
                performed: Some(a.clone()),
                perceived: None,
            });
            d.insert(GlobalHap::FakeAction {
                agent,
                performed: None,
                perceived: Some(a),
            });
        }
        d
    }

    fn components(
        &self,
        sig: &Signature,
        t: Time,
        x0: &HapSet,
        agent: AgentId,
        budget: usize,
    ) -> Result<Vec<HapSet>> {
        let (c0, f0) = component(x0, agent);
        let domain: Vec<GlobalHap> = self.fault_domain(sig, t, agent).into_iter().collect();
        let mut out = BTreeSet::new();
        for (ct, ft) in &self.reach[agent.index()] {
            let c = match ct {
                Part::Base => c0.clone(),
                _ => HapSet::new(),
            };
            match ft {
                Part::Base => {
                    out.insert(c.union(&f0).cloned().collect::<HapSet>());
                }
                Part::Empty => {
                    out.insert(c);
                }
                Part::Any => {
                    if domain.len() >= 63 || (1usize << domain.len()) > budget {
                        return Err(Error::Budget {
                            limit: budget,
                            explored: 0,
                            estimate: 1u128 << domain.len().min(127),
                        });
                    }
                    for mask in 0..(1usize << domain.len()) {
                        let mut y = c.clone();
                        for (k, h) in domain.iter().enumerate() {
                            if mask >> k & 1 == 1 {
                                y.insert(h.clone());
                            }
                        }
                        if coherent(sig, &y, t) {
                            out.insert(y);
                        }
                    }
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Lists `P_ε(t)`: the base options in their given order, then every
    /// further closure member over the bounded fault domain, sorted.
    pub fn materialize(&self, sig: &Signature, t: Time, budget: usize) -> Result<Vec<HapSet>> {
        let base = self.base_range(t);
        if self.flags.iter().all(|f| *f == AgentFlags::default()) {
            return Ok(base.to_vec());
        }
        let mut extra = BTreeSet::new();
        for x0 in base {
            let per_agent: Vec<Vec<HapSet>> = sig
                .agents()
                .map(|j| self.components(sig, t, x0, j, budget))
                .collect::<Result<_>>()?;
            let size: u128 = per_agent.iter().map(|c| c.len() as u128).product();
            if size > budget as u128 {
                return Err(Error::Budget {
                    limit: budget,
                    explored: extra.len(),
                    estimate: size,
                });
            }
            let mut acc = vec![HapSet::new()];
            for comps in &per_agent {
                let mut next = Vec::with_capacity(acc.len() * comps.len());
                for a in &acc {
                    for c in comps {
                        next.push(a.union(c).cloned().collect::<HapSet>());
                    }
                }
                acc = next;
            }
            extra.extend(acc);
            if extra.len() > budget {
                return Err(Error::Budget {
                    limit: budget,
                    explored: extra.len(),
                    estimate: extra.len() as u128,
                });
            }
        }
        let mut out = base.to_vec();
        let listed: BTreeSet<&HapSet> = base.iter().collect();
        out.extend(extra.iter().filter(|x| !listed.contains(x)).cloned());
        Ok(out)
    }
}

/// Bounded check of a closure property for `agent`: every listed option at
/// every `t` below the horizon, and every `Y` over the bounded fault domain.
pub fn check_agent_type(
    sig: &Signature,
    env: &EnvProtocol,
    agent: AgentId,
    kind: AgentType,
    budget: usize,
) -> Result<bool> {
    if kind == AgentType::FullyByzantine {
        return Ok(check_agent_type(sig, env, agent, AgentType::ErrorProne, budget)?
            && check_agent_type(sig, env, agent, AgentType::Gullible, budget)?);
    }
    for t in 0..sig.horizon() {
        let domain: Vec<GlobalHap> = env.fault_domain(sig, t, agent).into_iter().collect();
        for x in env.materialize(sig, t, budget)? {
            let without_faults: HapSet = x.iter().filter(|h| !h.is_fault_of(agent)).cloned().collect();
            let without_events: HapSet = x
                .iter()
                .filter(|h| !(h.is_event() && h.agent() == agent))
                .cloned()
                .collect();
            let ok = match kind {
                AgentType::Correctable => env.contains(sig, t, &without_faults),
                AgentType::Delayable => env.contains(sig, t, &without_events),
                AgentType::ErrorProne | AgentType::Gullible => {
                    let rest = if kind == AgentType::ErrorProne {
                        &without_faults
                    } else {
                        &without_events
                    };
                    if domain.len() >= 31 || (1usize << domain.len()) > budget {
                        return Err(Error::Budget {
                            limit: budget,
                            explored: 0,
                            estimate: 1u128 << domain.len().min(127),
                        });
                    }
                    (0..(1usize << domain.len())).all(|mask| {
                        let mut z = rest.clone();
                        for (k, h) in domain.iter().enumerate() {
                            if mask >> k & 1 == 1 {
                                z.insert(h.clone());
                            }
                        }
                        !coherent(sig, &z, t) || env.contains(sig, t, &z)
                    })
                }
                AgentType::FullyByzantine => unreachable!(),
            };
            if !ok {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// An agent protocol `P_i`: ranges of action sets looked up by local history.
///
/// Lookup order: exact history, then the first rule whose trigger hap is in
/// the latest record, then the default.
#[derive(Clone, Debug)]
pub struct AgentProtocol {
    exact: BTreeMap<LocalHistory, Vec<LocalSet>>,
    after: Vec<(LocalHap, Vec<LocalSet>)>,
    default: Vec<LocalSet>,
}

impl AgentProtocol {
    pub fn new(
        sig: &Signature,
        exact: BTreeMap<LocalHistory, Vec<LocalSet>>,
        after: Vec<(LocalHap, Vec<LocalSet>)>,
        default: Vec<LocalSet>,
    ) -> Result<Self> {
        let ranges = exact
            .values()
            .chain(after.iter().map(|(_, r)| r))
            .chain(std::iter::once(&default));
        for range in ranges {
            if range.is_empty() {
                return Err(Error::Validation("an agent protocol offers an empty range".into()));
            }
            for set in range {
                for a in set {
                    if !a.is_action() {
                        return Err(Error::Validation(format!(
                            "agent protocol offers the event `{a}`"
                        )));
                    }
                    sig.check_local(a)?;
                }
            }
        }
        let dedup = |r: Vec<LocalSet>| {
            let mut seen = BTreeSet::new();
            r.into_iter().filter(|s| seen.insert(s.clone())).collect::<Vec<_>>()
        };
        Ok(AgentProtocol {
            exact: exact.into_iter().map(|(k, v)| (k, dedup(v))).collect(),
            after: after.into_iter().map(|(k, v)| (k, dedup(v))).collect(),
            default: dedup(default),
        })
    }

    /// Always offers `{∅}`.
    pub fn idle() -> Self {
        AgentProtocol {
            exact: BTreeMap::new(),
            after: Vec::new(),
            default: vec![LocalSet::new()],
        }
    }

    pub fn range(&self, history: &LocalHistory) -> &[LocalSet] {
        if let Some(r) = self.exact.get(history) {
            return r;
        }
        if let Some(last) = history.last() {
            if let Some((_, r)) = self.after.iter().find(|(h, _)| last.contains(h)) {
                return r;
            }
        }
        &self.default
    }

    /// Largest range this protocol can offer.
    pub fn max_range(&self) -> usize {
        self.exact
            .values()
            .chain(self.after.iter().map(|(_, r)| r))
            .map(|r| r.len())
            .chain(std::iter::once(self.default.len()))
            .max()
            .unwrap_or(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Admissibility {
    None,
    /// Every agent gets a system event in every window of this many rounds.
    FairSchedule { window: u32 },
}

/// `χ = ((P_ε, G(0), τ_f, Ψ), P)` together with the scenario alphabets.
#[derive(Clone, Debug)]
pub struct AgentContext {
    pub sig: Signature,
    pub env: EnvProtocol,
    pub agents: Vec<AgentProtocol>,
    /// Local initial-state options per agent; global initial states are
    /// their product.
    pub initial: Vec<Vec<Label>>,
    pub f: usize,
    pub admissibility: Admissibility,
}

impl AgentContext {
    pub fn new(
        sig: Signature,
        env: EnvProtocol,
        agents: Vec<AgentProtocol>,
        initial: Vec<Vec<Label>>,
        f: usize,
        admissibility: Admissibility,
    ) -> Result<Self> {
        if agents.len() != sig.n() || initial.len() != sig.n() {
            return Err(Error::Validation("one protocol and initial-state list per agent".into()));
        }
        if initial.iter().any(|i| i.is_empty()) {
            return Err(Error::Validation("an agent has no initial state".into()));
        }
        if f > sig.n() {
            return Err(Error::Validation(format!(
                "fault bound {f} exceeds the number of agents {}",
                sig.n()
            )));
        }
        Ok(AgentContext {
            sig,
            env,
            agents,
            initial,
            f,
            admissibility,
        })
    }

    pub fn horizon(&self) -> Time {
        self.sig.horizon()
    }

    pub fn protocol(&self, agent: AgentId) -> &AgentProtocol {
        &self.agents[agent.index()]
    }

    pub fn initial_count(&self) -> usize {
        self.initial.iter().map(|i| i.len()).product()
    }

    /// Global initial state number `index`, agent 1 varying slowest.
    pub fn initial_state(&self, index: usize) -> Result<Vec<Label>> {
        if index >= self.initial_count() {
            return Err(Error::Choice {
                round: 0,
                reason: format!("initial state {index} of {}", self.initial_count()),
            });
        }
        let mut rest = index;
        let mut out = vec![Label::new(""); self.sig.n()];
        for (k, opts) in self.initial.iter().enumerate().rev() {
            out[k] = opts[rest % opts.len()].clone();
            rest /= opts.len();
        }
        Ok(out)
    }

    /// The premise of the cone construction: every agent is gullible,
    /// correctable and delayable.
    pub fn cone_ready(&self) -> bool {
        self.env
            .all_flagged(|f| f.gullible && f.correctable && f.delayable)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse_hap_set;

    fn sig() -> Signature {
        Signature::new(2, vec!["m".into()], vec!["o".into()], vec![], 1, 2).unwrap()
    }

    fn set(s: &Signature, src: &str) -> HapSet {
        parse_hap_set(s, src).unwrap()
    }

    #[test]
    fn coherence_clauses() {
        let s = sig();
        let r = check_t_coherent(&s, &set(&s, "{go(1), sleep(1)}"), 0).unwrap();
        assert!(r.has(Clause::SystemEvents));
        let g = s.encode_gmi(AgentId(2), AgentId(1), &"m".into(), 0, 0).unwrap();
        let r = check_t_coherent(
            &s,
            &set(&s, &format!("{{grecv(1<-2, m, {g}), fake(1, grecv(1<-2, m, {g}))}}")),
            1,
        )
        .unwrap();
        assert!(r.has(Clause::RightAndWrong));
        // A fake of a receive with a different identifier is still recorded alike.
        let g1 = s.encode_gmi(AgentId(2), AgentId(1), &"m".into(), 0, 1).unwrap();
        let r = check_t_coherent(
            &s,
            &set(&s, &format!("{{grecv(1<-2, m, {g}), fake(1, grecv(1<-2, m, {g1}))}}")),
            1,
        )
        .unwrap();
        assert!(r.has(Clause::RightAndWrong));
        for t in 0..2 {
            let g = s.encode_gmi(AgentId(1), AgentId(2), &"m".into(), 0, t).unwrap();
            let x = set(&s, &format!("{{fake(1, gsend(1->2, m, {g}) -> noop)}}"));
            assert!(check_t_coherent(&s, &x, t).unwrap().is_coherent());
            assert!(check_t_coherent(&s, &x, 1 - t).unwrap().has(Clause::Stamp));
        }
        let g = s.encode_gmi(AgentId(1), AgentId(2), &"m".into(), 0, 0).unwrap();
        assert!(matches!(
            check_t_coherent(&s, &set(&s, &format!("{{gsend(1->2, m, {g})}}")), 0),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn env_rejects_incoherent_options() {
        let s = sig();
        let err = EnvProtocol::uniform(&s, vec![set(&s, "{go(1), sleep(1)}")]).unwrap_err();
        assert!(err.to_string().contains("SystemEvents"));
    }

    #[test]
    fn go_only_env_types() {
        let s = sig();
        let env = EnvProtocol::uniform(&s, vec![set(&s, "{go(1)}")]).unwrap();
        let a = AgentId(1);
        assert!(check_agent_type(&s, &env, a, AgentType::Correctable, 1 << 16).unwrap());
        assert!(!check_agent_type(&s, &env, a, AgentType::Delayable, 1 << 16).unwrap());
        assert!(!check_agent_type(&s, &env, a, AgentType::Gullible, 1 << 16).unwrap());
        assert!(!check_agent_type(&s, &env, a, AgentType::ErrorProne, 1 << 16).unwrap());
        // Agent 2 has no events at all: removing them changes nothing.
        assert!(check_agent_type(&s, &env, AgentId(2), AgentType::Delayable, 1 << 16).unwrap());
    }

    #[test]
    fn delayable_by_construction() {
        let s = sig();
        let env = EnvProtocol::uniform(&s, vec![set(&s, "{go(1), go(2)}"), set(&s, "{go(2)}")])
            .unwrap();
        assert!(check_agent_type(&s, &env, AgentId(1), AgentType::Delayable, 1 << 16).unwrap());
        assert!(!check_agent_type(&s, &env, AgentId(2), AgentType::Delayable, 1 << 16).unwrap());
    }

    #[test]
    fn flagged_agent_is_fully_byzantine() {
        let s = sig();
        let mut flags = vec![AgentFlags::default(); 2];
        flags[0] = AgentFlags::ALL;
        let env = EnvProtocol::new(
            &s,
            BTreeMap::new(),
            vec![set(&s, "{go(1), gext(1, o), go(2)}")],
            flags,
            FaultDomain::default(),
        )
        .unwrap();
        for kind in [
            AgentType::Correctable,
            AgentType::Delayable,
            AgentType::ErrorProne,
            AgentType::Gullible,
            AgentType::FullyByzantine,
        ] {
            assert!(check_agent_type(&s, &env, AgentId(1), kind, 1 << 16).unwrap(), "{kind:?}");
        }
        assert!(!check_agent_type(&s, &env, AgentId(2), AgentType::Gullible, 1 << 16).unwrap());
        // The fake of an offered correct event may replace it, but not join it.
        assert!(env.contains(&s, 0, &set(&s, "{fake(1, gext(1, o)), go(2)}")));
        assert!(!env.contains(&s, 0, &set(&s, "{gext(1, o), fake(1, gext(1, o)), go(2)}")));
        assert!(env.contains(&s, 0, &set(&s, "{go(1), gext(1, o), fail(1), go(2)}")));
        assert!(!env.contains(&s, 0, &set(&s, "{go(1), go(2)}")));
        assert!(!env.contains(&s, 0, &set(&s, "{go(1), gext(1, o)}")));
    }

    #[test]
    fn materialized_range_starts_with_base() {
        let s = sig();
        let flags = vec![
            AgentFlags {
                correctable: true,
                delayable: true,
                ..Default::default()
            };
            2
        ];
        let base = vec![set(&s, "{go(1), go(2)}")];
        let env =
            EnvProtocol::new(&s, BTreeMap::new(), base.clone(), flags, FaultDomain::default())
                .unwrap();
        let r = env.materialize(&s, 0, 1000).unwrap();
        assert_eq!(r[0], base[0]);
        // {go1,go2}, {go1}, {go2}, {} with no faults around.
        assert_eq!(r.len(), 4);
        for x in &r {
            assert!(env.contains(&s, 0, x));
        }
    }

    #[test]
    fn implications_between_types() {
        let s = sig();
        let flags = vec![
            AgentFlags {
                error_prone: true,
                ..Default::default()
            },
            AgentFlags {
                gullible: true,
                ..Default::default()
            },
        ];
        let env = EnvProtocol::new(
            &s,
            BTreeMap::new(),
            vec![set(&s, "{go(1), go(2)}")],
            flags,
            FaultDomain {
                fake_sends: false,
                ..Default::default()
            },
        )
        .unwrap();
        let b = 1 << 16;
        assert!(check_agent_type(&s, &env, AgentId(1), AgentType::ErrorProne, b).unwrap());
        assert!(check_agent_type(&s, &env, AgentId(1), AgentType::Correctable, b).unwrap());
        assert!(check_agent_type(&s, &env, AgentId(2), AgentType::Gullible, b).unwrap());
        assert!(check_agent_type(&s, &env, AgentId(2), AgentType::Delayable, b).unwrap());
    }

    #[test]
    fn protocol_lookup_order() {
        let s = sig();
        let send: LocalSet = [LocalHap::Send {
            to: AgentId(2),
            msg: "m".into(),
            copy: 0,
        }]
        .into();
        let recv = LocalHap::Recv {
            from: AgentId(2),
            msg: "m".into(),
        };
        let start = LocalHistory::new("s0".into());
        let p = AgentProtocol::new(
            &s,
            [(start.clone(), vec![send.clone()])].into(),
            vec![(recv.clone(), vec![send.clone(), LocalSet::new()])],
            vec![LocalSet::new()],
        )
        .unwrap();
        assert_eq!(p.range(&start), std::slice::from_ref(&send));
        let mut h = start.clone();
        h.records.push([recv].into());
        assert_eq!(p.range(&h).len(), 2);
        h.records.push(LocalSet::new());
        assert_eq!(p.range(&h), &[LocalSet::new()]);
        assert!(AgentProtocol::new(&s, BTreeMap::new(), vec![], vec![]).is_err());
    }

    #[test]
    fn initial_state_product() {
        let s = sig();
        let ctx = AgentContext::new(
            s.clone(),
            EnvProtocol::uniform(&s, vec![HapSet::new()]).unwrap(),
            vec![AgentProtocol::idle(), AgentProtocol::idle()],
            vec![vec!["a".into(), "b".into()], vec!["x".into(), "y".into(), "z".into()]],
            0,
            Admissibility::None,
        )
        .unwrap();
        assert_eq!(ctx.initial_count(), 6);
        assert_eq!(ctx.initial_state(4).unwrap(), vec![Label::new("b"), Label::new("y")]);
        assert!(ctx.initial_state(6).is_err());
    }
}
