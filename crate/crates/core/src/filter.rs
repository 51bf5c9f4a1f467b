//! Filtering and updating: phases 4 and 5 of a round.
//!
//! `history` is the environment's record of all past rounds, one set per
//! round; `actions` holds each agent's attempted (or performed) correct
//! actions in the global format, indexed by agent.

use std::collections::BTreeSet;

use crate::hap::{sigma, AgentId, GlobalHap, HapSet, LocalHistory};

/// Agents that have a fault event anywhere in `history`.
pub fn failed_agents(history: &[HapSet]) -> BTreeSet<AgentId> {
    history
        .iter()
        .flatten()
        .filter(|h| h.is_fault())
        .map(|h| h.agent())
        .collect()
}

/// Removes every fault event if keeping them would make more than `f`
/// agents faulty.
pub fn filter_env_leq_f(history: &[HapSet], events: &HapSet, f: usize) -> HapSet {
    let mut faulty = failed_agents(history);
    faulty.extend(events.iter().filter(|h| h.is_fault()).map(|h| h.agent()));
    if faulty.len() <= f {
        events.clone()
    } else {
        events.iter().filter(|h| !h.is_fault()).cloned().collect()
    }
}

/// Removes correct receives that no correct or byzantine send grounds,
/// neither in the history nor in the current round.
pub fn filter_env_b(history: &[HapSet], events: &HapSet, actions: &[HapSet]) -> HapSet {
    let grounded = |r: &crate::hap::RecvHap| {
        let in_record = |set: &HapSet| {
            set.iter().any(|h| match h {
                GlobalHap::Send(s) => r.matches(s),
                other => other.fake_performed_send().is_some_and(|s| r.matches(s)),
            })
        };
        let sent_now = actions
            .get(r.from.index())
            .is_some_and(|a| a.iter().any(|h| matches!(h, GlobalHap::Send(s) if r.matches(s))))
            && events.contains(&GlobalHap::Go(r.from));
        let faked_now = events
            .iter()
            .any(|h| h.fake_performed_send().is_some_and(|s| r.matches(s)));
        history.iter().any(in_record) || sent_now || faked_now
    };
    events
        .iter()
        .filter(|h| match h {
            GlobalHap::Recv(r) => grounded(r),
            _ => true,
        })
        .cloned()
        .collect()
}

/// `filter_ε`: the `≤ f` stage first, then the receive stage.
pub fn filter_env(history: &[HapSet], events: &HapSet, actions: &[HapSet], f: usize) -> HapSet {
    filter_env_b(history, &filter_env_leq_f(history, events, f), actions)
}

/// `filter_i`: an agent acts only when the environment lets it go.
pub fn filter_agent(agent: AgentId, actions: &[HapSet], events: &HapSet) -> HapSet {
    if events.contains(&GlobalHap::Go(agent)) {
        actions[agent.index()].clone()
    } else {
        HapSet::new()
    }
}

/// Whether `update_i` appends a record for `agent` given the round's events.
pub fn triggers_update(agent: AgentId, events: &HapSet) -> bool {
    let mine: Vec<&GlobalHap> = events
        .iter()
        .filter(|h| h.is_event() && h.agent() == agent)
        .collect();
    !sigma(mine.iter().copied()).is_empty()
        || mine
            .iter()
            .any(|h| matches!(h, GlobalHap::Go(_) | GlobalHap::Sleep(_)))
}

/// `update_i`.
pub fn update_agent(
    agent: AgentId,
    history: &LocalHistory,
    actions: &HapSet,
    events: &HapSet,
) -> LocalHistory {
    let mut next = history.clone();
    if triggers_update(agent, events) {
        let mine = events
            .iter()
            .filter(|h| h.is_event() && h.agent() == agent)
            .chain(actions.iter());
        next.records.push(sigma(mine));
    }
    next
}

/// `update_ε`: the round's record is the union of all β-sets.
pub fn env_record(events: &HapSet, actions: &[HapSet]) -> HapSet {
    let mut rec = events.clone();
    for a in actions {
        rec.extend(a.iter().cloned());
    }
    rec
}

pub fn update_env(history: &[HapSet], events: &HapSet, actions: &[HapSet]) -> Vec<HapSet> {
    let mut next = history.to_vec();
    next.push(env_record(events, actions));
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hap::{LocalHap, Signature};
    use crate::text::parse_hap_set;

    fn sig() -> Signature {
        Signature::new(2, vec!["m".into()], vec!["o".into()], vec![], 1, 4).unwrap()
    }

    fn g(s: &Signature) -> crate::hap::Gmi {
        s.encode_gmi(AgentId(1), AgentId(2), &"m".into(), 0, 0).unwrap()
    }

    fn set(s: &Signature, src: &str) -> HapSet {
        parse_hap_set(s, &src.replace("#g", &g(s).to_string())).unwrap()
    }

    #[test]
    fn leq_f_examples() {
        let s = sig();
        assert_eq!(
            filter_env_leq_f(&[], &set(&s, "{go(1), fail(2)}"), 0),
            set(&s, "{go(1)}")
        );
        let hist = vec![set(&s, "{fail(1)}")];
        let x = set(&s, "{fail(1), go(2)}");
        assert_eq!(filter_env_leq_f(&hist, &x, 1), x);
        assert!(filter_env_leq_f(&hist, &set(&s, "{fail(2)}"), 1).is_empty());
    }

    #[test]
    fn b_examples() {
        let s = sig();
        let recv = set(&s, "{grecv(2<-1, m, #g), go(1)}");
        let acts = vec![set(&s, "{gsend(1->2, m, #g)}"), HapSet::new()];
        assert_eq!(filter_env_b(&[], &recv, &acts), recv);
        // Without go(1) the attempted send does not happen.
        let no_go = set(&s, "{grecv(2<-1, m, #g)}");
        assert!(filter_env_b(&[], &no_go, &acts).is_empty());
        assert!(filter_env_b(&[], &no_go, &[HapSet::new(), HapSet::new()]).is_empty());
        let hist = vec![set(&s, "{fake(1, gsend(1->2, m, #g) -> noop)}")];
        assert_eq!(filter_env_b(&hist, &no_go, &[HapSet::new(), HapSet::new()]), no_go);
        let hist = vec![set(&s, "{gsend(1->2, m, #g)}")];
        assert_eq!(filter_env_b(&hist, &no_go, &[HapSet::new(), HapSet::new()]), no_go);
    }

    #[test]
    fn composition_order() {
        let s = sig();
        let x = set(&s, "{fake(1, gsend(1->2, m, #g) -> noop), grecv(2<-1, m, #g)}");
        let none = [HapSet::new(), HapSet::new()];
        assert!(filter_env(&[], &x, &none, 0).is_empty());
        assert_eq!(filter_env(&[], &x, &none, 1), x);
        let sys = set(&s, "{go(1), sleep(2)}");
        assert_eq!(filter_env(&[], &sys, &none, 1), sys);
        // The opposite order would keep the orphaned receive.
        let wrong = filter_env_leq_f(&[], &filter_env_b(&[], &x, &none), 0);
        assert_eq!(wrong, set(&s, "{grecv(2<-1, m, #g)}"));
    }

    #[test]
    fn agent_filter() {
        let s = sig();
        let acts = vec![set(&s, "{gsend(1->2, m, #g)}"), HapSet::new()];
        assert_eq!(filter_agent(AgentId(1), &acts, &set(&s, "{go(1)}")), acts[0]);
        assert!(filter_agent(AgentId(1), &acts, &HapSet::new()).is_empty());
        assert!(filter_agent(AgentId(1), &acts, &set(&s, "{sleep(1)}")).is_empty());
    }

    #[test]
    fn agent_update() {
        let s = sig();
        let h = LocalHistory::new("s0".into());
        let none = HapSet::new();
        assert_eq!(update_agent(AgentId(1), &h, &none, &set(&s, "{hib(1)}")), h);
        let woke = update_agent(AgentId(1), &h, &none, &set(&s, "{go(1)}"));
        assert_eq!(woke.records, vec![Default::default()]);
        let slept = update_agent(AgentId(1), &h, &none, &set(&s, "{sleep(1)}"));
        assert_eq!(slept.records.len(), 1);
        let r = s.encode_gmi(AgentId(2), AgentId(1), &"m".into(), 0, 0).unwrap();
        let fake = parse_hap_set(&s, &format!("{{fake(1, grecv(1<-2, m, {r}))}}")).unwrap();
        let got = update_agent(AgentId(1), &h, &none, &fake);
        assert_eq!(
            got.records,
            vec![[LocalHap::Recv {
                from: AgentId(2),
                msg: "m".into()
            }]
            .into()]
        );
        // Other agents' events do not touch agent 1.
        assert_eq!(update_agent(AgentId(1), &h, &none, &set(&s, "{go(2)}")), h);
    }

    #[test]
    fn env_update() {
        let s = sig();
        let h = update_env(&[], &HapSet::new(), &[HapSet::new(), HapSet::new()]);
        assert_eq!(h, vec![HapSet::new()]);
        let a = set(&s, "{go(1)}");
        let b = set(&s, "{gsend(1->2, m, #g)}");
        let h2 = update_env(&h, &a, &[b.clone(), HapSet::new()]);
        assert_eq!(h2.len(), 2);
        assert_eq!(h2[1], a.union(&b).cloned().collect());
    }
}
