#![allow(dead_code)]

use std::path::PathBuf;

use std::collections::BTreeSet;

use byzcone::causal::Node;
use byzcone::hap::{CorrectAction, CorrectEvent, SendHap, Signature};
use byzcone::queries::scripted_runs;
use byzcone::run::{enumerate_runs, RangeMode, Run};
use byzcone::scenario::{load_scenario, Scenario, UniverseMode};
use byzcone::{AgentId, GlobalHap, HapSet, LocalHap};

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn load(name: &str) -> Scenario {
    let path = scenario_dir().join(format!("{name}.toml"));
    load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub struct Entry {
    pub name: String,
    pub sc: Scenario,
    /// Scripted, random and (for enumerating scenarios) every base run.
    pub runs: Vec<(String, Run)>,
}

pub const NAMES: [&str; 6] = ["chain", "ghost", "investigators", "pingpong", "relay", "vat"];

pub fn corpus_runs(sc: &Scenario) -> Vec<(String, Run)> {
    let mut runs = scripted_runs(sc).unwrap();
    let mode = match sc.universe.mode {
        UniverseMode::Scripts => None,
        UniverseMode::Base => Some(RangeMode::Base),
        UniverseMode::Full => Some(RangeMode::Full),
    };
    if let Some(mode) = mode {
        for (k, r) in enumerate_runs(&sc.ctx, mode, sc.universe.budget).unwrap().into_iter().enumerate() {
            runs.push((format!("run {k}"), r));
        }
    }
    runs
}

pub fn corpus() -> Vec<Entry> {
    NAMES
        .iter()
        .map(|name| {
            let sc = load(name);
            let runs = corpus_runs(&sc);
            Entry {
                name: name.to_string(),
                sc,
                runs,
            }
        })
        .collect()
}

/// Local events agent `i` can perceive.
pub fn local_events(sc: &Scenario, i: AgentId) -> Vec<LocalHap> {
    let sig = &sc.ctx.sig;
    let mut out: Vec<LocalHap> = sig.external().iter().map(|l| LocalHap::External(l.clone())).collect();
    for from in sig.agents().filter(|j| *j != i) {
        for msg in sig.messages() {
            out.push(LocalHap::Recv {
                from,
                msg: msg.clone(),
            });
        }
    }
    out
}

/// The environment's record before round `m`, rebuilt from the β-sets.
pub fn record_before(run: &Run, m: usize) -> HapSet {
    let mut rec = HapSet::new();
    for r in &run.rounds()[..m] {
        rec.extend(r.beta_env.iter().cloned());
        for a in &r.beta_agents {
            rec.extend(a.iter().cloned());
        }
    }
    rec
}

pub fn owner(h: &GlobalHap) -> Option<AgentId> {
    match h {
        GlobalHap::Fake(CorrectEvent::Recv(r)) => Some(r.to),
        GlobalHap::Fake(CorrectEvent::External { agent, .. }) => Some(*agent),
        GlobalHap::FakeAction { agent, .. } => Some(*agent),
        GlobalHap::Sleep(a) | GlobalHap::Hibernate(a) => Some(*a),
        _ => None,
    }
}

fn same_send(a: &SendHap, b: &SendHap) -> bool {
    a.from == b.from && a.to == b.to && a.msg == b.msg && a.gmi == b.gmi
}

fn faked_send(set: &HapSet, send: &SendHap) -> bool {
    set.iter().any(|h| {
        matches!(h, GlobalHap::FakeAction { performed: Some(CorrectAction::Send(s)), .. } if same_send(s, send))
    })
}

fn correct_send(set: &HapSet, send: &SendHap) -> bool {
    set.iter().any(|h| matches!(h, GlobalHap::Send(s) if same_send(s, send)))
}

/// Brute-force evaluation of the environment filter, written directly from
/// its two defining predicates: first drop every fault when keeping them
/// would exceed `f` faulty agents, then drop receives without a send.
pub fn oracle_filter_env(record: &HapSet, x_env: &HapSet, x_agents: &[HapSet], f: usize) -> HapSet {
    let failed: std::collections::BTreeSet<AgentId> = record.iter().filter_map(owner).collect();
    let mut all = failed.clone();
    all.extend(x_env.iter().filter_map(owner));
    let stage1: HapSet = if all.len() <= f {
        x_env.clone()
    } else {
        x_env.iter().filter(|h| owner(h).is_none()).cloned().collect()
    };
    stage1
        .iter()
        .filter(|h| {
            let GlobalHap::Recv(r) = h else { return true };
            let send = SendHap {
                from: r.from,
                to: r.to,
                msg: r.msg.clone(),
                copy: 0,
                gmi: r.gmi,
            };
            let sender_actions = &x_agents[r.from.index()];
            let impossible = !correct_send(record, &send)
                && !faked_send(record, &send)
                && (!correct_send(sender_actions, &send) || !stage1.contains(&GlobalHap::Go(r.from)))
                && !faked_send(&stage1, &send);
            !impossible
        })
        .cloned()
        .collect()
}

/// Causal edges read off the β-sets, independently of the library's graph.
pub fn edges(sig: &Signature, run: &Run) -> BTreeSet<(Node, Node)> {
    let mut out = BTreeSet::new();
    for a in run.agents() {
        for t in 0..run.time() {
            out.insert((Node { agent: a, time: t }, Node { agent: a, time: t + 1 }));
        }
    }
    for q in 0..run.time() {
        for h in run.beta_env(q) {
            let GlobalHap::Recv(r) = h else { continue };
            let Some(p) = sig.decode_gmi(r.gmi) else { continue };
            if p.time > q {
                continue;
            }
            let sent = run.beta_agent(r.from, p.time).iter().any(|s| matches!(s, GlobalHap::Send(s) if s.gmi == r.gmi))
                || run.beta_env(p.time).iter().any(|s| s.fake_performed_send().is_some_and(|s| s.gmi == r.gmi));
            if sent {
                out.insert((
                    Node {
                        agent: r.from,
                        time: p.time,
                    },
                    Node {
                        agent: r.to,
                        time: q + 1,
                    },
                ));
            }
        }
    }
    out
}
