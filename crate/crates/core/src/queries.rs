//! Executes a scenario's queries and collects reports, traces and graphs.
//!
//! Every artifact is produced in a fixed order from deterministic inputs, so
//! two executions over the same scenario yield identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::causal::{build_causal_graph, node_correct, partition_with, to_dot, Node};
use crate::error::{Error, Result};
use crate::hap::{AgentId, LocalHap, Time};
use crate::logic::{
    multipede_bounded, subsets, no_correct_source_in_cone, multipede_necessary, Formula, InterpretedSystem,
};
use crate::protocol::AgentContext;
use crate::run::{continue_run, dump_run, enumerate_runs, random_script, run_script, Continuation, RangeMode, Run};
use crate::scenario::{Augment, Query, QueryKind, Scenario, UniverseMode};
use crate::surgery::{apply_adjustment, brain_in_vat, cone_equivalent_run, seeded_adjustment};

/// A set of runs with a name for each.
#[derive(Clone, Debug, Default)]
pub struct Universe {
    pub runs: Vec<Run>,
    pub labels: Vec<String>,
}

impl Universe {
    fn push(&mut self, label: String, run: Run, budget: usize) -> Result<()> {
        if self.runs.len() >= budget {
            return Err(Error::Budget {
                limit: budget,
                explored: self.runs.len() + 1,
                estimate: self.runs.len() as u128 + 1,
            });
        }
        self.labels.push(label);
        self.runs.push(run);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }
}

/// Scripted runs, extended with first options up to the horizon, followed
/// by the seeded random runs.
pub fn scripted_runs(sc: &Scenario) -> Result<Vec<(String, Run)>> {
    let ctx = &sc.ctx;
    let mut out = Vec::new();
    for ns in &sc.scripts {
        let run = run_script(ctx, &ns.script)?;
        out.push((ns.name.clone(), continue_run(ctx, &run, &Continuation::FirstOption)?));
    }
    for k in 0..sc.random_runs {
        let (_, run) = random_script(ctx, sc.seed.wrapping_add(k as u64), RangeMode::Base)?;
        out.push((format!("random-{k}"), run));
    }
    Ok(out)
}

/// Correct nodes of `run`, agent-major.
pub fn correct_nodes(run: &Run) -> Vec<Node> {
    run.agents()
        .flat_map(|a| (0..=run.time()).map(move |t| Node { agent: a, time: t }))
        .filter(|v| node_correct(run, *v))
        .collect()
}

/// Cone-equivalent runs with `fail` seeded for every admissible choice of
/// extra faulty agents.
pub fn seeded_runs(ctx: &AgentContext, run: &Run, theta: Node) -> Result<Vec<(BTreeSet<AgentId>, Run)>> {
    let graph = build_causal_graph(&ctx.sig, run)?;
    let part = partition_with(run, &graph, theta)?;
    let byz = part.byzantine_agents();
    if byz.len() > ctx.f {
        return Ok(Vec::new());
    }
    let candidates: Vec<AgentId> = run
        .agents()
        .filter(|a| *a != theta.agent && !byz.contains(a))
        .collect();
    let mut out = Vec::new();
    for s in subsets(&candidates, ctx.f - byz.len()) {
        let seed: BTreeSet<AgentId> = s.union(&byz).copied().collect();
        let adj = seeded_adjustment(&ctx.sig, run, theta, &seed)?;
        out.push((s, apply_adjustment(ctx, run, &adj, &Continuation::FirstOption)?));
    }
    Ok(out)
}

/// Runs a universe needs so that the necessary condition for a multipede at
/// `theta` follows from the hope of its agent: the cone-equivalent run, each
/// seeded run and the cone-equivalent run of each seeded run.
pub fn multipede_closure(ctx: &AgentContext, run: &Run, theta: Node) -> Result<Vec<(String, Run)>> {
    let mut out = vec![(
        format!("cone {theta}"),
        cone_equivalent_run(ctx, run, theta, &Continuation::FirstOption)?.adjusted,
    )];
    for (s, seeded) in seeded_runs(ctx, run, theta)? {
        let names: Vec<String> = s.iter().map(|a| a.to_string()).collect();
        let label = format!("seeded {theta} [{}]", names.join(" "));
        if node_correct(&seeded, theta) {
            let cone = cone_equivalent_run(ctx, &seeded, theta, &Continuation::FirstOption)?.adjusted;
            out.push((format!("{label} cone"), cone));
        }
        out.push((label, seeded));
    }
    Ok(out)
}

pub fn build_universe(sc: &Scenario, scripted: &[(String, Run)], budget: usize) -> Result<Universe> {
    let ctx = &sc.ctx;
    let mut u = Universe::default();
    for (name, run) in scripted {
        u.push(format!("script {name}"), run.clone(), budget)?;
    }
    let mode = match sc.universe.mode {
        UniverseMode::Scripts => None,
        UniverseMode::Base => Some(RangeMode::Base),
        UniverseMode::Full => Some(RangeMode::Full),
    };
    if let Some(mode) = mode {
        for (k, run) in enumerate_runs(ctx, mode, budget)?.into_iter().enumerate() {
            u.push(format!("run {k}"), run, budget)?;
        }
    }
    let base_len = u.len();
    for aug in &sc.universe.augment {
        for k in 0..base_len {
            let run = u.runs[k].clone();
            let label = u.labels[k].clone();
            match aug {
                Augment::Cone => {
                    for theta in correct_nodes(&run) {
                        let out = cone_equivalent_run(ctx, &run, theta, &Continuation::FirstOption)?;
                        u.push(format!("{label} cone {theta}"), out.adjusted, budget)?;
                    }
                }
                Augment::Seeded => {
                    for theta in correct_nodes(&run) {
                        for (l, r) in multipede_closure(ctx, &run, theta)? {
                            u.push(format!("{label} {l}"), r, budget)?;
                        }
                    }
                }
                Augment::Vat => {
                    if ctx.f == 0 {
                        continue;
                    }
                    for victim in run.agents() {
                        let others_delayable = run
                            .agents()
                            .all(|j| j == victim || ctx.env.flags(j).delayable);
                        if !ctx.env.flags(victim).gullible || !others_delayable {
                            continue;
                        }
                        for t in 0..=run.time() {
                            let out = brain_in_vat(ctx, &run, victim, t, &Continuation::FirstOption)?;
                            u.push(format!("{label} vat {victim}@{t}"), out.run, budget)?;
                        }
                    }
                }
            }
        }
    }
    Ok(u)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryResult {
    pub name: String,
    pub kind: QueryKind,
    /// `None` for purely informational queries.
    pub passed: Option<bool>,
    pub report: String,
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub results: Vec<QueryResult>,
    /// Relative path to content.
    pub artifacts: BTreeMap<String, String>,
}

impl Outcome {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed != Some(false))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            let v = match r.passed {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "INFO",
            };
            writeln!(s, "{v} {} ({})", r.name, r.kind.name()).unwrap();
        }
        s
    }

    /// Writes every artifact below `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (rel, content) in &self.artifacts {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)
                    .map_err(|e| Error::Io(format!("{}: {e}", parent.display())))?;
            }
            std::fs::write(&path, content).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Options {
    /// Overrides the scenario's universe budget.
    pub budget: Option<usize>,
}

struct Runner<'a> {
    sc: &'a Scenario,
    scripted: Vec<(String, Run)>,
    budget: usize,
    universe: Option<(Universe, InterpretedSystem)>,
    artifacts: BTreeMap<String, String>,
}

fn node_list(nodes: &BTreeSet<Node>) -> String {
    let v: Vec<String> = nodes.iter().map(|n| n.to_string()).collect();
    if v.is_empty() {
        "-".into()
    } else {
        v.join(" ")
    }
}

fn check_expect(expect: Option<bool>, got: bool) -> Option<bool> {
    expect.map(|e| e == got)
}

impl Runner<'_> {
    fn run_of(&self, q: &Query) -> Result<(usize, &Run)> {
        let name = q
            .script
            .as_deref()
            .ok_or_else(|| Error::Validation(format!("query `{}` names no script", q.name)))?;
        self.scripted
            .iter()
            .position(|(n, _)| n == name)
            .map(|k| (k, &self.scripted[k].1))
            .ok_or_else(|| Error::Validation(format!("unknown script `{name}`")))
    }

    fn system(&mut self) -> Result<&(Universe, InterpretedSystem)> {
        if self.universe.is_none() {
            let u = build_universe(self.sc, &self.scripted, self.budget)?;
            let sys = InterpretedSystem::new(&self.sc.ctx.sig, u.runs.clone())?;
            let mut listing = String::new();
            for (k, l) in u.labels.iter().enumerate() {
                writeln!(listing, "{k} {l}").unwrap();
            }
            self.artifacts.insert("reports/universe.txt".into(), listing);
            self.universe = Some((u, sys));
        }
        Ok(self.universe.as_ref().expect("just built"))
    }

    fn query(&mut self, q: &Query) -> Result<QueryResult> {
        let ctx = &self.sc.ctx;
        let mut report = String::new();
        let passed = match q.kind {
            QueryKind::Partition => {
                let theta = q.theta.expect("validated");
                let (_, run) = self.run_of(q)?;
                let graph = build_causal_graph(&ctx.sig, run)?;
                let part = partition_with(run, &graph, theta)?;
                writeln!(report, "partition of `{}` at {theta}", q.script.as_deref().unwrap_or("")).unwrap();
                writeln!(report, "cone: {}", node_list(&part.cone)).unwrap();
                writeln!(report, "buffer: {}", node_list(&part.buffer)).unwrap();
                writeln!(report, "masses: {}", node_list(&part.masses())).unwrap();
                self.artifacts
                    .insert(format!("graphs/{}.dot", q.name), to_dot(&graph, &part));
                let mut ok = None;
                for (what, want, got) in [("cone", &q.cone, &part.cone), ("buffer", &q.buffer, &part.buffer)] {
                    if let Some(want) = want {
                        let same = want == got;
                        writeln!(report, "expected {what}: {} ({})", node_list(want), if same { "match" } else { "MISMATCH" })
                            .unwrap();
                        ok = Some(ok.unwrap_or(true) && same);
                    }
                }
                ok
            }
            QueryKind::Adjust => {
                let theta = q.theta.expect("validated");
                let (_, run) = self.run_of(q)?;
                let out = cone_equivalent_run(ctx, run, theta, &Continuation::FirstOption)?;
                writeln!(report, "adjustment of `{}` at {theta}", q.script.as_deref().unwrap_or("")).unwrap();
                report.push_str(&out.adjustment.dump());
                report.push_str(&out.report.to_string());
                self.artifacts
                    .insert(format!("traces/{}.json", q.name), dump_run(&out.adjusted));
                self.artifacts
                    .insert(format!("traces/{}.trace", q.name), out.adjusted.trace_lines().join("\n") + "\n");
                check_expect(q.expect, out.report.all_pass())
            }
            QueryKind::ConeEquivalence => {
                let runs: Vec<(String, Run)> = match &q.script {
                    Some(_) => {
                        let (k, _) = self.run_of(q)?;
                        vec![self.scripted[k].clone()]
                    }
                    None => self.scripted.clone(),
                };
                let mut all = true;
                for (name, run) in &runs {
                    let thetas = match q.theta {
                        Some(t) => vec![t],
                        None => correct_nodes(run),
                    };
                    for theta in thetas {
                        let out = cone_equivalent_run(ctx, run, theta, &Continuation::FirstOption)?;
                        let ok = out.report.all_pass();
                        all &= ok;
                        if ok {
                            writeln!(report, "`{name}` {theta}: A B C D E F pass").unwrap();
                        } else {
                            write!(report, "`{name}` {}", out.report).unwrap();
                        }
                    }
                }
                Some(q.expect.unwrap_or(true) == all)
            }
            QueryKind::Vat => {
                let (_, run) = self.run_of(q)?;
                let victim = q.victim.expect("validated");
                let t = q.time.expect("validated");
                let out = brain_in_vat(ctx, run, victim, t, &Continuation::FirstOption)?;
                let sys = InterpretedSystem::new(&ctx.sig, vec![run.clone(), out.run.clone()])?;
                let knows_correct = sys.holds(&Formula::k(victim, Formula::Correct(victim)), 0, t)?;
                writeln!(report, "vat for agent {victim} up to {t} in `{}`", q.script.as_deref().unwrap_or("")).unwrap();
                writeln!(report, "victim state kept: {}", out.victim_state_kept).unwrap();
                writeln!(report, "no correct haps: {}", out.silent).unwrap();
                writeln!(report, "others initial: {}", out.others_initial).unwrap();
                match out.not_transitional_at {
                    None => writeln!(report, "transitional: true").unwrap(),
                    Some(m) => writeln!(report, "transitional: false (round {m})").unwrap(),
                }
                writeln!(report, "K{victim} correct({victim}) at the cut: {knows_correct}").unwrap();
                self.artifacts
                    .insert(format!("traces/{}.json", q.name), dump_run(&out.run));
                Some(q.expect.unwrap_or(true) == (out.ok() && !knows_correct))
            }
            QueryKind::EvalFormula => {
                let f = q.formula.clone().expect("validated");
                let point = match (&q.script, q.time) {
                    (Some(_), Some(t)) => Some((self.run_of(q)?.0, t)),
                    _ => None,
                };
                let (u, sys) = self.system()?;
                let table = sys.eval(&f)?;
                writeln!(report, "formula {f}").unwrap();
                writeln!(report, "universe of {} runs", u.len()).unwrap();
                for (k, row) in table.iter().enumerate() {
                    let bits: String = row.iter().map(|b| if *b { '1' } else { '0' }).collect();
                    writeln!(report, "{bits} {}", u.labels[k]).unwrap();
                }
                match point {
                    Some((k, t)) => {
                        let v = *table[k]
                            .get(t as usize)
                            .ok_or(Error::Range { time: t, horizon: u.runs[k].time() })?;
                        writeln!(report, "value at {} time {t}: {v}", u.labels[k]).unwrap();
                        check_expect(q.expect, v)
                    }
                    None => {
                        let trues = table.iter().flatten().filter(|b| **b).count();
                        let total = table.iter().map(Vec::len).sum::<usize>();
                        writeln!(report, "true at {trues} of {total} points").unwrap();
                        q.expect.map(|e| if e { trues == total } else { trues == 0 })
                    }
                }
            }
            QueryKind::HopeRefuted => {
                let theta = q.theta.expect("validated");
                let o = q.event.clone().expect("validated");
                let (_, run) = self.run_of(q)?;
                let premise = no_correct_source_in_cone(&ctx.sig, run, theta, &o)?;
                writeln!(report, "occurrences of {o} outside the cone of {theta}: {premise}").unwrap();
                let mut ok = true;
                if premise {
                    let out = cone_equivalent_run(ctx, run, theta, &Continuation::FirstOption)?;
                    let sys = InterpretedSystem::new(&ctx.sig, vec![run.clone(), out.adjusted])?;
                    let hope = Formula::hope(theta.agent, Formula::OccurredCorrectly(o.clone()));
                    let v = sys.holds(&hope, 0, theta.time)?;
                    writeln!(report, "{hope} with the cone run added: {v}").unwrap();
                    ok = !v;
                }
                Some(ok && q.expect.is_none_or(|e| e == premise))
            }
            QueryKind::MultipedeNecessary => {
                let theta = q.theta.expect("validated");
                let o = q.event.clone().expect("validated");
                let (_, run) = self.run_of(q)?;
                let rep = multipede_necessary(&ctx.sig, run, theta, &o, ctx.f)?;
                report.push_str(&rep.to_string());
                check_expect(q.expect, rep.satisfied())
            }
            QueryKind::MultipedeBounded => {
                let theta = q.theta.expect("validated");
                let o = q.event.clone().expect("validated");
                let (k, _) = self.run_of(q)?;
                let (u, sys) = self.system()?;
                let v = multipede_bounded(sys, k, theta, &o)?;
                writeln!(report, "multipede for {o} at {theta} over {} runs: {v}", u.len()).unwrap();
                check_expect(q.expect, v)
            }
        };
        Ok(QueryResult {
            name: q.name.clone(),
            kind: q.kind,
            passed,
            report,
        })
    }
}

/// Runs `queries` (by default the scenario's own) and gathers artifacts.
pub fn run_queries_with(sc: &Scenario, queries: &[Query], opts: Options) -> Result<Outcome> {
    let scripted = scripted_runs(sc)?;
    let mut artifacts = BTreeMap::new();
    for (name, run) in &scripted {
        artifacts.insert(format!("traces/{name}.json"), dump_run(run));
        artifacts.insert(format!("traces/{name}.trace"), run.trace_lines().join("\n") + "\n");
    }
    let mut runner = Runner {
        sc,
        scripted,
        budget: opts.budget.unwrap_or(sc.universe.budget),
        universe: None,
        artifacts,
    };
    let mut results = Vec::new();
    for q in queries {
        let r = runner.query(q)?;
        runner
            .artifacts
            .insert(format!("reports/{}.txt", q.name), r.report.clone());
        results.push(r);
    }
    let mut out = Outcome {
        results,
        artifacts: runner.artifacts,
    };
    let summary = out.summary();
    out.artifacts.insert("reports/summary.txt".into(), summary);
    Ok(out)
}

pub fn run_queries(sc: &Scenario, opts: Options) -> Result<Outcome> {
    run_queries_with(sc, &sc.queries, opts)
}

/// The event `o` as an external event when it names one.
pub fn external(label: &str) -> LocalHap {
    LocalHap::External(label.into())
}

/// Timestamps `0..=h`.
pub fn timestamps(h: Time) -> impl Iterator<Item = Time> {
    0..=h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    const PING: &str = r#"
[system]
agents = 2
messages = ["m"]
external = ["o"]
horizon = 3
f = 1

[[agent]]
id = 1
[[agent.rule]]
after = "ext(o)"
offer = ["{send(2, m, 0)}"]

[environment]
default = ["{go(1), go(2)}", "{}"]
at = [
  { time = 0, offer = ["{go(1), gext(1, o)}"] },
  { time = 2, offer = ["{go(1), go(2), grecv(2<-1, m, id(1, 2, m, 0, 1))}"] },
]
gullible = "all"
correctable = "all"
delayable = "all"

[adversary]
[[adversary.script]]
name = "main"

[universe]
mode = "base"
augment = ["vat"]

[[query]]
kind = "partition"
script = "main"
theta = "2@3"
cone = ["1@0", "1@1", "2@0", "2@1", "2@2", "2@3"]
buffer = []

[[query]]
kind = "verify-lemma5"

[[query]]
kind = "eval-formula"
formula = "(K 2 (occurred-correctly o))"
expect = false

[[query]]
kind = "multipede-necessary"
script = "main"
theta = "2@3"
event = "ext(o)"
expect = "violated"
"#;

    #[test]
    fn ping_queries() {
        let sc = parse_scenario(PING).unwrap();
        let out = run_queries(&sc, Options::default()).unwrap();
        for r in &out.results {
            assert_eq!(r.passed, Some(true), "{}\n{}", r.name, r.report);
        }
        assert!(out.artifacts.contains_key("graphs/01-partition.dot"));
        assert!(out.artifacts.contains_key("traces/main.json"));
        let again = run_queries(&sc, Options::default()).unwrap();
        assert_eq!(out.artifacts, again.artifacts);
    }

    #[test]
    fn budget_is_enforced() {
        let sc = parse_scenario(PING).unwrap();
        let q = &sc.queries[2..3];
        let e = run_queries_with(&sc, q, Options { budget: Some(2) }).unwrap_err();
        assert!(matches!(e, Error::Budget { .. }), "{e}");
    }
}
