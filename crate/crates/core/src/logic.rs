//! Epistemic formulas over a bounded universe of runs.
//!
//! Knowledge quantifies over the runs handed to [`InterpretedSystem::new`]
//! and every timestamp of each run. A negative verdict is sound whenever
//! the universe contains the run that refutes it; a positive one only says
//! no refuting run was supplied.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::causal::{build_causal_graph, node_correct, partition_with, Node};
use crate::error::{Error, Result};
use crate::hap::{sigma, AgentId, Label, LocalHap, LocalSet, Signature, Time};
use crate::run::Run;
use crate::text::Cursor;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    /// `correct(i)`: the current node of `i` is correct.
    Correct(AgentId),
    CorrectAt(AgentId, Time),
    FakeAt(AgentId, Time, LocalHap),
    OccurredCorrectlyAt(AgentId, Time, LocalHap),
    /// Correctly recorded by the given agent at some point so far.
    OccurredCorrectlyBy(AgentId, LocalHap),
    /// Correctly recorded by some agent so far.
    OccurredCorrectly(LocalHap),
    /// Recorded by the agent so far, correctly or not.
    Occurred(AgentId, LocalHap),
    /// A user-valuated proposition.
    Atom(Label),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    K(AgentId, Box<Formula>),
    /// Hope: `correct(i) -> K_i (correct(i) -> φ)`.
    H(AgentId, Box<Formula>),
}

impl Formula {
    pub fn negate(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn k(agent: AgentId, f: Formula) -> Formula {
        Formula::K(agent, Box::new(f))
    }

    pub fn hope(agent: AgentId, f: Formula) -> Formula {
        Formula::H(agent, Box::new(f))
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::And(vec![
            Formula::implies(a.clone(), b.clone()),
            Formula::implies(b, a),
        ])
    }

    /// Rewrites `Or`, `Implies` and `H` in terms of `Not`, `And` and `K`.
    pub fn expand(&self) -> Formula {
        use Formula::*;
        match self {
            Not(f) => Formula::negate(f.expand()),
            And(fs) => And(fs.iter().map(Formula::expand).collect()),
            Or(fs) => Formula::negate(And(fs.iter().map(|f| Formula::negate(f.expand())).collect())),
            Implies(a, b) => Formula::negate(And(vec![a.expand(), Formula::negate(b.expand())])),
            K(i, f) => Formula::k(*i, f.expand()),
            H(i, f) => {
                let inner = Formula::negate(And(vec![Correct(*i), Formula::negate(f.expand())]));
                Formula::negate(And(vec![Correct(*i), Formula::negate(Formula::k(*i, inner))]))
            }
            atom => atom.clone(),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Formula::*;
        let list = |f: &mut fmt::Formatter<'_>, head: &str, fs: &[Formula]| {
            write!(f, "({head}")?;
            for x in fs {
                write!(f, " {x}")?;
            }
            write!(f, ")")
        };
        match self {
            True => write!(f, "true"),
            False => write!(f, "false"),
            Correct(i) => write!(f, "(correct {i})"),
            CorrectAt(i, t) => write!(f, "(correct-at {i} {t})"),
            FakeAt(i, t, o) => write!(f, "(fake-at {i} {t} {o})"),
            OccurredCorrectlyAt(i, t, o) => write!(f, "(occurred-correctly-at {i} {t} {o})"),
            OccurredCorrectlyBy(i, o) => write!(f, "(occurred-correctly {i} {o})"),
            OccurredCorrectly(o) => write!(f, "(occurred-correctly {o})"),
            Occurred(i, o) => write!(f, "(occurred {i} {o})"),
            Atom(l) => write!(f, "(atom {:?})", l.as_str()),
            Not(x) => write!(f, "(not {x})"),
            And(fs) => list(f, "and", fs),
            Or(fs) => list(f, "or", fs),
            Implies(a, b) => write!(f, "(implies {a} {b})"),
            K(i, x) => write!(f, "(K {i} {x})"),
            H(i, x) => write!(f, "(H {i} {x})"),
        }
    }
}

/// A local hap: `ext(o)`, `recv(2, m)` and so on, or a bare or quoted label
/// standing for the external event of that name.
fn hap_arg(c: &mut Cursor<'_>, sig: &Signature) -> Result<LocalHap> {
    c.ws();
    let mark = c.mark();
    if c.peek() != Some('"') && c.word().is_ok() && c.peek() == Some('(') {
        c.reset(mark);
        return crate::text::local_hap(c, sig);
    }
    c.reset(mark);
    let col = c.column();
    let hap = LocalHap::External(c.label()?);
    sig.check_local(&hap)
        .map_err(|e| Error::parse_at(col, e.to_string()))?;
    Ok(hap)
}

fn formula(c: &mut Cursor<'_>, sig: &Signature) -> Result<Formula> {
    c.ws();
    if !c.eat("(") {
        let col = c.column();
        return match c.word()? {
            "true" => Ok(Formula::True),
            "false" => Ok(Formula::False),
            w => Err(Error::parse_at(col, format!("expected `(`, `true` or `false`, found `{w}`"))),
        };
    }
    c.ws();
    let col = c.column();
    let head = c.word()?;
    let f = match head {
        "not" => Formula::negate(formula(c, sig)?),
        "and" | "or" => {
            let mut fs = Vec::new();
            while c.peek() != Some(')') && !c.at_end() {
                fs.push(formula(c, sig)?);
            }
            if head == "and" {
                Formula::And(fs)
            } else {
                Formula::Or(fs)
            }
        }
        "implies" => {
            let a = formula(c, sig)?;
            Formula::implies(a, formula(c, sig)?)
        }
        "K" | "H" => {
            let i = c.agent(sig)?;
            let sub = formula(c, sig)?;
            if head == "K" {
                Formula::k(i, sub)
            } else {
                Formula::hope(i, sub)
            }
        }
        "correct" => Formula::Correct(c.agent(sig)?),
        "correct-at" => {
            let i = c.agent(sig)?;
            Formula::CorrectAt(i, c.time()?)
        }
        "fake-at" | "occurred-correctly-at" => {
            let i = c.agent(sig)?;
            let t = c.time()?;
            let o = hap_arg(c, sig)?;
            if head == "fake-at" {
                Formula::FakeAt(i, t, o)
            } else {
                Formula::OccurredCorrectlyAt(i, t, o)
            }
        }
        "occurred-correctly" => {
            let mark = c.mark();
            let by = c.agent(sig).ok().filter(|_| c.peek() != Some(')'));
            match by {
                Some(i) => Formula::OccurredCorrectlyBy(i, hap_arg(c, sig)?),
                None => {
                    c.reset(mark);
                    Formula::OccurredCorrectly(hap_arg(c, sig)?)
                }
            }
        }
        "occurred" => {
            let i = c.agent(sig)?;
            Formula::Occurred(i, hap_arg(c, sig)?)
        }
        "atom" => Formula::Atom(c.label()?),
        other => return Err(Error::parse_at(col, format!("unknown operator `{other}`"))),
    };
    c.expect(")")?;
    Ok(f)
}

/// Parses the prefix notation, e.g. `(H 3 (occurred-correctly report))`.
pub fn parse_formula(sig: &Signature, src: &str) -> Result<Formula> {
    let mut c = Cursor::new(src);
    let f = formula(&mut c, sig)?;
    c.end()?;
    Ok(f)
}

/// Truth values indexed by run, then timestamp.
pub type Table = Vec<Vec<bool>>;

/// What each agent recorded in each round, split by the reason.
#[derive(Clone, Debug)]
struct Occurrences {
    /// `[agent][round]`: haps recorded due to a correct event or action.
    correct: Vec<Vec<LocalSet>>,
    /// `[agent][round]`: haps recorded due to a byzantine event.
    fake: Vec<Vec<LocalSet>>,
}

impl Occurrences {
    fn of(run: &Run) -> Self {
        let mut correct = vec![Vec::new(); run.n()];
        let mut fake = vec![Vec::new(); run.n()];
        for m in 0..run.time() {
            for agent in run.agents() {
                let env = run.beta_env(m);
                let ok = env
                    .iter()
                    .filter(|h| h.is_correct_event() && h.agent() == agent)
                    .chain(run.beta_agent(agent, m));
                correct[agent.index()].push(sigma(ok));
                let bad = env.iter().filter(|h| h.is_byzantine() && h.agent() == agent);
                fake[agent.index()].push(sigma(bad));
            }
        }
        Occurrences { correct, fake }
    }
}

/// An interpreted system over a finite set of runs.
#[derive(Clone, Debug)]
pub struct InterpretedSystem {
    sig: Signature,
    runs: Vec<Run>,
    occurrences: Vec<Occurrences>,
    valuation: BTreeMap<Label, BTreeSet<(usize, Time)>>,
    /// `[agent][run][t]`: local-state class of the point.
    class_of: Vec<Vec<Vec<usize>>>,
    class_count: Vec<usize>,
}

impl InterpretedSystem {
    pub fn new(sig: &Signature, runs: Vec<Run>) -> Result<Self> {
        if let Some(r) = runs.iter().find(|r| r.n() != sig.n()) {
            return Err(Error::Validation(format!(
                "run with {} agents in a system of {}",
                r.n(),
                sig.n()
            )));
        }
        let mut class_of = Vec::with_capacity(sig.n());
        let mut class_count = Vec::with_capacity(sig.n());
        for agent in sig.agents() {
            let mut ids: HashMap<(&Label, &[LocalSet]), usize> = HashMap::new();
            let per_run = runs
                .iter()
                .map(|r| {
                    (0..=r.time())
                        .map(|t| {
                            let next = ids.len();
                            *ids.entry(r.local_view(agent, t)).or_insert(next)
                        })
                        .collect()
                })
                .collect();
            class_count.push(ids.len());
            class_of.push(per_run);
        }
        let occurrences = runs.iter().map(Occurrences::of).collect();
        Ok(InterpretedSystem {
            sig: sig.clone(),
            runs,
            occurrences,
            valuation: BTreeMap::new(),
            class_of,
            class_count,
        })
    }

    /// Sets the points where the custom proposition `name` holds.
    pub fn set_atom(&mut self, name: Label, points: BTreeSet<(usize, Time)>) -> Result<()> {
        if let Some((r, t)) = points
            .iter()
            .find(|(r, t)| self.runs.get(*r).is_none_or(|run| *t > run.time()))
        {
            return Err(Error::Validation(format!("valuation names missing point ({r}, {t})")));
        }
        self.valuation.insert(name, points);
        Ok(())
    }

    pub fn sig(&self) -> &Signature {
        &self.sig
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, Time)> + '_ {
        self.runs
            .iter()
            .enumerate()
            .flat_map(|(k, r)| (0..=r.time()).map(move |t| (k, t)))
    }

    /// `r_i(t) = r'_i(t')` for points of the universe.
    pub fn local_state_equal(&self, agent: AgentId, a: (usize, Time), b: (usize, Time)) -> bool {
        let c = &self.class_of[agent.index()];
        c[a.0][a.1 as usize] == c[b.0][b.1 as usize]
    }

    fn check_time(&self, t: Time) -> Result<()> {
        if t > self.sig.horizon() {
            Err(Error::Range {
                time: t,
                horizon: self.sig.horizon(),
            })
        } else {
            Ok(())
        }
    }

    fn atom_at(&self, f: &Formula, k: usize, t: Time) -> bool {
        let run = &self.runs[k];
        let occ = &self.occurrences[k];
        // Round `m - 1` is recorded at timestamp `m`; only rounds up to `t` count.
        let recorded = |sets: &Vec<LocalSet>, m: Time, o: &LocalHap| {
            m >= 1 && m <= t && sets[m as usize - 1].contains(o)
        };
        let by = |i: AgentId, o: &LocalHap| {
            (1..=t).any(|m| recorded(&occ.correct[i.index()], m, o))
        };
        match f {
            Formula::True => true,
            Formula::False => false,
            Formula::Correct(i) => node_correct(run, Node { agent: *i, time: t }),
            Formula::CorrectAt(i, m) => node_correct(
                run,
                Node {
                    agent: *i,
                    time: (*m).min(t),
                },
            ),
            Formula::FakeAt(i, m, o) => recorded(&occ.fake[i.index()], *m, o),
            Formula::OccurredCorrectlyAt(i, m, o) => recorded(&occ.correct[i.index()], *m, o),
            Formula::OccurredCorrectlyBy(i, o) => by(*i, o),
            Formula::OccurredCorrectly(o) => self.sig.agents().any(|i| by(i, o)),
            Formula::Occurred(i, o) => {
                by(*i, o) || (1..=t).any(|m| recorded(&occ.fake[i.index()], m, o))
            }
            Formula::Atom(name) => self.valuation.get(name).is_some_and(|p| p.contains(&(k, t))),
            _ => unreachable!("not an atom"),
        }
    }

    fn eval_core(&self, f: &Formula) -> Result<Table> {
        let map = |g: &dyn Fn(usize, Time) -> bool| -> Table {
            self.runs
                .iter()
                .enumerate()
                .map(|(k, r)| (0..=r.time()).map(|t| g(k, t)).collect())
                .collect()
        };
        match f {
            Formula::Not(x) => {
                let a = self.eval_core(x)?;
                Ok(a.into_iter().map(|row| row.into_iter().map(|b| !b).collect()).collect())
            }
            Formula::And(fs) => {
                let mut acc = map(&|_, _| true);
                for x in fs {
                    let b = self.eval_core(x)?;
                    for (ra, rb) in acc.iter_mut().zip(b) {
                        for (a, b) in ra.iter_mut().zip(rb) {
                            *a &= b;
                        }
                    }
                }
                Ok(acc)
            }
            Formula::K(i, x) => {
                self.sig.check_agent(*i)?;
                let sub = self.eval_core(x)?;
                let classes = &self.class_of[i.index()];
                let mut all = vec![true; self.class_count[i.index()]];
                for (k, row) in sub.iter().enumerate() {
                    for (t, v) in row.iter().enumerate() {
                        if !v {
                            all[classes[k][t]] = false;
                        }
                    }
                }
                Ok(map(&|k, t| all[classes[k][t as usize]]))
            }
            Formula::Or(_) | Formula::Implies(..) | Formula::H(..) => self.eval_core(&f.expand()),
            atom => {
                match atom {
                    Formula::CorrectAt(i, m)
                    | Formula::FakeAt(i, m, _)
                    | Formula::OccurredCorrectlyAt(i, m, _) => {
                        self.sig.check_agent(*i)?;
                        self.check_time(*m)?;
                    }
                    Formula::Correct(i) | Formula::OccurredCorrectlyBy(i, _) | Formula::Occurred(i, _) => {
                        self.sig.check_agent(*i)?
                    }
                    _ => {}
                }
                Ok(map(&|k, t| self.atom_at(atom, k, t)))
            }
        }
    }

    /// Truth table of `f` at every point.
    pub fn eval(&self, f: &Formula) -> Result<Table> {
        self.eval_core(&f.expand())
    }

    pub fn holds(&self, f: &Formula, run: usize, t: Time) -> Result<bool> {
        let run_len = self
            .runs
            .get(run)
            .ok_or_else(|| Error::Validation(format!("no run {run} in the universe")))?
            .time();
        if t > run_len {
            return Err(Error::Range {
                time: t,
                horizon: run_len,
            });
        }
        Ok(self.eval(f)?[run][t as usize])
    }

    /// First point where `f` is false, if any.
    pub fn counterexample(&self, f: &Formula) -> Result<Option<(usize, Time)>> {
        let table = self.eval(f)?;
        Ok(table.iter().enumerate().find_map(|(k, row)| {
            row.iter().position(|v| !v).map(|t| (k, t as Time))
        }))
    }

    pub fn valid(&self, f: &Formula) -> Result<bool> {
        Ok(self.counterexample(f)?.is_none())
    }

    /// Whether `f` takes the same value at any two points `agent` cannot
    /// tell apart.
    pub fn check_localized(&self, f: &Formula, agent: AgentId) -> Result<bool> {
        self.sig.check_agent(agent)?;
        let table = self.eval(f)?;
        let classes = &self.class_of[agent.index()];
        let mut seen: Vec<Option<bool>> = vec![None; self.class_count[agent.index()]];
        for (k, row) in table.iter().enumerate() {
            for (t, v) in row.iter().enumerate() {
                let slot = &mut seen[classes[k][t]];
                match slot {
                    None => *slot = Some(*v),
                    Some(w) if *w != *v => return Ok(false),
                    _ => {}
                }
            }
        }
        Ok(true)
    }
}

/// Nodes `(j, m)` with a correct event `O` of `j` in round `m`, `local(O) = o`.
pub fn correct_sources(run: &Run, o: &LocalHap) -> Vec<Node> {
    let mut out = Vec::new();
    for m in 0..run.time() {
        for h in run.beta_env(m) {
            if h.is_correct_event() && h.local().as_ref() == Some(o) {
                out.push(Node {
                    agent: h.agent(),
                    time: m,
                });
            }
        }
    }
    out
}

/// Every correct occurrence of `o` lies outside the reliable cone of `theta`.
pub fn no_correct_source_in_cone(sig: &Signature, run: &Run, theta: Node, o: &LocalHap) -> Result<bool> {
    let graph = build_causal_graph(sig, run)?;
    let part = partition_with(run, &graph, theta)?;
    Ok(correct_sources(run, o).iter().all(|v| !part.cone.contains(v)))
}

/// Bounded multipede check: every run of the universe in which `theta` is
/// correct and its agent has the same local state as in `run` has a correct
/// occurrence of `o` inside the reliable cone of `theta`.
pub fn multipede_bounded(sys: &InterpretedSystem, run: usize, theta: Node, o: &LocalHap) -> Result<bool> {
    let base = &sys.runs()[run];
    if theta.time > base.time() {
        return Err(Error::Range {
            time: theta.time,
            horizon: base.time(),
        });
    }
    for (k, other) in sys.runs().iter().enumerate() {
        if theta.time > other.time()
            || !sys.local_state_equal(theta.agent, (run, theta.time), (k, theta.time))
            || !node_correct(other, theta)
        {
            continue;
        }
        let graph = build_causal_graph(sys.sig(), other)?;
        let part = partition_with(other, &graph, theta)?;
        if !correct_sources(other, o).iter().any(|v| part.cone.contains(v)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Witness search for one choice of extra faulty agents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedCase {
    pub seed: BTreeSet<AgentId>,
    /// A correct source of `o` with a causal path to theta avoiding every
    /// agent of the seed and of the buffer.
    pub witness: Option<Node>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NecessaryReport {
    pub theta: Node,
    pub event: LocalHap,
    pub byzantine: BTreeSet<AgentId>,
    pub cases: Vec<SeedCase>,
}

impl NecessaryReport {
    pub fn satisfied(&self) -> bool {
        self.cases.iter().all(|c| c.witness.is_some())
    }
}

fn agent_list(set: &BTreeSet<AgentId>) -> String {
    let v: Vec<String> = set.iter().map(|a| a.to_string()).collect();
    format!("{{{}}}", v.join(", "))
}

impl fmt::Display for NecessaryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "necessary condition at {} for {}: byzantine {}",
            self.theta,
            self.event,
            agent_list(&self.byzantine)
        )?;
        for c in &self.cases {
            match c.witness {
                Some(w) => writeln!(f, "  seed {} witness {w}", agent_list(&c.seed))?,
                None => writeln!(f, "  seed {} no witness", agent_list(&c.seed))?,
            }
        }
        let verdict = if self.satisfied() { "satisfied" } else { "violated" };
        writeln!(f, "verdict {verdict}")
    }
}

/// All `k`-subsets of `items`, in lexicographic order.
pub fn subsets<T: Clone + Ord>(items: &[T], k: usize) -> Vec<BTreeSet<T>> {
    fn go<T: Clone + Ord>(items: &[T], k: usize, start: usize, cur: &mut Vec<T>, out: &mut Vec<BTreeSet<T>>) {
        if cur.len() == k {
            out.push(cur.iter().cloned().collect());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i].clone());
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= items.len() {
        go(items, k, 0, &mut Vec::new(), &mut out);
    }
    out
}

/// Checks the necessary condition for a multipede for `o` at `theta`.
pub fn multipede_necessary(
    sig: &Signature,
    run: &Run,
    theta: Node,
    o: &LocalHap,
    f: usize,
) -> Result<NecessaryReport> {
    if !node_correct(run, theta) {
        return Err(Error::Precondition(format!("node {theta} is not correct")));
    }
    let graph = build_causal_graph(sig, run)?;
    let part = partition_with(run, &graph, theta)?;
    let byzantine = part.byzantine_agents();
    if byzantine.len() > f {
        return Err(Error::Integrity(format!(
            "{} buffer agents exceed f = {f}",
            byzantine.len()
        )));
    }
    let candidates: Vec<AgentId> = sig
        .agents()
        .filter(|a| *a != theta.agent && !byzantine.contains(a))
        .collect();
    let sources = correct_sources(run, o);
    let cases = subsets(&candidates, f - byzantine.len())
        .into_iter()
        .map(|seed| {
            let avoid: BTreeSet<AgentId> = seed.union(&byzantine).copied().collect();
            let mut reach = BTreeSet::from([theta]);
            let mut stack = vec![theta];
            while let Some(v) = stack.pop() {
                for p in graph.predecessors(v) {
                    if !avoid.contains(&p.agent) && reach.insert(p) {
                        stack.push(p);
                    }
                }
            }
            let witness = sources.iter().copied().find(|v| reach.contains(v));
            SeedCase { seed, witness }
        })
        .collect();
    Ok(NecessaryReport {
        theta,
        event: o.clone(),
        byzantine,
        cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hap::HapSet;
    use crate::text::parse_hap_set;

    fn sig() -> Signature {
        Signature::new(2, vec!["m".into()], vec!["o".into(), "report".into()], vec![], 1, 4).unwrap()
    }

    fn run_of(s: &Signature, rounds: &[&str]) -> Run {
        let mut run = Run::new(vec!["s0".into(); s.n()]);
        for env in rounds {
            run.push_surgical(parse_hap_set(s, env).unwrap(), vec![HapSet::new(); s.n()])
                .unwrap();
        }
        run
    }

    #[test]
    fn parse_round_trip() {
        let s = sig();
        for src in [
            "(H 1 (occurred-correctly ext(report)))",
            "(K 2 (not (correct 2)))",
            "(and (fake-at 1 1 ext(o)) (occurred 1 recv(2, m)) true)",
            "(or (occurred-correctly 2 ext(o)) (atom \"p q\"))",
            "(implies (correct-at 1 2) (occurred-correctly-at 1 1 ext(o)))",
        ] {
            let f = parse_formula(&s, src).unwrap();
            assert_eq!(f.to_string(), src);
        }
        assert_eq!(
            parse_formula(&s, "(H 2 (occurred-correctly \"report\"))").unwrap(),
            parse_formula(&s, "(H 2 (occurred-correctly ext(report)))").unwrap()
        );
        assert_eq!(
            parse_formula(&s, "(occurred-correctly o)").unwrap(),
            Formula::OccurredCorrectly(LocalHap::External("o".into()))
        );
    }

    #[test]
    fn parse_errors() {
        let s = sig();
        let e = parse_formula(&s, "(K 9 true)").unwrap_err();
        assert!(matches!(e, Error::Parse { column: 4, .. }), "{e}");
        let e = parse_formula(&s, "(maybe 1)").unwrap_err();
        assert!(e.to_string().contains("maybe"));
        assert!(parse_formula(&s, "(occurred-correctly nope)").is_err());
        assert!(parse_formula(&s, "(not true) x").is_err());
    }

    #[test]
    fn designated_atoms() {
        let s = sig();
        let fake = run_of(&s, &["{fake(1, gext(1, o))}"]);
        let real = run_of(&s, &["{gext(1, o)}", "{sleep(2)}"]);
        let sys = InterpretedSystem::new(&s, vec![fake, real]).unwrap();
        let o = LocalHap::External("o".into());
        let at = |f: Formula, k, t| sys.holds(&f, k, t).unwrap();
        assert!(at(Formula::CorrectAt(AgentId(1), 0), 0, 0));
        assert!(at(Formula::FakeAt(AgentId(1), 1, o.clone()), 0, 1));
        assert!(!at(Formula::OccurredCorrectlyAt(AgentId(1), 1, o.clone()), 0, 1));
        assert!(at(Formula::OccurredCorrectlyAt(AgentId(1), 1, o.clone()), 1, 1));
        assert!(!at(Formula::Correct(AgentId(1)), 0, 1));
        assert!(at(Formula::Correct(AgentId(2)), 1, 1));
        assert!(!at(Formula::Correct(AgentId(2)), 1, 2));
        assert!(at(Formula::CorrectAt(AgentId(2), 1), 1, 2));
        assert!(!at(Formula::CorrectAt(AgentId(2), 2), 1, 2));
        assert!(at(Formula::Occurred(AgentId(1), o.clone()), 0, 1));
        assert!(!at(Formula::Occurred(AgentId(1), o.clone()), 0, 0));
        // Agent 1 cannot tell the fake from the real occurrence.
        assert!(sys.local_state_equal(AgentId(1), (0, 1), (1, 1)));
        assert!(!at(Formula::k(AgentId(1), Formula::OccurredCorrectly(o.clone())), 1, 1));
        assert!(!at(Formula::k(AgentId(1), Formula::Correct(AgentId(1))), 1, 1));
        assert!(sys.check_localized(&Formula::Occurred(AgentId(1), o.clone()), AgentId(1)).unwrap());
        assert!(!sys.check_localized(&Formula::Correct(AgentId(1)), AgentId(1)).unwrap());
        assert!(matches!(
            sys.eval(&Formula::CorrectAt(AgentId(1), 9)),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn hope_axioms_on_small_universe() {
        let s = sig();
        let runs = vec![
            run_of(&s, &["{gext(1, o)}", "{}"]),
            run_of(&s, &["{fake(1, gext(1, o))}", "{}"]),
            run_of(&s, &["{go(1)}", "{fail(2)}"]),
        ];
        let sys = InterpretedSystem::new(&s, runs).unwrap();
        let o = LocalHap::External("o".into());
        let i = AgentId(1);
        let phi = Formula::OccurredCorrectly(o);
        let c = Formula::Correct(i);
        for axiom in [
            Formula::implies(c.clone(), Formula::implies(Formula::hope(i, phi.clone()), phi.clone())),
            Formula::implies(Formula::negate(c.clone()), Formula::hope(i, phi.clone())),
            Formula::hope(i, c.clone()),
        ] {
            assert!(sys.valid(&axiom).unwrap(), "{axiom}");
        }
        // Hope for the real occurrence survives the fake, knowledge does not.
        assert!(sys.holds(&Formula::hope(i, phi.clone()), 0, 1).unwrap());
        assert!(!sys.holds(&Formula::k(i, phi), 0, 1).unwrap());
    }

    #[test]
    fn custom_atoms() {
        let s = sig();
        let mut sys = InterpretedSystem::new(&s, vec![run_of(&s, &["{}"])]).unwrap();
        sys.set_atom("p".into(), [(0, 1)].into()).unwrap();
        let p = Formula::Atom("p".into());
        assert_eq!(sys.eval(&p).unwrap(), vec![vec![false, true]]);
        // Both points look the same to agent 1.
        assert!(!sys.check_localized(&p, AgentId(1)).unwrap());
        assert!(sys.set_atom("q".into(), [(0, 5)].into()).is_err());
    }

    #[test]
    fn subset_listing() {
        assert_eq!(subsets(&[1, 2, 3], 2).len(), 3);
        assert_eq!(subsets(&[1, 2], 0), vec![BTreeSet::new()]);
        assert!(subsets(&[1], 2).is_empty());
    }
}
