//! Scenario files: one TOML document describing an agent-context, adversary
//! scripts, the run universe and the queries to run against it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;

use crate::causal::Node;
use crate::error::{Error, Result};
use crate::hap::{AgentId, HapSet, Label, LocalHap, LocalSet, Signature, Time};
use crate::logic::{parse_formula, Formula};
use crate::protocol::{Admissibility, AgentContext, AgentFlags, AgentProtocol, EnvProtocol, FaultDomain};
use crate::run::{EnvPick, RoundChoice, Script};
use crate::text::{parse_hap_set, parse_local_hap, parse_local_history, parse_local_set, parse_node};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    description: Option<String>,
    system: RawSystem,
    #[serde(default)]
    agent: Vec<RawAgent>,
    environment: Option<RawEnv>,
    adversary: Option<RawAdversary>,
    universe: Option<RawUniverse>,
    #[serde(default)]
    query: Vec<RawQuery>,
}

fn one() -> u32 {
    1
}

fn three() -> u32 {
    3
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    agents: u16,
    #[serde(default)]
    messages: Vec<String>,
    #[serde(default)]
    external: Vec<String>,
    #[serde(default)]
    internal: Vec<String>,
    #[serde(default = "one")]
    max_copies: u32,
    #[serde(default = "three")]
    horizon: u32,
    #[serde(default)]
    f: usize,
    fair_window: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    id: u16,
    initial: Option<Vec<String>>,
    default: Option<Vec<String>>,
    #[serde(default)]
    rule: Vec<RawRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    history: Option<String>,
    after: Option<String>,
    offer: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawAgents {
    Keyword(String),
    List(Vec<u16>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnv {
    default: Option<Vec<String>>,
    correctable: Option<RawAgents>,
    delayable: Option<RawAgents>,
    error_prone: Option<RawAgents>,
    gullible: Option<RawAgents>,
    fault_domain: Option<Vec<String>>,
    #[serde(default)]
    at: Vec<RawAt>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAt {
    time: Time,
    offer: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdversary {
    seed: Option<u64>,
    #[serde(default)]
    random: usize,
    #[serde(default)]
    script: Vec<RawScript>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScript {
    name: String,
    #[serde(default)]
    initial: usize,
    #[serde(default)]
    rounds: Vec<RawRound>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRound {
    env: Option<usize>,
    env_set: Option<String>,
    #[serde(default)]
    agents: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUniverse {
    mode: Option<String>,
    #[serde(default)]
    augment: Vec<String>,
    budget: Option<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawExpect {
    Bool(bool),
    Word(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuery {
    kind: String,
    name: Option<String>,
    script: Option<String>,
    theta: Option<String>,
    event: Option<String>,
    formula: Option<String>,
    victim: Option<u16>,
    time: Option<Time>,
    expect: Option<RawExpect>,
    cone: Option<Vec<String>>,
    buffer: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedScript {
    pub name: String,
    pub script: Script,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UniverseMode {
    /// Only the scripted and random runs.
    Scripts,
    /// Every run over the listed environment options.
    Base,
    /// Every run over the closure of the environment protocol.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Augment {
    /// Cone-equivalent runs for every correct node.
    Cone,
    /// Cone-equivalent runs with extra agents failed in round 0.
    Seeded,
    /// Brain-in-a-vat runs for every gullible victim and cut.
    Vat,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UniverseSpec {
    pub mode: UniverseMode,
    pub augment: Vec<Augment>,
    pub budget: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryKind {
    Partition,
    Adjust,
    ConeEquivalence,
    Vat,
    EvalFormula,
    HopeRefuted,
    MultipedeNecessary,
    MultipedeBounded,
}

impl QueryKind {
    pub fn name(self) -> &'static str {
        match self {
            QueryKind::Partition => "partition",
            QueryKind::Adjust => "adjust",
            QueryKind::ConeEquivalence => "verify-lemma5",
            QueryKind::Vat => "vat",
            QueryKind::EvalFormula => "eval-formula",
            QueryKind::HopeRefuted => "hope-refuted",
            QueryKind::MultipedeNecessary => "multipede-necessary",
            QueryKind::MultipedeBounded => "multipede-bounded",
        }
    }

    const ALL: [QueryKind; 8] = [
        QueryKind::Partition,
        QueryKind::Adjust,
        QueryKind::ConeEquivalence,
        QueryKind::Vat,
        QueryKind::EvalFormula,
        QueryKind::HopeRefuted,
        QueryKind::MultipedeNecessary,
        QueryKind::MultipedeBounded,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub kind: QueryKind,
    pub name: String,
    pub script: Option<String>,
    pub theta: Option<Node>,
    pub event: Option<LocalHap>,
    pub formula: Option<Formula>,
    pub victim: Option<AgentId>,
    pub time: Option<Time>,
    /// `satisfied` reads as true, `violated` as false.
    pub expect: Option<bool>,
    pub cone: Option<BTreeSet<Node>>,
    pub buffer: Option<BTreeSet<Node>>,
}

impl Query {
    pub fn new(kind: QueryKind, name: &str) -> Self {
        Query {
            kind,
            name: name.into(),
            script: None,
            theta: None,
            event: None,
            formula: None,
            victim: None,
            time: None,
            expect: None,
            cone: None,
            buffer: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub ctx: AgentContext,
    pub scripts: Vec<NamedScript>,
    pub seed: u64,
    /// Number of seeded random runs added to the scripted ones.
    pub random_runs: usize,
    pub universe: UniverseSpec,
    pub queries: Vec<Query>,
}

impl Scenario {
    pub fn script(&self, name: &str) -> Result<&Script> {
        self.scripts
            .iter()
            .find(|s| s.name == name)
            .map(|s| &s.script)
            .ok_or_else(|| Error::Validation(format!("unknown script `{name}`")))
    }
}

/// Turns a parse error inside an embedded string into one located in the
/// whole document, by finding the string's first occurrence.
fn locate(doc: &str, field: &str, text: &str, err: Error) -> Error {
    match err {
        Error::Parse { column, message, .. } => match doc.find(text) {
            Some(at) => {
                let line = doc[..at].matches('\n').count() + 1;
                let start = doc[..at].rfind('\n').map_or(0, |p| p + 1);
                let col = doc[start..at].chars().count() + column;
                Error::Parse {
                    line,
                    column: col,
                    message: format!("{field}: {message}"),
                }
            }
            None => Error::Validation(format!("{field}: column {column}: {message}")),
        },
        other => Error::Validation(format!("{field}: {other}")),
    }
}

struct Ctx<'a> {
    doc: &'a str,
    sig: Signature,
}

impl Ctx<'_> {
    fn wrap<T>(&self, field: &str, text: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| locate(self.doc, field, text, e))
    }

    fn hap_set(&self, field: &str, s: &str) -> Result<HapSet> {
        self.wrap(field, s, parse_hap_set(&self.sig, s))
    }

    fn local_set(&self, field: &str, s: &str) -> Result<LocalSet> {
        self.wrap(field, s, parse_local_set(&self.sig, s))
    }

    fn offers(&self, field: &str, list: &[String]) -> Result<Vec<LocalSet>> {
        list.iter().map(|s| self.local_set(field, s)).collect()
    }

    fn node(&self, field: &str, s: &str) -> Result<Node> {
        self.wrap(field, s, parse_node(&self.sig, s))
    }

    fn agent(&self, field: &str, id: u16) -> Result<AgentId> {
        let a = AgentId(id);
        self.sig
            .check_agent(a)
            .map_err(|_| Error::Validation(format!("{field}: agent {id} is not declared")))?;
        Ok(a)
    }
}

fn labels(v: Vec<String>) -> Vec<Label> {
    v.iter().map(|s| Label::new(s)).collect()
}

fn flagged(c: &Ctx<'_>, field: &str, raw: &Option<RawAgents>) -> Result<BTreeSet<AgentId>> {
    match raw {
        None => Ok(BTreeSet::new()),
        Some(RawAgents::Keyword(k)) if k == "all" => Ok(c.sig.agents().collect()),
        Some(RawAgents::Keyword(k)) if k == "none" => Ok(BTreeSet::new()),
        Some(RawAgents::Keyword(k)) => Err(Error::Validation(format!(
            "environment.{field}: expected \"all\", \"none\" or a list of agents, found \"{k}\""
        ))),
        Some(RawAgents::List(ids)) => ids
            .iter()
            .map(|id| c.agent(&format!("environment.{field}"), *id))
            .collect(),
    }
}

fn environment(c: &Ctx<'_>, raw: Option<RawEnv>) -> Result<EnvProtocol> {
    let raw = raw.unwrap_or(RawEnv {
        default: None,
        correctable: None,
        delayable: None,
        error_prone: None,
        gullible: None,
        fault_domain: None,
        at: Vec::new(),
    });
    let default = match &raw.default {
        None => vec![HapSet::new()],
        Some(list) => list
            .iter()
            .map(|s| c.hap_set("environment.default", s))
            .collect::<Result<_>>()?,
    };
    let mut base = BTreeMap::new();
    for at in &raw.at {
        let field = format!("environment.at time {}", at.time);
        let options = at
            .offer
            .iter()
            .map(|s| c.hap_set(&field, s))
            .collect::<Result<Vec<_>>>()?;
        if base.insert(at.time, options).is_some() {
            return Err(Error::Validation(format!("{field}: given twice")));
        }
    }
    let corr = flagged(c, "correctable", &raw.correctable)?;
    let del = flagged(c, "delayable", &raw.delayable)?;
    let ep = flagged(c, "error_prone", &raw.error_prone)?;
    let gull = flagged(c, "gullible", &raw.gullible)?;
    let flags = c
        .sig
        .agents()
        .map(|a| AgentFlags {
            correctable: corr.contains(&a),
            delayable: del.contains(&a),
            error_prone: ep.contains(&a),
            gullible: gull.contains(&a),
        })
        .collect();
    let domain = match &raw.fault_domain {
        None => FaultDomain::default(),
        Some(kinds) => {
            let mut d = FaultDomain {
                system: false,
                fail: false,
                fake_events: false,
                fake_sends: false,
                fake_internal: false,
            };
            for k in kinds {
                match k.as_str() {
                    "system" => d.system = true,
                    "fail" => d.fail = true,
                    "fake_events" => d.fake_events = true,
                    "fake_sends" => d.fake_sends = true,
                    "fake_internal" => d.fake_internal = true,
                    other => {
                        return Err(Error::Validation(format!(
                            "environment.fault_domain: unknown fault kind `{other}`"
                        )))
                    }
                }
            }
            d
        }
    };
    EnvProtocol::new(&c.sig, base, default, flags, domain)
}

fn agents(c: &Ctx<'_>, raw: Vec<RawAgent>) -> Result<(Vec<AgentProtocol>, Vec<Vec<Label>>)> {
    let mut protocols: Vec<Option<AgentProtocol>> = vec![None; c.sig.n()];
    let mut initial = vec![vec![Label::new("s0")]; c.sig.n()];
    for a in raw {
        let id = c.agent("agent.id", a.id)?;
        let field = format!("agent {}", a.id);
        if protocols[id.index()].is_some() {
            return Err(Error::Validation(format!("{field}: declared twice")));
        }
        if let Some(init) = a.initial {
            initial[id.index()] = labels(init);
        }
        let default = match &a.default {
            None => vec![LocalSet::new()],
            Some(list) => c.offers(&format!("{field} default"), list)?,
        };
        let mut exact = BTreeMap::new();
        let mut after = Vec::new();
        for (k, rule) in a.rule.iter().enumerate() {
            let rf = format!("{field} rule {}", k + 1);
            let offer = c.offers(&rf, &rule.offer)?;
            match (&rule.history, &rule.after) {
                (Some(h), None) => {
                    let hist = c.wrap(&rf, h, parse_local_history(&c.sig, h))?;
                    exact.insert(hist, offer);
                }
                (None, Some(h)) => {
                    let hap = c.wrap(&rf, h, parse_local_hap(&c.sig, h))?;
                    after.push((hap, offer));
                }
                _ => {
                    return Err(Error::Validation(format!(
                        "{rf}: exactly one of `history` and `after` is required"
                    )))
                }
            }
        }
        let p = AgentProtocol::new(&c.sig, exact, after, default)
            .map_err(|e| Error::Validation(format!("{field}: {e}")))?;
        protocols[id.index()] = Some(p);
    }
    Ok((
        protocols
            .into_iter()
            .map(|p| p.unwrap_or_else(AgentProtocol::idle))
            .collect(),
        initial,
    ))
}

fn scripts(c: &Ctx<'_>, raw: &[RawScript]) -> Result<Vec<NamedScript>> {
    let mut out: Vec<NamedScript> = Vec::new();
    for s in raw {
        if out.iter().any(|o| o.name == s.name) {
            return Err(Error::Validation(format!("script `{}` declared twice", s.name)));
        }
        if s.rounds.len() > c.sig.horizon() as usize {
            return Err(Error::Validation(format!(
                "script `{}` has {} rounds, horizon is {}",
                s.name,
                s.rounds.len(),
                c.sig.horizon()
            )));
        }
        let mut rounds = Vec::new();
        for (m, r) in s.rounds.iter().enumerate() {
            let field = format!("script `{}` round {m}", s.name);
            let env = match (&r.env, &r.env_set) {
                (Some(k), None) => EnvPick::Index(*k),
                (None, Some(x)) => EnvPick::Set(c.hap_set(&field, x)?),
                (None, None) => EnvPick::Index(0),
                _ => return Err(Error::Validation(format!("{field}: both `env` and `env_set` given"))),
            };
            rounds.push(RoundChoice {
                env,
                agents: r.agents.clone(),
            });
        }
        out.push(NamedScript {
            name: s.name.clone(),
            script: Script {
                initial: s.initial,
                rounds,
            },
        });
    }
    Ok(out)
}

fn query(c: &Ctx<'_>, k: usize, q: RawQuery, scripts: &[NamedScript]) -> Result<Query> {
    let kind = QueryKind::ALL
        .into_iter()
        .find(|kind| kind.name() == q.kind)
        .ok_or_else(|| Error::Validation(format!("query {}: unknown kind `{}`", k + 1, q.kind)))?;
    let name = q
        .name
        .clone()
        .unwrap_or_else(|| format!("{:02}-{}", k + 1, kind.name()));
    let field = format!("query `{name}`");
    if let Some(s) = &q.script {
        if !scripts.iter().any(|x| &x.name == s) {
            return Err(Error::Validation(format!("{field}: unknown script `{s}`")));
        }
    }
    let nodes = |list: &Option<Vec<String>>| -> Result<Option<BTreeSet<Node>>> {
        list.as_ref()
            .map(|l| l.iter().map(|s| c.node(&field, s)).collect())
            .transpose()
    };
    let expect = match q.expect {
        None => None,
        Some(RawExpect::Bool(b)) => Some(b),
        Some(RawExpect::Word(w)) => match w.as_str() {
            "satisfied" | "true" | "pass" => Some(true),
            "violated" | "false" | "fail" => Some(false),
            other => return Err(Error::Validation(format!("{field}: unknown expectation `{other}`"))),
        },
    };
    let out = Query {
        kind,
        script: q.script.clone(),
        theta: q.theta.as_ref().map(|s| c.node(&field, s)).transpose()?,
        event: q
            .event
            .as_ref()
            .map(|s| c.wrap(&field, s, parse_local_hap(&c.sig, s)))
            .transpose()?,
        formula: q
            .formula
            .as_ref()
            .map(|s| c.wrap(&field, s, parse_formula(&c.sig, s)))
            .transpose()?,
        victim: q.victim.map(|v| c.agent(&field, v)).transpose()?,
        time: q.time,
        expect,
        cone: nodes(&q.cone)?,
        buffer: nodes(&q.buffer)?,
        name,
    };
    let need = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("{field}: `{what}` is required for {}", kind.name())))
        }
    };
    match kind {
        QueryKind::Partition | QueryKind::Adjust => {
            need(out.script.is_some(), "script")?;
            need(out.theta.is_some(), "theta")?;
        }
        QueryKind::ConeEquivalence => {}
        QueryKind::Vat => {
            need(out.script.is_some(), "script")?;
            need(out.victim.is_some(), "victim")?;
            need(out.time.is_some(), "time")?;
        }
        QueryKind::EvalFormula => {
            need(out.formula.is_some(), "formula")?;
            need(out.script.is_some() == out.time.is_some(), "script and time together")?;
        }
        QueryKind::HopeRefuted | QueryKind::MultipedeNecessary | QueryKind::MultipedeBounded => {
            need(out.script.is_some(), "script")?;
            need(out.theta.is_some(), "theta")?;
            need(out.event.is_some(), "event")?;
        }
    }
    if let Some(t) = out.time {
        if t > c.sig.horizon() {
            return Err(Error::Validation(format!(
                "{field}: time {t} is beyond the horizon {}",
                c.sig.horizon()
            )));
        }
    }
    if let Some(th) = out.theta {
        if th.time > c.sig.horizon() {
            return Err(Error::Validation(format!(
                "{field}: theta {th} is beyond the horizon {}",
                c.sig.horizon()
            )));
        }
    }
    Ok(out)
}

/// Command-line adjustments applied before validation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Overrides {
    pub horizon: Option<Time>,
    pub seed: Option<u64>,
    pub budget: Option<usize>,
}

/// Parses and validates a scenario document.
pub fn parse_scenario(doc: &str) -> Result<Scenario> {
    parse_scenario_with(doc, Overrides::default())
}

pub fn parse_scenario_with(doc: &str, overrides: Overrides) -> Result<Scenario> {
    let mut raw: RawScenario = toml::from_str(doc).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| {
                let before = &doc[..s.start.min(doc.len())];
                let line = before.matches('\n').count() + 1;
                let start = before.rfind('\n').map_or(0, |p| p + 1);
                (line, before[start..].chars().count() + 1)
            })
            .unwrap_or((1, 1));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    if let Some(h) = overrides.horizon {
        // Offers and script rounds past a shortened horizon can never apply.
        raw.system.horizon = h;
        if let Some(env) = raw.environment.as_mut() {
            env.at.retain(|a| a.time < h);
        }
        if let Some(adv) = raw.adversary.as_mut() {
            for s in &mut adv.script {
                s.rounds.truncate(h as usize);
            }
        }
    }
    let s = &raw.system;
    let sig = Signature::new(
        s.agents,
        labels(s.messages.clone()),
        labels(s.external.clone()),
        labels(s.internal.clone()),
        s.max_copies,
        s.horizon,
    )?;
    let c = Ctx { doc, sig };
    let env = environment(&c, raw.environment)?;
    let (protocols, initial) = agents(&c, raw.agent)?;
    let admissibility = match s.fair_window {
        None => Admissibility::None,
        Some(w) => Admissibility::FairSchedule { window: w },
    };
    let ctx = AgentContext::new(c.sig.clone(), env, protocols, initial, s.f, admissibility)?;
    let adversary = raw.adversary.unwrap_or(RawAdversary {
        seed: None,
        random: 0,
        script: Vec::new(),
    });
    let scripts = scripts(&c, &adversary.script)?;
    for ns in &scripts {
        if ns.script.initial >= ctx.initial_count() {
            return Err(Error::Validation(format!(
                "script `{}`: initial state {} of {}",
                ns.name,
                ns.script.initial,
                ctx.initial_count()
            )));
        }
    }
    let universe = match raw.universe {
        None => UniverseSpec {
            mode: UniverseMode::Scripts,
            augment: Vec::new(),
            budget: 100_000,
        },
        Some(u) => {
            let mode = match u.mode.as_deref().unwrap_or("scripts") {
                "scripts" => UniverseMode::Scripts,
                "base" => UniverseMode::Base,
                "full" => UniverseMode::Full,
                other => return Err(Error::Validation(format!("universe.mode: unknown mode `{other}`"))),
            };
            let mut augment = u
                .augment
                .iter()
                .map(|a| match a.as_str() {
                    "cone" => Ok(Augment::Cone),
                    "seeded" => Ok(Augment::Seeded),
                    "vat" => Ok(Augment::Vat),
                    other => Err(Error::Validation(format!("universe.augment: unknown kind `{other}`"))),
                })
                .collect::<Result<Vec<_>>>()?;
            augment.sort();
            augment.dedup();
            UniverseSpec {
                mode,
                augment,
                budget: u.budget.unwrap_or(100_000),
            }
        }
    };
    let mut universe = universe;
    if let Some(b) = overrides.budget {
        universe.budget = b;
    }
    let queries = raw
        .query
        .into_iter()
        .enumerate()
        .map(|(k, q)| query(&c, k, q, &scripts))
        .collect::<Result<Vec<_>>>()?;
    let mut names = BTreeSet::new();
    if let Some(q) = queries.iter().find(|q| !names.insert(q.name.clone())) {
        return Err(Error::Validation(format!("query name `{}` used twice", q.name)));
    }
    Ok(Scenario {
        name: raw.name.unwrap_or_else(|| "scenario".into()),
        description: raw.description.unwrap_or_default(),
        ctx,
        scripts,
        seed: overrides.seed.or(adversary.seed).unwrap_or(0),
        random_runs: adversary.random,
        universe,
        queries,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    load_scenario_with(path, Overrides::default())
}

pub fn load_scenario_with(path: &Path, overrides: Overrides) -> Result<Scenario> {
    let doc = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario_with(&doc, overrides)
}
