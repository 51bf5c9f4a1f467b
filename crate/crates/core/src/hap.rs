//! Haps (actions and events) in local and global format.
//!
//! Agents record haps in the local format, which carries no timestamps and
//! no message identifiers. The environment records everything in the global
//! format, where correct haps are distinguished from their byzantine
//! counterparts and every sent message copy carries a global message
//! identifier ([`Gmi`]).

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// One-based agent index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub u16);

impl AgentId {
    pub fn from_index(index: usize) -> Self {
        AgentId(index as u16 + 1)
    }

    /// Zero-based position, for indexing per-agent vectors.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Global timestamp. Round `t` is the step between timestamps `t` and `t + 1`.
pub type Time = u32;

/// Interned label for messages, event and action names, and initial states.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(Arc<str>);

impl Label {
    pub fn new(s: &str) -> Self {
        Label(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::new(s)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

/// Global message identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Gmi(pub u64);

impl fmt::Display for Gmi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// The tuple packed into a [`Gmi`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GmiParts {
    pub sender: AgentId,
    pub recipient: AgentId,
    pub msg: Label,
    pub copy: u32,
    pub time: Time,
}

/// Finite alphabets of a scenario.
///
/// Message identifiers are a mixed-radix packing of
/// `(sender, recipient, message, copy, time)` with radices
/// `(n, n, |messages|, max_copies, horizon)`, so decoding is exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    agents: u16,
    messages: Vec<Label>,
    external: Vec<Label>,
    internal: Vec<Label>,
    max_copies: u32,
    horizon: Time,
}

impl Signature {
    pub fn new(
        agents: u16,
        messages: Vec<Label>,
        external: Vec<Label>,
        internal: Vec<Label>,
        max_copies: u32,
        horizon: Time,
    ) -> Result<Self> {
        if agents == 0 {
            return Err(Error::Validation("at least one agent is required".into()));
        }
        if max_copies == 0 {
            return Err(Error::Validation("max_copies must be at least 1".into()));
        }
        if horizon == 0 {
            return Err(Error::Validation("horizon must be at least 1".into()));
        }
        for (kind, labels) in [
            ("message", &messages),
            ("external event", &external),
            ("internal action", &internal),
        ] {
            let unique: BTreeSet<_> = labels.iter().collect();
            if unique.len() != labels.len() {
                return Err(Error::Validation(format!("duplicate {kind} label")));
            }
        }
        Ok(Signature {
            agents,
            messages,
            external,
            internal,
            max_copies,
            horizon,
        })
    }

    pub fn n(&self) -> usize {
        self.agents as usize
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        (1..=self.agents).map(AgentId)
    }

    pub fn messages(&self) -> &[Label] {
        &self.messages
    }

    pub fn external(&self) -> &[Label] {
        &self.external
    }

    pub fn internal(&self) -> &[Label] {
        &self.internal
    }

    pub fn max_copies(&self) -> u32 {
        self.max_copies
    }

    pub fn horizon(&self) -> Time {
        self.horizon
    }

    pub fn check_agent(&self, agent: AgentId) -> Result<()> {
        if agent.0 == 0 || agent.0 > self.agents {
            Err(Error::UnknownAgent(agent))
        } else {
            Ok(())
        }
    }

    pub fn check_external(&self, label: &Label) -> Result<()> {
        if self.external.contains(label) {
            Ok(())
        } else {
            Err(Error::Alphabet(format!("undeclared external event `{label}`")))
        }
    }

    pub fn check_internal(&self, label: &Label) -> Result<()> {
        if self.internal.contains(label) {
            Ok(())
        } else {
            Err(Error::Alphabet(format!("undeclared internal action `{label}`")))
        }
    }

    fn message_index(&self, msg: &Label) -> Result<u64> {
        self.messages
            .iter()
            .position(|m| m == msg)
            .map(|p| p as u64)
            .ok_or_else(|| Error::Alphabet(format!("undeclared message `{msg}`")))
    }

    /// Number of distinct identifiers; every code below this decodes.
    pub fn gmi_space(&self) -> u64 {
        let n = self.agents as u64;
        n * n * self.messages.len() as u64 * self.max_copies as u64 * self.horizon as u64
    }

    pub fn encode_gmi(
        &self,
        sender: AgentId,
        recipient: AgentId,
        msg: &Label,
        copy: u32,
        time: Time,
    ) -> Result<Gmi> {
        self.check_agent(sender)
            .map_err(|_| Error::Alphabet(format!("sender {sender} out of range")))?;
        self.check_agent(recipient)
            .map_err(|_| Error::Alphabet(format!("recipient {recipient} out of range")))?;
        let m = self.message_index(msg)?;
        if copy >= self.max_copies {
            return Err(Error::Alphabet(format!(
                "copy number {copy} not below max_copies {}",
                self.max_copies
            )));
        }
        if time >= self.horizon {
            return Err(Error::Alphabet(format!(
                "send time {time} not below horizon {}",
                self.horizon
            )));
        }
        let n = self.agents as u64;
        let mut code = sender.index() as u64;
        code = code * n + recipient.index() as u64;
        code = code * self.messages.len() as u64 + m;
        code = code * self.max_copies as u64 + copy as u64;
        code = code * self.horizon as u64 + time as u64;
        Ok(Gmi(code))
    }

    pub fn decode_gmi(&self, gmi: Gmi) -> Option<GmiParts> {
        if gmi.0 >= self.gmi_space() {
            return None;
        }
        let n = self.agents as u64;
        let mut code = gmi.0;
        let time = (code % self.horizon as u64) as Time;
        code /= self.horizon as u64;
        let copy = (code % self.max_copies as u64) as u32;
        code /= self.max_copies as u64;
        let m = (code % self.messages.len() as u64) as usize;
        code /= self.messages.len() as u64;
        let recipient = AgentId::from_index((code % n) as usize);
        let sender = AgentId::from_index((code / n) as usize);
        Some(GmiParts {
            sender,
            recipient,
            msg: self.messages[m].clone(),
            copy,
            time,
        })
    }

    /// Builds the correct global send of copy `copy` of `msg` at `time`.
    pub fn gsend(
        &self,
        from: AgentId,
        to: AgentId,
        msg: &Label,
        copy: u32,
        time: Time,
    ) -> Result<SendHap> {
        let gmi = self.encode_gmi(from, to, msg, copy, time)?;
        Ok(SendHap {
            from,
            to,
            msg: msg.clone(),
            copy,
            gmi,
        })
    }

    /// Rebuilds a send from its identifier; fails unless the identifier
    /// decodes to exactly `(from, to, msg)`.
    pub fn send_from_gmi(
        &self,
        from: AgentId,
        to: AgentId,
        msg: &Label,
        gmi: Gmi,
    ) -> Result<SendHap> {
        let parts = self
            .decode_gmi(gmi)
            .ok_or_else(|| Error::Alphabet(format!("identifier {gmi} does not decode")))?;
        if parts.sender != from || parts.recipient != to || &parts.msg != msg {
            return Err(Error::Format(format!(
                "identifier {gmi} belongs to {}->{} `{}`, not {from}->{to} `{msg}`",
                parts.sender, parts.recipient, parts.msg
            )));
        }
        Ok(SendHap {
            from,
            to,
            msg: msg.clone(),
            copy: parts.copy,
            gmi,
        })
    }

    /// `global(i, t)`: translates a local action into the global format.
    pub fn globalize(&self, agent: AgentId, time: Time, action: &LocalHap) -> Result<GlobalHap> {
        self.check_agent(agent)?;
        match action {
            LocalHap::Send { to, msg, copy } => {
                Ok(GlobalHap::Send(self.gsend(agent, *to, msg, *copy, time)?))
            }
            LocalHap::Internal(label) => {
                self.check_internal(label)?;
                Ok(GlobalHap::Internal {
                    agent,
                    time,
                    label: label.clone(),
                })
            }
            other => Err(Error::Format(format!(
                "`{other}` is an event, only actions can be globalized"
            ))),
        }
    }

    pub fn check_local(&self, hap: &LocalHap) -> Result<()> {
        match hap {
            LocalHap::Send { to, msg, copy } => {
                self.check_agent(*to)?;
                self.message_index(msg)?;
                if *copy >= self.max_copies {
                    return Err(Error::Alphabet(format!("copy number {copy} too large")));
                }
                Ok(())
            }
            LocalHap::Recv { from, msg } => {
                self.check_agent(*from)?;
                self.message_index(msg).map(|_| ())
            }
            LocalHap::External(l) => self.check_external(l),
            LocalHap::Internal(l) => self.check_internal(l),
        }
    }
}

/// A hap as recorded by an agent.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LocalHap {
    Send { to: AgentId, msg: Label, copy: u32 },
    Recv { from: AgentId, msg: Label },
    External(Label),
    Internal(Label),
}

impl LocalHap {
    pub fn is_action(&self) -> bool {
        matches!(self, LocalHap::Send { .. } | LocalHap::Internal(_))
    }

    pub fn is_event(&self) -> bool {
        !self.is_action()
    }
}

pub type LocalSet = BTreeSet<LocalHap>;

/// Correct global send `gsend(from -> to, msg, gmi)`.
///
/// `copy` is the copy number packed in `gmi`, cached so that localizing a
/// send needs no signature.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SendHap {
    pub from: AgentId,
    pub to: AgentId,
    pub msg: Label,
    pub copy: u32,
    pub gmi: Gmi,
}

/// Correct global delivery `grecv(to <- from, msg, gmi)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecvHap {
    pub to: AgentId,
    pub from: AgentId,
    pub msg: Label,
    pub gmi: Gmi,
}

impl RecvHap {
    /// Whether `send` is the send this delivery claims to come from.
    pub fn matches(&self, send: &SendHap) -> bool {
        send.from == self.from && send.to == self.to && send.msg == self.msg && send.gmi == self.gmi
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CorrectAction {
    Send(SendHap),
    Internal {
        agent: AgentId,
        time: Time,
        label: Label,
    },
}

impl CorrectAction {
    pub fn agent(&self) -> AgentId {
        match self {
            CorrectAction::Send(s) => s.from,
            CorrectAction::Internal { agent, .. } => *agent,
        }
    }

    pub fn local(&self) -> LocalHap {
        match self {
            CorrectAction::Send(s) => LocalHap::Send {
                to: s.to,
                msg: s.msg.clone(),
                copy: s.copy,
            },
            CorrectAction::Internal { label, .. } => LocalHap::Internal(label.clone()),
        }
    }

    pub fn as_send(&self) -> Option<&SendHap> {
        match self {
            CorrectAction::Send(s) => Some(s),
            CorrectAction::Internal { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CorrectEvent {
    Recv(RecvHap),
    External { agent: AgentId, label: Label },
}

impl CorrectEvent {
    pub fn agent(&self) -> AgentId {
        match self {
            CorrectEvent::Recv(r) => r.to,
            CorrectEvent::External { agent, .. } => *agent,
        }
    }

    pub fn local(&self) -> LocalHap {
        match self {
            CorrectEvent::Recv(r) => LocalHap::Recv {
                from: r.from,
                msg: r.msg.clone(),
            },
            CorrectEvent::External { label, .. } => LocalHap::External(label.clone()),
        }
    }
}

/// A hap in the environment's (global) format.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GlobalHap {
    Send(SendHap),
    Recv(RecvHap),
    External {
        agent: AgentId,
        label: Label,
    },
    Internal {
        agent: AgentId,
        time: Time,
        label: Label,
    },
    /// Byzantine event: the owner perceives a correct event that did not happen.
    Fake(CorrectEvent),
    /// Byzantine action: `performed` happened, `perceived` is what the agent
    /// records. `None` stands for `noop`.
    FakeAction {
        agent: AgentId,
        performed: Option<CorrectAction>,
        perceived: Option<CorrectAction>,
    },
    Go(AgentId),
    Sleep(AgentId),
    Hibernate(AgentId),
}

pub type HapSet = BTreeSet<GlobalHap>;

impl GlobalHap {
    /// `fail(i) = fake(i)(noop -> noop)`.
    pub fn fail(agent: AgentId) -> Self {
        GlobalHap::FakeAction {
            agent,
            performed: None,
            perceived: None,
        }
    }

    pub fn agent(&self) -> AgentId {
        match self {
            GlobalHap::Send(s) => s.from,
            GlobalHap::Recv(r) => r.to,
            GlobalHap::External { agent, .. }
            | GlobalHap::Internal { agent, .. }
            | GlobalHap::FakeAction { agent, .. }
            | GlobalHap::Go(agent)
            | GlobalHap::Sleep(agent)
            | GlobalHap::Hibernate(agent) => *agent,
            GlobalHap::Fake(e) => e.agent(),
        }
    }

    /// Member of `GActions`.
    pub fn is_action(&self) -> bool {
        matches!(self, GlobalHap::Send(_) | GlobalHap::Internal { .. })
    }

    /// Member of `GEvents`.
    pub fn is_event(&self) -> bool {
        !self.is_action()
    }

    /// Correct event (a member of the barred `GEvents`).
    pub fn is_correct_event(&self) -> bool {
        matches!(self, GlobalHap::Recv(_) | GlobalHap::External { .. })
    }

    pub fn is_correct(&self) -> bool {
        self.is_action() || self.is_correct_event()
    }

    /// Member of `BEvents`.
    pub fn is_byzantine(&self) -> bool {
        matches!(self, GlobalHap::Fake(_) | GlobalHap::FakeAction { .. })
    }

    pub fn is_system(&self) -> bool {
        matches!(
            self,
            GlobalHap::Go(_) | GlobalHap::Sleep(_) | GlobalHap::Hibernate(_)
        )
    }

    /// Member of `FEvents = BEvents ∪ {sleep, hibernate}`.
    pub fn is_fault(&self) -> bool {
        self.is_byzantine() || matches!(self, GlobalHap::Sleep(_) | GlobalHap::Hibernate(_))
    }

    pub fn is_fault_of(&self, agent: AgentId) -> bool {
        self.is_fault() && self.agent() == agent
    }

    pub fn as_correct_event(&self) -> Option<CorrectEvent> {
        match self {
            GlobalHap::Recv(r) => Some(CorrectEvent::Recv(r.clone())),
            GlobalHap::External { agent, label } => Some(CorrectEvent::External {
                agent: *agent,
                label: label.clone(),
            }),
            _ => None,
        }
    }

    pub fn as_correct_action(&self) -> Option<CorrectAction> {
        match self {
            GlobalHap::Send(s) => Some(CorrectAction::Send(s.clone())),
            GlobalHap::Internal { agent, time, label } => Some(CorrectAction::Internal {
                agent: *agent,
                time: *time,
                label: label.clone(),
            }),
            _ => None,
        }
    }

    /// `local`, defined on correct haps only.
    pub fn local(&self) -> Option<LocalHap> {
        self.as_correct_action()
            .map(|a| a.local())
            .or_else(|| self.as_correct_event().map(|e| e.local()))
    }

    /// The send this byzantine event performs, if it is `fake(i)(gsend -> _)`.
    pub fn fake_performed_send(&self) -> Option<&SendHap> {
        match self {
            GlobalHap::FakeAction {
                performed: Some(CorrectAction::Send(s)),
                ..
            } => Some(s),
            _ => None,
        }
    }
}

impl From<CorrectAction> for GlobalHap {
    fn from(a: CorrectAction) -> Self {
        match a {
            CorrectAction::Send(s) => GlobalHap::Send(s),
            CorrectAction::Internal { agent, time, label } => {
                GlobalHap::Internal { agent, time, label }
            }
        }
    }
}

impl From<CorrectEvent> for GlobalHap {
    fn from(e: CorrectEvent) -> Self {
        match e {
            CorrectEvent::Recv(r) => GlobalHap::Recv(r),
            CorrectEvent::External { agent, label } => GlobalHap::External { agent, label },
        }
    }
}

/// The localization function σ.
///
/// Correct haps are localized directly, `fake(E)` is recorded as `E` would
/// be, `fake(A -> A')` is recorded as `A'`, and system events or `noop`
/// perceptions leave no record.
pub fn sigma<'a>(haps: impl IntoIterator<Item = &'a GlobalHap>) -> LocalSet {
    haps.into_iter()
        .filter_map(|h| match h {
            GlobalHap::Fake(e) => Some(e.local()),
            GlobalHap::FakeAction { perceived, .. } => perceived.as_ref().map(|a| a.local()),
            other => other.local(),
        })
        .collect()
}

/// `X ∩ GEvents_i`.
pub fn events_of(set: &HapSet, agent: AgentId) -> HapSet {
    set.iter()
        .filter(|h| h.is_event() && h.agent() == agent)
        .cloned()
        .collect()
}

/// An agent's local state: its initial state followed by the records
/// appended in the rounds it was active in, oldest first.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalHistory {
    pub initial: Label,
    pub records: Vec<LocalSet>,
}

impl LocalHistory {
    pub fn new(initial: Label) -> Self {
        LocalHistory {
            initial,
            records: Vec::new(),
        }
    }

    pub fn last(&self) -> Option<&LocalSet> {
        self.records.last()
    }

    /// Whether `hap` appears in any record.
    pub fn contains(&self, hap: &LocalHap) -> bool {
        self.records.iter().any(|r| r.contains(hap))
    }
}
