//! Canonical text form of haps, hap sets, local histories and nodes.
//!
//! ```text
//! gsend(1->2, m, #17)          grecv(2<-1, m, #17)
//! gext(1, o)                   gint(1@3, a)
//! fake(1, grecv(1<-2, m, #17)) fake(1, gsend(1->2, m, #17) -> noop)
//! fail(1)  go(1)  sleep(1)  hib(1)
//! send(2, m, 0)  recv(1, m)  ext(o)  int(a)
//! {go(1), gext(1, o)}          s0; {recv(1, m)}; {}          3@4
//! ```
//!
//! A message identifier may also be written `id(sender, recipient, msg, copy, time)`.
//! Labels are bare (`[A-Za-z0-9_.]+`) or double-quoted.

use std::collections::BTreeSet;
use std::fmt;

use crate::causal::Node;
use crate::error::{Error, Result};
use crate::hap::{
    AgentId, CorrectAction, CorrectEvent, GlobalHap, HapSet, Label, LocalHap, LocalHistory,
    LocalSet, RecvHap, Signature, Time,
};

fn is_bare(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        && s != "noop"
}

pub(crate) fn write_label(f: &mut fmt::Formatter<'_>, l: &Label) -> fmt::Result {
    if is_bare(l.as_str()) {
        f.write_str(l.as_str())
    } else {
        write!(f, "{:?}", l.as_str())
    }
}

struct L<'a>(&'a Label);

impl fmt::Display for L<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_label(f, self.0)
    }
}

impl fmt::Display for CorrectAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorrectAction::Send(s) => {
                write!(f, "gsend({}->{}, {}, {})", s.from, s.to, L(&s.msg), s.gmi)
            }
            CorrectAction::Internal { agent, time, label } => {
                write!(f, "gint({agent}@{time}, {})", L(label))
            }
        }
    }
}

impl fmt::Display for CorrectEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorrectEvent::Recv(r) => {
                write!(f, "grecv({}<-{}, {}, {})", r.to, r.from, L(&r.msg), r.gmi)
            }
            CorrectEvent::External { agent, label } => write!(f, "gext({agent}, {})", L(label)),
        }
    }
}

fn write_opt_action(f: &mut fmt::Formatter<'_>, a: &Option<CorrectAction>) -> fmt::Result {
    match a {
        Some(a) => write!(f, "{a}"),
        None => f.write_str("noop"),
    }
}

impl fmt::Display for GlobalHap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlobalHap::Send(s) => write!(f, "{}", CorrectAction::Send(s.clone())),
            GlobalHap::Recv(r) => write!(f, "{}", CorrectEvent::Recv(r.clone())),
            GlobalHap::External { agent, label } => write!(f, "gext({agent}, {})", L(label)),
            GlobalHap::Internal { agent, time, label } => {
                write!(f, "gint({agent}@{time}, {})", L(label))
            }
            GlobalHap::Fake(e) => write!(f, "fake({}, {e})", e.agent()),
            GlobalHap::FakeAction {
                agent,
                performed: None,
                perceived: None,
            } => write!(f, "fail({agent})"),
            GlobalHap::FakeAction {
                agent,
                performed,
                perceived,
            } => {
                write!(f, "fake({agent}, ")?;
                write_opt_action(f, performed)?;
                f.write_str(" -> ")?;
                write_opt_action(f, perceived)?;
                f.write_str(")")
            }
            GlobalHap::Go(a) => write!(f, "go({a})"),
            GlobalHap::Sleep(a) => write!(f, "sleep({a})"),
            GlobalHap::Hibernate(a) => write!(f, "hib({a})"),
        }
    }
}

impl fmt::Display for LocalHap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalHap::Send { to, msg, copy } => write!(f, "send({to}, {}, {copy})", L(msg)),
            LocalHap::Recv { from, msg } => write!(f, "recv({from}, {})", L(msg)),
            LocalHap::External(l) => write!(f, "ext({})", L(l)),
            LocalHap::Internal(l) => write!(f, "int({})", L(l)),
        }
    }
}

/// Displays a set as `{a, b}` in its (deterministic) iteration order.
pub struct SetDisplay<'a, T>(pub &'a BTreeSet<T>);

impl<T: fmt::Display> fmt::Display for SetDisplay<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, x) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{x}")?;
        }
        f.write_str("}")
    }
}

pub fn set_string<T: fmt::Display>(set: &BTreeSet<T>) -> String {
    SetDisplay(set).to_string()
}

impl fmt::Display for LocalHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_label(f, &self.initial)?;
        for r in &self.records {
            write!(f, "; {}", SetDisplay(r))?;
        }
        Ok(())
    }
}

/// Character cursor with column tracking, shared by the hap and formula parsers.
pub(crate) struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0 }
    }

    pub(crate) fn column(&self) -> usize {
        self.src[..self.pos].chars().count() + 1
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> Error {
        Error::parse_at(self.column(), message)
    }

    pub(crate) fn ws(&mut self) {
        while let Some(c) = self.peek_raw() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    pub(crate) fn mark(&self) -> usize {
        self.pos
    }

    pub(crate) fn reset(&mut self, mark: usize) {
        self.pos = mark;
    }

    fn peek_raw(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    pub(crate) fn peek(&mut self) -> Option<char> {
        self.ws();
        self.peek_raw()
    }

    pub(crate) fn eat(&mut self, token: &str) -> bool {
        self.ws();
        if self.src[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            let found = self.peek().map(|c| format!("`{c}`")).unwrap_or("end of input".into());
            Err(self.error(format!("expected `{token}`, found {found}")))
        }
    }

    pub(crate) fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    pub(crate) fn end(&mut self) -> Result<()> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error("unexpected trailing input"))
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.peek_raw() {
            if pred(c) {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        &self.src[start..self.pos]
    }

    /// A keyword such as `gsend` or `occurred-correctly`.
    pub(crate) fn word(&mut self) -> Result<&'a str> {
        self.ws();
        let w = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if w.is_empty() {
            Err(self.error("expected a keyword"))
        } else {
            Ok(w)
        }
    }

    pub(crate) fn number(&mut self) -> Result<u64> {
        self.ws();
        let col = self.column();
        let digits = self.take_while(|c| c.is_ascii_digit());
        if digits.is_empty() {
            return Err(Error::parse_at(col, "expected a number"));
        }
        digits
            .parse()
            .map_err(|_| Error::parse_at(col, "number out of range"))
    }

    pub(crate) fn label(&mut self) -> Result<Label> {
        self.ws();
        if self.peek_raw() == Some('"') {
            let col = self.column();
            self.pos += 1;
            let mut out = String::new();
            loop {
                match self.peek_raw() {
                    None => return Err(Error::parse_at(col, "unterminated string")),
                    Some('"') => {
                        self.pos += 1;
                        break;
                    }
                    Some('\\') => {
                        self.pos += 1;
                        match self.peek_raw() {
                            Some(c) => {
                                self.pos += c.len_utf8();
                                out.push(c);
                            }
                            None => return Err(Error::parse_at(col, "unterminated string")),
                        }
                    }
                    Some(c) => {
                        self.pos += c.len_utf8();
                        out.push(c);
                    }
                }
            }
            Ok(Label::new(&out))
        } else {
            let l = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
            if l.is_empty() {
                Err(self.error("expected a label"))
            } else {
                Ok(Label::new(l))
            }
        }
    }

    pub(crate) fn agent(&mut self, sig: &Signature) -> Result<AgentId> {
        self.ws();
        let col = self.column();
        let n = self.number()?;
        let id = u16::try_from(n)
            .ok()
            .map(AgentId)
            .filter(|a| sig.check_agent(*a).is_ok())
            .ok_or_else(|| Error::parse_at(col, format!("unknown agent {n}")))?;
        Ok(id)
    }

    pub(crate) fn time(&mut self) -> Result<Time> {
        self.ws();
        let col = self.column();
        let n = self.number()?;
        Time::try_from(n).map_err(|_| Error::parse_at(col, "timestamp out of range"))
    }
}

/// Rewrites alphabet and format errors so they carry the column they arose at.
fn located<T>(col: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { .. } => e,
        other => Error::parse_at(col, other.to_string()),
    })
}

fn gmi(c: &mut Cursor<'_>, sig: &Signature) -> Result<crate::hap::Gmi> {
    if c.eat("#") {
        let col = c.column();
        let n = c.number()?;
        if sig.decode_gmi(crate::hap::Gmi(n)).is_none() {
            return Err(Error::parse_at(col, format!("identifier #{n} does not decode")));
        }
        Ok(crate::hap::Gmi(n))
    } else {
        let col = c.column();
        let w = c.word()?;
        if w != "id" {
            return Err(Error::parse_at(col, "expected `#n` or `id(...)`"));
        }
        c.expect("(")?;
        let from = c.agent(sig)?;
        c.expect(",")?;
        let to = c.agent(sig)?;
        c.expect(",")?;
        let msg = c.label()?;
        c.expect(",")?;
        let copy = c.number()? as u32;
        c.expect(",")?;
        let time = c.time()?;
        c.expect(")")?;
        located(col, sig.encode_gmi(from, to, &msg, copy, time))
    }
}

/// `noop`, `gsend(...)` or `gint(...)`.
fn action_or_noop(c: &mut Cursor<'_>, sig: &Signature) -> Result<Option<CorrectAction>> {
    c.ws();
    let col = c.column();
    let w = c.word()?;
    match w {
        "noop" => Ok(None),
        "gsend" | "gint" => {
            let h = hap_body(c, sig, w, col)?;
            Ok(h.as_correct_action())
        }
        _ => Err(Error::parse_at(col, format!("expected an action or `noop`, found `{w}`"))),
    }
}

fn hap_body(c: &mut Cursor<'_>, sig: &Signature, word: &str, col: usize) -> Result<GlobalHap> {
    c.expect("(")?;
    let hap = match word {
        "gsend" => {
            let from = c.agent(sig)?;
            c.expect("->")?;
            let to = c.agent(sig)?;
            c.expect(",")?;
            let msg = c.label()?;
            c.expect(",")?;
            let g = gmi(c, sig)?;
            GlobalHap::Send(located(col, sig.send_from_gmi(from, to, &msg, g))?)
        }
        "grecv" => {
            let to = c.agent(sig)?;
            c.expect("<-")?;
            let from = c.agent(sig)?;
            c.expect(",")?;
            let msg = c.label()?;
            c.expect(",")?;
            let g = gmi(c, sig)?;
            located(col, sig.send_from_gmi(from, to, &msg, g))?;
            GlobalHap::Recv(RecvHap { to, from, msg, gmi: g })
        }
        "gext" => {
            let agent = c.agent(sig)?;
            c.expect(",")?;
            let label = c.label()?;
            located(col, sig.check_external(&label))?;
            GlobalHap::External { agent, label }
        }
        "gint" => {
            let agent = c.agent(sig)?;
            c.expect("@")?;
            let time = c.time()?;
            c.expect(",")?;
            let label = c.label()?;
            located(col, sig.check_internal(&label))?;
            if time >= sig.horizon() {
                return Err(Error::parse_at(col, "action time not below the horizon"));
            }
            GlobalHap::Internal { agent, time, label }
        }
        "fake" => {
            let agent = c.agent(sig)?;
            c.expect(",")?;
            c.ws();
            let inner_col = c.column();
            let save = c.pos;
            let w = c.word()?;
            if w == "grecv" || w == "gext" {
                let inner = hap_body(c, sig, w, inner_col)?;
                if inner.agent() != agent {
                    return Err(Error::parse_at(
                        inner_col,
                        format!("fake event of agent {} attributed to agent {agent}", inner.agent()),
                    ));
                }
                GlobalHap::Fake(inner.as_correct_event().expect("parsed a correct event"))
            } else {
                c.pos = save;
                let performed = action_or_noop(c, sig)?;
                c.expect("->")?;
                let perceived = action_or_noop(c, sig)?;
                for a in performed.iter().chain(perceived.iter()) {
                    if a.agent() != agent {
                        return Err(Error::parse_at(
                            inner_col,
                            format!("action of agent {} inside a fake of agent {agent}", a.agent()),
                        ));
                    }
                }
                GlobalHap::FakeAction {
                    agent,
                    performed,
                    perceived,
                }
            }
        }
        "fail" => GlobalHap::fail(c.agent(sig)?),
        "go" => GlobalHap::Go(c.agent(sig)?),
        "sleep" => GlobalHap::Sleep(c.agent(sig)?),
        "hib" => GlobalHap::Hibernate(c.agent(sig)?),
        other => return Err(Error::parse_at(col, format!("unknown hap `{other}`"))),
    };
    c.expect(")")?;
    Ok(hap)
}

pub(crate) fn global_hap(c: &mut Cursor<'_>, sig: &Signature) -> Result<GlobalHap> {
    c.ws();
    let col = c.column();
    let w = c.word()?;
    hap_body(c, sig, w, col)
}

pub(crate) fn local_hap(c: &mut Cursor<'_>, sig: &Signature) -> Result<LocalHap> {
    c.ws();
    let col = c.column();
    let w = c.word()?;
    c.expect("(")?;
    let hap = match w {
        "send" => {
            let to = c.agent(sig)?;
            c.expect(",")?;
            let msg = c.label()?;
            c.expect(",")?;
            let copy = c.number()? as u32;
            LocalHap::Send { to, msg, copy }
        }
        "recv" => {
            let from = c.agent(sig)?;
            c.expect(",")?;
            let msg = c.label()?;
            LocalHap::Recv { from, msg }
        }
        "ext" => LocalHap::External(c.label()?),
        "int" => LocalHap::Internal(c.label()?),
        other => return Err(Error::parse_at(col, format!("unknown local hap `{other}`"))),
    };
    c.expect(")")?;
    located(col, sig.check_local(&hap))?;
    Ok(hap)
}

fn set_of<T: Ord>(
    c: &mut Cursor<'_>,
    sig: &Signature,
    item: fn(&mut Cursor<'_>, &Signature) -> Result<T>,
) -> Result<BTreeSet<T>> {
    c.expect("{")?;
    let mut out = BTreeSet::new();
    if c.eat("}") {
        return Ok(out);
    }
    loop {
        out.insert(item(c, sig)?);
        if c.eat("}") {
            return Ok(out);
        }
        c.expect(",")?;
    }
}

fn whole<T>(src: &str, f: impl FnOnce(&mut Cursor<'_>) -> Result<T>) -> Result<T> {
    let mut c = Cursor::new(src);
    let v = f(&mut c)?;
    c.end()?;
    Ok(v)
}

pub fn parse_global_hap(sig: &Signature, src: &str) -> Result<GlobalHap> {
    whole(src, |c| global_hap(c, sig))
}

pub fn parse_hap_set(sig: &Signature, src: &str) -> Result<HapSet> {
    whole(src, |c| set_of(c, sig, global_hap))
}

pub fn parse_local_hap(sig: &Signature, src: &str) -> Result<LocalHap> {
    whole(src, |c| local_hap(c, sig))
}

pub fn parse_local_set(sig: &Signature, src: &str) -> Result<LocalSet> {
    whole(src, |c| set_of(c, sig, local_hap))
}

pub fn parse_local_history(sig: &Signature, src: &str) -> Result<LocalHistory> {
    whole(src, |c| {
        let mut h = LocalHistory::new(c.label()?);
        while c.eat(";") {
            h.records.push(set_of(c, sig, local_hap)?);
        }
        Ok(h)
    })
}

/// Parses `agent@time`; the agent is range-checked against `sig`.
pub fn parse_node(sig: &Signature, src: &str) -> Result<Node> {
    whole(src, |c| {
        let agent = c.agent(sig)?;
        c.expect("@")?;
        let time = c.time()?;
        Ok(Node { agent, time })
    })
}
