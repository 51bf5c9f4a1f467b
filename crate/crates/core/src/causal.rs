//! Causal graph of a run and the cone / buffer / masses partition of a node.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::hap::{AgentId, GlobalHap, Gmi, Label, Signature, Time};
use crate::run::Run;

/// Agent-time node `(agent, time)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Node {
    pub agent: AgentId,
    pub time: Time,
}

impl Node {
    pub fn new(agent: u16, time: Time) -> Self {
        Node {
            agent: AgentId(agent),
            time,
        }
    }

    pub fn next(self) -> Node {
        Node {
            agent: self.agent,
            time: self.time + 1,
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.agent, self.time)
    }
}

/// Whether no fault event of the node's agent occurs before its time.
pub fn node_correct(run: &Run, node: Node) -> bool {
    run.first_fault(node.agent).is_none_or(|m| m >= node.time)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MessageEdge {
    pub from: Node,
    pub to: Node,
    pub gmi: Gmi,
    pub msg: Label,
    /// Grounded only by a byzantine send.
    pub byzantine: bool,
}

#[derive(Clone, Debug)]
pub struct CausalGraph {
    n: usize,
    len: Time,
    edges: Vec<MessageEdge>,
    incoming: BTreeMap<Node, Vec<Node>>,
}

impl CausalGraph {
    pub fn edges(&self) -> &[MessageEdge] {
        &self.edges
    }

    /// Last timestamp of the run the graph was built from.
    pub fn len(&self) -> Time {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        (0..self.n).flat_map(move |k| {
            (0..=self.len).map(move |t| Node {
                agent: AgentId::from_index(k),
                time: t,
            })
        })
    }

    /// Direct causal predecessors: the local one and message sources.
    pub fn predecessors(&self, node: Node) -> Vec<Node> {
        let mut out = Vec::new();
        if node.time > 0 {
            out.push(Node {
                agent: node.agent,
                time: node.time - 1,
            });
        }
        if let Some(srcs) = self.incoming.get(&node) {
            out.extend(srcs.iter().copied());
        }
        out
    }

    pub fn successors(&self, node: Node) -> Vec<Node> {
        let mut out = Vec::new();
        if node.time < self.len {
            out.push(node.next());
        }
        out.extend(self.edges.iter().filter(|e| e.from == node).map(|e| e.to));
        out
    }

    /// Nodes with some causal path to `target`, including `target`.
    pub fn ancestors(&self, target: Node) -> BTreeSet<Node> {
        self.backward(target, |_| true)
    }

    fn backward(&self, target: Node, admit: impl Fn(Node) -> bool) -> BTreeSet<Node> {
        let mut seen = BTreeSet::from([target]);
        let mut queue = VecDeque::from([target]);
        while let Some(v) = queue.pop_front() {
            for p in self.predecessors(v) {
                if !seen.contains(&p) && admit(p) {
                    seen.insert(p);
                    queue.push_back(p);
                }
            }
        }
        seen
    }
}

/// Message edges: a correct receive in round `l - 1` links the node
/// `(j, l)` to the sender's node at the send time packed in its identifier,
/// provided that node performed the send correctly or byzantinely.
pub fn build_causal_graph(sig: &Signature, run: &Run) -> Result<CausalGraph> {
    let mut edges = BTreeSet::new();
    for q in 0..run.time() {
        for h in run.beta_env(q) {
            let GlobalHap::Recv(r) = h else { continue };
            let parts = sig.decode_gmi(r.gmi).ok_or_else(|| {
                Error::Integrity(format!("receive `{h}` in round {q} carries an undecodable identifier"))
            })?;
            let m = parts.time;
            if m > q {
                continue;
            }
            let correct = run
                .beta_agent(r.from, m)
                .iter()
                .any(|a| matches!(a, GlobalHap::Send(s) if r.matches(s)));
            let faked = run
                .beta_env(m)
                .iter()
                .any(|e| e.fake_performed_send().is_some_and(|s| r.matches(s)));
            if correct || faked {
                edges.insert(MessageEdge {
                    from: Node {
                        agent: r.from,
                        time: m,
                    },
                    to: Node {
                        agent: r.to,
                        time: q + 1,
                    },
                    gmi: r.gmi,
                    msg: r.msg.clone(),
                    byzantine: !correct,
                });
            }
        }
    }
    let edges: Vec<MessageEdge> = edges.into_iter().collect();
    let mut incoming: BTreeMap<Node, Vec<Node>> = BTreeMap::new();
    for e in &edges {
        let srcs = incoming.entry(e.to).or_default();
        if !srcs.contains(&e.from) {
            srcs.push(e.from);
        }
    }
    Ok(CausalGraph {
        n: run.n(),
        len: run.time(),
        edges,
        incoming,
    })
}

/// Nodes with a reliable causal path to `theta`: every node on the path
/// except the last has a correct immediate future, and the last is correct.
pub fn reliable_cone(run: &Run, graph: &CausalGraph, theta: Node) -> BTreeSet<Node> {
    if !node_correct(run, theta) {
        return BTreeSet::new();
    }
    graph.backward(theta, |p| node_correct(run, p.next()))
}

pub fn reliable_path_exists(run: &Run, graph: &CausalGraph, from: Node, to: Node) -> bool {
    reliable_cone(run, graph, to).contains(&from)
}

pub fn path_exists(graph: &CausalGraph, from: Node, to: Node) -> bool {
    graph.ancestors(to).contains(&from)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Class {
    Cone,
    Buffer,
    Masses,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConePartition {
    pub theta: Node,
    pub cone: BTreeSet<Node>,
    pub buffer: BTreeSet<Node>,
    n: usize,
    len: Time,
}

impl ConePartition {
    pub fn class(&self, node: Node) -> Class {
        if self.cone.contains(&node) {
            Class::Cone
        } else if self.buffer.contains(&node) {
            Class::Buffer
        } else {
            Class::Masses
        }
    }

    /// Cone and buffer together: the nodes with a voice.
    pub fn voiced(&self) -> BTreeSet<Node> {
        self.cone.union(&self.buffer).copied().collect()
    }

    /// All remaining nodes of `A × [0, len]`.
    pub fn masses(&self) -> BTreeSet<Node> {
        (0..self.n)
            .flat_map(|k| {
                (0..=self.len).map(move |t| Node {
                    agent: AgentId::from_index(k),
                    time: t,
                })
            })
            .filter(|v| self.class(*v) == Class::Masses)
            .collect()
    }

    /// Agents owning at least one buffer node.
    pub fn byzantine_agents(&self) -> BTreeSet<AgentId> {
        self.buffer.iter().map(|v| v.agent).collect()
    }
}

pub fn partition(sig: &Signature, run: &Run, theta: Node) -> Result<ConePartition> {
    let graph = build_causal_graph(sig, run)?;
    partition_with(run, &graph, theta)
}

pub fn partition_with(run: &Run, graph: &CausalGraph, theta: Node) -> Result<ConePartition> {
    if theta.time > run.time() {
        return Err(Error::Range {
            time: theta.time,
            horizon: run.time(),
        });
    }
    run.agents()
        .find(|a| *a == theta.agent)
        .ok_or(Error::UnknownAgent(theta.agent))?;
    let cone = reliable_cone(run, graph, theta);
    let buffer = graph
        .ancestors(theta)
        .into_iter()
        .filter(|v| v.time < theta.time && !node_correct(run, v.next()))
        .collect();
    Ok(ConePartition {
        theta,
        cone,
        buffer,
        n: run.n(),
        len: run.time(),
    })
}

fn dot_id(v: Node) -> String {
    format!("\"{v}\"")
}

/// Graphviz rendering: one row per agent, nodes filled by class, message
/// edges labelled with payload and identifier, byzantine sends dashed.
pub fn to_dot(graph: &CausalGraph, part: &ConePartition) -> String {
    let mut s = String::new();
    writeln!(s, "digraph causal {{").unwrap();
    writeln!(s, "  rankdir=LR;").unwrap();
    writeln!(s, "  node [shape=circle, style=filled, fontsize=10];").unwrap();
    writeln!(s, "  label=\"theta {}\";", part.theta).unwrap();
    for k in 0..graph.n {
        writeln!(s, "  subgraph agent{} {{", k + 1).unwrap();
        writeln!(s, "    rank=same;").unwrap();
        for t in 0..=graph.len {
            let v = Node {
                agent: AgentId::from_index(k),
                time: t,
            };
            let (fill, class) = match part.class(v) {
                Class::Cone => ("palegreen", "cone"),
                Class::Buffer => ("salmon", "buffer"),
                Class::Masses => ("lightgray", "masses"),
            };
            let pen = if v == part.theta { ", penwidth=3" } else { "" };
            writeln!(
                s,
                "    {} [label=\"{v}\", fillcolor={fill}, class={class}{pen}];",
                dot_id(v)
            )
            .unwrap();
        }
        writeln!(s, "  }}").unwrap();
    }
    for v in graph.nodes() {
        if v.time < graph.len {
            writeln!(s, "  {} -> {} [color=gray];", dot_id(v), dot_id(v.next())).unwrap();
        }
    }
    for e in &graph.edges {
        let style = if e.byzantine { ", style=dashed" } else { "" };
        writeln!(
            s,
            "  {} -> {} [label=\"{} {}\"{style}];",
            dot_id(e.from),
            dot_id(e.to),
            e.msg.as_str().replace('"', "\\\""),
            e.gmi
        )
        .unwrap();
    }
    writeln!(s, "}}").unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hap::HapSet;
    use crate::text::parse_hap_set;

    fn sig(n: u16) -> Signature {
        Signature::new(n, vec!["m".into()], vec!["o".into()], vec![], 1, 6).unwrap()
    }

    /// Builds a run directly from per-round β-sets written as text.
    fn run_of(s: &Signature, rounds: &[(&str, Vec<&str>)]) -> Run {
        let mut run = Run::new(vec!["s0".into(); s.n()]);
        for (env, acts) in rounds {
            let mut agents = vec![HapSet::new(); s.n()];
            for (k, a) in acts.iter().enumerate() {
                agents[k] = parse_hap_set(s, a).unwrap();
            }
            run.push_surgical(parse_hap_set(s, env).unwrap(), agents).unwrap();
        }
        run
    }

    fn id(s: &Signature, a: u16, b: u16, t: Time) -> String {
        s.encode_gmi(AgentId(a), AgentId(b), &"m".into(), 0, t)
            .unwrap()
            .to_string()
    }

    #[test]
    fn correctness_of_nodes() {
        let s = sig(2);
        let run = run_of(&s, &[("{fail(1)}", vec![]), ("{}", vec![]), ("{sleep(2)}", vec![])]);
        assert!(node_correct(&run, Node::new(1, 0)));
        assert!(!node_correct(&run, Node::new(1, 1)));
        assert!(node_correct(&run, Node::new(2, 1)));
        assert!(node_correct(&run, Node::new(2, 2)));
        assert!(!node_correct(&run, Node::new(2, 3)));
    }

    #[test]
    fn ping_edge() {
        let s = sig(2);
        let g = id(&s, 1, 2, 0);
        let run = run_of(
            &s,
            &[
                ("{go(1)}", vec![&format!("{{gsend(1->2, m, {g})}}")]),
                ("{}", vec![]),
                (&format!("{{grecv(2<-1, m, {g})}}"), vec![]),
            ],
        );
        let graph = build_causal_graph(&s, &run).unwrap();
        assert_eq!(graph.edges().len(), 1);
        assert_eq!((graph.edges()[0].from, graph.edges()[0].to), (Node::new(1, 0), Node::new(2, 3)));
        assert!(!graph.edges()[0].byzantine);
    }

    #[test]
    fn byzantine_send_edge() {
        let s = sig(2);
        let g = id(&s, 1, 2, 1);
        let run = run_of(
            &s,
            &[
                ("{}", vec![]),
                (&format!("{{fake(1, gsend(1->2, m, {g}) -> noop)}}"), vec![]),
                (&format!("{{grecv(2<-1, m, {g})}}"), vec![]),
            ],
        );
        let graph = build_causal_graph(&s, &run).unwrap();
        assert_eq!(graph.edges().len(), 1);
        assert!(graph.edges()[0].byzantine);
        assert_eq!(graph.edges()[0].from, Node::new(1, 1));
        let silent = run_of(&s, &[("{go(1), go(2)}", vec![])]);
        assert!(build_causal_graph(&s, &silent).unwrap().is_empty());
    }

    #[test]
    fn trivial_paths() {
        let s = sig(2);
        let run = run_of(&s, &[("{fail(1)}", vec![])]);
        let graph = build_causal_graph(&s, &run).unwrap();
        assert!(reliable_path_exists(&run, &graph, Node::new(2, 1), Node::new(2, 1)));
        assert!(!reliable_path_exists(&run, &graph, Node::new(1, 1), Node::new(1, 1)));
    }

    #[test]
    fn relay_turning_faulty() {
        // 1 sends to 2 in round 0; 2 turns faulty in round 1 and relays
        // byzantinely to 3, who receives in round 2.
        let s = sig(3);
        let g1 = id(&s, 1, 2, 0);
        let g2 = s
            .encode_gmi(AgentId(2), AgentId(3), &"m".into(), 0, 1)
            .unwrap()
            .to_string();
        let run = run_of(
            &s,
            &[
                (
                    &format!("{{go(1), grecv(2<-1, m, {g1})}}"),
                    vec![&format!("{{gsend(1->2, m, {g1})}}")],
                ),
                (&format!("{{fake(2, gsend(2->3, m, {g2}) -> noop)}}"), vec![]),
                (&format!("{{grecv(3<-2, m, {g2})}}"), vec![]),
            ],
        );
        let graph = build_causal_graph(&s, &run).unwrap();
        assert_eq!(graph.edges().len(), 2);
        let theta = Node::new(3, 3);
        assert!(path_exists(&graph, Node::new(1, 0), theta));
        assert!(!reliable_path_exists(&run, &graph, Node::new(1, 0), theta));
        let p = partition_with(&run, &graph, theta).unwrap();
        assert_eq!(p.class(Node::new(2, 1)), Class::Buffer);
        assert_eq!(p.class(Node::new(1, 0)), Class::Masses);
        assert_eq!(p.class(Node::new(3, 2)), Class::Cone);
        assert_eq!(p.class(Node::new(3, 0)), Class::Cone);
        assert_eq!(p.class(Node::new(2, 2)), Class::Masses);
        assert_eq!(p.masses().len(), 12 - p.cone.len() - p.buffer.len());
        let dot = to_dot(&graph, &p);
        assert!(dot.contains("\"2@1\" [label=\"2@1\", fillcolor=salmon"));
    }
}
