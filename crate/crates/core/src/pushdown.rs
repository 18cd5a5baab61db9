//! Pushdown abstract interpretation.
//!
//! Bindings live in an abstract store but continuations stay on a real,
//! unbounded stack of frames.  The finite part of a configuration — control,
//! environment, store and time — is a [`PdConfig`]; a machine state is a
//! config plus a stack.  Reachability is decided by summary-edge saturation
//! over (config, top frame) nodes, so returns are matched with their calls.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use indexmap::IndexSet;

use crate::concrete::{Kont, Storable, TimedState};
use crate::graph::par_map;
use crate::machine::{check_program, Closure, Env, InjectError};
use crate::policy::{Contours, Moment, Policy};
use crate::store::{AbstractStore, Addr, Time};
use crate::syntax::{Exp, ExpKind, CORE_FORMS};

/// Stack frames.  They carry environments but no continuation addresses.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum PdFrame {
    Ar(Exp, Env),
    Fn(Closure),
}

impl fmt::Display for PdFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PdFrame::Ar(e, env) => write!(f, "ar({e}, {env})"),
            PdFrame::Fn(c) => write!(f, "fn({}, {})", c.lam, c.env),
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct PdConfig {
    pub control: Exp,
    pub env: Env,
    pub store: AbstractStore<Closure>,
    pub time: Time,
}

impl fmt::Display for PdConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}, {}>", self.control, self.env, self.time)
    }
}

/// A config together with the frame on top of the stack (`None`: empty).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct PdNode {
    pub config: PdConfig,
    pub top: Option<PdFrame>,
}

impl PdNode {
    pub fn is_final(&self) -> bool {
        self.top.is_none() && matches!(self.config.control.kind(), ExpKind::Lam(..))
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum StackAction {
    None,
    Push(PdFrame),
    Swap(PdFrame),
    Pop,
}

/// The pushdown CESK machine.  Contour policies other than k = 0 are
/// allowed; the node space stays finite for any bounded policy.
#[derive(Clone, Copy, Debug)]
pub struct Pushdown<P> {
    pub policy: P,
}

impl<P: Policy> Pushdown<P> {
    pub fn new(policy: P) -> Self {
        assert!(!policy.is_concrete(), "the pushdown analysis needs a bounded policy");
        Pushdown { policy }
    }

    pub fn inject(&self, e: &Exp) -> Result<PdConfig, InjectError> {
        check_program(e, CORE_FORMS)?;
        Ok(PdConfig { control: e.clone(), env: Env::new(), store: AbstractStore::new(), time: self.policy.initial_time() })
    }

    /// Successor configs of `c` under top frame `top`, each with the stack
    /// action that produces it.  A value over the empty stack has none.
    pub fn step(&self, c: &PdConfig, top: Option<&PdFrame>) -> Vec<(PdConfig, StackAction)> {
        let m = Moment { site: c.control.label(), time: &c.time, kont: &top, fresh: 0 };
        let u = self.policy.tick(&m);
        let next = |control: Exp, env: Env, store: AbstractStore<Closure>| PdConfig { control, env, store, time: u.clone() };
        match c.control.kind() {
            ExpKind::Ref(x) => match c.env.get(x) {
                Some(a) => c.store.values(a).map(|v| (next(v.lam.clone(), v.env.clone(), c.store.clone()), StackAction::None)).collect(),
                None => vec![],
            },
            ExpKind::App(e0, e1) => {
                vec![(next(e0.clone(), c.env.clone(), c.store.clone()), StackAction::Push(PdFrame::Ar(e1.clone(), c.env.clone())))]
            }
            ExpKind::Lam(..) => {
                let v = Closure::new(c.control.clone(), c.env.clone());
                match top {
                    None => vec![],
                    Some(PdFrame::Ar(e, env)) => vec![(next(e.clone(), env.clone(), c.store.clone()), StackAction::Swap(PdFrame::Fn(v)))],
                    Some(PdFrame::Fn(f)) => {
                        let (x, body) = f.lam.as_lam().expect("closures hold lambdas");
                        let b = self.policy.alloc_bind(x, &u, &m);
                        let store = c.store.join_one(b.clone(), v);
                        vec![(next(body.clone(), f.env.extend(x.clone(), b), store), StackAction::Pop)]
                    }
                }
            }
            _ => vec![],
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum PdEdge {
    /// Same stack height: a variable lookup or a top-frame swap.
    Step,
    Push,
    Pop,
    /// From a push's source to the successor of a matching pop.
    Summary,
}

/// Saturated reachability result.  Node 0 is the initial node.
#[derive(Clone, Debug)]
pub struct SummaryGraph {
    nodes: IndexSet<PdNode>,
    edges: BTreeSet<(usize, usize, PdEdge)>,
}

impl SummaryGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &PdNode> {
        self.nodes.iter()
    }

    pub fn node(&self, i: usize) -> &PdNode {
        &self.nodes[i]
    }

    pub fn index_of(&self, n: &PdNode) -> Option<usize> {
        self.nodes.get_index_of(n)
    }

    pub fn edges(&self) -> impl Iterator<Item = &(usize, usize, PdEdge)> {
        self.edges.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn initial(&self) -> usize {
        0
    }

    pub fn final_ids(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_final()).collect()
    }

    pub fn finals(&self) -> impl Iterator<Item = &PdNode> {
        self.nodes.iter().filter(|n| n.is_final())
    }

    /// Final control strings, sorted and deduplicated.
    pub fn final_controls(&self) -> BTreeSet<String> {
        self.finals().map(|n| n.config.control.to_string()).collect()
    }

    /// True when `other` has the same nodes and edges, whatever the order.
    pub fn same_as(&self, other: &SummaryGraph) -> bool {
        let canon = |g: &SummaryGraph| -> BTreeSet<(PdNode, PdNode, PdEdge)> {
            g.edges.iter().map(|&(a, b, k)| (g.nodes[a].clone(), g.nodes[b].clone(), k)).collect()
        };
        let nodes = |g: &SummaryGraph| g.nodes.iter().cloned().collect::<BTreeSet<_>>();
        nodes(self) == nodes(other) && canon(self) == canon(other)
    }

    /// Replays every push/pop pair recorded by a summary edge: the source of
    /// the summary must push, and the target must be the pop's successor
    /// under the source's own top frame.
    pub fn check_stack_discipline(&self) -> Result<(), String> {
        for &(a, b, k) in &self.edges {
            if k != PdEdge::Summary {
                continue;
            }
            let pushes = self.edges.iter().any(|&(s, _, k2)| s == a && k2 == PdEdge::Push);
            if !pushes {
                return Err(format!("summary edge from a node that never pushes: {}", self.nodes[a].config));
            }
            if self.nodes[a].top != self.nodes[b].top {
                return Err(format!("summary edge changes the stack below: {} to {}", self.nodes[a].config, self.nodes[b].config));
            }
        }
        Ok(())
    }
}

type Transitions = Vec<(PdConfig, StackAction)>;

struct Saturation<'a> {
    step: &'a (dyn Fn(&PdNode) -> Transitions + Sync),
    workers: usize,
    nodes: IndexSet<PdNode>,
    edges: BTreeSet<(usize, usize, PdEdge)>,
    cache: HashMap<usize, Transitions>,
    /// Balanced-path facts (entry, node).
    facts: BTreeSet<(usize, usize)>,
    work: VecDeque<(usize, usize)>,
    /// entry -> (caller's entry, caller node)
    callers: HashMap<usize, BTreeSet<(usize, usize)>>,
    /// entry -> configs reached by popping the entry's frame
    exits: HashMap<usize, BTreeSet<PdConfig>>,
}

impl Saturation<'_> {
    fn intern(&mut self, n: PdNode) -> usize {
        self.nodes.insert_full(n).0
    }

    fn fact(&mut self, entry: usize, node: usize) {
        if self.facts.insert((entry, node)) {
            self.work.push_back((entry, node));
        }
    }

    fn ret(&mut self, caller_entry: usize, caller: usize, c: PdConfig) {
        let top = self.nodes[caller].top.clone();
        let r = self.intern(PdNode { config: c, top });
        self.edges.insert((caller, r, PdEdge::Summary));
        self.fact(caller_entry, r);
    }

    fn run(mut self) -> SummaryGraph {
        while !self.work.is_empty() {
            // One round: fill the transition cache for every pending node
            // (in parallel), then process the round's facts in order.
            let round: Vec<(usize, usize)> = self.work.drain(..).collect();
            let pending: Vec<usize> = round.iter().map(|&(_, n)| n).filter(|n| !self.cache.contains_key(n)).collect::<IndexSet<_>>().into_iter().collect();
            let todo: Vec<PdNode> = pending.iter().map(|&i| self.nodes[i].clone()).collect();
            let step = self.step;
            for (i, t) in pending.into_iter().zip(par_map(&todo, self.workers, |n| step(n))) {
                self.cache.insert(i, t);
            }
            for (entry, n) in round {
                let trans = self.cache[&n].clone();
                for (c, action) in trans {
                    match action {
                        StackAction::None => {
                            let top = self.nodes[n].top.clone();
                            let m = self.intern(PdNode { config: c, top });
                            self.edges.insert((n, m, PdEdge::Step));
                            self.fact(entry, m);
                        }
                        StackAction::Swap(f) => {
                            let m = self.intern(PdNode { config: c, top: Some(f) });
                            self.edges.insert((n, m, PdEdge::Step));
                            self.fact(entry, m);
                        }
                        StackAction::Push(f) => {
                            let child = self.intern(PdNode { config: c, top: Some(f) });
                            self.edges.insert((n, child, PdEdge::Push));
                            self.callers.entry(child).or_default().insert((entry, n));
                            self.fact(child, child);
                            let exits: Vec<PdConfig> = self.exits.get(&child).map(|s| s.iter().cloned().collect()).unwrap_or_default();
                            for c in exits {
                                self.ret(entry, n, c);
                            }
                        }
                        StackAction::Pop => {
                            let fresh = self.exits.entry(entry).or_default().insert(c.clone());
                            if fresh {
                                let callers: Vec<(usize, usize)> = self.callers.get(&entry).map(|s| s.iter().copied().collect()).unwrap_or_default();
                                for (ce, caller) in callers {
                                    self.ret(ce, caller, c.clone());
                                }
                            }
                        }
                    }
                }
            }
        }
        // Pop edges, now that every entry's callers are known.
        let mut late = vec![];
        for &(entry, n) in &self.facts {
            for (c, action) in &self.cache[&n] {
                if *action == StackAction::Pop {
                    for &(_, caller) in self.callers.get(&entry).into_iter().flatten() {
                        let top = self.nodes[caller].top.clone();
                        let r = self.nodes.get_index_of(&PdNode { config: c.clone(), top }).expect("return node interned");
                        late.push((n, r, PdEdge::Pop));
                    }
                }
            }
        }
        self.edges.extend(late);
        SummaryGraph { nodes: self.nodes, edges: self.edges }
    }
}

fn saturate_from(init: PdConfig, workers: usize, step: &(dyn Fn(&PdNode) -> Transitions + Sync)) -> SummaryGraph {
    let mut s = Saturation {
        step,
        workers,
        nodes: IndexSet::new(),
        edges: BTreeSet::new(),
        cache: HashMap::new(),
        facts: BTreeSet::new(),
        work: VecDeque::new(),
        callers: HashMap::new(),
        exits: HashMap::new(),
    };
    let root = s.intern(PdNode { config: init, top: None });
    s.fact(root, root);
    s.run()
}

/// Summary-edge saturation with per-configuration stores.
pub fn reachable_pushdown<P: Policy>(m: &Pushdown<P>, e: &Exp) -> Result<SummaryGraph, InjectError> {
    reachable_pushdown_parallel(m, e, 1)
}

/// As [`reachable_pushdown`], computing transitions on `workers` threads.
/// The result does not depend on `workers`.
pub fn reachable_pushdown_parallel<P: Policy>(m: &Pushdown<P>, e: &Exp, workers: usize) -> Result<SummaryGraph, InjectError> {
    let init = m.inject(e)?;
    Ok(saturate_from(init, workers, &|n: &PdNode| m.step(&n.config, n.top.as_ref())))
}

/// Saturation under a single global store.
#[derive(Clone, Debug)]
pub struct WidenedPushdown {
    /// Nodes carry the final global store in their configs.
    pub graph: SummaryGraph,
    pub store: AbstractStore<Closure>,
    pub rounds: usize,
}

/// Re-saturates with every config's store replaced by one global store until
/// the store stops growing.
pub fn reachable_pushdown_widened<P: Policy>(m: &Pushdown<P>, e: &Exp) -> Result<WidenedPushdown, InjectError> {
    let init = m.inject(e)?;
    let mut store = AbstractStore::new();
    let mut rounds = 0;
    loop {
        rounds += 1;
        let global = store.clone();
        let step = |n: &PdNode| -> Transitions {
            let c = PdConfig { store: global.clone(), ..n.config.clone() };
            m.step(&c, n.top.as_ref())
        };
        let start = PdConfig { store: global.clone(), ..init.clone() };
        let graph = saturate_from(start, 1, &step);
        let grown = graph.nodes().fold(global.clone(), |acc, n| {
            step(n).iter().fold(acc, |acc, (c, _)| acc.join_store(&c.store))
        });
        if grown == global {
            let nodes = graph.nodes.into_iter().map(|n| PdNode { config: PdConfig { store: global.clone(), ..n.config }, top: n.top }).collect();
            return Ok(WidenedPushdown { graph: SummaryGraph { nodes, edges: graph.edges }, store: global, rounds });
        }
        store = grown;
    }
}

/// Result of brute-force exploration with explicit stacks.
#[derive(Clone, Debug)]
pub struct Bounded {
    /// Every reachable (config, top frame) pair seen.
    pub nodes: BTreeSet<PdNode>,
    /// True when some state would have exceeded the depth bound.
    pub truncated: bool,
}

impl Bounded {
    pub fn final_controls(&self) -> BTreeSet<String> {
        self.nodes.iter().filter(|n| n.is_final()).map(|n| n.config.control.to_string()).collect()
    }
}

/// Breadth-first search over (config, stack) with stacks at most `depth`
/// frames tall.  When nothing is truncated this is the exact answer.
pub fn enumerate_bounded<P: Policy>(m: &Pushdown<P>, e: &Exp, depth: usize) -> Result<Bounded, InjectError> {
    let init = (m.inject(e)?, Vec::<PdFrame>::new());
    let mut seen: IndexSet<(PdConfig, Vec<PdFrame>)> = IndexSet::new();
    seen.insert(init);
    let mut truncated = false;
    let mut i = 0;
    while i < seen.len() {
        let (c, stack) = seen[i].clone();
        i += 1;
        for (c2, action) in m.step(&c, stack.last()) {
            let mut s2 = stack.clone();
            match action {
                StackAction::None => {}
                StackAction::Push(f) => {
                    if s2.len() == depth {
                        truncated = true;
                        continue;
                    }
                    s2.push(f);
                }
                StackAction::Swap(f) => *s2.last_mut().expect("swap under a frame") = f,
                StackAction::Pop => {
                    s2.pop();
                }
            }
            seen.insert((c2, s2));
        }
    }
    let nodes = seen.into_iter().map(|(config, stack)| PdNode { config, top: stack.last().cloned() }).collect();
    Ok(Bounded { nodes, truncated })
}

/// Projects a concrete contour-keyed CESK*t state to a pushdown node under
/// `target`: contours are truncated, continuations are dropped from the
/// store, and the top frame is copied off the continuation.
pub fn abstract_node(target: &Contours, s: &TimedState) -> PdNode {
    let mut addr = |a: &Addr| target.abstract_addr(a);
    let clo = |c: &Closure, addr: &mut dyn FnMut(&Addr) -> Addr| Closure::new(c.lam.clone(), c.env.map_addrs(addr));
    let store = s
        .store
        .iter()
        .filter_map(|(a, v)| match v {
            Storable::Clo(c) => Some((target.abstract_addr(a), clo(c, &mut addr))),
            Storable::Kont(_) => None,
        })
        .collect();
    let top = match &s.kont {
        Kont::Mt => None,
        Kont::Ar(e, env, _) => Some(PdFrame::Ar(e.clone(), env.map_addrs(&mut addr))),
        Kont::Fn(c, _) => Some(PdFrame::Fn(clo(c, &mut addr))),
    };
    PdNode { config: PdConfig { control: s.control.clone(), env: s.env.map_addrs(&mut addr), store, time: target.abstract_time(&s.time) }, top }
}

fn covers(abs: &PdNode, n: &PdNode) -> bool {
    let (a, c) = (&abs.config, &n.config);
    abs.top == n.top && a.control == c.control && a.env == c.env && a.time == c.time && a.store.leq_store(&c.store)
}

/// Walks a concrete trace (under unbounded contours) through the summary
/// graph: each state's projection must be covered by a reachable node, and
/// each concrete step must be matched by a transition of some covering node.
/// Returns the index of the first uncovered state on failure.
pub fn check_soundness<P: Policy>(m: &Pushdown<P>, trace: &[TimedState], g: &SummaryGraph, target: &Contours) -> Result<(), usize> {
    let projected: Vec<PdNode> = trace.iter().map(|s| abstract_node(target, s)).collect();
    let covering = |p: &PdNode| g.nodes().filter(|n| covers(p, n)).collect::<Vec<_>>();
    for (i, p) in projected.iter().enumerate() {
        let here = covering(p);
        if here.is_empty() {
            return Err(i);
        }
        if let Some(next) = projected.get(i + 1) {
            let matched = here.iter().any(|n| {
                m.step(&n.config, n.top.as_ref()).iter().any(|(c, _)| covers(&PdNode { config: next.config.clone(), top: None }, &PdNode { config: c.clone(), top: None }))
            });
            if !matched {
                return Err(i + 1);
            }
        }
    }
    Ok(())
}
