//! Stack inspection: the annotator, the continuation-marks machine (CM), its
//! store-allocated time-stamped form, and the abstract CM*.
//!
//! Marks map permissions to [`Mark::Deny`] or [`Mark::Grant`] and live on
//! the top frame of the continuation.  `frame R` denies the complement of
//! `R` against the program's permission universe, `grant R` grants `R`, and
//! `test R e0 e1` walks the continuation from the hole outwards.

mod abs;
mod cm;
mod star;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::machine::{Closure, Env};
use crate::store::Addr;
use crate::syntax::{relabel, Exp, ExpKind, Label, PermSet, Permission, Program, Var};

pub use abs::{abstraction_map, state_leq, AbstractCm, AbstractCmState, CmContext};
pub use cm::{ok, Cm, CmKont, CmState};
pub use star::{CmStar, CmStarState, MarkedState};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Mark {
    Deny,
    Grant,
}

#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Marks(BTreeMap<Permission, Mark>);

impl Marks {
    pub fn new() -> Marks {
        Marks::default()
    }

    pub fn get(&self, p: &Permission) -> Option<Mark> {
        self.0.get(p).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `m[R ↦ c]`.
    pub fn set<'a>(&self, r: impl IntoIterator<Item = &'a Permission>, c: Mark) -> Marks {
        let mut m = self.0.clone();
        for p in r {
            m.insert(p.clone(), c);
        }
        Marks(m)
    }

    fn with(&self, c: Mark) -> impl Iterator<Item = &Permission> {
        self.0.iter().filter(move |(_, m)| **m == c).map(|(p, _)| p)
    }

    pub fn denied(&self) -> PermSet {
        self.with(Mark::Deny).cloned().collect()
    }

    pub fn granted(&self) -> PermSet {
        self.with(Mark::Grant).cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Permission, Mark)> {
        self.0.iter().map(|(p, m)| (p, *m))
    }
}

impl fmt::Display for Marks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (p, m)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}={}", p.name(), if *m == Mark::Deny { "deny" } else { "grant" })?;
        }
        f.write_str("}")
    }
}

/// How a frame-update rule changes the top marks.
pub(crate) fn security_marks(kind: &ExpKind, universe: &PermSet, m: &Marks) -> Option<(Marks, Exp)> {
    match kind {
        ExpKind::Frame(r, e) => Some((m.set(universe.difference(r), Mark::Deny), e.clone())),
        ExpKind::Grant(r, e) => Some((m.set(r, Mark::Grant), e.clone())),
        _ => None,
    }
}

/// The permission universe of a program: its pragma if it has one,
/// otherwise every permission the program mentions.
pub fn universe(p: &Program) -> PermSet {
    p.permissions.clone().unwrap_or_else(|| mentioned(&p.exp))
}

pub fn mentioned(e: &Exp) -> PermSet {
    e.subterms()
        .iter()
        .flat_map(|s| match s.kind() {
            ExpKind::Frame(r, _) | ExpKind::Grant(r, _) | ExpKind::Test(r, _, _) => r.iter().cloned().collect(),
            _ => vec![],
        })
        .collect()
}

/// The trusted annotator: wraps every lambda body in `frame R` and
/// intersects every `grant` with `R`.  The result is relabelled.
pub fn annotate(e: &Exp, r: &PermSet) -> Exp {
    relabel(&annotate_raw(e, r))
}

fn annotate_raw(e: &Exp, r: &PermSet) -> Exp {
    use ExpKind::*;
    let go = |e: &Exp| annotate_raw(e, r);
    let kind = match e.kind() {
        Lam(x, b) => Lam(x.clone(), Exp::new(Label::NONE, Frame(r.clone(), go(b)))),
        Grant(g, b) => Grant(g.intersection(r).cloned().collect(), go(b)),
        Frame(f, b) => Frame(f.clone(), go(b)),
        Test(t, a, b) => Test(t.clone(), go(a), go(b)),
        App(a, b) => App(go(a), go(b)),
        If(a, b, c) => If(go(a), go(b), go(c)),
        SetBang(x, b) => SetBang(x.clone(), go(b)),
        Throw(b) => Throw(go(b)),
        Catch(a, b) => Catch(go(a), go(b)),
        other => other.clone(),
    };
    Exp::new(e.label(), kind)
}

/// Result of a CM run: a value, or a stack-inspection failure.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum CmResult {
    Value(Closure),
    Fail,
}

impl fmt::Display for CmResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmResult::Value(c) => write!(f, "{c}"),
            CmResult::Fail => f.write_str("fail"),
        }
    }
}

/// Store-allocated marked frames.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum CmFrame {
    Mt(Marks),
    Ar(Marks, Exp, Env, Addr),
    Fn(Marks, Closure, Addr),
}

impl CmFrame {
    pub fn marks(&self) -> &Marks {
        match self {
            CmFrame::Mt(m) | CmFrame::Ar(m, ..) | CmFrame::Fn(m, ..) => m,
        }
    }

    pub fn tail(&self) -> Option<&Addr> {
        match self {
            CmFrame::Mt(_) => None,
            CmFrame::Ar(.., a) | CmFrame::Fn(.., a) => Some(a),
        }
    }

    /// `κ[R ↦ c]` generalised to an arbitrary new mark map.
    pub fn with_marks(&self, m: Marks) -> CmFrame {
        match self {
            CmFrame::Mt(_) => CmFrame::Mt(m),
            CmFrame::Ar(_, e, env, a) => CmFrame::Ar(m, e.clone(), env.clone(), a.clone()),
            CmFrame::Fn(_, c, a) => CmFrame::Fn(m, c.clone(), a.clone()),
        }
    }

    fn map_addrs(&self, f: &mut impl FnMut(&Addr) -> Addr) -> CmFrame {
        match self {
            CmFrame::Mt(m) => CmFrame::Mt(m.clone()),
            CmFrame::Ar(m, e, env, a) => CmFrame::Ar(m.clone(), e.clone(), env.map_addrs(&mut *f), f(a)),
            CmFrame::Fn(m, c, a) => CmFrame::Fn(m.clone(), Closure::new(c.lam.clone(), c.env.map_addrs(&mut *f)), f(a)),
        }
    }
}

impl fmt::Display for CmFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmFrame::Mt(m) => write!(f, "mt{m}"),
            CmFrame::Ar(m, e, env, a) => write!(f, "ar{m}({e}, {env}, {a})"),
            CmFrame::Fn(m, c, a) => write!(f, "fn{m}({}, {}, {a})", c.lam, c.env),
        }
    }
}

impl crate::gc::Touches for CmFrame {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        match self {
            CmFrame::Mt(_) => {}
            CmFrame::Ar(_, e, env, a) => {
                crate::gc::live_exp(e, env, out);
                out.insert(a.clone());
            }
            CmFrame::Fn(_, c, a) => {
                c.touches(out);
                out.insert(a.clone());
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum CmStorable {
    Clo(Closure),
    Kont(CmFrame),
}

impl fmt::Display for CmStorable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmStorable::Clo(c) => write!(f, "{c}"),
            CmStorable::Kont(k) => write!(f, "{k}"),
        }
    }
}

impl crate::gc::Touches for CmStorable {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        match self {
            CmStorable::Clo(c) => c.touches(out),
            CmStorable::Kont(k) => k.touches(out),
        }
    }
}

impl CmStorable {
    fn map_addrs(&self, f: &mut impl FnMut(&Addr) -> Addr) -> CmStorable {
        match self {
            CmStorable::Clo(c) => CmStorable::Clo(Closure::new(c.lam.clone(), c.env.map_addrs(f))),
            CmStorable::Kont(k) => CmStorable::Kont(k.map_addrs(f)),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Goal {
    Satisfy,
    Refute,
}

/// Searches the paths through the store starting at `k` for one on which
/// the stack-inspection predicate holds (`Satisfy`) or fails (`Refute`).
/// `R` only shrinks along a path, so `(R, address)` pairs bound the search.
fn search<I: IntoIterator<Item = CmFrame>>(r: &PermSet, k: &CmFrame, tails: impl Fn(&Addr) -> I, goal: Goal) -> bool {
    let mut visited: BTreeSet<(PermSet, Addr)> = BTreeSet::new();
    let mut work = vec![(r.clone(), k.clone())];
    while let Some((r, k)) = work.pop() {
        if r.is_empty() {
            if goal == Goal::Satisfy {
                return true;
            }
            continue;
        }
        if !r.is_disjoint(&k.marks().denied()) {
            if goal == Goal::Refute {
                return true;
            }
            continue;
        }
        let Some(a) = k.tail() else {
            if goal == Goal::Satisfy {
                return true;
            }
            continue;
        };
        let rest: PermSet = r.difference(&k.marks().granted()).cloned().collect();
        if visited.insert((rest.clone(), a.clone())) {
            work.extend(tails(a).into_iter().map(|k| (rest.clone(), k)));
        }
    }
    false
}

fn frames_at(store: &crate::store::AbstractStore<CmStorable>, a: &Addr) -> Vec<CmFrame> {
    store
        .values(a)
        .filter_map(|v| match v {
            CmStorable::Kont(k) => Some(k.clone()),
            CmStorable::Clo(_) => None,
        })
        .collect()
}

/// `ÔK(R, κ, σ̂)`: some path through the store satisfies the predicate.
pub fn ok_hat(r: &PermSet, k: &CmFrame, store: &crate::store::AbstractStore<CmStorable>) -> bool {
    search(r, k, |a| frames_at(store, a), Goal::Satisfy)
}

/// The dual witness: some path through the store falsifies the predicate.
pub fn refute_hat(r: &PermSet, k: &CmFrame, store: &crate::store::AbstractStore<CmStorable>) -> bool {
    search(r, k, |a| frames_at(store, a), Goal::Refute)
}

/// The predicate over a concrete store-allocated chain.
pub fn ok_star(r: &PermSet, k: &CmFrame, store: &crate::store::ConcreteStore<CmStorable>) -> bool {
    let tails = |a: &Addr| match store.get(a) {
        Some(CmStorable::Kont(k)) => vec![k.clone()],
        _ => vec![],
    };
    search(r, k, tails, Goal::Satisfy)
}

/// Store-allocates a concrete marked continuation with singleton entries at
/// fresh addresses, for comparing the predicates.
pub fn allocate_chain(k: &CmKont) -> (CmFrame, crate::store::AbstractStore<CmStorable>) {
    let mut entries = Vec::new();
    let top = allocate(k, &mut entries);
    (top, entries.into_iter().collect())
}

fn allocate(k: &CmKont, entries: &mut Vec<(Addr, CmStorable)>) -> CmFrame {
    let tail = |rest: &CmKont, entries: &mut Vec<(Addr, CmStorable)>| {
        let frame = allocate(rest, entries);
        let a = Addr::Fresh(entries.len() as u64 + 1);
        entries.push((a.clone(), CmStorable::Kont(frame)));
        a
    };
    match k {
        CmKont::Mt(m) => CmFrame::Mt(m.clone()),
        CmKont::Ar(m, e, env, rest) => {
            let a = tail(rest, entries);
            CmFrame::Ar(m.clone(), e.clone(), env.clone(), a)
        }
        CmKont::Fn(m, c, rest) => {
            let a = tail(rest, entries);
            CmFrame::Fn(m.clone(), c.clone(), a)
        }
    }
}

pub(crate) fn bind_var(lam: &Exp) -> (&Var, &Exp) {
    lam.as_lam().expect("closures hold lambdas")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse, perms};
    use crate::store::AbstractStore;

    #[test]
    fn annotator_wraps_bodies_and_intersects_grants() {
        let r = perms(["p"]);
        assert_eq!(annotate(&parse("(lambda (x) x)").unwrap(), &r).to_string(), "(lambda (x) (frame (p) x))");
        assert_eq!(
            annotate(&parse("(grant (p q) (lambda (y) y))").unwrap(), &r).to_string(),
            "(grant (p) (lambda (y) (frame (p) y)))"
        );
        let a = annotate(&parse("((lambda (x) x) (lambda (y) y))").unwrap(), &r);
        let labels: BTreeSet<_> = a.subterms().iter().map(|s| s.label()).collect();
        assert_eq!(labels.len(), a.size());
    }

    #[test]
    fn mark_update_is_idempotent() {
        let m = Marks::new().set(&perms(["p", "q"]), Mark::Deny);
        assert_eq!(m.set(&perms(["p"]), Mark::Grant), m.set(&perms(["p"]), Mark::Grant).set(&perms(["p"]), Mark::Grant));
    }

    #[test]
    fn mixed_store_has_both_witnesses() {
        let p = perms(["p"]);
        let a = Addr::Fresh(1);
        let store: AbstractStore<CmStorable> = [
            (a.clone(), CmStorable::Kont(CmFrame::Mt(Marks::new().set(&p, Mark::Grant)))),
            (a.clone(), CmStorable::Kont(CmFrame::Mt(Marks::new().set(&p, Mark::Deny)))),
        ]
        .into_iter()
        .collect();
        let lam = parse("(lambda (z) z)").unwrap();
        let top = CmFrame::Fn(Marks::new(), Closure::new(lam, Env::new()), a);
        assert!(ok_hat(&p, &top, &store));
        assert!(refute_hat(&p, &top, &store));
        assert!(ok_hat(&PermSet::new(), &top, &store));
        assert!(!refute_hat(&PermSet::new(), &top, &store));
    }
}
