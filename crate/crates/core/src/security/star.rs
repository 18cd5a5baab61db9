use std::collections::BTreeSet;
use std::fmt;

use crate::gc::{gc_reachable, live_exp, Collect, Touches};
use crate::machine::{check_program, Closure, ConcreteMachine, Env, InjectError, StepOutcome};
use crate::policy::{Moment, Policy};
use crate::store::{AbstractStore, Addr, ConcreteStore, Time};
use crate::syntax::{Exp, ExpKind, PermSet, SECURITY_FORMS};

use super::{bind_var, search, security_marks, CmFrame, CmResult, CmStorable, Goal, Marks};

/// A store-allocated CM state over store type `H`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct MarkedState<H> {
    pub control: Exp,
    pub env: Env,
    pub store: H,
    pub kont: CmFrame,
    pub time: Time,
}

pub type CmStarState = MarkedState<ConcreteStore<CmStorable>>;

impl<H> fmt::Display for MarkedState<H> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}, {}, {}>", self.control, self.env, self.kont, self.time)
    }
}

/// What the rules need from a store.
pub(crate) trait CmHeap: Clone + Default {
    fn read(&self, a: &Addr) -> Vec<CmStorable>;
    fn alloc(&self, a: Addr, v: CmStorable) -> Self;
    fn next_fresh(&self) -> u64;

    fn frames(&self, a: &Addr) -> Vec<CmFrame> {
        self.read(a)
            .into_iter()
            .filter_map(|v| match v {
                CmStorable::Kont(k) => Some(k),
                CmStorable::Clo(_) => None,
            })
            .collect()
    }
}

impl CmHeap for ConcreteStore<CmStorable> {
    fn read(&self, a: &Addr) -> Vec<CmStorable> {
        self.get(a).cloned().into_iter().collect()
    }

    fn alloc(&self, a: Addr, v: CmStorable) -> Self {
        assert!(!self.contains(&a), "allocation returned a live address {a}");
        self.insert(a, v)
    }

    fn next_fresh(&self) -> u64 {
        ConcreteStore::next_fresh(self)
    }
}

impl CmHeap for AbstractStore<CmStorable> {
    fn read(&self, a: &Addr) -> Vec<CmStorable> {
        self.values(a).cloned().collect()
    }

    fn alloc(&self, a: Addr, v: CmStorable) -> Self {
        self.join_one(a, v)
    }

    fn next_fresh(&self) -> u64 {
        0
    }
}

pub(crate) fn inject<H: CmHeap>(e: &Exp, time: Time) -> Result<MarkedState<H>, InjectError> {
    check_program(e, SECURITY_FORMS)?;
    Ok(MarkedState { control: e.clone(), env: Env::new(), store: H::default(), kont: CmFrame::Mt(Marks::new()), time })
}

type Out<H> = StepOutcome<MarkedState<H>, CmResult>;

/// All transitions of the store-allocated CM machine.  `test` takes its
/// first branch when some path through the store satisfies the predicate
/// and its second when some path refutes it; on a concrete store exactly
/// one path exists.
pub(crate) fn step<P: Policy, H: CmHeap>(policy: &P, universe: &PermSet, s: &MarkedState<H>) -> Vec<Out<H>> {
    let site = s.control.label();
    let fresh = s.store.next_fresh();
    let moment = |kont| Moment { site, time: &s.time, kont, fresh };
    let next = |control: Exp, env: Env, store: H, kont: CmFrame, time: Time| StepOutcome::Next(MarkedState { control, env, store, kont, time });
    let same = |control: Exp, kont: CmFrame| next(control, s.env.clone(), s.store.clone(), kont, policy.tick(&moment(&s.kont)));
    if let Some((m, e)) = security_marks(s.control.kind(), universe, s.kont.marks()) {
        return vec![same(e, s.kont.with_marks(m))];
    }
    match s.control.kind() {
        ExpKind::Fail => match &s.kont {
            CmFrame::Mt(m) if m.is_empty() => vec![StepOutcome::Final(CmResult::Fail)],
            _ => vec![same(s.control.clone(), CmFrame::Mt(Marks::new()))],
        },
        ExpKind::Test(r, e0, e1) => {
            let mut out = vec![];
            if search(r, &s.kont, |a| s.store.frames(a), Goal::Satisfy) {
                out.push(same(e0.clone(), s.kont.clone()));
            }
            if search(r, &s.kont, |a| s.store.frames(a), Goal::Refute) {
                out.push(same(e1.clone(), s.kont.clone()));
            }
            out
        }
        ExpKind::Ref(x) => {
            let Some(a) = s.env.get(x) else {
                return vec![StepOutcome::Stuck(format!("unbound variable {x}"))];
            };
            let u = policy.tick(&moment(&s.kont));
            s.store
                .read(a)
                .into_iter()
                .filter_map(|v| match v {
                    CmStorable::Clo(c) => Some(next(c.lam, c.env, s.store.clone(), s.kont.clone(), u.clone())),
                    CmStorable::Kont(_) => None,
                })
                .collect()
        }
        ExpKind::App(e0, e1) => {
            let m = moment(&s.kont);
            let u = policy.tick(&m);
            let a = policy.alloc_kont(site, &u, &m);
            let store = s.store.alloc(a.clone(), CmStorable::Kont(s.kont.clone()));
            vec![next(e0.clone(), s.env.clone(), store, CmFrame::Ar(Marks::new(), e1.clone(), s.env.clone(), a), u)]
        }
        ExpKind::Lam(..) => {
            let v = Closure::new(s.control.clone(), s.env.clone());
            match &s.kont {
                CmFrame::Mt(_) => vec![StepOutcome::Final(CmResult::Value(v))],
                CmFrame::Ar(_, e, env, a) => {
                    let u = policy.tick(&moment(&s.kont));
                    vec![next(e.clone(), env.clone(), s.store.clone(), CmFrame::Fn(Marks::new(), v, a.clone()), u)]
                }
                CmFrame::Fn(_, f, a) => {
                    let (x, body) = bind_var(&f.lam);
                    s.store
                        .frames(a)
                        .into_iter()
                        .map(|k| {
                            let m = Moment { site, time: &s.time, kont: &k, fresh };
                            let u = policy.tick(&m);
                            let b = policy.alloc_bind(x, &u, &m);
                            let store = s.store.alloc(b.clone(), CmStorable::Clo(v.clone()));
                            next(body.clone(), f.env.extend(x.clone(), b), store, k.clone(), u)
                        })
                        .collect()
                }
            }
        }
        _ => vec![StepOutcome::Stuck(format!("unsupported form {}", s.control))],
    }
}

/// The time-stamped CM* machine under a concrete policy.
#[derive(Clone, Debug, Default)]
pub struct CmStar<P> {
    pub policy: P,
    pub universe: PermSet,
}

impl<P: Policy> CmStar<P> {
    pub fn new(policy: P, universe: PermSet) -> Self {
        assert!(policy.is_concrete(), "the concrete machine needs a concrete policy");
        CmStar { policy, universe }
    }
}

impl<P: Policy> ConcreteMachine for CmStar<P> {
    type State = CmStarState;
    type Value = CmResult;

    fn inject(&self, e: &Exp) -> Result<CmStarState, InjectError> {
        inject(e, self.policy.initial_time())
    }

    fn step(&self, s: &CmStarState) -> StepOutcome<CmStarState, CmResult> {
        let mut outs = step(&self.policy, &self.universe, s);
        match outs.len() {
            0 => StepOutcome::Stuck(format!("no transition from {s}")),
            1 => {
                let out = outs.pop().unwrap();
                if let StepOutcome::Next(n) = &out {
                    assert!(s.time.precedes(&n.time), "tick must strictly advance time: {} then {}", s.time, n.time);
                }
                out
            }
            n => panic!("concrete CM* branched {n} ways at {s}"),
        }
    }
}

macro_rules! collect_marked {
    ($store:ty) => {
        impl Collect for MarkedState<$store> {
            fn roots(&self) -> BTreeSet<Addr> {
                let mut out = BTreeSet::new();
                live_exp(&self.control, &self.env, &mut out);
                self.kont.touches(&mut out);
                out
            }

            fn reachable(&self) -> BTreeSet<Addr> {
                gc_reachable(self.roots(), &self.store)
            }

            fn collect(&self) -> Self {
                MarkedState { store: self.store.restrict(&self.reachable()), ..self.clone() }
            }
        }
    };
}

collect_marked!(ConcreteStore<CmStorable>);
collect_marked!(AbstractStore<CmStorable>);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::Halt;
    use crate::policy::{Contours, TickKeyed};
    use crate::security::{ok, ok_star, Cm};
    use crate::syntax::{parse, perms};

    #[test]
    fn agrees_with_stack_machine() {
        let programs = [
            "(frame () (grant (p) ((lambda (f) (f (lambda (a) a))) (lambda (x) (test (p) x (lambda (b) b))))))",
            "((lambda (f) (frame () (f (lambda (a) a)))) (lambda (x) (test (p) x fail)))",
        ];
        for p in programs {
            let e = parse(p).unwrap();
            let cm = Cm::new(perms(["p"])).run_trace(&e, 500).unwrap();
            let star = CmStar::new(TickKeyed, perms(["p"])).run_trace(&e, 500).unwrap();
            assert_eq!(cm.states.len(), star.states.len());
            for (a, b) in cm.states.iter().zip(&star.states) {
                assert_eq!(a.control, b.control);
                let r = perms(["p"]);
                assert_eq!(ok(&r, &a.kont), ok_star(&r, &b.kont, &b.store));
            }
            let result = |h: &Halt<CmResult>| match h {
                Halt::Final(CmResult::Value(c)) => c.lam.to_string(),
                other => format!("{other:?}"),
            };
            assert_eq!(result(&cm.halt), result(&star.halt));
            let t = CmStar::new(Contours::unbounded(), perms(["p"])).run_trace(&e, 500).unwrap();
            assert_eq!(result(&t.halt), result(&cm.halt));
        }
    }
}
