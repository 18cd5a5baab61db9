use std::collections::BTreeSet;
use std::fmt;

use crate::analysis::Widen;
use crate::gc::{gc_reachable, live_exp, Collect, Touches};
use crate::machine::{check_program, AbstractMachine, Env, InjectError};
use crate::policy::{Contours, Moment, Policy};
use crate::store::{AbstractStore, Addr, Time};
use crate::syntax::{Exp, ExpKind, CORE_FORMS};

use super::{operand, LkArg, LkFrame, LkStarState, LkStorable, Operand, Thunk, Variant};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct AbstractLkState {
    pub control: Exp,
    pub env: Env,
    pub store: AbstractStore<LkStorable>,
    pub kont: LkFrame,
    pub time: Time,
}

impl fmt::Display for AbstractLkState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}, {}, {}>", self.control, self.env, self.kont, self.time)
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct LkContext {
    pub control: Exp,
    pub env: Env,
    pub kont: LkFrame,
    pub time: Time,
}

/// The abstract lazy machine.  Thunk updates join, so a forced address may
/// hold both its delayed and its computed form and lookups explore both.
#[derive(Clone, Copy, Debug)]
pub struct AbstractLk<P> {
    pub policy: P,
    pub variant: Variant,
}

impl<P: Policy> AbstractLk<P> {
    pub fn new(policy: P, variant: Variant) -> Self {
        AbstractLk { policy, variant }
    }
}

fn frames<'a>(store: &'a AbstractStore<LkStorable>, c: &Addr) -> impl Iterator<Item = &'a LkFrame> {
    store.values(c).filter_map(|v| match v {
        LkStorable::Kont(k) => Some(k),
        LkStorable::Thunk(_) => None,
    })
}

impl<P: Policy> AbstractMachine for AbstractLk<P> {
    type State = AbstractLkState;

    fn inject(&self, e: &Exp) -> Result<AbstractLkState, InjectError> {
        check_program(e, CORE_FORMS)?;
        Ok(AbstractLkState {
            control: e.clone(),
            env: Env::new(),
            store: AbstractStore::new(),
            kont: LkFrame::Mt,
            time: self.policy.initial_time(),
        })
    }

    fn step(&self, s: &AbstractLkState) -> Vec<AbstractLkState> {
        let site = s.control.label();
        let moment = |kont| Moment { site, time: &s.time, kont, fresh: 0 };
        match s.control.kind() {
            ExpKind::Ref(x) => {
                let Some(a) = s.env.get(x) else { return vec![] };
                let m = moment(&s.kont);
                let u = self.policy.tick(&m);
                s.store
                    .values(a)
                    .filter_map(|v| match v {
                        LkStorable::Thunk(Thunk::Delayed(e, env)) => {
                            let c = self.policy.alloc_kont(site, &u, &m);
                            Some(AbstractLkState {
                                control: e.clone(),
                                env: env.clone(),
                                store: s.store.join_one(c.clone(), LkStorable::Kont(s.kont.clone())),
                                kont: LkFrame::Update(a.clone(), c),
                                time: u.clone(),
                            })
                        }
                        LkStorable::Thunk(Thunk::Computed(v, env)) => Some(AbstractLkState {
                            control: v.clone(),
                            env: env.clone(),
                            store: s.store.clone(),
                            kont: s.kont.clone(),
                            time: u.clone(),
                        }),
                        LkStorable::Kont(_) => None,
                    })
                    .collect()
            }
            ExpKind::App(e0, e1) => {
                let m = moment(&s.kont);
                let u = self.policy.tick(&m);
                let mut store = s.store.clone();
                let mut thunk = |t: Thunk| {
                    let a = self.policy.alloc_kont(e1.label(), &u, &m);
                    store = store.join_one(a.clone(), LkStorable::Thunk(t));
                    LkArg::Addr(a)
                };
                let arg = match operand(self.variant, e1, &s.env) {
                    Operand::Delay => thunk(Thunk::Delayed(e1.clone(), s.env.clone())),
                    Operand::Value => thunk(Thunk::Computed(e1.clone(), s.env.clone())),
                    Operand::Share(a) => LkArg::Addr(a.clone()),
                    Operand::Defer => LkArg::Deferred(e1.clone(), s.env.clone()),
                };
                let c = self.policy.alloc_kont(site, &u, &m);
                vec![AbstractLkState {
                    control: e0.clone(),
                    env: s.env.clone(),
                    store: store.join_one(c.clone(), LkStorable::Kont(s.kont.clone())),
                    kont: LkFrame::Apply(arg, c),
                    time: u,
                }]
            }
            ExpKind::Lam(x, body) => match &s.kont {
                LkFrame::Mt => vec![],
                LkFrame::Update(a, c) => {
                    let store = s.store.join_one(a.clone(), LkStorable::Thunk(Thunk::Computed(s.control.clone(), s.env.clone())));
                    frames(&s.store, c)
                        .map(|k| AbstractLkState {
                            control: s.control.clone(),
                            env: s.env.clone(),
                            store: store.clone(),
                            kont: k.clone(),
                            time: self.policy.tick(&moment(k)),
                        })
                        .collect()
                }
                LkFrame::Apply(arg, c) => frames(&s.store, c)
                    .map(|k| {
                        let m = moment(k);
                        let u = self.policy.tick(&m);
                        let (a, store) = match arg {
                            LkArg::Addr(a) => (a.clone(), s.store.clone()),
                            LkArg::Deferred(e, env) => {
                                let b = self.policy.alloc_kont(e.label(), &u, &m);
                                (b.clone(), s.store.join_one(b, LkStorable::Thunk(Thunk::Delayed(e.clone(), env.clone()))))
                            }
                        };
                        AbstractLkState { control: body.clone(), env: s.env.extend(x.clone(), a), store, kont: k.clone(), time: u }
                    })
                    .collect(),
            },
            _ => vec![],
        }
    }

    fn is_final(&self, s: &AbstractLkState) -> bool {
        s.control.is_lam() && s.kont == LkFrame::Mt
    }
}

impl<P: Policy> Widen for AbstractLk<P> {
    type Context = LkContext;
    type Store = AbstractStore<LkStorable>;

    fn split(&self, s: &AbstractLkState) -> (LkContext, AbstractStore<LkStorable>) {
        (
            LkContext { control: s.control.clone(), env: s.env.clone(), kont: s.kont.clone(), time: s.time.clone() },
            s.store.clone(),
        )
    }

    fn assemble(&self, c: &LkContext, store: &AbstractStore<LkStorable>) -> AbstractLkState {
        AbstractLkState { control: c.control.clone(), env: c.env.clone(), store: store.clone(), kont: c.kont.clone(), time: c.time.clone() }
    }
}

impl Collect for AbstractLkState {
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
        AbstractLkState { store: self.store.restrict(&self.reachable()), ..self.clone() }
    }
}

/// Truncates every contour of a concrete contour-keyed state to `target`'s
/// bound.
pub fn abstraction_map(target: &Contours, s: &LkStarState) -> AbstractLkState {
    let mut addr = |a: &Addr| target.abstract_addr(a);
    AbstractLkState {
        control: s.control.clone(),
        env: s.env.map_addrs(&mut addr),
        store: s.store.iter().map(|(a, v)| (target.abstract_addr(a), v.map_addrs(&mut addr))).collect(),
        kont: s.kont.map_addrs(&mut addr),
        time: target.abstract_time(&s.time),
    }
}

pub fn state_leq(a: &AbstractLkState, b: &AbstractLkState) -> bool {
    a.control == b.control && a.env == b.env && a.kont == b.kont && a.time == b.time && a.store.leq_store(&b.store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::check_simulation;
    use crate::gc::Collecting;
    use crate::graph::explore;
    use crate::lazy::LkStarT;
    use crate::machine::ConcreteMachine;
    use crate::syntax::parse;

    const PROGRAM: &str = "((lambda (f) ((lambda (g) (g (f g))) f)) (lambda (y) y))";

    #[test]
    fn abstract_run_covers_concrete_run() {
        let e = parse(PROGRAM).unwrap();
        for v in Variant::ALL {
            for k in 0..=2 {
                let target = Contours::k_cfa(k);
                let trace = LkStarT::new(Contours::unbounded(), v).run_trace(&e, 1000).unwrap();
                let g = explore(&AbstractLk::new(target, v), &e).unwrap();
                let alpha = |s: &LkStarState| abstraction_map(&target, s);
                check_simulation(&trace.states, &g, alpha, state_leq).unwrap();
                assert!(g.finals().any(|s| s.control.to_string() == "(lambda (y) y)"));
            }
        }
    }

    #[test]
    fn collecting_keeps_the_result() {
        let e = parse(PROGRAM).unwrap();
        let m = AbstractLk::new(Contours::k_cfa(0), Variant::Standard);
        let plain = explore(&m, &e).unwrap();
        let gc = explore(&Collecting(m), &e).unwrap();
        assert!(gc.len() <= plain.len());
        assert!(gc.finals().any(|s| s.control.to_string() == "(lambda (y) y)"));
    }
}
