//! The abstract time-stamped CESK* machine (k-CFA and friends), its
//! abstraction map, the environment-free 0-CFA machine, and widening.

mod alpha;
mod simulation;
mod widen;
mod zero;

use std::fmt;

use crate::concrete::{Kont, Storable};
use crate::machine::{check_program, AbstractMachine, Closure, Env, InjectError};
use crate::policy::{Moment, Policy};
use crate::store::{AbstractStore, Time};
use crate::syntax::{Exp, ExpKind, CORE_FORMS};

pub use alpha::{abstraction_map, state_leq};
pub use simulation::{check_simulation, Counterexample};
pub use widen::{analyze_widened, Widen, WidenedSystem};
pub use zero::{project_zero, ZeroCfa, ZeroKont, ZeroState, ZeroStorable};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct AbstractState {
    pub control: Exp,
    pub env: Env,
    pub store: AbstractStore<Storable>,
    pub kont: Kont,
    pub time: Time,
}

/// Everything but the store, for widening.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Context {
    pub control: Exp,
    pub env: Env,
    pub kont: Kont,
    pub time: Time,
}

impl fmt::Display for AbstractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}, {}, {}>", self.control, self.env, self.kont, self.time)
    }
}

/// The abstract CESK*t machine under allocation policy `P`.
#[derive(Clone, Copy, Debug)]
pub struct AbstractCesk<P> {
    pub policy: P,
}

impl<P: Policy> AbstractCesk<P> {
    pub fn new(policy: P) -> Self {
        AbstractCesk { policy }
    }
}

impl<P: Policy> AbstractMachine for AbstractCesk<P> {
    type State = AbstractState;

    fn inject(&self, e: &Exp) -> Result<AbstractState, InjectError> {
        check_program(e, CORE_FORMS)?;
        Ok(AbstractState {
            control: e.clone(),
            env: Env::new(),
            store: AbstractStore::new(),
            kont: Kont::Mt,
            time: self.policy.initial_time(),
        })
    }

    fn step(&self, s: &AbstractState) -> Vec<AbstractState> {
        let site = s.control.label();
        let moment = |kont| Moment { site, time: &s.time, kont, fresh: 0 };
        match s.control.kind() {
            ExpKind::Ref(x) => {
                let Some(a) = s.env.get(x) else { return vec![] };
                let u = self.policy.tick(&moment(&s.kont));
                s.store
                    .values(a)
                    .filter_map(|v| match v {
                        Storable::Clo(c) => Some(AbstractState {
                            control: c.lam.clone(),
                            env: c.env.clone(),
                            store: s.store.clone(),
                            kont: s.kont.clone(),
                            time: u.clone(),
                        }),
                        Storable::Kont(_) => None,
                    })
                    .collect()
            }
            ExpKind::App(e0, e1) => {
                let m = moment(&s.kont);
                let u = self.policy.tick(&m);
                let a = self.policy.alloc_kont(site, &u, &m);
                vec![AbstractState {
                    control: e0.clone(),
                    env: s.env.clone(),
                    store: s.store.join_one(a.clone(), Storable::Kont(s.kont.clone())),
                    kont: Kont::Ar(e1.clone(), s.env.clone(), a),
                    time: u,
                }]
            }
            ExpKind::Lam(..) => match &s.kont {
                Kont::Mt => vec![],
                Kont::Ar(e, env, a) => {
                    let u = self.policy.tick(&moment(&s.kont));
                    vec![AbstractState {
                        control: e.clone(),
                        env: env.clone(),
                        store: s.store.clone(),
                        kont: Kont::Fn(Closure::new(s.control.clone(), s.env.clone()), a.clone()),
                        time: u,
                    }]
                }
                Kont::Fn(f, a) => {
                    let (x, body) = f.lam.as_lam().expect("closures hold lambdas");
                    let v = Storable::Clo(Closure::new(s.control.clone(), s.env.clone()));
                    s.store
                        .values(a)
                        .filter_map(|k| match k {
                            Storable::Kont(k) => Some(k),
                            Storable::Clo(_) => None,
                        })
                        .map(|k| {
                            let m = moment(k);
                            let u = self.policy.tick(&m);
                            let b = self.policy.alloc_bind(x, &u, &m);
                            AbstractState {
                                control: body.clone(),
                                env: f.env.extend(x.clone(), b.clone()),
                                store: s.store.join_one(b, v.clone()),
                                kont: k.clone(),
                                time: u,
                            }
                        })
                        .collect()
                }
            },
            _ => vec![],
        }
    }

    fn is_final(&self, s: &AbstractState) -> bool {
        s.control.is_lam() && s.kont == Kont::Mt
    }
}

impl<P: Policy> Widen for AbstractCesk<P> {
    type Context = Context;
    type Store = AbstractStore<Storable>;

    fn split(&self, s: &AbstractState) -> (Context, AbstractStore<Storable>) {
        (
            Context { control: s.control.clone(), env: s.env.clone(), kont: s.kont.clone(), time: s.time.clone() },
            s.store.clone(),
        )
    }

    fn assemble(&self, c: &Context, store: &AbstractStore<Storable>) -> AbstractState {
        AbstractState { control: c.control.clone(), env: c.env.clone(), store: store.clone(), kont: c.kont.clone(), time: c.time.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::explore;
    use crate::policy::Contours;
    use crate::store::{Addr, MonoAddr};
    use crate::syntax::{parse, Var};

    #[test]
    fn zero_cfa_finds_the_single_result() {
        let e = parse("((lambda (x) x) (lambda (y) y))").unwrap();
        let g = explore(&AbstractCesk::new(Contours::k_cfa(0)), &e).unwrap();
        let finals: Vec<String> = g.finals().map(|s| s.control.to_string()).collect();
        assert_eq!(finals, vec!["(lambda (y) y)"]);
        assert_eq!(g.len(), 5);
    }

    #[test]
    fn value_at_empty_continuation_has_no_successors() {
        let e = parse("(lambda (y) y)").unwrap();
        let m = AbstractCesk::new(Contours::k_cfa(1));
        let s = m.inject(&e).unwrap();
        assert!(m.step(&s).is_empty());
        assert!(m.is_final(&s));
    }

    #[test]
    fn monovariant_binding_merges_both_calls() {
        let e = parse("((lambda (f) ((f (lambda (a) a)) (f (lambda (b) b)))) (lambda (x) x))").unwrap();
        let g = explore(&AbstractCesk::new(Contours::k_cfa(0)), &e).unwrap();
        let bx = Addr::Mono(MonoAddr::BindVar(Var::new("x")));
        let joined = g.states().fold(AbstractStore::new(), |acc, s| acc.join_store(&s.store));
        assert_eq!(joined.lookup_default(&bx).len(), 2);
    }
}
