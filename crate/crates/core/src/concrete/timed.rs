use crate::machine::{check_program, Closure, ConcreteMachine, Env, InjectError, StepOutcome};
use crate::policy::{Moment, Policy};
use crate::store::{Addr, ConcreteStore, Time};
use crate::syntax::{Exp, ExpKind, CORE_FORMS};

use super::star::{lookup_clo, lookup_kont, Kont, StarState, Storable};

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct TimedState {
    pub control: Exp,
    pub env: Env,
    pub store: ConcreteStore<Storable>,
    pub kont: Kont,
    pub time: Time,
}

impl TimedState {
    /// Forgets the clock.
    pub fn erase_time(&self) -> StarState {
        StarState { control: self.control.clone(), env: self.env.clone(), store: self.store.clone(), kont: self.kont.clone() }
    }
}

/// The time-stamped CESK* machine.  `P` must be a concrete policy; the
/// machine asserts that time strictly advances and that every allocated
/// address is fresh.
#[derive(Clone, Copy, Debug, Default)]
pub struct CeskStarT<P> {
    pub policy: P,
}

impl<P: Policy> CeskStarT<P> {
    pub fn new(policy: P) -> Self {
        assert!(policy.is_concrete(), "the concrete machine needs a concrete policy");
        CeskStarT { policy }
    }

    fn tick(&self, s: &TimedState, kont: &Kont) -> (Time, u64) {
        let fresh = s.store.next_fresh();
        let m = Moment { site: s.control.label(), time: &s.time, kont, fresh };
        let u = self.policy.tick(&m);
        assert!(s.time.precedes(&u), "tick must strictly advance time: {} then {}", s.time, u);
        (u, fresh)
    }

    fn fresh(&self, s: &TimedState, a: Addr) -> Addr {
        assert!(!s.store.contains(&a), "allocation returned a live address {a}");
        a
    }
}

impl<P: Policy> ConcreteMachine for CeskStarT<P> {
    type State = TimedState;
    type Value = Closure;

    fn inject(&self, e: &Exp) -> Result<TimedState, InjectError> {
        check_program(e, CORE_FORMS)?;
        Ok(TimedState {
            control: e.clone(),
            env: Env::new(),
            store: ConcreteStore::new(),
            kont: Kont::Mt,
            time: self.policy.initial_time(),
        })
    }

    fn step(&self, s: &TimedState) -> StepOutcome<TimedState, Closure> {
        match s.control.kind() {
            ExpKind::Ref(x) => {
                let Some(a) = s.env.get(x) else {
                    return StepOutcome::Stuck(format!("unbound variable {x}"));
                };
                match lookup_clo(&s.store, a) {
                    Ok(c) => {
                        let (u, _) = self.tick(s, &s.kont);
                        StepOutcome::Next(TimedState { control: c.lam, env: c.env, store: s.store.clone(), kont: s.kont.clone(), time: u })
                    }
                    Err(r) => StepOutcome::Stuck(r),
                }
            }
            ExpKind::App(e0, e1) => {
                let (u, fresh) = self.tick(s, &s.kont);
                let m = Moment { site: s.control.label(), time: &s.time, kont: &s.kont, fresh };
                let a = self.fresh(s, self.policy.alloc_kont(s.control.label(), &u, &m));
                StepOutcome::Next(TimedState {
                    control: e0.clone(),
                    env: s.env.clone(),
                    store: s.store.insert(a.clone(), Storable::Kont(s.kont.clone())),
                    kont: Kont::Ar(e1.clone(), s.env.clone(), a),
                    time: u,
                })
            }
            ExpKind::Lam(..) => {
                let v = Closure::new(s.control.clone(), s.env.clone());
                match &s.kont {
                    Kont::Mt => StepOutcome::Final(v),
                    Kont::Ar(e, env, a) => {
                        let (u, _) = self.tick(s, &s.kont);
                        StepOutcome::Next(TimedState {
                            control: e.clone(),
                            env: env.clone(),
                            store: s.store.clone(),
                            kont: Kont::Fn(v, a.clone()),
                            time: u,
                        })
                    }
                    Kont::Fn(f, a) => {
                        let k = match lookup_kont(&s.store, a) {
                            Ok(k) => k,
                            Err(r) => return StepOutcome::Stuck(r),
                        };
                        let (x, body) = f.lam.as_lam().expect("closures hold lambdas");
                        let (u, fresh) = self.tick(s, &k);
                        let m = Moment { site: s.control.label(), time: &s.time, kont: &k, fresh };
                        let b = self.fresh(s, self.policy.alloc_bind(x, &u, &m));
                        StepOutcome::Next(TimedState {
                            control: body.clone(),
                            env: f.env.extend(x.clone(), b.clone()),
                            store: s.store.insert(b, Storable::Clo(v)),
                            kont: k,
                            time: u,
                        })
                    }
                }
            }
            _ => StepOutcome::Stuck(format!("unsupported form {}", s.control)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Contours, Counter, TickKeyed};
    use crate::syntax::{parse, Var};

    const ID_ID: &str = "((lambda (x) x) (lambda (y) y))";

    #[test]
    fn counter_policy_matches_untimed_machine() {
        let e = parse(ID_ID).unwrap();
        let timed = CeskStarT::new(Counter).run_trace(&e, 100).unwrap();
        let star = super::super::CeskStar.run_trace(&e, 100).unwrap();
        let erased: Vec<_> = timed.states.iter().map(TimedState::erase_time).collect();
        assert_eq!(erased, star.states);
    }

    #[test]
    fn time_keyed_binding_uses_next_tick() {
        let e = parse(ID_ID).unwrap();
        let t = CeskStarT::new(TickKeyed).run_trace(&e, 100).unwrap();
        // app (t=1), push fn (t=2), bind x at t=3
        assert_eq!(t.states[3].env.get(&Var::new("x")), Some(&Addr::Bind(Var::new("x"), Time::Tick(3))));
    }

    #[test]
    fn unbounded_contours_are_fresh() {
        let e = parse("((lambda (f) ((f (lambda (a) a)) (f (lambda (b) b)))) (lambda (x) x))").unwrap();
        let t = CeskStarT::new(Contours::unbounded()).run_trace(&e, 1000).unwrap();
        assert!(t.final_value().is_some());
    }
}
