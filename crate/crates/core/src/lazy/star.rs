use std::collections::BTreeSet;

use crate::gc::{gc_reachable, live_exp, Collect, Touches};
use crate::machine::{check_program, Closure, ConcreteMachine, Env, InjectError, StepOutcome};
use crate::policy::{Moment, Policy};
use crate::store::{Addr, ConcreteStore, Time};
use crate::syntax::{Exp, ExpKind, CORE_FORMS};

use super::{operand, CanonFrame, Canonical, Canonicalizer, LkArg, LkFrame, LkStorable, Operand, Thunk, Variant};

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct LkStarState {
    pub control: Exp,
    pub env: Env,
    pub store: ConcreteStore<LkStorable>,
    pub kont: LkFrame,
    pub time: Time,
}

impl LkStarState {
    pub fn canonical(&self) -> Canonical {
        let thunk = |a: &Addr| match self.store.lookup(a).expect("well-formed LK* state") {
            LkStorable::Thunk(t) => t.clone(),
            LkStorable::Kont(_) => panic!("{a} holds a frame, not a thunk"),
        };
        let c = Canonicalizer(thunk);
        let mut kont = Vec::new();
        let mut k = self.kont.clone();
        loop {
            let tail = match &k {
                LkFrame::Mt => break,
                LkFrame::Update(a, tail) => {
                    kont.push(CanonFrame::Update(c.addr(a)));
                    tail
                }
                LkFrame::Apply(arg, tail) => {
                    kont.push(c.arg(arg));
                    tail
                }
            };
            k = match self.store.lookup(tail).expect("well-formed LK* state") {
                LkStorable::Kont(next) => next.clone(),
                LkStorable::Thunk(_) => panic!("{tail} holds a thunk, not a frame"),
            };
        }
        Canonical { control: self.control.clone(), env: c.env(&self.env), kont }
    }
}

impl Collect for LkStarState {
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
        LkStarState { store: self.store.restrict(&self.reachable()), ..self.clone() }
    }
}

/// The time-stamped lazy machine with store-allocated frames.  Like
/// [`crate::concrete::CeskStarT`] it asserts freshness and monotone time, and
/// additionally that no thunk is written twice.
#[derive(Clone, Copy, Debug, Default)]
pub struct LkStarT<P> {
    pub policy: P,
    pub variant: Variant,
}

impl<P: Policy> LkStarT<P> {
    pub fn new(policy: P, variant: Variant) -> Self {
        assert!(policy.is_concrete(), "the concrete machine needs a concrete policy");
        LkStarT { policy, variant }
    }

    fn tick(&self, s: &LkStarState, kont: &LkFrame) -> (Time, u64) {
        let fresh = s.store.next_fresh();
        let m = Moment { site: s.control.label(), time: &s.time, kont, fresh };
        let u = self.policy.tick(&m);
        assert!(s.time.precedes(&u), "tick must strictly advance time: {} then {}", s.time, u);
        (u, fresh)
    }

    /// Allocation number `nth` within one transition.
    fn alloc(&self, s: &LkStarState, kont: &LkFrame, fresh: u64, nth: u64, f: impl FnOnce(&Moment<'_, LkFrame>) -> Addr) -> Addr {
        let m = Moment { site: s.control.label(), time: &s.time, kont, fresh: fresh + nth };
        let a = f(&m);
        assert!(!s.store.contains(&a), "allocation returned a live address {a}");
        a
    }

    fn frame(&self, s: &LkStarState, c: &Addr) -> Result<LkFrame, String> {
        match s.store.lookup(c) {
            Ok(LkStorable::Kont(k)) => Ok(k.clone()),
            Ok(LkStorable::Thunk(_)) => Err(format!("{c} holds a thunk, not a frame")),
            Err(e) => Err(e.to_string()),
        }
    }
}

impl<P: Policy> ConcreteMachine for LkStarT<P> {
    type State = LkStarState;
    type Value = Closure;

    fn inject(&self, e: &Exp) -> Result<LkStarState, InjectError> {
        check_program(e, CORE_FORMS)?;
        Ok(LkStarState {
            control: e.clone(),
            env: Env::new(),
            store: ConcreteStore::new(),
            kont: LkFrame::Mt,
            time: self.policy.initial_time(),
        })
    }

    fn step(&self, s: &LkStarState) -> StepOutcome<LkStarState, Closure> {
        let site = s.control.label();
        match s.control.kind() {
            ExpKind::Ref(x) => {
                let Some(a) = s.env.get(x) else {
                    return StepOutcome::Stuck(format!("unbound variable {x}"));
                };
                match s.store.lookup(a) {
                    Ok(LkStorable::Thunk(Thunk::Delayed(e, env))) => {
                        let (u, fresh) = self.tick(s, &s.kont);
                        let c = self.alloc(s, &s.kont, fresh, 0, |m| self.policy.alloc_kont(site, &u, m));
                        StepOutcome::Next(LkStarState {
                            control: e.clone(),
                            env: env.clone(),
                            store: s.store.insert(c.clone(), LkStorable::Kont(s.kont.clone())),
                            kont: LkFrame::Update(a.clone(), c),
                            time: u,
                        })
                    }
                    Ok(LkStorable::Thunk(Thunk::Computed(v, env))) => {
                        let (u, _) = self.tick(s, &s.kont);
                        StepOutcome::Next(LkStarState {
                            control: v.clone(),
                            env: env.clone(),
                            store: s.store.clone(),
                            kont: s.kont.clone(),
                            time: u,
                        })
                    }
                    Ok(LkStorable::Kont(_)) => StepOutcome::Stuck(format!("{a} holds a frame, not a thunk")),
                    Err(e) => StepOutcome::Stuck(e.to_string()),
                }
            }
            ExpKind::App(e0, e1) => {
                let (u, fresh) = self.tick(s, &s.kont);
                let mut store = s.store.clone();
                let mut n = 0;
                let mut thunk = |t: Thunk, store: &mut ConcreteStore<LkStorable>| {
                    let a = self.alloc(s, &s.kont, fresh, 0, |m| self.policy.alloc_kont(e1.label(), &u, m));
                    n = 1;
                    *store = store.insert(a.clone(), LkStorable::Thunk(t));
                    LkArg::Addr(a)
                };
                let arg = match operand(self.variant, e1, &s.env) {
                    Operand::Delay => thunk(Thunk::Delayed(e1.clone(), s.env.clone()), &mut store),
                    Operand::Value => thunk(Thunk::Computed(e1.clone(), s.env.clone()), &mut store),
                    Operand::Share(a) => LkArg::Addr(a.clone()),
                    Operand::Defer => LkArg::Deferred(e1.clone(), s.env.clone()),
                };
                let c = self.alloc(s, &s.kont, fresh, n, |m| self.policy.alloc_kont(site, &u, m));
                assert!(!matches!(&arg, LkArg::Addr(a) if *a == c), "allocation returned a live address {c}");
                StepOutcome::Next(LkStarState {
                    control: e0.clone(),
                    env: s.env.clone(),
                    store: store.insert(c.clone(), LkStorable::Kont(s.kont.clone())),
                    kont: LkFrame::Apply(arg, c),
                    time: u,
                })
            }
            ExpKind::Lam(x, body) => {
                let (arg, update, c) = match &s.kont {
                    LkFrame::Mt => return StepOutcome::Final(Closure::new(s.control.clone(), s.env.clone())),
                    LkFrame::Update(a, c) => (None, Some(a), c),
                    LkFrame::Apply(arg, c) => (Some(arg), None, c),
                };
                let k = match self.frame(s, c) {
                    Ok(k) => k,
                    Err(r) => return StepOutcome::Stuck(r),
                };
                let (u, fresh) = self.tick(s, &k);
                if let Some(a) = update {
                    assert!(matches!(s.store.get(a), Some(LkStorable::Thunk(Thunk::Delayed(..)))), "thunk {a} updated twice");
                    return StepOutcome::Next(LkStarState {
                        control: s.control.clone(),
                        env: s.env.clone(),
                        store: s.store.insert(a.clone(), LkStorable::Thunk(Thunk::Computed(s.control.clone(), s.env.clone()))),
                        kont: k,
                        time: u,
                    });
                }
                let (a, store) = match arg.expect("apply frame") {
                    LkArg::Addr(a) => (a.clone(), s.store.clone()),
                    LkArg::Deferred(e, env) => {
                        let b = self.alloc(s, &k, fresh, 0, |m| self.policy.alloc_kont(e.label(), &u, m));
                        let store = s.store.insert(b.clone(), LkStorable::Thunk(Thunk::Delayed(e.clone(), env.clone())));
                        (b, store)
                    }
                };
                StepOutcome::Next(LkStarState { control: body.clone(), env: s.env.extend(x.clone(), a), store, kont: k, time: u })
            }
            _ => StepOutcome::Stuck(format!("unsupported form {}", s.control)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lazy::Lk;
    use crate::policy::{Contours, Counter, TickKeyed};
    use crate::syntax::parse;

    #[test]
    fn lock_step_with_stack_machine() {
        let e = parse("((lambda (f) ((lambda (g) (g (f g))) f)) (lambda (y) y))").unwrap();
        for v in super::super::Variant::ALL {
            let lk = Lk::new(v).run_trace(&e, 500).unwrap();
            let star = LkStarT::new(TickKeyed, v).run_trace(&e, 500).unwrap();
            assert_eq!(lk.states.len(), star.states.len());
            for (a, b) in lk.states.iter().zip(&star.states) {
                assert_eq!(a.canonical(), b.canonical());
            }
        }
    }

    #[test]
    fn counter_policy_handles_two_allocations_per_step() {
        let e = parse("((lambda (f) (f f)) (lambda (y) y))").unwrap();
        let t = LkStarT::new(Counter, Variant::Standard).run_trace(&e, 100).unwrap();
        assert_eq!(t.final_value().unwrap().lam.to_string(), "(lambda (y) y)");
        let t = LkStarT::new(Contours::unbounded(), Variant::Postponed).run_trace(&e, 100).unwrap();
        assert!(t.final_value().is_some());
    }
}
