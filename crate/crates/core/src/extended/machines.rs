use std::collections::BTreeSet;

use crate::analysis::Widen;
use crate::gc::{gc_reachable, Collect};
use crate::machine::{check_program, AbstractMachine, ConcreteMachine, Env, InjectError, StepOutcome};
use crate::policy::{Contours, Policy};
use crate::store::{AbstractStore, Addr, ConcreteStore, Time};
use crate::syntax::{Exp, EXTENDED_FORMS};

use super::rules::{self, ExtHeap};
use super::{Control, ExtKont, ExtState, ExtStorable, ExtValue, Handler};

pub type ConcreteExtState = ExtState<ConcreteStore<ExtStorable>>;
pub type AbstractExtState = ExtState<AbstractStore<ExtStorable>>;

impl ExtHeap for ConcreteStore<ExtStorable> {
    fn read(&self, a: &Addr) -> Vec<ExtStorable> {
        self.get(a).cloned().into_iter().collect()
    }

    fn alloc(&self, a: Addr, v: ExtStorable) -> Self {
        assert!(!self.contains(&a), "allocation returned a live address {a}");
        self.insert(a, v)
    }

    fn update(&self, a: Addr, v: ExtStorable) -> Self {
        self.insert(a, v)
    }

    fn next_fresh(&self) -> u64 {
        ConcreteStore::next_fresh(self)
    }
}

impl ExtHeap for AbstractStore<ExtStorable> {
    fn read(&self, a: &Addr) -> Vec<ExtStorable> {
        self.values(a).cloned().collect()
    }

    fn alloc(&self, a: Addr, v: ExtStorable) -> Self {
        self.join_one(a, v)
    }

    fn update(&self, a: Addr, v: ExtStorable) -> Self {
        self.join_one(a, v)
    }

    fn next_fresh(&self) -> u64 {
        0
    }
}

fn inject<H: Default>(e: &Exp, time: Time) -> Result<ExtState<H>, InjectError> {
    check_program(e, EXTENDED_FORMS)?;
    Ok(ExtState {
        control: Control::Exp(e.clone()),
        env: Env::new(),
        store: H::default(),
        handler: Handler::Mt,
        kont: ExtKont::Mt,
        time,
    })
}

/// The concrete CESHK*t machine under a concrete policy.
#[derive(Clone, Copy, Debug, Default)]
pub struct Ceshk<P> {
    pub policy: P,
}

impl<P: Policy> Ceshk<P> {
    pub fn new(policy: P) -> Self {
        assert!(policy.is_concrete(), "the concrete machine needs a concrete policy");
        Ceshk { policy }
    }
}

impl<P: Policy> ConcreteMachine for Ceshk<P> {
    type State = ConcreteExtState;
    type Value = ExtValue;

    fn inject(&self, e: &Exp) -> Result<ConcreteExtState, InjectError> {
        inject(e, self.policy.initial_time())
    }

    fn step(&self, s: &ConcreteExtState) -> StepOutcome<ConcreteExtState, ExtValue> {
        let mut outs = rules::step(&self.policy, s);
        match outs.len() {
            0 => StepOutcome::Stuck(format!("no transition from {s}")),
            1 => {
                let out = outs.pop().unwrap();
                if let StepOutcome::Next(n) = &out {
                    assert!(s.time.precedes(&n.time), "tick must strictly advance time: {} then {}", s.time, n.time);
                }
                out
            }
            n => panic!("concrete extended machine branched {n} ways at {s}"),
        }
    }
}

/// The abstract CESHK*t machine: every write joins.
#[derive(Clone, Copy, Debug)]
pub struct AbstractCeshk<P> {
    pub policy: P,
}

impl<P: Policy> AbstractCeshk<P> {
    pub fn new(policy: P) -> Self {
        AbstractCeshk { policy }
    }
}

impl<P: Policy> AbstractMachine for AbstractCeshk<P> {
    type State = AbstractExtState;

    fn inject(&self, e: &Exp) -> Result<AbstractExtState, InjectError> {
        inject(e, self.policy.initial_time())
    }

    fn step(&self, s: &AbstractExtState) -> Vec<AbstractExtState> {
        rules::step(&self.policy, s)
            .into_iter()
            .filter_map(|o| match o {
                StepOutcome::Next(n) => Some(n),
                _ => None,
            })
            .collect()
    }

    fn is_final(&self, s: &AbstractExtState) -> bool {
        s.kont == ExtKont::Mt && s.handler == Handler::Mt && s.control.value(&s.env).is_some()
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ExtContext {
    pub control: Control,
    pub env: Env,
    pub handler: Handler,
    pub kont: ExtKont,
    pub time: Time,
}

impl<P: Policy> Widen for AbstractCeshk<P> {
    type Context = ExtContext;
    type Store = AbstractStore<ExtStorable>;

    fn split(&self, s: &AbstractExtState) -> (ExtContext, AbstractStore<ExtStorable>) {
        (
            ExtContext {
                control: s.control.clone(),
                env: s.env.clone(),
                handler: s.handler.clone(),
                kont: s.kont.clone(),
                time: s.time.clone(),
            },
            s.store.clone(),
        )
    }

    fn assemble(&self, c: &ExtContext, store: &AbstractStore<ExtStorable>) -> AbstractExtState {
        ExtState {
            control: c.control.clone(),
            env: c.env.clone(),
            store: store.clone(),
            handler: c.handler.clone(),
            kont: c.kont.clone(),
            time: c.time.clone(),
        }
    }
}

macro_rules! collect_ext {
    ($store:ty) => {
        impl Collect for ExtState<$store> {
            fn roots(&self) -> BTreeSet<Addr> {
                ExtState::roots(self)
            }

            fn reachable(&self) -> BTreeSet<Addr> {
                gc_reachable(self.roots(), &self.store)
            }

            fn collect(&self) -> Self {
                ExtState { store: self.store.restrict(&self.reachable()), ..self.clone() }
            }
        }
    };
}

collect_ext!(ConcreteStore<ExtStorable>);
collect_ext!(AbstractStore<ExtStorable>);

/// Truncates every contour of a concrete contour-keyed state to `target`'s
/// bound, joining colliding store entries.
pub fn abstraction_map(target: &Contours, s: &ConcreteExtState) -> AbstractExtState {
    let mut addr = |a: &Addr| target.abstract_addr(a);
    let control = match &s.control {
        Control::Value(v) => Control::Value(v.map_addrs(&mut addr)),
        c => c.clone(),
    };
    ExtState {
        control,
        env: s.env.map_addrs(&mut addr),
        store: s.store.iter().map(|(a, v)| (target.abstract_addr(a), v.map_addrs(&mut addr))).collect(),
        handler: s.handler.map_addrs(&mut addr),
        kont: s.kont.map_addrs(&mut addr),
        time: target.abstract_time(&s.time),
    }
}

pub fn state_leq(a: &AbstractExtState, b: &AbstractExtState) -> bool {
    a.control == b.control
        && a.env == b.env
        && a.handler == b.handler
        && a.kont == b.kont
        && a.time == b.time
        && a.store.leq_store(&b.store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::check_simulation;
    use crate::graph::explore;
    use crate::machine::Halt;
    use crate::policy::{Counter, TickKeyed};
    use crate::store::MonoAddr;
    use crate::syntax::{parse, Var};

    const IF_FALSE: &str = "(if #f (lambda (a) a) (lambda (b) b))";
    const SET: &str = "((lambda (x) (set! x (lambda (b) b))) (lambda (a) a))";
    const CALLCC: &str = "((lambda (t) t) (callcc (lambda (k) ((k (lambda (a) a)) (lambda (b) b)))))";
    const CATCH: &str = "(catch ((lambda (x) (throw (lambda (a) a))) (lambda (b) b)) (lambda (y) y))";

    fn result(program: &str) -> String {
        let e = parse(program).unwrap();
        let t = Ceshk::new(TickKeyed).run_trace(&e, 1000).unwrap();
        match t.halt {
            Halt::Final(v) => v.lam().expect("closure result").to_string(),
            other => panic!("{program}: {other:?}"),
        }
    }

    #[test]
    fn fixtures() {
        assert_eq!(result(IF_FALSE), "(lambda (b) b)");
        assert_eq!(result(SET), "(lambda (a) a)");
        assert_eq!(result(CALLCC), "(lambda (a) a)");
        assert_eq!(result(CATCH), "(lambda (a) a)");
    }

    #[test]
    fn set_overwrites_and_returns_the_old_value() {
        let e = parse(SET).unwrap();
        let t = Ceshk::new(Counter).run_trace(&e, 100).unwrap();
        let last = t.states.last().unwrap();
        let x = last.store.iter().find_map(|(_, v)| match v {
            ExtStorable::Val(ExtValue::Clo(c)) => Some(c.lam.to_string()),
            _ => None,
        });
        assert_eq!(x.as_deref(), Some("(lambda (b) b)"));
    }

    #[test]
    fn uncaught_throw_is_stuck() {
        let e = parse("(throw (lambda (a) a))").unwrap();
        let t = Ceshk::new(TickKeyed).run_trace(&e, 100).unwrap();
        assert!(matches!(t.halt, Halt::Stuck(_)));
        let g = explore(&AbstractCeshk::new(Contours::k_cfa(0)), &e).unwrap();
        assert_eq!(g.finals().count(), 0);
    }

    #[test]
    fn abstract_set_joins() {
        let e = parse("((lambda (x) ((lambda (d) (set! x (lambda (c) c))) (set! x (lambda (b) b)))) (lambda (a) a))").unwrap();
        let g = explore(&AbstractCeshk::new(Contours::k_cfa(0)), &e).unwrap();
        let bx = Addr::Mono(MonoAddr::BindVar(Var::new("x")));
        let joined = g.states().fold(AbstractStore::new(), |acc, s| acc.join_store(&s.store));
        assert_eq!(joined.lookup_default(&bx).len(), 3);
    }

    #[test]
    fn abstract_runs_cover_the_fixtures() {
        for p in [IF_FALSE, SET, CALLCC, CATCH] {
            let e = parse(p).unwrap();
            let trace = Ceshk::new(Contours::unbounded()).run_trace(&e, 1000).unwrap();
            for k in 0..=1 {
                let target = Contours::k_cfa(k);
                let g = explore(&AbstractCeshk::new(target), &e).unwrap();
                check_simulation(&trace.states, &g, |s| abstraction_map(&target, s), state_leq).unwrap();
            }
        }
    }
}
