//! Abstract garbage collection.
//!
//! [`Touches`] is the live-locations function `LL`: the addresses a value
//! refers to directly.  [`gc_reachable`] runs the grey/black machine to a
//! fixed point, resolving addresses through either kind of store, so the
//! concrete and abstract collectors are literally the same code.  A machine
//! collects deterministically after every step by wrapping it in
//! [`Collecting`].

use std::collections::BTreeSet;

use crate::analysis::AbstractState;
use crate::concrete::{CeskKont, CeskState, Kont, StarState, Storable, TimedState};
use crate::machine::{AbstractMachine, Closure, ConcreteMachine, Env, InjectError, StepOutcome};
use crate::store::{AbstractStore, Addr, ConcreteStore};
use crate::syntax::Exp;

/// Direct live locations.
pub trait Touches {
    fn touches(&self, out: &mut BTreeSet<Addr>);

    fn live(&self) -> BTreeSet<Addr> {
        let mut out = BTreeSet::new();
        self.touches(&mut out);
        out
    }
}

/// `LL(e, ρ) = rng(ρ|fv(e))`.
pub fn live_exp(e: &Exp, env: &Env, out: &mut BTreeSet<Addr>) {
    out.extend(env.range_of(e.free_vars()).cloned());
}

impl Touches for Closure {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        live_exp(&self.lam, &self.env, out)
    }
}

impl Touches for Kont {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        match self {
            Kont::Mt => {}
            Kont::Ar(e, env, a) => {
                out.insert(a.clone());
                live_exp(e, env, out);
            }
            Kont::Fn(c, a) => {
                out.insert(a.clone());
                c.touches(out);
            }
        }
    }
}

impl Touches for Storable {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        match self {
            Storable::Clo(c) => c.touches(out),
            Storable::Kont(k) => k.touches(out),
        }
    }
}

impl Touches for CeskKont {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        let mut k = self;
        loop {
            k = match k {
                CeskKont::Mt => return,
                CeskKont::Ar(e, env, next) => {
                    live_exp(e, env, out);
                    next
                }
                CeskKont::Fn(c, next) => {
                    c.touches(out);
                    next
                }
            }
        }
    }
}

/// Something addresses can be resolved through.
pub trait Heap {
    fn touches_at(&self, a: &Addr, out: &mut BTreeSet<Addr>);
}

impl<S: Touches + Clone> Heap for ConcreteStore<S> {
    fn touches_at(&self, a: &Addr, out: &mut BTreeSet<Addr>) {
        if let Some(s) = self.get(a) {
            s.touches(out)
        }
    }
}

impl<S: Touches + Ord + Clone> Heap for AbstractStore<S> {
    fn touches_at(&self, a: &Addr, out: &mut BTreeSet<Addr>) {
        for s in self.values(a) {
            s.touches(out)
        }
    }
}

/// The grey/black reachability machine: returns the black set.
pub fn gc_reachable(roots: BTreeSet<Addr>, heap: &impl Heap) -> BTreeSet<Addr> {
    let mut grey = roots;
    let mut black = BTreeSet::new();
    while let Some(a) = grey.pop_first() {
        let mut found = BTreeSet::new();
        heap.touches_at(&a, &mut found);
        black.insert(a);
        grey.extend(found.into_iter().filter(|b| !black.contains(b)));
    }
    black
}

/// States that can be garbage collected.
pub trait Collect: Sized {
    fn roots(&self) -> BTreeSet<Addr>;
    fn reachable(&self) -> BTreeSet<Addr>;
    /// The same state with its store restricted to reachable addresses.
    fn collect(&self) -> Self;
}

macro_rules! collect_cesk {
    ($ty:ty) => {
        impl Collect for $ty {
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
                let mut s = self.clone();
                s.store = self.store.restrict(&self.reachable());
                s
            }
        }
    };
}

collect_cesk!(CeskState);
collect_cesk!(StarState);
collect_cesk!(TimedState);
collect_cesk!(AbstractState);

/// A machine that collects garbage after every transition.
#[derive(Clone, Copy, Debug, Default)]
pub struct Collecting<M>(pub M);

impl<M: AbstractMachine> AbstractMachine for Collecting<M>
where
    M::State: Collect,
{
    type State = M::State;

    fn inject(&self, e: &Exp) -> Result<Self::State, InjectError> {
        self.0.inject(e).map(|s| s.collect())
    }

    fn step(&self, s: &Self::State) -> Vec<Self::State> {
        self.0.step(s).into_iter().map(|s| s.collect()).collect()
    }

    fn is_final(&self, s: &Self::State) -> bool {
        self.0.is_final(s)
    }
}

impl<M: ConcreteMachine> ConcreteMachine for Collecting<M>
where
    M::State: Collect,
{
    type State = M::State;
    type Value = M::Value;

    fn inject(&self, e: &Exp) -> Result<Self::State, InjectError> {
        self.0.inject(e).map(|s| s.collect())
    }

    fn step(&self, s: &Self::State) -> StepOutcome<Self::State, Self::Value> {
        match self.0.step(s) {
            StepOutcome::Next(n) => StepOutcome::Next(n.collect()),
            other => other,
        }
    }
}

impl<M: crate::analysis::Widen> crate::analysis::Widen for Collecting<M>
where
    M::State: Collect,
{
    type Context = M::Context;
    type Store = M::Store;

    fn split(&self, s: &Self::State) -> (Self::Context, Self::Store) {
        self.0.split(s)
    }

    fn assemble(&self, c: &Self::Context, store: &Self::Store) -> Self::State {
        self.0.assemble(c, store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::AbstractCesk;
    use crate::concrete::CeskStar;
    use crate::graph::explore;
    use crate::policy::Contours;
    use crate::store::MonoAddr;
    use crate::syntax::{parse, Var};

    const RETURN_FLOW: &str = "((lambda (f) ((lambda (d) (f (lambda (b) b))) (f (lambda (a) a)))) (lambda (x) x))";

    fn bx() -> Addr {
        Addr::Mono(MonoAddr::BindVar(Var::new("x")))
    }

    #[test]
    fn collection_keeps_only_reachable_entries() {
        let e = parse(RETURN_FLOW).unwrap();
        let t = Collecting(CeskStar).run_trace(&e, 1000).unwrap();
        for s in &t.states {
            assert_eq!(s.store.len(), s.reachable().len());
        }
        let plain = CeskStar.run_trace(&e, 1000).unwrap();
        assert_eq!(plain.final_value().unwrap().lam, t.final_value().unwrap().lam);
    }

    #[test]
    fn stale_binding_is_overwritten_not_joined() {
        let e = parse(RETURN_FLOW).unwrap();
        let machine = AbstractCesk::new(Contours::k_cfa(0));
        let with = explore(&Collecting(machine), &e).unwrap();
        let without = explore(&machine, &e).unwrap();
        let at_halt = |g: &crate::graph::StateGraph<AbstractState>| {
            g.final_predecessors().iter().fold(BTreeSet::new(), |mut acc, &i| {
                acc.extend(g.state(i).store.lookup_default(&bx()));
                acc
            })
        };
        assert_eq!(at_halt(&with).len(), 1);
        assert_eq!(at_halt(&without).len(), 2);
    }
}
