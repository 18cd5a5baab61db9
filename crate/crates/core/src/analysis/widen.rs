use std::collections::BTreeSet;
use std::hash::Hash;

use indexmap::IndexSet;

use crate::machine::{AbstractMachine, InjectError};
use crate::store::Lattice;
use crate::syntax::Exp;

/// Machines whose states split into a store-free context and a store.
pub trait Widen: AbstractMachine {
    type Context: Clone + Eq + Hash + Ord + Send + Sync;
    type Store: Lattice + Clone + Eq;

    fn split(&self, s: &Self::State) -> (Self::Context, Self::Store);
    fn assemble(&self, c: &Self::Context, store: &Self::Store) -> Self::State;
}

/// The least fixed point of the single-threaded-store iteration.
#[derive(Clone, Debug)]
pub struct WidenedSystem<C: Hash + Eq, S> {
    /// Contexts in discovery order; the first is the initial one.
    pub contexts: IndexSet<C>,
    pub store: S,
    /// Context-to-context transitions under the final store.
    pub edges: Vec<(usize, usize)>,
    /// Applications of the iteration function, including the last one that
    /// confirmed the fixed point.
    pub iterations: usize,
}

impl<C: Hash + Eq, S> WidenedSystem<C, S> {
    pub fn initial(&self) -> usize {
        0
    }
}

/// Iterates `f(C, σ) = (C ∪ {c'} ∪ {c₀}, σ ⊔ ⨆σ')` over every transition
/// `(c, σ) ↦ (c', σ')` from the bottom system until nothing changes.
pub fn analyze_widened<M: Widen>(m: &M, e: &Exp) -> Result<WidenedSystem<M::Context, M::Store>, InjectError> {
    let (c0, s0) = m.split(&m.inject(e)?);
    let mut contexts: IndexSet<M::Context> = IndexSet::new();
    let mut store = M::Store::bottom();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut next_contexts = contexts.clone();
        let mut next_store = store.join(&s0);
        next_contexts.insert(c0.clone());
        for c in contexts.iter() {
            for succ in m.step(&m.assemble(c, &store)) {
                let (c2, s2) = m.split(&succ);
                next_contexts.insert(c2);
                next_store = next_store.join(&s2);
            }
        }
        let same = next_contexts.len() == contexts.len() && next_store.leq(&store);
        contexts = next_contexts;
        store = next_store;
        if same {
            break;
        }
    }
    let mut edges = BTreeSet::new();
    for (i, c) in contexts.iter().enumerate() {
        for succ in m.step(&m.assemble(c, &store)) {
            let j = contexts.get_index_of(&m.split(&succ).0).expect("fixed point is closed");
            edges.insert((i, j));
        }
    }
    Ok(WidenedSystem { contexts, store, edges: edges.into_iter().collect(), iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::AbstractCesk;
    use crate::graph::explore;
    use crate::policy::Contours;
    use crate::syntax::parse;

    #[test]
    fn widened_store_covers_every_per_state_store() {
        let e = parse("((lambda (f) ((f (lambda (a) a)) (f (lambda (b) b)))) (lambda (x) x))").unwrap();
        let m = AbstractCesk::new(Contours::k_cfa(0));
        let w = analyze_widened(&m, &e).unwrap();
        let g = explore(&m, &e).unwrap();
        for s in g.states() {
            let (c, st) = m.split(s);
            assert!(w.contexts.contains(&c));
            assert!(st.leq(&w.store));
        }
    }
}
