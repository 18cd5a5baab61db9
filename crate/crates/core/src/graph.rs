//! Reachable-state graphs for abstract machines.

use std::collections::HashSet;
use std::hash::Hash;

use indexmap::IndexSet;

use crate::machine::{AbstractMachine, InjectError};
use crate::syntax::Exp;

/// States in breadth-first discovery order, with deduplicated edges.
#[derive(Clone, Debug)]
pub struct StateGraph<S: Hash + Eq> {
    states: IndexSet<S>,
    edges: Vec<(usize, usize)>,
    finals: Vec<usize>,
    initial: usize,
}

impl<S: Hash + Eq + Clone> StateGraph<S> {
    /// Builds a graph from parts, e.g. after loading it back from disk.
    pub fn from_parts(states: Vec<S>, edges: Vec<(usize, usize)>, finals: Vec<usize>, initial: usize) -> Self {
        StateGraph { states: states.into_iter().collect(), edges, finals, initial }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = &S> {
        self.states.iter()
    }

    pub fn state(&self, i: usize) -> &S {
        &self.states[i]
    }

    pub fn index_of(&self, s: &S) -> Option<usize> {
        self.states.get_index_of(s)
    }

    pub fn contains(&self, s: &S) -> bool {
        self.states.contains(s)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn final_ids(&self) -> &[usize] {
        &self.finals
    }

    pub fn finals(&self) -> impl Iterator<Item = &S> {
        self.finals.iter().map(|&i| &self.states[i])
    }

    pub fn is_final(&self, i: usize) -> bool {
        self.finals.contains(&i)
    }

    /// Successor lists indexed by state id.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.states.len()];
        for &(i, j) in &self.edges {
            adj[i].push(j);
        }
        adj
    }

    /// Ids of states that step to a final state.
    pub fn final_predecessors(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.edges.iter().filter(|(_, j)| self.is_final(*j)).map(|(i, _)| *i).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn map<T: Hash + Eq + Clone>(&self, f: impl FnMut(&S) -> T) -> StateGraph<T> {
        StateGraph {
            states: self.states.iter().map(f).collect(),
            edges: self.edges.clone(),
            finals: self.finals.clone(),
            initial: self.initial,
        }
    }
}

/// Explores every state reachable from the injection of `e`.
pub fn explore<M: AbstractMachine>(m: &M, e: &Exp) -> Result<StateGraph<M::State>, InjectError> {
    Ok(explore_from(m, m.inject(e)?))
}

pub fn explore_from<M: AbstractMachine>(m: &M, init: M::State) -> StateGraph<M::State> {
    explore_with(m, init, 1)
}

/// Same as [`explore_from`], computing each frontier's successors on
/// `workers` threads.  The result does not depend on scheduling: successors
/// are merged in frontier order.
pub fn explore_parallel<M: AbstractMachine>(m: &M, init: M::State, workers: usize) -> StateGraph<M::State> {
    explore_with(m, init, workers.max(1))
}

fn explore_with<M: AbstractMachine>(m: &M, init: M::State, workers: usize) -> StateGraph<M::State> {
    let mut states = IndexSet::new();
    let mut edges = Vec::new();
    let mut seen_edges = HashSet::new();
    let mut finals = Vec::new();
    states.insert(init);
    let mut frontier = vec![0usize];
    while !frontier.is_empty() {
        let succs = par_map(&frontier, workers, |&i| m.step(&states[i]));
        let mut next = Vec::new();
        for (&i, ss) in frontier.iter().zip(succs) {
            if m.is_final(&states[i]) {
                finals.push(i);
            }
            for s in ss {
                let (j, new) = states.insert_full(s);
                if new {
                    next.push(j);
                }
                if seen_edges.insert((i, j)) {
                    edges.push((i, j));
                }
            }
        }
        frontier = next;
    }
    finals.sort_unstable();
    StateGraph { states, edges, finals, initial: 0 }
}

/// Maps `f` over `items` on up to `workers` scoped threads, preserving order.
pub fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if workers <= 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| scope.spawn(|| c.iter().map(&f).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::Exp;

    /// Counts down modulo n, branching to the two predecessors.
    struct Ring(u32);

    impl AbstractMachine for Ring {
        type State = u32;

        fn inject(&self, _e: &Exp) -> Result<u32, InjectError> {
            Ok(0)
        }

        fn step(&self, s: &u32) -> Vec<u32> {
            if *s == self.0 - 1 {
                vec![]
            } else {
                vec![(s + 1) % self.0, (s * 3 + 1) % self.0]
            }
        }

        fn is_final(&self, s: &u32) -> bool {
            *s == self.0 - 1
        }
    }

    #[test]
    fn serial_and_parallel_agree() {
        let a = explore_from(&Ring(50), 0);
        let b = explore_parallel(&Ring(50), 0, 2);
        assert_eq!(a.states().collect::<Vec<_>>(), b.states().collect::<Vec<_>>());
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.final_ids(), &[a.index_of(&49).unwrap()]);
    }
}
