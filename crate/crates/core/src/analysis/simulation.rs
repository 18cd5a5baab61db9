use std::hash::Hash;

use crate::graph::StateGraph;

/// A concrete step whose abstraction no explored abstract successor covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    /// Index of the concrete transition `trace[step] → trace[step + 1]`.
    pub step: usize,
    /// An explored abstract state covering `α(trace[step])` that fails to
    /// simulate the step, or `None` when nothing covers that state at all.
    pub abstract_state: Option<usize>,
}

/// Checks the simulation property along one concrete trace: the
/// abstraction of every trace state is covered by some explored state, and
/// for every explored `â ⊒ α(ςᵢ)` some successor of `â` covers `α(ςᵢ₊₁)`.
/// Returns the number of (concrete step, abstract state) pairs checked.
pub fn check_simulation<C, A: Hash + Eq + Clone>(
    trace: &[C],
    graph: &StateGraph<A>,
    alpha: impl Fn(&C) -> A,
    leq: impl Fn(&A, &A) -> bool,
) -> Result<usize, Counterexample> {
    let adj = graph.adjacency();
    let images: Vec<A> = trace.iter().map(&alpha).collect();
    let covering = |img: &A| -> Vec<usize> { (0..graph.len()).filter(|&j| leq(img, graph.state(j))).collect() };
    let mut checked = 0;
    let mut here = covering(&images[0]);
    if here.is_empty() {
        return Err(Counterexample { step: 0, abstract_state: None });
    }
    for i in 0..images.len().saturating_sub(1) {
        let next = &images[i + 1];
        for &j in &here {
            checked += 1;
            if !adj[j].iter().any(|&k| leq(next, graph.state(k))) {
                return Err(Counterexample { step: i, abstract_state: Some(j) });
            }
        }
        here = covering(next);
        if here.is_empty() {
            return Err(Counterexample { step: i + 1, abstract_state: None });
        }
    }
    Ok(checked)
}
