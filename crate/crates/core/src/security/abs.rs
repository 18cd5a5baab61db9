use crate::analysis::Widen;
use crate::machine::{AbstractMachine, Env, InjectError, StepOutcome};
use crate::policy::{Contours, Policy};
use crate::store::{AbstractStore, Addr, Time};
use crate::syntax::{Exp, ExpKind, PermSet};

use super::star::{inject, step, CmStarState, MarkedState};
use super::{CmFrame, CmStorable};

pub type AbstractCmState = MarkedState<AbstractStore<CmStorable>>;

/// The abstract CM* machine.  Marks are updated, never joined.
#[derive(Clone, Debug)]
pub struct AbstractCm<P> {
    pub policy: P,
    pub universe: PermSet,
}

impl<P: Policy> AbstractCm<P> {
    pub fn new(policy: P, universe: PermSet) -> Self {
        AbstractCm { policy, universe }
    }
}

impl<P: Policy> AbstractMachine for AbstractCm<P> {
    type State = AbstractCmState;

    fn inject(&self, e: &Exp) -> Result<AbstractCmState, InjectError> {
        inject(e, self.policy.initial_time())
    }

    fn step(&self, s: &AbstractCmState) -> Vec<AbstractCmState> {
        step(&self.policy, &self.universe, s)
            .into_iter()
            .filter_map(|o| match o {
                StepOutcome::Next(n) => Some(n),
                _ => None,
            })
            .collect()
    }

    fn is_final(&self, s: &AbstractCmState) -> bool {
        match (&s.kont, s.control.kind()) {
            (CmFrame::Mt(_), ExpKind::Lam(..)) => true,
            (CmFrame::Mt(m), ExpKind::Fail) => m.is_empty(),
            _ => false,
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct CmContext {
    pub control: Exp,
    pub env: Env,
    pub kont: CmFrame,
    pub time: Time,
}

impl<P: Policy> Widen for AbstractCm<P> {
    type Context = CmContext;
    type Store = AbstractStore<CmStorable>;

    fn split(&self, s: &AbstractCmState) -> (CmContext, AbstractStore<CmStorable>) {
        (
            CmContext { control: s.control.clone(), env: s.env.clone(), kont: s.kont.clone(), time: s.time.clone() },
            s.store.clone(),
        )
    }

    fn assemble(&self, c: &CmContext, store: &AbstractStore<CmStorable>) -> AbstractCmState {
        MarkedState { control: c.control.clone(), env: c.env.clone(), store: store.clone(), kont: c.kont.clone(), time: c.time.clone() }
    }
}

/// Truncates every contour of a concrete contour-keyed state to `target`'s
/// bound, joining colliding store entries.
pub fn abstraction_map(target: &Contours, s: &CmStarState) -> AbstractCmState {
    let mut addr = |a: &Addr| target.abstract_addr(a);
    MarkedState {
        control: s.control.clone(),
        env: s.env.map_addrs(&mut addr),
        store: s.store.iter().map(|(a, v)| (target.abstract_addr(a), v.map_addrs(&mut addr))).collect(),
        kont: s.kont.map_addrs(&mut addr),
        time: target.abstract_time(&s.time),
    }
}

pub fn state_leq(a: &AbstractCmState, b: &AbstractCmState) -> bool {
    a.control == b.control && a.env == b.env && a.kont == b.kont && a.time == b.time && a.store.leq_store(&b.store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::check_simulation;
    use crate::graph::explore;
    use crate::machine::ConcreteMachine;
    use crate::security::CmStar;
    use crate::syntax::{parse, perms};

    #[test]
    fn abstract_fixtures_reach_only_the_concrete_winner() {
        let cases = [
            ("(test (p) (lambda (a) a) (lambda (b) b))", "(lambda (a) a)"),
            ("(frame () (test (p) (lambda (a) a) (lambda (b) b)))", "(lambda (b) b)"),
            ("(frame () (grant (p) (test (p) (lambda (a) a) (lambda (b) b))))", "(lambda (a) a)"),
        ];
        for (p, want) in cases {
            let e = parse(p).unwrap();
            let m = AbstractCm::new(Contours::k_cfa(0), perms(["p"]));
            let g = explore(&m, &e).unwrap();
            let finals: Vec<String> = g.finals().map(|s| s.control.to_string()).collect();
            assert_eq!(finals, vec![want.to_string()], "{p}");
        }
    }

    #[test]
    fn mixed_paths_explore_both_branches() {
        // The same closure is called once under a grant and once under a deny;
        // at k = 0 both return continuations share an address.
        let e = parse(
            "((lambda (f) ((lambda (d) (frame () (f (lambda (z) z)))) (grant (p) (f (lambda (y) y))))) \
             (lambda (x) (test (p) (lambda (a) a) (lambda (b) b))))",
        )
        .unwrap();
        let universe = perms(["p"]);
        let g = explore(&AbstractCm::new(Contours::k_cfa(0), universe.clone()), &e).unwrap();
        let controls: Vec<String> = g.states().map(|s| s.control.to_string()).collect();
        assert!(controls.contains(&"(lambda (a) a)".to_string()));
        assert!(controls.contains(&"(lambda (b) b)".to_string()));
        let trace = CmStar::new(Contours::unbounded(), universe).run_trace(&e, 1000).unwrap();
        let target = Contours::k_cfa(0);
        check_simulation(&trace.states, &g, |s| abstraction_map(&target, s), state_leq).unwrap();
    }
}
