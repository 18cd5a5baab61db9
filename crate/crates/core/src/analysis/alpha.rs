use crate::concrete::TimedState;
use crate::policy::Contours;
use crate::store::AbstractStore;

use super::AbstractState;

/// Structural abstraction of a concrete state run under the unbounded
/// contour policy: every contour is truncated to the target bound, and store
/// entries whose addresses collide are joined.
pub fn abstraction_map(target: &Contours, s: &TimedState) -> AbstractState {
    let mut addr = |a: &crate::store::Addr| target.abstract_addr(a);
    let store: AbstractStore<_> = AbstractStore::from(&s.store).map(&mut addr, |v| v.map_addrs(&mut |a| target.abstract_addr(a)));
    AbstractState {
        control: s.control.clone(),
        env: s.env.map_addrs(&mut addr),
        store,
        kont: s.kont.map_addrs(&mut addr),
        time: target.abstract_time(&s.time),
    }
}

/// `a ⊑ b`: identical control, environment, continuation and time, and a
/// pointwise-smaller store.
pub fn state_leq(a: &AbstractState, b: &AbstractState) -> bool {
    a.control == b.control && a.env == b.env && a.kont == b.kont && a.time == b.time && a.store.leq_store(&b.store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::AbstractCesk;
    use crate::concrete::CeskStarT;
    use crate::machine::{AbstractMachine, ConcreteMachine};
    use crate::syntax::parse;

    #[test]
    fn initial_states_correspond() {
        let e = parse("((lambda (x) x) (lambda (y) y))").unwrap();
        for k in 0..3 {
            let target = Contours::k_cfa(k);
            let c = CeskStarT::new(Contours::unbounded()).inject(&e).unwrap();
            let a = AbstractCesk::new(target).inject(&e).unwrap();
            assert!(state_leq(&abstraction_map(&target, &c), &a));
        }
    }
}
