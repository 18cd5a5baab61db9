//! Time and allocation policies.
//!
//! A policy decides how the clock advances (`tick`) and which address a new
//! binding or continuation gets (`alloc_*`).  Every machine that threads time
//! is parameterised by one, so the same transition rules give a concrete
//! interpreter (unbounded policies) or a finite analysis (bounded ones).
//! Allocation always uses the *new* time `u = tick(ς)`.

use crate::store::{Addr, Contour, MonoAddr, Time};
use crate::syntax::{Label, Var};

/// What a policy may observe about the transition being taken.
pub struct Moment<'a, K> {
    /// Label of the current control string ([`Label::NONE`] when it is not an
    /// expression).
    pub site: Label,
    pub time: &'a Time,
    /// The continuation the rule has chosen (after any store fan-out).
    pub kont: &'a K,
    /// `max Fresh key + 1` in the current store, for counter allocation.
    pub fresh: u64,
}

pub trait Policy: Sync + Send {
    fn initial_time(&self) -> Time;
    fn tick<K>(&self, m: &Moment<'_, K>) -> Time;
    fn alloc_bind<K>(&self, x: &Var, u: &Time, m: &Moment<'_, K>) -> Addr;
    fn alloc_kont<K>(&self, site: Label, u: &Time, m: &Moment<'_, K>) -> Addr;
    /// True when every allocation is fresh, so the machine is an interpreter.
    fn is_concrete(&self) -> bool;
    /// Context-sensitivity bound, if the policy is a bounded contour policy.
    fn k(&self) -> Option<usize> {
        None
    }
}

/// Numeric clock with `max + 1` fresh addresses.  Valid only for machines
/// that allocate at most one address per transition.
#[derive(Clone, Copy, Debug, Default)]
pub struct Counter;

impl Policy for Counter {
    fn initial_time(&self) -> Time {
        Time::Tick(0)
    }

    fn tick<K>(&self, m: &Moment<'_, K>) -> Time {
        match m.time {
            Time::Tick(n) => Time::Tick(n + 1),
            Time::Contour(_) => panic!("counter policy given a contour"),
        }
    }

    fn alloc_bind<K>(&self, _x: &Var, _u: &Time, m: &Moment<'_, K>) -> Addr {
        Addr::Fresh(m.fresh)
    }

    fn alloc_kont<K>(&self, _site: Label, _u: &Time, m: &Moment<'_, K>) -> Addr {
        Addr::Fresh(m.fresh)
    }

    fn is_concrete(&self) -> bool {
        true
    }
}

/// Numeric clock with addresses keyed by (variable or site, new time).
#[derive(Clone, Copy, Debug, Default)]
pub struct TickKeyed;

impl Policy for TickKeyed {
    fn initial_time(&self) -> Time {
        Time::Tick(0)
    }

    fn tick<K>(&self, m: &Moment<'_, K>) -> Time {
        Counter.tick(m)
    }

    fn alloc_bind<K>(&self, x: &Var, u: &Time, _m: &Moment<'_, K>) -> Addr {
        Addr::Bind(x.clone(), u.clone())
    }

    fn alloc_kont<K>(&self, site: Label, u: &Time, _m: &Moment<'_, K>) -> Addr {
        Addr::Kont(site, u.clone())
    }

    fn is_concrete(&self) -> bool {
        true
    }
}

/// Call-string contours: `tick` prepends the current control label.  With a
/// bound `k` this is k-CFA (k = 0 gives monovariant addresses); without one
/// it is a concrete policy whose times are full histories, the natural
/// preimage of every bounded instance.
#[derive(Clone, Copy, Debug)]
pub struct Contours {
    bound: Option<usize>,
}

impl Contours {
    pub fn unbounded() -> Contours {
        Contours { bound: None }
    }

    pub fn k_cfa(k: usize) -> Contours {
        Contours { bound: Some(k) }
    }

    pub fn bound(&self) -> Option<usize> {
        self.bound
    }

    /// The address this policy would have produced for a concrete
    /// contour-keyed address.
    pub fn abstract_addr(&self, a: &Addr) -> Addr {
        match (a, self.bound) {
            (_, None) => a.clone(),
            (Addr::Bind(x, _), Some(0)) => Addr::Mono(MonoAddr::BindVar(x.clone())),
            (Addr::Kont(l, _), Some(0)) => Addr::Mono(MonoAddr::KontSite(*l)),
            (Addr::Bind(x, t), Some(k)) => Addr::Bind(x.clone(), truncate(t, k)),
            (Addr::Kont(l, t), Some(k)) => Addr::Kont(*l, truncate(t, k)),
            (other, _) => other.clone(),
        }
    }

    pub fn abstract_time(&self, t: &Time) -> Time {
        match self.bound {
            None => t.clone(),
            Some(k) => truncate(t, k),
        }
    }
}

fn truncate(t: &Time, k: usize) -> Time {
    match t {
        Time::Contour(c) => Time::Contour(c.truncate(k)),
        Time::Tick(_) => t.clone(),
    }
}

impl Policy for Contours {
    fn initial_time(&self) -> Time {
        Time::Contour(Contour::empty())
    }

    fn tick<K>(&self, m: &Moment<'_, K>) -> Time {
        match m.time {
            Time::Contour(c) => Time::Contour(c.push(m.site, self.bound)),
            Time::Tick(_) => panic!("contour policy given a counter"),
        }
    }

    fn alloc_bind<K>(&self, x: &Var, u: &Time, _m: &Moment<'_, K>) -> Addr {
        match self.bound {
            Some(0) => Addr::Mono(MonoAddr::BindVar(x.clone())),
            _ => Addr::Bind(x.clone(), u.clone()),
        }
    }

    fn alloc_kont<K>(&self, site: Label, u: &Time, _m: &Moment<'_, K>) -> Addr {
        match self.bound {
            Some(0) => Addr::Mono(MonoAddr::KontSite(site)),
            _ => Addr::Kont(site, u.clone()),
        }
    }

    fn is_concrete(&self) -> bool {
        self.bound.is_none()
    }

    fn k(&self) -> Option<usize> {
        self.bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moment<'a>(site: u32, time: &'a Time) -> Moment<'a, ()> {
        Moment { site: Label(site), time, kont: &(), fresh: 1 }
    }

    #[test]
    fn keyed_alloc_uses_new_time() {
        let t = Time::Tick(3);
        let m = moment(1, &t);
        let u = TickKeyed.tick(&m);
        assert_eq!(TickKeyed.alloc_bind(&Var::new("x"), &u, &m), Addr::Bind(Var::new("x"), Time::Tick(4)));
    }

    #[test]
    fn zero_cfa_is_monovariant() {
        let p = Contours::k_cfa(0);
        let t = p.initial_time();
        let m = moment(7, &t);
        let u = p.tick(&m);
        assert_eq!(u, t);
        assert_eq!(p.alloc_bind(&Var::new("x"), &u, &m), Addr::Mono(MonoAddr::BindVar(Var::new("x"))));
        assert_eq!(p.alloc_kont(Label(7), &u, &m), Addr::Mono(MonoAddr::KontSite(Label(7))));
    }

    #[test]
    fn abstraction_commutes_with_tick() {
        let conc = Contours::unbounded();
        let abs = Contours::k_cfa(1);
        let t = Time::Contour(Contour::from_labels(vec![Label(4), Label(2)]));
        let ta = abs.abstract_time(&t);
        let u = conc.tick(&moment(9, &t));
        let ua = abs.tick(&moment(9, &ta));
        assert_eq!(abs.abstract_time(&u), ua);
    }
}
