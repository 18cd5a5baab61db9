//! Relating states of the concrete tower.
//!
//! Every machine's state is mapped to a canonical CEK state by resolving
//! addresses through the store; two states are related when their canonical
//! forms are equal.  Independently, [`renaming_equivalent`] decides whether
//! two CESK* states differ only by a bijective renaming of addresses.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::machine::{Closure, Env};
use crate::store::{Addr, ConcreteStore};

use super::cek::{CekClosure, CekEnv, CekKont, CekState};
use super::cesk::{CeskKont, CeskState};
use super::star::{Kont, StarState, Storable};
use super::timed::TimedState;

fn cesk_env(env: &Env, store: &ConcreteStore<Closure>) -> CekEnv {
    env.iter()
        .map(|(x, a)| {
            let c = store.lookup(a).expect("well-formed CESK state");
            (x.clone(), CekClosure { lam: c.lam.clone(), env: cesk_env(&c.env, store) })
        })
        .collect()
}

fn cesk_kont(k: &CeskKont, store: &ConcreteStore<Closure>) -> CekKont {
    match k {
        CeskKont::Mt => CekKont::Mt,
        CeskKont::Ar(e, env, k) => CekKont::Ar(e.clone(), cesk_env(env, store), Arc::new(cesk_kont(k, store))),
        CeskKont::Fn(c, k) => {
            CekKont::Fn(CekClosure { lam: c.lam.clone(), env: cesk_env(&c.env, store) }, Arc::new(cesk_kont(k, store)))
        }
    }
}

pub fn cesk_to_cek(s: &CeskState) -> CekState {
    CekState { control: s.control.clone(), env: cesk_env(&s.env, &s.store), kont: cesk_kont(&s.kont, &s.store) }
}

fn star_env(env: &Env, store: &ConcreteStore<Storable>) -> CekEnv {
    env.iter()
        .map(|(x, a)| match store.lookup(a).expect("well-formed CESK* state") {
            Storable::Clo(c) => (x.clone(), CekClosure { lam: c.lam.clone(), env: star_env(&c.env, store) }),
            Storable::Kont(_) => panic!("variable {x} bound to a continuation address"),
        })
        .collect()
}

fn star_kont(k: &Kont, store: &ConcreteStore<Storable>) -> CekKont {
    let tail = |a: &Addr| match store.lookup(a).expect("well-formed CESK* state") {
        Storable::Kont(k) => Arc::new(star_kont(k, store)),
        Storable::Clo(_) => panic!("continuation tail {a} holds a closure"),
    };
    match k {
        Kont::Mt => CekKont::Mt,
        Kont::Ar(e, env, a) => CekKont::Ar(e.clone(), star_env(env, store), tail(a)),
        Kont::Fn(c, a) => CekKont::Fn(CekClosure { lam: c.lam.clone(), env: star_env(&c.env, store) }, tail(a)),
    }
}

pub fn star_to_cek(s: &StarState) -> CekState {
    CekState { control: s.control.clone(), env: star_env(&s.env, &s.store), kont: star_kont(&s.kont, &s.store) }
}

pub fn timed_to_cek(s: &TimedState) -> CekState {
    star_to_cek(&s.erase_time())
}

/// Decides whether `a` and `b` are equal up to a bijection between the
/// addresses reachable from their registers.  Stores must also have the same
/// size; unreachable entries are otherwise ignored.
pub fn renaming_equivalent(a: &StarState, b: &StarState) -> bool {
    let mut r = Renaming::default();
    a.control == b.control
        && r.env(&a.env, &b.env)
        && r.kont(&a.kont, &b.kont)
        && a.store.len() == b.store.len()
        && r.close(&a.store, &b.store)
}

#[derive(Default)]
struct Renaming {
    fwd: BTreeMap<Addr, Addr>,
    back: BTreeMap<Addr, Addr>,
    pending: Vec<(Addr, Addr)>,
}

impl Renaming {
    fn addr(&mut self, x: &Addr, y: &Addr) -> bool {
        match (self.fwd.get(x), self.back.get(y)) {
            (Some(y2), Some(x2)) => y2 == y && x2 == x,
            (None, None) => {
                self.fwd.insert(x.clone(), y.clone());
                self.back.insert(y.clone(), x.clone());
                self.pending.push((x.clone(), y.clone()));
                true
            }
            _ => false,
        }
    }

    fn env(&mut self, a: &Env, b: &Env) -> bool {
        a.len() == b.len() && a.iter().zip(b.iter()).all(|((x, p), (y, q))| x == y && self.addr(p, q))
    }

    fn closure(&mut self, a: &Closure, b: &Closure) -> bool {
        a.lam == b.lam && self.env(&a.env, &b.env)
    }

    fn kont(&mut self, a: &Kont, b: &Kont) -> bool {
        match (a, b) {
            (Kont::Mt, Kont::Mt) => true,
            (Kont::Ar(e, r, p), Kont::Ar(f, s, q)) => e == f && self.env(r, s) && self.addr(p, q),
            (Kont::Fn(c, p), Kont::Fn(d, q)) => self.closure(c, d) && self.addr(p, q),
            _ => false,
        }
    }

    fn close(&mut self, sa: &ConcreteStore<Storable>, sb: &ConcreteStore<Storable>) -> bool {
        while let Some((x, y)) = self.pending.pop() {
            let ok = match (sa.get(&x), sb.get(&y)) {
                (Some(Storable::Clo(c)), Some(Storable::Clo(d))) => self.closure(c, d),
                (Some(Storable::Kont(k)), Some(Storable::Kont(l))) => self.kont(k, l),
                (None, None) => true,
                _ => false,
            };
            if !ok {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concrete::{CeskStar, CeskStarT};
    use crate::machine::ConcreteMachine;
    use crate::policy::TickKeyed;
    use crate::syntax::parse;

    #[test]
    fn time_keyed_run_is_a_renaming_of_fresh_run() {
        let e = parse("((lambda (f) (f (f (lambda (z) z)))) (lambda (x) x))").unwrap();
        let star = CeskStar.run_trace(&e, 200).unwrap();
        let timed = CeskStarT::new(TickKeyed).run_trace(&e, 200).unwrap();
        assert_eq!(star.states.len(), timed.states.len());
        for (a, b) in star.states.iter().zip(&timed.states) {
            assert!(renaming_equivalent(a, &b.erase_time()));
        }
    }

    #[test]
    fn renaming_distinguishes_sharing() {
        let e = parse("((lambda (x) x) (lambda (y) y))").unwrap();
        let star = CeskStar.run_trace(&e, 200).unwrap();
        assert!(!renaming_equivalent(&star.states[0], &star.states[1]));
    }
}
