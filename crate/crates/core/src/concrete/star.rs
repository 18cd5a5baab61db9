use std::fmt;

use crate::machine::{check_program, Closure, ConcreteMachine, Env, InjectError, StepOutcome};
use crate::store::{Addr, ConcreteStore};
use crate::syntax::{Exp, ExpKind, CORE_FORMS};

/// Store-allocated continuation frames; the tail is an address.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Kont {
    Mt,
    Ar(Exp, Env, Addr),
    Fn(Closure, Addr),
}

impl Kont {
    pub fn tail(&self) -> Option<&Addr> {
        match self {
            Kont::Mt => None,
            Kont::Ar(_, _, a) | Kont::Fn(_, a) => Some(a),
        }
    }

    pub fn map_addrs(&self, f: &mut impl FnMut(&Addr) -> Addr) -> Kont {
        match self {
            Kont::Mt => Kont::Mt,
            Kont::Ar(e, env, a) => Kont::Ar(e.clone(), env.map_addrs(&mut *f), f(a)),
            Kont::Fn(c, a) => Kont::Fn(Closure::new(c.lam.clone(), c.env.map_addrs(&mut *f)), f(a)),
        }
    }
}

impl fmt::Display for Kont {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kont::Mt => f.write_str("mt"),
            Kont::Ar(e, env, a) => write!(f, "ar({e}, {env}, {a})"),
            Kont::Fn(c, a) => write!(f, "fn({}, {}, {a})", c.lam, c.env),
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Storable {
    Clo(Closure),
    Kont(Kont),
}

impl Storable {
    pub fn map_addrs(&self, f: &mut impl FnMut(&Addr) -> Addr) -> Storable {
        match self {
            Storable::Clo(c) => Storable::Clo(Closure::new(c.lam.clone(), c.env.map_addrs(f))),
            Storable::Kont(k) => Storable::Kont(k.map_addrs(f)),
        }
    }
}

impl fmt::Display for Storable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Storable::Clo(c) => write!(f, "{c}"),
            Storable::Kont(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct StarState {
    pub control: Exp,
    pub env: Env,
    pub store: ConcreteStore<Storable>,
    pub kont: Kont,
}

/// The CESK* machine: continuations are allocated in the store too.
#[derive(Clone, Copy, Debug, Default)]
pub struct CeskStar;

pub(crate) fn lookup_kont(store: &ConcreteStore<Storable>, a: &Addr) -> Result<Kont, String> {
    match store.lookup(a) {
        Ok(Storable::Kont(k)) => Ok(k.clone()),
        Ok(Storable::Clo(_)) => Err(format!("{a} holds a closure, not a continuation")),
        Err(e) => Err(e.to_string()),
    }
}

pub(crate) fn lookup_clo(store: &ConcreteStore<Storable>, a: &Addr) -> Result<Closure, String> {
    match store.lookup(a) {
        Ok(Storable::Clo(c)) => Ok(c.clone()),
        Ok(Storable::Kont(_)) => Err(format!("{a} holds a continuation, not a closure")),
        Err(e) => Err(e.to_string()),
    }
}

impl ConcreteMachine for CeskStar {
    type State = StarState;
    type Value = Closure;

    fn inject(&self, e: &Exp) -> Result<StarState, InjectError> {
        check_program(e, CORE_FORMS)?;
        Ok(StarState { control: e.clone(), env: Env::new(), store: ConcreteStore::new(), kont: Kont::Mt })
    }

    fn step(&self, s: &StarState) -> StepOutcome<StarState, Closure> {
        match s.control.kind() {
            ExpKind::Ref(x) => {
                let Some(a) = s.env.get(x) else {
                    return StepOutcome::Stuck(format!("unbound variable {x}"));
                };
                match lookup_clo(&s.store, a) {
                    Ok(c) => StepOutcome::Next(StarState { control: c.lam, env: c.env, store: s.store.clone(), kont: s.kont.clone() }),
                    Err(r) => StepOutcome::Stuck(r),
                }
            }
            ExpKind::App(e0, e1) => {
                let a = Addr::Fresh(s.store.next_fresh());
                StepOutcome::Next(StarState {
                    control: e0.clone(),
                    env: s.env.clone(),
                    store: s.store.insert(a.clone(), Storable::Kont(s.kont.clone())),
                    kont: Kont::Ar(e1.clone(), s.env.clone(), a),
                })
            }
            ExpKind::Lam(..) => {
                let v = Closure::new(s.control.clone(), s.env.clone());
                match &s.kont {
                    Kont::Mt => StepOutcome::Final(v),
                    Kont::Ar(e, env, a) => StepOutcome::Next(StarState {
                        control: e.clone(),
                        env: env.clone(),
                        store: s.store.clone(),
                        kont: Kont::Fn(v, a.clone()),
                    }),
                    Kont::Fn(f, a) => {
                        let k = match lookup_kont(&s.store, a) {
                            Ok(k) => k,
                            Err(r) => return StepOutcome::Stuck(r),
                        };
                        let (x, body) = f.lam.as_lam().expect("closures hold lambdas");
                        let b = Addr::Fresh(s.store.next_fresh());
                        StepOutcome::Next(StarState {
                            control: body.clone(),
                            env: f.env.extend(x.clone(), b.clone()),
                            store: s.store.insert(b, Storable::Clo(v)),
                            kont: k,
                        })
                    }
                }
            }
            _ => StepOutcome::Stuck(format!("unsupported form {}", s.control)),
        }
    }
}
