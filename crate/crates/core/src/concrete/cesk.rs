use std::sync::Arc;

use crate::machine::{check_program, Closure, ConcreteMachine, Env, InjectError, StepOutcome};
use crate::store::{Addr, ConcreteStore};
use crate::syntax::{Exp, ExpKind, CORE_FORMS};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum CeskKont {
    Mt,
    Ar(Exp, Env, Arc<CeskKont>),
    Fn(Closure, Arc<CeskKont>),
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct CeskState {
    pub control: Exp,
    pub env: Env,
    pub store: ConcreteStore<Closure>,
    pub kont: CeskKont,
}

/// The CESK machine: bindings go through a store, continuations stay
/// recursive.
#[derive(Clone, Copy, Debug, Default)]
pub struct Cesk;

impl ConcreteMachine for Cesk {
    type State = CeskState;
    type Value = Closure;

    fn inject(&self, e: &Exp) -> Result<CeskState, InjectError> {
        check_program(e, CORE_FORMS)?;
        Ok(CeskState { control: e.clone(), env: Env::new(), store: ConcreteStore::new(), kont: CeskKont::Mt })
    }

    fn step(&self, s: &CeskState) -> StepOutcome<CeskState, Closure> {
        match s.control.kind() {
            ExpKind::Ref(x) => {
                let Some(a) = s.env.get(x) else {
                    return StepOutcome::Stuck(format!("unbound variable {x}"));
                };
                match s.store.lookup(a) {
                    Ok(c) => StepOutcome::Next(CeskState {
                        control: c.lam.clone(),
                        env: c.env.clone(),
                        store: s.store.clone(),
                        kont: s.kont.clone(),
                    }),
                    Err(e) => StepOutcome::Stuck(e.to_string()),
                }
            }
            ExpKind::App(e0, e1) => StepOutcome::Next(CeskState {
                control: e0.clone(),
                env: s.env.clone(),
                store: s.store.clone(),
                kont: CeskKont::Ar(e1.clone(), s.env.clone(), Arc::new(s.kont.clone())),
            }),
            ExpKind::Lam(..) => {
                let v = Closure::new(s.control.clone(), s.env.clone());
                match &s.kont {
                    CeskKont::Mt => StepOutcome::Final(v),
                    CeskKont::Ar(e, env, k) => StepOutcome::Next(CeskState {
                        control: e.clone(),
                        env: env.clone(),
                        store: s.store.clone(),
                        kont: CeskKont::Fn(v, k.clone()),
                    }),
                    CeskKont::Fn(f, k) => {
                        let (x, body) = f.lam.as_lam().expect("closures hold lambdas");
                        let a = Addr::Fresh(s.store.next_fresh());
                        StepOutcome::Next(CeskState {
                            control: body.clone(),
                            env: f.env.extend(x.clone(), a.clone()),
                            store: s.store.insert(a, v),
                            kont: (**k).clone(),
                        })
                    }
                }
            }
            _ => StepOutcome::Stuck(format!("unsupported form {}", s.control)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse;

    #[test]
    fn allocates_max_plus_one() {
        let t = Cesk.run_trace(&parse("((lambda (x) ((lambda (y) y) x)) (lambda (z) z))").unwrap(), 100).unwrap();
        let last = t.states.last().unwrap();
        let keys: Vec<_> = last.store.iter().map(|(a, _)| a.clone()).collect();
        assert_eq!(keys, vec![Addr::Fresh(1), Addr::Fresh(2)]);
    }
}
