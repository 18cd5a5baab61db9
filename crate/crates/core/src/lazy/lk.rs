use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::gc::{gc_reachable, live_exp, Collect, Touches};
use crate::machine::{check_program, Closure, ConcreteMachine, Env, InjectError, StepOutcome};
use crate::store::{Addr, ConcreteStore};
use crate::syntax::{Exp, ExpKind, CORE_FORMS};

use super::{operand, Canonical, Canonicalizer, LkArg, Operand, Thunk, Variant};

/// Continuations of the lazy Krivine machine, as a stack.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum LkKont {
    Mt,
    Update(Addr, Arc<LkKont>),
    Apply(LkArg, Arc<LkKont>),
}

impl fmt::Display for LkKont {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LkKont::Mt => f.write_str("mt"),
            LkKont::Update(a, k) => write!(f, "update({a}, {k})"),
            LkKont::Apply(x, k) => write!(f, "apply({x}, {k})"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct LkState {
    pub control: Exp,
    pub env: Env,
    pub store: ConcreteStore<Thunk>,
    pub kont: LkKont,
}

impl Touches for LkKont {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        let mut k = self;
        loop {
            k = match k {
                LkKont::Mt => return,
                LkKont::Update(a, next) => {
                    out.insert(a.clone());
                    next
                }
                LkKont::Apply(x, next) => {
                    x.touches(out);
                    next
                }
            }
        }
    }
}

impl Collect for LkState {
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

impl LkState {
    pub fn canonical(&self) -> Canonical {
        let c = Canonicalizer(|a: &Addr| self.store.lookup(a).expect("well-formed LK state").clone());
        let mut kont = Vec::new();
        let mut k = &self.kont;
        loop {
            match k {
                LkKont::Mt => break,
                LkKont::Update(a, rest) => {
                    kont.push(super::CanonFrame::Update(c.addr(a)));
                    k = rest;
                }
                LkKont::Apply(arg, rest) => {
                    kont.push(c.arg(arg));
                    k = rest;
                }
            }
        }
        Canonical { control: self.control.clone(), env: c.env(&self.env), kont }
    }
}

/// The lazy Krivine machine with fresh `max + 1` addresses.
#[derive(Clone, Copy, Debug, Default)]
pub struct Lk {
    pub variant: Variant,
}

impl Lk {
    pub fn new(variant: Variant) -> Lk {
        Lk { variant }
    }
}

impl ConcreteMachine for Lk {
    type State = LkState;
    type Value = Closure;

    fn inject(&self, e: &Exp) -> Result<LkState, InjectError> {
        check_program(e, CORE_FORMS)?;
        Ok(LkState { control: e.clone(), env: Env::new(), store: ConcreteStore::new(), kont: LkKont::Mt })
    }

    fn step(&self, s: &LkState) -> StepOutcome<LkState, Closure> {
        let next = |control: Exp, env: Env, store: ConcreteStore<Thunk>, kont: LkKont| {
            StepOutcome::Next(LkState { control, env, store, kont })
        };
        match s.control.kind() {
            ExpKind::Ref(x) => {
                let Some(a) = s.env.get(x) else {
                    return StepOutcome::Stuck(format!("unbound variable {x}"));
                };
                match s.store.lookup(a) {
                    Ok(Thunk::Delayed(e, env)) => {
                        next(e.clone(), env.clone(), s.store.clone(), LkKont::Update(a.clone(), Arc::new(s.kont.clone())))
                    }
                    Ok(Thunk::Computed(v, env)) => next(v.clone(), env.clone(), s.store.clone(), s.kont.clone()),
                    Err(e) => StepOutcome::Stuck(e.to_string()),
                }
            }
            ExpKind::App(e0, e1) => {
                let fresh = || Addr::Fresh(s.store.next_fresh());
                let (store, arg) = match operand(self.variant, e1, &s.env) {
                    Operand::Delay => {
                        let a = fresh();
                        (s.store.insert(a.clone(), Thunk::Delayed(e1.clone(), s.env.clone())), LkArg::Addr(a))
                    }
                    Operand::Value => {
                        let a = fresh();
                        (s.store.insert(a.clone(), Thunk::Computed(e1.clone(), s.env.clone())), LkArg::Addr(a))
                    }
                    Operand::Share(a) => (s.store.clone(), LkArg::Addr(a.clone())),
                    Operand::Defer => (s.store.clone(), LkArg::Deferred(e1.clone(), s.env.clone())),
                };
                next(e0.clone(), s.env.clone(), store, LkKont::Apply(arg, Arc::new(s.kont.clone())))
            }
            ExpKind::Lam(x, body) => match &s.kont {
                LkKont::Mt => StepOutcome::Final(Closure::new(s.control.clone(), s.env.clone())),
                LkKont::Update(a, k) => {
                    assert!(
                        matches!(s.store.get(a), Some(Thunk::Delayed(..))),
                        "thunk {a} updated twice"
                    );
                    let store = s.store.insert(a.clone(), Thunk::Computed(s.control.clone(), s.env.clone()));
                    next(s.control.clone(), s.env.clone(), store, (**k).clone())
                }
                LkKont::Apply(LkArg::Addr(a), k) => {
                    next(body.clone(), s.env.extend(x.clone(), a.clone()), s.store.clone(), (**k).clone())
                }
                LkKont::Apply(LkArg::Deferred(e, env), k) => {
                    let a = Addr::Fresh(s.store.next_fresh());
                    let store = s.store.insert(a.clone(), Thunk::Delayed(e.clone(), env.clone()));
                    next(body.clone(), s.env.extend(x.clone(), a), store, (**k).clone())
                }
            },
            _ => StepOutcome::Stuck(format!("unsupported form {}", s.control)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse;

    const SELF_APP: &str = "((lambda (f) (f f)) (lambda (y) y))";

    #[test]
    fn thunk_is_forced_once_then_reused() {
        let e = parse(SELF_APP).unwrap();
        let t = Lk::new(Variant::Standard).run_trace(&e, 100).unwrap();
        assert_eq!(t.final_value().unwrap().lam.to_string(), "(lambda (y) y)");
        let f = crate::syntax::Var::new("f");
        // Both reads of f go through the same address; the second finds it computed.
        let reads: Vec<_> = t.states.iter().filter(|s| s.control.as_ref() == Some(&f)).collect();
        assert_eq!(reads.len(), 2);
        let updates = t.states.iter().filter(|s| matches!(&s.kont, LkKont::Update(b, _) if Some(b) == reads[0].env.get(&f))).count();
        assert_eq!(updates, 1);
        let a = reads[0].env.get(&f).unwrap();
        assert!(matches!(reads[0].store.get(a), Some(Thunk::Delayed(..))));
        assert!(matches!(reads[1].store.get(a), Some(Thunk::Computed(..))));
    }

    #[test]
    fn variants_agree_on_the_result() {
        let e = parse("((lambda (f) ((lambda (g) (g g)) f)) (lambda (y) y))").unwrap();
        let results: Vec<_> = Variant::ALL
            .iter()
            .map(|&v| Lk::new(v).run_trace(&e, 500).unwrap().final_value().unwrap().lam.clone())
            .collect();
        assert!(results.iter().all(|r| r == &results[0]));
    }

    #[test]
    fn diverging_operand_is_never_forced() {
        let e = parse("((lambda (x) (lambda (z) z)) ((lambda (w) (w w)) (lambda (w) (w w))))").unwrap();
        for v in Variant::ALL {
            let t = Lk::new(v).run_trace(&e, 100).unwrap();
            assert_eq!(t.final_value().unwrap().lam.to_string(), "(lambda (z) z)");
        }
    }
}
