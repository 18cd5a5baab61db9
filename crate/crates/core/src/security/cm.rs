use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::gc::{gc_reachable, live_exp, Collect, Touches};
use crate::machine::{check_program, Closure, ConcreteMachine, Env, InjectError, StepOutcome};
use crate::store::{Addr, ConcreteStore};
use crate::syntax::{Exp, ExpKind, PermSet, SECURITY_FORMS};

use super::{bind_var, security_marks, CmResult, Marks};

/// Marked continuations as a stack.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum CmKont {
    Mt(Marks),
    Ar(Marks, Exp, Env, Arc<CmKont>),
    Fn(Marks, Closure, Arc<CmKont>),
}

impl CmKont {
    pub fn marks(&self) -> &Marks {
        match self {
            CmKont::Mt(m) | CmKont::Ar(m, ..) | CmKont::Fn(m, ..) => m,
        }
    }

    pub fn with_marks(&self, m: Marks) -> CmKont {
        match self {
            CmKont::Mt(_) => CmKont::Mt(m),
            CmKont::Ar(_, e, env, k) => CmKont::Ar(m, e.clone(), env.clone(), k.clone()),
            CmKont::Fn(_, c, k) => CmKont::Fn(m, c.clone(), k.clone()),
        }
    }
}

impl fmt::Display for CmKont {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmKont::Mt(m) => write!(f, "mt{m}"),
            CmKont::Ar(m, e, env, k) => write!(f, "ar{m}({e}, {env}, {k})"),
            CmKont::Fn(m, c, k) => write!(f, "fn{m}({}, {}, {k})", c.lam, c.env),
        }
    }
}

/// `OK(R, κ)`, walking from the hole outwards.
pub fn ok(r: &PermSet, k: &CmKont) -> bool {
    if r.is_empty() {
        return true;
    }
    let m = k.marks();
    if !r.is_disjoint(&m.denied()) {
        return false;
    }
    match k {
        CmKont::Mt(_) => true,
        CmKont::Ar(.., rest) | CmKont::Fn(.., rest) => ok(&r.difference(&m.granted()).cloned().collect(), rest),
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct CmState {
    pub control: Exp,
    pub env: Env,
    pub store: ConcreteStore<Closure>,
    pub kont: CmKont,
}

impl Touches for CmKont {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        let mut k = self;
        loop {
            k = match k {
                CmKont::Mt(_) => return,
                CmKont::Ar(_, e, env, next) => {
                    live_exp(e, env, out);
                    next
                }
                CmKont::Fn(_, c, next) => {
                    c.touches(out);
                    next
                }
            }
        }
    }
}

impl Collect for CmState {
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
        CmState { store: self.store.restrict(&self.reachable()), ..self.clone() }
    }
}

/// The continuation-marks machine over a fixed permission universe.
#[derive(Clone, Debug, Default)]
pub struct Cm {
    pub universe: PermSet,
}

impl Cm {
    pub fn new(universe: PermSet) -> Cm {
        Cm { universe }
    }
}

impl ConcreteMachine for Cm {
    type State = CmState;
    type Value = CmResult;

    fn inject(&self, e: &Exp) -> Result<CmState, InjectError> {
        check_program(e, SECURITY_FORMS)?;
        Ok(CmState { control: e.clone(), env: Env::new(), store: ConcreteStore::new(), kont: CmKont::Mt(Marks::new()) })
    }

    fn step(&self, s: &CmState) -> StepOutcome<CmState, CmResult> {
        let next = |control: Exp, env: Env, store: ConcreteStore<Closure>, kont: CmKont| {
            StepOutcome::Next(CmState { control, env, store, kont })
        };
        if let Some((m, e)) = security_marks(s.control.kind(), &self.universe, s.kont.marks()) {
            return next(e, s.env.clone(), s.store.clone(), s.kont.with_marks(m));
        }
        match s.control.kind() {
            ExpKind::Fail => match &s.kont {
                CmKont::Mt(m) if m.is_empty() => StepOutcome::Final(CmResult::Fail),
                _ => next(s.control.clone(), s.env.clone(), s.store.clone(), CmKont::Mt(Marks::new())),
            },
            ExpKind::Test(r, e0, e1) => {
                let e = if ok(r, &s.kont) { e0 } else { e1 };
                next(e.clone(), s.env.clone(), s.store.clone(), s.kont.clone())
            }
            ExpKind::Ref(x) => {
                let Some(a) = s.env.get(x) else {
                    return StepOutcome::Stuck(format!("unbound variable {x}"));
                };
                match s.store.lookup(a) {
                    Ok(c) => next(c.lam.clone(), c.env.clone(), s.store.clone(), s.kont.clone()),
                    Err(e) => StepOutcome::Stuck(e.to_string()),
                }
            }
            ExpKind::App(e0, e1) => next(
                e0.clone(),
                s.env.clone(),
                s.store.clone(),
                CmKont::Ar(Marks::new(), e1.clone(), s.env.clone(), Arc::new(s.kont.clone())),
            ),
            ExpKind::Lam(..) => {
                let v = Closure::new(s.control.clone(), s.env.clone());
                match &s.kont {
                    CmKont::Mt(_) => StepOutcome::Final(CmResult::Value(v)),
                    CmKont::Ar(_, e, env, k) => next(e.clone(), env.clone(), s.store.clone(), CmKont::Fn(Marks::new(), v, k.clone())),
                    CmKont::Fn(_, f, k) => {
                        let (x, body) = bind_var(&f.lam);
                        let a = Addr::Fresh(s.store.next_fresh());
                        next(body.clone(), f.env.extend(x.clone(), a.clone()), s.store.insert(a, v), (**k).clone())
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
    use crate::machine::Halt;
    use crate::security::{Mark, Marks};
    use crate::syntax::{parse, perms};

    fn run(program: &str) -> String {
        let e = parse(program).unwrap();
        match Cm::new(perms(["p"])).run_trace(&e, 100).unwrap().halt {
            Halt::Final(r) => match r {
                CmResult::Value(c) => c.lam.to_string(),
                CmResult::Fail => "fail".into(),
            },
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fixtures() {
        assert_eq!(run("(test (p) (lambda (a) a) (lambda (b) b))"), "(lambda (a) a)");
        assert_eq!(run("(frame () (test (p) (lambda (a) a) (lambda (b) b)))"), "(lambda (b) b)");
        assert_eq!(run("(frame () (grant (p) (test (p) (lambda (a) a) (lambda (b) b))))"), "(lambda (a) a)");
        assert_eq!(run("((lambda (x) fail) (lambda (y) y))"), "fail");
    }

    #[test]
    fn ok_on_each_frame_shape() {
        let p = perms(["p"]);
        let mt = CmKont::Mt(Marks::new());
        assert!(ok(&PermSet::new(), &CmKont::Mt(Marks::new().set(&p, Mark::Deny))));
        assert!(ok(&p, &mt));
        assert!(!ok(&p, &CmKont::Mt(Marks::new().set(&p, Mark::Deny))));
        // A grant below a deny shields it.
        let lam = parse("(lambda (z) z)").unwrap();
        let k = CmKont::Fn(Marks::new().set(&p, Mark::Grant), Closure::new(lam, Env::new()), Arc::new(CmKont::Mt(Marks::new().set(&p, Mark::Deny))));
        assert!(ok(&p, &k));
    }
}
