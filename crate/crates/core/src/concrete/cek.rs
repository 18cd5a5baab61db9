use std::collections::BTreeMap;
use std::sync::Arc;

use crate::machine::{check_program, ConcreteMachine, InjectError, StepOutcome};
use crate::syntax::{Exp, ExpKind, Var, CORE_FORMS};

/// Environments that map variables straight to closures.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct CekEnv(Arc<BTreeMap<Var, CekClosure>>);

impl CekEnv {
    pub fn get(&self, x: &Var) -> Option<&CekClosure> {
        self.0.get(x)
    }

    pub fn extend(&self, x: Var, c: CekClosure) -> CekEnv {
        let mut m = self.0.clone();
        Arc::make_mut(&mut m).insert(x, c);
        CekEnv(m)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &CekClosure)> {
        self.0.iter()
    }
}

impl FromIterator<(Var, CekClosure)> for CekEnv {
    fn from_iter<I: IntoIterator<Item = (Var, CekClosure)>>(iter: I) -> Self {
        CekEnv(Arc::new(iter.into_iter().collect()))
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct CekClosure {
    pub lam: Exp,
    pub env: CekEnv,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum CekKont {
    Mt,
    Ar(Exp, CekEnv, Arc<CekKont>),
    Fn(CekClosure, Arc<CekKont>),
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct CekState {
    pub control: Exp,
    pub env: CekEnv,
    pub kont: CekKont,
}

/// The CEK machine: environments hold closures and continuations are a
/// recursive data structure.
#[derive(Clone, Copy, Debug, Default)]
pub struct Cek;

impl ConcreteMachine for Cek {
    type State = CekState;
    type Value = CekClosure;

    fn inject(&self, e: &Exp) -> Result<CekState, InjectError> {
        check_program(e, CORE_FORMS)?;
        Ok(CekState { control: e.clone(), env: CekEnv::default(), kont: CekKont::Mt })
    }

    fn step(&self, s: &CekState) -> StepOutcome<CekState, CekClosure> {
        match s.control.kind() {
            ExpKind::Ref(x) => match s.env.get(x) {
                Some(c) => StepOutcome::Next(CekState { control: c.lam.clone(), env: c.env.clone(), kont: s.kont.clone() }),
                None => StepOutcome::Stuck(format!("unbound variable {x}")),
            },
            ExpKind::App(e0, e1) => StepOutcome::Next(CekState {
                control: e0.clone(),
                env: s.env.clone(),
                kont: CekKont::Ar(e1.clone(), s.env.clone(), Arc::new(s.kont.clone())),
            }),
            ExpKind::Lam(..) => {
                let v = CekClosure { lam: s.control.clone(), env: s.env.clone() };
                match &s.kont {
                    CekKont::Mt => StepOutcome::Final(v),
                    CekKont::Ar(e, env, k) => StepOutcome::Next(CekState {
                        control: e.clone(),
                        env: env.clone(),
                        kont: CekKont::Fn(v, k.clone()),
                    }),
                    CekKont::Fn(f, k) => {
                        let (x, body) = f.lam.as_lam().expect("closures hold lambdas");
                        StepOutcome::Next(CekState {
                            control: body.clone(),
                            env: f.env.extend(x.clone(), v),
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
    use crate::machine::Halt;
    use crate::syntax::parse;

    #[test]
    fn identity_applied_to_identity() {
        let t = Cek.run_trace(&parse("((lambda (x) x) (lambda (y) y))").unwrap(), 100).unwrap();
        assert_eq!(t.states.len(), 5);
        assert_eq!(t.steps(), 4);
        assert_eq!(t.final_value().unwrap().lam.to_string(), "(lambda (y) y)");
    }

    #[test]
    fn omega_runs_out_of_fuel() {
        let t = Cek.run_trace(&parse("((lambda (x) (x x)) (lambda (x) (x x)))").unwrap(), 1000).unwrap();
        assert_eq!(t.halt, Halt::OutOfFuel);
        assert_eq!(t.steps(), 1000);
    }

    #[test]
    fn a_value_is_final_at_once() {
        let t = Cek.run_trace(&parse("(lambda (x) x)").unwrap(), 10).unwrap();
        assert_eq!(t.states.len(), 1);
        assert!(t.final_value().is_some());
    }

    #[test]
    fn open_programs_are_rejected() {
        assert!(matches!(Cek.inject(&parse("(f (lambda (x) x))").unwrap()), Err(InjectError::Open(_))));
    }
}
