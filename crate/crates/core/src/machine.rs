//! Pieces shared by every machine: environments, closures, step outcomes,
//! traces, and the two machine traits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::Hash;
use std::sync::Arc;

use crate::store::Addr;
use crate::syntax::{Exp, Form, UnsupportedForm, Var};

/// A finite map from variables to addresses.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Env(Arc<BTreeMap<Var, Addr>>);

impl Env {
    pub fn new() -> Env {
        Env::default()
    }

    pub fn get(&self, x: &Var) -> Option<&Addr> {
        self.0.get(x)
    }

    pub fn extend(&self, x: Var, a: Addr) -> Env {
        let mut m = self.0.clone();
        Arc::make_mut(&mut m).insert(x, a);
        Env(m)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Addr)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `rng(ρ|fv)`: the addresses of the given variables.
    pub fn range_of<'a>(&'a self, vars: impl IntoIterator<Item = &'a Var>) -> impl Iterator<Item = &'a Addr> {
        vars.into_iter().filter_map(move |x| self.0.get(x))
    }

    pub fn map_addrs(&self, mut f: impl FnMut(&Addr) -> Addr) -> Env {
        Env(Arc::new(self.0.iter().map(|(x, a)| (x.clone(), f(a))).collect()))
    }
}

impl FromIterator<(Var, Addr)> for Env {
    fn from_iter<I: IntoIterator<Item = (Var, Addr)>>(iter: I) -> Self {
        Env(Arc::new(iter.into_iter().collect()))
    }
}

impl fmt::Display for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (x, a)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{x}: {a}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A lambda closed by an environment.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Closure {
    pub lam: Exp,
    pub env: Env,
}

impl Closure {
    pub fn new(lam: Exp, env: Env) -> Closure {
        debug_assert!(lam.is_lam(), "closure over a non-lambda");
        Closure { lam, env }
    }
}

impl fmt::Display for Closure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}>", self.lam, self.env)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InjectError {
    #[error("open program: free variables {}", names(.0))]
    Open(BTreeSet<Var>),
    #[error(transparent)]
    Unsupported(#[from] UnsupportedForm),
}

fn names(vs: &BTreeSet<Var>) -> String {
    vs.iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
}

/// Checks that `e` is closed and uses only `forms`.
pub fn check_program(e: &Exp, forms: &[Form]) -> Result<(), InjectError> {
    e.check_forms(forms)?;
    if !e.free_vars().is_empty() {
        return Err(InjectError::Open(e.free_vars().clone()));
    }
    Ok(())
}

/// Result of one concrete transition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome<S, V> {
    Next(S),
    Final(V),
    Stuck(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Halt<V> {
    Final(V),
    Stuck(String),
    OutOfFuel,
}

/// The states visited from injection until the machine halted or ran out
/// of fuel.  A final or stuck state is the last element of `states`.
#[derive(Clone, Debug)]
pub struct Trace<S, V> {
    pub states: Vec<S>,
    pub halt: Halt<V>,
}

impl<S, V> Trace<S, V> {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn final_value(&self) -> Option<&V> {
        match &self.halt {
            Halt::Final(v) => Some(v),
            _ => None,
        }
    }
}

/// A deterministic machine.
pub trait ConcreteMachine {
    type State: Clone;
    type Value: Clone;

    fn inject(&self, e: &Exp) -> Result<Self::State, InjectError>;
    fn step(&self, s: &Self::State) -> StepOutcome<Self::State, Self::Value>;

    /// Runs from `init`, taking at most `fuel` transitions.
    fn run_from(&self, init: Self::State, fuel: usize) -> Trace<Self::State, Self::Value> {
        let mut states = vec![init];
        let mut taken = 0;
        loop {
            let here = states.last().expect("trace is never empty");
            match self.step(here) {
                StepOutcome::Final(v) => return Trace { states, halt: Halt::Final(v) },
                StepOutcome::Stuck(r) => return Trace { states, halt: Halt::Stuck(r) },
                StepOutcome::Next(s) => {
                    if taken == fuel {
                        return Trace { states, halt: Halt::OutOfFuel };
                    }
                    taken += 1;
                    states.push(s);
                }
            }
        }
    }

    fn run_trace(&self, e: &Exp, fuel: usize) -> Result<Trace<Self::State, Self::Value>, InjectError> {
        Ok(self.run_from(self.inject(e)?, fuel))
    }
}

/// A nondeterministic machine over a finite (or pushdown-finite) space.
pub trait AbstractMachine: Sync {
    type State: Clone + Eq + Hash + Send + Sync;

    fn inject(&self, e: &Exp) -> Result<Self::State, InjectError>;
    fn step(&self, s: &Self::State) -> Vec<Self::State>;
    fn is_final(&self, s: &Self::State) -> bool;
}

impl<M: AbstractMachine> AbstractMachine for &M {
    type State = M::State;

    fn inject(&self, e: &Exp) -> Result<Self::State, InjectError> {
        (*self).inject(e)
    }

    fn step(&self, s: &Self::State) -> Vec<Self::State> {
        (*self).step(s)
    }

    fn is_final(&self, s: &Self::State) -> bool {
        (*self).is_final(s)
    }
}
