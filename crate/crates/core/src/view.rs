//! Uniform, printable views of machine states.
//!
//! Every state type renders to a [`StateView`] of strings, so front ends can
//! report any machine the same way, and contributes `(variable, lambda)`
//! pairs to a value-flow table projected onto variable names.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;

use crate::analysis::{AbstractState, ZeroState, ZeroStorable};
use crate::concrete::{CekEnv, CekKont, CekState, CeskKont, CeskState, StarState, Storable, TimedState};
use crate::extended::{Control, ExtState, ExtStorable, ExtValue};
use crate::lazy::{AbstractLkState, LkStarState, LkState, LkStorable, Thunk};
use crate::machine::{Closure, Env};
use crate::pushdown::PdNode;
use crate::security::{CmState, CmStorable, MarkedState};
use crate::store::{AbstractStore, Addr, ConcreteStore};
use crate::syntax::{Exp, Var};

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct StateView {
    pub control: String,
    /// Variable to address (or, for CEK, to closure).
    pub env: Vec<(String, String)>,
    /// Address to the storables it holds.
    pub store: Vec<(String, Vec<String>)>,
    pub kont: String,
    pub time: Option<String>,
}

pub trait Describe {
    fn view(&self) -> StateView;
    /// Bindings of variables to lambdas visible in this state.
    fn flows(&self) -> Vec<(Var, Exp)>;

    /// Lambdas held at each binding address, contours kept.
    fn bindings(&self) -> Vec<(Addr, Exp)> {
        vec![]
    }
}

/// Variable name to the set of lambdas bound to it anywhere in `states`.
pub fn value_flow<'a, S: Describe + 'a>(states: impl IntoIterator<Item = &'a S>) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for s in states {
        for (x, lam) in s.flows() {
            out.entry(x.name().to_string()).or_default().insert(lam.to_string());
        }
    }
    out
}

/// Binding address to the set of lambdas it holds anywhere in `states`.
pub fn binding_flow<'a, S: Describe + 'a>(states: impl IntoIterator<Item = &'a S>) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for s in states {
        for (a, lam) in s.bindings() {
            out.entry(a.to_string()).or_default().insert(lam.to_string());
        }
    }
    out
}

/// Storables that may hold a value.
trait Valued: Display {
    fn lam(&self) -> Option<&Exp>;
}

impl Valued for Closure {
    fn lam(&self) -> Option<&Exp> {
        Some(&self.lam)
    }
}

impl Valued for Storable {
    fn lam(&self) -> Option<&Exp> {
        match self {
            Storable::Clo(c) => Some(&c.lam),
            Storable::Kont(_) => None,
        }
    }
}

impl Valued for ZeroStorable {
    fn lam(&self) -> Option<&Exp> {
        match self {
            ZeroStorable::Lam(l) => Some(l),
            ZeroStorable::Kont(_) => None,
        }
    }
}

impl Valued for Thunk {
    fn lam(&self) -> Option<&Exp> {
        match self {
            Thunk::Computed(l, _) => Some(l),
            Thunk::Delayed(..) => None,
        }
    }
}

impl Valued for LkStorable {
    fn lam(&self) -> Option<&Exp> {
        match self {
            LkStorable::Thunk(t) => t.lam(),
            LkStorable::Kont(_) => None,
        }
    }
}

impl Valued for ExtStorable {
    fn lam(&self) -> Option<&Exp> {
        match self {
            ExtStorable::Val(ExtValue::Clo(c)) => Some(&c.lam),
            _ => None,
        }
    }
}

impl Valued for CmStorable {
    fn lam(&self) -> Option<&Exp> {
        match self {
            CmStorable::Clo(c) => Some(&c.lam),
            CmStorable::Kont(_) => None,
        }
    }
}

/// Read access shared by both store kinds.
trait Shown {
    type Item: Valued;
    fn entries(&self) -> Vec<(&Addr, Vec<&Self::Item>)>;
}

impl<S: Valued + Clone> Shown for ConcreteStore<S> {
    type Item = S;
    fn entries(&self) -> Vec<(&Addr, Vec<&S>)> {
        self.iter().map(|(a, v)| (a, vec![v])).collect()
    }
}

impl<S: Valued + Ord + Clone> Shown for AbstractStore<S> {
    type Item = S;
    fn entries(&self) -> Vec<(&Addr, Vec<&S>)> {
        self.iter().map(|(a, vs)| (a, vs.iter().collect())).collect()
    }
}

fn show_store(store: &impl Shown) -> Vec<(String, Vec<String>)> {
    store.entries().into_iter().map(|(a, vs)| (a.to_string(), vs.iter().map(|v| v.to_string()).collect())).collect()
}

fn show_env(env: &Env) -> Vec<(String, String)> {
    env.iter().map(|(x, a)| (x.to_string(), a.to_string())).collect()
}

/// Lambdas reachable from variables: through the environment, and through
/// binding addresses that name their variable.
fn store_flows<H: Shown>(env: &Env, store: &H) -> Vec<(Var, Exp)> {
    let entries = store.entries();
    let mut out = vec![];
    for (a, vs) in &entries {
        if let Some(x) = a.binding_var() {
            out.extend(vs.iter().filter_map(|v| v.lam()).map(|l| (x.clone(), l.clone())));
        }
    }
    for (x, a) in env.iter() {
        if let Some((_, vs)) = entries.iter().find(|(b, _)| *b == a) {
            out.extend(vs.iter().filter_map(|v| v.lam()).map(|l| (x.clone(), l.clone())));
        }
    }
    out
}

fn store_bindings<H: Shown>(store: &H) -> Vec<(Addr, Exp)> {
    let mut out = vec![];
    for (a, vs) in store.entries() {
        if a.binding_var().is_some() {
            out.extend(vs.iter().filter_map(|v| v.lam()).map(|l| (a.clone(), l.clone())));
        }
    }
    out
}

fn cek_env(env: &CekEnv) -> String {
    let items: Vec<String> = env.iter().map(|(x, c)| format!("{x}: {}", c.lam)).collect();
    format!("{{{}}}", items.join(", "))
}

fn cek_kont(k: &CekKont) -> String {
    match k {
        CekKont::Mt => "mt".into(),
        CekKont::Ar(e, env, k) => format!("ar({e}, {}, {})", cek_env(env), cek_kont(k)),
        CekKont::Fn(c, k) => format!("fn({}, {}, {})", c.lam, cek_env(&c.env), cek_kont(k)),
    }
}

fn cek_flows(env: &CekEnv, out: &mut Vec<(Var, Exp)>, depth: usize) {
    if depth == 0 {
        return;
    }
    for (x, c) in env.iter() {
        out.push((x.clone(), c.lam.clone()));
        cek_flows(&c.env, out, depth - 1);
    }
}

impl Describe for CekState {
    fn view(&self) -> StateView {
        StateView {
            control: self.control.to_string(),
            env: self.env.iter().map(|(x, c)| (x.to_string(), format!("{}", c.lam))).collect(),
            store: vec![],
            kont: cek_kont(&self.kont),
            time: None,
        }
    }

    fn flows(&self) -> Vec<(Var, Exp)> {
        let mut out = vec![];
        cek_flows(&self.env, &mut out, 8);
        out
    }
}

fn cesk_kont(k: &CeskKont) -> String {
    match k {
        CeskKont::Mt => "mt".into(),
        CeskKont::Ar(e, env, k) => format!("ar({e}, {env}, {})", cesk_kont(k)),
        CeskKont::Fn(c, k) => format!("fn({}, {}, {})", c.lam, c.env, cesk_kont(k)),
    }
}

impl Describe for CeskState {
    fn view(&self) -> StateView {
        StateView {
            control: self.control.to_string(),
            env: show_env(&self.env),
            store: show_store(&self.store),
            kont: cesk_kont(&self.kont),
            time: None,
        }
    }

    fn flows(&self) -> Vec<(Var, Exp)> {
        store_flows(&self.env, &self.store)
    }

    fn bindings(&self) -> Vec<(Addr, Exp)> {
        store_bindings(&self.store)
    }
}

/// States with the usual five named registers.
macro_rules! describe_fields {
    ($ty:ty, $time:expr) => {
        impl Describe for $ty {
            fn view(&self) -> StateView {
                StateView {
                    control: self.control.to_string(),
                    env: show_env(&self.env),
                    store: show_store(&self.store),
                    kont: self.kont.to_string(),
                    time: ($time)(self),
                }
            }

            fn flows(&self) -> Vec<(Var, Exp)> {
                store_flows(&self.env, &self.store)
            }

            fn bindings(&self) -> Vec<(Addr, Exp)> {
                store_bindings(&self.store)
            }
        }
    };
}

describe_fields!(StarState, |_: &StarState| None);
describe_fields!(TimedState, |s: &TimedState| Some(s.time.to_string()));
describe_fields!(AbstractState, |s: &AbstractState| Some(s.time.to_string()));
describe_fields!(LkStarState, |s: &LkStarState| Some(s.time.to_string()));
describe_fields!(AbstractLkState, |s: &AbstractLkState| Some(s.time.to_string()));
describe_fields!(MarkedState<ConcreteStore<CmStorable>>, |s: &MarkedState<ConcreteStore<CmStorable>>| Some(s.time.to_string()));
describe_fields!(MarkedState<AbstractStore<CmStorable>>, |s: &MarkedState<AbstractStore<CmStorable>>| Some(s.time.to_string()));

impl Describe for LkState {
    fn view(&self) -> StateView {
        StateView {
            control: self.control.to_string(),
            env: show_env(&self.env),
            store: show_store(&self.store),
            kont: self.kont.to_string(),
            time: None,
        }
    }

    fn flows(&self) -> Vec<(Var, Exp)> {
        store_flows(&self.env, &self.store)
    }

    fn bindings(&self) -> Vec<(Addr, Exp)> {
        store_bindings(&self.store)
    }
}

impl Describe for CmState {
    fn view(&self) -> StateView {
        StateView {
            control: self.control.to_string(),
            env: show_env(&self.env),
            store: show_store(&self.store),
            kont: self.kont.to_string(),
            time: None,
        }
    }

    fn flows(&self) -> Vec<(Var, Exp)> {
        store_flows(&self.env, &self.store)
    }

    fn bindings(&self) -> Vec<(Addr, Exp)> {
        store_bindings(&self.store)
    }
}

impl<H: Shown<Item = ExtStorable>> Describe for ExtState<H> {
    fn view(&self) -> StateView {
        let control = match &self.control {
            Control::Exp(e) => e.to_string(),
            Control::Value(v) => v.to_string(),
        };
        StateView {
            control,
            env: show_env(&self.env),
            store: show_store(&self.store),
            kont: format!("{} / {}", self.kont, self.handler),
            time: Some(self.time.to_string()),
        }
    }

    fn flows(&self) -> Vec<(Var, Exp)> {
        store_flows(&self.env, &self.store)
    }

    fn bindings(&self) -> Vec<(Addr, Exp)> {
        store_bindings(&self.store)
    }
}

impl Describe for ZeroState {
    fn view(&self) -> StateView {
        StateView { control: self.control.to_string(), env: vec![], store: show_store(&self.store), kont: self.kont.to_string(), time: None }
    }

    fn flows(&self) -> Vec<(Var, Exp)> {
        store_flows(&Env::new(), &self.store)
    }

    fn bindings(&self) -> Vec<(Addr, Exp)> {
        store_bindings(&self.store)
    }
}

impl Describe for PdNode {
    fn view(&self) -> StateView {
        StateView {
            control: self.config.control.to_string(),
            env: show_env(&self.config.env),
            store: show_store(&self.config.store),
            kont: self.top.as_ref().map_or_else(|| "mt".to_string(), |f| f.to_string()),
            time: Some(self.config.time.to_string()),
        }
    }

    fn flows(&self) -> Vec<(Var, Exp)> {
        store_flows(&self.config.env, &self.config.store)
    }

    fn bindings(&self) -> Vec<(Addr, Exp)> {
        store_bindings(&self.config.store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::AbstractCesk;
    use crate::concrete::Cek;
    use crate::graph::explore;
    use crate::machine::ConcreteMachine;
    use crate::policy::Contours;
    use crate::syntax::parse;

    const TWO_CALLS: &str = "((lambda (f) ((f (lambda (a) a)) (f (lambda (b) b)))) (lambda (x) x))";

    #[test]
    fn zero_cfa_merges_x() {
        let e = parse(TWO_CALLS).unwrap();
        let g = explore(&AbstractCesk::new(Contours::k_cfa(0)), &e).unwrap();
        let flow = value_flow(g.states());
        assert_eq!(flow["x"].len(), 2);
        assert_eq!(flow["f"], BTreeSet::from(["(lambda (x) x)".to_string()]));
    }

    #[test]
    fn concrete_flow_matches_the_abstract_one_here() {
        let e = parse(TWO_CALLS).unwrap();
        let t = Cek.run_trace(&e, 100).unwrap();
        let flow = value_flow(t.states.iter());
        assert_eq!(flow["x"].len(), 2);
        let v = t.states[0].view();
        assert_eq!(v.kont, "mt");
        assert_eq!(v.control, TWO_CALLS);
    }
}
