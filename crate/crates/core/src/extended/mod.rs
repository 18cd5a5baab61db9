//! Conditionals, mutation, first-class continuations and exceptions on one
//! time-stamped machine with a handler register (CESHK*t), concrete and
//! abstract.
//!
//! Both machines share a single rule engine ([`rules`]) that is generic over
//! the store: the concrete store overwrites on `set!` and yields at most one
//! value per address, the abstract one joins and fans out.  Reified
//! continuations are addresses ([`ExtValue::KontV`]); a handler's saved
//! handler/continuation pair is store-allocated at the `catch` site.

mod machines;
mod rules;

use std::collections::BTreeSet;
use std::fmt;

use crate::gc::{live_exp, Touches};
use crate::machine::{Closure, Env};
use crate::store::{Addr, Time};
use crate::syntax::{Exp, ExpKind, Label};

pub use machines::{abstraction_map, state_leq, AbstractCeshk, AbstractExtState, Ceshk, ConcreteExtState, ExtContext};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ExtValue {
    Clo(Closure),
    False,
    /// The `callcc` primitive, remembering the occurrence it came from so
    /// that reifications can be allocated at that site.
    Callcc(Label),
    /// A reified continuation, by address.
    KontV(Addr),
}

impl fmt::Display for ExtValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtValue::Clo(c) => write!(f, "{c}"),
            ExtValue::False => f.write_str("#f"),
            ExtValue::Callcc(_) => f.write_str("callcc"),
            ExtValue::KontV(a) => write!(f, "kont({a})"),
        }
    }
}

impl Touches for ExtValue {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        match self {
            ExtValue::Clo(c) => c.touches(out),
            ExtValue::KontV(a) => {
                out.insert(a.clone());
            }
            ExtValue::False | ExtValue::Callcc(_) => {}
        }
    }
}

impl ExtValue {
    fn map_addrs(&self, f: &mut impl FnMut(&Addr) -> Addr) -> ExtValue {
        match self {
            ExtValue::Clo(c) => ExtValue::Clo(Closure::new(c.lam.clone(), c.env.map_addrs(f))),
            ExtValue::KontV(a) => ExtValue::KontV(f(a)),
            other => other.clone(),
        }
    }

    /// The closure's lambda, if this is a closure.
    pub fn lam(&self) -> Option<&Exp> {
        match self {
            ExtValue::Clo(c) => Some(&c.lam),
            _ => None,
        }
    }
}

/// The control register: an expression to evaluate (in the state's
/// environment) or a value that did not come from syntax in hand.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Control {
    Exp(Exp),
    Value(ExtValue),
}

impl fmt::Display for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Control::Exp(e) => write!(f, "{e}"),
            Control::Value(v) => write!(f, "{v}"),
        }
    }
}

impl Control {
    pub fn label(&self) -> Label {
        match self {
            Control::Exp(e) => e.label(),
            Control::Value(_) => Label::NONE,
        }
    }

    /// The value this control denotes, if it is one.
    pub fn value(&self, env: &Env) -> Option<ExtValue> {
        match self {
            Control::Value(v) => Some(v.clone()),
            Control::Exp(e) => syntactic_value(e, env),
        }
    }
}

pub(crate) fn syntactic_value(e: &Exp, env: &Env) -> Option<ExtValue> {
    match e.kind() {
        ExpKind::Lam(..) => Some(ExtValue::Clo(Closure::new(e.clone(), env.clone()))),
        ExpKind::False => Some(ExtValue::False),
        ExpKind::Callcc => Some(ExtValue::Callcc(e.label())),
        _ => None,
    }
}

/// Puts a value back in the control register.
pub(crate) fn control_of(v: &ExtValue) -> (Control, Env) {
    match v {
        ExtValue::Clo(c) => (Control::Exp(c.lam.clone()), c.env.clone()),
        other => (Control::Value(other.clone()), Env::new()),
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ExtKont {
    Mt,
    Ar(Exp, Env, Addr),
    Fn(ExtValue, Addr),
    /// then-branch, else-branch.
    If(Exp, Exp, Env, Addr),
    /// Address of the mutated variable, then the tail.
    Set(Addr, Addr),
}

impl fmt::Display for ExtKont {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtKont::Mt => f.write_str("mt"),
            ExtKont::Ar(e, env, a) => write!(f, "ar({e}, {env}, {a})"),
            ExtKont::Fn(v, a) => write!(f, "fn({v}, {a})"),
            ExtKont::If(t, e, env, a) => write!(f, "if({t}, {e}, {env}, {a})"),
            ExtKont::Set(x, a) => write!(f, "set({x}, {a})"),
        }
    }
}

impl Touches for ExtKont {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        match self {
            ExtKont::Mt => {}
            ExtKont::Ar(e, env, a) => {
                live_exp(e, env, out);
                out.insert(a.clone());
            }
            ExtKont::Fn(v, a) => {
                v.touches(out);
                out.insert(a.clone());
            }
            ExtKont::If(t, e, env, a) => {
                live_exp(t, env, out);
                live_exp(e, env, out);
                out.insert(a.clone());
            }
            ExtKont::Set(x, a) => {
                out.insert(x.clone());
                out.insert(a.clone());
            }
        }
    }
}

impl ExtKont {
    fn map_addrs(&self, f: &mut impl FnMut(&Addr) -> Addr) -> ExtKont {
        match self {
            ExtKont::Mt => ExtKont::Mt,
            ExtKont::Ar(e, env, a) => ExtKont::Ar(e.clone(), env.map_addrs(&mut *f), f(a)),
            ExtKont::Fn(v, a) => ExtKont::Fn(v.map_addrs(f), f(a)),
            ExtKont::If(t, e, env, a) => ExtKont::If(t.clone(), e.clone(), env.map_addrs(&mut *f), f(a)),
            ExtKont::Set(x, a) => ExtKont::Set(f(x), f(a)),
        }
    }
}

/// The handler register.  `Hn` holds the handler lambda, its environment and
/// the address of the saved (handler, continuation) pair.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Handler {
    Mt,
    Hn(Exp, Env, Addr),
}

impl fmt::Display for Handler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Handler::Mt => f.write_str("mt"),
            Handler::Hn(v, env, a) => write!(f, "hn({v}, {env}, {a})"),
        }
    }
}

impl Touches for Handler {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        if let Handler::Hn(v, env, a) = self {
            live_exp(v, env, out);
            out.insert(a.clone());
        }
    }
}

impl Handler {
    fn map_addrs(&self, f: &mut impl FnMut(&Addr) -> Addr) -> Handler {
        match self {
            Handler::Mt => Handler::Mt,
            Handler::Hn(v, env, a) => Handler::Hn(v.clone(), env.map_addrs(&mut *f), f(a)),
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ExtStorable {
    Val(ExtValue),
    Kont(ExtKont),
    Pair(Handler, ExtKont),
}

impl fmt::Display for ExtStorable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtStorable::Val(v) => write!(f, "{v}"),
            ExtStorable::Kont(k) => write!(f, "{k}"),
            ExtStorable::Pair(h, k) => write!(f, "({h}, {k})"),
        }
    }
}

impl Touches for ExtStorable {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        match self {
            ExtStorable::Val(v) => v.touches(out),
            ExtStorable::Kont(k) => k.touches(out),
            ExtStorable::Pair(h, k) => {
                h.touches(out);
                k.touches(out);
            }
        }
    }
}

impl ExtStorable {
    fn map_addrs(&self, f: &mut impl FnMut(&Addr) -> Addr) -> ExtStorable {
        match self {
            ExtStorable::Val(v) => ExtStorable::Val(v.map_addrs(f)),
            ExtStorable::Kont(k) => ExtStorable::Kont(k.map_addrs(f)),
            ExtStorable::Pair(h, k) => ExtStorable::Pair(h.map_addrs(f), k.map_addrs(f)),
        }
    }
}

/// A CESHK*t state over store type `H`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ExtState<H> {
    pub control: Control,
    pub env: Env,
    pub store: H,
    pub handler: Handler,
    pub kont: ExtKont,
    pub time: Time,
}

impl<H> fmt::Display for ExtState<H> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}, {}, {}, {}>", self.control, self.env, self.handler, self.kont, self.time)
    }
}

impl<H> ExtState<H> {
    pub(crate) fn roots(&self) -> BTreeSet<Addr> {
        let mut out = BTreeSet::new();
        match &self.control {
            Control::Exp(e) => live_exp(e, &self.env, &mut out),
            Control::Value(v) => v.touches(&mut out),
        }
        self.handler.touches(&mut out);
        self.kont.touches(&mut out);
        out
    }
}
