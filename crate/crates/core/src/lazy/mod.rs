//! The by-need Krivine machine (LK), its store-allocated-continuation form
//! (LK*), and the abstract LK*, each in three variants.
//!
//! Thunks live in the store as [`Thunk::Delayed`] until forced, then are
//! overwritten (concretely) or joined (abstractly) with
//! [`Thunk::Computed`].  Allocation sites are tagged so one transition can
//! allocate several addresses: an operand thunk is keyed by the operand's
//! label, an application's continuation by the application's label, and an
//! update frame by the label of the variable occurrence being forced.

mod abs;
mod lk;
mod star;

use std::collections::BTreeSet;
use std::fmt;

use crate::gc::{live_exp, Touches};
use crate::machine::Env;
use crate::store::Addr;
use crate::syntax::Exp;

pub use abs::{abstraction_map, state_leq, AbstractLk, AbstractLkState, LkContext};
pub use lk::{Lk, LkKont, LkState};
pub use star::{LkStarState, LkStarT};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub enum Variant {
    /// Every operand becomes a delayed thunk.
    #[default]
    Standard,
    /// Variable operands reuse their address; lambda operands are stored
    /// already computed.
    Optimized,
    /// Thunks are created when the operator is applied, not when the
    /// application is entered.
    Postponed,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Standard, Variant::Optimized, Variant::Postponed];
}

/// Storables of the lazy machines.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Thunk {
    Delayed(Exp, Env),
    Computed(Exp, Env),
}

impl fmt::Display for Thunk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Thunk::Delayed(e, env) => write!(f, "d({e}, {env})"),
            Thunk::Computed(v, env) => write!(f, "c({v}, {env})"),
        }
    }
}

impl Touches for Thunk {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        match self {
            Thunk::Delayed(e, env) | Thunk::Computed(e, env) => live_exp(e, env, out),
        }
    }
}

/// The argument carried by an application frame.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum LkArg {
    /// Address of the operand's thunk.
    Addr(Addr),
    /// The operand itself, for the postponed variant.
    Deferred(Exp, Env),
}

impl fmt::Display for LkArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LkArg::Addr(a) => write!(f, "{a}"),
            LkArg::Deferred(e, env) => write!(f, "{e}, {env}"),
        }
    }
}

impl Touches for LkArg {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        match self {
            LkArg::Addr(a) => {
                out.insert(a.clone());
            }
            LkArg::Deferred(e, env) => live_exp(e, env, out),
        }
    }
}

/// Store-allocated frames: `Update` is pushed when a delayed variable is
/// forced, `Apply` when an application evaluates its operator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum LkFrame {
    Mt,
    Update(Addr, Addr),
    Apply(LkArg, Addr),
}

impl fmt::Display for LkFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LkFrame::Mt => f.write_str("mt"),
            LkFrame::Update(a, k) => write!(f, "update({a}, {k})"),
            LkFrame::Apply(x, k) => write!(f, "apply({x}, {k})"),
        }
    }
}

impl Touches for LkFrame {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        match self {
            LkFrame::Mt => {}
            LkFrame::Update(a, k) => {
                out.insert(a.clone());
                out.insert(k.clone());
            }
            LkFrame::Apply(x, k) => {
                x.touches(out);
                out.insert(k.clone());
            }
        }
    }
}

impl LkFrame {
    fn map_addrs(&self, f: &mut impl FnMut(&Addr) -> Addr) -> LkFrame {
        match self {
            LkFrame::Mt => LkFrame::Mt,
            LkFrame::Update(a, k) => LkFrame::Update(f(a), f(k)),
            LkFrame::Apply(LkArg::Addr(a), k) => LkFrame::Apply(LkArg::Addr(f(a)), f(k)),
            LkFrame::Apply(LkArg::Deferred(e, env), k) => LkFrame::Apply(LkArg::Deferred(e.clone(), env.map_addrs(&mut *f)), f(k)),
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum LkStorable {
    Thunk(Thunk),
    Kont(LkFrame),
}

impl fmt::Display for LkStorable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LkStorable::Thunk(t) => write!(f, "{t}"),
            LkStorable::Kont(k) => write!(f, "{k}"),
        }
    }
}

impl Touches for LkStorable {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        match self {
            LkStorable::Thunk(t) => t.touches(out),
            LkStorable::Kont(k) => k.touches(out),
        }
    }
}

impl LkStorable {
    fn map_addrs(&self, f: &mut impl FnMut(&Addr) -> Addr) -> LkStorable {
        match self {
            LkStorable::Thunk(Thunk::Delayed(e, env)) => LkStorable::Thunk(Thunk::Delayed(e.clone(), env.map_addrs(f))),
            LkStorable::Thunk(Thunk::Computed(e, env)) => LkStorable::Thunk(Thunk::Computed(e.clone(), env.map_addrs(f))),
            LkStorable::Kont(k) => LkStorable::Kont(k.map_addrs(f)),
        }
    }
}

/// Which operand an application should allocate under `variant`, and how.
pub(crate) enum Operand<'a> {
    /// Allocate a delayed thunk for the operand.
    Delay,
    /// Reuse the variable's address.
    Share(&'a Addr),
    /// Store the lambda already computed.
    Value,
    /// Carry the operand in the frame.
    Defer,
}

pub(crate) fn operand<'a>(variant: Variant, e1: &Exp, env: &'a Env) -> Operand<'a> {
    match variant {
        Variant::Standard => Operand::Delay,
        Variant::Postponed => Operand::Defer,
        Variant::Optimized => {
            if let Some(x) = e1.as_ref() {
                match env.get(x) {
                    Some(a) => Operand::Share(a),
                    None => Operand::Delay,
                }
            } else if e1.is_lam() {
                Operand::Value
            } else {
                Operand::Delay
            }
        }
    }
}

/// A lazy state with every address resolved to the thunk it denotes, used to
/// relate runs of machines that name their addresses differently.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Canonical {
    pub control: Exp,
    pub env: CanonEnv,
    pub kont: Vec<CanonFrame>,
}

pub type CanonEnv = std::collections::BTreeMap<crate::syntax::Var, CanonThunk>;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CanonThunk {
    pub computed: bool,
    pub exp: Exp,
    pub env: CanonEnv,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum CanonFrame {
    Update(CanonThunk),
    Apply(CanonThunk),
    Deferred(Exp, CanonEnv),
}

/// Resolves addresses through `thunk_at`.  Environments of lazy machines are
/// acyclic: a thunk's environment predates its address.
pub(crate) struct Canonicalizer<F>(pub F);

impl<F: Fn(&Addr) -> Thunk> Canonicalizer<F> {
    pub fn env(&self, env: &Env) -> CanonEnv {
        env.iter().map(|(x, a)| (x.clone(), self.addr(a))).collect()
    }

    pub fn addr(&self, a: &Addr) -> CanonThunk {
        match (self.0)(a) {
            Thunk::Delayed(e, env) => CanonThunk { computed: false, exp: e, env: self.env(&env) },
            Thunk::Computed(e, env) => CanonThunk { computed: true, exp: e, env: self.env(&env) },
        }
    }

    pub fn arg(&self, arg: &LkArg) -> CanonFrame {
        match arg {
            LkArg::Addr(a) => CanonFrame::Apply(self.addr(a)),
            LkArg::Deferred(e, env) => CanonFrame::Deferred(e.clone(), self.env(env)),
        }
    }
}
