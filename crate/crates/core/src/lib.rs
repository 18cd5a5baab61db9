//! Abstract interpreters derived from abstract machines.
//!
//! Each analysis here starts life as an ordinary interpreter — a CEK-style
//! machine — and is turned into a finite static analysis by two mechanical
//! steps: allocate continuations (and bindings) in the store, then bound the
//! store's address space with an allocation [`policy`].  The same recipe is
//! applied to a lazy Krivine machine, to a language with conditionals,
//! mutation, `callcc` and exceptions, and to a stack-inspection calculus;
//! abstract garbage collection and a pushdown variant round things out.
//!
//! ```
//! use aam::prelude::*;
//!
//! let e = parse("((lambda (x) x) (lambda (y) y))").unwrap();
//! let trace = Cek.run_trace(&e, 100).unwrap();
//! assert_eq!(trace.final_value().unwrap().lam.to_string(), "(lambda (y) y)");
//!
//! let graph = explore(&AbstractCesk::new(Contours::k_cfa(0)), &e).unwrap();
//! assert_eq!(graph.finals().count(), 1);
//! ```

pub mod analysis;
pub mod concrete;
pub mod corpus;
pub mod extended;
pub mod gc;
pub mod graph;
pub mod lazy;
pub mod machine;
pub mod policy;
pub mod pushdown;
pub mod security;
pub mod store;
pub mod syntax;
pub mod view;

/// The names most programs need.
pub mod prelude {
    pub use crate::analysis::{AbstractCesk, AbstractState, ZeroCfa};
    pub use crate::concrete::{Cek, Cesk, CeskStar, CeskStarT};
    pub use crate::graph::{explore, StateGraph};
    pub use crate::machine::{AbstractMachine, Closure, ConcreteMachine, Env, Halt, StepOutcome, Trace};
    pub use crate::policy::{Contours, Counter, Policy, TickKeyed};
    pub use crate::store::{AbstractStore, Addr, ConcreteStore, Lattice, MonoAddr, Time};
    pub use crate::syntax::{parse, parse_program, Exp, Label, Var};
}

/// The guide's snippets, compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/syntax.md")]
    mod syntax {}
    #[doc = include_str!("../../../book/src/concrete.md")]
    mod concrete {}
    #[doc = include_str!("../../../book/src/abstraction.md")]
    mod abstraction {}
    #[doc = include_str!("../../../book/src/widening.md")]
    mod widening {}
    #[doc = include_str!("../../../book/src/lazy.md")]
    mod lazy {}
    #[doc = include_str!("../../../book/src/extended.md")]
    mod extended {}
    #[doc = include_str!("../../../book/src/gc.md")]
    mod gc {}
    #[doc = include_str!("../../../book/src/security.md")]
    mod security {}
    #[doc = include_str!("../../../book/src/pushdown.md")]
    mod pushdown {}
}
