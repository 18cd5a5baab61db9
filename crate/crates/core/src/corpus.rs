//! Named fixtures and seeded random program generators.
//!
//! Generated programs are built as text and parsed, so their labels are the
//! ordinary preorder labels.  Every generator is a pure function of its seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::concrete::{Cek, CekKont};
use crate::extended::Ceshk;
use crate::machine::{ConcreteMachine, Halt};
use crate::policy::TickKeyed;
use crate::security::Cm;
use crate::syntax::{parse, perms, Exp};

pub const ID_ID: &str = "((lambda (x) x) (lambda (y) y))";
pub const OMEGA: &str = "((lambda (x) (x x)) (lambda (x) (x x)))";
/// Two calls of one function; 0-CFA merges the argument.
pub const TWO_CALLS: &str = "((lambda (f) ((f (lambda (a) a)) (f (lambda (b) b)))) (lambda (x) x))";
/// The second call's argument is the only live binding of `x` at the end.
pub const GC_FIXTURE: &str = "((lambda (f) ((lambda (d) (f (lambda (b) b))) (f (lambda (a) a)))) (lambda (x) x))";
/// Returns of an inner call site flow back to both callers without a stack.
pub const PUSHDOWN_FIXTURE: &str = "((lambda (h) ((lambda (r) (h (lambda (b) b))) (h (lambda (a) a)))) (lambda (v) ((lambda (w) w) v)))";
pub const LAZY_FIXTURE: &str = "((lambda (f) (f f)) (lambda (y) y))";

pub const IF_FALSE: &str = "(if #f (lambda (a) a) (lambda (b) b))";
pub const SET_FIXTURE: &str = "((lambda (x) (set! x (lambda (b) b))) (lambda (a) a))";
pub const CALLCC_FIXTURE: &str = "((lambda (t) t) (callcc (lambda (k) ((k (lambda (a) a)) (lambda (b) b)))))";
pub const CATCH_FIXTURE: &str = "(catch ((lambda (x) (throw (lambda (a) a))) (lambda (b) b)) (lambda (y) y))";

pub const CM_NO_FRAME: &str = "(test (p) (lambda (a) a) (lambda (b) b))";
pub const CM_FRAME_DENY: &str = "(frame () (test (p) (lambda (a) a) (lambda (b) b)))";
pub const CM_FRAME_GRANT: &str = "(frame () (grant (p) (test (p) (lambda (a) a) (lambda (b) b))))";

/// Named core-language fixtures, all terminating except `omega`.
pub const CORE_FIXTURES: &[(&str, &str)] = &[
    ("id-id", ID_ID),
    ("omega", OMEGA),
    ("two-call", TWO_CALLS),
    ("gc", GC_FIXTURE),
    ("pushdown", PUSHDOWN_FIXTURE),
    ("lazy", LAZY_FIXTURE),
];

/// Extended-language fixtures with their expected final lambdas.
pub const EXTENDED_FIXTURES: &[(&str, &str, &str)] = &[
    ("if-false", IF_FALSE, "(lambda (b) b)"),
    ("set", SET_FIXTURE, "(lambda (a) a)"),
    ("callcc", CALLCC_FIXTURE, "(lambda (a) a)"),
    ("catch", CATCH_FIXTURE, "(lambda (a) a)"),
];

/// Stack-inspection fixtures under the universe `{p}`.
pub const CM_FIXTURES: &[(&str, &str, &str)] = &[
    ("no-frame", CM_NO_FRAME, "(lambda (a) a)"),
    ("frame-deny", CM_FRAME_DENY, "(lambda (b) b)"),
    ("frame-grant", CM_FRAME_GRANT, "(lambda (a) a)"),
];

pub const DEFAULT_SEED: u64 = 0x5eed;
pub const FUEL: usize = 1000;
pub const MAX_DEPTH: usize = 6;

const VARS: &[&str] = &["x", "y", "z", "f", "g"];

/// What a generator may emit besides variables, lambdas and applications.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Dialect {
    Core,
    Extended,
    Security,
}

struct Gen {
    rng: ChaCha8Rng,
    dialect: Dialect,
}

impl Gen {
    fn new(seed: u64, dialect: Dialect) -> Gen {
        Gen { rng: ChaCha8Rng::seed_from_u64(seed), dialect }
    }

    /// A closed-under-`scope` term of depth at most `d` (`d ≥ 2` when
    /// `scope` is empty).
    fn term(&mut self, d: usize, scope: &mut Vec<&'static str>) -> String {
        let can_ref = !scope.is_empty();
        if d <= 1 {
            return self.leaf(scope);
        }
        let roll = self.rng.gen_range(0..100);
        let app_ok = d >= 3 || can_ref;
        match roll {
            0..=24 if can_ref => self.leaf(scope),
            0..=54 if app_ok => {
                let a = self.term(d - 1, scope);
                let b = self.term(d - 1, scope);
                format!("({a} {b})")
            }
            55..=84 => self.lam(d, scope),
            _ => match self.dialect {
                Dialect::Core => self.lam(d, scope),
                Dialect::Extended => self.extended(d, scope),
                Dialect::Security => self.security(d, scope),
            },
        }
    }

    fn leaf(&mut self, scope: &[&'static str]) -> String {
        match self.dialect {
            Dialect::Extended if self.rng.gen_bool(0.15) => "#f".into(),
            Dialect::Extended if self.rng.gen_bool(0.1) => "callcc".into(),
            _ => scope.choose(&mut self.rng).expect("leaf needs a variable in scope").to_string(),
        }
    }

    fn lam(&mut self, d: usize, scope: &mut Vec<&'static str>) -> String {
        let x = *VARS.choose(&mut self.rng).unwrap();
        scope.push(x);
        let body = self.term(d - 1, scope);
        scope.pop();
        format!("(lambda ({x}) {body})")
    }

    fn value(&mut self, d: usize, scope: &mut Vec<&'static str>) -> String {
        match self.rng.gen_range(0..4) {
            0 => "#f".into(),
            1 => "callcc".into(),
            _ => self.lam(d, scope),
        }
    }

    fn extended(&mut self, d: usize, scope: &mut Vec<&'static str>) -> String {
        let d1 = d - 1;
        let sub = |g: &mut Gen, scope: &mut Vec<&'static str>| if d1 >= 2 || !scope.is_empty() { g.term(d1, scope) } else { "#f".into() };
        match self.rng.gen_range(0..5) {
            0 => {
                let (c, t, e) = (sub(self, scope), sub(self, scope), sub(self, scope));
                format!("(if {c} {t} {e})")
            }
            1 if !scope.is_empty() => {
                let x = *scope.choose(&mut self.rng).unwrap();
                format!("(set! {x} {})", sub(self, scope))
            }
            2 if d1 >= 2 => format!("(throw {})", self.value(d1, scope)),
            3 if d1 >= 2 => {
                let body = sub(self, scope);
                format!("(catch {body} {})", self.lam(d1, scope))
            }
            _ => format!("(callcc {})", if d1 >= 2 { self.lam(d1, scope) } else { "callcc".into() }),
        }
    }

    fn security(&mut self, d: usize, scope: &mut Vec<&'static str>) -> String {
        let d1 = d - 1;
        let r = ["()", "(p)", "(q)", "(p q)"].choose(&mut self.rng).unwrap().to_string();
        let sub = |g: &mut Gen, scope: &mut Vec<&'static str>| if d1 >= 2 || !scope.is_empty() { g.term(d1, scope) } else { "fail".into() };
        match self.rng.gen_range(0..4) {
            0 => format!("(frame {r} {})", sub(self, scope)),
            1 => format!("(grant {r} {})", sub(self, scope)),
            2 => {
                let (a, b) = (sub(self, scope), sub(self, scope));
                format!("(test {r} {a} {b})")
            }
            _ => "fail".into(),
        }
    }

    /// A top-level application, so every program does some work.
    fn program(&mut self, max_depth: usize) -> Exp {
        let d = self.rng.gen_range(3..=max_depth);
        let mut scope = vec![];
        let a = self.term(d - 1, &mut scope);
        let b = self.term(d - 1, &mut scope);
        parse(&format!("({a} {b})")).expect("generated programs parse")
    }
}

/// Draws programs until `keep` accepts `n` distinct ones.
fn draw(seed: u64, dialect: Dialect, n: usize, keep: impl Fn(&Exp) -> bool) -> Vec<Exp> {
    let mut g = Gen::new(seed, dialect);
    let mut out: Vec<Exp> = vec![];
    let mut seen = std::collections::HashSet::new();
    for _ in 0..200_000 {
        if out.len() == n {
            break;
        }
        let e = g.program(MAX_DEPTH);
        if seen.insert(e.to_string()) && keep(&e) {
            out.push(e);
        }
    }
    assert_eq!(out.len(), n, "generator exhausted before finding {n} programs");
    out
}

/// `n` closed core terms of depth ≤ 6 that the CEK machine finishes within
/// 1000 steps.
pub fn core_terms(seed: u64, n: usize) -> Vec<Exp> {
    draw(seed, Dialect::Core, n, |e| matches!(Cek.run_trace(e, FUEL).unwrap().halt, Halt::Final(_)))
}

/// `n` closed core terms that are still running after 1000 CEK steps.
pub fn diverging_terms(seed: u64, n: usize) -> Vec<Exp> {
    draw(seed, Dialect::Core, n, |e| matches!(Cek.run_trace(e, FUEL).unwrap().halt, Halt::OutOfFuel))
}

/// `n` closed extended-language terms that halt (finally or stuck) within
/// 1000 steps and use at least one extended form.
pub fn extended_terms(seed: u64, n: usize) -> Vec<Exp> {
    draw(seed, Dialect::Extended, n, |e| {
        let extended = e.subterms().iter().any(|s| !crate::syntax::CORE_FORMS.contains(&crate::syntax::Form::of(s)));
        extended && !matches!(Ceshk::new(TickKeyed).run_trace(e, FUEL).unwrap().halt, Halt::OutOfFuel)
    })
}

/// `n` closed stack-inspection terms over permissions `{p, q}` that halt
/// within 1000 steps and use at least one security form.
pub fn security_terms(seed: u64, n: usize) -> Vec<Exp> {
    draw(seed, Dialect::Security, n, |e| {
        let secure = e.subterms().iter().any(|s| !crate::syntax::CORE_FORMS.contains(&crate::syntax::Form::of(s)));
        secure && !matches!(Cm::new(perms(["p", "q"])).run_trace(e, FUEL).unwrap().halt, Halt::OutOfFuel)
    })
}

/// The terminating core fixtures followed by 60 generated terms.
pub fn core_corpus() -> Vec<Exp> {
    let mut out: Vec<Exp> = CORE_FIXTURES.iter().filter(|(n, _)| *n != "omega").map(|(_, p)| parse(p).unwrap()).collect();
    out.extend(core_terms(DEFAULT_SEED, 60));
    out
}

/// Ω followed by 20 generated terms that run out of fuel.
pub fn diverging_corpus() -> Vec<Exp> {
    let mut out = vec![parse(OMEGA).unwrap()];
    out.extend(diverging_terms(DEFAULT_SEED, 20));
    out
}

pub fn extended_corpus() -> Vec<Exp> {
    let mut out: Vec<Exp> = EXTENDED_FIXTURES.iter().map(|(_, p, _)| parse(p).unwrap()).collect();
    out.extend(extended_terms(DEFAULT_SEED, 30));
    out
}

pub fn security_corpus() -> Vec<Exp> {
    let mut out: Vec<Exp> = CM_FIXTURES.iter().map(|(_, p, _)| parse(p).unwrap()).collect();
    out.extend(security_terms(DEFAULT_SEED, 30));
    out
}

fn kont_depth(k: &CekKont) -> usize {
    let mut n = 0;
    let mut k = k;
    while let CekKont::Ar(_, _, rest) | CekKont::Fn(_, rest) = k {
        n += 1;
        k = rest;
    }
    n
}

/// Deepest continuation reached by the CEK machine, if it halts within
/// `fuel` steps.
pub fn stack_depth(e: &Exp, fuel: usize) -> Option<usize> {
    let t = Cek.run_trace(e, fuel).ok()?;
    match t.halt {
        Halt::Final(_) => t.states.iter().map(|s| kont_depth(&s.kont)).max(),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic_and_bounded() {
        let a = core_terms(7, 20);
        let b = core_terms(7, 20);
        assert_eq!(a.iter().map(|e| e.to_string()).collect::<Vec<_>>(), b.iter().map(|e| e.to_string()).collect::<Vec<_>>());
        for e in &a {
            assert!(e.depth() <= MAX_DEPTH, "{e}");
            assert!(e.free_vars().is_empty(), "{e}");
        }
    }

    #[test]
    fn corpora_have_the_promised_sizes() {
        assert!(core_corpus().len() >= 50);
        assert_eq!(diverging_corpus().len(), 21);
        assert!(extended_corpus().len() >= 30);
        assert!(security_corpus().len() >= 30);
    }

    #[test]
    fn stack_depth_of_fixtures() {
        assert_eq!(stack_depth(&parse(ID_ID).unwrap(), 100), Some(1));
        assert_eq!(stack_depth(&parse(OMEGA).unwrap(), 100), None);
    }
}
