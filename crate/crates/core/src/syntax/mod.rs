//! Labelled abstract syntax shared by every machine.
//!
//! Every node carries a [`Label`] that is unique within one program
//! (preorder numbering from 1).  Machines rely on that uniqueness: two
//! [`Exp`] handles from the same program are equal exactly when their labels
//! are, so states can be hashed and compared cheaply.

mod parse;
mod print;

use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

pub use parse::{parse, parse_program, ParseError, Program};
pub use print::unparse;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Label(pub u32);

impl Label {
    /// Pseudo-site used when the control string is not an expression (a
    /// reified continuation in the extended machine).  Never assigned to a
    /// syntax node.
    pub const NONE: Label = Label(0);
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: &str) -> Var {
        Var(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Permission(Arc<str>);

impl Permission {
    pub fn new(name: &str) -> Permission {
        Permission(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type PermSet = BTreeSet<Permission>;

/// Builds a permission set from names.
pub fn perms<'a>(names: impl IntoIterator<Item = &'a str>) -> PermSet {
    names.into_iter().map(Permission::new).collect()
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum ExpKind {
    Ref(Var),
    Lam(Var, Exp),
    App(Exp, Exp),
    False,
    If(Exp, Exp, Exp),
    SetBang(Var, Exp),
    Callcc,
    Fail,
    Frame(PermSet, Exp),
    Grant(PermSet, Exp),
    Test(PermSet, Exp, Exp),
    /// Operand is always a syntactic value: a lambda, `#f` or `callcc`.
    Throw(Exp),
    /// The handler is always a lambda.
    Catch(Exp, Exp),
}

struct Node {
    label: Label,
    kind: ExpKind,
    free: BTreeSet<Var>,
}

/// A shared, labelled expression.
#[derive(Clone)]
pub struct Exp(Arc<Node>);

impl Exp {
    /// Builds a node.  Callers are responsible for label uniqueness; use
    /// [`relabel`] after constructing a tree by hand.
    pub fn new(label: Label, kind: ExpKind) -> Exp {
        let free = compute_free(&kind);
        Exp(Arc::new(Node { label, kind, free }))
    }

    pub fn label(&self) -> Label {
        self.0.label
    }

    pub fn kind(&self) -> &ExpKind {
        &self.0.kind
    }

    /// Free variables.  `set!` counts its target as a free occurrence.
    pub fn free_vars(&self) -> &BTreeSet<Var> {
        &self.0.free
    }

    pub fn is_lam(&self) -> bool {
        matches!(self.0.kind, ExpKind::Lam(..))
    }

    pub fn as_lam(&self) -> Option<(&Var, &Exp)> {
        match &self.0.kind {
            ExpKind::Lam(x, body) => Some((x, body)),
            _ => None,
        }
    }

    pub fn as_ref(&self) -> Option<&Var> {
        match &self.0.kind {
            ExpKind::Ref(x) => Some(x),
            _ => None,
        }
    }

    /// Syntactic values of the full language: lambdas, `#f` and `callcc`.
    pub fn is_value_form(&self) -> bool {
        matches!(self.0.kind, ExpKind::Lam(..) | ExpKind::False | ExpKind::Callcc)
    }

    pub fn ptr_eq(&self, other: &Exp) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Immediate subexpressions, left to right.
    pub fn children(&self) -> Vec<&Exp> {
        match &self.0.kind {
            ExpKind::Ref(_) | ExpKind::False | ExpKind::Callcc | ExpKind::Fail => vec![],
            ExpKind::Lam(_, b)
            | ExpKind::SetBang(_, b)
            | ExpKind::Frame(_, b)
            | ExpKind::Grant(_, b)
            | ExpKind::Throw(b) => vec![b],
            ExpKind::App(a, b) | ExpKind::Catch(a, b) | ExpKind::Test(_, a, b) => vec![a, b],
            ExpKind::If(a, b, c) => vec![a, b, c],
        }
    }

    /// All nodes in preorder.
    pub fn subterms(&self) -> Vec<Exp> {
        let mut out = Vec::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            for c in e.children().into_iter().rev() {
                stack.push(c.clone());
            }
            out.push(e);
        }
        out
    }

    /// Number of nodes (the size of the program's `Exp` set).
    pub fn size(&self) -> usize {
        self.subterms().len()
    }

    /// Nesting depth; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Structural equality ignoring labels.
    pub fn same_shape(&self, other: &Exp) -> bool {
        use ExpKind::*;
        match (self.kind(), other.kind()) {
            (Ref(x), Ref(y)) => x == y,
            (Lam(x, a), Lam(y, b)) | (SetBang(x, a), SetBang(y, b)) => x == y && a.same_shape(b),
            (App(a, b), App(c, d)) | (Catch(a, b), Catch(c, d)) => a.same_shape(c) && b.same_shape(d),
            (False, False) | (Callcc, Callcc) | (Fail, Fail) => true,
            (If(a, b, c), If(d, e, f)) => a.same_shape(d) && b.same_shape(e) && c.same_shape(f),
            (Frame(r, a), Frame(s, b)) | (Grant(r, a), Grant(s, b)) => r == s && a.same_shape(b),
            (Test(r, a, b), Test(s, c, d)) => r == s && a.same_shape(c) && b.same_shape(d),
            (Throw(a), Throw(b)) => a.same_shape(b),
            _ => false,
        }
    }

    /// The set of syntactic forms used anywhere in the program.
    pub fn features(&self) -> BTreeSet<Form> {
        self.subterms().iter().map(Form::of).collect()
    }

    /// Rejects programs that use a form outside `allowed`.
    pub fn check_forms(&self, allowed: &[Form]) -> Result<(), UnsupportedForm> {
        for e in self.subterms() {
            let form = Form::of(&e);
            if !allowed.contains(&form) {
                return Err(UnsupportedForm { form, label: e.label() });
            }
        }
        Ok(())
    }
}

fn compute_free(kind: &ExpKind) -> BTreeSet<Var> {
    use ExpKind::*;
    match kind {
        Ref(x) => BTreeSet::from([x.clone()]),
        Lam(x, b) => {
            let mut s = b.free_vars().clone();
            s.remove(x);
            s
        }
        SetBang(x, b) => {
            let mut s = b.free_vars().clone();
            s.insert(x.clone());
            s
        }
        False | Callcc | Fail => BTreeSet::new(),
        Frame(_, b) | Grant(_, b) | Throw(b) => b.free_vars().clone(),
        App(a, b) | Catch(a, b) | Test(_, a, b) => a.free_vars().union(b.free_vars()).cloned().collect(),
        If(a, b, c) => {
            let mut s = a.free_vars().clone();
            s.extend(b.free_vars().iter().cloned());
            s.extend(c.free_vars().iter().cloned());
            s
        }
    }
}

impl PartialEq for Exp {
    fn eq(&self, other: &Exp) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.label == other.0.label && self.0.kind == other.0.kind)
    }
}

impl Eq for Exp {}

impl PartialOrd for Exp {
    fn partial_cmp(&self, other: &Exp) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Exp {
    fn cmp(&self, other: &Exp) -> std::cmp::Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return std::cmp::Ordering::Equal;
        }
        self.0.label.cmp(&other.0.label).then_with(|| self.0.kind.cmp(&other.0.kind))
    }
}

impl Hash for Exp {
    fn hash<H: Hasher>(&self, state: &mut H) {
        // equal expressions always share a label
        self.0.label.hash(state)
    }
}

impl fmt::Debug for Exp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

/// Renumbers every node in preorder starting from 1, producing a fresh tree.
pub fn relabel(e: &Exp) -> Exp {
    let mut next = 0;
    relabel_from(e, &mut next)
}

fn relabel_from(e: &Exp, next: &mut u32) -> Exp {
    use ExpKind::*;
    *next += 1;
    let label = Label(*next);
    let kind = match e.kind() {
        Ref(x) => Ref(x.clone()),
        False => False,
        Callcc => Callcc,
        Fail => Fail,
        Lam(x, b) => Lam(x.clone(), relabel_from(b, next)),
        SetBang(x, b) => SetBang(x.clone(), relabel_from(b, next)),
        Frame(r, b) => Frame(r.clone(), relabel_from(b, next)),
        Grant(r, b) => Grant(r.clone(), relabel_from(b, next)),
        Throw(b) => Throw(relabel_from(b, next)),
        App(a, b) => {
            let a = relabel_from(a, next);
            App(a, relabel_from(b, next))
        }
        Catch(a, b) => {
            let a = relabel_from(a, next);
            Catch(a, relabel_from(b, next))
        }
        Test(r, a, b) => {
            let a = relabel_from(a, next);
            Test(r.clone(), a, relabel_from(b, next))
        }
        If(a, b, c) => {
            let a = relabel_from(a, next);
            let b = relabel_from(b, next);
            If(a, b, relabel_from(c, next))
        }
    };
    Exp::new(label, kind)
}

/// Syntactic form tags, used to gate which machine accepts which program.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Form {
    Ref,
    Lam,
    App,
    False,
    If,
    SetBang,
    Callcc,
    Fail,
    Frame,
    Grant,
    Test,
    Throw,
    Catch,
}

impl Form {
    pub fn of(e: &Exp) -> Form {
        match e.kind() {
            ExpKind::Ref(_) => Form::Ref,
            ExpKind::Lam(..) => Form::Lam,
            ExpKind::App(..) => Form::App,
            ExpKind::False => Form::False,
            ExpKind::If(..) => Form::If,
            ExpKind::SetBang(..) => Form::SetBang,
            ExpKind::Callcc => Form::Callcc,
            ExpKind::Fail => Form::Fail,
            ExpKind::Frame(..) => Form::Frame,
            ExpKind::Grant(..) => Form::Grant,
            ExpKind::Test(..) => Form::Test,
            ExpKind::Throw(_) => Form::Throw,
            ExpKind::Catch(..) => Form::Catch,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Form::Ref => "variable",
            Form::Lam => "lambda",
            Form::App => "application",
            Form::False => "#f",
            Form::If => "if",
            Form::SetBang => "set!",
            Form::Callcc => "callcc",
            Form::Fail => "fail",
            Form::Frame => "frame",
            Form::Grant => "grant",
            Form::Test => "test",
            Form::Throw => "throw",
            Form::Catch => "catch",
        }
    }
}

/// The pure lambda calculus.
pub const CORE_FORMS: &[Form] = &[Form::Ref, Form::Lam, Form::App];
/// Conditionals, mutation, first-class control and exceptions.
pub const EXTENDED_FORMS: &[Form] = &[
    Form::Ref,
    Form::Lam,
    Form::App,
    Form::False,
    Form::If,
    Form::SetBang,
    Form::Callcc,
    Form::Throw,
    Form::Catch,
];
/// The stack-inspection calculus.
pub const SECURITY_FORMS: &[Form] =
    &[Form::Ref, Form::Lam, Form::App, Form::Fail, Form::Frame, Form::Grant, Form::Test];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported form `{}` at node {label}", form.keyword())]
pub struct UnsupportedForm {
    pub form: Form,
    pub label: Label,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_preorder() {
        let e = parse("((lambda (x) x) (lambda (y) y))").unwrap();
        let labels: Vec<u32> = e.subterms().iter().map(|s| s.label().0).collect();
        assert_eq!(labels, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn set_bang_target_is_free() {
        let e = parse("(lambda (y) (set! x y))").unwrap();
        assert_eq!(e.free_vars(), &BTreeSet::from([Var::new("x")]));
    }

    #[test]
    fn relabel_preserves_shape() {
        let e = parse("(if #f (lambda (a) a) (lambda (b) b))").unwrap();
        let r = relabel(&e);
        assert!(e.same_shape(&r));
        assert_eq!(r.label(), Label(1));
    }

    #[test]
    fn core_gate_rejects_if() {
        let e = parse("(if #f (lambda (a) a) (lambda (b) b))").unwrap();
        let err = e.check_forms(CORE_FORMS).unwrap_err();
        assert_eq!(err.form, Form::If);
    }
}
