use std::fmt;

use super::{Exp, ExpKind, PermSet};

fn perm_list(f: &mut fmt::Formatter<'_>, r: &PermSet) -> fmt::Result {
    f.write_str("(")?;
    for (i, p) in r.iter().enumerate() {
        if i > 0 {
            f.write_str(" ")?;
        }
        write!(f, "{p}")?;
    }
    f.write_str(")")
}

/// Canonical concrete syntax; `parse(&e.to_string())` reproduces `e` up to labels.
impl fmt::Display for Exp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            ExpKind::Ref(x) => write!(f, "{x}"),
            ExpKind::Lam(x, b) => write!(f, "(lambda ({x}) {b})"),
            ExpKind::App(a, b) => write!(f, "({a} {b})"),
            ExpKind::False => f.write_str("#f"),
            ExpKind::If(a, b, c) => write!(f, "(if {a} {b} {c})"),
            ExpKind::SetBang(x, b) => write!(f, "(set! {x} {b})"),
            ExpKind::Callcc => f.write_str("callcc"),
            ExpKind::Fail => f.write_str("fail"),
            ExpKind::Frame(r, b) => {
                f.write_str("(frame ")?;
                perm_list(f, r)?;
                write!(f, " {b})")
            }
            ExpKind::Grant(r, b) => {
                f.write_str("(grant ")?;
                perm_list(f, r)?;
                write!(f, " {b})")
            }
            ExpKind::Test(r, a, b) => {
                f.write_str("(test ")?;
                perm_list(f, r)?;
                write!(f, " {a} {b})")
            }
            ExpKind::Throw(v) => write!(f, "(throw {v})"),
            ExpKind::Catch(e, h) => write!(f, "(catch {e} {h})"),
        }
    }
}

/// Same as `to_string`; named for symmetry with [`super::parse`].
pub fn unparse(e: &Exp) -> String {
    e.to_string()
}

#[cfg(test)]
mod tests {
    use crate::syntax::parse;

    #[test]
    fn canonical_forms() {
        for src in ["((lambda (x) x) (lambda (y) y))", "#f", "(test (p) a b)", "(catch (throw #f) (lambda (e) e))"] {
            assert_eq!(parse(src).unwrap().to_string(), src);
        }
    }

    #[test]
    fn normalises_whitespace_and_permission_order() {
        let e = parse("( frame ( q  p )\n x )").unwrap();
        assert_eq!(e.to_string(), "(frame (p q) x)");
    }
}
