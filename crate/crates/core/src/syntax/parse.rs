use super::{Exp, ExpKind, Label, PermSet, Permission, Var};

/// A parsed program together with its declared permission universe.
#[derive(Clone, Debug)]
pub struct Program {
    pub exp: Exp,
    /// From a `;; permissions: (p q ...)` pragma, if present.
    pub permissions: Option<PermSet>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

const KEYWORDS: &[&str] = &["lambda", "if", "set!", "throw", "catch", "frame", "grant", "test", "callcc", "fail"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

#[derive(Debug)]
enum Sexp {
    Atom(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    fn pos(&self) -> Pos {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }
}

fn error(pos: Pos, message: impl Into<String>) -> ParseError {
    ParseError { line: pos.line, column: pos.column, message: message.into() }
}

/// Parses one expression.  Any permission pragma is ignored.
pub fn parse(source: &str) -> Result<Exp, ParseError> {
    parse_program(source).map(|p| p.exp)
}

pub fn parse_program(source: &str) -> Result<Program, ParseError> {
    let mut reader = Reader { chars: source.chars().collect(), at: 0, pos: Pos { line: 1, column: 1 }, pragma: None };
    let sexp = match reader.read()? {
        Some(s) => s,
        None => return Err(error(reader.pos, "empty program")),
    };
    if let Some(extra) = reader.read()? {
        return Err(error(extra.pos(), "unexpected input after the program"));
    }
    let mut next = 0;
    let exp = convert(&sexp, &mut next)?;
    Ok(Program { exp, permissions: reader.pragma })
}

struct Reader {
    chars: Vec<char>,
    at: usize,
    pos: Pos,
    pragma: Option<PermSet>,
}

impl Reader {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.at).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.at += 1;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.column = 1;
        } else {
            self.pos.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) -> Result<(), ParseError> {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some(';') => {
                    let start = self.pos;
                    let mut text = String::new();
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        text.push(c);
                        self.bump();
                    }
                    self.pragma_line(&text, start)?;
                }
                _ => return Ok(()),
            }
        }
    }

    fn pragma_line(&mut self, text: &str, start: Pos) -> Result<(), ParseError> {
        let body = text.trim_start_matches(';').trim();
        let Some(rest) = body.strip_prefix("permissions:") else {
            return Ok(());
        };
        let rest = rest.trim();
        let inner = rest
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| error(start, "permissions pragma expects a parenthesised list"))?;
        let set = self.pragma.get_or_insert_with(PermSet::new);
        set.extend(inner.split_whitespace().map(Permission::new));
        Ok(())
    }

    fn read(&mut self) -> Result<Option<Sexp>, ParseError> {
        self.skip_trivia()?;
        let pos = self.pos;
        match self.peek() {
            None => Ok(None),
            Some(')') => Err(error(pos, "unbalanced `)`")),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia()?;
                    match self.peek() {
                        None => return Err(error(pos, "unclosed `(`")),
                        Some(')') => {
                            self.bump();
                            return Ok(Some(Sexp::List(items, pos)));
                        }
                        _ => items.push(self.read()?.expect("input remains")),
                    }
                }
            }
            Some(_) => {
                let mut atom = String::new();
                while let Some(c) = self.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    atom.push(c);
                    self.bump();
                }
                Ok(Some(Sexp::Atom(atom, pos)))
            }
        }
    }
}

fn node(next: &mut u32) -> Label {
    *next += 1;
    Label(*next)
}

fn convert(s: &Sexp, next: &mut u32) -> Result<Exp, ParseError> {
    match s {
        Sexp::Atom(a, pos) => {
            let label = node(next);
            let kind = match a.as_str() {
                "#f" => ExpKind::False,
                "callcc" => ExpKind::Callcc,
                "fail" => ExpKind::Fail,
                _ => ExpKind::Ref(identifier(a, *pos)?),
            };
            Ok(Exp::new(label, kind))
        }
        Sexp::List(items, pos) => {
            let head = match items.first() {
                Some(Sexp::Atom(h, _)) if KEYWORDS.contains(&h.as_str()) && h != "callcc" && h != "fail" => h.as_str(),
                Some(_) => return application(items, *pos, next),
                None => return Err(error(*pos, "empty list is not an expression")),
            };
            let label = node(next);
            let kind = match head {
                "lambda" => {
                    arity(items, 3, "lambda", *pos)?;
                    let x = binder(&items[1])?;
                    ExpKind::Lam(x, convert(&items[2], next)?)
                }
                "if" => {
                    arity(items, 4, "if", *pos)?;
                    let c = convert(&items[1], next)?;
                    let t = convert(&items[2], next)?;
                    ExpKind::If(c, t, convert(&items[3], next)?)
                }
                "set!" => {
                    arity(items, 3, "set!", *pos)?;
                    let x = match &items[1] {
                        Sexp::Atom(a, p) => identifier(a, *p)?,
                        other => return Err(error(other.pos(), "set! expects a variable")),
                    };
                    ExpKind::SetBang(x, convert(&items[2], next)?)
                }
                "throw" => {
                    arity(items, 2, "throw", *pos)?;
                    let v = convert(&items[1], next)?;
                    if !v.is_value_form() {
                        return Err(error(items[1].pos(), "throw operand must be a value form"));
                    }
                    ExpKind::Throw(v)
                }
                "catch" => {
                    arity(items, 3, "catch", *pos)?;
                    let body = convert(&items[1], next)?;
                    let handler = convert(&items[2], next)?;
                    if !handler.is_lam() {
                        return Err(error(items[2].pos(), "catch handler must be a lambda"));
                    }
                    ExpKind::Catch(body, handler)
                }
                "frame" | "grant" => {
                    arity(items, 3, head, *pos)?;
                    let r = permissions(&items[1])?;
                    let body = convert(&items[2], next)?;
                    if head == "frame" {
                        ExpKind::Frame(r, body)
                    } else {
                        ExpKind::Grant(r, body)
                    }
                }
                "test" => {
                    arity(items, 4, "test", *pos)?;
                    let r = permissions(&items[1])?;
                    let a = convert(&items[2], next)?;
                    ExpKind::Test(r, a, convert(&items[3], next)?)
                }
                _ => unreachable!("keyword list and match agree"),
            };
            Ok(Exp::new(label, kind))
        }
    }
}

fn application(items: &[Sexp], pos: Pos, next: &mut u32) -> Result<Exp, ParseError> {
    if items.len() != 2 {
        return Err(error(pos, format!("application takes exactly one operand, found {}", items.len() - 1)));
    }
    let label = node(next);
    let f = convert(&items[0], next)?;
    let a = convert(&items[1], next)?;
    Ok(Exp::new(label, ExpKind::App(f, a)))
}

fn arity(items: &[Sexp], n: usize, form: &str, pos: Pos) -> Result<(), ParseError> {
    if items.len() == n {
        Ok(())
    } else {
        Err(error(pos, format!("`{form}` takes {} parts, found {}", n - 1, items.len() - 1)))
    }
}

fn identifier(a: &str, pos: Pos) -> Result<Var, ParseError> {
    if KEYWORDS.contains(&a) {
        return Err(error(pos, format!("keyword `{a}` cannot be used as a variable")));
    }
    if a.starts_with('#') {
        return Err(error(pos, format!("unknown literal `{a}`")));
    }
    Ok(Var::new(a))
}

fn binder(s: &Sexp) -> Result<Var, ParseError> {
    match s {
        Sexp::List(xs, pos) => match xs.as_slice() {
            [Sexp::Atom(a, p)] => {
                if KEYWORDS.contains(&a.as_str()) {
                    Err(error(*p, format!("`{a}` is a keyword and cannot be bound")))
                } else {
                    identifier(a, *p)
                }
            }
            _ => Err(error(*pos, "lambda takes exactly one parameter")),
        },
        Sexp::Atom(_, pos) => Err(error(*pos, "lambda parameter list must be parenthesised")),
    }
}

fn permissions(s: &Sexp) -> Result<PermSet, ParseError> {
    match s {
        Sexp::List(xs, _) => xs
            .iter()
            .map(|x| match x {
                Sexp::Atom(a, _) => Ok(Permission::new(a)),
                other => Err(error(other.pos(), "permission names must be identifiers")),
            })
            .collect(),
        Sexp::Atom(_, pos) => Err(error(*pos, "expected a parenthesised permission list")),
    }
}
