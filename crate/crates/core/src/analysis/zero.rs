use std::collections::BTreeSet;
use std::fmt;

use crate::concrete::{Kont, Storable};
use crate::gc::{gc_reachable, Collect, Touches};
use crate::machine::{check_program, AbstractMachine, InjectError};
use crate::store::{AbstractStore, Addr, MonoAddr};
use crate::syntax::{Exp, ExpKind, CORE_FORMS};

use super::{AbstractState, Widen};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ZeroKont {
    Mt,
    Ar(Exp, Addr),
    Fn(Exp, Addr),
}

impl fmt::Display for ZeroKont {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZeroKont::Mt => f.write_str("mt"),
            ZeroKont::Ar(e, a) => write!(f, "ar({e}, {a})"),
            ZeroKont::Fn(v, a) => write!(f, "fn({v}, {a})"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ZeroStorable {
    Lam(Exp),
    Kont(ZeroKont),
}

impl fmt::Display for ZeroStorable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZeroStorable::Lam(v) => write!(f, "{v}"),
            ZeroStorable::Kont(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ZeroState {
    pub control: Exp,
    pub store: AbstractStore<ZeroStorable>,
    pub kont: ZeroKont,
}

/// The labelled machine: with one address per variable and per call site,
/// environments are the identity and can be dropped.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroCfa;

fn bind(x: &crate::syntax::Var) -> Addr {
    Addr::Mono(MonoAddr::BindVar(x.clone()))
}

impl AbstractMachine for ZeroCfa {
    type State = ZeroState;

    fn inject(&self, e: &Exp) -> Result<ZeroState, InjectError> {
        check_program(e, CORE_FORMS)?;
        Ok(ZeroState { control: e.clone(), store: AbstractStore::new(), kont: ZeroKont::Mt })
    }

    fn step(&self, s: &ZeroState) -> Vec<ZeroState> {
        match s.control.kind() {
            ExpKind::Ref(x) => s
                .store
                .values(&bind(x))
                .filter_map(|v| match v {
                    ZeroStorable::Lam(v) => Some(ZeroState { control: v.clone(), store: s.store.clone(), kont: s.kont.clone() }),
                    ZeroStorable::Kont(_) => None,
                })
                .collect(),
            ExpKind::App(e0, e1) => {
                let a = Addr::Mono(MonoAddr::KontSite(s.control.label()));
                vec![ZeroState {
                    control: e0.clone(),
                    store: s.store.join_one(a.clone(), ZeroStorable::Kont(s.kont.clone())),
                    kont: ZeroKont::Ar(e1.clone(), a),
                }]
            }
            ExpKind::Lam(..) => match &s.kont {
                ZeroKont::Mt => vec![],
                ZeroKont::Ar(e, a) => {
                    vec![ZeroState { control: e.clone(), store: s.store.clone(), kont: ZeroKont::Fn(s.control.clone(), a.clone()) }]
                }
                ZeroKont::Fn(f, a) => {
                    let (x, body) = f.as_lam().expect("fn frames hold lambdas");
                    s.store
                        .values(a)
                        .filter_map(|k| match k {
                            ZeroStorable::Kont(k) => Some(ZeroState {
                                control: body.clone(),
                                store: s.store.join_one(bind(x), ZeroStorable::Lam(s.control.clone())),
                                kont: k.clone(),
                            }),
                            ZeroStorable::Lam(_) => None,
                        })
                        .collect()
                }
            },
            _ => vec![],
        }
    }

    fn is_final(&self, s: &ZeroState) -> bool {
        s.control.is_lam() && s.kont == ZeroKont::Mt
    }
}

/// Without environments every free variable is live at its own binding.
fn live_vars(e: &Exp, out: &mut BTreeSet<Addr>) {
    out.extend(e.free_vars().iter().map(bind));
}

impl Touches for ZeroKont {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        match self {
            ZeroKont::Mt => {}
            ZeroKont::Ar(e, a) | ZeroKont::Fn(e, a) => {
                out.insert(a.clone());
                live_vars(e, out);
            }
        }
    }
}

impl Touches for ZeroStorable {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        match self {
            ZeroStorable::Lam(v) => live_vars(v, out),
            ZeroStorable::Kont(k) => k.touches(out),
        }
    }
}

impl Collect for ZeroState {
    fn roots(&self) -> BTreeSet<Addr> {
        let mut out = BTreeSet::new();
        live_vars(&self.control, &mut out);
        self.kont.touches(&mut out);
        out
    }

    fn reachable(&self) -> BTreeSet<Addr> {
        gc_reachable(self.roots(), &self.store)
    }

    fn collect(&self) -> Self {
        ZeroState { store: self.store.restrict(&self.reachable()), ..self.clone() }
    }
}

impl Widen for ZeroCfa {
    type Context = (Exp, ZeroKont);
    type Store = AbstractStore<ZeroStorable>;

    fn split(&self, s: &ZeroState) -> ((Exp, ZeroKont), AbstractStore<ZeroStorable>) {
        ((s.control.clone(), s.kont.clone()), s.store.clone())
    }

    fn assemble(&self, c: &(Exp, ZeroKont), store: &AbstractStore<ZeroStorable>) -> ZeroState {
        ZeroState { control: c.0.clone(), store: store.clone(), kont: c.1.clone() }
    }
}

fn zero_kont(k: &Kont) -> ZeroKont {
    match k {
        Kont::Mt => ZeroKont::Mt,
        Kont::Ar(e, _, a) => ZeroKont::Ar(e.clone(), a.clone()),
        Kont::Fn(c, a) => ZeroKont::Fn(c.lam.clone(), a.clone()),
    }
}

/// Forgets environments of a monovariant CESK* state.
pub fn project_zero(s: &AbstractState) -> ZeroState {
    let store = s.store.map(
        |a| a.clone(),
        |v| match v {
            Storable::Clo(c) => ZeroStorable::Lam(c.lam.clone()),
            Storable::Kont(k) => ZeroStorable::Kont(zero_kont(k)),
        },
    );
    ZeroState { control: s.control.clone(), store, kont: zero_kont(&s.kont) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse, Var};

    #[test]
    fn variable_reads_the_monovariant_binding() {
        let e = parse("((lambda (x) x) (lambda (a) a))").unwrap();
        let x = e.subterms().into_iter().find(|s| s.as_ref() == Some(&Var::new("x"))).unwrap();
        let lam = e.subterms().into_iter().find(|s| s.to_string() == "(lambda (a) a)").unwrap();
        let s = ZeroState {
            control: x,
            store: AbstractStore::new().join_one(bind(&Var::new("x")), ZeroStorable::Lam(lam.clone())),
            kont: ZeroKont::Mt,
        };
        let next = ZeroCfa.step(&s);
        assert_eq!(next.len(), 1);
        assert_eq!(next[0].control, lam);
        assert_eq!(next[0].store, s.store);
    }

    #[test]
    fn collecting_and_widening_keep_the_answer() {
        use crate::analysis::analyze_widened;
        use crate::gc::Collecting;
        use crate::graph::explore;
        let e = parse("((lambda (f) ((lambda (d) (f (lambda (b) b))) (f (lambda (a) a)))) (lambda (x) x))").unwrap();
        let finals = |g: &crate::graph::StateGraph<ZeroState>| g.finals().map(|s| s.control.to_string()).collect::<BTreeSet<_>>();
        let plain = explore(&ZeroCfa, &e).unwrap();
        let gc = explore(&Collecting(ZeroCfa), &e).unwrap();
        assert!(finals(&gc).is_subset(&finals(&plain)));
        assert!(finals(&gc).contains("(lambda (b) b)"));
        assert!(gc.states().all(|s| s.store.len() == s.reachable().len()));
        let w = analyze_widened(&ZeroCfa, &e).unwrap();
        for s in plain.states() {
            assert!(w.contexts.contains(&(s.control.clone(), s.kont.clone())));
            assert!(s.store.leq_store(&w.store));
        }
    }
}
