use crate::machine::StepOutcome;
use crate::policy::{Moment, Policy};
use crate::store::{Addr, Time};
use crate::syntax::{ExpKind, Var};

use super::{control_of, syntactic_value, Control, ExtKont, ExtState, ExtStorable, ExtValue, Handler};

/// What the rules need from a store.
pub(crate) trait ExtHeap: Clone {
    /// Everything `a` may hold (at most one entry for a concrete store).
    fn read(&self, a: &Addr) -> Vec<ExtStorable>;
    /// Writes a freshly allocated address.
    fn alloc(&self, a: Addr, v: ExtStorable) -> Self;
    /// Writes an existing address (`set!`).
    fn update(&self, a: Addr, v: ExtStorable) -> Self;
    fn next_fresh(&self) -> u64;
}

type Out<H> = StepOutcome<ExtState<H>, ExtValue>;

fn konts<H: ExtHeap>(store: &H, a: &Addr) -> Vec<ExtKont> {
    store
        .read(a)
        .into_iter()
        .filter_map(|s| match s {
            ExtStorable::Kont(k) => Some(k),
            _ => None,
        })
        .collect()
}

struct Ctx<'a, P, H> {
    policy: &'a P,
    s: &'a ExtState<H>,
    fresh: u64,
}

impl<'a, P: Policy, H: ExtHeap> Ctx<'a, P, H> {
    fn moment<'k>(&'k self, kont: &'k ExtKont, nth: u64) -> Moment<'k, ExtKont> {
        Moment { site: self.s.control.label(), time: &self.s.time, kont, fresh: self.fresh + nth }
    }

    fn tick(&self, kont: &ExtKont) -> Time {
        self.policy.tick(&self.moment(kont, 0))
    }

    fn kont_addr(&self, site: crate::syntax::Label, u: &Time, kont: &ExtKont, nth: u64) -> Addr {
        self.policy.alloc_kont(site, u, &self.moment(kont, nth))
    }

    fn bind_addr(&self, x: &Var, u: &Time, kont: &ExtKont, nth: u64) -> Addr {
        self.policy.alloc_bind(x, u, &self.moment(kont, nth))
    }

    fn state(&self, control: Control, env: crate::machine::Env, store: H, handler: Handler, kont: ExtKont, time: Time) -> Out<H> {
        StepOutcome::Next(ExtState { control, env, store, handler, kont, time })
    }

    /// Returns `v` to `kont` unchanged in every other register.
    fn ret(&self, v: &ExtValue, store: H, handler: Handler, kont: ExtKont) -> Out<H> {
        let time = self.tick(&kont);
        let (control, env) = control_of(v);
        self.state(control, env, store, handler, kont, time)
    }
}

/// All transitions out of `s`.
pub(crate) fn step<P: Policy, H: ExtHeap>(policy: &P, s: &ExtState<H>) -> Vec<Out<H>> {
    let cx = Ctx { policy, s, fresh: s.store.next_fresh() };
    if let Some(v) = s.control.value(&s.env) {
        return step_value(&cx, v);
    }
    let Control::Exp(e) = &s.control else { unreachable!("non-value control is an expression") };
    let site = e.label();
    let push = |kont: ExtKont, control: crate::syntax::Exp| {
        let u = cx.tick(&s.kont);
        let c = cx.kont_addr(site, &u, &s.kont, 0);
        let kont = kont_with_tail(kont, c.clone());
        vec![cx.state(Control::Exp(control), s.env.clone(), s.store.alloc(c, ExtStorable::Kont(s.kont.clone())), s.handler.clone(), kont, u)]
    };
    match e.kind() {
        ExpKind::Ref(x) => {
            let Some(a) = s.env.get(x) else { return vec![StepOutcome::Stuck(format!("unbound variable {x}"))] };
            s.store
                .read(a)
                .into_iter()
                .filter_map(|v| match v {
                    ExtStorable::Val(v) => Some(cx.ret(&v, s.store.clone(), s.handler.clone(), s.kont.clone())),
                    _ => None,
                })
                .collect()
        }
        ExpKind::App(e0, e1) => push(ExtKont::Ar(e1.clone(), s.env.clone(), PLACEHOLDER), e0.clone()),
        ExpKind::If(e0, e1, e2) => push(ExtKont::If(e1.clone(), e2.clone(), s.env.clone(), PLACEHOLDER), e0.clone()),
        ExpKind::SetBang(x, e0) => match s.env.get(x) {
            Some(a) => push(ExtKont::Set(a.clone(), PLACEHOLDER), e0.clone()),
            None => vec![StepOutcome::Stuck(format!("set! of unbound variable {x}"))],
        },
        ExpKind::Catch(body, handler) => {
            let u = cx.tick(&s.kont);
            let a = cx.kont_addr(site, &u, &s.kont, 0);
            let store = s.store.alloc(a.clone(), ExtStorable::Pair(s.handler.clone(), s.kont.clone()));
            vec![cx.state(
                Control::Exp(body.clone()),
                s.env.clone(),
                store,
                Handler::Hn(handler.clone(), s.env.clone(), a),
                ExtKont::Mt,
                u,
            )]
        }
        ExpKind::Throw(v) => {
            let Some(v) = syntactic_value(v, &s.env) else {
                return vec![StepOutcome::Stuck(format!("throw of non-value {v}"))];
            };
            let Handler::Hn(lam, henv, a) = &s.handler else {
                return vec![StepOutcome::Stuck("uncaught throw".to_string())];
            };
            let (x, body) = lam.as_lam().expect("handlers are lambdas");
            s.store
                .read(a)
                .into_iter()
                .filter_map(|p| match p {
                    ExtStorable::Pair(h, k) => Some((h, k)),
                    _ => None,
                })
                .map(|(h, k)| {
                    let u = cx.tick(&k);
                    let b = cx.bind_addr(x, &u, &k, 0);
                    let store = s.store.alloc(b.clone(), ExtStorable::Val(v.clone()));
                    cx.state(Control::Exp(body.clone()), henv.extend(x.clone(), b), store, h, k, u)
                })
                .collect()
        }
        _ => vec![StepOutcome::Stuck(format!("unsupported form {e}"))],
    }
}

/// Stand-in tail replaced by [`kont_with_tail`] once the address is known.
const PLACEHOLDER: Addr = Addr::Fresh(0);

fn kont_with_tail(k: ExtKont, c: Addr) -> ExtKont {
    match k {
        ExtKont::Ar(e, env, _) => ExtKont::Ar(e, env, c),
        ExtKont::If(t, f, env, _) => ExtKont::If(t, f, env, c),
        ExtKont::Set(x, _) => ExtKont::Set(x, c),
        other => other,
    }
}

fn step_value<P: Policy, H: ExtHeap>(cx: &Ctx<'_, P, H>, v: ExtValue) -> Vec<Out<H>> {
    let s = cx.s;
    match &s.kont {
        ExtKont::Mt => match &s.handler {
            Handler::Mt => vec![StepOutcome::Final(v)],
            Handler::Hn(_, _, a) => s
                .store
                .read(a)
                .into_iter()
                .filter_map(|p| match p {
                    ExtStorable::Pair(h, k) => Some(cx.ret(&v, s.store.clone(), h, k)),
                    _ => None,
                })
                .collect(),
        },
        ExtKont::Ar(e, env, c) => {
            let u = cx.tick(&s.kont);
            let kont = ExtKont::Fn(v, c.clone());
            vec![cx.state(Control::Exp(e.clone()), env.clone(), s.store.clone(), s.handler.clone(), kont, u)]
        }
        ExtKont::If(then, els, env, c) => konts(&s.store, c)
            .into_iter()
            .map(|k| {
                let branch = if v == ExtValue::False { els } else { then };
                let u = cx.tick(&k);
                cx.state(Control::Exp(branch.clone()), env.clone(), s.store.clone(), s.handler.clone(), k, u)
            })
            .collect(),
        ExtKont::Set(x, c) => {
            let olds: Vec<ExtValue> = s
                .store
                .read(x)
                .into_iter()
                .filter_map(|o| match o {
                    ExtStorable::Val(o) => Some(o),
                    _ => None,
                })
                .collect();
            let store = s.store.update(x.clone(), ExtStorable::Val(v.clone()));
            konts(&s.store, c)
                .into_iter()
                .flat_map(|k| olds.iter().map(move |o| (k.clone(), o)))
                .map(|(k, old)| cx.ret(old, store.clone(), s.handler.clone(), k))
                .collect()
        }
        ExtKont::Fn(f, c) => match f {
            ExtValue::Clo(clo) => {
                let (x, body) = clo.lam.as_lam().expect("closures hold lambdas");
                konts(&s.store, c)
                    .into_iter()
                    .map(|k| {
                        let u = cx.tick(&k);
                        let b = cx.bind_addr(x, &u, &k, 0);
                        let store = s.store.alloc(b.clone(), ExtStorable::Val(v.clone()));
                        cx.state(Control::Exp(body.clone()), clo.env.extend(x.clone(), b), store, s.handler.clone(), k, u)
                    })
                    .collect()
            }
            ExtValue::False => vec![StepOutcome::Stuck("applied #f".to_string())],
            ExtValue::KontV(b) => {
                konts(&s.store, b).into_iter().map(|k| cx.ret(&v, s.store.clone(), s.handler.clone(), k)).collect()
            }
            ExtValue::Callcc(site) => match &v {
                // Call the closure with the current continuation, reified at
                // the callcc occurrence.
                ExtValue::Clo(clo) => {
                    let (x, body) = clo.lam.as_lam().expect("closures hold lambdas");
                    konts(&s.store, c)
                        .into_iter()
                        .map(|k| {
                            let u = cx.tick(&k);
                            let d = cx.kont_addr(*site, &u, &k, 0);
                            let b = cx.bind_addr(x, &u, &k, 1);
                            let store = s
                                .store
                                .alloc(d.clone(), ExtStorable::Kont(k.clone()))
                                .alloc(b.clone(), ExtStorable::Val(ExtValue::KontV(d)));
                            cx.state(Control::Exp(body.clone()), clo.env.extend(x.clone(), b), store, s.handler.clone(), k, u)
                        })
                        .collect()
                }
                // Abort into the applied continuation, handing it the frame
                // that applies callcc.
                ExtValue::KontV(b) => {
                    let here = s.kont.clone();
                    konts(&s.store, b)
                        .into_iter()
                        .map(|k| {
                            let u = cx.tick(&k);
                            let d = cx.kont_addr(*site, &u, &k, 0);
                            let store = s.store.alloc(d.clone(), ExtStorable::Kont(here.clone()));
                            cx.state(Control::Value(ExtValue::KontV(d)), crate::machine::Env::new(), store, s.handler.clone(), k, u)
                        })
                        .collect()
                }
                other => vec![StepOutcome::Stuck(format!("callcc applied to {other}"))],
            },
        },
    }
}
