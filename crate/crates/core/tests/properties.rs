//! Randomised checks of the algebraic and syntactic invariants.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use aam::gc::{gc_reachable, Touches};
use aam::machine::{Closure, Env};
use aam::security::{allocate_chain, ok, ok_hat, refute_hat, CmKont, Mark, Marks};
use aam::store::{AbstractStore, Addr, ConcreteStore, Lattice};
use aam::syntax::{parse, unparse, Exp, ExpKind, PermSet, Permission, Var};
use proptest::prelude::*;

const NAMES: &[&str] = &["x", "y", "z", "f"];

fn perm_set() -> impl Strategy<Value = String> {
    prop::sample::subsequence(vec!["p", "q", "r"], 0..=3).prop_map(|ps| format!("({})", ps.join(" ")))
}

fn name() -> impl Strategy<Value = String> {
    prop::sample::select(NAMES).prop_map(str::to_string)
}

/// Source text of an arbitrary (possibly open) program of depth ≤ 6 using
/// every form of the surface language.
fn source() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![4 => name(), 1 => Just("#f".to_string()), 1 => Just("callcc".to_string()), 1 => Just("fail".to_string())];
    leaf.prop_recursive(5, 64, 3, |inner| {
        let lam = (name(), inner.clone()).prop_map(|(x, b)| format!("(lambda ({x}) {b})")).boxed();
        let value = prop_oneof![lam.clone(), Just("#f".to_string()), Just("callcc".to_string())];
        prop_oneof![
            3 => lam.clone(),
            3 => (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} {b})")),
            1 => (inner.clone(), inner.clone(), inner.clone()).prop_map(|(a, b, c)| format!("(if {a} {b} {c})")),
            1 => (name(), inner.clone()).prop_map(|(x, e)| format!("(set! {x} {e})")),
            1 => value.prop_map(|v| format!("(throw {v})")),
            1 => (inner.clone(), lam).prop_map(|(e, h)| format!("(catch {e} {h})")),
            1 => (perm_set(), inner.clone()).prop_map(|(r, e)| format!("(frame {r} {e})")),
            1 => (perm_set(), inner.clone()).prop_map(|(r, e)| format!("(grant {r} {e})")),
            1 => (perm_set(), inner.clone(), inner).prop_map(|(r, a, b)| format!("(test {r} {a} {b})")),
        ]
    })
}

/// Free variables by brute force: an occurrence is free when no binder on
/// the path from the root to it has its name.
fn free_vars_oracle(e: &Exp) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<(Exp, Vec<Var>)> = vec![(e.clone(), vec![])];
    while let Some((e, path)) = stack.pop() {
        let occurrence = match e.kind() {
            ExpKind::Ref(x) | ExpKind::SetBang(x, _) => Some(x.clone()),
            _ => None,
        };
        if let Some(x) = occurrence {
            if !path.contains(&x) {
                out.insert(x);
            }
        }
        let mut below = path.clone();
        if let ExpKind::Lam(x, _) = e.kind() {
            below.push(x.clone());
        }
        for c in e.children() {
            stack.push((c.clone(), below.clone()));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn labels_are_unique(src in source()) {
        let e = parse(&src).unwrap();
        let labels: Vec<_> = e.subterms().iter().map(|s| s.label()).collect();
        let distinct: BTreeSet<_> = labels.iter().copied().collect();
        prop_assert_eq!(labels.len(), distinct.len());
    }

    #[test]
    fn unparse_round_trips(src in source()) {
        let e = parse(&src).unwrap();
        let again = parse(&unparse(&e)).unwrap();
        prop_assert!(again.same_shape(&e));
        prop_assert_eq!(unparse(&again), unparse(&e));
    }

    #[test]
    fn free_vars_match_the_brute_force_definition(src in source()) {
        let e = parse(&src).unwrap();
        prop_assert!(e.depth() <= 6);
        prop_assert_eq!(e.free_vars(), &free_vars_oracle(&e));
    }
}

fn small_store() -> impl Strategy<Value = AbstractStore<u8>> {
    prop::collection::vec((0u64..6, 0u8..6), 0..10).prop_map(|es| es.into_iter().map(|(a, v)| (Addr::Fresh(a), v)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn join_is_a_least_upper_bound(a in small_store(), b in small_store(), c in small_store()) {
        prop_assert_eq!(a.join_store(&b), b.join_store(&a));
        prop_assert_eq!(a.join_store(&b).join_store(&c), a.join_store(&b.join_store(&c)));
        prop_assert_eq!(a.join_store(&a), a.clone());
        let j = a.join_store(&b);
        prop_assert!(a.leq_store(&j) && b.leq_store(&j));
        if a.leq_store(&c) && b.leq_store(&c) {
            prop_assert!(j.leq_store(&c));
        }
        prop_assert!(AbstractStore::bottom().leq_store(&a));
    }

    #[test]
    fn merge_binding_is_a_singleton_join(s in small_store(), a in 0u64..6, vs in prop::collection::btree_set(0u8..6, 1..4)) {
        let a = Addr::Fresh(a);
        let merged = s.merge_binding(a.clone(), vs.clone());
        prop_assert_eq!(&merged, &s.join_store(&AbstractStore::singleton(a.clone(), vs.clone())));
        let want: BTreeSet<u8> = s.lookup_default(&a).union(&vs).copied().collect();
        prop_assert_eq!(merged.lookup_default(&a), want);
        prop_assert!(merged.iter().all(|(_, set)| !set.is_empty()));
    }

    #[test]
    fn concrete_update_is_destructive(entries in prop::collection::vec((0u64..6, 0u8..6), 0..8), a in 0u64..6, v in 0u8..6) {
        let s: ConcreteStore<u8> = entries.into_iter().map(|(a, v)| (Addr::Fresh(a), v)).collect();
        let t = s.insert(Addr::Fresh(a), v);
        prop_assert_eq!(t.lookup(&Addr::Fresh(a)).copied(), Ok(v));
    }
}

fn perm(p: &str) -> Permission {
    Permission::new(p)
}

fn marks() -> impl Strategy<Value = Marks> {
    prop::collection::vec((prop::sample::select(vec!["p", "q", "r"]), any::<bool>()), 0..3).prop_map(|ms| {
        ms.into_iter().fold(Marks::new(), |m, (p, g)| m.set([&perm(p)], if g { Mark::Grant } else { Mark::Deny }))
    })
}

fn kont() -> impl Strategy<Value = CmKont> {
    let lam = parse("(lambda (z) z)").unwrap();
    let body = parse("z").unwrap();
    let chain = prop::collection::vec((marks(), any::<bool>()), 0..5);
    (marks(), chain).prop_map(move |(bottom, frames)| {
        frames.into_iter().fold(CmKont::Mt(bottom), |k, (m, ar)| {
            if ar {
                CmKont::Ar(m, body.clone(), Env::new(), Arc::new(k))
            } else {
                CmKont::Fn(m, Closure::new(lam.clone(), Env::new()), Arc::new(k))
            }
        })
    })
}

fn perms_in() -> impl Strategy<Value = PermSet> {
    prop::sample::subsequence(vec!["p", "q", "r"], 0..=3).prop_map(|ps| ps.into_iter().map(perm).collect())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn ok_is_antitone_in_the_request(k in kont(), r2 in perms_in(), keep in prop::collection::vec(any::<bool>(), 3)) {
        prop_assert!(ok(&PermSet::new(), &k));
        let r1: PermSet = r2.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p.clone()).collect();
        if ok(&r2, &k) {
            prop_assert!(ok(&r1, &k));
        }
    }

    #[test]
    fn ok_hat_agrees_with_ok_on_singleton_stores(k in kont(), r in perms_in()) {
        let (top, store) = allocate_chain(&k);
        prop_assert_eq!(ok_hat(&r, &top, &store), ok(&r, &k));
        prop_assert_eq!(refute_hat(&r, &top, &store), !ok(&r, &k));
    }

    #[test]
    fn ok_hat_is_monotone_in_the_store(k1 in kont(), k2 in kont(), r in perms_in()) {
        let (top, s1) = allocate_chain(&k1);
        let (_, s2) = allocate_chain(&k2);
        let bigger = s1.join_store(&s2);
        if ok_hat(&r, &top, &s1) {
            prop_assert!(ok_hat(&r, &top, &bigger));
        }
        if refute_hat(&r, &top, &s1) {
            prop_assert!(refute_hat(&r, &top, &bigger));
        }
    }

    #[test]
    fn mark_update_is_idempotent(m in marks(), r in perms_in(), grant in any::<bool>()) {
        let c = if grant { Mark::Grant } else { Mark::Deny };
        let once = m.set(&r, c);
        prop_assert_eq!(once.set(&r, c), once);
    }
}

/// A storable that points at the addresses it lists.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
struct Ptrs(Vec<u64>);

impl Touches for Ptrs {
    fn touches(&self, out: &mut BTreeSet<Addr>) {
        out.extend(self.0.iter().map(|&a| Addr::Fresh(a)));
    }
}

/// Reachability as the least fixed point, iterated over the whole store.
fn reachable_oracle(roots: &BTreeSet<u64>, heap: &BTreeMap<u64, Vec<Ptrs>>) -> BTreeSet<Addr> {
    let mut seen: BTreeSet<u64> = roots.clone();
    loop {
        let next: BTreeSet<u64> = seen
            .iter()
            .flat_map(|a| heap.get(a).into_iter().flatten())
            .flat_map(|p| p.0.iter().copied())
            .chain(seen.iter().copied())
            .collect();
        if next == seen {
            return seen.into_iter().map(Addr::Fresh).collect();
        }
        seen = next;
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gc_reachable_is_the_least_closed_superset_of_the_roots(
        heap in prop::collection::btree_map(0u64..8, prop::collection::vec(prop::collection::vec(0u64..10, 0..3).prop_map(Ptrs), 1..3), 0..8),
        roots in prop::collection::btree_set(0u64..10, 0..3),
    ) {
        let store: AbstractStore<Ptrs> = heap.iter().flat_map(|(a, vs)| vs.iter().map(move |v| (Addr::Fresh(*a), v.clone()))).collect();
        let got = gc_reachable(roots.iter().map(|&a| Addr::Fresh(a)).collect(), &store);
        prop_assert_eq!(&got, &reachable_oracle(&roots, &heap));
        let restricted = store.restrict(&got);
        prop_assert!(restricted.leq_store(&store));
        prop_assert_eq!(gc_reachable(roots.iter().map(|&a| Addr::Fresh(a)).collect(), &restricted), got);
    }
}
