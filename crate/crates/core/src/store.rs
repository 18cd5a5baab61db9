//! Addresses, times, and the concrete and abstract stores.
//!
//! The abstract store is a join-semilattice: a map from addresses to
//! non-empty sets of storables, ordered pointwise by inclusion, with an
//! absent address standing for the empty set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::syntax::{Label, Var};

/// A join-semilattice.
pub trait Lattice: Sized {
    fn bottom() -> Self;
    fn join(&self, other: &Self) -> Self;
    fn leq(&self, other: &Self) -> bool;
}

/// A bounded or unbounded contour: the labels of the most recent control
/// strings, most recent first.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Contour(Arc<[Label]>);

impl Contour {
    pub fn empty() -> Contour {
        Contour(Arc::from(Vec::new()))
    }

    pub fn from_labels(labels: Vec<Label>) -> Contour {
        Contour(Arc::from(labels))
    }

    pub fn labels(&self) -> &[Label] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `label : self`, keeping at most `bound` entries.
    pub fn push(&self, label: Label, bound: Option<usize>) -> Contour {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(label);
        v.extend_from_slice(&self.0);
        if let Some(k) = bound {
            v.truncate(k);
        }
        Contour::from_labels(v)
    }

    pub fn truncate(&self, k: usize) -> Contour {
        if self.0.len() <= k {
            self.clone()
        } else {
            Contour::from_labels(self.0[..k].to_vec())
        }
    }
}

impl fmt::Display for Contour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str("]")
    }
}

impl fmt::Debug for Contour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Time {
    Tick(u64),
    Contour(Contour),
}

impl Time {
    /// Strict precedence used by the concrete allocation contract: counters
    /// increase; unbounded contours grow by extension.
    pub fn precedes(&self, later: &Time) -> bool {
        match (self, later) {
            (Time::Tick(a), Time::Tick(b)) => a < b,
            (Time::Contour(a), Time::Contour(b)) => a.len() < b.len() && b.labels().ends_with(a.labels()),
            _ => false,
        }
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Time::Tick(n) => write!(f, "{n}"),
            Time::Contour(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Debug for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum MonoAddr {
    BindVar(Var),
    KontSite(Label),
}

/// Store addresses.  `Kont` and `Mono(KontSite)` are keyed by a syntactic
/// site: the expression whose evaluation allocated the location (an
/// application, a conditional, a forced variable, a thunk's operand...).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Addr {
    Fresh(u64),
    Bind(Var, Time),
    Kont(Label, Time),
    Mono(MonoAddr),
}

impl Addr {
    /// The variable a binding address belongs to.
    pub fn binding_var(&self) -> Option<&Var> {
        match self {
            Addr::Bind(x, _) | Addr::Mono(MonoAddr::BindVar(x)) => Some(x),
            _ => None,
        }
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Addr::Fresh(n) => write!(f, "a{n}"),
            Addr::Bind(x, t) => write!(f, "{x}@{t}"),
            Addr::Kont(l, t) => write!(f, "k{l}@{t}"),
            Addr::Mono(MonoAddr::BindVar(x)) => write!(f, "{x}"),
            Addr::Mono(MonoAddr::KontSite(l)) => write!(f, "k{l}"),
        }
    }
}

impl fmt::Debug for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("dangling address {0}")]
pub struct Dangling(pub Addr);

/// A finite map from addresses to single storables.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ConcreteStore<S> {
    entries: Arc<BTreeMap<Addr, S>>,
}

impl<S> Default for ConcreteStore<S> {
    fn default() -> Self {
        ConcreteStore { entries: Arc::new(BTreeMap::new()) }
    }
}

impl<S: Clone> ConcreteStore<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup(&self, a: &Addr) -> Result<&S, Dangling> {
        self.entries.get(a).ok_or_else(|| Dangling(a.clone()))
    }

    pub fn get(&self, a: &Addr) -> Option<&S> {
        self.entries.get(a)
    }

    pub fn contains(&self, a: &Addr) -> bool {
        self.entries.contains_key(a)
    }

    /// Functional update, overwriting any previous value.
    pub fn insert(&self, a: Addr, s: S) -> Self {
        let mut entries = self.entries.clone();
        Arc::make_mut(&mut entries).insert(a, s);
        ConcreteStore { entries }
    }

    /// One past the largest `Fresh` key, starting from 1.
    pub fn next_fresh(&self) -> u64 {
        self.entries
            .keys()
            .filter_map(|a| match a {
                Addr::Fresh(n) => Some(*n),
                _ => None,
            })
            .max()
            .unwrap_or(0)
            + 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Addr, &S)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn restrict(&self, keep: &BTreeSet<Addr>) -> Self {
        let entries = self.entries.iter().filter(|(a, _)| keep.contains(*a)).map(|(a, s)| (a.clone(), s.clone())).collect();
        ConcreteStore { entries: Arc::new(entries) }
    }
}

impl<S: Clone> FromIterator<(Addr, S)> for ConcreteStore<S> {
    fn from_iter<I: IntoIterator<Item = (Addr, S)>>(iter: I) -> Self {
        ConcreteStore { entries: Arc::new(iter.into_iter().collect()) }
    }
}

/// A finite map from addresses to non-empty sets of storables.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct AbstractStore<S: Ord> {
    entries: Arc<BTreeMap<Addr, BTreeSet<S>>>,
}

impl<S: Ord> Default for AbstractStore<S> {
    fn default() -> Self {
        AbstractStore { entries: Arc::new(BTreeMap::new()) }
    }
}

impl<S: Ord + Clone> AbstractStore<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(a: Addr, values: BTreeSet<S>) -> Self {
        AbstractStore::new().merge_binding(a, values)
    }

    /// The values at `a`; empty when absent.
    pub fn lookup_default(&self, a: &Addr) -> BTreeSet<S> {
        self.entries.get(a).cloned().unwrap_or_default()
    }

    /// Borrowing form of [`Self::lookup_default`].
    pub fn values(&self, a: &Addr) -> impl Iterator<Item = &S> {
        self.entries.get(a).into_iter().flatten()
    }

    pub fn get(&self, a: &Addr) -> Option<&BTreeSet<S>> {
        self.entries.get(a)
    }

    pub fn contains(&self, a: &Addr) -> bool {
        self.entries.contains_key(a)
    }

    /// `self ⊔ [a ↦ values]`.  An empty `values` leaves the store unchanged.
    pub fn merge_binding(&self, a: Addr, values: BTreeSet<S>) -> Self {
        if values.is_empty() {
            return self.clone();
        }
        if let Some(old) = self.entries.get(&a) {
            if values.is_subset(old) {
                return self.clone();
            }
        }
        let mut entries = self.entries.clone();
        Arc::make_mut(&mut entries).entry(a).or_default().extend(values);
        AbstractStore { entries }
    }

    /// `self ⊔ [a ↦ {value}]`.
    pub fn join_one(&self, a: Addr, value: S) -> Self {
        self.merge_binding(a, BTreeSet::from([value]))
    }

    /// Strong update: `a` maps to exactly `{value}`.
    pub fn overwrite(&self, a: Addr, value: S) -> Self {
        let mut entries = self.entries.clone();
        Arc::make_mut(&mut entries).insert(a, BTreeSet::from([value]));
        AbstractStore { entries }
    }

    pub fn join_store(&self, other: &Self) -> Self {
        if other.entries.len() > self.entries.len() {
            return other.join_store(self);
        }
        let mut out = self.clone();
        for (a, vs) in other.entries.iter() {
            out = out.merge_binding(a.clone(), vs.clone());
        }
        out
    }

    pub fn leq_store(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.entries, &other.entries)
            || self.entries.iter().all(|(a, vs)| other.entries.get(a).is_some_and(|ws| vs.is_subset(ws)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Addr, &BTreeSet<S>)> {
        self.entries.iter()
    }

    pub fn addresses(&self) -> impl Iterator<Item = &Addr> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn restrict(&self, keep: &BTreeSet<Addr>) -> Self {
        if self.entries.keys().all(|a| keep.contains(a)) {
            return self.clone();
        }
        let entries = self.entries.iter().filter(|(a, _)| keep.contains(*a)).map(|(a, s)| (a.clone(), s.clone())).collect();
        AbstractStore { entries: Arc::new(entries) }
    }

    /// Applies `f` to every address and storable, joining collisions.
    pub fn map<T: Ord + Clone>(&self, mut addr: impl FnMut(&Addr) -> Addr, mut value: impl FnMut(&S) -> T) -> AbstractStore<T> {
        let mut out: BTreeMap<Addr, BTreeSet<T>> = BTreeMap::new();
        for (a, vs) in self.entries.iter() {
            out.entry(addr(a)).or_default().extend(vs.iter().map(&mut value));
        }
        AbstractStore { entries: Arc::new(out) }
    }
}

impl<S: Ord + Clone> Lattice for AbstractStore<S> {
    fn bottom() -> Self {
        AbstractStore::new()
    }

    fn join(&self, other: &Self) -> Self {
        self.join_store(other)
    }

    fn leq(&self, other: &Self) -> bool {
        self.leq_store(other)
    }
}

impl<S: Ord + Clone> FromIterator<(Addr, S)> for AbstractStore<S> {
    fn from_iter<I: IntoIterator<Item = (Addr, S)>>(iter: I) -> Self {
        let mut out: BTreeMap<Addr, BTreeSet<S>> = BTreeMap::new();
        for (a, s) in iter {
            out.entry(a).or_default().insert(s);
        }
        AbstractStore { entries: Arc::new(out) }
    }
}

impl<S: Clone + Ord> From<&ConcreteStore<S>> for AbstractStore<S> {
    /// The singleton-set view of a concrete store.
    fn from(c: &ConcreteStore<S>) -> Self {
        c.iter().map(|(a, s)| (a.clone(), s.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(n: u64) -> Addr {
        Addr::Fresh(n)
    }

    #[test]
    fn absent_is_bottom() {
        let s: AbstractStore<u8> = AbstractStore::new();
        assert!(s.lookup_default(&a(1)).is_empty());
        assert!(s.leq_store(&AbstractStore::singleton(a(1), BTreeSet::from([3]))));
    }

    #[test]
    fn merge_is_pointwise_union() {
        let s = AbstractStore::singleton(a(1), BTreeSet::from([1u8]));
        let t = s.join_one(a(1), 2).join_one(a(2), 5);
        assert_eq!(t.lookup_default(&a(1)), BTreeSet::from([1, 2]));
        assert!(s.leq_store(&t));
        assert!(!t.leq_store(&s));
    }

    #[test]
    fn concrete_lookup_of_absent_is_error() {
        let s: ConcreteStore<u8> = ConcreteStore::new();
        assert_eq!(s.lookup(&a(4)), Err(Dangling(a(4))));
        assert_eq!(s.next_fresh(), 1);
        assert_eq!(s.insert(a(7), 0).next_fresh(), 8);
    }

    #[test]
    fn contour_push_truncates() {
        let c = Contour::from_labels(vec![Label(3), Label(2)]);
        assert_eq!(c.push(Label(9), Some(2)).labels(), &[Label(9), Label(3)]);
        assert_eq!(c.push(Label(9), Some(0)).labels(), &[] as &[Label]);
        assert!(Time::Contour(c.clone()).precedes(&Time::Contour(c.push(Label(1), None))));
        assert!(Time::Tick(3).precedes(&Time::Tick(4)));
    }
}
