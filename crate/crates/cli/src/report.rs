//! The machine-independent result of a run and its three renderings.

use std::collections::BTreeMap;
use std::fmt::Write;

use aam::view::StateView;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateRecord {
    pub id: usize,
    pub control: String,
    pub env: BTreeMap<String, String>,
    pub store: BTreeMap<String, Vec<String>>,
    pub kont: String,
    pub time: String,
    #[serde(rename = "final")]
    pub is_final: bool,
}

impl StateRecord {
    pub fn new(id: usize, v: StateView, is_final: bool) -> Self {
        StateRecord {
            id,
            control: v.control,
            env: v.env.into_iter().collect(),
            store: v.store.into_iter().collect(),
            kont: v.kont,
            time: v.time.unwrap_or_default(),
            is_final,
        }
    }

    /// The leading constructor of the continuation: `mt`, `ar`, `fn`, ...
    pub fn kont_head(&self) -> &str {
        let end = self.kont.find(['(', ' ', '[']).unwrap_or(self.kont.len());
        &self.kont[..end]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(rename = "stateCount")]
    pub state_count: usize,
    pub finals: Vec<usize>,
    /// Variable name to the lambdas it may be bound to, contours dropped.
    #[serde(rename = "valueFlow")]
    pub value_flow: BTreeMap<String, Vec<String>>,
    #[serde(rename = "edgeCount")]
    pub edge_count: usize,
    /// Binding address to the lambdas it may hold, contours kept.
    #[serde(rename = "bindingFlow", default, skip_serializing_if = "BTreeMap::is_empty")]
    pub binding_flow: BTreeMap<String, Vec<String>>,
    /// How a concrete run ended.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    /// Iterations of a widened fixed point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub machine: String,
    pub k: usize,
    pub states: Vec<StateRecord>,
    pub edges: Vec<[usize; 2]>,
    pub initial: usize,
    pub summary: Summary,
}

impl Report {
    pub fn is_concrete(&self) -> bool {
        self.summary.outcome.is_some()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Report> {
        serde_json::from_str(text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "machine: {} (k={})", self.machine, self.k);
        for s in &self.states {
            let mark = if s.is_final { "  [final]" } else { "" };
            let time = if s.time.is_empty() { String::new() } else { format!(" @ {}", s.time) };
            let _ = writeln!(out, "{:>4}: {}  | {}{time}{mark}", s.id, s.control, s.kont);
        }
        match &self.summary.outcome {
            Some(outcome) => {
                let _ = writeln!(out, "{outcome}");
                let _ = writeln!(out, "steps: {}", self.states.len().saturating_sub(1));
            }
            None => {
                let _ = writeln!(out, "states: {}  edges: {}", self.summary.state_count, self.summary.edge_count);
                if let Some(n) = self.summary.iterations {
                    let _ = writeln!(out, "iterations: {n}");
                }
                let finals: Vec<&str> = self.summary.finals.iter().map(|&i| self.states[i].control.as_str()).collect();
                let _ = writeln!(out, "finals: {}", if finals.is_empty() { "none".to_string() } else { finals.join(", ") });
            }
        }
        if !self.summary.value_flow.is_empty() {
            let _ = writeln!(out, "value flow:");
            for (x, lams) in &self.summary.value_flow {
                let _ = writeln!(out, "  {x} -> {{{}}}", lams.join(", "));
            }
        }
        if !self.summary.binding_flow.is_empty() && self.summary.outcome.is_none() {
            let _ = writeln!(out, "bindings:");
            for (a, lams) in &self.summary.binding_flow {
                let _ = writeln!(out, "  {a} -> {{{}}}", lams.join(", "));
            }
        }
        out
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph aam {\n  node [shape=box];\n");
        for s in &self.states {
            let label = escape(&format!("{}: {} ⟨{}⟩", s.id, s.control, s.kont_head()));
            let mut attrs = format!("label=\"{label}\"");
            if s.is_final {
                attrs.push_str(", shape=doublecircle");
            }
            if s.id == self.initial {
                attrs.push_str(", style=bold");
            }
            let _ = writeln!(out, "  {} [{attrs}];", s.id);
        }
        for [a, b] in &self.edges {
            let _ = writeln!(out, "  {a} -> {b};");
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state() -> Report {
        let v = StateView { control: "(lambda (x) x)".into(), kont: "mt".into(), ..StateView::default() };
        Report {
            machine: "kcfa".into(),
            k: 0,
            states: vec![StateRecord::new(0, v, true)],
            edges: vec![],
            initial: 0,
            summary: Summary { state_count: 1, finals: vec![0], value_flow: BTreeMap::new(), edge_count: 0, binding_flow: BTreeMap::new(), outcome: None, iterations: None },
        }
    }

    #[test]
    fn json_keys_come_in_schema_order() {
        let json = one_state().to_json();
        let at = |k: &str| json.find(&format!("\"{k}\"")).unwrap();
        let keys = ["machine", "k", "states", "id", "control", "env", "store", "kont", "time", "final", "edges", "initial", "summary", "stateCount", "finals", "valueFlow"];
        assert!(keys.windows(2).all(|w| at(w[0]) < at(w[1])), "{json}");
        assert!(!json.contains("outcome"));
        assert_eq!(Report::from_json(&json).unwrap(), one_state());
    }

    #[test]
    fn dot_marks_initial_and_final() {
        let dot = one_state().to_dot();
        assert_eq!(dot.matches(" -> ").count(), 0);
        assert!(dot.contains("0 [label=\"0: (lambda (x) x) ⟨mt⟩\", shape=doublecircle, style=bold];"), "{dot}");
    }

    #[test]
    fn kont_heads() {
        let mut s = one_state().states.remove(0);
        s.kont = "ar((f x), {x: 1}, mt)".into();
        assert_eq!(s.kont_head(), "ar");
    }
}
