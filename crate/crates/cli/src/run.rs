use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hash;

use aam::analysis::{analyze_widened, AbstractCesk, Widen, ZeroCfa};
use aam::concrete::{Cek, CekClosure, Cesk, CeskStar, CeskStarT};
use aam::extended::{AbstractCeshk, Ceshk, ExtValue};
use aam::gc::Collecting;
use aam::graph::{explore, StateGraph};
use aam::lazy::{AbstractLk, Lk, Variant};
use aam::machine::{AbstractMachine, Closure, ConcreteMachine, Halt, InjectError};
use aam::policy::{Contours, Counter, TickKeyed};
use aam::pushdown::{reachable_pushdown, reachable_pushdown_widened, Pushdown, SummaryGraph};
use aam::security::{annotate, AbstractCm, Cm, CmResult};
use aam::syntax::{parse_program, Exp, ExpKind, PermSet, Permission};
use aam::view::{binding_flow, value_flow, Describe};

use crate::config::{Machine, RunConfig};
use crate::report::{Report, StateRecord, Summary};

/// Why a run produced no report.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Parse(_) => 1,
            RunError::Config(_) => 2,
        }
    }
}

fn rejected(e: InjectError) -> RunError {
    match e {
        InjectError::Open(_) => RunError::Parse(e.to_string()),
        InjectError::Unsupported(_) => RunError::Config(e.to_string()),
    }
}

/// Parses `source` and runs the configured machine on it.
pub fn run(cfg: &RunConfig, source: &str) -> Result<Report, RunError> {
    cfg.validate().map_err(RunError::Config)?;
    let program = parse_program(source).map_err(|e| RunError::Parse(e.to_string()))?;
    let mut e = program.exp;
    let mut universe = program.permissions.unwrap_or_else(|| mentioned(&e));
    if let Some(names) = &cfg.annotate {
        let r: PermSet = names.iter().map(|p| Permission::new(p)).collect();
        universe.extend(r.iter().cloned());
        e = annotate(&e, &r);
    }
    let k = cfg.k();
    let contours = Contours::k_cfa(k);
    let lam = |c: &Closure| c.lam.to_string();

    macro_rules! concrete {
        ($m:expr, $show:expr) => {
            if cfg.gc {
                trace(cfg, &Collecting($m), &e, $show)
            } else {
                trace(cfg, &$m, &e, $show)
            }
        };
    }
    macro_rules! analysis {
        ($m:expr) => {
            match (cfg.widen, cfg.gc) {
                (false, false) => graph(cfg, &$m, &e),
                (false, true) => graph(cfg, &Collecting($m), &e),
                (true, false) => widened(cfg, &$m, &e),
                (true, true) => widened(cfg, &Collecting($m), &e),
            }
        };
    }

    match cfg.machine {
        Machine::Cek => trace(cfg, &Cek, &e, |c: &CekClosure| c.lam.to_string()),
        Machine::Cesk => concrete!(Cesk, lam),
        Machine::CeskStar => concrete!(CeskStar, lam),
        Machine::CeskT => concrete!(CeskStarT::new(Counter), lam),
        Machine::Lk => concrete!(Lk::new(Variant::Standard), lam),
        Machine::LkOpt => concrete!(Lk::new(Variant::Optimized), lam),
        Machine::LkPostponed => concrete!(Lk::new(Variant::Postponed), lam),
        Machine::Ext => concrete!(Ceshk::new(TickKeyed), |v: &ExtValue| v.lam().map_or_else(|| v.to_string(), |l| l.to_string())),
        Machine::Cm => concrete!(Cm::new(universe), |r: &CmResult| match r {
            CmResult::Value(c) => c.lam.to_string(),
            CmResult::Fail => "fail".to_string(),
        }),
        Machine::Kcfa => analysis!(AbstractCesk::new(contours)),
        Machine::ZeroCfa => analysis!(ZeroCfa),
        Machine::Alk => analysis!(AbstractLk::new(contours, Variant::Standard)),
        Machine::Acm => analysis!(AbstractCm::new(contours, universe)),
        Machine::Aext => analysis!(AbstractCeshk::new(contours)),
        Machine::Pushdown => {
            let m = Pushdown::new(contours);
            if cfg.widen {
                let w = reachable_pushdown_widened(&m, &e).map_err(rejected)?;
                let mut r = summary_report(cfg, &w.graph);
                r.summary.iterations = Some(w.rounds);
                Ok(r)
            } else {
                Ok(summary_report(cfg, &reachable_pushdown(&m, &e).map_err(rejected)?))
            }
        }
    }
}

/// Permissions named anywhere in the program.
fn mentioned(e: &Exp) -> PermSet {
    let mut out = PermSet::new();
    for s in e.subterms() {
        match s.kind() {
            ExpKind::Frame(r, _) | ExpKind::Grant(r, _) | ExpKind::Test(r, _, _) => out.extend(r.iter().cloned()),
            _ => {}
        }
    }
    out
}

type Table = BTreeMap<String, Vec<String>>;

fn table(t: BTreeMap<String, BTreeSet<String>>) -> Table {
    t.into_iter().map(|(x, lams)| (x, lams.into_iter().collect())).collect()
}

fn trace<M>(cfg: &RunConfig, m: &M, e: &Exp, show: impl Fn(&M::Value) -> String) -> Result<Report, RunError>
where
    M: ConcreteMachine,
    M::State: Describe,
{
    let t = m.run_trace(e, cfg.fuel()).map_err(rejected)?;
    let last = t.states.len() - 1;
    let finished = matches!(t.halt, Halt::Final(_));
    let states = t.states.iter().enumerate().map(|(i, s)| StateRecord::new(i, s.view(), finished && i == last)).collect();
    let outcome = match &t.halt {
        Halt::Final(v) => format!("Final: {}", show(v)),
        Halt::Stuck(why) => format!("Stuck: {why}"),
        Halt::OutOfFuel => format!("Out of fuel after {} steps", t.steps()),
    };
    Ok(Report {
        machine: cfg.machine.to_string(),
        k: cfg.k(),
        states,
        edges: (0..last).map(|i| [i, i + 1]).collect(),
        initial: 0,
        summary: Summary {
            state_count: t.states.len(),
            finals: if finished { vec![last] } else { vec![] },
            value_flow: table(value_flow(t.states.iter())),
            binding_flow: table(binding_flow(t.states.iter())),
            edge_count: last,
            outcome: Some(outcome),
            iterations: None,
        },
    })
}

fn graph_report<S: Describe + Hash + Eq + Clone>(cfg: &RunConfig, g: &StateGraph<S>) -> Report {
    let finals: BTreeSet<usize> = g.final_ids().iter().copied().collect();
    let states = g.states().enumerate().map(|(i, s)| StateRecord::new(i, s.view(), finals.contains(&i))).collect();
    let edges: Vec<[usize; 2]> = g.edges().iter().map(|&(a, b)| [a, b]).collect::<BTreeSet<_>>().into_iter().collect();
    Report {
        machine: cfg.machine.to_string(),
        k: cfg.k(),
        states,
        initial: g.initial(),
        summary: Summary {
            state_count: g.len(),
            finals: finals.into_iter().collect(),
            value_flow: table(value_flow(g.states())),
            binding_flow: table(binding_flow(g.states())),
            edge_count: edges.len(),
            outcome: None,
            iterations: None,
        },
        edges,
    }
}

fn graph<M>(cfg: &RunConfig, m: &M, e: &Exp) -> Result<Report, RunError>
where
    M: AbstractMachine,
    M::State: Describe,
{
    Ok(graph_report(cfg, &explore(m, e).map_err(rejected)?))
}

/// Each context of the widened system is shown with the single final store.
fn widened<M>(cfg: &RunConfig, m: &M, e: &Exp) -> Result<Report, RunError>
where
    M: Widen,
    M::State: Describe,
{
    let w = analyze_widened(m, e).map_err(rejected)?;
    let states: Vec<M::State> = w.contexts.iter().map(|c| m.assemble(c, &w.store)).collect();
    let finals = (0..states.len()).filter(|&i| m.is_final(&states[i])).collect();
    let g = StateGraph::from_parts(states, w.edges.clone(), finals, 0);
    let mut r = graph_report(cfg, &g);
    r.summary.iterations = Some(w.iterations);
    Ok(r)
}

fn summary_report(cfg: &RunConfig, g: &SummaryGraph) -> Report {
    let finals = g.final_ids();
    let states = (0..g.len()).map(|i| StateRecord::new(i, g.node(i).view(), finals.contains(&i))).collect();
    let edges: Vec<[usize; 2]> = g.edges().map(|&(a, b, _)| [a, b]).collect::<BTreeSet<_>>().into_iter().collect();
    Report {
        machine: cfg.machine.to_string(),
        k: cfg.k(),
        states,
        initial: g.initial(),
        summary: Summary {
            state_count: g.len(),
            finals,
            value_flow: table(value_flow(g.nodes())),
            binding_flow: table(binding_flow(g.nodes())),
            edge_count: edges.len(),
            outcome: None,
            iterations: None,
        },
        edges,
    }
}
