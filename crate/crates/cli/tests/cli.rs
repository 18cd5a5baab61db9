use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output};

use aam::analysis::ZeroCfa;
use aam::graph::explore;
use aam::syntax::parse;
use aam::view::Describe;
use aam_cli::{run, Machine, Report, RunConfig};

fn program(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../programs").join(name)
}

fn aam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aam")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> Report {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let o = aam(&all);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    Report::from_json(&stdout(&o)).unwrap()
}

fn temp_program(src: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(src.as_bytes()).unwrap();
    f
}

#[test]
fn cek_runs_identity_on_identity() {
    let path = program("id-id.scm");
    let o = aam(&["cek", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Final: (lambda (y) y)"));
    let r = json(&["cek", path.to_str().unwrap()]);
    assert_eq!(r.states.len(), 5);
    assert_eq!(r.summary.finals, vec![4]);
}

#[test]
fn zero_cfa_on_omega_terminates_with_a_cycle() {
    let path = program("omega.scm");
    let r = json(&["0cfa", path.to_str().unwrap()]);
    assert!(r.summary.finals.is_empty());
    assert!(r.edges.iter().any(|[a, b]| b <= a), "no back edge");
    let dot = stdout(&aam(&["0cfa", "--format", "dot", path.to_str().unwrap()]));
    assert!(dot.lines().filter(|l| l.contains(" -> ")).any(|l| {
        let (a, b) = l.trim().trim_end_matches(';').split_once(" -> ").unwrap();
        b.parse::<usize>().unwrap() <= a.parse::<usize>().unwrap()
    }));
}

#[test]
fn one_contour_keeps_the_two_calls_apart() {
    let path = program("two-call.scm");
    let r = json(&["kcfa", "--k", "1", path.to_str().unwrap()]);
    let x: Vec<_> = r.summary.binding_flow.iter().filter(|(a, _)| a.starts_with("x@")).collect();
    assert_eq!(x.len(), 2);
    assert!(x.iter().all(|(_, lams)| lams.len() == 1));
    assert_eq!(r.summary.value_flow["x"].len(), 2);
    let mono = json(&["kcfa", path.to_str().unwrap()]);
    assert_eq!(mono.summary.binding_flow.iter().filter(|(a, _)| a.starts_with("x")).map(|(_, l)| l.len()).collect::<Vec<_>>(), vec![2]);
}

#[test]
fn a_value_is_a_single_final_state() {
    let f = temp_program("(lambda (x) x)");
    let r = json(&["kcfa", f.path().to_str().unwrap()]);
    assert_eq!((r.states.len(), r.edges.len(), r.initial), (1, 0, 0));
    assert_eq!(r.summary.finals, vec![0]);
    let dot = stdout(&aam(&["kcfa", "--format", "dot", f.path().to_str().unwrap()]));
    assert_eq!(dot.matches(" [label=").count(), 1);
    assert_eq!(dot.matches(" -> ").count(), 0);
}

#[test]
fn json_matches_explore_and_loads_back() {
    let src = std::fs::read_to_string(program("id-id.scm")).unwrap();
    let g = explore(&ZeroCfa, &parse(&src).unwrap()).unwrap();
    let r = json(&["0cfa", program("id-id.scm").to_str().unwrap()]);
    assert_eq!(r.summary.state_count, g.len());
    let views: BTreeSet<_> = g.states().map(|s| {
        let v = s.view();
        (v.control, v.kont, v.store.into_iter().collect::<BTreeMap<_, _>>())
    }).collect();
    let loaded: BTreeSet<_> = r.states.iter().map(|s| {
        (s.control.clone(), s.kont.clone(), s.store.clone())
    }).collect();
    assert_eq!(views, loaded);
    let edges: BTreeSet<[usize; 2]> = g.edges().iter().map(|&(a, b)| [a, b]).collect();
    assert_eq!(edges, r.edges.iter().copied().collect());
}

#[test]
fn edges_are_never_repeated() {
    for (m, p) in [("kcfa", "two-call.scm"), ("pushdown", "return-flow.scm"), ("0cfa", "gc.scm")] {
        let r = json(&[m, program(p).to_str().unwrap()]);
        let distinct: BTreeSet<_> = r.edges.iter().collect();
        assert_eq!(distinct.len(), r.edges.len(), "{m}");
        assert_eq!(r.summary.edge_count, r.edges.len());
    }
}

#[test]
fn output_is_byte_deterministic() {
    for args in [["pushdown", "--k", "1"], ["kcfa", "--k", "1"], ["alk", "--k", "0"]] {
        for format in ["text", "json", "dot"] {
            let path = program("two-call.scm");
            let mut all = args.to_vec();
            all.extend(["--format", format, path.to_str().unwrap()]);
            assert_eq!(aam(&all).stdout, aam(&all).stdout, "{all:?}");
        }
    }
}

#[test]
fn exit_codes() {
    let bad = temp_program("((lambda (x) x)");
    assert_eq!(aam(&["cek", bad.path().to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(aam(&["cek", program("open.scm").to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(aam(&["cek", "--gc", program("id-id.scm").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(aam(&["cesk", "--widen", program("id-id.scm").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(aam(&["0cfa", "--k", "1", program("id-id.scm").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(aam(&["cek", program("callcc.scm").to_str().unwrap()]).status.code(), Some(2));
    let stuck = aam(&["ext", program("stuck.scm").to_str().unwrap()]);
    assert_eq!(stuck.status.code(), Some(3));
    assert!(stdout(&stuck).contains("Stuck"));
    let fuel = aam(&["cek", "--fuel", "50", program("omega.scm").to_str().unwrap()]);
    assert_eq!(fuel.status.code(), Some(0));
    assert!(stdout(&fuel).contains("Out of fuel after 50 steps"));
}

#[test]
fn every_machine_runs() {
    let cases: &[(Machine, &str, &str)] = &[
        (Machine::Cek, "id-id.scm", "(lambda (y) y)"),
        (Machine::Cesk, "two-call.scm", "(lambda (b) b)"),
        (Machine::CeskStar, "gc.scm", "(lambda (b) b)"),
        (Machine::CeskT, "return-flow.scm", "(lambda (b) b)"),
        (Machine::Lk, "lazy.scm", "(lambda (y) y)"),
        (Machine::LkOpt, "lazy.scm", "(lambda (y) y)"),
        (Machine::LkPostponed, "lazy.scm", "(lambda (y) y)"),
        (Machine::Ext, "callcc.scm", "(lambda (a) a)"),
        (Machine::Cm, "grant.scm", "(lambda (a) a)"),
        (Machine::Kcfa, "two-call.scm", "(lambda (b) b)"),
        (Machine::ZeroCfa, "gc.scm", "(lambda (b) b)"),
        (Machine::Alk, "lazy.scm", "(lambda (y) y)"),
        (Machine::Acm, "grant.scm", "(lambda (a) a)"),
        (Machine::Aext, "callcc.scm", "(lambda (a) a)"),
        (Machine::Pushdown, "return-flow.scm", "(lambda (b) b)"),
    ];
    for &(m, p, want) in cases {
        let src = std::fs::read_to_string(program(p)).unwrap();
        let mut variants = vec![RunConfig::new(m)];
        if m.has_store() {
            variants.push(RunConfig { gc: true, ..RunConfig::new(m) });
        }
        if m.is_abstract() {
            variants.push(RunConfig { widen: true, ..RunConfig::new(m) });
        }
        for cfg in variants {
            let r = run(&cfg, &src).unwrap_or_else(|e| panic!("{m} on {p}: {e}"));
            let finals: BTreeSet<&str> = r.summary.finals.iter().map(|&i| r.states[i].control.as_str()).collect();
            assert!(finals.contains(want), "{cfg:?} on {p}: {finals:?}");
            if let Some(o) = &r.summary.outcome {
                assert_eq!(o, &format!("Final: {want}"));
            }
        }
    }
}

#[test]
fn annotation_wraps_the_program() {
    let f = temp_program("((lambda (x) x) (lambda (y) y))");
    let o = aam(&["cm", "--annotate", "p,q", f.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("Final: (lambda (y) (frame (p q) y))"), "{text}");
}
