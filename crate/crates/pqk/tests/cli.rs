use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pqk::{StateDocument, SystemDocument};
use pqk_core::dpg::generate_random_system;
use pqk_core::gaussian_states::random_mixture;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

fn pqk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqk"))
        .current_dir(dir)
        .env_remove("PQK_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn demo(dir: &Path, depth: &str, seed: &str) {
    let o = pqk(
        dir,
        &["dpg-demo", "--edges", "3", "--depth", depth, "--seed", seed, "--out", "s.json", "--state-out", "st.json"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn system_documents_round_trip() {
    for seed in 0..20 {
        let sys = generate_random_system(4, 3, seed).unwrap();
        let text = serde_json::to_string(&SystemDocument::from_system(&sys)).unwrap();
        let doc: SystemDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(doc.to_system().unwrap(), sys, "seed {seed}");
    }
}

#[test]
fn state_documents_round_trip_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for dim in 1..5 {
        let state = random_mixture(dim, 3, &mut rng);
        let text = serde_json::to_string(&StateDocument::from_state("L", &state)).unwrap();
        let doc: StateDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(doc.to_state().unwrap(), state);
    }
}

#[test]
fn demo_system_passes_the_audit() {
    let dir = TempDir::new().unwrap();
    demo(dir.path(), "2", "7");
    let o = pqk(dir.path(), &["verify", "s.json", "--report", "r.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(report(dir.path(), "r.json")["passed"], Value::Bool(true));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    demo(dir.path(), "3", "5");
    let runs: [&[&str]; 2] = [
        &["verify", "s.json", "--report", "r.json"],
        &["consistency", "--system", "s.json", "--state", "st.json", "--chain", "J2,J1,L0a", "--report", "r.json"],
    ];
    for args in runs {
        let mut bytes = Vec::new();
        for _ in 0..2 {
            assert_eq!(code(&pqk(dir.path(), args)), 0);
            bytes.push(fs::read(dir.path().join("r.json")).unwrap());
        }
        assert_eq!(bytes[0], bytes[1], "{args:?}");
    }
}

#[test]
fn generated_chain_is_consistent() {
    let dir = TempDir::new().unwrap();
    demo(dir.path(), "3", "7");
    let o = pqk(
        dir.path(),
        &["consistency", "--system", "s.json", "--state", "st.json", "--chain", "J2,J1,L0b", "--report", "c.json"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(dir.path(), "c.json");
    assert!(r["distance"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn projecting_against_the_order_fails() {
    let dir = TempDir::new().unwrap();
    demo(dir.path(), "2", "3");
    let o = pqk(dir.path(), &["project", "--system", "s.json", "--state", "st.json", "--from", "J1", "--to", "L0a", "--out", "p.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = pqk(dir.path(), &["project", "--system", "s.json", "--state", "p.json", "--from", "L0a", "--to", "J1", "--out", "q.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("order violation"), "{}", stderr(&o));
    assert!(!dir.path().join("q.json").exists());
}

#[test]
fn malformed_input_names_the_field() {
    let dir = TempDir::new().unwrap();
    demo(dir.path(), "2", "3");
    let mut doc: Value = report(dir.path(), "s.json");
    doc["faces"][0]["incidence"][0]["value"] = Value::from(0.25);
    fs::write(dir.path().join("bad.json"), doc.to_string()).unwrap();
    let o = pqk(dir.path(), &["verify", "bad.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("faces[0].incidence[0].value"), "{}", stderr(&o));

    let mut st: Value = report(dir.path(), "st.json");
    st["terms"][1]["s"][0] = Value::from("x");
    fs::write(dir.path().join("bad_state.json"), st.to_string()).unwrap();
    let o = pqk(dir.path(), &["project", "--system", "s.json", "--state", "bad_state.json", "--from", "J1", "--to", "L0a", "--out", "p.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("terms[1].s[0]"), "{}", stderr(&o));

    let o = pqk(dir.path(), &["verify", "missing.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn join_extends_an_audited_system() {
    let dir = TempDir::new().unwrap();
    demo(dir.path(), "3", "7");
    let o = pqk(dir.path(), &["join", "--system", "s.json", "--labels", "L1b,L0b", "--out", "s2.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let o = pqk(dir.path(), &["verify", "s2.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let o = pqk(dir.path(), &["join", "--system", "s.json", "--labels", "L1b,nope", "--out", "s3.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn oracle_agrees_with_closed_form() {
    let dir = TempDir::new().unwrap();
    demo(dir.path(), "2", "9");
    let o = pqk(
        dir.path(),
        &["oracle", "--system", "s.json", "--state", "st.json", "--from", "J1", "--to", "L0a", "--report", "o.json"],
    );
    assert_eq!(code(&o), 0, "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    assert!(report(dir.path(), "o.json")["max_relative_error"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn seed_environment_overrides_flag() {
    let dir = TempDir::new().unwrap();
    let run = |seed: &str, env: Option<&str>, out: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_pqk"));
        c.current_dir(dir.path()).env_remove("PQK_SEED");
        if let Some(e) = env {
            c.env("PQK_SEED", e);
        }
        let o = c.args(["dpg-demo", "--edges", "3", "--depth", "2", "--seed", seed, "--out", out]).output().unwrap();
        assert_eq!(code(&o), 0);
        fs::read(dir.path().join(out)).unwrap()
    };
    assert_eq!(run("1", Some("4"), "a.json"), run("4", None, "b.json"));
    assert_ne!(run("1", None, "c.json"), run("4", None, "d.json"));
}

#[test]
fn ap_operations() {
    let dir = TempDir::new().unwrap();
    let write = |name: &str, v: &str| fs::write(dir.path().join(name), v).unwrap();
    write("a.json", r#"{"frame":["a"],"terms":[{"frequency":["2"],"amplitude":["1","0"]},{"frequency":["1/3"],"amplitude":["0","1/2"]}]}"#);
    write("b.json", r#"{"frame":["b"],"terms":[{"frequency":["1"],"amplitude":["1","0"]}]}"#);
    write("c.json", r#"{"frame":["a"],"terms":[{"frequency":["2"],"amplitude":["1","0"]}]}"#);
    write(
        "up.json",
        r#"{"first":{"target":["a"],"source":["u","v"],"matrix":[["1","1"]]},"second":{"target":["b"],"source":["u","v"],"matrix":[["2","2"]]}}"#,
    );
    let o = pqk(dir.path(), &["ap", "--op", "inner", "--in", "a.json", "a.json", "--report", "i.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(report(dir.path(), "i.json")["value"], serde_json::json!(["5/4", "0"]));
    let o = pqk(dir.path(), &["ap", "--op", "limit-equal", "--in", "c.json", "b.json", "--upper", "up.json", "--report", "l.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(report(dir.path(), "l.json")["equal"], Value::Bool(true));
    let o = pqk(dir.path(), &["ap", "--op", "inner", "--in", "a.json", "b.json"]);
    assert_eq!(code(&o), 2);
}
