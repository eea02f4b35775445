//! Command-line front end. Exit codes: 0 pass, 1 failed check, 2 malformed
//! input.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pqk_core::almost_periodic::{inner_product, limit_equal, promote};
use pqk_core::dof_systems::{check_assumptions, refinement, DirectednessProbe, OrderRelation, SystemFamily};
use pqk_core::dpg::{dpg_order_witness, generate_random_system, witness_connection, DpgError, DpgSystem};
use pqk_core::gaussian_states::{
    kernel_sample_points, partial_trace, project_state, purity, quadrature_partial_trace, random_mixture,
    verify_consistency, GaussianError, GaussianMixtureState,
};
use pqk_core::reduced_spaces::kernel_decomposition;
use num_traits::{One, Zero};
use pqk_core::Rational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::doc::{
    amplitude_doc, read_json, write_json, ApInput, ApVectorDoc, InputError, StateDocument, SystemDocument, UpperDoc,
};

#[derive(Debug, Parser)]
#[command(name = "pqk", version, about = "Projective families of reduced systems and Gaussian partial traces")]
pub struct Cli {
    /// Also write the JSON report to this file.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Audit every assumption of a system, instance by instance.
    Verify { system: PathBuf },
    /// Partial trace of a state from one label down to a coarser one.
    Project {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare direct and stepwise projection along a chain top,mid,bottom.
    Consistency {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        state: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1)]
        chain: Vec<String>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Add an upper bound of two labels to the system.
    Join {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1)]
        labels: Vec<String>,
        /// Id of the new label; defaults to `first+second`.
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the closed-form partial trace against midpoint quadrature.
    Oracle {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long, default_value_t = 8.0)]
        extent: f64,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        /// Largest accepted relative kernel error.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Write a random holonomy-flux system, and optionally a random state on
    /// its top label.
    DpgDemo {
        #[arg(long)]
        edges: usize,
        #[arg(long)]
        depth: usize,
        /// Overridden by the PQK_SEED environment variable.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        state_out: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        state_terms: usize,
    },
    /// Exact operations on almost periodic vectors.
    Ap {
        #[arg(long, value_enum)]
        op: ApOp,
        /// Two vectors, or a vector and a projection for `promote`.
        #[arg(long = "in", num_args = 2, required = true)]
        inputs: Vec<PathBuf>,
        /// Projections from a common refinement, for `limit-equal`.
        #[arg(long)]
        upper: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ApOp {
    Inner,
    Promote,
    LimitEqual,
}

#[derive(Debug)]
pub enum CliError {
    Input(InputError),
    Failure(String),
}

impl From<InputError> for CliError {
    fn from(e: InputError) -> Self {
        CliError::Input(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn failure(e: impl ToString) -> CliError {
    CliError::Failure(e.to_string())
}

/// A finished command: the verdict, a text summary and the JSON report.
pub struct Outcome {
    pub passed: bool,
    pub text: String,
    pub report: Value,
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (code, out, err) = run(&cli);
    print!("{out}");
    eprint!("{err}");
    ExitCode::from(code)
}

/// Runs a parsed command line and returns the exit code with stdout and
/// stderr text.
pub fn run(cli: &Cli) -> (u8, String, String) {
    let result = execute(&cli.command).and_then(|o| {
        if let Some(path) = &cli.report {
            write_json(path, &o.report)?;
        }
        Ok(o)
    });
    match result {
        Ok(o) => (if o.passed { 0 } else { 1 }, o.text, String::new()),
        Err(CliError::Failure(m)) => (1, String::new(), format!("error: {m}\n")),
        Err(CliError::Input(e)) => (2, String::new(), format!("malformed input: {e}\n")),
    }
}

fn load_system(path: &Path) -> CliResult<DpgSystem> {
    let doc: SystemDocument = read_json(path)?;
    doc.to_system()
        .map_err(|e| InputError::new(format!("{}: {}", path.display(), e.path), e.message).into())
}

fn load_state(path: &Path) -> CliResult<(String, GaussianMixtureState)> {
    let doc: StateDocument = read_json(path)?;
    let state = doc
        .to_state()
        .map_err(|e| InputError::new(format!("{}: {}", path.display(), e.path), e.message))?;
    Ok((doc.label, state))
}

fn family(sys: &DpgSystem) -> CliResult<SystemFamily> {
    sys.to_family().map_err(failure)
}

/// The state must live on `label` and match its dimension.
fn check_state_label(fam: &SystemFamily, path: &Path, state_label: &str, state: &GaussianMixtureState, label: &str) -> CliResult<()> {
    let field = format!("{}: field `label`", path.display());
    if state_label != label {
        return Err(InputError::new(field, format!("state lives on `{state_label}`, expected `{label}`")).into());
    }
    let l = fam
        .label(label)
        .ok_or_else(|| InputError::new(field.clone(), format!("unknown label `{label}`")))?;
    if l.dim() != state.dim() {
        return Err(InputError::new(
            format!("{}: field `terms`", path.display()),
            format!("state has dimension {}, label `{label}` has {}", state.dim(), l.dim()),
        )
        .into());
    }
    Ok(())
}

fn known_label(fam: &SystemFamily, id: &str, flag: &str) -> CliResult<()> {
    if fam.label(id).is_none() {
        return Err(InputError::new(flag, format!("unknown label `{id}`")).into());
    }
    Ok(())
}

fn gaussian(e: GaussianError) -> CliError {
    failure(e)
}

fn execute(cmd: &Command) -> CliResult<Outcome> {
    match cmd {
        Command::Verify { system } => verify(system),
        Command::Project {
            system,
            state,
            from,
            to,
            out,
        } => project(system, state, from, to, out),
        Command::Consistency {
            system,
            state,
            chain,
            tol,
        } => consistency(system, state, chain, *tol),
        Command::Join { system, labels, id, out } => join(system, labels, id.as_deref(), out),
        Command::Oracle {
            system,
            state,
            from,
            to,
            grid,
            extent,
            samples,
            tol,
        } => oracle(system, state, from, to, *grid, *extent, *samples, *tol),
        Command::DpgDemo {
            edges,
            depth,
            seed,
            out,
            state_out,
            state_terms,
        } => demo(*edges, *depth, *seed, out, state_out.as_deref(), *state_terms),
        Command::Ap { op, inputs, upper } => ap(*op, inputs, upper.as_deref()),
    }
}

fn verify(path: &Path) -> CliResult<Outcome> {
    let sys = load_system(path)?;
    let fam = family(&sys)?;
    let report = check_assumptions(&fam);
    let mut text = String::new();
    for f in report.failures() {
        let _ = writeln!(text, "FAIL {} [{}]: {}", f.assumption.anchor(), f.subject, f.detail);
    }
    let total = report.instances.len();
    let failed = report.failures().count();
    let _ = writeln!(
        text,
        "{}: {} of {} checks passed over {} labels and {} relations",
        if report.passed() { "PASS" } else { "FAIL" },
        total - failed,
        total,
        fam.labels.len(),
        fam.order.len()
    );
    let instances: Vec<Value> = report
        .instances
        .iter()
        .map(|i| {
            json!({
                "assumption": i.assumption.code(),
                "anchor": i.assumption.anchor(),
                "subject": i.subject,
                "passed": i.passed,
                "detail": i.detail,
            })
        })
        .collect();
    Ok(Outcome {
        passed: report.passed(),
        text,
        report: json!({ "command": "verify", "passed": report.passed(), "checks": total, "failed": failed, "instances": instances }),
    })
}

fn project(system: &Path, state_path: &Path, from: &str, to: &str, out: &Path) -> CliResult<Outcome> {
    let sys = load_system(system)?;
    let fam = family(&sys)?;
    let (label, state) = load_state(state_path)?;
    known_label(&fam, to, "--to")?;
    check_state_label(&fam, state_path, &label, &state, from)?;
    let w = fam
        .witness_between(from, to)
        .ok_or_else(|| failure(GaussianError::OrderViolation(format!("no witnessed relation {from} ≥ {to}"))))?;
    let (upper, lower) = (fam.label(from).expect("checked"), fam.label(to).expect("checked"));
    let p = project_state(&state, upper, lower, &w, &fam.basis).map_err(gaussian)?;
    write_json(out, &StateDocument::from_state(to, &p.state))?;
    let text = format!(
        "projected {from} -> {to}: dimension {} -> {}, trace before renormalization {:.3e} (drift {:.3e})\n",
        state.dim(),
        p.state.dim(),
        p.trace_before,
        p.drift()
    );
    Ok(Outcome {
        passed: true,
        text,
        report: json!({
            "command": "project", "from": from, "to": to,
            "source_dim": state.dim(), "target_dim": p.state.dim(),
            "trace_before": p.trace_before, "drift": p.drift(), "passed": true,
        }),
    })
}

fn consistency(system: &Path, state_path: &Path, chain: &[String], tol: f64) -> CliResult<Outcome> {
    let [top, mid, bottom] = chain else {
        return Err(InputError::new("--chain", format!("expected three labels, got {}", chain.len())).into());
    };
    let sys = load_system(system)?;
    let fam = family(&sys)?;
    let (label, state) = load_state(state_path)?;
    known_label(&fam, mid, "--chain")?;
    known_label(&fam, bottom, "--chain")?;
    check_state_label(&fam, state_path, &label, &state, top)?;
    let r = verify_consistency(&state, &fam, [top, mid, bottom], tol).map_err(gaussian)?;
    let text = format!(
        "{}: HS distance {:.3e} between direct and stepwise projection {top} -> {mid} -> {bottom} (tol {tol:e})\n",
        if r.passed { "PASS" } else { "FAIL" },
        r.distance
    );
    Ok(Outcome {
        passed: r.passed,
        text,
        report: json!({
            "command": "consistency", "chain": [top, mid, bottom],
            "distance": r.distance, "tol": tol, "passed": r.passed,
        }),
    })
}

fn join(system: &Path, labels: &[String], id: Option<&str>, out: &Path) -> CliResult<Outcome> {
    let [first, second] = labels else {
        return Err(InputError::new("--labels", format!("expected two labels, got {}", labels.len())).into());
    };
    let mut sys = load_system(system)?;
    for l in [first, second] {
        if sys.label(l).is_err() {
            return Err(InputError::new("--labels", format!("unknown label `{l}`")).into());
        }
    }
    let id = id.map(str::to_string).unwrap_or_else(|| format!("{first}+{second}"));
    if sys.label(&id).is_ok() {
        return Err(InputError::new("--id", format!("label `{id}` already exists")).into());
    }
    let j = sys.join(&id, first, second).map_err(failure)?;
    record_join(&mut sys, &id, first, second).map_err(failure)?;
    let fam = family(&sys)?;
    let report = check_assumptions(&fam);
    write_json(out, &SystemDocument::from_system(&sys))?;
    let graph: Vec<&str> = j.label.graph.edges().iter().map(|e| e.id.as_str()).collect();
    let text = format!(
        "joined {first} and {second} as {id}: {} edges, span of both flux sets has dimension {}, {} new faces; audit {}\n",
        graph.len(),
        j.m,
        j.new_faces.len(),
        if report.passed() { "passes" } else { "fails" }
    );
    Ok(Outcome {
        passed: report.passed(),
        text,
        report: json!({
            "command": "join", "label": id, "first": first, "second": second,
            "graph": graph, "m": j.m, "permutation": j.permutation,
            "new_faces": j.new_faces.iter().map(|f| f.id.clone()).collect::<Vec<_>>(),
            "passed": report.passed(),
        }),
    })
}

/// Completes the audit data of a fresh join: every relation with the other
/// labels, a surjectivity witness and the directedness claim.
fn record_join(sys: &mut DpgSystem, id: &str, first: &str, second: &str) -> Result<(), DpgError> {
    let new = sys.label(id)?.clone();
    let mut found = Vec::new();
    for other in sys.labels.iter().filter(|l| l.id != id) {
        for (upper, lower) in [(&new, other), (other, &new)] {
            if sys.order.iter().any(|r| r.upper == upper.id && r.lower == lower.id) {
                continue;
            }
            if let Some(witness) = dpg_order_witness(upper, lower, &sys.faces)? {
                found.push(OrderRelation {
                    upper: upper.id.clone(),
                    lower: lower.id.clone(),
                    witness,
                });
            }
        }
    }
    sys.order.extend(found);
    let n = new.graph.len();
    let connections = (0..n)
        .map(|k| {
            let targets: Vec<Rational> = (0..n).map(|i| if i == k { Rational::one() } else { Rational::zero() }).collect();
            witness_connection(&new.graph, &targets)
        })
        .collect::<Result<Vec<_>, _>>()?;
    sys.probes.surjectivity.push((id.to_string(), connections));
    sys.probes.directedness.push(DirectednessProbe {
        first: first.to_string(),
        second: second.to_string(),
        join: Some(id.to_string()),
    });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn oracle(
    system: &Path,
    state_path: &Path,
    from: &str,
    to: &str,
    grid: usize,
    extent: f64,
    samples: usize,
    tol: f64,
) -> CliResult<Outcome> {
    let sys = load_system(system)?;
    let fam = family(&sys)?;
    let (label, state) = load_state(state_path)?;
    known_label(&fam, to, "--to")?;
    check_state_label(&fam, state_path, &label, &state, from)?;
    let w = fam
        .witness_between(from, to)
        .ok_or_else(|| failure(GaussianError::OrderViolation(format!("no witnessed relation {from} ≥ {to}"))))?;
    let (upper, lower) = (fam.label(from).expect("checked"), fam.label(to).expect("checked"));
    let r = refinement(upper, lower, &w, &fam.basis).map_err(failure)?;
    let d = kernel_decomposition(&r.projection, &r.embedding).map_err(failure)?;
    let closed = partial_trace(&state, &d).map_err(gaussian)?;
    let points = kernel_sample_points(lower.dim(), samples);
    let mut table = quadrature_partial_trace(&state, &d, grid, extent, &points).map_err(gaussian)?;
    for v in &mut table.values {
        *v /= closed.trace_before;
    }
    let err = table.max_relative_error(&closed.state);
    let passed = err <= tol;
    let text = format!(
        "{}: quadrature on {grid} nodes per traced coordinate over [-{extent}, {extent}] ({} traced) agrees to {err:.3e} relative (tol {tol:e})\n",
        if passed { "PASS" } else { "FAIL" },
        d.kernel_dim()
    );
    Ok(Outcome {
        passed,
        text,
        report: json!({
            "command": "oracle", "from": from, "to": to, "grid": grid, "extent": extent,
            "samples": samples, "traced": d.kernel_dim(), "max_relative_error": err,
            "tol": tol, "passed": passed,
        }),
    })
}

fn demo(edges: usize, depth: usize, seed: u64, out: &Path, state_out: Option<&Path>, terms: usize) -> CliResult<Outcome> {
    if edges == 0 {
        return Err(InputError::new("--edges", "need at least one edge").into());
    }
    if depth == 0 {
        return Err(InputError::new("--depth", "need at least one level").into());
    }
    if state_out.is_some() && terms == 0 {
        return Err(InputError::new("--state-terms", "need at least one term").into());
    }
    let seed = match std::env::var("PQK_SEED") {
        Ok(s) => s
            .trim()
            .parse::<u64>()
            .map_err(|_| InputError::new("PQK_SEED", format!("`{s}` is not an unsigned integer")))?,
        Err(_) => seed,
    };
    let sys = generate_random_system(edges, depth, seed).map_err(failure)?;
    write_json(out, &SystemDocument::from_system(&sys))?;
    let top = sys.labels.last().expect("generator emits labels");
    let mut text = format!(
        "system with {} labels and {} relations (seed {seed}), top label {}\n",
        sys.labels.len(),
        sys.order.len(),
        top.id
    );
    let mut state_report = Value::Null;
    if let Some(path) = state_out {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = random_mixture(top.graph.len(), terms, &mut rng);
        write_json(path, &StateDocument::from_state(&top.id, &state))?;
        let p = purity(&state).map_err(gaussian)?;
        let _ = writeln!(text, "state on {} with {terms} terms, purity {p:.6}", top.id);
        state_report = json!({ "label": top.id, "terms": terms, "purity": p });
    }
    Ok(Outcome {
        passed: true,
        text,
        report: json!({
            "command": "dpg-demo", "seed": seed, "edges": edges, "depth": depth,
            "labels": sys.labels.iter().map(|l| l.id.clone()).collect::<Vec<_>>(),
            "relations": sys.order.iter().map(|r| [r.upper.clone(), r.lower.clone()]).collect::<Vec<_>>(),
            "state": state_report, "passed": true,
        }),
    })
}

fn vector(path: &Path) -> CliResult<ApVectorDoc> {
    match read_json::<ApInput>(path)? {
        ApInput::Vector(v) => Ok(v),
        ApInput::Projection(_) => Err(InputError::new(path.display().to_string(), "expected a vector with `frame` and `terms`").into()),
    }
}

fn ap(op: ApOp, inputs: &[PathBuf], upper: Option<&Path>) -> CliResult<Outcome> {
    let at = |path: &Path, e: InputError| InputError::new(format!("{}: {}", path.display(), e.path), e.message);
    let load = |path: &Path| -> CliResult<_> { vector(path)?.to_vector().map_err(|e| at(path, e).into()) };
    let a = load(&inputs[0])?;
    let (text, report) = match op {
        ApOp::Inner => {
            let b = load(&inputs[1])?;
            let z = inner_product(&a, &b).map_err(|e| InputError::new("--in", e))?;
            let [re, im] = amplitude_doc(&z);
            (format!("<a, b> = {re} + {im} i\n"), json!({ "command": "ap", "op": "inner", "value": [re, im] }))
        }
        ApOp::Promote => {
            let proj = match read_json::<ApInput>(&inputs[1])? {
                ApInput::Projection(p) => p.to_projection("").map_err(|e| at(&inputs[1], e))?,
                ApInput::Vector(_) => {
                    return Err(InputError::new(inputs[1].display().to_string(), "expected a projection with `target`, `source` and `matrix`").into())
                }
            };
            let v = promote(&a, &proj).map_err(|e| InputError::new("--in", e))?;
            let doc = ApVectorDoc::from_vector(&v);
            (
                format!("promoted onto {} coordinates with {} terms\n", doc.frame.len(), doc.terms.len()),
                json!({ "command": "ap", "op": "promote", "vector": doc }),
            )
        }
        ApOp::LimitEqual => {
            let b = load(&inputs[1])?;
            let path = upper.ok_or_else(|| InputError::new("--upper", "limit-equal needs projections from a common refinement"))?;
            let up: UpperDoc = read_json(path)?;
            let p1 = up.first.to_projection("first").map_err(|e| at(path, e))?;
            let p2 = up.second.to_projection("second").map_err(|e| at(path, e))?;
            let eq = limit_equal(&a, &b, &p1, &p2).map_err(|e| InputError::new("--upper", e))?;
            (
                format!("{}\n", if eq { "equal in the limit" } else { "different in the limit" }),
                json!({ "command": "ap", "op": "limit-equal", "equal": eq }),
            )
        }
    };
    Ok(Outcome { passed: true, text, report })
}
