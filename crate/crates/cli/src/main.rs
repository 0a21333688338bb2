//! `tqme`: evaluate, sweep and plan two-photon module comparisons.

mod report;

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use tqme::chip::{bundled_pair_table, load_pair_table, ModulePairRecord};
use tqme::choi::{fidelity_chain, phase_family_a, phase_family_column, FidelityReport};
use tqme::hom::pair_distribution_with;
use tqme::io::{load_unitary, save_unitary, LoadOptions};
use tqme::qubit::{
    exact_bunching, gate_fidelity_from_bunching, run_protocol, ConfusionModel, ProtocolOptions,
    MAX_MODULE_QUBITS,
};
use tqme::stats::{
    estimate_fidelity, required_samples_analytic, required_samples_empirical, sample_from_distribution,
};
use tqme::{haar_random_unitary, Beamsplitter, Error, FidelityEstimate, RandomStream, UnitaryMatrix};

use report::{emit, emit_csv, exit_code, json_text, num, Csv, Provenance};

type Result<T> = std::result::Result<T, Error>;

#[derive(Parser)]
#[command(name = "tqme", version, about = "Compare unitary modules through two-photon interference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fidelity of one W/V pair, exact or sampled.
    Evaluate(EvaluateArgs),
    /// Fidelity along a one-parameter family of V.
    Sweep(SweepArgs),
    /// Fidelities of the 21-pair module table.
    Table(TableArgs),
    /// Number of events needed for a target precision.
    Plan(PlanArgs),
    /// The qubit SWAP-test version of the protocol.
    Qubit(QubitArgs),
    /// Write Haar-random unitaries.
    Gen(GenArgs),
}

#[derive(Args, Clone)]
struct LoadArgs {
    /// Unitarity tolerance for input matrices.
    #[arg(long, default_value_t = 1e-6)]
    unitary_tol: f64,
    /// Replace inputs by their nearest unitaries instead of rejecting them.
    #[arg(long)]
    project_unitary: bool,
}

impl LoadArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions {
            tol: self.unitary_tol,
            project: self.project_unitary,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    /// Closed-form result (the default when --shots is absent).
    #[arg(long, conflicts_with = "shots")]
    exact: bool,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    conf: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Convention {
    Symmetric,
    Real,
}

impl From<Convention> for Beamsplitter {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Symmetric => Beamsplitter::Symmetric,
            Convention::Real => Beamsplitter::Real,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    w: PathBuf,
    #[arg(long)]
    v: PathBuf,
    #[command(flatten)]
    sample: SampleArgs,
    /// Beamsplitter phase convention for the sampled pipeline.
    #[arg(long, value_enum, default_value_t = Convention::Symmetric)]
    convention: Convention,
    #[command(flatten)]
    load: LoadArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    /// V(θ) = (1/√2)[[1, −e^{iθ}], [1, e^{iθ}]] against W = Hadamard.
    A,
    /// V(θ) = W with one column multiplied by e^{iθ}.
    Column,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Reference module; required for `column`, defaults to Hadamard for `a`.
    #[arg(long)]
    w: Option<PathBuf>,
    /// Column receiving the phase in the `column` family.
    #[arg(long, default_value_t = 0)]
    column: usize,
    /// Grid θ_k = 2πk/K for k = 0..=K.
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    conf: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    load: LoadArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    /// Pair table; defaults to $TQME_DATA_DIR/pairs21.json, then the built-in copy.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    conf: f64,
    #[arg(long)]
    project_unitary: bool,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// Expected bunching probability.
    #[arg(long, required_unless_present = "grid")]
    p: Option<f64>,
    /// Module dimension; 0 means d → ∞.
    #[arg(long, default_value_t = 0)]
    d: usize,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value_t = 0.95)]
    conf: f64,
    /// Search by simulated coverage instead of the normal approximation.
    #[arg(long)]
    empirical: bool,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tabulate over --ps × --ds.
    #[arg(long, conflicts_with = "p")]
    grid: bool,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.85,0.9,0.925,0.95,0.975,0.99")]
    ps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64,128,256,512,1024,0")]
    ds: Vec<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QubitArgs {
    /// Qubits per module.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    w: PathBuf,
    #[arg(long)]
    v: PathBuf,
    #[command(flatten)]
    sample: SampleArgs,
    /// Readout flip probabilities `p01,p10`, applied to every qubit.
    #[arg(long, value_delimiter = ',')]
    readout: Option<Vec<f64>>,
    #[arg(long)]
    mitigate: bool,
    /// Include the measured bit-string histogram.
    #[arg(long)]
    histogram: bool,
    #[command(flatten)]
    load: LoadArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; with --pair, `{stem}_w.json` and `{stem}_v.json` are written beside it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    pair: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Table(a) => table(a),
        Command::Plan(a) => plan(a),
        Command::Qubit(a) => qubit(a),
        Command::Gen(a) => gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tqme: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn check_shots(shots: Option<u64>) -> Result<()> {
    if shots == Some(0) {
        return Err(Error::Validation("--shots must be positive".into()));
    }
    Ok(())
}

fn load_pair(w: &Path, v: &Path, opts: LoadOptions) -> Result<(UnitaryMatrix, UnitaryMatrix)> {
    let w = load_unitary(w, opts)?;
    let v = load_unitary(v, opts)?;
    if w.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            left: w.dim(),
            right: v.dim(),
        });
    }
    Ok((w, v))
}

/// Event-level estimate: Choi encoding, beamsplitter network, detector sampling.
fn sample_pair(
    w: &UnitaryMatrix,
    v: &UnitaryMatrix,
    shots: u64,
    conf: f64,
    bs: Beamsplitter,
    rng: &mut RandomStream,
) -> Result<FidelityEstimate> {
    let dist = pair_distribution_with(w, v, bs)?;
    let tally = sample_from_distribution(&dist, shots, rng)?;
    let mut est = estimate_fidelity(&tally, w.dim(), conf)?;
    est.seed = Some(rng.seed());
    Ok(est)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    check_shots(a.sample.shots)?;
    let (w, v) = load_pair(&a.w, &a.v, a.load.options())?;
    let exact = fidelity_chain(&w, &v)?;
    let prov = Provenance {
        command: "evaluate",
        seed: a.sample.seed,
        shots: a.sample.shots,
    };
    let mut body = match a.sample.shots {
        None => serde_json::to_value(&exact).expect("plain data"),
        Some(shots) => {
            let mut rng = RandomStream::new(a.sample.seed).fork("evaluate");
            let est = sample_pair(&w, &v, shots, a.sample.conf, a.convention.into(), &mut rng)?;
            let mut body = serde_json::to_value(&est).expect("plain data");
            body["convention"] = json!(a.convention.to_possible_value().expect("not skipped").get_name());
            body["exact"] = serde_json::to_value(&exact).expect("plain data");
            body
        }
    };
    body["mode"] = json!(if a.sample.shots.is_some() { "sampled" } else { "exact" });
    let report = prov.stamp(body);
    emit(&json_text(&report), a.out.as_deref())
}

#[derive(Serialize)]
struct SweepRow {
    theta: f64,
    p_exact: f64,
    p_antibunch_exact: f64,
    f_gate_exact: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampled: Option<FidelityEstimate>,
}

fn sweep(a: SweepArgs) -> Result<()> {
    check_shots(a.shots)?;
    if a.steps == 0 {
        return Err(Error::Validation("--steps must be positive".into()));
    }
    let w = match (&a.w, a.family) {
        (Some(p), _) => load_unitary(p, a.load.options())?,
        (None, Family::A) => UnitaryMatrix::hadamard(),
        (None, Family::Column) => {
            return Err(Error::Validation("--family column needs --w".into()));
        }
    };
    if a.family == Family::A && w.dim() != 2 {
        return Err(Error::DimensionMismatch { left: w.dim(), right: 2 });
    }
    if a.family == Family::Column && a.column >= w.dim() {
        return Err(Error::Validation(format!("--column {} outside 0..{}", a.column, w.dim())));
    }
    let root = RandomStream::new(a.seed).fork("sweep");
    let rows: Vec<SweepRow> = (0..=a.steps)
        .into_par_iter()
        .map(|k| -> Result<SweepRow> {
            let theta = TAU * k as f64 / a.steps as f64;
            let v = match a.family {
                Family::A => phase_family_a(theta),
                Family::Column => phase_family_column(&w, theta, a.column)?,
            };
            let exact = fidelity_chain(&w, &v)?;
            let sampled = match a.shots {
                Some(n) => Some(sample_pair(&w, &v, n, a.conf, Beamsplitter::default(), &mut root.split(k as u64))?),
                None => None,
            };
            Ok(SweepRow {
                theta,
                p_exact: exact.p_bunch,
                p_antibunch_exact: 1.0 - exact.p_bunch,
                f_gate_exact: exact.f_gate,
                sampled,
            })
        })
        .collect::<Result<_>>()?;
    let prov = Provenance {
        command: "sweep",
        seed: a.seed,
        shots: a.shots,
    };
    match a.format {
        Format::Json => emit(&json_text(&prov.stamp(json!({ "rows": rows }))), a.out.as_deref()),
        Format::Csv => {
            let mut header = vec!["theta", "p_exact", "p_antibunch_exact", "f_gate_exact"];
            if a.shots.is_some() {
                header.extend(["p_hat", "f_gate_hat", "ci_low", "ci_high"]);
            }
            let mut csv = Csv::new(&header);
            for r in &rows {
                let mut f = vec![num(r.theta), num(r.p_exact), num(r.p_antibunch_exact), num(r.f_gate_exact)];
                if let Some(s) = &r.sampled {
                    f.extend([num(s.p_hat), num(s.f_gate_hat), num(s.ci_low), num(s.ci_high)]);
                }
                csv.row(&f);
            }
            emit_csv(&csv.finish(), a.out.as_deref(), &prov)
        }
    }
}

#[derive(Serialize)]
struct TableRow {
    index: usize,
    f_choi_exact: f64,
    f_gate_exact: f64,
    p_bunch_exact: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampled: Option<FidelityEstimate>,
}

fn table_source(a: &TableArgs) -> Result<(String, Vec<ModulePairRecord>)> {
    if let Some(p) = &a.data {
        return Ok((p.display().to_string(), load_pair_table(p, a.project_unitary)?));
    }
    if let Some(dir) = std::env::var_os("TQME_DATA_DIR") {
        let p = Path::new(&dir).join("pairs21.json");
        return Ok((p.display().to_string(), load_pair_table(&p, a.project_unitary)?));
    }
    Ok(("builtin".into(), bundled_pair_table(a.project_unitary)?))
}

fn min_max(xs: impl Iterator<Item = f64>) -> [f64; 2] {
    xs.fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], x| [lo.min(x), hi.max(x)])
}

fn table(a: TableArgs) -> Result<()> {
    check_shots(a.shots)?;
    let (source, records) = table_source(&a)?;
    let root = RandomStream::new(a.seed).fork("table");
    let rows: Vec<TableRow> = records
        .par_iter()
        .map(|r| -> Result<TableRow> {
            let exact: FidelityReport = fidelity_chain(&r.w, &r.v)?;
            let sampled = match a.shots {
                Some(n) => Some(sample_pair(&r.w, &r.v, n, a.conf, Beamsplitter::default(), &mut root.split(r.index as u64))?),
                None => None,
            };
            Ok(TableRow {
                index: r.index,
                f_choi_exact: exact.f_choi,
                f_gate_exact: exact.f_gate,
                p_bunch_exact: exact.p_bunch,
                sampled,
            })
        })
        .collect::<Result<_>>()?;
    let [f_choi_min, f_choi_max] = min_max(rows.iter().map(|r| r.f_choi_exact));
    let [f_gate_min, f_gate_max] = min_max(rows.iter().map(|r| r.f_gate_exact));
    let prov = Provenance {
        command: "table",
        seed: a.seed,
        shots: a.shots,
    };
    match a.format {
        Format::Json => {
            let body = json!({
                "source": source,
                "rows": rows,
                "summary": {
                    "count": rows.len(),
                    "f_choi_min": f_choi_min,
                    "f_choi_max": f_choi_max,
                    "f_gate_min": f_gate_min,
                    "f_gate_max": f_gate_max,
                },
            });
            emit(&json_text(&prov.stamp(body)), a.out.as_deref())
        }
        Format::Csv => {
            let mut header = vec!["index", "f_choi_exact", "f_gate_exact", "p_bunch_exact"];
            if a.shots.is_some() {
                header.extend(["p_hat", "f_gate_hat", "ci_low", "ci_high"]);
            }
            let mut csv = Csv::new(&header);
            for r in &rows {
                let mut f = vec![r.index.to_string(), num(r.f_choi_exact), num(r.f_gate_exact), num(r.p_bunch_exact)];
                if let Some(s) = &r.sampled {
                    f.extend([num(s.p_hat), num(s.f_gate_hat), num(s.ci_low), num(s.ci_high)]);
                }
                csv.row(&f);
            }
            emit_csv(&csv.finish(), a.out.as_deref(), &prov)
        }
    }
}

fn plan(a: PlanArgs) -> Result<()> {
    let prov = Provenance {
        command: "plan",
        seed: a.seed,
        shots: None,
    };
    let root = RandomStream::new(a.seed).fork("plan");
    let one = |p: f64, d: usize, cell: u64| {
        if a.empirical {
            required_samples_empirical(p, d, a.eps, a.conf, a.trials, &root.split(cell))
        } else {
            required_samples_analytic(p, d, a.eps, a.conf)
        }
    };
    if !a.grid {
        let p = a.p.expect("clap requires --p without --grid");
        let plan = one(p, a.d, 0)?;
        let mut body = serde_json::to_value(&plan).unwrap();
        if a.empirical {
            let obj = body.as_object_mut().unwrap();
            obj.insert("trials".into(), a.trials.into());
            obj.insert(
                "n_analytic".into(),
                required_samples_analytic(p, a.d, a.eps, a.conf)?.n_required.into(),
            );
        }
        return match a.format.unwrap_or(Format::Json) {
            Format::Json => emit(&json_text(&prov.stamp(body)), a.out.as_deref()),
            Format::Csv => {
                let mut csv = Csv::new(&["P", "d", "n_required"]);
                csv.row(&[num(p), a.d.to_string(), plan.n_required.to_string()]);
                emit_csv(&csv.finish(), a.out.as_deref(), &prov)
            }
        };
    }
    let cells: Vec<(f64, usize)> = a.ps.iter().flat_map(|&p| a.ds.iter().map(move |&d| (p, d))).collect();
    let plans = cells
        .iter()
        .enumerate()
        .map(|(i, &(p, d))| one(p, d, i as u64))
        .collect::<Result<Vec<_>>>()?;
    match a.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut csv = Csv::new(&["P", "d", "n_required"]);
            for pl in &plans {
                csv.row(&[num(pl.p), pl.d.to_string(), pl.n_required.to_string()]);
            }
            emit_csv(&csv.finish(), a.out.as_deref(), &prov)
        }
        Format::Json => emit(&json_text(&prov.stamp(json!({ "plans": plans }))), a.out.as_deref()),
    }
}

fn qubit(a: QubitArgs) -> Result<()> {
    check_shots(a.sample.shots)?;
    if a.n == 0 {
        return Err(Error::Validation("--n must be at least 1".into()));
    }
    if a.n > MAX_MODULE_QUBITS {
        return Err(Error::ResourceGuard(format!(
            "--n {} exceeds the {MAX_MODULE_QUBITS}-qubit module limit",
            a.n
        )));
    }
    let (w, v) = load_pair(&a.w, &a.v, a.load.options())?;
    let d = 1usize << a.n;
    if w.dim() != d {
        return Err(Error::DimensionMismatch { left: w.dim(), right: d });
    }
    if a.mitigate && a.readout.is_none() {
        return Err(Error::Validation("--mitigate needs --readout".into()));
    }
    let noise = match a.readout.as_deref() {
        Some(&[p01, p10]) => Some(ConfusionModel::uniform(4 * a.n, p01, p10)?),
        Some(_) => return Err(Error::Validation("--readout takes exactly two values: p01,p10".into())),
        None => None,
    };
    let prov = Provenance {
        command: "qubit",
        seed: a.sample.seed,
        shots: a.sample.shots,
    };
    let body = match a.sample.shots {
        None => {
            if noise.is_some() {
                return Err(Error::Validation("--readout applies to sampled runs only".into()));
            }
            let p = exact_bunching(a.n, &w, &v)?;
            json!({
                "mode": "exact",
                "n": a.n,
                "d": d,
                "P": p,
                "f_choi": 2.0 * p - 1.0,
                "F": gate_fidelity_from_bunching(p, a.n),
            })
        }
        Some(shots) => {
            let opts = ProtocolOptions {
                shots,
                confidence: a.sample.conf,
                noise: noise.as_ref(),
                mitigate: a.mitigate,
            };
            let mut rng = RandomStream::new(a.sample.seed).fork("qubit");
            let run = run_protocol(a.n, &w, &v, &opts, &mut rng)?;
            let mut body = json!({
                "mode": "sampled",
                "n": a.n,
                "d": d,
                "P": run.estimate.p_hat,
                "P_raw": run.p_raw,
                "f_choi": run.f_choi_hat(),
                "F": run.estimate.f_gate_hat,
                "estimate": run.estimate,
                "readout": a.readout,
                "mitigated": a.mitigate,
            });
            if a.histogram {
                let obj = body.as_object_mut().unwrap();
                obj.insert("counts".into(), json!(run.counts.to_bitstring_map()));
                if let Some(u) = &run.unfolded {
                    obj.insert("unfolded".into(), json!(u.to_bitstring_map()));
                }
            }
            body
        }
    };
    emit(&json_text(&prov.stamp(body)), a.out.as_deref())
}

fn pair_paths(out: &Path) -> (PathBuf, PathBuf) {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map_or("json".into(), |e| e.to_string_lossy().into_owned());
    let dir = out.parent().unwrap_or(Path::new(""));
    (dir.join(format!("{stem}_w.{ext}")), dir.join(format!("{stem}_v.{ext}")))
}

fn gen(a: GenArgs) -> Result<()> {
    if a.d == 0 {
        return Err(Error::Validation("--d must be at least 1".into()));
    }
    let root = RandomStream::new(a.seed).fork("gen");
    if a.pair {
        let (pw, pv) = pair_paths(&a.out);
        save_unitary(&pw, &haar_random_unitary(a.d, &mut root.fork("w"))?)?;
        save_unitary(&pv, &haar_random_unitary(a.d, &mut root.fork("v"))?)?;
        println!("{}\n{}", pw.display(), pv.display());
    } else {
        save_unitary(&a.out, &haar_random_unitary(a.d, &mut root.clone())?)?;
        println!("{}", a.out.display());
    }
    Ok(())
}
