//! Command-line front end. Every subcommand resolves an [`ExperimentConfig`]
//! (file first, then flags), writes its data to `--out` (or stdout) and prints
//! a one-line summary.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::annealed::{
    annealed_nonexit_is, annealed_nonexit_mc, annealed_nonexit_quadrature, check_quadrature_domain,
    tauberian_check, write_estimates_csv, AnnealedEstimate,
};
use super::config::{DomainSpec, ExperimentConfig};
use super::girsanov::girsanov_normalization;
use super::ldp::ldp_point_check;
use crate::error::{Error, Result};
use crate::field::{sample_field, ConductanceField, FieldDoc};
use crate::rates::{k_const, ProbabilityProfile};
use crate::spectral::{eigen_tail, TailMethod};
use crate::variational::{brute_force_l, solve_l};
use crate::walk::{local_times, simulate};

pub const VERSION: &str = match option_env!("RWRC_GIT_VERSION") {
    Some(v) => v,
    None => concat!("v", env!("CARGO_PKG_VERSION")),
};

#[derive(Parser, Debug)]
#[command(name = "rwrc", version, about = "Random walks among random conductances on finite lattice domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON config file; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; a `<stem>.summary.json` is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Domain shorthand, e.g. `box1d:2` or `sites1d:0,1`.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long = "D")]
    dcoef: Option<f64>,
    /// Times, comma separated.
    #[arg(long = "t", value_delimiter = ',')]
    times: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw one environment on the domain.
    SampleField {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate one walk path up to the first configured time.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Field document from `sample-field`; sampled from the law if absent.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Compute the variational constant L_η(B) and its minimizers.
    SolveVariational {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        restarts: Option<usize>,
        /// Also run the grid search with this many points per angle.
        #[arg(long)]
        brute_force_grid: Option<usize>,
    },
    /// Annealed non-exit probability at each time.
    Nonexit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: NonexitMethod,
        #[arg(long = "cap-M")]
        cap_m: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
    },
    /// Lower tail of the principal Dirichlet eigenvalue.
    EigenTail {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "quadrature")]
        method: TailMethodArg,
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Laplace-transform asymptotics of a single conductance.
    Tauberian {
        #[command(flatten)]
        common: Common,
        /// Multipliers M, comma separated.
        #[arg(long = "M", value_delimiter = ',')]
        masses: Option<Vec<f64>>,
    },
    /// Annealed probability of local times near g² without exit.
    LdpCheck {
        #[command(flatten)]
        common: Common,
        /// Profile g (normalised on read); the variational minimizer if absent.
        #[arg(long, value_delimiter = ',')]
        profile: Option<Vec<f64>>,
        #[arg(long = "delta", value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        #[arg(long)]
        paths_per_field: Option<usize>,
    },
    /// Normalisation and cocycle identities of the path density.
    GirsanovTest {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum NonexitMethod {
    Quadrature,
    Mc,
    Is,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum TailMethodArg {
    Quadrature,
    Mc,
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &common.domain {
        cfg.domain = DomainSpec::parse_shorthand(d)?;
    }
    if let Some(eta) = common.eta {
        cfg.law.eta = eta;
    }
    if let Some(d) = common.dcoef {
        cfg.law.dcoef = d;
    }
    if let Some(t) = &common.times {
        cfg.times = t.clone();
    }
    if let Some(n) = common.trials {
        cfg.trials = n;
    }
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    Ok(cfg)
}

/// What a subcommand produced: the data file body and a summary.
struct Outcome {
    data: Vec<u8>,
    summary: Value,
    line: String,
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn csv<F: FnOnce(&mut Vec<u8>) -> io::Result<()>>(f: F) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serialisable");
    s.push(b'\n');
    s
}

fn first_time(cfg: &ExperimentConfig) -> Result<f64> {
    cfg.times.first().copied().ok_or_else(|| Error::Config("no time given".into()))
}

fn sample_field_cmd(cfg: &ExperimentConfig) -> Result<Outcome> {
    let law = cfg.law()?;
    let dom = cfg.domain.build()?;
    let seed = cfg.seed.unwrap_or(0);
    let f = sample_field(&law, &dom, &mut ChaCha8Rng::seed_from_u64(seed));
    let min = f.min_weight();
    Ok(Outcome {
        data: json_bytes(&f.to_doc()),
        summary: json!({ "edges": f.weights().len(), "min_weight": min, "seed": seed }),
        line: format!("sampled {} edges, min weight {min:.6e}", f.weights().len()),
    })
}

fn simulate_cmd(cfg: &ExperimentConfig, field: Option<&Path>) -> Result<Outcome> {
    let t = first_time(cfg)?;
    let seed = cfg.seed.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = match field {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let doc: FieldDoc = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            ConductanceField::from_doc(&doc)?
        }
        None => sample_field(&cfg.law()?, &cfg.domain.build()?, &mut rng),
    };
    let path = simulate(&f, t, &mut rng);
    let lt = local_times(&path, f.domain().len());
    let data = csv(|b| path.write_csv(&f, b));
    let exit = path.exit.as_ref().map(|e| json!({ "time": e.time, "point": e.point }));
    Ok(Outcome {
        data,
        summary: json!({
            "t": t,
            "jumps": path.num_jumps(),
            "exit": exit,
            "local_times": lt.occupation,
            "seed": seed,
        }),
        line: match &path.exit {
            Some(e) => format!("{} jumps, exited at t = {:.6} through {:?}", path.num_jumps(), e.time, e.point),
            None => format!("{} jumps, stayed in B up to t = {t}", path.num_jumps()),
        },
    })
}

fn solve_variational_cmd(cfg: &ExperimentConfig, brute_grid: Option<usize>) -> Result<Outcome> {
    let law = cfg.law()?;
    let dom = cfg.domain.build()?;
    let res = solve_l(&dom, law.eta(), &cfg.solver)?;
    let mut doc = serde_json::to_value(res.to_doc(law.eta())).expect("serialisable");
    let k = k_const(&law);
    doc["K"] = json!(k);
    doc["nonexit_limit"] = json!(-k * res.value);
    let mut line = format!("L = {:.12} ({} minimizer(s))", res.value, res.minimizers.len());
    if let Some(grid) = brute_grid {
        let bf = brute_force_l(&dom, law.eta(), grid)?;
        doc["brute_force"] = json!({ "value": bf.value, "minimizer": bf.minimizer.values() });
        line.push_str(&format!(", grid search {:.12}", bf.value));
    }
    Ok(Outcome { data: json_bytes(&doc), summary: json!({ "L": res.value, "K": k }), line })
}

fn nonexit_cmd(cfg: &ExperimentConfig, method: NonexitMethod) -> Result<Outcome> {
    let law = cfg.law()?;
    let rows: Vec<AnnealedEstimate> = match method {
        NonexitMethod::Quadrature => {
            check_quadrature_domain(&*cfg.domain.build()?)?;
            cfg.times.iter().map(|&t| annealed_nonexit_quadrature(&law, t)).collect::<Result<_>>()?
        }
        NonexitMethod::Mc => {
            let seed = cfg.require_seed()?;
            let dom = cfg.domain.build()?;
            cfg.times
                .iter()
                .map(|&t| annealed_nonexit_mc(&law, &dom, t, cfg.trials, seed))
                .collect::<Result<_>>()?
        }
        NonexitMethod::Is => annealed_nonexit_is(cfg)?,
    };
    let line = rows
        .iter()
        .map(|r| format!("t = {}: estimate {:.6e}, rescaled {:.6}", r.t, r.estimate, r.rescaled))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome {
        data: csv(|b| write_estimates_csv(&rows, b)),
        summary: json!({ "rows": rows }),
        line,
    })
}

fn eigen_tail_cmd(cfg: &ExperimentConfig, method: TailMethodArg) -> Result<Outcome> {
    let law = cfg.law()?;
    let dom = cfg.domain.build()?;
    let eps = if cfg.eps.is_empty() { vec![1.0, 0.1, 0.01] } else { cfg.eps.clone() };
    let method = match method {
        TailMethodArg::Quadrature => TailMethod::Quadrature,
        TailMethodArg::Mc => {
            cfg.require_seed()?;
            TailMethod::MonteCarlo { n: cfg.trials }
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(0));
    let points = eigen_tail(&law, &dom, &eps, method, &mut rng)?;
    let data = csv(|b| {
        writeln!(b, "eps,prob,log_prob,scaled_log_prob")?;
        for p in &points {
            writeln!(b, "{},{:e},{},{}", p.eps, p.prob, p.log_prob, p.scaled_log_prob)?;
        }
        Ok(())
    });
    let last = points.last().expect("at least one level");
    Ok(Outcome {
        data,
        summary: json!({ "points": points }),
        line: format!("eps = {}: eps^eta log P = {:.6}", last.eps, last.scaled_log_prob),
    })
}

fn tauberian_cmd(cfg: &ExperimentConfig) -> Result<Outcome> {
    let law = cfg.law()?;
    let masses = if cfg.masses.is_empty() { vec![1.0, 4.0] } else { cfg.masses.clone() };
    let mut rows = Vec::new();
    for &m in &masses {
        rows.extend(tauberian_check(&law, m, &cfg.times)?);
    }
    let data = csv(|b| {
        writeln!(b, "M,t,value,target")?;
        for r in &rows {
            writeln!(b, "{},{},{},{}", r.m, r.t, r.value, r.target)?;
        }
        Ok(())
    });
    let line = rows
        .iter()
        .map(|r| format!("M = {}, t = {}: {:.6} (limit {:.6})", r.m, r.t, r.value, r.target))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome { data, summary: json!({ "rows": rows }), line })
}

fn ldp_check_cmd(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dom = cfg.domain.build()?;
    let g = match &cfg.profile {
        Some(v) => ProbabilityProfile::normalized(dom, v)?,
        None => solve_l(&dom, cfg.law.eta, &cfg.solver)?.minimizer,
    };
    let report = ldp_point_check(cfg, &g)?;
    let data = csv(|b| report.write_csv(b));
    let held = report.rows.iter().filter(|r| r.above_lower_bound).count();
    let line = format!(
        "-J(g^2) = {:.6}; lower bound within slack on {held}/{} rows",
        -report.j,
        report.rows.len()
    );
    Ok(Outcome { data, summary: serde_json::to_value(&report).expect("serialisable"), line })
}

fn girsanov_cmd(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dom = cfg.domain.build()?;
    let t = first_time(cfg)?;
    let seed = cfg.seed.unwrap_or(0);
    let r = girsanov_normalization(&dom, t, cfg.trials, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok(Outcome {
        data: json_bytes(&r),
        summary: json!({ "z": r.z, "seed": seed }),
        line: format!(
            "mean density {:.6} ± {:.2e} ({:.2} SE from 1); cocycle {:.1e}, antisymmetry {:.1e}",
            r.mean.value, r.mean.se, r.z, r.cocycle_defect, r.antisymmetry_defect
        ),
    })
}

fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

fn emit(name: &str, cfg: &ExperimentConfig, outcome: Outcome, started: Instant) -> Result<()> {
    match &cfg.out {
        Some(out) => {
            let mut w = BufWriter::new(File::create(out).map_err(|e| io_err(out, e))?);
            w.write_all(&outcome.data).and_then(|_| w.flush()).map_err(|e| io_err(out, e))?;
            let summary = json!({
                "command": name,
                "version": VERSION,
                "config": cfg,
                "wall_clock_seconds": started.elapsed().as_secs_f64(),
                "result": outcome.summary,
            });
            let spath = summary_path(out);
            std::fs::write(&spath, json_bytes(&summary)).map_err(|e| io_err(&spath, e))?;
            println!("{name}: {}", outcome.line);
        }
        None => {
            io::stdout().write_all(&outcome.data).map_err(|e| Error::Io(e.to_string()))?;
            eprintln!("{name}: {}", outcome.line);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    let (name, common) = match &cli.command {
        Command::SampleField { common } => ("sample-field", common),
        Command::Simulate { common, .. } => ("simulate", common),
        Command::SolveVariational { common, .. } => ("solve-variational", common),
        Command::Nonexit { common, .. } => ("nonexit", common),
        Command::EigenTail { common, .. } => ("eigen-tail", common),
        Command::Tauberian { common, .. } => ("tauberian", common),
        Command::LdpCheck { common, .. } => ("ldp-check", common),
        Command::GirsanovTest { common } => ("girsanov-test", common),
    };
    let mut cfg = resolve(common)?;
    match &cli.command {
        Command::SolveVariational { restarts: Some(n), .. } => cfg.solver.restarts = *n,
        Command::Nonexit { cap_m, r, .. } => {
            if let Some(m) = cap_m {
                cfg.is.cap_m = *m;
            }
            if r.is_some() {
                cfg.is.r = *r;
            }
        }
        Command::EigenTail { eps: Some(e), .. } => cfg.eps = e.clone(),
        Command::Tauberian { masses: Some(m), .. } => cfg.masses = m.clone(),
        Command::LdpCheck { profile, deltas, paths_per_field, .. } => {
            if profile.is_some() {
                cfg.profile = profile.clone();
            }
            if let Some(d) = deltas {
                cfg.deltas = d.clone();
            }
            if let Some(n) = paths_per_field {
                cfg.paths_per_field = *n;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    let work = || match &cli.command {
        Command::SampleField { .. } => sample_field_cmd(&cfg),
        Command::Simulate { field, .. } => simulate_cmd(&cfg, field.as_deref()),
        Command::SolveVariational { brute_force_grid, .. } => solve_variational_cmd(&cfg, *brute_force_grid),
        Command::Nonexit { method, .. } => nonexit_cmd(&cfg, *method),
        Command::EigenTail { method, .. } => eigen_tail_cmd(&cfg, *method),
        Command::Tauberian { .. } => tauberian_cmd(&cfg),
        Command::LdpCheck { .. } => ldp_check_cmd(&cfg),
        Command::GirsanovTest { .. } => girsanov_cmd(&cfg),
    };
    let outcome = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    emit(name, &cfg, outcome, started)
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code: 0 on success, 1 on invalid input, 2 on numerical failure.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}
