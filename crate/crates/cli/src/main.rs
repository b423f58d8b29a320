mod config;
mod failure;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use yearslost::eif::gateaux_fd_check;
use yearslost::estimators::{estimate_ate, estimate_vim, rank_covariates, VimReport};
use yearslost::learners::Flavor;
use yearslost::simlab::{run_monte_carlo, sample_dgp, true_values_oracle_for};
use yearslost::survdata::{load_dataset, write_dataset, SurvivalDataset};

use config::{FileConfig, Overrides};
use failure::Failure;

#[derive(Parser)]
#[command(
    name = "yearslost",
    version,
    about = "Treatment effects on cause-specific years of life lost"
)]
struct Cli {
    /// Worker threads for estimation and simulation.
    #[arg(long, global = true, env = "YEARSLOST_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Master seed for all randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Horizon t*.
    #[arg(long)]
    tstar: Option<f64>,
    /// Cause of interest (1 or 2).
    #[arg(long)]
    j: Option<u8>,
}

#[derive(Args)]
struct Estimation {
    /// CSV with time, event, treatment and covariate columns.
    #[arg(long)]
    data: PathBuf,
    /// Number of cross-fitting folds.
    #[arg(long = "k", short = 'K')]
    k: Option<usize>,
    /// Learner flavor: cor or rf.
    #[arg(long)]
    flavor: Option<Flavor>,
    /// Positivity floor.
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-fitted average treatment effect.
    Ate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        est: Estimation,
    },
    /// Variable importance of one covariate (1-based).
    Vim {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        est: Estimation,
        #[arg(long)]
        l: usize,
    },
    /// Variable importance of every covariate, ordered by p-value.
    Rank {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        est: Estimation,
    },
    /// Monte Carlo study, or a single simulated dataset with --dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Draw one dataset of this size instead of running the study.
        #[arg(long)]
        dataset: Option<usize>,
    },
    /// Exact true values of the simulation design.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo draws over covariates.
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Finite-difference check of the influence function at one row (1-based).
    FdCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        row: usize,
        #[arg(long)]
        epsilon: Option<f64>,
    },
}

/// Output envelope carrying provenance next to the result.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config: &'a FileConfig,
    result: T,
}

struct Output {
    body: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let f = Failure::usage(e.to_string().trim_end());
            eprintln!("{}", f.to_json());
            return ExitCode::from(f.code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::compute(e.to_string()))?;
    }
    match cli.command {
        Command::Ate { common, est } => {
            let (cfg, seed, data) = prepare(&common, &est)?;
            let report = estimate_ate(&data, &cfg.estimator)?;
            let out = match format(&common, Format::Json) {
                Format::Json => json("ate", seed, &cfg, &report)?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record([
                        "estimand", "cause", "tstar", "point", "se", "ci_lower", "ci_upper",
                        "level", "n",
                    ])
                    .map_err(csv_failure)?;
                    w.write_record([
                        "ATE".to_string(),
                        report.cause.code().to_string(),
                        report.tstar.to_string(),
                        report.point.to_string(),
                        report.se.to_string(),
                        report.ci_lower.to_string(),
                        report.ci_upper.to_string(),
                        report.level.to_string(),
                        report.if_values.len().to_string(),
                    ])
                    .map_err(csv_failure)?;
                    csv_output("ate", seed, &cfg, w)?
                }
            };
            emit(&common, out)
        }
        Command::Vim { common, est, l } => {
            let (cfg, seed, data) = prepare(&common, &est)?;
            let idx = covariate_index(l, &data)?;
            let report = estimate_vim(&data, &cfg.estimator, idx)?;
            let out = match format(&common, Format::Json) {
                Format::Json => json("vim", seed, &cfg, &report)?,
                Format::Csv => {
                    csv_output("vim", seed, &cfg, vim_table(std::slice::from_ref(&report))?)?
                }
            };
            emit(&common, out)
        }
        Command::Rank { common, est } => {
            let (cfg, seed, data) = prepare(&common, &est)?;
            let table = rank_covariates(&data, &cfg.estimator)?;
            for r in table
                .iter()
                .filter_map(|r| r.error.as_ref().map(|e| (r, e)))
            {
                eprintln!("warning: covariate {}: {}", r.0.covariate, r.1);
            }
            let out = match format(&common, Format::Csv) {
                Format::Json => json("rank", seed, &cfg, &table)?,
                Format::Csv => csv_output("rank", seed, &cfg, vim_table(&table)?)?,
            };
            emit(&common, out)
        }
        Command::Simulate { common, dataset } => {
            let (cfg, seed) = resolve(&common, None)?;
            if let Some(n) = dataset {
                let data = sample_dgp(&cfg.sim, n, seed)?;
                let mut buf = Vec::new();
                write_dataset(&mut buf, &data)?;
                let body = format!(
                    "{}{}",
                    provenance("simulate", seed, &cfg)?,
                    String::from_utf8_lossy(&buf)
                );
                return emit(&common, Output { body });
            }
            let mc = cfg.monte_carlo()?;
            let summary = run_monte_carlo(&mc)?;
            let out = match format(&common, Format::Json) {
                Format::Json => json("simulate", seed, &cfg, &summary)?,
                Format::Csv => Output {
                    body: format!(
                        "{}{}",
                        provenance("simulate", seed, &cfg)?,
                        summary.to_csv()?
                    ),
                },
            };
            emit(&common, out)
        }
        Command::Oracle { common, draws } => {
            let (mut cfg, seed) = resolve(&common, None)?;
            if let Some(d) = draws {
                cfg.oracle.draws = d;
            }
            if cfg.oracle.draws < 2 {
                return Err(Failure::usage("oracle needs at least 2 draws"));
            }
            let tstar = cfg.estimator.tstar;
            let v = true_values_oracle_for(
                &cfg.sim,
                cfg.oracle.vim_cause,
                tstar,
                cfg.oracle.draws,
                seed,
            )?;
            let out = match format(&common, Format::Json) {
                Format::Json => json("oracle", seed, &cfg, &v)?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["quantity", "value", "mc_se"])
                        .map_err(csv_failure)?;
                    let mut rows = vec![
                        ("psi1".to_string(), v.psi[0], v.psi_se[0]),
                        ("psi2".to_string(), v.psi[1], v.psi_se[1]),
                        ("chi".to_string(), v.chi, 0.0),
                    ];
                    for (l, (&o, &s)) in v.omega.iter().zip(&v.omega_se).enumerate() {
                        rows.push((format!("omega{}", l + 1), o, s));
                    }
                    for (name, value, se) in rows {
                        w.write_record([name, value.to_string(), se.to_string()])
                            .map_err(csv_failure)?;
                    }
                    csv_output("oracle", seed, &cfg, w)?
                }
            };
            emit(&common, out)
        }
        Command::FdCheck {
            common,
            data,
            row,
            epsilon,
        } => {
            let (mut cfg, seed) = resolve(&common, None)?;
            if let Some(e) = epsilon {
                cfg.fd_check.epsilon = e;
            }
            let data = read_data(&data, &cfg)?;
            if row == 0 || row > data.n() {
                return Err(Failure::usage(format!(
                    "--row must lie in 1..={}",
                    data.n()
                )));
            }
            let check = gateaux_fd_check(
                &data,
                row - 1,
                cfg.fd_check.epsilon,
                cfg.estimator.cause,
                cfg.estimator.tstar,
            )?;
            let out = match format(&common, Format::Json) {
                Format::Json => json("fd-check", seed, &cfg, check)?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["row", "epsilon", "fd", "eif", "gap"])
                        .map_err(csv_failure)?;
                    w.write_record([
                        row.to_string(),
                        cfg.fd_check.epsilon.to_string(),
                        check.fd.to_string(),
                        check.eif.to_string(),
                        check.gap.to_string(),
                    ])
                    .map_err(csv_failure)?;
                    csv_output("fd-check", seed, &cfg, w)?
                }
            };
            emit(&common, out)
        }
    }
}

fn format(common: &Common, default: Format) -> Format {
    common.format.unwrap_or(default)
}

fn resolve(common: &Common, est: Option<&Estimation>) -> Result<(FileConfig, u64), Failure> {
    let file = config::load(common.config.as_deref())?;
    let overrides = Overrides {
        seed: common.seed,
        k: est.and_then(|e| e.k),
        tstar: common.tstar,
        cause: common.j,
        flavor: est.and_then(|e| e.flavor),
        eta: est.and_then(|e| e.eta),
    };
    file.resolve(&overrides)
}

fn prepare(
    common: &Common,
    est: &Estimation,
) -> Result<(FileConfig, u64, SurvivalDataset), Failure> {
    let (cfg, seed) = resolve(common, Some(est))?;
    let data = read_data(&est.data, &cfg)?;
    Ok((cfg, seed, data))
}

fn read_data(path: &Path, cfg: &FileConfig) -> Result<SurvivalDataset, Failure> {
    load_dataset(path, &cfg.columns).map_err(|e| {
        let f = Failure::from(e);
        Failure {
            message: format!("{}: {}", path.display(), f.message),
            ..f
        }
    })
}

fn covariate_index(l: usize, data: &SurvivalDataset) -> Result<usize, Failure> {
    if l == 0 || l > data.dim() {
        return Err(Failure::usage(format!(
            "--l must lie in 1..={}",
            data.dim()
        )));
    }
    Ok(l - 1)
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure::compute(format!("csv output: {e}"))
}

fn json<T: Serialize>(
    command: &str,
    seed: u64,
    cfg: &FileConfig,
    result: T,
) -> Result<Output, Failure> {
    let env = Envelope {
        command,
        seed,
        config: cfg,
        result,
    };
    let mut body =
        serde_json::to_string_pretty(&env).map_err(|e| Failure::compute(e.to_string()))?;
    body.push('\n');
    Ok(Output { body })
}

/// Comment line carrying the seed and resolved config on top of CSV output.
fn provenance(command: &str, seed: u64, cfg: &FileConfig) -> Result<String, Failure> {
    let c = serde_json::to_string(cfg).map_err(|e| Failure::compute(e.to_string()))?;
    Ok(format!("# yearslost {command} seed={seed} config={c}\n"))
}

fn csv_output(
    command: &str,
    seed: u64,
    cfg: &FileConfig,
    w: csv::Writer<Vec<u8>>,
) -> Result<Output, Failure> {
    let bytes = w
        .into_inner()
        .map_err(|e| Failure::compute(e.to_string()))?;
    Ok(Output {
        body: format!(
            "{}{}",
            provenance(command, seed, cfg)?,
            String::from_utf8_lossy(&bytes)
        ),
    })
}

fn vim_table(reports: &[VimReport]) -> Result<csv::Writer<Vec<u8>>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "rank",
        "l",
        "covariate",
        "omega",
        "se",
        "ci_lower",
        "ci_upper",
        "tst",
        "p_value",
        "gamma",
        "chi",
        "degenerate",
    ])
    .map_err(csv_failure)?;
    let num = |v: f64| {
        if v.is_finite() {
            v.to_string()
        } else {
            String::new()
        }
    };
    for (i, r) in reports.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            (r.l + 1).to_string(),
            r.covariate.clone(),
            num(r.omega),
            num(r.report.se),
            num(r.report.ci_lower),
            num(r.report.ci_upper),
            num(r.tst()),
            num(r.p_value()),
            num(r.gamma),
            num(r.chi),
            r.degenerate.to_string(),
        ])
        .map_err(csv_failure)?;
    }
    Ok(w)
}

/// Writes to `--out` through a temporary file and an atomic rename, else to stdout.
fn emit(common: &Common, out: Output) -> Result<(), Failure> {
    let Some(path) = &common.out else {
        let mut stdout = std::io::stdout().lock();
        return stdout
            .write_all(out.body.as_bytes())
            .and_then(|()| stdout.flush())
            .map_err(|e| Failure::compute(format!("stdout: {e}")));
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io = |e: std::io::Error| Failure::input(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(out.body.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
