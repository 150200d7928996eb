use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lclab::combinatorics::combf_check_all;
use lclab::distributions::{binomial_tail, sample, write_batch, write_batch_csv, DistributionSpec};
use lclab::harness::{render_report, run_experiment, ExperimentConfig, DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV};
use lclab::stats::{
    bootstrap_mean, empirical_n_moment, empirical_tails, lr_norm, order_statistic_columns, BootstrapConfig, EstimateRow,
};
use lclab::{Error, Result};

#[derive(Parser)]
#[command(name = "lclab", version, about = "Monte Carlo lab for tail and moment bounds of log-concave vectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Dist {
    Exponential,
    Gaussian,
    Cube,
    LpBall,
    Simplex,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Binary,
    Csv,
}

#[derive(clap::Args)]
struct DistArgs {
    /// Built-in distribution
    #[arg(long, value_enum, default_value = "exponential")]
    dist: Dist,
    /// Dimension
    #[arg(short = 'n', long, default_value_t = 64)]
    n: usize,
    /// Exponent for --dist lp-ball
    #[arg(long)]
    p: Option<f64>,
    /// Apply a Haar-random rotation drawn from this seed
    #[arg(long)]
    rotation_seed: Option<u64>,
    /// Full distribution spec as JSON (overrides --dist, -n, --p)
    #[arg(long)]
    spec: Option<PathBuf>,
}

impl DistArgs {
    fn resolve(&self) -> Result<DistributionSpec> {
        let base = if let Some(path) = &self.spec {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            serde_json::from_str(&text)?
        } else {
            match self.dist {
                Dist::Exponential => DistributionSpec::exponential(self.n)?,
                Dist::Gaussian => DistributionSpec::gaussian(self.n)?,
                Dist::Cube => DistributionSpec::cube(self.n)?,
                Dist::LpBall => DistributionSpec::lp_ball(
                    self.p
                        .ok_or_else(|| Error::InvalidArgument("--dist lp-ball needs --p".into()))?,
                    self.n,
                )?,
                Dist::Simplex => DistributionSpec::simplex(self.n)?,
            }
        };
        match self.rotation_seed {
            Some(s) => DistributionSpec::rotated_haar(base, s),
            None => Ok(base),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample batch
    Sample {
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long)]
        seed: u64,
        /// Output file (CSV goes to stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "binary")]
        format: Format,
    },
    /// Tail table of order statistics X_k*
    Tails {
        #[command(flatten)]
        dist: DistArgs,
        /// Order-statistic indices
        #[arg(short = 'k', long, value_delimiter = ',', default_value = "1")]
        k: Vec<usize>,
        /// Thresholds, comma separated
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2,2.5,3,3.5,4,5,6,7,8")]
        t: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.99)]
        level: f64,
        /// Add the exact binomial tail (exponential product only)
        #[arg(long)]
        oracle: bool,
    },
    /// Moments of N_X(t) and of ℓr norms
    Moments {
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        t: Vec<f64>,
        /// Moment orders
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        order: Vec<f64>,
        /// Norm exponents; use inf for the maximum norm
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,inf")]
        r: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Run an experiment config and write constant ledgers
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Overrides the config's output_dir
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Exhaustive check of the level-set counting bound
    Combf {
        #[arg(long, default_value_t = 5)]
        max_l0: u64,
        #[arg(long, default_value_t = 3)]
        max_s: usize,
    },
    /// Render plot CSVs and a summary table from a finished run
    Report {
        /// Run directory (defaults to $LCLAB_OUTPUT_DIR, then lclab-out)
        #[arg(long)]
        input: Option<PathBuf>,
        /// Where to write plot/ and summary.txt (defaults to the input)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 3,
        Error::Validation(_)
        | Error::InvalidArgument(_)
        | Error::InvalidSpec(_)
        | Error::Json(_)
        | Error::SearchSpaceTooLarge { .. } => 2,
        _ => 1,
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn run(cmd: Command) -> Result<u8> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cmd {
        Command::Sample {
            dist,
            count,
            seed,
            out: path,
            format,
        } => {
            let batch = sample(&dist.resolve()?, count, seed)?;
            match (format, path) {
                (Format::Binary, Some(p)) => write_batch(&batch, &p)?,
                (Format::Binary, None) => {
                    return Err(Error::InvalidArgument("binary output needs --out".into()));
                }
                (Format::Csv, Some(p)) => {
                    let mut f = std::fs::File::create(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    write_batch_csv(&batch, &mut f).map_err(|e| Error::Io { path: p, source: e })?;
                }
                (Format::Csv, None) => write_batch_csv(&batch, &mut out).map_err(stdout_err)?,
            }
            Ok(0)
        }
        Command::Tails {
            dist,
            k,
            t,
            count,
            seed,
            level,
            oracle,
        } => {
            let spec = dist.resolve()?;
            if oracle && !spec.is_exponential_product() {
                return Err(Error::InvalidArgument(
                    "--oracle is exact only for the exponential product".into(),
                ));
            }
            let n = spec.dimension();
            let batch = sample(&spec, count, seed)?;
            let cols = order_statistic_columns(&batch, &k)?;
            let mut header = EstimateRow::CSV_HEADER.to_string();
            if oracle {
                header.push_str(",exact");
            }
            writeln!(out, "{header}").map_err(stdout_err)?;
            for (col, &kk) in cols.iter().zip(&k) {
                for (est, &tt) in empirical_tails(col, &t, level)?.iter().zip(&t) {
                    let row = EstimateRow {
                        distribution: spec.label(),
                        n,
                        k_or_p_or_r: kk as f64,
                        t: tt,
                        point: est.point,
                        ci_low: est.ci_low,
                        ci_high: est.ci_high,
                        count: est.count,
                        seed,
                    };
                    let mut line = row.to_csv();
                    if oracle {
                        let q = (-std::f64::consts::SQRT_2 * tt).exp();
                        line.push_str(&format!(",{:e}", binomial_tail(n as u64, q, kk as i64)?));
                    }
                    writeln!(out, "{line}").map_err(stdout_err)?;
                }
            }
            Ok(0)
        }
        Command::Moments {
            dist,
            t,
            order: p,
            r,
            count,
            seed,
            resamples,
            level,
        } => {
            let spec = dist.resolve()?;
            let n = spec.dimension();
            let batch = sample(&spec, count, seed)?;
            let boot = |i: u64| BootstrapConfig {
                resamples,
                level,
                seed: lclab::rng::derive_seed(seed, lclab::rng::Domain::Bootstrap, i),
            };
            writeln!(out, "quantity,{}", EstimateRow::CSV_HEADER).map_err(stdout_err)?;
            let mut idx = 0;
            for &pp in &p {
                for &tt in &t {
                    idx += 1;
                    let est = empirical_n_moment(&batch, tt, pp, &boot(idx))?;
                    let row = EstimateRow {
                        distribution: spec.label(),
                        n,
                        k_or_p_or_r: pp,
                        t: tt,
                        point: est.point,
                        ci_low: est.ci_low,
                        ci_high: est.ci_high,
                        count: est.count,
                        seed,
                    };
                    writeln!(out, "n_moment,{}", row.to_csv()).map_err(stdout_err)?;
                }
            }
            for &rr in &r {
                let norms: Vec<f64> = batch.rows().map(|x| lr_norm(x, rr)).collect::<Result<_>>()?;
                for &pp in &p {
                    idx += 1;
                    let powered: Vec<f64> = norms.iter().map(|v| v.powf(pp)).collect();
                    let est = bootstrap_mean(&powered, &boot(idx))?;
                    let row = EstimateRow {
                        distribution: spec.label(),
                        n,
                        k_or_p_or_r: rr,
                        t: pp,
                        point: est.point.powf(1.0 / pp),
                        ci_low: est.ci_low.powf(1.0 / pp),
                        ci_high: est.ci_high.powf(1.0 / pp),
                        count: est.count,
                        seed,
                    };
                    writeln!(out, "lr_norm_moment,{}", row.to_csv()).map_err(stdout_err)?;
                }
            }
            Ok(0)
        }
        Command::Verify {
            config,
            workers,
            output_dir,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if output_dir.is_some() {
                cfg.output_dir = output_dir;
            }
            let report = run_experiment(&cfg, workers)?;
            let dir = cfg.resolved_output_dir();
            let files: usize = report.cells.iter().map(|c| c.files.len()).sum();
            writeln!(out, "wrote {files} ledger files to {}", dir.display()).map_err(stdout_err)?;
            for l in report.ledgers() {
                let c = l.fitted_c.map(|c| format!("{c:.4}")).unwrap_or_else(|| "none".into());
                writeln!(
                    out,
                    "{:<20} {:<36} n={:<6} fitted_C={c}",
                    l.family.name(),
                    l.distribution.as_deref().unwrap_or("-"),
                    l.params.get("n").copied().unwrap_or(f64::NAN)
                )
                .map_err(stdout_err)?;
            }
            let failures = report.failures();
            if failures.is_empty() {
                Ok(0)
            } else {
                writeln!(out, "{} ledger(s) have no qualifying constant", failures.len()).map_err(stdout_err)?;
                Ok(1)
            }
        }
        Command::Combf { max_l0, max_s } => {
            let rep = combf_check_all(max_l0, max_s)?;
            if rep.all_pass() {
                writeln!(out, "all cases pass ({} sequences)", rep.cases).map_err(stdout_err)?;
                Ok(0)
            } else {
                for (seq, count, bound) in &rep.failures {
                    writeln!(out, "FAIL {seq:?}: count {count} > bound {bound}").map_err(stdout_err)?;
                }
                Ok(1)
            }
        }
        Command::Report { input, out: dest } => {
            let input = input
                .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
            let dest = dest.unwrap_or_else(|| input.clone());
            let summary = render_report(&input, &dest)?;
            write!(out, "{summary}").map_err(stdout_err)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
