use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use qsolab_core::census::{self, CensusConfig, CensusSummary};
use qsolab_core::constructions::{
    coarsen, make_block_example, make_markov_averaging, make_q_diamond, make_q_flat, make_q_sharp,
    perturb, sample_qso, sample_stochastic_matrix,
};
use qsolab_core::io;
use qsolab_core::metrics::{du_bounds, MetricReport};
use qsolab_core::mixing::{self, ClassifyOptions, MixingReport};
use qsolab_core::{Density, QsoError};

mod svg;

/// Largest horizon attempted for the all-window convergence check.
const ALL_WINDOW_MAX_HORIZON: usize = 500;

#[derive(Parser)]
#[command(
    name = "qsolab",
    version,
    about = "Quadratic stochastic operator laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an operator file against the stochasticity axioms.
    Validate { path: PathBuf },
    /// Classify one operator: delta_1, delta_n estimates, certificates.
    Classify {
        path: PathBuf,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = 4)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Grid resolution for certification when d <= 3.
        #[arg(long)]
        grid: Option<usize>,
        /// Also report finite-horizon residuals for the mixing classes.
        #[arg(long)]
        empirical: bool,
        /// Append a CSV summary row to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Monte Carlo census over Dirichlet-sampled operators.
    Census {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = 2)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
        eps: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Record per-row wall time (breaks byte reproducibility).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Write a canonical operator file.
    Make {
        kind: Kind,
        #[arg(long)]
        dim: Option<usize>,
        /// `uniform`, `vertex:K` (one-based) or a comma-separated density.
        #[arg(long)]
        anchor: Option<String>,
        #[arg(long)]
        split: Option<usize>,
        /// Weights defining the block distributions (comma-separated).
        #[arg(long, value_delimiter = ',')]
        h: Option<Vec<f64>>,
        /// CSV file with the base stochastic matrix for `averaging`.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Input operator for `perturb`.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniform distances between two operators.
    Metrics {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 8)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Per-horizon delta_n estimates with the analytic bound when certified.
    Decay {
        path: PathBuf,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = 4)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Coarsen an operator along a partition.
    Coarsen {
        path: PathBuf,
        /// Partition JSON file, or an inline one-based spec such as `1-3|4-6`.
        #[arg(long)]
        partition: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Diamond,
    Flat,
    Sharp,
    Block,
    Averaging,
    Random,
    Perturb,
}

/// A failed internal numeric assertion; maps to exit code 3.
#[derive(Debug)]
struct NumericFailure(String);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "numeric assertion failed: {}", self.0)
    }
}

impl std::error::Error for NumericFailure {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<NumericFailure>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("QSOLAB_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| anyhow!("QSOLAB_THREADS must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Validate { path } => validate(&path),
        Command::Classify {
            path,
            horizon,
            starts,
            seed,
            tol,
            grid,
            empirical,
            csv,
        } => {
            let q = io::read_operator(&path)?;
            let opts = ClassifyOptions {
                horizon,
                starts,
                seed,
                tol,
                grid,
                empirical,
            };
            let mut report = mixing::classify(&q, &opts)?;
            attach_all_window_check(&q, &mut report, tol)?;
            print!("{}", report.to_key_value());
            if let Some(p) = csv {
                append_csv(&p, MixingReport::csv_header(), &report.csv_row())?;
            }
            Ok(())
        }
        Command::Census {
            dim,
            samples,
            alpha,
            horizon,
            starts,
            seed,
            eps,
            out,
            timing,
            svg,
        } => {
            let cfg = CensusConfig {
                dim,
                samples,
                alpha,
                horizon,
                starts,
                seed,
                epsilon_list: eps,
                timing,
            };
            let rows = census::run_census(&cfg)?;
            let file =
                fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            census::write_csv(&cfg, &rows, std::io::BufWriter::new(file))?;
            let summary = CensusSummary::from_rows(&cfg, &rows);
            print!("{}", summary.to_text());
            if let Some(p) = svg {
                let labels: Vec<String> =
                    (0..10).map(|b| format!("{:.1}", 0.2 * b as f64)).collect();
                write_file(
                    &p,
                    &svg::histogram("delta_1 distribution", &labels, &summary.delta1_histogram),
                )?;
            }
            if !summary.density_check_passed() {
                return Err(NumericFailure("a perturbed sample failed to certify".into()).into());
            }
            Ok(())
        }
        Command::Make {
            kind,
            dim,
            anchor,
            split,
            h,
            matrix,
            alpha,
            seed,
            input,
            eps,
            out,
        } => {
            let need_dim = || dim.ok_or_else(|| anyhow!("--dim is required for this kind"));
            let q = match kind {
                Kind::Diamond => {
                    let d = need_dim()?;
                    make_q_diamond(&parse_anchor(anchor.as_deref().unwrap_or("uniform"), d)?)?
                }
                Kind::Flat => make_q_flat(need_dim()?)?,
                Kind::Sharp => make_q_sharp(need_dim()?)?,
                Kind::Block => {
                    let d = need_dim()?;
                    let s = split.ok_or_else(|| anyhow!("--split is required for block"))?;
                    make_block_example(d, s, &h.unwrap_or_else(|| vec![1.0; d]))?
                }
                Kind::Averaging => {
                    let p = match matrix {
                        Some(m) => io::read_matrix(&m)?,
                        None => sample_stochastic_matrix(need_dim()?, alpha, seed)?,
                    };
                    make_markov_averaging(&p)?
                }
                Kind::Random => sample_qso(need_dim()?, alpha, seed)?,
                Kind::Perturb => {
                    let path = input.ok_or_else(|| anyhow!("--in is required for perturb"))?;
                    let e = eps.ok_or_else(|| anyhow!("--eps is required for perturb"))?;
                    let base = io::read_operator(&path)?;
                    let a = parse_anchor(anchor.as_deref().unwrap_or("uniform"), base.dim())?;
                    perturb(&base, e, &a)?
                }
            };
            io::write_operator(&out, &q)?;
            println!(
                "wrote {} (dim={}, symmetric={})",
                out.display(),
                q.dim(),
                q.is_symmetric()
            );
            Ok(())
        }
        Command::Metrics {
            a,
            b,
            starts,
            seed,
            csv,
        } => {
            let q1 = io::read_operator(&a)?;
            let q2 = io::read_operator(&b)?;
            let r = du_bounds(&q1, &q2, starts, seed)?;
            print!("{}", r.to_key_value());
            if let Some(p) = csv {
                append_csv(&p, MetricReport::csv_header(), &r.csv_row())?;
            }
            Ok(())
        }
        Command::Decay {
            path,
            horizon,
            starts,
            seed,
            out,
            svg,
        } => decay(&path, horizon, starts, seed, &out, svg.as_deref()),
        Command::Coarsen {
            path,
            partition,
            out,
        } => {
            let q = io::read_operator(&path)?;
            let part = io::load_partition(&partition, q.dim())?;
            let c = coarsen(&q, &part)?;
            io::write_operator(&out, &c)?;
            println!("wrote {} (dim={})", out.display(), c.dim());
            Ok(())
        }
    }
}

fn validate(path: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match io::operator_from_json(&text) {
        Ok(q) => {
            println!("valid=true");
            println!("dim={}", q.dim());
            println!("symmetric={}", q.is_symmetric());
            println!("max_renormalization={}", q.max_renormalization());
            Ok(())
        }
        Err(e) => {
            println!("valid=false");
            Err(anyhow!(e))
        }
    }
}

fn attach_all_window_check(
    q: &qsolab_core::Qso,
    report: &mut MixingReport,
    tol: f64,
) -> anyhow::Result<()> {
    let Some(ball) = report.norm_mixing_ball.clone() else {
        return Ok(());
    };
    let n = ball.implied_horizon(tol);
    if n > ALL_WINDOW_MAX_HORIZON {
        report.notes.push(format!(
            "all-window check skipped: implied horizon {n} exceeds {ALL_WINDOW_MAX_HORIZON}"
        ));
        return Ok(());
    }
    match mixing::thm6_spot_check(q, n, tol) {
        Ok(ok) => {
            report.all_window_check = Some(ok);
            if !ok {
                return Err(NumericFailure(format!(
                    "ball-certified operator failed the all-window check at horizon {n}"
                ))
                .into());
            }
        }
        Err(QsoError::NotNormMixing { residual, .. }) => {
            return Err(NumericFailure(format!(
                "ball-certified operator has residual {residual:e} at horizon {n}"
            ))
            .into());
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn decay(
    path: &Path,
    horizon: usize,
    starts: usize,
    seed: u64,
    out: &Path,
    svg_path: Option<&Path>,
) -> anyhow::Result<()> {
    let q = io::read_operator(path)?;
    let cert = mixing::certify(&q);
    let profile = mixing::delta_profile(&q, horizon, starts, seed)?;
    let mut text = String::from("n,delta_n_lower,bound_if_certified\n");
    let mut bounds = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        let est = profile.at(n);
        let bound = cert
            .certificate
            .filter(|_| q.is_symmetric())
            .map(|c| c.bound(n));
        if let Some(b) = bound {
            if est > b + 1e-9 {
                bail!(NumericFailure(format!(
                    "delta_{n} estimate {est} exceeds certified bound {b}"
                )));
            }
        }
        if n > 1 && est > profile.at(n - 1) + 1e-9 {
            bail!(NumericFailure(format!("estimates increase at n={n}")));
        }
        text.push_str(&format!(
            "{n},{est},{}\n",
            bound.map(|b| b.to_string()).unwrap_or_default()
        ));
        bounds.push(bound.unwrap_or(f64::NAN));
    }
    write_file(out, &text)?;
    println!("wrote {} ({horizon} rows)", out.display());
    if let Some(p) = svg_path {
        let x: Vec<f64> = (1..=horizon).map(|n| n as f64).collect();
        let series = vec![
            ("delta_n lower", "steelblue", profile.estimates.clone()),
            ("certified bound", "firebrick", bounds),
        ];
        write_file(p, &svg::line_chart("delta_n decay", &x, &series, 2.0))?;
    }
    Ok(())
}

fn parse_anchor(spec: &str, dim: usize) -> anyhow::Result<Density> {
    if spec == "uniform" {
        return Ok(Density::uniform(dim));
    }
    if let Some(k) = spec.strip_prefix("vertex:") {
        let k: usize = k.parse().context("vertex index")?;
        if k == 0 || k > dim {
            bail!("vertex index must be in 1..={dim}");
        }
        return Ok(Density::vertex(dim, k - 1));
    }
    let values = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .context("anchor must be 'uniform', 'vertex:K' or a comma-separated density")?;
    if values.len() != dim {
        bail!("anchor has {} entries, expected {dim}", values.len());
    }
    Ok(Density::new(values)?)
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn append_csv(path: &Path, header: &str, row: &str) -> anyhow::Result<()> {
    let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    writeln!(f, "{row}")?;
    Ok(())
}
