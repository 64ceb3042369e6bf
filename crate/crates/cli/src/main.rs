//! Command-line laboratory for holomorphic dynamics on CP^k: sample
//! equilibrium measures, estimate Lyapunov spectra, dimensions and local
//! entropy, sweep the disc growth bound, inspect resonant normal forms, and
//! run the whole verification pipeline from one config file.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use num_rational::BigRational;

use cpk_core::harness::{
    self, read_cloud_csv, run_dimension_stage, run_entropy_stage, run_growth_stage,
    run_lyapunov_stage, run_sample_stage, ExperimentConfig,
};
use cpk_core::normal_forms;

#[derive(Parser)]
#[command(name = "cpk-lab", version, about)]
struct Cli {
    /// Experiment config (TOML with [map], [sampler], [lyapunov],
    /// [dimension], [growth] sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the sampler seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample the equilibrium measure into <out>/<map>.cloud.csv.
    Sample,
    /// Estimate the Lyapunov spectrum from an existing cloud CSV.
    Lyapunov,
    /// Estimate local and correlation dimension from an existing cloud CSV.
    Dimension,
    /// Estimate the dynamical-ball entropy rate from an existing cloud CSV.
    Entropy,
    /// Sweep the disc volume growth bound.
    Growth,
    /// Enumerate resonant degrees for a Lyapunov spectrum.
    Resonance {
        /// Comma-separated exponents, descending (e.g. "1.386,0.693").
        #[arg(long, value_name = "L1,..,LK", conflicts_with = "exact")]
        lambda: Option<String>,
        /// Comma-separated rationals r_i with lambda_i = log r_i
        /// (e.g. "4,2" or "9/2,3"); resonances are decided exactly.
        #[arg(long, value_name = "R1,..,RK")]
        exact: Option<String>,
        /// Tolerance on the resonance equation for float exponents.
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
    },
    /// Run the full pipeline and write report.csv / report.md.
    Verify,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .context("this subcommand needs --config <path>")?;
    let mut cfg = ExperimentConfig::from_path(path)
        .with_context(|| format!("loading config {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.sampler.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn for_each_map(
    cfg: &ExperimentConfig,
    mut body: impl FnMut(&str, &cpk_core::ProjectiveMap) -> Result<()>,
) -> Result<()> {
    for name in cfg.map.resolved_names()? {
        let f = cfg.map.load(&name)?;
        body(&name, &f)?;
    }
    Ok(())
}

fn cloud_path(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output.dir.join(format!("{name}.cloud.csv"))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }

    match &cli.cmd {
        Cmd::Sample => {
            let cfg = load_config(&cli)?;
            for_each_map(&cfg, |name, f| {
                let cloud = run_sample_stage(&cfg, name, f)?;
                println!(
                    "{name}: {} samples at depth {} -> {}",
                    cloud.len(),
                    cfg.sampler.depth,
                    cloud_path(&cfg, name).display()
                );
                Ok(())
            })?;
        }
        Cmd::Lyapunov => {
            let cfg = load_config(&cli)?;
            for_each_map(&cfg, |name, f| {
                let cloud = read_cloud_csv(&cloud_path(&cfg, name))
                    .with_context(|| format!("reading the cloud for {name}; run `sample` first"))?;
                let (spectrum, residual, margin, ok) = run_lyapunov_stage(&cfg, name, f, &cloud)?;
                for (i, (l, se)) in spectrum.lambda.iter().zip(&spectrum.stderr).enumerate() {
                    println!("{name}: lambda_{} = {l:.6} +- {se:.6}", i + 1);
                }
                println!(
                    "{name}: identity residual {residual:.4}, exponent margin {margin:.4} ({})",
                    if ok { "ok" } else { "VIOLATED" }
                );
                Ok(())
            })?;
        }
        Cmd::Dimension => {
            let cfg = load_config(&cli)?;
            for_each_map(&cfg, |name, _| {
                let cloud = read_cloud_csv(&cloud_path(&cfg, name))
                    .with_context(|| format!("reading the cloud for {name}; run `sample` first"))?;
                let (med, se, corr) = run_dimension_stage(&cfg, name, &cloud)?;
                println!("{name}: median local dimension {med:.4} +- {se:.4}, correlation {corr:.4}");
                Ok(())
            })?;
        }
        Cmd::Entropy => {
            let cfg = load_config(&cli)?;
            for_each_map(&cfg, |name, f| {
                let cloud = read_cloud_csv(&cloud_path(&cfg, name))
                    .with_context(|| format!("reading the cloud for {name}; run `sample` first"))?;
                let (h, se) = run_entropy_stage(&cfg, name, f, &cloud)?;
                println!("{name}: entropy rate {h:.4} +- {se:.4}");
                Ok(())
            })?;
        }
        Cmd::Growth => {
            let cfg = load_config(&cli)?;
            for_each_map(&cfg, |name, f| {
                let (pass, total) = run_growth_stage(&cfg, name, f)?;
                println!("{name}: growth bound held in {pass}/{total} checks");
                Ok(())
            })?;
        }
        Cmd::Resonance { lambda, exact, eps } => {
            let res = match (lambda, exact) {
                (_, Some(spec)) => {
                    let ratios: Vec<BigRational> = spec
                        .split(',')
                        .map(parse_rational)
                        .collect::<Result<_>>()?;
                    normal_forms::enumerate_resonances_exact(&ratios)
                }
                (Some(spec), None) => {
                    let lambda: Vec<f64> = spec
                        .split(',')
                        .map(|s| s.trim().parse().context("bad exponent"))
                        .collect::<Result<_>>()?;
                    normal_forms::enumerate_resonances(&lambda, *eps)
                }
                (None, None) => bail!("pass --lambda or --exact"),
            };
            println!(
                "theta = lambda_1/lambda_k = {:.6}; Delta = {}; I = {:?}",
                res.theta, res.delta, res.i_set
            );
            for (i, set) in res.sets.iter().enumerate() {
                if set.is_empty() {
                    println!("R_{} = {{}}", i + 1);
                } else {
                    let alphas: Vec<String> = set.iter().map(|a| format!("{a:?}")).collect();
                    println!("R_{} = {{ {} }}", i + 1, alphas.join(", "));
                }
            }
        }
        Cmd::Verify => {
            let cfg = load_config(&cli)?;
            let report = harness::run_verify(&cfg)?;
            for row in &report.rows {
                println!(
                    "{}: dim {:.3} vs bound {:.3} [{}], corollary {:.3} [{}], growth {}/{}",
                    row.map,
                    row.dim_local_median,
                    row.bound_dim,
                    pass(row.verdict_dim),
                    row.bound_equilibrium,
                    pass(row.verdict_equilibrium),
                    row.growth_pass,
                    row.growth_total
                );
            }
            println!(
                "report: {} and report.md",
                cfg.output.dir.join("report.csv").display()
            );
        }
    }
    Ok(())
}

fn pass(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let r = match s.split_once('/') {
        Some((n, d)) => BigRational::new(
            n.trim().parse().context("bad numerator")?,
            d.trim().parse().context("bad denominator")?,
        ),
        None => BigRational::from_integer(s.parse().context("bad integer")?),
    };
    Ok(r)
}
