use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use zipmfm::posterior::{Linkage, SelectionMode};
use zipmfm_cli::commands::{
    cmd_evaluate, cmd_fit, cmd_select_d, cmd_simulate, cmd_summarize, SimulateOptions,
};
use zipmfm_cli::config::{RunConfig, SimConfig};

#[derive(Parser)]
#[command(name = "zipmfm", version, about = "Spatial domain clustering with gene selection for count data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate simulated replicates on a lattice
    Simulate {
        /// Scenario JSON (pattern, lattice size, genes, zero inflation, layout)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Fit one chain and write posterior summaries
    Fit {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        d: Option<f64>,
        /// Select genes by Bayesian false discovery rate at this level
        #[arg(long)]
        bfdr_level: Option<f64>,
    },
    /// Fit a grid of spatial couplings and pick one by pBIC
    SelectD {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated values of d
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Merge the estimated domains of a fit down to fewer domains
    Summarize {
        /// Output directory of `fit`
        #[arg(long)]
        fit: PathBuf,
        /// Defaults to the fit directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated domain counts; defaults to 1..=K
        #[arg(long, value_delimiter = ',')]
        k_target: Option<Vec<usize>>,
        #[arg(long, value_enum)]
        linkage: Option<LinkageArg>,
    },
    /// Score a fit against simulated truth
    Evaluate {
        /// Replicate directory written by `simulate`
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        fit: PathBuf,
        /// Defaults to the fit directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run config JSON, or a manifest written by an earlier run
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum LinkageArg {
    Single,
    Complete,
    Average,
}

impl From<LinkageArg> for Linkage {
    fn from(l: LinkageArg) -> Self {
        match l {
            LinkageArg::Single => Linkage::Single,
            LinkageArg::Complete => Linkage::Complete,
            LinkageArg::Average => Linkage::Average,
        }
    }
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.mcmc.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(i) = self.iterations {
            cfg.mcmc.iterations = i;
        }
        if let Some(b) = self.burn_in {
            cfg.mcmc.burn_in = b;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate { config, out, seed, replicates, threads } => {
            let sim = match &config {
                Some(p) => SimConfig::load(p)?,
                None => SimConfig::default(),
            };
            let opts = SimulateOptions {
                replicates: replicates.or(sim.replicates).unwrap_or(1),
                seed,
                threads,
            };
            let dirs = cmd_simulate(&sim, &opts, &out)?;
            println!("wrote {} replicate(s) under {}", dirs.len(), out.display());
        }
        Cmd::Fit { run, d, bfdr_level } => {
            let mut cfg = run.load()?;
            if let Some(d) = d {
                cfg.mfm.d = d;
            }
            if let Some(l) = bfdr_level {
                cfg.summary.selection = SelectionMode::Bfdr;
                cfg.summary.bfdr_level = l;
            }
            let fit = cmd_fit(&cfg, &run.out)?;
            let s = &fit.summary;
            println!(
                "K = {}, {} genes selected; outputs in {}",
                s.k_hat,
                s.gamma_hat.iter().filter(|&&g| g).count(),
                run.out.display()
            );
        }
        Cmd::SelectD { run, grid } => {
            let mut cfg = run.load()?;
            if let Some(g) = grid {
                cfg.grid = g;
            }
            let (d, _) = cmd_select_d(&cfg, &run.out)?;
            println!("selected d = {d}");
        }
        Cmd::Summarize { fit, out, k_target, linkage } => {
            let out = out.unwrap_or_else(|| fit.clone());
            let files = cmd_summarize(&fit, &out, k_target.as_deref(), linkage.map(Into::into))?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Cmd::Evaluate { truth, fit, out } => {
            let out = out.unwrap_or_else(|| fit.clone());
            let ev = cmd_evaluate(&truth, &fit, &out)
                .with_context(|| format!("evaluating {} against {}", fit.display(), truth.display()))?;
            println!("ari,{}", ev.ari);
            println!("sensitivity,{}", ev.sensitivity);
            println!("specificity,{}", ev.specificity);
            println!("mcc,{}", ev.mcc);
            println!("auc,{}", ev.auc);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
