use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcsc_cli::commands;
use pcsc_cli::{ExperimentConfig, Result};

const ABOUT: &str = "Point cloud semantic communication simulator: trains the voxel codec and \
runs the rate, SNR, two-user and spectral efficiency sweeps.";

const CONFIG_HELP: &str = "\
CONFIGURATION
  TOML, every key optional, unknown keys rejected. See config.example.toml
  for the full annotated schema. Sections: [dataset] [codec] [train]
  [rate_sweep] [snr_sweep] [snr_sweep.digital] [mdma_sweep] [sse]
  [[sse.queries]] [eval]. Top level: seed, out_dir, checkpoint, parallel.

OUTPUT
  CSV with a header row, '.' decimals, 'inf'/'-inf' for infinities.
  Rows come in grid order and are identical for identical config and seed.

ERRORS
  Exit status 0 on success. Otherwise one line on stderr:
    error kind=<config|io|manifest|parse|checkpoint|missing_checkpoint|runtime> message=\"...\"";

#[derive(Parser)]
#[command(name = "pcsc", version, about = ABOUT, after_long_help = CONFIG_HELP)]
struct Cli {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides `out_dir` from the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic corpus as PLY files plus a manifest.
    #[command(after_long_help = "\
OUTPUT  <out>/data/{train,test,partner}/<kind>_<i>.ply and <out>/data/manifest.csv
  manifest.csv: split,file,kind,surface_seed,sample_seed,points,precision_b
    split  train | test | partner (the i-th partner is another surface of the i-th test kind)
    file   path relative to the manifest
  Point [dataset] manifest at it to train and evaluate on these files.")]
    GenData,
    /// Train the codec; writes the checkpoint and the loss history.
    #[command(after_long_help = "\
OUTPUT  checkpoint (default <out>/model.ckpt) and <out>/loss.csv
  loss.csv: step,wbce
    step  optimizer step, from 0
    wbce  mean weighted cross entropy over the step's batch")]
    Train,
    /// Importance-guided rate control over the drop-ratio grid.
    #[command(after_long_help = "\
OUTPUT  <out>/rate_sweep.csv
  method,drop_ratio,cbr,psnr_d1,psnr_d2
    method      value | grad | grad_value | random | large_value
    drop_ratio  fraction of latent entries dropped
    cbr         transmitted symbols over cube voxels
    psnr_d1/d2  pooled point-to-point / point-to-plane PSNR in dB")]
    RateSweep,
    /// Analog and digital schemes over the SNR grid.
    #[command(after_long_help = "\
OUTPUT  <out>/snr_sweep.csv
  scheme,snr_db,psnr_d1,psnr_d2
    scheme  jscc_awgn | jscc_rayleigh | jscc_rayleigh_nocsi | digital_awgn | digital_rayleigh")]
    SnrSweep,
    /// Two-user transmission over the overlap-rate grid.
    #[command(after_long_help = "\
OUTPUT  <out>/mdma_sweep.csv
  sor,snr_db,user,psnr_d1,psnr_d2,occupancy,sigma_at_sor
    sor           shared fraction of the latent
    user          1 or 2
    occupancy     (2 - sor) / 2, bandwidth relative to two separate links
    sigma_at_sor  |S1 - S2| at the sharing cut, mean over pairs")]
    MdmaSweep,
    /// Quality table and overlap-rate optimization.
    #[command(after_long_help = "\
OUTPUT  <out>/g_table.csv and <out>/sse_optimum.csv
  g_table.csv: sor,snr_db,g_d1,h_d2,samples
    g_d1 / h_d2  pooled PSNR D1 / D2 of the cell; samples = transmissions per cell
  sse_optimum.csv: snr_db,g_th,phi_th,status,sor,phi,g
    status  feasible | infeasible (sor, phi and g empty)
    phi     i_over_l * g / (2 - sor) at the chosen sor")]
    Sse,
    /// Point-to-point and point-to-plane PSNR between two PLY files.
    #[command(after_long_help = "\
OUTPUT  report on stdout and <out>/eval.csv
  file_a,file_b,direction,points_a,points_b,mse_c2c,mse_c2p,psnr_d1,psnr_d2
  Normals missing from a file are estimated from its k nearest neighbors.")]
    Eval {
        /// Reference cloud.
        a: PathBuf,
        /// Distorted cloud.
        b: PathBuf,
        /// a_to_b, b_to_a or symmetric_max; overrides [eval] direction.
        #[arg(long)]
        direction: Option<String>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    let written = match cli.command {
        Command::GenData => commands::cmd_gen_data(&cfg)?,
        Command::Train => commands::cmd_train(&cfg)?,
        Command::RateSweep => commands::cmd_rate_sweep(&cfg)?,
        Command::SnrSweep => commands::cmd_snr_sweep(&cfg)?,
        Command::MdmaSweep => commands::cmd_mdma_sweep(&cfg)?,
        Command::Sse => commands::cmd_sse(&cfg)?,
        Command::Eval { a, b, direction } => {
            if let Some(d) = direction {
                cfg.eval.direction = d;
            }
            let (r, written) = commands::cmd_eval(&cfg, &a, &b)?;
            println!(
                "direction {} mse_c2c {} mse_c2p {} psnr_d1 {} psnr_d2 {}",
                r.direction.name(),
                r.mse_c2c,
                r.mse_c2p,
                r.psnr_d1,
                r.psnr_d2
            );
            written
        }
    };
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::FAILURE
        }
    }
}
