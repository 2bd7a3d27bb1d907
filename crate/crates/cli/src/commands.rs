//! One function per subcommand. Each writes its CSV files into `out_dir`
//! and returns the paths written.

use std::path::{Path, PathBuf};

use pcsc::codec::{train_with, Codec};
use pcsc::metrics::{estimate_normals, quality, QualityReport};
use pcsc::pointcloud::{read_ply_with, PlyReadOptions};
use pcsc::sse::{build_g_table, format_number, optimize, Optimum};
use pcsc::sweep::{mdma_sweep, rate_sweep, snr_sweep, RateSweep};
use pcsc::{seed, PointCloud};

use crate::config::{streams, ExperimentConfig};
use crate::data::{eval_sets, train_cubes, write_corpus};
use crate::error::{CliError, Result};

pub const LOSS_CSV: &str = "loss.csv";
pub const RATE_CSV: &str = "rate_sweep.csv";
pub const SNR_CSV: &str = "snr_sweep.csv";
pub const MDMA_CSV: &str = "mdma_sweep.csv";
pub const G_TABLE_CSV: &str = "g_table.csv";
pub const OPTIMUM_CSV: &str = "sse_optimum.csv";
pub const EVAL_CSV: &str = "eval.csv";

/// Writes a header row and `rows` to `path`, creating parent directories.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    let bytes = w.into_inner().expect("in-memory csv");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn num(v: f64) -> String {
    format_number(v)
}

fn prepare(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))
}

pub fn load_codec(cfg: &ExperimentConfig) -> Result<Codec<f32>> {
    let path = cfg.checkpoint_path();
    if !path.is_file() {
        return Err(CliError::MissingCheckpoint(path));
    }
    let mut f = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let codec = Codec::load(&mut f)?;
    if codec.config().side != cfg.codec.side {
        return Err(CliError::Config(format!(
            "checkpoint cube side {} but codec.side is {}",
            codec.config().side,
            cfg.codec.side
        )));
    }
    Ok(codec)
}

pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    prepare(cfg)?;
    let (manifest, _) = write_corpus(cfg, &cfg.out_dir.join("data"))?;
    Ok(vec![manifest])
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    prepare(cfg)?;
    let data = train_cubes(cfg)?;
    let mut codec = Codec::<f32>::new(cfg.codec_config()?)?;
    let history = train_with(&mut codec, &data, &cfg.train_config()?, cfg.exec(), |_, _| {})?;
    let ckpt = cfg.checkpoint_path();
    if let Some(dir) = ckpt.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut f = std::fs::File::create(&ckpt).map_err(|e| CliError::io(&ckpt, e))?;
    codec.save(&mut f)?;
    let rows: Vec<Vec<String>> = history
        .iter()
        .enumerate()
        .map(|(i, l)| vec![i.to_string(), num(*l)])
        .collect();
    let loss = cfg.out_dir.join(LOSS_CSV);
    write_csv(&loss, &["step", "wbce"], &rows)?;
    Ok(vec![ckpt, loss])
}

pub fn cmd_rate_sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    prepare(cfg)?;
    let codec = load_codec(cfg)?;
    let sets = eval_sets(cfg)?;
    let sweep = RateSweep {
        methods: cfg.rate_methods()?,
        drop_ratios: cfg.rate_sweep.drop_ratios.clone(),
        channel: cfg.rate_channel()?,
        per_channel: cfg.rate_sweep.per_channel,
        repetitions: cfg.rate_sweep.repetitions,
        seed: cfg.stream(streams::EVAL),
    };
    let rows: Vec<Vec<String>> = rate_sweep(&codec, &sets.cubes, &sweep, cfg.exec())?
        .iter()
        .map(|r| {
            vec![
                r.method.name().to_string(),
                num(r.drop_ratio),
                num(r.cbr),
                num(r.psnr_d1),
                num(r.psnr_d2),
            ]
        })
        .collect();
    let path = cfg.out_dir.join(RATE_CSV);
    write_csv(&path, &["method", "drop_ratio", "cbr", "psnr_d1", "psnr_d2"], &rows)?;
    Ok(vec![path])
}

pub fn cmd_snr_sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    prepare(cfg)?;
    let codec = load_codec(cfg)?;
    let sets = eval_sets(cfg)?;
    let s = &cfg.snr_sweep;
    let rows: Vec<Vec<String>> = snr_sweep(
        &codec,
        &sets.cubes,
        &cfg.schemes()?,
        &s.snr_db,
        s.repetitions,
        cfg.stream(streams::EVAL),
        cfg.exec(),
    )?
    .iter()
    .map(|r| vec![r.scheme.clone(), num(r.snr_db), num(r.psnr_d1), num(r.psnr_d2)])
    .collect();
    let path = cfg.out_dir.join(SNR_CSV);
    write_csv(&path, &["scheme", "snr_db", "psnr_d1", "psnr_d2"], &rows)?;
    Ok(vec![path])
}

fn require_pairs(pairs: &[(pcsc::pipeline::EvalCube, pcsc::pipeline::EvalCube)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(CliError::Config(
            "no test cube pair has enough points in both clouds".into(),
        ));
    }
    Ok(())
}

pub fn cmd_mdma_sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    prepare(cfg)?;
    let codec = load_codec(cfg)?;
    let sets = eval_sets(cfg)?;
    require_pairs(&sets.pairs)?;
    let m = &cfg.mdma_sweep;
    let rows: Vec<Vec<String>> = mdma_sweep(
        &codec,
        &sets.pairs,
        &m.sor,
        &m.snr_db,
        m.repetitions,
        cfg.stream(streams::MDMA_SWEEP),
        cfg.exec(),
    )?
    .iter()
    .map(|r| {
        vec![
            num(r.sor),
            num(r.snr_db),
            r.user.to_string(),
            num(r.psnr_d1),
            num(r.psnr_d2),
            num(r.occupancy),
            num(r.sigma_at_sor),
        ]
    })
    .collect();
    let path = cfg.out_dir.join(MDMA_CSV);
    write_csv(
        &path,
        &[
            "sor",
            "snr_db",
            "user",
            "psnr_d1",
            "psnr_d2",
            "occupancy",
            "sigma_at_sor",
        ],
        &rows,
    )?;
    Ok(vec![path])
}

pub fn cmd_sse(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    prepare(cfg)?;
    let codec = load_codec(cfg)?;
    let sets = eval_sets(cfg)?;
    require_pairs(&sets.pairs)?;
    let s = &cfg.sse;
    let base = cfg.stream(streams::SSE);
    let seeds: Vec<u64> = (0..s.repetitions as u64).map(|r| seed::derive(base, r)).collect();
    let table = build_g_table(&codec, &sets.pairs, &s.sor, &s.snr_db, &seeds, cfg.exec())?;
    let table_path = cfg.out_dir.join(G_TABLE_CSV);
    std::fs::write(&table_path, table.to_csv()).map_err(|e| CliError::io(&table_path, e))?;
    let rows: Vec<Vec<String>> = s
        .queries
        .iter()
        .map(|q| {
            let head = vec![num(q.snr_db), num(q.g_th), num(q.phi_th)];
            let tail = match optimize(&table, q.snr_db, q.g_th, q.phi_th, s.i_over_l) {
                Optimum::Feasible { sor, phi, g } => vec!["feasible".into(), num(sor), num(phi), num(g)],
                Optimum::Infeasible => vec!["infeasible".into(), String::new(), String::new(), String::new()],
            };
            head.into_iter().chain(tail).collect()
        })
        .collect();
    let opt_path = cfg.out_dir.join(OPTIMUM_CSV);
    write_csv(
        &opt_path,
        &["snr_db", "g_th", "phi_th", "status", "sor", "phi", "g"],
        &rows,
    )?;
    Ok(vec![table_path, opt_path])
}

fn read_with_normals(path: &Path, cfg: &ExperimentConfig) -> Result<PointCloud> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let options = PlyReadOptions {
        precision_b: cfg.eval.precision_b,
    };
    let mut pc = read_ply_with(&bytes, &options)?;
    if pc.normals().is_none() && !pc.is_empty() {
        let normals = estimate_normals(&pc, cfg.eval.normal_k)?;
        pc.set_normals(normals)?;
    }
    Ok(pc)
}

/// Compares two PLY files; `a` is the reference.
pub fn cmd_eval(cfg: &ExperimentConfig, a: &Path, b: &Path) -> Result<(QualityReport, Vec<PathBuf>)> {
    prepare(cfg)?;
    let pa = read_with_normals(a, cfg)?;
    let pb = read_with_normals(b, cfg)?;
    if pa.precision_b() != pb.precision_b() {
        return Err(CliError::Config(format!(
            "precision {} and {} differ",
            pa.precision_b(),
            pb.precision_b()
        )));
    }
    let report = quality(&pa, &pb, cfg.direction()?)?;
    let path = cfg.out_dir.join(EVAL_CSV);
    write_csv(
        &path,
        &[
            "file_a",
            "file_b",
            "direction",
            "points_a",
            "points_b",
            "mse_c2c",
            "mse_c2p",
            "psnr_d1",
            "psnr_d2",
        ],
        &[vec![
            a.display().to_string(),
            b.display().to_string(),
            report.direction.name().into(),
            pa.len().to_string(),
            pb.len().to_string(),
            num(report.mse_c2c),
            num(report.mse_c2p),
            num(report.psnr_d1),
            num(report.psnr_d2),
        ]],
    )?;
    Ok((report, vec![path]))
}
