//! Training and evaluation sets, generated in memory or read from a
//! `gen-data` manifest.

use std::path::{Path, PathBuf};

use pcsc::dataset::{corpus, pair_by_index, spread, CloudSpec};
use pcsc::pipeline::EvalCube;
use pcsc::pointcloud::{read_ply, write_ply};
use pcsc::voxel::{partition, Cube};
use pcsc::PointCloud;
use serde::{Deserialize, Serialize};

use crate::config::{streams, ExperimentConfig};
use crate::error::{CliError, Result};

/// One line of `manifest.csv`. `file` is relative to the manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    /// `train`, `test` or `partner`. The i-th `partner` row is another
    /// surface of the same kind as the i-th `test` row.
    pub split: String,
    pub file: String,
    pub kind: String,
    pub surface_seed: u64,
    pub sample_seed: u64,
    pub points: usize,
    pub precision_b: u32,
}

/// The synthetic corpus as `(split, spec)` in manifest order.
pub fn synthetic_specs(cfg: &ExperimentConfig) -> Result<Vec<(&'static str, CloudSpec)>> {
    let kinds = cfg.shape_kinds()?;
    let d = &cfg.dataset;
    let train = corpus(
        &kinds,
        d.train_clouds,
        d.points,
        d.precision_b,
        cfg.stream(streams::TRAIN_CORPUS),
    );
    let test = corpus(
        &kinds,
        d.test_clouds,
        d.points,
        d.precision_b,
        cfg.stream(streams::TEST_CORPUS),
    );
    let mut out: Vec<(&'static str, CloudSpec)> = train.into_iter().map(|s| ("train", s)).collect();
    out.extend(test.iter().map(|&s| ("test", s)));
    out.extend(test.iter().map(|s| ("partner", s.partner(0))));
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Writes every cloud as ASCII PLY under `dir` plus `dir/manifest.csv`;
/// returns the manifest path and its rows.
pub fn write_corpus(cfg: &ExperimentConfig, dir: &Path) -> Result<(PathBuf, Vec<ManifestRow>)> {
    let specs = synthetic_specs(cfg)?;
    let mut rows = Vec::with_capacity(specs.len());
    let mut counters = std::collections::HashMap::new();
    for (split, spec) in specs {
        let i = counters.entry(split).or_insert(0usize);
        let file = format!("{split}/{}.ply", spec.name(*i));
        *i += 1;
        let pc = spec.generate()?;
        write_file(&dir.join(&file), &write_ply(&pc, false))?;
        rows.push(ManifestRow {
            split: split.into(),
            file,
            kind: spec.kind.name().into(),
            surface_seed: spec.surface_seed,
            sample_seed: spec.sample_seed,
            points: spec.points,
            precision_b: spec.precision_b,
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).expect("in-memory csv");
    }
    let bytes = w.into_inner().expect("in-memory csv");
    let path = dir.join("manifest.csv");
    write_file(&path, &bytes)?;
    Ok((path, rows))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let err = |source| CliError::Manifest {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<ManifestRow>, _>>()
        .map_err(err)?;
    for row in &rows {
        if !["train", "test", "partner"].contains(&row.split.as_str()) {
            return Err(CliError::Config(format!(
                "{}: unknown split {:?}",
                path.display(),
                row.split
            )));
        }
        let file = manifest_dir(path).join(&row.file);
        if !file.is_file() {
            return Err(CliError::Config(format!(
                "{}: missing cloud {}",
                path.display(),
                file.display()
            )));
        }
    }
    Ok(rows)
}

fn manifest_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    read_ply(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Clouds of one split, from the manifest if configured.
fn clouds(cfg: &ExperimentConfig, split: &str) -> Result<Vec<PointCloud>> {
    match &cfg.dataset.manifest {
        Some(path) => read_manifest(path)?
            .iter()
            .filter(|r| r.split == split)
            .map(|r| read_cloud(&manifest_dir(path).join(&r.file)))
            .collect(),
        None => synthetic_specs(cfg)?
            .into_iter()
            .filter(|(s, _)| *s == split)
            .map(|(_, spec)| Ok(spec.generate()?))
            .collect(),
    }
}

fn side(cfg: &ExperimentConfig) -> usize {
    cfg.codec.side
}

/// Training cubes with at least `min_points` occupied voxels, thinned
/// evenly to `max_train_cubes`.
pub fn train_cubes(cfg: &ExperimentConfig) -> Result<Vec<Cube>> {
    let mut cubes = Vec::new();
    for pc in clouds(cfg, "train")? {
        cubes.extend(
            partition(&pc, side(cfg))?
                .into_iter()
                .filter(|c| c.k_occupied() >= cfg.dataset.min_points),
        );
    }
    if cubes.is_empty() {
        return Err(CliError::Config("no training cube has enough points".into()));
    }
    Ok(spread(&cubes, cfg.dataset.max_train_cubes))
}

/// Held-out cubes and same-index cube pairs for the two-user sweeps.
pub struct EvalSets {
    pub cubes: Vec<EvalCube>,
    pub pairs: Vec<(EvalCube, EvalCube)>,
}

pub fn eval_sets(cfg: &ExperimentConfig) -> Result<EvalSets> {
    let d = &cfg.dataset;
    let test = clouds(cfg, "test")?;
    let partners = clouds(cfg, "partner")?;
    let keep = |c: &EvalCube| c.cube.k_occupied() >= d.min_points;
    let mut cubes = Vec::new();
    let mut pairs = Vec::new();
    for (i, pc) in test.iter().enumerate() {
        let a = EvalCube::from_cloud(pc, side(cfg), d.normal_k)?;
        if let Some(t) = partners.get(i) {
            let b = EvalCube::from_cloud(t, side(cfg), d.normal_k)?;
            pairs.extend(pair_by_index(&a, &b).into_iter().filter(|(x, y)| keep(x) && keep(y)));
        }
        cubes.extend(a.into_iter().filter(keep));
    }
    if cubes.is_empty() {
        return Err(CliError::Config("no test cube has enough points".into()));
    }
    Ok(EvalSets {
        cubes: spread(&cubes, d.max_test_cubes),
        pairs: spread(&pairs, d.max_pairs),
    })
}
