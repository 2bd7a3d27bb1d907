//! Semantic spectral efficiency: the quality table `g(sor, snr)` measured
//! with two-user transmissions, the efficiency `phi`, and an exhaustive
//! search for the best overlap rate.

use crate::channel::ChannelConfig;
use crate::codec::Codec;
use crate::exec::Exec;
use crate::metrics::ErrorSums;
use crate::pipeline::{pooled_psnr, EvalCube};
use crate::{mdma, seed, Error, Result};

/// Largest overlap rate the optimizer may pick.
pub const MAX_SOR: f64 = 0.8;

/// Pooled PSNR per `(sor, snr)` cell; rows follow `sor_grid`.
#[derive(Clone, Debug, PartialEq)]
pub struct GTable {
    pub sor_grid: Vec<f64>,
    pub snr_grid_db: Vec<f64>,
    /// PSNR D1, `[sor][snr]`.
    pub g_values: Vec<Vec<f64>>,
    /// PSNR D2, `[sor][snr]`.
    pub h_values: Vec<Vec<f64>>,
    /// Transmissions per cell (pairs x seeds x 2 users).
    pub samples_per_cell: usize,
}

fn ascending(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} grid is empty")));
    }
    if grid.iter().any(|v| v.is_nan()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "{what} grid must be strictly ascending"
        )));
    }
    Ok(())
}

impl GTable {
    pub fn new(
        sor_grid: Vec<f64>,
        snr_grid_db: Vec<f64>,
        g_values: Vec<Vec<f64>>,
        h_values: Vec<Vec<f64>>,
        samples_per_cell: usize,
    ) -> Result<Self> {
        ascending(&sor_grid, "sor")?;
        ascending(&snr_grid_db, "snr")?;
        if sor_grid.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidArgument("sor grid must lie in [0, 1]".into()));
        }
        for m in [&g_values, &h_values] {
            if m.len() != sor_grid.len() || m.iter().any(|r| r.len() != snr_grid_db.len()) {
                return Err(Error::Shape("table does not match its grids".into()));
            }
        }
        Ok(GTable {
            sor_grid,
            snr_grid_db,
            g_values,
            h_values,
            samples_per_cell,
        })
    }

    /// Column nearest to `snr_db`; lower index on ties. Infinite SNRs map
    /// to the matching end of the grid.
    pub fn snr_column(&self, snr_db: f64) -> usize {
        if snr_db == f64::INFINITY {
            return self.snr_grid_db.len() - 1;
        }
        if snr_db == f64::NEG_INFINITY {
            return 0;
        }
        let dist = |v: f64| (v - snr_db).abs();
        (0..self.snr_grid_db.len())
            .min_by(|&a, &b| {
                dist(self.snr_grid_db[a])
                    .total_cmp(&dist(self.snr_grid_db[b]))
                    .then(a.cmp(&b))
            })
            .expect("non-empty grid")
    }

    /// `sor,snr_db,g_d1,h_d2,samples` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sor,snr_db,g_d1,h_d2,samples\n");
        for (i, &sor) in self.sor_grid.iter().enumerate() {
            for (j, &snr) in self.snr_grid_db.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    format_number(sor),
                    format_number(snr),
                    format_number(self.g_values[i][j]),
                    format_number(self.h_values[i][j]),
                    self.samples_per_cell
                ));
            }
        }
        out
    }
}

/// CSV rendering: shortest round-trip decimal, `inf`/`-inf` for infinities.
pub fn format_number(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// Runs two-user downlinks over every cell. Each pair and seed uses the same
/// channel seed in every cell, so cells differ only by `sor` and SNR.
pub fn build_g_table(
    codec: &Codec<f32>,
    pairs: &[(EvalCube, EvalCube)],
    sor_grid: &[f64],
    snr_grid_db: &[f64],
    seeds: &[u64],
    exec: Exec,
) -> Result<GTable> {
    ascending(sor_grid, "sor")?;
    ascending(snr_grid_db, "snr")?;
    if pairs.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one pair and one seed".into()));
    }
    let b = pairs[0].0.precision_b;
    let cells: Vec<(usize, usize)> = (0..sor_grid.len())
        .flat_map(|i| (0..snr_grid_db.len()).map(move |j| (i, j)))
        .collect();
    let results = exec.try_map(&cells, |&(i, j)| -> Result<(f64, f64)> {
        let ch = ChannelConfig::awgn(snr_grid_db[j], 0);
        let mut sums = ErrorSums::default();
        for (p, (a, c)) in pairs.iter().enumerate() {
            for &s in seeds {
                let run = seed::derive(s, p as u64);
                let out = mdma::downlink(codec, &a.cube, &c.cube, sor_grid[i], &ch, run)?;
                sums.add(&a.errors(&out.reconstruction1)?);
                sums.add(&c.errors(&out.reconstruction2)?);
            }
        }
        pooled_psnr(&sums, b)
    })?;
    let mut g = vec![vec![0.0; snr_grid_db.len()]; sor_grid.len()];
    let mut h = g.clone();
    for (&(i, j), (d1, d2)) in cells.iter().zip(results) {
        g[i][j] = d1;
        h[i][j] = d2;
    }
    GTable::new(
        sor_grid.to_vec(),
        snr_grid_db.to_vec(),
        g,
        h,
        pairs.len() * seeds.len() * 2,
    )
}

/// Efficiency `i_over_l * g / (2 - sor)`.
pub fn phi(g: f64, sor: f64, i_over_l: f64) -> f64 {
    i_over_l * g / (2.0 - sor)
}

/// Rate `bandwidth * phi`.
pub fn gamma(bandwidth: f64, phi: f64) -> f64 {
    bandwidth * phi
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimum {
    Feasible { sor: f64, phi: f64, g: f64 },
    Infeasible,
}

/// Exhaustive search over `sor <= 0.8` cells of the SNR column nearest to
/// `snr_db` for the largest `phi` subject to `g >= g_th` and `phi >= phi_th`.
/// Ties go to the smaller `sor`.
pub fn optimize(table: &GTable, snr_db: f64, g_th: f64, phi_th: f64, i_over_l: f64) -> Optimum {
    let col = table.snr_column(snr_db);
    let mut best = Optimum::Infeasible;
    for (i, &sor) in table.sor_grid.iter().enumerate() {
        if sor > MAX_SOR + 1e-12 {
            continue;
        }
        let g = table.g_values[i][col];
        let p = phi(g, sor, i_over_l);
        if !(g >= g_th && p >= phi_th) {
            continue;
        }
        let better = match best {
            Optimum::Infeasible => true,
            Optimum::Feasible { phi: bp, .. } => p > bp,
        };
        if better {
            best = Optimum::Feasible { sor, phi: p, g };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(g: Vec<Vec<f64>>) -> GTable {
        let sor: Vec<f64> = (0..g.len()).map(|i| i as f64 / (g.len() - 1) as f64).collect();
        let snr: Vec<f64> = (0..g[0].len()).map(|j| 2.0 * j as f64).collect();
        GTable::new(sor, snr, g.clone(), g, 1).unwrap()
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(60.0, 0.0, 1.0), 30.0);
        assert_eq!(phi(60.0, 1.0, 1.0), 60.0);
        assert_eq!(gamma(2.0, 30.0), 60.0);
    }

    #[test]
    fn infinite_threshold_is_infeasible() {
        let t = table(vec![vec![40.0]; 11]);
        assert_eq!(optimize(&t, 0.0, f64::INFINITY, 0.0, 1.0), Optimum::Infeasible);
    }

    #[test]
    fn constant_quality_picks_the_largest_allowed_sor() {
        let t = table(vec![vec![40.0]; 11]);
        match optimize(&t, 0.0, 0.0, 0.0, 1.0) {
            Optimum::Feasible { sor, phi: p, .. } => {
                assert!((sor - 0.8).abs() < 1e-12);
                assert_eq!(p, phi(40.0, sor, 1.0));
            }
            Optimum::Infeasible => panic!("feasible"),
        }
    }

    #[test]
    fn nearest_column_lookup() {
        let t = table(vec![vec![1.0, 2.0, 3.0]; 2]);
        assert_eq!(t.snr_column(2.9), 1);
        assert_eq!(t.snr_column(3.0), 1);
        assert_eq!(t.snr_column(100.0), 2);
        assert_eq!(t.snr_column(-5.0), 0);
    }

    #[test]
    fn csv_layout() {
        let t = GTable::new(
            vec![0.0],
            vec![f64::INFINITY],
            vec![vec![f64::INFINITY]],
            vec![vec![12.5]],
            6,
        )
        .unwrap();
        assert_eq!(t.to_csv(), "sor,snr_db,g_d1,h_d2,samples\n0,inf,inf,12.5,6\n");
    }

    #[test]
    fn grids_are_validated() {
        assert!(GTable::new(vec![], vec![0.0], vec![], vec![], 1).is_err());
        assert!(GTable::new(vec![0.5, 0.2], vec![0.0], vec![vec![1.0]; 2], vec![vec![1.0]; 2], 1).is_err());
        assert!(GTable::new(vec![0.0], vec![0.0], vec![vec![1.0, 2.0]], vec![vec![1.0]], 1).is_err());
    }
}
