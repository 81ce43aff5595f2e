//! Parameter sweeps over (beta, gamma) and HHI tipping-contour extraction.
//!
//! Every (beta index, gamma index, replicate) triple is an independent work
//! item seeded from a hash of the master seed and its position, and results
//! are written back by position. Output is therefore identical for any
//! thread count or schedule.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abm::{self, SimConfig, DEFAULT_TAIL_FRACTION};
use crate::error::{Error, Result};

pub const DEFAULT_BETA_COUNT: usize = 11;
pub const DEFAULT_GAMMA_COUNT: usize = 25;
pub const DEFAULT_REPLICATES: usize = 16;
pub const BETA_RANGE: (f64, f64) = (0.0, 0.05);
pub const GAMMA_RANGE: (f64, f64) = (1e-6, 2e-3);
pub const DEFAULT_LEVEL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub beta_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
    pub replicates: usize,
    /// Supplies alpha, delta, steps, initial population, decay law and the
    /// master seed; its beta and gamma are overridden per cell.
    pub base_config: SimConfig,
    pub tail_fraction: f64,
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// `n` log-evenly spaced positive values from `a` to `b` inclusive.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.log10(), b.log10());
    linspace(la, lb, n)
        .into_iter()
        .enumerate()
        .map(|(i, e)| match i {
            0 => a,
            _ if i == n - 1 => b,
            _ => 10f64.powf(e),
        })
        .collect()
}

impl SweepGrid {
    pub fn new(beta_values: Vec<f64>, gamma_values: Vec<f64>, replicates: usize, base_config: SimConfig) -> Result<Self> {
        let grid = SweepGrid {
            beta_values,
            gamma_values,
            replicates,
            base_config,
            tail_fraction: DEFAULT_TAIL_FRACTION,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// 11 beta values over [0, 0.05] by 25 log-spaced gamma values over
    /// [1e-6, 2e-3], 16 replicates.
    pub fn default_grid(base_config: SimConfig) -> Self {
        SweepGrid {
            beta_values: linspace(BETA_RANGE.0, BETA_RANGE.1, DEFAULT_BETA_COUNT),
            gamma_values: logspace(GAMMA_RANGE.0, GAMMA_RANGE.1, DEFAULT_GAMMA_COUNT),
            replicates: DEFAULT_REPLICATES,
            base_config,
            tail_fraction: DEFAULT_TAIL_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let increasing = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return Err(Error::invalid(format!("{name} axis is empty")));
            }
            if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid(format!("{name} axis must be finite and strictly increasing")));
            }
            Ok(())
        };
        increasing("beta", &self.beta_values)?;
        increasing("gamma", &self.gamma_values)?;
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(Error::invalid("tail_fraction must lie in (0, 1]"));
        }
        self.base_config.validate()
    }

    pub fn cell_config(&self, bi: usize, gi: usize, replicate: usize) -> SimConfig {
        SimConfig {
            overfit_beta: self.beta_values[bi],
            entry_gamma: self.gamma_values[gi],
            seed: cell_seed(self.base_config.seed, bi, gi, replicate),
            ..self.base_config
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one replicate of one cell.
pub fn cell_seed(master: u64, beta_index: usize, gamma_index: usize, replicate: usize) -> u64 {
    [beta_index, gamma_index, replicate]
        .iter()
        .fold(splitmix64(master), |h, &x| splitmix64(h ^ (x as u64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub grid: SweepGrid,
    /// Indexed `[beta][gamma]`.
    pub mean_hhi: Vec<Vec<f64>>,
    pub stderr_hhi: Vec<Vec<f64>>,
}

/// Runs the sweep on the ambient rayon pool.
pub fn run_sweep(grid: &SweepGrid) -> Result<PhaseDiagram> {
    grid.validate()?;
    let (nb, ng, nr) = (grid.beta_values.len(), grid.gamma_values.len(), grid.replicates);
    let results: Vec<Result<f64>> = (0..nb * ng * nr)
        .into_par_iter()
        .map(|idx| {
            let (bi, rest) = (idx / (ng * nr), idx % (ng * nr));
            let (gi, r) = (rest / nr, rest % nr);
            let cfg = grid.cell_config(bi, gi, r);
            let traj = abm::run(&cfg)?;
            abm::steady_state_hhi(&traj, grid.tail_fraction)
        })
        .collect();

    let mut values = Vec::with_capacity(results.len());
    for (idx, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => values.push(v),
            Err(e) => {
                let (bi, gi) = (idx / (ng * nr), idx % (ng * nr) / nr);
                return Err(Error::SweepCell {
                    beta: grid.beta_values[bi],
                    gamma: grid.gamma_values[gi],
                    source: Box::new(e),
                });
            }
        }
    }

    let mut mean_hhi = vec![vec![0.0; ng]; nb];
    let mut stderr_hhi = vec![vec![0.0; ng]; nb];
    for (cell, reps) in values.chunks(nr).enumerate() {
        let (m, se) = mean_stderr(reps);
        mean_hhi[cell / ng][cell % ng] = m;
        stderr_hhi[cell / ng][cell % ng] = se;
    }
    Ok(PhaseDiagram {
        grid: grid.clone(),
        mean_hhi,
        stderr_hhi,
    })
}

/// Runs the sweep on a dedicated pool of `jobs` threads.
pub fn run_sweep_with_jobs(grid: &SweepGrid, jobs: usize) -> Result<PhaseDiagram> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_sweep(grid))
}

/// Mean and standard error (sample sd / sqrt(n); zero for n = 1).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TippingContour {
    pub level: f64,
    /// `(beta, gamma_star)` pairs, grouped by beta row in grid order.
    pub points: Vec<(f64, f64)>,
}

impl TippingContour {
    pub fn crossings_for(&self, beta: f64) -> Vec<f64> {
        self.points.iter().filter(|(b, _)| *b == beta).map(|(_, g)| *g).collect()
    }
}

/// Crossings of `level` along one row, interpolated linearly in
/// `(log10 gamma, hhi)`. A segment starting at gamma = 0 is interpolated
/// linearly in gamma.
pub fn row_crossings(gammas: &[f64], values: &[f64], level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let signs: Vec<f64> = values.iter().map(|v| v - level).collect();
    for j in 0..gammas.len() {
        if signs[j] == 0.0 {
            out.push(gammas[j]);
            continue;
        }
        if j + 1 < gammas.len() && signs[j + 1] != 0.0 && signs[j].signum() != signs[j + 1].signum() {
            let t = signs[j] / (signs[j] - signs[j + 1]);
            let (g0, g1) = (gammas[j], gammas[j + 1]);
            let g = if g0 > 0.0 {
                10f64.powf(g0.log10() + t * (g1.log10() - g0.log10()))
            } else {
                g0 + t * (g1 - g0)
            };
            out.push(g.clamp(g0, g1));
        }
    }
    out
}

pub fn tipping_contour(diagram: &PhaseDiagram, level: f64) -> TippingContour {
    let points = diagram
        .grid
        .beta_values
        .iter()
        .zip(&diagram.mean_hhi)
        .flat_map(|(&beta, row)| {
            row_crossings(&diagram.grid.gamma_values, row, level)
                .into_iter()
                .map(move |g| (beta, g))
        })
        .collect();
    TippingContour { level, points }
}

/// Ratio of the first crossing gamma on the last beta row to that on the
/// first beta row.
pub fn beta_sensitivity(diagram: &PhaseDiagram, level: f64) -> Result<f64> {
    let first_crossing = |row: usize| -> Result<f64> {
        row_crossings(&diagram.grid.gamma_values, &diagram.mean_hhi[row], level)
            .first()
            .copied()
            .ok_or_else(|| {
                Error::InsufficientData(format!(
                    "no HHI={level} crossing on the beta={} row",
                    diagram.grid.beta_values[row]
                ))
            })
    };
    let last = diagram.mean_hhi.len() - 1;
    Ok(first_crossing(last)? / first_crossing(0)?)
}

pub fn write_phase_csv<W: Write>(diagram: &PhaseDiagram, mut w: W) -> Result<()> {
    let io = |e| Error::io("<phase>", e);
    writeln!(w, "beta,gamma,mean_hhi,stderr_hhi,replicates").map_err(io)?;
    for (bi, beta) in diagram.grid.beta_values.iter().enumerate() {
        for (gi, gamma) in diagram.grid.gamma_values.iter().enumerate() {
            writeln!(
                w,
                "{beta},{gamma},{},{},{}",
                diagram.mean_hhi[bi][gi], diagram.stderr_hhi[bi][gi], diagram.grid.replicates
            )
            .map_err(io)?;
        }
    }
    Ok(())
}

pub fn write_contour_csv<W: Write>(contour: &TippingContour, mut w: W) -> Result<()> {
    let io = |e| Error::io("<contour>", e);
    writeln!(w, "beta,gamma_star").map_err(io)?;
    for (b, g) in &contour.points {
        writeln!(w, "{b},{g}").map_err(io)?;
    }
    Ok(())
}
