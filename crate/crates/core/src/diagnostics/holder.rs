//! Oscillation decay over nested parabolic cylinders and the parabolic
//! Hölder seminorm with `|(Z, s)| = max(|Z|, sqrt|s|)`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cylinder_nodes, fmt, write_rows};
use crate::error::{Result, WiedError};
use crate::field::Field;
use crate::grid::{Cylinder, Domain, WeightedGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationRow {
    pub n: usize,
    /// Radius of the cylinder, `R_0 4^{-n+1}`.
    pub radius: f64,
    pub osc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    Ok,
    /// Fitted exponent outside `(0, 1]`.
    OutOfRange,
    /// Every oscillation vanished; nothing to fit.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    /// Exponent clipped to `(0, 1.5]`.
    pub alpha: f64,
    pub alpha_raw: f64,
    pub c: f64,
    /// Root mean square residual of the fit in natural-log scale.
    pub residual: f64,
    pub flag: FitFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub center: Cylinder,
    pub rows: Vec<OscillationRow>,
    pub fit: Option<HolderFit>,
    pub seminorm: Option<f64>,
}

impl HolderReport {
    /// Largest ratio `osc_{n+1} / osc_n` over rows with positive `osc_n`.
    pub fn max_ratio(&self) -> f64 {
        self.rows
            .windows(2)
            .filter(|w| w[0].osc > 0.0)
            .map(|w| w[1].osc / w[0].osc)
            .fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = self.rows.iter().map(|r| vec![r.n.to_string(), fmt(r.radius), fmt(r.osc)]);
        write_rows(path, &["n", "radius", "osc"], rows)
    }
}

/// `osc` over `Q_{R_0 4^{-n+1}}` for `n = 1..=levels`, where `R_0` is the
/// radius of `center`.
pub fn oscillation_table(grid: &WeightedGrid, field: &Field, center: &Cylinder, levels: usize) -> Result<HolderReport> {
    if levels == 0 || !(center.radius > 0.0) {
        return Err(WiedError::InvalidConfig("oscillation table needs a positive radius and depth".into()));
    }
    grid.check_domain(&Domain::Cylinder(*center), field.n_layers() > 1)?;
    let vals = field.values();
    let mut rows = Vec::with_capacity(levels);
    for n in 1..=levels {
        let cyl = center.scaled(0.25f64.powi(n as i32 - 1));
        let (lo, hi) = cylinder_nodes(grid, field, &cyl)?
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(vals[s.index]), hi.max(vals[s.index])));
        let osc = if hi >= lo { hi - lo } else { 0.0 };
        rows.push(OscillationRow { n, radius: cyl.radius, osc });
    }
    Ok(HolderReport { center: *center, rows, fit: None, seminorm: None })
}

/// Least-squares fit of `log osc_n = log C - alpha n log 4` over the rows
/// with positive oscillation.
pub fn fit_holder(rows: &[OscillationRow]) -> Result<HolderFit> {
    if !rows.is_empty() && rows.iter().all(|r| r.osc == 0.0) {
        return Ok(HolderFit { alpha: 0.0, alpha_raw: 0.0, c: 0.0, residual: 0.0, flag: FitFlag::Constant });
    }
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.osc > 0.0).map(|r| (r.n as f64 * 4f64.ln(), r.osc.ln())).collect();
    if pts.len() < 3 {
        return Err(WiedError::InvalidConfig(format!("Hölder fit needs 3 positive rows, got {}", pts.len())));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / m).sqrt();
    let alpha_raw = -slope;
    let flag = if alpha_raw > 0.0 && alpha_raw <= 1.0 { FitFlag::Ok } else { FitFlag::OutOfRange };
    Ok(HolderFit { alpha: alpha_raw.clamp(f64::MIN_POSITIVE, 1.5), alpha_raw, c: intercept.exp(), residual, flag })
}

const ALL_PAIRS_LIMIT: usize = 10_000;
const SAMPLED_PAIRS: usize = 1_000_000;
const PAIR_SEED: u64 = 0x5eed_4017;

/// `max |U(P) - U(Q)| / |P - Q|^alpha` over node pairs in the cylinder (all
/// pairs up to 10^4 nodes, otherwise 10^6 pairs stratified over the first
/// point with a fixed seed).
pub fn holder_seminorm(grid: &WeightedGrid, field: &Field, cyl: &Cylinder, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(WiedError::InvalidConfig(format!("Hölder exponent {alpha} must lie in (0, 1]")));
    }
    let nodes = cylinder_nodes(grid, field, cyl)?;
    if !(cyl.radius > 0.0) || nodes.len() < 2 {
        return Err(WiedError::InvalidConfig("degenerate cylinder for the Hölder seminorm".into()));
    }
    let vals = field.values();
    let pts: Vec<([f64; 3], f64, f64)> =
        nodes.iter().map(|s| ([s.x[0], s.x[1], s.y], s.t, vals[s.index])).collect();
    let quotient = |i: usize, j: usize| {
        let (p, q) = (&pts[i], &pts[j]);
        let z = ((p.0[0] - q.0[0]).powi(2) + (p.0[1] - q.0[1]).powi(2) + (p.0[2] - q.0[2]).powi(2)).sqrt();
        let dist = z.max((p.1 - q.1).abs().sqrt());
        if dist > 0.0 {
            (p.2 - q.2).abs() / dist.powf(alpha)
        } else {
            0.0
        }
    };
    let n = pts.len();
    let best = if n <= ALL_PAIRS_LIMIT {
        (0..n).into_par_iter().map(|i| (i + 1..n).map(|j| quotient(i, j)).fold(0.0, f64::max)).reduce(|| 0.0, f64::max)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SEED);
        let partners: Vec<usize> = (0..SAMPLED_PAIRS).map(|_| rng.gen_range(0..n)).collect();
        partners
            .par_iter()
            .enumerate()
            .map(|(k, &j)| quotient(k * n / SAMPLED_PAIRS, j))
            .reduce(|| 0.0, f64::max)
    };
    Ok(best)
}
