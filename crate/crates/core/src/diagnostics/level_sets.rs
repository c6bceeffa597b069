//! Level-set measures and the isoperimetric quantities of the sets
//! `A = {U >= 1/2}`, `C = {U <= 0}`, `D = {0 < U < 1/2}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WiedError};
use crate::field::Field;
use crate::grid::{Cylinder, Domain, WeightedGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSetReport {
    /// `|{U >= 1/2}|_a`
    pub upper: f64,
    /// `|{U <= 0}|_a`
    pub lower: f64,
    /// `|{0 < U < 1/2}|_a`
    pub middle: f64,
    /// `|cylinder|_a`
    pub total: f64,
}

impl LevelSetReport {
    pub fn partition_defect(&self) -> f64 {
        (self.upper + self.lower + self.middle - self.total).abs()
    }
}

/// Subcells per axis when integrating level sets of the interpolant.
const SUBCELLS_SLICE: usize = 8;
const SUBCELLS_SPACE_TIME: usize = 3;

/// Measures of the three level sets of the multilinear interpolant over the
/// cells whose centers lie in the cylinder.
pub fn level_set_measures(grid: &WeightedGrid, field: &Field, cyl: &Cylinder) -> Result<LevelSetReport> {
    let dom = Domain::Cylinder(*cyl);
    let sub = if field.n_layers() == 1 { SUBCELLS_SLICE } else { SUBCELLS_SPACE_TIME };
    let measure = |pred: &dyn Fn(f64) -> bool| grid.level_measure(field, &dom, sub, pred);
    Ok(LevelSetReport {
        upper: measure(&|v| v >= 0.5)?,
        lower: measure(&|v| v <= 0.0)?,
        middle: measure(&|v| v > 0.0 && v < 0.5)?,
        total: measure(&|_| true)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoperimetricReport {
    pub p: f64,
    /// `|A|_a |C|_a`
    pub lhs: f64,
    /// `|D|_a^{(2-p)/(2p)}`
    pub rhs: f64,
    /// `int_B |y|^a |grad U|^2` over the reflected ball.
    pub gradient_energy: f64,
    /// `lhs / rhs`; zero when `lhs = 0`, infinite when only `rhs` vanishes.
    pub ratio: f64,
}

/// Isoperimetric ingredients of a spatial slice over the reflected ball
/// `ball` (its time coordinate is ignored).
pub fn isoperimetric_check(grid: &WeightedGrid, slice: &Field, ball: &Cylinder, p: f64) -> Result<IsoperimetricReport> {
    if !(p > 1.0 && p < 2.0) {
        return Err(WiedError::InvalidConfig(format!("isoperimetric exponent p = {p} must lie in (1, 2)")));
    }
    if slice.n_layers() != 1 {
        return Err(WiedError::InvalidConfig("isoperimetric check expects a spatial slice".into()));
    }
    let ball = Cylinder { center_t: 0.0, ..*ball };
    let sets = level_set_measures(grid, slice, &ball)?;
    let lhs = sets.upper * sets.lower;
    let rhs = sets.middle.powf((2.0 - p) / (2.0 * p));
    let ratio = if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    };
    Ok(IsoperimetricReport { p, lhs, rhs, gradient_energy: ball_gradient_energy(grid, slice.values(), &ball), ratio })
}

pub(crate) fn ball_gradient_energy(grid: &WeightedGrid, u: &[f64], ball: &Cylinder) -> f64 {
    let d = grid.dim();
    let coords = |s: usize| {
        let (ix, j) = grid.split_spatial(s);
        (grid.x_coords(ix), grid.y_nodes()[j])
    };
    grid.edges()
        .iter()
        .map(|e| {
            let ((xa, ya), (xb, yb)) = (coords(e.a), coords(e.b));
            let mid = [0.5 * (xa[0] + xb[0]), 0.5 * (xa[1] + xb[1])];
            let m = ball.multiplicity(d, mid, 0.5 * (ya + yb), 0.0);
            m * e.coef * (u[e.a] - u[e.b]).powi(2)
        })
        .sum()
}

/// Largest isoperimetric ratio over clamped ramps `clamp(k (s - c), 0, 1/2)`
/// along `x_1` and `y`, with the slope chosen so that the gradient energy in
/// the ball equals `energy`.
pub fn calibrate_isoperimetric(grid: &WeightedGrid, ball: &Cylinder, p: f64, energy: f64) -> Result<f64> {
    if !(energy > 0.0) {
        return Err(WiedError::InvalidConfig(format!("calibration energy {energy} must be positive")));
    }
    let r = ball.radius;
    let mut best: f64 = 0.0;
    for axis in 0..2 {
        let (lo, hi) = if axis == 0 {
            (ball.center_x[0] - r, ball.center_x[0] + r)
        } else {
            ((ball.center_y - r).max(0.0), ball.center_y + r)
        };
        for i in 1..10 {
            let c = lo + (hi - lo) * i as f64 / 10.0;
            let ramp = |k: f64| {
                Field::spatial_from_fn(grid, |x, y| {
                    let s = if axis == 0 { x[0] } else { y };
                    (k * (s - c)).clamp(0.0, 0.5)
                })
            };
            let e_of = |k: f64| ball_gradient_energy(grid, ramp(k).values(), ball);
            let (mut k_lo, mut k_hi) = (1e-6, 1.0);
            while e_of(k_hi) < energy && k_hi < 1e8 {
                k_lo = k_hi;
                k_hi *= 2.0;
            }
            for _ in 0..60 {
                let mid = 0.5 * (k_lo + k_hi);
                if e_of(mid) < energy {
                    k_lo = mid;
                } else {
                    k_hi = mid;
                }
            }
            let rep = isoperimetric_check(grid, &ramp(k_lo), ball, p)?;
            if rep.ratio.is_finite() {
                best = best.max(rep.ratio);
            }
        }
    }
    Ok(best)
}

/// Smooth random slice `1/4 + s sum_k c_k phi_k` built from low cosine modes
/// of the grid box, with `s` fixed on the grid it was drawn on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothSlice {
    pub half_width: f64,
    pub height: f64,
    /// `(k_1, k_2, k_y, coefficient)`
    pub modes: Vec<(u32, u32, u32, f64)>,
    pub scale: f64,
}

const MAX_MODE: u32 = 3;

impl SmoothSlice {
    fn raw(&self, x: [f64; 2], y: f64, d: usize) -> f64 {
        let l = self.half_width;
        let c = |k: u32, s: f64, len: f64| (std::f64::consts::PI * k as f64 * s / len).cos();
        self.modes
            .iter()
            .map(|&(k1, k2, ky, a)| {
                let mut v = a * c(k1, x[0] + l, 2.0 * l) * c(ky, y, self.height);
                if d == 2 {
                    v *= c(k2, x[1] + l, 2.0 * l);
                }
                v
            })
            .sum()
    }

    pub fn sample(&self, grid: &WeightedGrid) -> Field {
        let d = grid.dim();
        Field::spatial_from_fn(grid, |x, y| 0.25 + self.scale * self.raw(x, y, d))
    }
}

/// Draws a [`SmoothSlice`] whose gradient energy over `ball` on `grid` equals `energy`.
pub fn random_smooth_slice(grid: &WeightedGrid, ball: &Cylinder, seed: u64, energy: f64) -> Result<SmoothSlice> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k2_max = if grid.dim() == 2 { MAX_MODE } else { 0 };
    let mut modes = Vec::new();
    for k1 in 0..=MAX_MODE {
        for k2 in 0..=k2_max {
            for ky in 0..=MAX_MODE {
                if k1 + k2 + ky == 0 {
                    continue;
                }
                let a: f64 = rng.gen_range(-1.0..1.0);
                modes.push((k1, k2, ky, a / (1 + k1 * k1 + k2 * k2 + ky * ky) as f64));
            }
        }
    }
    let spec = grid.spec();
    let mut slice = SmoothSlice { half_width: spec.half_width, height: spec.height, modes, scale: 1.0 };
    let raw = slice.sample(grid).map(|v| v - 0.25);
    let e = ball_gradient_energy(grid, raw.values(), ball);
    if !(e > 0.0) {
        return Err(WiedError::InvalidConfig("random slice has no gradient energy".into()));
    }
    slice.scale = (energy / e).sqrt();
    Ok(slice)
}
