//! Combustion-type reaction terms `beta` and their potentials `Phi = 2 int beta`.
//!
//! Every model is supported in `[0, 1]`, nonnegative, and normalized so that
//! `int_0^1 beta = 1/2`; the `inert` model (`beta = 0`) is the one exception
//! and exists to run the linear problem through the same code paths.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WiedError};

/// Config-file description of a model: `{"kind": "...", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kind: "polynomial-bump".into(), params: Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Inert,
    PolynomialBump,
    Hat { peak: f64 },
    Table(Table),
}

/// Piecewise-linear `beta` through tabulated points on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
struct Table {
    v: Vec<f64>,
    beta: Vec<f64>,
    /// `Phi` at each table node.
    phi: Vec<f64>,
}

impl Table {
    fn segment(&self, v: f64) -> usize {
        match self.v.partition_point(|&x| x <= v) {
            0 => 0,
            k => (k - 1).min(self.v.len() - 2),
        }
    }

    fn beta(&self, v: f64) -> f64 {
        let k = self.segment(v);
        let s = (v - self.v[k]) / (self.v[k + 1] - self.v[k]);
        self.beta[k] + s * (self.beta[k + 1] - self.beta[k])
    }

    fn slope(&self, v: f64) -> f64 {
        let k = self.segment(v);
        (self.beta[k + 1] - self.beta[k]) / (self.v[k + 1] - self.v[k])
    }

    fn phi(&self, v: f64) -> f64 {
        let k = self.segment(v);
        let h = v - self.v[k];
        let b0 = self.beta[k];
        let slope = self.slope(v);
        self.phi[k] + 2.0 * (b0 * h + 0.5 * slope * h * h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombustionModel {
    kind: Kind,
    lipschitz: f64,
    sup: f64,
    rescale_factor: f64,
}

impl CombustionModel {
    /// `beta(v) = 3 v (1 - v)` on `[0, 1]`.
    pub fn polynomial_bump() -> Self {
        Self { kind: Kind::PolynomialBump, lipschitz: 3.0, sup: 0.75, rescale_factor: 1.0 }
    }

    /// Triangle of height 1 peaking at `peak`.
    pub fn hat(peak: f64) -> Result<Self> {
        if !(peak > 0.0 && peak < 1.0) {
            return Err(WiedError::InvalidModel(format!("hat peak {peak} must lie in (0, 1)")));
        }
        Ok(Self {
            kind: Kind::Hat { peak },
            lipschitz: (1.0 / peak).max(1.0 / (1.0 - peak)),
            sup: 1.0,
            rescale_factor: 1.0,
        })
    }

    /// `beta = 0`.
    pub fn inert() -> Self {
        Self { kind: Kind::Inert, lipschitz: 0.0, sup: 0.0, rescale_factor: 1.0 }
    }

    /// Builds a piecewise-linear model from `(v, beta)` samples and rescales it
    /// so that its integral is exactly `1/2`. Samples outside `[0, 1]` must
    /// vanish; the factor applied is available from [`Self::rescale_factor`].
    pub fn from_table(points: &[(f64, f64)]) -> Result<Self> {
        let bad = |msg: String| Err(WiedError::InvalidModel(msg));
        if points.len() < 2 {
            return bad("table needs at least two points".into());
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return bad(format!("table abscissae not strictly increasing at v={}", w[1].0));
            }
        }
        for &(v, b) in points {
            if !v.is_finite() || !b.is_finite() {
                return bad(format!("non-finite table entry at v={v}"));
            }
            if b < 0.0 {
                return bad(format!("negative value beta={b} at v={v}"));
            }
            if !(0.0..=1.0).contains(&v) && b != 0.0 {
                return bad(format!("support violation at v={v}"));
            }
        }
        // Restrict to [0, 1], inserting the endpoints by interpolation.
        let interp = |x: f64| -> f64 {
            let k = points.partition_point(|p| p.0 <= x);
            if k == 0 || k == points.len() {
                return 0.0;
            }
            let (p, q) = (points[k - 1], points[k]);
            p.1 + (x - p.0) / (q.0 - p.0) * (q.1 - p.1)
        };
        let mut v = vec![0.0];
        let mut beta = vec![interp(0.0)];
        for &(x, b) in points {
            if x > 0.0 && x < 1.0 {
                v.push(x);
                beta.push(b);
            }
        }
        v.push(1.0);
        beta.push(if points.iter().any(|p| p.0 == 1.0) {
            points.iter().find(|p| p.0 == 1.0).map_or(0.0, |p| p.1)
        } else {
            interp(1.0)
        });
        for (x, b) in [(0.0, beta[0]), (1.0, *beta.last().unwrap())] {
            if b > 1e-12 {
                return bad(format!("discontinuity at v={x}: beta={b} does not vanish at the support edge"));
            }
        }
        let integral: f64 = v
            .windows(2)
            .zip(beta.windows(2))
            .map(|(x, b)| 0.5 * (x[1] - x[0]) * (b[0] + b[1]))
            .sum();
        if !(integral > 0.0) {
            return bad("table integrates to zero".into());
        }
        let factor = 1.0 / (2.0 * integral);
        let beta: Vec<f64> = beta.iter().map(|b| b * factor).collect();
        let mut phi = vec![0.0; v.len()];
        for k in 1..v.len() {
            phi[k] = phi[k - 1] + (v[k] - v[k - 1]) * (beta[k - 1] + beta[k]);
        }
        let total = *phi.last().unwrap();
        for p in &mut phi {
            *p /= total;
        }
        let lipschitz = v
            .windows(2)
            .zip(beta.windows(2))
            .map(|(x, b)| ((b[1] - b[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max);
        let sup = beta.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            kind: Kind::Table(Table { v, beta, phi }),
            lipschitz,
            sup,
            rescale_factor: factor,
        })
    }

    /// Reads a `v,beta` CSV table.
    pub fn from_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            v: f64,
            beta: f64,
        }
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let mut points = Vec::new();
        for row in reader.deserialize() {
            let row: Row = row?;
            points.push((row.v, row.beta));
        }
        Self::from_table(&points)
    }

    /// Builds a model from its config description. Relative table paths are
    /// resolved against `base_dir`.
    pub fn from_config(cfg: &ModelConfig, base_dir: &Path) -> Result<Self> {
        let num = |key: &str| -> Result<Option<f64>> {
            match cfg.params.get(key) {
                None => Ok(None),
                Some(v) => v.as_f64().map(Some).ok_or_else(|| {
                    WiedError::InvalidModel(format!("parameter {key} of {} must be a number", cfg.kind))
                }),
            }
        };
        match cfg.kind.as_str() {
            "polynomial-bump" => Ok(Self::polynomial_bump()),
            "inert" => Ok(Self::inert()),
            "piecewise-linear-hat" => Self::hat(num("peak")?.unwrap_or(0.5)),
            "custom-table" => {
                if let Some(path) = cfg.params.get("path").and_then(|p| p.as_str()) {
                    return Self::from_csv(&base_dir.join(path));
                }
                let rows = cfg.params.get("table").and_then(|t| t.as_array()).ok_or_else(|| {
                    WiedError::InvalidModel("custom-table needs params.path or params.table".into())
                })?;
                let mut points = Vec::with_capacity(rows.len());
                for r in rows {
                    let pair = r.as_array().filter(|p| p.len() == 2);
                    let p = pair
                        .and_then(|p| Some((p[0].as_f64()?, p[1].as_f64()?)))
                        .ok_or_else(|| WiedError::InvalidModel(format!("bad table row {r}")))?;
                    points.push(p);
                }
                Self::from_table(&points)
            }
            other => Err(WiedError::InvalidModel(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::Inert => "inert",
            Kind::PolynomialBump => "polynomial-bump",
            Kind::Hat { .. } => "piecewise-linear-hat",
            Kind::Table(_) => "custom-table",
        }
    }

    pub fn is_inert(&self) -> bool {
        matches!(self.kind, Kind::Inert)
    }

    /// Lipschitz constant of `beta`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `sup |beta|`.
    pub fn sup_norm(&self) -> f64 {
        self.sup
    }

    /// Factor applied to a custom table to reach the normalization (1 otherwise).
    pub fn rescale_factor(&self) -> f64 {
        self.rescale_factor
    }

    pub fn beta(&self, v: f64) -> f64 {
        if !(v > 0.0 && v < 1.0) {
            return 0.0;
        }
        match &self.kind {
            Kind::Inert => 0.0,
            Kind::PolynomialBump => 3.0 * v * (1.0 - v),
            Kind::Hat { peak } => {
                if v <= *peak {
                    v / peak
                } else {
                    (1.0 - v) / (1.0 - peak)
                }
            }
            Kind::Table(t) => t.beta(v),
        }
    }

    /// Derivative of `beta` (one-sided at kinks, zero outside the support).
    pub fn beta_prime(&self, v: f64) -> f64 {
        if !(v > 0.0 && v < 1.0) {
            return 0.0;
        }
        match &self.kind {
            Kind::Inert => 0.0,
            Kind::PolynomialBump => 3.0 - 6.0 * v,
            Kind::Hat { peak } => {
                if v <= *peak {
                    1.0 / peak
                } else {
                    -1.0 / (1.0 - peak)
                }
            }
            Kind::Table(t) => t.slope(v),
        }
    }

    pub fn phi(&self, v: f64) -> f64 {
        if self.is_inert() || v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        match &self.kind {
            Kind::Inert => 0.0,
            Kind::PolynomialBump => v * v * (3.0 - 2.0 * v),
            Kind::Hat { peak } => {
                if v <= *peak {
                    v * v / peak
                } else {
                    1.0 - (1.0 - v) * (1.0 - v) / (1.0 - peak)
                }
            }
            Kind::Table(t) => t.phi(v),
        }
    }

    /// Checks the combustion-type conditions on a dense sample and returns the
    /// model (tables are already normalized at construction).
    pub fn validate(self) -> Result<Self> {
        let n = 20_000;
        for k in 0..=n {
            let v = -0.5 + 2.0 * k as f64 / n as f64;
            let b = self.beta(v);
            if !(b >= 0.0) {
                return Err(WiedError::InvalidModel(format!("negative value beta={b} at v={v}")));
            }
            if !(0.0..=1.0).contains(&v) && b != 0.0 {
                return Err(WiedError::InvalidModel(format!("support violation at v={v}")));
            }
        }
        if !self.is_inert() {
            let integral = 0.5 * self.phi(1.0);
            if (integral - 0.5).abs() > 1e-10 {
                return Err(WiedError::InvalidModel(format!("integral of beta is {integral}, not 1/2")));
            }
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for k in 1..n {
            s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn models() -> Vec<CombustionModel> {
        vec![
            CombustionModel::polynomial_bump(),
            CombustionModel::hat(0.5).unwrap(),
            CombustionModel::hat(0.2).unwrap(),
            CombustionModel::from_table(&[(0.0, 0.0), (0.3, 2.0), (0.7, 1.0), (1.0, 0.0)]).unwrap(),
        ]
    }

    #[test]
    fn bump_values() {
        let m = CombustionModel::polynomial_bump();
        assert_eq!(m.beta(0.5), 0.75);
        assert_eq!(m.beta(-0.3), 0.0);
        assert_eq!(m.beta(2.0), 0.0);
        assert!((m.phi(0.5) - 0.5).abs() < 1e-15);
        let quad = 2.0 * simpson(|v| m.beta(v), 0.0, 0.5, 200);
        assert!((quad - m.phi(0.5)).abs() < 1e-12);
    }

    #[test]
    fn normalization_and_potential() {
        for m in models() {
            assert_eq!(m.phi(1.0), 1.0);
            assert_eq!(m.phi(3.0), 1.0);
            assert_eq!(m.phi(-1.0), 0.0);
            let integral = simpson(|v| m.beta(v), 0.0, 1.0, 20_000);
            assert!((integral - 0.5).abs() < 1e-6, "{} {integral}", m.kind_name());
            for k in 1..100 {
                let v = k as f64 / 100.0 + 0.001;
                let h = 1e-6;
                let fd = (m.phi(v + h) - m.phi(v - h)) / (2.0 * h);
                assert!((fd - 2.0 * m.beta(v)).abs() < 1e-6, "{} at {v}", m.kind_name());
            }
        }
    }

    #[test]
    fn table_rescale_factor() {
        let n = 200;
        let pts: Vec<(f64, f64)> = (0..=n)
            .map(|k| {
                let v = k as f64 / n as f64;
                (v, v * (1.0 - v))
            })
            .collect();
        let trap: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
        let m = CombustionModel::from_table(&pts).unwrap();
        assert!((m.rescale_factor() - 1.0 / (2.0 * trap)).abs() < 1e-12);
        assert!((m.rescale_factor() - 3.0).abs() < 1e-4);
        assert_eq!(m.phi(1.0), 1.0);
    }

    #[test]
    fn table_rejections() {
        let err = CombustionModel::from_table(&[(0.0, 0.0), (0.5, 1.0), (1.0, 0.0), (1.1, 0.2)])
            .unwrap_err()
            .to_string();
        assert!(err.contains("support violation at v=1.1"), "{err}");
        let err = CombustionModel::from_table(&[(0.0, 0.0), (0.5, -1.0), (1.0, 0.0)]).unwrap_err().to_string();
        assert!(err.contains("at v=0.5"), "{err}");
    }

    #[test]
    fn hat_validates_unchanged() {
        let m = CombustionModel::hat(0.4).unwrap();
        assert_eq!(m.clone().validate().unwrap(), m);
        assert_eq!(m.lipschitz(), 1.0 / 0.4);
    }

    #[test]
    fn config_parsing() {
        let cfg: ModelConfig = serde_json::from_str(r#"{"kind":"piecewise-linear-hat","params":{"peak":0.25}}"#).unwrap();
        let m = CombustionModel::from_config(&cfg, Path::new(".")).unwrap();
        assert_eq!(m.beta(0.25), 1.0);
        let cfg: ModelConfig = serde_json::from_str(r#"{"kind":"custom-table","params":{"table":[[0,0],[0.5,1],[1,0]]}}"#).unwrap();
        let m = CombustionModel::from_config(&cfg, Path::new(".")).unwrap();
        assert_eq!(m.beta(0.5), 1.0);
        let cfg = ModelConfig { kind: "arrhenius".into(), params: Default::default() };
        assert!(CombustionModel::from_config(&cfg, Path::new(".")).is_err());
    }

    #[test]
    fn csv_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("beta.csv");
        std::fs::write(&p, "v,beta\n0,0\n0.5,2\n1,0\n").unwrap();
        let m = CombustionModel::from_csv(&p).unwrap();
        assert!((m.rescale_factor() - 0.5).abs() < 1e-15);
        assert_eq!(m.beta(0.5), 1.0);
    }

    proptest! {
        #[test]
        fn beta_nonnegative_and_phi_monotone(v in -2.0f64..3.0, dv in 0.0f64..0.5) {
            for m in models() {
                prop_assert!(m.beta(v) >= 0.0);
                prop_assert!(m.phi(v + dv) >= m.phi(v) - 1e-15);
                prop_assert!(m.beta(v).abs() <= m.sup_norm() + 1e-15);
            }
        }

        #[test]
        fn beta_lipschitz(v in -0.5f64..1.5, w in -0.5f64..1.5) {
            for m in models() {
                prop_assert!((m.beta(v) - m.beta(w)).abs() <= m.lipschitz() * (v - w).abs() + 1e-12);
            }
        }
    }
}
