//! Scenario configuration: one flat `key = value` file per scenario.
//!
//! ```text
//! name = green
//! weight = green
//! intervals = 512
//! theta = constant
//! theta_value = 0.5
//! c_list = 1, 2, 4
//! ```

use crate::barrier::smoothstep;
use crate::error::{Error, Result};
use crate::grid::{Domain, ScalarField};
use ini::Ini;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaSpec {
    Constant {
        value: f64,
    },
    /// `peak` on `|x - center| <= inner`, falling to 0 at `outer`.
    Bump {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
        peak: f64,
    },
    /// `peak` on `inner + width <= |x - center| <= outer - width`, zero
    /// outside `[inner, outer]`.
    Annulus {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
        width: f64,
        peak: f64,
    },
    /// Zero on `x[axis] <= offset`, `peak` on `x[axis] >= offset + width`.
    Half {
        axis: usize,
        offset: f64,
        width: f64,
        peak: f64,
    },
}

impl ThetaSpec {
    pub fn validate(&self, real_dim: usize) -> Result<()> {
        let peak = match self {
            ThetaSpec::Constant { value } => *value,
            ThetaSpec::Bump { center, inner, outer, peak } => {
                check_center(center, real_dim)?;
                if !(*inner >= 0.0 && outer > inner) {
                    return Err(Error::Config(format!("bump radii {inner}, {outer}")));
                }
                *peak
            }
            ThetaSpec::Annulus { center, inner, outer, width, peak } => {
                check_center(center, real_dim)?;
                if !(*inner >= 0.0 && *width > 0.0 && inner + 2.0 * width <= *outer) {
                    return Err(Error::Config(format!("annulus {inner}..{outer} with width {width}")));
                }
                *peak
            }
            ThetaSpec::Half { axis, width, peak, .. } => {
                if *axis >= real_dim {
                    return Err(Error::Config(format!("theta axis {axis} beyond dimension {real_dim}")));
                }
                if !(*width > 0.0) {
                    return Err(Error::Config(format!("theta width {width}")));
                }
                *peak
            }
        };
        if !(0.0..=1.0).contains(&peak) {
            return Err(Error::Config(format!("theta value {peak} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn field(&self, d: &Arc<Domain>) -> Result<ScalarField> {
        self.validate(d.real_dim())?;
        let dd = d.clone();
        let spec = self.clone();
        let dim = d.real_dim();
        Ok(ScalarField::from_real_fn(d.clone(), move |i| {
            let x = dd.coords(i);
            let dist = |c: &[f64]| (0..dim).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>().sqrt();
            match &spec {
                ThetaSpec::Constant { value } => *value,
                ThetaSpec::Bump { center, inner, outer, peak } => {
                    peak * smoothstep((outer - dist(center)) / (outer - inner))
                }
                ThetaSpec::Annulus { center, inner, outer, width, peak } => {
                    let r = dist(center);
                    peak * smoothstep((r - inner) / width) * smoothstep((outer - r) / width)
                }
                ThetaSpec::Half { axis, offset, width, peak } => peak * smoothstep((x[*axis] - offset) / width),
            }
        }))
    }
}

fn check_center(c: &[f64], real_dim: usize) -> Result<()> {
    if c.len() != real_dim {
        return Err(Error::Config(format!("theta centre has {} coordinates, need {real_dim}", c.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub n: usize,
    pub radius: f64,
    pub intervals: usize,
    /// Complex codimension of the model submanifold.
    pub k: usize,
    pub m: usize,
    /// Polar floor of the envelope weight, in grid cells.
    pub floor_cells: f64,
    /// Polar floor of the weight given to the hypothesis checkers.
    pub check_floor_cells: f64,
    pub theta: ThetaSpec,
    /// Ladder step; defaults to 0.9 of the admissible bound.
    pub gamma: Option<f64>,
    pub a: Option<Vec<f64>>,
    pub ell: Option<usize>,
    /// Cutoff-chain buffer; defaults to 4 grid steps.
    pub buffer: Option<f64>,
    /// Coefficient of the negative term in the supersolution.
    pub super_a: f64,
    pub c_list: Vec<f64>,
    pub tol: Option<f64>,
    pub stab_tol: f64,
    pub max_sweeps: usize,
    pub omega: Option<f64>,
    pub theta_min: f64,
    pub mass_radii: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            n: 1,
            radius: 1.0,
            intervals: 128,
            k: 1,
            m: 1,
            floor_cells: crate::weights::DEFAULT_FLOOR_CELLS,
            check_floor_cells: crate::weights::DEFAULT_FLOOR_CELLS,
            theta: ThetaSpec::Constant { value: 1.0 },
            gamma: None,
            a: None,
            ell: None,
            buffer: None,
            super_a: 1.0,
            c_list: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            tol: None,
            stab_tol: 1e-3,
            max_sweeps: 200_000,
            omega: None,
            theta_min: 0.1,
            mass_radii: None,
            out: None,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {v:?}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: expected an integer, got {v:?}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_f64(key, s)).collect()
}

impl ScenarioConfig {
    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = ScenarioConfig::default();
        let mut theta_kind = String::from("constant");
        let mut value = 1.0;
        let mut center: Option<Vec<f64>> = None;
        let mut inner = 0.0;
        let mut outer = 0.5;
        let mut width = 0.1;
        let mut axis = 0;
        let mut offset = 0.0;
        let mut weight = String::from("model");
        for (section, props) in ini.iter() {
            if let Some(s) = section {
                return Err(Error::Config(format!("unexpected section [{s}]; the format is flat")));
            }
            for (key, v) in props.iter() {
                match key {
                    "name" => cfg.name = v.trim().to_string(),
                    "weight" => weight = v.trim().to_string(),
                    "n" => cfg.n = parse_usize(key, v)?,
                    "radius" => cfg.radius = parse_f64(key, v)?,
                    "intervals" => cfg.intervals = parse_usize(key, v)?,
                    "k" => cfg.k = parse_usize(key, v)?,
                    "m" => cfg.m = parse_usize(key, v)?,
                    "floor_cells" => cfg.floor_cells = parse_f64(key, v)?,
                    "check_floor_cells" => cfg.check_floor_cells = parse_f64(key, v)?,
                    "theta" => theta_kind = v.trim().to_string(),
                    "theta_value" => value = parse_f64(key, v)?,
                    "theta_center" => center = Some(parse_list(key, v)?),
                    "theta_inner" => inner = parse_f64(key, v)?,
                    "theta_outer" => outer = parse_f64(key, v)?,
                    "theta_width" => width = parse_f64(key, v)?,
                    "theta_axis" => axis = parse_usize(key, v)?,
                    "theta_offset" => offset = parse_f64(key, v)?,
                    "gamma" => cfg.gamma = Some(parse_f64(key, v)?),
                    "a" => cfg.a = Some(parse_list(key, v)?),
                    "ell" => cfg.ell = Some(parse_usize(key, v)?),
                    "buffer" => cfg.buffer = Some(parse_f64(key, v)?),
                    "super_a" => cfg.super_a = parse_f64(key, v)?,
                    "c_list" => cfg.c_list = parse_list(key, v)?,
                    "tol" => cfg.tol = Some(parse_f64(key, v)?),
                    "stab_tol" => cfg.stab_tol = parse_f64(key, v)?,
                    "max_sweeps" => cfg.max_sweeps = parse_usize(key, v)?,
                    "omega" => cfg.omega = Some(parse_f64(key, v)?),
                    "theta_min" => cfg.theta_min = parse_f64(key, v)?,
                    "mass_radii" => cfg.mass_radii = Some(parse_list(key, v)?),
                    "out" => cfg.out = Some(PathBuf::from(v.trim())),
                    other => return Err(Error::Config(format!("unknown key {other:?}"))),
                }
            }
        }
        match weight.as_str() {
            "model" => {}
            "green" => {
                cfg.n = 1;
                cfg.k = 1;
                cfg.m = 1;
            }
            other => return Err(Error::Config(format!("weight must be model or green, got {other:?}"))),
        }
        let center = center.unwrap_or_else(|| vec![0.0; 2 * cfg.n]);
        cfg.theta = match theta_kind.as_str() {
            "constant" => ThetaSpec::Constant { value },
            "bump" => ThetaSpec::Bump { center, inner, outer, peak: value },
            "annulus" => ThetaSpec::Annulus { center, inner, outer, width, peak: value },
            "half" => ThetaSpec::Half { axis, offset, width, peak: value },
            other => return Err(Error::Config(format!("unknown theta kind {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_ini_str(&text)
    }

    /// Command-line values take precedence over the file.
    pub fn apply_overrides(&mut self, grid: Option<usize>, tol: Option<f64>, out: Option<PathBuf>) -> Result<()> {
        if let Some(g) = grid {
            self.intervals = g;
        }
        if let Some(t) = tol {
            self.tol = Some(t);
        }
        if let Some(o) = out {
            self.out = Some(o);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.n) {
            return Err(Error::Config(format!("n = {} (supported: 1, 2)", self.n)));
        }
        if !(1..=self.n).contains(&self.k) {
            return Err(Error::Config(format!("k = {} in C^{}", self.k, self.n)));
        }
        if self.m == 0 || self.m > self.k {
            return Err(Error::Config(format!("need 1 <= m <= k, got m = {}, k = {}", self.m, self.k)));
        }
        if !(self.radius > 0.0) || self.intervals < 4 || self.intervals % 2 != 0 {
            return Err(Error::Config(format!(
                "radius {} / intervals {} (intervals must be even and >= 4)",
                self.radius, self.intervals
            )));
        }
        if !(self.floor_cells > 0.0 && self.check_floor_cells > 0.0) {
            return Err(Error::Config("floor cells must be positive".into()));
        }
        if self.c_list.len() < 3 || self.c_list.windows(2).any(|p| !(p[1] > p[0])) || self.c_list[0] < 0.0 {
            return Err(Error::Config(format!("c_list {:?} must be increasing, nonnegative, length >= 3", self.c_list)));
        }
        if !(self.super_a > 0.0) {
            return Err(Error::Config(format!("super_a = {}", self.super_a)));
        }
        if !(0.0..=1.0).contains(&self.theta_min) {
            return Err(Error::Config(format!("theta_min = {}", self.theta_min)));
        }
        self.theta.validate(2 * self.n)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / self.intervals as f64
    }
}
