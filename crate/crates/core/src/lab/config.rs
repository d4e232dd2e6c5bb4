//! Flat JSON experiment configuration and initial perturbations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{suggest_dt, EvolveConfig};
use crate::modulation::{check_speed_conditions, PairParams};
use crate::numerics::{make_grid, norm, random_smooth_field, Field, GridSpec, NormKind, XorShift64Star, C64};
use crate::waves::{profile_value, resolved_grid, sample_wave, WaveParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Single,
    Pair,
    SpectralAudit,
    Monotone,
    SolitonTable,
}

/// Shape of the initial perturbation; every shape is normalized to unit `H¹` norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationShape {
    /// `(1 + i/2) e^{−(x − x_k − 1)²}` at each wave.
    GaussianBump,
    /// Each wave translated by two length units.
    ShiftedSoliton,
    /// Random smooth field at each wave, drawn from `seed`.
    RandomSmooth,
}

/// Configuration of one experiment. Keys are flat; absent keys take the preset of `kind`.
///
/// Grid: `half_length` and `n_points` together fix the grid; otherwise a grid resolving the
/// configured waves over the run is chosen. `dt` defaults to `suggest_dt`, and
/// `observer_stride` defaults to one frame per `0.05` time units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub half_length: Option<f64>,
    pub n_points: Option<usize>,
    pub omega1: f64,
    pub c1: f64,
    pub x1: f64,
    pub gamma1: f64,
    pub omega2: f64,
    pub c2: f64,
    pub x2: f64,
    pub gamma2: f64,
    pub delta: f64,
    pub perturbation: PerturbationShape,
    pub seed: u64,
    pub t_final: f64,
    pub dt: Option<f64>,
    pub observer_stride: Option<usize>,
    pub dealias: bool,
    pub out_dir: PathBuf,
    /// Also run at `δ/2` and report the drift ratio (single runs).
    pub scaling_check: bool,
    /// Audit points `(ω, ρ·2√ω)` for spectral audits and soliton tables.
    pub audit_omegas: Vec<f64>,
    pub audit_rhos: Vec<f64>,
    /// Explicit `(ω, c)` audit points; when nonempty they replace the product set.
    pub audit_points: Vec<[f64; 2]>,
    pub audit_min_points: usize,
    /// Frozen constants from an earlier run; fitted from this run when absent.
    pub monotone_constant: Option<f64>,
    pub drift_constant: Option<f64>,
    pub window_constant: Option<f64>,
    pub snapshots: bool,
    pub force: bool,
}

impl ExperimentConfig {
    pub fn preset(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            kind,
            half_length: None,
            n_points: None,
            omega1: 1.0,
            c1: 0.0,
            x1: 0.0,
            gamma1: 0.0,
            omega2: 3.0,
            c2: 3.0,
            x2: 0.0,
            gamma2: 1.0,
            delta: 1e-2,
            perturbation: PerturbationShape::GaussianBump,
            seed: 1,
            t_final: 20.0,
            dt: None,
            observer_stride: None,
            dealias: true,
            out_dir: PathBuf::from("out"),
            scaling_check: true,
            audit_omegas: vec![0.5, 1.0, 2.0],
            audit_rhos: vec![-0.9, -0.5, 0.0, 0.5, 0.9],
            audit_points: Vec::new(),
            audit_min_points: 1024,
            monotone_constant: None,
            drift_constant: None,
            window_constant: None,
            snapshots: false,
            force: false,
        };
        match kind {
            ExperimentKind::Single | ExperimentKind::SpectralAudit | ExperimentKind::SolitonTable => base,
            ExperimentKind::Pair | ExperimentKind::Monotone => ExperimentConfig {
                half_length: Some(60.0),
                n_points: Some(4096),
                c1: 1.0,
                x1: -30.0,
                x2: 0.0,
                t_final: 10.0,
                dt: Some(6.25e-5),
                scaling_check: false,
                ..base
            },
        }
    }

    /// Preset of `kind` overlaid with the keys of a JSON object.
    pub fn from_json(kind: ExperimentKind, text: &str) -> Result<Self> {
        let overlay: serde_json::Value = serde_json::from_str(text)?;
        let serde_json::Value::Object(keys) = overlay else {
            return Err(Error::InvalidConfig("config must be a JSON object".into()));
        };
        let mut merged = serde_json::to_value(Self::preset(kind))?;
        if let serde_json::Value::Object(base) = &mut merged {
            base.extend(keys);
        }
        let cfg: Self = serde_json::from_value(merged)?;
        Ok(cfg)
    }

    pub fn from_file(kind: ExperimentKind, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_json(kind, &text)
    }

    pub fn wave1(&self) -> WaveParams {
        WaveParams::new(self.omega1, self.c1, self.x1, self.gamma1)
    }

    pub fn wave2(&self) -> WaveParams {
        WaveParams::new(self.omega2, self.c2, self.x2, self.gamma2)
    }

    pub fn pair(&self) -> Result<PairParams> {
        PairParams::new(self.wave1(), self.wave2())
    }

    /// Waves of the run: one for single runs, two for pair and monotone runs.
    pub fn waves(&self) -> Vec<WaveParams> {
        match self.kind {
            ExperimentKind::Pair | ExperimentKind::Monotone => vec![self.wave1(), self.wave2()],
            _ => vec![self.wave1()],
        }
    }

    /// `(ω, c)` points of spectral audits and soliton tables.
    pub fn audit_set(&self) -> Vec<(f64, f64)> {
        if !self.audit_points.is_empty() {
            return self.audit_points.iter().map(|p| (p[0], p[1])).collect();
        }
        let mut out = Vec::new();
        for &w in &self.audit_omegas {
            for &r in &self.audit_rhos {
                out.push((w, r * 2.0 * w.sqrt()));
            }
        }
        out
    }

    /// Checks ranges, and the speed conditions for pair runs unless `force` is set.
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::InvalidConfig(format!("delta must be non-negative, got {}", self.delta)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::InvalidConfig(format!("t_final must be non-negative, got {}", self.t_final)));
        }
        if self.half_length.is_some() != self.n_points.is_some() {
            return Err(Error::InvalidConfig("half_length and n_points must be given together".into()));
        }
        if matches!(self.kind, ExperimentKind::Pair | ExperimentKind::Monotone) && !self.force {
            let report = check_speed_conditions(&self.pair()?)?;
            if !report.all_pass() {
                return Err(Error::SpeedConditions(format!(
                    "subcritical {:?}, forward {}, relative {}",
                    report.subcritical, report.forward, report.relative
                )));
            }
        }
        Ok(())
    }

    /// The configured grid, or one resolving every wave over its path up to `t_final`.
    pub fn grid(&self) -> Result<GridSpec> {
        if let (Some(l), Some(n)) = (self.half_length, self.n_points) {
            return make_grid(l, n);
        }
        let mut best: Option<GridSpec> = None;
        for p in self.waves() {
            let reach = p.x0.abs().max((p.x0 + p.c * self.t_final).abs());
            let g = resolved_grid(p.omega, p.c, reach, 256)?;
            best = Some(match best {
                Some(b) => make_grid(b.half_length().max(g.half_length()), b.n_points().max(g.n_points()))?,
                None => g,
            });
        }
        best.ok_or_else(|| Error::InvalidConfig("no waves configured".into()))
    }

    /// Time stepping for the run on `grid`.
    pub fn evolve_config(&self, grid: &GridSpec) -> EvolveConfig {
        let umax = self.waves().iter().map(|p| profile_value(p.omega, p.c, 0.0)).fold(0.0, f64::max);
        let dt = self.dt.unwrap_or_else(|| suggest_dt(grid, umax));
        let stride = self.observer_stride.unwrap_or_else(|| ((0.05 / dt).round() as usize).max(1));
        EvolveConfig { dt, t_final: self.t_final, dealias: self.dealias, observer_stride: stride }
    }
}

/// Unit-`H¹` perturbation of the given shape built around each wave.
pub fn perturbation(shape: PerturbationShape, waves: &[WaveParams], grid: &GridSpec, seed: u64) -> Result<Field> {
    let mut total = Field::zeros(*grid);
    let mut rng = XorShift64Star::new(seed);
    for p in waves {
        let part = match shape {
            PerturbationShape::GaussianBump => {
                Field::from_fn(*grid, |x| C64::new(1.0, 0.5) * (-(x - p.x0 - 1.0).powi(2)).exp())
            }
            PerturbationShape::ShiftedSoliton => sample_wave(&WaveParams::new(p.omega, p.c, p.x0 + 2.0, p.gamma()), grid, 0.0)?,
            PerturbationShape::RandomSmooth => random_smooth_field(*grid, &mut rng, p.x0, 3.0, 4.0),
        };
        total = &total + &part;
    }
    let size = norm(&total, NormKind::H1);
    if size == 0.0 {
        return Err(Error::InvalidConfig("perturbation vanishes on this grid".into()));
    }
    Ok(total.scale_re(1.0 / size))
}

/// `Σ R_k + δ·perturbation` on `grid`.
pub fn initial_field(cfg: &ExperimentConfig, grid: &GridSpec) -> Result<Field> {
    let waves = cfg.waves();
    let mut u = Field::zeros(*grid);
    for p in &waves {
        u = &u + &sample_wave(p, grid, 0.0)?;
    }
    if cfg.delta > 0.0 {
        u = &u + &perturbation(cfg.perturbation, &waves, grid, cfg.seed)?.scale_re(cfg.delta);
    }
    Ok(u)
}
