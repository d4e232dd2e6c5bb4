//! Experiment drivers: perturbed single and pair runs, spectral audits, soliton tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{evolve_with, EvolveConfig, Observer};
use crate::functionals::{conserved, AuditRow, ConservedTriple};
use crate::lab::config::{initial_field, ExperimentConfig};
use crate::modulation::{check_speed_conditions, orbit_distance, ModulationTrack, PairParams, SpeedReport, Tracker};
use crate::monotone::{local_mass_window, localized_functionals, LineVariant, LocalizedValues, MonotoneLineSpec, MonotoneSeries};
use crate::numerics::{norm, Field, GridSpec, NormKind};
use crate::spectral::SpectralReport;
use crate::waves::{resolved_grid_to, sample_wave, WaveParams};

/// Distance to the orbit of one fixed wave at every frame.
struct OrbitObserver {
    omega: f64,
    c: f64,
    distances: Vec<f64>,
}

impl Observer for OrbitObserver {
    fn observe(&mut self, _t: f64, u: &Field) -> Result<()> {
        self.distances.push(orbit_distance(u, self.omega, self.c)?);
        Ok(())
    }
}

/// One perturbed single-wave run.
#[derive(Clone, Debug)]
pub struct SingleRun {
    pub grid: GridSpec,
    pub delta: f64,
    pub evolve: EvolveConfig,
    pub reference: WaveParams,
    pub track: ModulationTrack,
    pub times: Vec<f64>,
    pub conserved: Vec<ConservedTriple>,
    /// Distance to the orbit of the unperturbed wave.
    pub orbit_distance: Vec<f64>,
    pub initial: Field,
    pub final_state: Field,
}

impl SingleRun {
    pub fn sup_distance(&self) -> f64 {
        self.orbit_distance.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// `max_t (|ω(t) − ω(0)| + |c(t) − c(0)|)`.
    pub fn param_drift(&self) -> f64 {
        self.track.param_drift(0)
    }

    pub fn conserved_drift(&self) -> ConservedTriple {
        max_drift(&self.conserved)
    }

    /// Columns `t, M, P, E, orbit_distance`.
    pub fn trajectory_rows(&self) -> Vec<Vec<f64>> {
        self.times
            .iter()
            .zip(&self.conserved)
            .zip(&self.orbit_distance)
            .map(|((t, q), d)| vec![*t, q.mass, q.momentum, q.energy, *d])
            .collect()
    }
}

pub const SINGLE_TRAJECTORY_HEADER: [&str; 5] = ["t", "M", "P", "E", "orbit_distance"];

fn max_drift(series: &[ConservedTriple]) -> ConservedTriple {
    let q0 = series[0];
    let mut d = ConservedTriple { mass: 0.0, momentum: 0.0, energy: 0.0 };
    for q in series {
        d.mass = d.mass.max((q.mass - q0.mass).abs());
        d.momentum = d.momentum.max((q.momentum - q0.momentum).abs());
        d.energy = d.energy.max((q.energy - q0.energy).abs());
    }
    d
}

/// Evolves `R + δ·perturbation` and tracks the modulation parameters.
pub fn simulate_single(cfg: &ExperimentConfig) -> Result<SingleRun> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let reference = cfg.wave1();
    let u0 = initial_field(cfg, &grid)?;
    let ec = cfg.evolve_config(&grid);
    let mut tracker = Tracker::new(&[reference])?;
    let mut orbit = OrbitObserver { omega: reference.omega, c: reference.c, distances: Vec::new() };
    let traj = evolve_with(&u0, &ec, &mut [&mut tracker, &mut orbit], false)?;
    Ok(SingleRun {
        grid,
        delta: cfg.delta,
        evolve: ec,
        reference,
        track: tracker.into_track(),
        times: traj.times,
        conserved: traj.conserved,
        orbit_distance: orbit.distances,
        initial: u0,
        final_state: traj.final_state,
    })
}

/// Per-frame records of a pair run beyond the modulation track.
struct PairObserver {
    tracker: Tracker,
    reference: PairParams,
    pp0: Option<PairParams>,
    family_distance: Vec<f64>,
    localized: Vec<LocalizedValues>,
    local_mass: Vec<f64>,
    soliton_mp: Vec<[f64; 4]>,
}

impl Observer for PairObserver {
    fn observe(&mut self, t: f64, u: &Field) -> Result<()> {
        self.tracker.observe(t, u)?;
        let Some(state) = self.tracker.latest() else {
            return Err(Error::InvalidConfig("tracker recorded no fit".into()));
        };
        let fitted = [state.waves[0], state.waves[1]];
        let pp0 = *self.pp0.get_or_insert(PairParams { p1: fitted[0], p2: fitted[1] });
        let mut diff = u.clone();
        let mut mp = [0.0; 4];
        for (k, (w, r)) in fitted.iter().zip(self.reference.waves()).enumerate() {
            let family = WaveParams::new(r.omega, r.c, w.x0, w.gamma());
            diff = &diff - &sample_wave(&family, u.grid(), 0.0)?;
            let q = conserved(&sample_wave(w, u.grid(), 0.0)?);
            mp[2 * k] = q.mass;
            mp[2 * k + 1] = q.momentum;
        }
        self.family_distance.push(norm(&diff, NormKind::H1));
        self.soliton_mp.push(mp);
        self.localized.push(localized_functionals(t, u, &pp0)?);
        self.local_mass.push(local_mass_window(t, u, &MonotoneLineSpec::new(&pp0, LineVariant::Center)?));
        Ok(())
    }
}

/// One perturbed two-wave run with every monitored quantity.
#[derive(Clone, Debug)]
pub struct PairRun {
    pub grid: GridSpec,
    pub delta: f64,
    pub evolve: EvolveConfig,
    /// Configured, unperturbed pair.
    pub reference: PairParams,
    /// Pair fitted at `t = 0`; it freezes the monotone weights.
    pub pp0: PairParams,
    pub speeds: SpeedReport,
    pub track: ModulationTrack,
    pub times: Vec<f64>,
    pub conserved: Vec<ConservedTriple>,
    /// `‖u − Σ φ_{ω_k⁰,c_k⁰}(· − x_k(t)) e^{iγ_k(t)}‖_{H¹}`.
    pub family_distance: Vec<f64>,
    pub localized: Vec<LocalizedValues>,
    /// Mass in the window `|x − x̄⁰ − σt| < √(t+a)`.
    pub local_mass: Vec<f64>,
    /// `[M(R₁), P(R₁), M(R₂), P(R₂)]` of the fitted waves.
    pub soliton_mp: Vec<[f64; 4]>,
}

/// Evolves `R₁ + R₂ + δ·perturbation`, tracking the pair and the localized functionals.
pub fn simulate_pair(cfg: &ExperimentConfig) -> Result<PairRun> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let reference = cfg.pair()?;
    let speeds = check_speed_conditions(&reference)?;
    let u0 = initial_field(cfg, &grid)?;
    let ec = cfg.evolve_config(&grid);
    let mut obs = PairObserver {
        tracker: Tracker::new(&reference.waves())?,
        reference,
        pp0: None,
        family_distance: Vec::new(),
        localized: Vec::new(),
        local_mass: Vec::new(),
        soliton_mp: Vec::new(),
    };
    let traj = evolve_with(&u0, &ec, &mut [&mut obs], false)?;
    let pp0 = obs.pp0.ok_or_else(|| Error::InvalidConfig("pair run recorded no frames".into()))?;
    Ok(PairRun {
        grid,
        delta: cfg.delta,
        evolve: ec,
        reference,
        pp0,
        speeds,
        track: obs.tracker.into_track(),
        times: traj.times,
        conserved: traj.conserved,
        family_distance: obs.family_distance,
        localized: obs.localized,
        local_mass: obs.local_mass,
        soliton_mp: obs.soliton_mp,
    })
}

impl PairRun {
    pub fn separation(&self) -> f64 {
        self.reference.separation()
    }

    pub fn theta0(&self) -> f64 {
        self.speeds.thresholds.theta0
    }

    pub fn sup_family_distance(&self) -> f64 {
        self.family_distance.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// `10 (δ + e^{−θ₀L/2})`.
    pub fn distance_bound(&self) -> f64 {
        10.0 * (self.delta + (-self.theta0() * self.separation() / 2.0).exp())
    }

    /// Least-squares slope of `x₂ − x₁` over frames with `t ≥ t_from`.
    pub fn separation_slope(&self, t_from: f64) -> f64 {
        let sep = self.track.separation();
        let pts: Vec<(f64, f64)> =
            self.track.times.iter().zip(&sep).filter(|(t, _)| **t >= t_from).map(|(t, s)| (*t, *s)).collect();
        let n = pts.len() as f64;
        if pts.len() < 2 {
            return f64::NAN;
        }
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ms = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ms)).sum();
        let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        cov / var
    }

    /// `sup_t ‖ε(t)‖²_{H¹}`.
    pub fn eps_sq_sup(&self) -> f64 {
        self.track.eps_h1.iter().fold(0.0, |a, &e| a.max(e * e))
    }

    /// `max_{k,t} |M(R_k(t)) − M(R_k(0))|` and the same for `P`.
    pub fn mp_drift(&self) -> (f64, f64) {
        let first = self.soliton_mp[0];
        let mut out = (0.0f64, 0.0f64);
        for row in &self.soliton_mp {
            for k in 0..2 {
                out.0 = out.0.max((row[2 * k] - first[2 * k]).abs());
                out.1 = out.1.max((row[2 * k + 1] - first[2 * k + 1]).abs());
            }
        }
        out
    }

    /// `sup‖ε‖² + e^{−θ₀L}`.
    pub fn drift_driver(&self) -> f64 {
        self.eps_sq_sup() + (-self.theta0() * self.separation()).exp()
    }

    /// `1.5 · max(M drift, P drift) / driver`.
    pub fn fitted_drift_constant(&self) -> f64 {
        let (m, p) = self.mp_drift();
        1.5 * m.max(p) / self.drift_driver()
    }

    pub fn drift_holds(&self, k: f64) -> bool {
        let (m, p) = self.mp_drift();
        m.max(p) <= k * self.drift_driver()
    }

    pub fn monotone_series(&self) -> Result<MonotoneSeries> {
        MonotoneSeries::new(&self.times, &self.localized, &self.track.eps_l2, &self.pp0)
    }

    /// `max_t |(𝔈(t) − 𝔈(0)) − (𝔔(t) − 𝔔(0))|`.
    pub fn exchange_error(&self) -> f64 {
        let v0 = self.localized[0];
        self.localized.iter().map(|v| ((v.e_loc - v0.e_loc) - (v.q - v0.q)).abs()).fold(0.0, f64::max)
    }

    /// `e^{−θ₂(L + θ₂t)}` per frame.
    fn window_tail(&self) -> Vec<f64> {
        let th2 = self.speeds.thresholds.theta2;
        let l = self.separation();
        self.times.iter().map(|t| (-th2 * (l + th2 * t)).exp()).collect()
    }

    /// `1.5 · max(0, max_t (window mass − 2∫|ε|²) / e^{−θ₂(L+θ₂t)})`.
    pub fn fitted_window_constant(&self) -> f64 {
        let worst = self
            .window_excess()
            .iter()
            .zip(self.window_tail())
            .map(|(e, tail)| e / tail)
            .fold(0.0, f64::max);
        1.5 * worst
    }

    fn window_excess(&self) -> Vec<f64> {
        self.local_mass.iter().zip(&self.track.eps_l2).map(|(m, e)| m - 2.0 * e * e).collect()
    }

    /// Window mass `≤ 2∫|ε|² + K e^{−θ₂(L+θ₂t)}` at every frame.
    pub fn window_holds(&self, k: f64) -> bool {
        self.window_excess().iter().zip(self.window_tail()).all(|(e, tail)| *e <= k * tail)
    }

    /// Columns of [`PAIR_TRAJECTORY_HEADER`].
    pub fn trajectory_rows(&self) -> Vec<Vec<f64>> {
        let sep = self.track.separation();
        (0..self.times.len())
            .map(|n| {
                let q = self.conserved[n];
                let mp = self.soliton_mp[n];
                vec![self.times[n], q.mass, q.momentum, q.energy, self.family_distance[n], mp[0], mp[1], mp[2], mp[3], sep[n]]
            })
            .collect()
    }

    /// Columns of [`MONOTONE_HEADER`]; `bound` is `C·(sup∫|ε|²/L + e^{−θ₂L})`.
    pub fn monotone_rows(&self, constant: f64) -> Result<Vec<Vec<f64>>> {
        let series = self.monotone_series()?;
        let bound = series.bound(constant);
        Ok((0..self.times.len())
            .map(|n| {
                let v = self.localized[n];
                vec![self.times[n], v.q, v.q_plus0, v.q_minus0, v.q_0plus, v.q_0minus, v.e_loc, self.local_mass[n], bound[n][0]]
            })
            .collect())
    }
}

pub const PAIR_TRAJECTORY_HEADER: [&str; 10] =
    ["t", "M", "P", "E", "family_distance", "M_1", "P_1", "M_2", "P_2", "separation"];

pub const MONOTONE_HEADER: [&str; 9] =
    ["t", "Q", "Q_plus0", "Q_minus0", "Q_0plus", "Q_0minus", "Eloc", "local_mass", "bound"];

/// Grid of a spectral audit point: edge tail below `1e-9`, resolution as for runs.
pub fn audit_grid(omega: f64, c: f64, min_points: usize) -> Result<GridSpec> {
    resolved_grid_to(omega, c, 0.0, min_points, 1e-9)
}

/// Grid for the `d''` quadratures; its tail leaves room for the wider profiles at the probe points.
pub fn d2_grid(omega: f64, c: f64, min_points: usize) -> Result<GridSpec> {
    resolved_grid_to(omega, c, 0.0, min_points, 1e-13)
}

/// One row of a spectral audit; failures are recorded instead of aborting the audit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditPoint {
    pub omega: f64,
    pub c: f64,
    pub n_points: Option<usize>,
    pub report: Option<SpectralReport>,
    pub det_d2: Option<f64>,
    pub error: Option<String>,
}

impl AuditPoint {
    /// `neg_count(L₊) = 1`, `neg_count(L₋) = 0`, kernel residuals below `1e-6` and `1e-8`,
    /// both constrained minima above `1e-3`, and `det d'' < 0`.
    pub fn passes(&self) -> bool {
        match (&self.report, self.det_d2) {
            (Some(r), Some(det)) => {
                r.neg_count_plus == 1
                    && r.neg_count_minus == 0
                    && r.kernel_plus < 1e-6
                    && r.kernel_minus < 1e-8
                    && r.mu_minus > 1e-3
                    && r.mu_plus > 1e-3
                    && det < 0.0
            }
            _ => false,
        }
    }
}

pub fn audit_point(omega: f64, c: f64, min_points: usize) -> AuditPoint {
    let mut point = AuditPoint { omega, c, n_points: None, report: None, det_d2: None, error: None };
    let outcome = audit_grid(omega, c, min_points).and_then(|g| {
        point.n_points = Some(g.n_points());
        Ok((SpectralReport::compute(omega, c, &g)?, AuditRow::compute(omega, c, &d2_grid(omega, c, min_points)?)?.det))
    });
    match outcome {
        Ok((report, det)) => {
            point.report = Some(report);
            point.det_d2 = Some(det);
        }
        Err(e) => point.error = Some(error_name(&e)),
    }
    point
}

/// Short variant name of an error, used to flag CSV rows.
pub fn error_name(e: &Error) -> String {
    format!("{e:?}").split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

pub fn spectral_audit(cfg: &ExperimentConfig) -> Vec<AuditPoint> {
    cfg.audit_set().into_iter().map(|(w, c)| audit_point(w, c, cfg.audit_min_points)).collect()
}

/// Soliton table rows (`M, P, E, J, K, d''`) on each audit point's grid.
pub fn soliton_table(cfg: &ExperimentConfig) -> Vec<std::result::Result<AuditRow, (f64, f64, String)>> {
    cfg.audit_set()
        .into_iter()
        .map(|(w, c)| {
            d2_grid(w, c, cfg.audit_min_points)
                .and_then(|g| AuditRow::compute(w, c, &g))
                .map_err(|e| (w, c, error_name(&e)))
        })
        .collect()
}
