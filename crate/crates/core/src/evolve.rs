//! Integrating-factor RK4 time stepping of
//! `u_t = i u_xx − ½|u|²u_x + ½u²ū_x + (3i/16)|u|⁴u` on the periodic grid.
//!
//! The state is advanced in Fourier space. The dispersive part `−ik²û` is integrated exactly
//! and the nonlinear part by classical RK4. With dealiasing enabled, the nonlinear term is
//! truncated to the lower two thirds of the spectrum (`|j| ≤ N/3`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{conserved, ConservedTriple};
use crate::numerics::{fft_forward, fft_inverse, Field, GridSpec, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_final: f64,
    pub dealias: bool,
    pub observer_stride: usize,
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::InvalidConfig(format!("T must be non-negative, got {}", self.t_final)));
        }
        if self.observer_stride == 0 {
            return Err(Error::InvalidConfig("observer_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps; the step is shrunk to `T / n` so the run ends exactly at `T`.
    pub fn n_steps(&self) -> usize {
        let ratio = self.t_final / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        }
    }

    pub fn effective_dt(&self) -> f64 {
        match self.n_steps() {
            0 => self.dt,
            n => self.t_final / n as f64,
        }
    }
}

/// Which right-hand side to integrate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    /// The full equation.
    Dnls,
    /// Dispersion only (`u_t = i u_xx`), used to test the integrating factor.
    Linear,
}

/// Pointwise nonlinear term `−½|u|²u_x + ½u²ū_x + (3i/16)|u|⁴u`.
#[inline]
fn nonlinear_point(u: C64, ux: C64) -> C64 {
    let a2 = u.norm_sqr();
    -0.5 * a2 * ux + 0.5 * u * u * ux.conj() + C64::new(0.0, 3.0 / 16.0 * a2 * a2) * u
}

fn dealias_mask(grid: &GridSpec) -> Vec<bool> {
    let n = grid.n_points() as i64;
    (0..n).map(|b| (if b < n / 2 { b } else { b - n }).abs() <= n / 3).collect()
}

/// Right-hand side of the equation with spectral derivatives.
pub fn rhs(u: &Field, dealias: bool) -> Field {
    let grid = *u.grid();
    let k = grid.wavenumbers();
    let mut uhat = u.values().to_vec();
    fft_forward(&mut uhat);
    let mut ux: Vec<C64> = uhat.iter().zip(&k).map(|(&c, &k)| c * C64::new(0.0, k)).collect();
    fft_inverse(&mut ux);
    let mut n: Vec<C64> = u.values().iter().zip(&ux).map(|(&a, &b)| nonlinear_point(a, b)).collect();
    if dealias {
        fft_forward(&mut n);
        for (c, keep) in n.iter_mut().zip(dealias_mask(&grid)) {
            if !keep {
                *c = C64::new(0.0, 0.0);
            }
        }
        fft_inverse(&mut n);
    }
    let mut lin: Vec<C64> = uhat.iter().zip(&k).map(|(&c, &k)| c * C64::new(0.0, -k * k)).collect();
    fft_inverse(&mut lin);
    Field::from_vec(grid, lin.into_iter().zip(n).map(|(a, b)| a + b).collect())
}

/// Reusable IF-RK4 stepper with precomputed integrating factors and work buffers.
pub struct Stepper {
    grid: GridSpec,
    dt: f64,
    model: Model,
    ik: Vec<C64>,
    mask: Option<Vec<bool>>,
    e_half: Vec<C64>,
    e_full: Vec<C64>,
    work_u: Vec<C64>,
    work_ux: Vec<C64>,
    stage: Vec<C64>,
    ka: Vec<C64>,
    kb: Vec<C64>,
    kc: Vec<C64>,
    kd: Vec<C64>,
}

impl Stepper {
    pub fn new(grid: GridSpec, dt: f64, dealias: bool, model: Model) -> Self {
        let k = grid.wavenumbers();
        let n = grid.n_points();
        let zero = vec![C64::new(0.0, 0.0); n];
        Stepper {
            grid,
            dt,
            model,
            ik: k.iter().map(|&k| C64::new(0.0, k)).collect(),
            mask: dealias.then(|| dealias_mask(&grid)),
            e_half: k.iter().map(|&k| C64::from_polar(1.0, -k * k * dt / 2.0)).collect(),
            e_full: k.iter().map(|&k| C64::from_polar(1.0, -k * k * dt)).collect(),
            work_u: zero.clone(),
            work_ux: zero.clone(),
            stage: zero.clone(),
            ka: zero.clone(),
            kb: zero.clone(),
            kc: zero.clone(),
            kd: zero,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Fourier transform of the nonlinear term evaluated at spectrum `uhat`.
    fn nonlinear_hat(&mut self, which: usize) {
        let out = match which {
            0 => &mut self.ka,
            1 => &mut self.kb,
            2 => &mut self.kc,
            _ => &mut self.kd,
        };
        if self.model == Model::Linear {
            out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            return;
        }
        self.work_u.copy_from_slice(&self.stage);
        for ((d, &s), &ik) in self.work_ux.iter_mut().zip(&self.stage).zip(&self.ik) {
            *d = s * ik;
        }
        fft_inverse(&mut self.work_u);
        fft_inverse(&mut self.work_ux);
        for ((o, &u), &ux) in out.iter_mut().zip(&self.work_u).zip(&self.work_ux) {
            *o = nonlinear_point(u, ux);
        }
        fft_forward(out);
        if let Some(mask) = &self.mask {
            for (o, &keep) in out.iter_mut().zip(mask) {
                if !keep {
                    *o = C64::new(0.0, 0.0);
                }
            }
        }
    }

    /// Advances a spectrum in place by one step.
    pub fn step_hat(&mut self, uhat: &mut [C64]) {
        let h = self.dt;
        self.stage.copy_from_slice(uhat);
        self.nonlinear_hat(0);
        for m in 0..uhat.len() {
            self.stage[m] = self.e_half[m] * (uhat[m] + 0.5 * h * self.ka[m]);
        }
        self.nonlinear_hat(1);
        for m in 0..uhat.len() {
            self.stage[m] = self.e_half[m] * uhat[m] + 0.5 * h * self.kb[m];
        }
        self.nonlinear_hat(2);
        for m in 0..uhat.len() {
            self.stage[m] = self.e_full[m] * uhat[m] + h * self.e_half[m] * self.kc[m];
        }
        self.nonlinear_hat(3);
        for m in 0..uhat.len() {
            uhat[m] = self.e_full[m] * uhat[m]
                + h / 6.0
                    * (self.e_full[m] * self.ka[m]
                        + 2.0 * self.e_half[m] * (self.kb[m] + self.kc[m])
                        + self.kd[m]);
        }
    }

    /// One step in physical space; `t_end` labels a `NonFinite` failure.
    pub fn step(&mut self, u: &Field, t_end: f64) -> Result<Field> {
        assert_eq!(*u.grid(), self.grid, "field grid differs from stepper grid");
        let mut uhat = u.values().to_vec();
        fft_forward(&mut uhat);
        self.step_hat(&mut uhat);
        fft_inverse(&mut uhat);
        let out = Field::from_vec(self.grid, uhat);
        if !out.is_finite() {
            return Err(Error::NonFinite { time: t_end });
        }
        Ok(out)
    }
}

/// One dealiased IF-RK4 step of the full equation.
pub fn step_ifrk4(u: &Field, dt: f64) -> Result<Field> {
    Stepper::new(*u.grid(), dt, true, Model::Dnls).step(u, dt)
}

/// `min(0.5/k_max², 0.1/(k_max·max(umax², 1e-6)))`.
pub fn suggest_dt(grid: &GridSpec, umax: f64) -> f64 {
    let k = grid.k_max();
    f64::min(0.5 / (k * k), 0.1 / (k * f64::max(umax * umax, 1e-6)))
}

/// Receives every observed frame of a run.
pub trait Observer {
    fn observe(&mut self, t: f64, u: &Field) -> Result<()>;
}

/// Observed frames of a run with their conserved quantities.
///
/// `frames` is parallel to `times` when frames are kept and empty otherwise.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub frames: Vec<Field>,
    pub conserved: Vec<ConservedTriple>,
    pub final_state: Field,
    pub dt: f64,
    pub steps: usize,
}

impl Trajectory {
    /// Largest `|Q(t) − Q(0)|` over the run for each of `M`, `P`, `E`.
    pub fn max_drift(&self) -> ConservedTriple {
        let q0 = self.conserved[0];
        let mut d = ConservedTriple { mass: 0.0, momentum: 0.0, energy: 0.0 };
        for q in &self.conserved {
            d.mass = d.mass.max((q.mass - q0.mass).abs());
            d.momentum = d.momentum.max((q.momentum - q0.momentum).abs());
            d.energy = d.energy.max((q.energy - q0.energy).abs());
        }
        d
    }

    pub fn last(&self) -> &Field {
        &self.final_state
    }
}

/// Integrates from `u0` to `cfg.t_final`, observing every `observer_stride` steps.
pub fn evolve_with(
    u0: &Field,
    cfg: &EvolveConfig,
    observers: &mut [&mut dyn Observer],
    keep_frames: bool,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = cfg.n_steps();
    let dt = cfg.effective_dt();
    let grid = *u0.grid();
    let mut stepper = Stepper::new(grid, dt, cfg.dealias, Model::Dnls);
    let mut times = Vec::new();
    let mut frames = Vec::new();
    let mut triples = Vec::new();
    let mut record = |t: f64, u: &Field| -> Result<()> {
        for obs in observers.iter_mut() {
            obs.observe(t, u)?;
        }
        times.push(t);
        triples.push(conserved(u));
        if keep_frames {
            frames.push(u.clone());
        }
        Ok(())
    };
    record(0.0, u0)?;
    let mut uhat = u0.values().to_vec();
    fft_forward(&mut uhat);
    let mut final_state = u0.clone();
    for s in 1..=n {
        stepper.step_hat(&mut uhat);
        if uhat.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite { time: s as f64 * dt });
        }
        if s % cfg.observer_stride == 0 || s == n {
            let mut v = uhat.clone();
            fft_inverse(&mut v);
            let u = Field::from_vec(grid, v);
            if s % cfg.observer_stride == 0 {
                record(s as f64 * dt, &u)?;
            }
            if s == n {
                final_state = u;
            }
        }
    }
    Ok(Trajectory { times, frames, conserved: triples, final_state, dt, steps: n })
}

/// [`evolve_with`] keeping every observed frame.
pub fn evolve(u0: &Field, cfg: &EvolveConfig, observers: &mut [&mut dyn Observer]) -> Result<Trajectory> {
    evolve_with(u0, cfg, observers, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{make_grid, norm, NormKind};
    use crate::waves::{resolved_grid, sample_wave, WaveParams};
    use std::f64::consts::PI;

    #[test]
    fn rhs_of_stationary_soliton_is_rotation() {
        let g = resolved_grid(1.0, 0.0, 0.0, 1024).unwrap();
        let u = sample_wave(&WaveParams::new(1.0, 0.0, 0.0, 0.0), &g, 0.0).unwrap();
        for dealias in [false, true] {
            let r = rhs(&u, dealias);
            let iu = u.scale(C64::new(0.0, 1.0));
            assert!(norm(&(&r - &iu), NormKind::Linf) < 1e-7);
        }
        let z = Field::zeros(g);
        assert_eq!(norm(&rhs(&z, true), NormKind::Linf), 0.0);
    }

    #[test]
    fn rhs_is_linear_for_tiny_fields() {
        let g = make_grid(20.0, 256).unwrap();
        let u = Field::from_fn(g, |x| C64::new(1e-8 * (-(x * x)).exp(), 0.0));
        let lin = crate::numerics::spectral_derivative(&u, 2).scale(C64::new(0.0, 1.0));
        let r = rhs(&u, false);
        assert!(norm(&(&r - &lin), NormKind::Linf) < 1e-20);
    }

    #[test]
    fn linear_mode_rotates_exactly() {
        let g = make_grid(10.0, 64).unwrap();
        let k = 5.0 * PI / 10.0;
        let u = Field::from_fn(g, |x| C64::from_polar(1.0, k * x));
        let dt = 0.01;
        let mut st = Stepper::new(g, dt, true, Model::Linear);
        let v = st.step(&u, dt).unwrap();
        let want = u.scale(C64::from_polar(1.0, -k * k * dt));
        assert!(norm(&(&v - &want), NormKind::Linf) < 1e-15);
    }

    #[test]
    fn stationary_soliton_thousand_steps() {
        let g = resolved_grid(1.0, 0.0, 0.0, 1024).unwrap();
        let p = WaveParams::new(1.0, 0.0, 0.0, 0.0);
        let u0 = sample_wave(&p, &g, 0.0).unwrap();
        let cfg = EvolveConfig { dt: 1e-3, t_final: 1.0, dealias: true, observer_stride: 1000 };
        let tr = evolve(&u0, &cfg, &mut []).unwrap();
        let exact = sample_wave(&p, &g, 1.0).unwrap();
        assert!(norm(&(tr.last() - &exact), NormKind::H1) < 1e-6);
    }

    #[test]
    fn local_error_is_fifth_order() {
        let g = resolved_grid(1.0, 0.5, 0.0, 512).unwrap();
        let u0 = sample_wave(&WaveParams::new(1.0, 0.5, 0.0, 0.0), &g, 0.0).unwrap();
        let dt = 0.004;
        let reference = |h: f64| {
            let mut st = Stepper::new(g, h / 64.0, true, Model::Dnls);
            let mut u = u0.clone();
            for _ in 0..64 {
                u = st.step(&u, h).unwrap();
            }
            u
        };
        let err = |h: f64| {
            let one = Stepper::new(g, h, true, Model::Dnls).step(&u0, h).unwrap();
            norm(&(&one - &reference(h)), NormKind::L2)
        };
        let ratio = err(dt) / err(dt / 2.0);
        assert!((16.0..=64.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_time_gives_initial_frame_only() {
        let g = make_grid(20.0, 64).unwrap();
        let u0 = Field::from_fn(g, |x| C64::new((-(x * x)).exp(), 0.0));
        let cfg = EvolveConfig { dt: 1e-3, t_final: 0.0, dealias: true, observer_stride: 1 };
        let tr = evolve(&u0, &cfg, &mut []).unwrap();
        assert_eq!(tr.frames.len(), 1);
        assert_eq!(tr.times, vec![0.0]);
    }

    #[test]
    fn row_count_matches_stride_arithmetic() {
        let g = make_grid(20.0, 64).unwrap();
        let u0 = Field::from_fn(g, |x| C64::new(0.1 * (-(x * x)).exp(), 0.0));
        let cfg = EvolveConfig { dt: 0.01, t_final: 1.0, dealias: true, observer_stride: 7 };
        let tr = evolve(&u0, &cfg, &mut []).unwrap();
        assert_eq!(tr.times.len(), 1 + (1.0f64 / (0.01 * 7.0)).floor() as usize);
    }

    #[test]
    fn blow_up_is_reported() {
        let g = make_grid(5.0, 64).unwrap();
        let u0 = Field::from_fn(g, |x| C64::new(5.0 * (-(x * x)).exp(), 0.0));
        let cfg = EvolveConfig { dt: 0.5, t_final: 50.0, dealias: false, observer_stride: 1 };
        assert!(matches!(evolve(&u0, &cfg, &mut []), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn suggested_step_examples() {
        let g = make_grid(20.0, 1024).unwrap();
        let dt = suggest_dt(&g, 2.0);
        let k = g.k_max();
        assert!((dt - f64::min(0.5 / (k * k), 0.1 / (4.0 * k))).abs() < 1e-18);
        assert!(dt > 7.0e-5 && dt < 8.0e-5);
        assert_eq!(suggest_dt(&g, 0.0), 0.5 / (k * k));
        let g2 = make_grid(20.0, 2048).unwrap();
        let adv = |g: &GridSpec| 0.1 / (g.k_max() * 4.0);
        assert!((adv(&g2) - adv(&g) / 2.0).abs() < 1e-18);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = EvolveConfig { dt: 0.0, t_final: 1.0, dealias: true, observer_stride: 1 };
        assert!(bad.validate().is_err());
        let bad = EvolveConfig { dt: 0.1, t_final: 1.0, dealias: true, observer_stride: 0 };
        assert!(bad.validate().is_err());
    }
}
