//! Decomposition `u = Σ R(p_k) + ε` with `ε` orthogonal to the modulation directions,
//! time tracking of the fitted parameters, and distance to the soliton orbit.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{Observer, Trajectory};
use crate::numerics::{
    fft_forward, inner_re_unchecked, norm, spectral_derivative, Field, GridSpec, NormKind, C64,
};
use crate::waves::{classify_regime, sample_wave, unwrap_near, Regime, WaveParams};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Newton stops once the residual norm drops below this.
pub const FIT_TOL: f64 = 1e-10;
/// Newton iteration cap.
pub const FIT_MAX_ITER: usize = 50;
/// Smallest separation accepted by [`fit_pair`].
pub const MIN_SEPARATION: f64 = 10.0;
const FD_STEP: f64 = 1e-5;
const MAX_HALVINGS: usize = 8;
const POSITIONAL_ITER: usize = 10;

/// The four directions `R`, `iR_x + ½|R|²R`, `R_x`, `iR`.
pub fn single_directions(p: &WaveParams, grid: &GridSpec) -> Result<[Field; 4]> {
    let r = sample_wave(p, grid, 0.0)?;
    Ok(directions_of(&r))
}

fn directions_of(r: &Field) -> [Field; 4] {
    let rx = spectral_derivative(r, 1);
    let mixed = rx.zip_map(r, |ux, u| I * ux + 0.5 * u.norm_sqr() * u);
    let ir = r.scale(I);
    [r.clone(), mixed, rx, ir]
}

/// `ρᵢ = Re∫ qᵢ ε̄` for the directions of [`single_directions`], `ε = u − R(p)`.
pub fn residuals_single(p: &WaveParams, u: &Field) -> Result<[f64; 4]> {
    require_subcritical(p)?;
    let r = sample_wave(p, u.grid(), 0.0)?;
    let eps = u - &r;
    let q = directions_of(&r);
    Ok(std::array::from_fn(|i| inner_re_unchecked(&q[i], &eps)))
}

fn require_subcritical(p: &WaveParams) -> Result<()> {
    if classify_regime(p.omega, p.c) != Regime::Subcritical {
        return Err(Error::RegimeLost { omega: p.omega, c: p.c });
    }
    Ok(())
}

/// Two traveling waves with `x₁ < x₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairParams {
    pub p1: WaveParams,
    pub p2: WaveParams,
}

/// Exponential rates `θ₁, θ₂, θ₃` and `θ₀ = min(θ₁, θ₂, θ₃)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta0: f64,
}

/// Speeds of the monotonicity lines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSpeeds {
    /// `σ = 2(ω₂−ω₁)/(c₂−c₁)`.
    pub sigma: f64,
    /// `σ_{+,0} = σ_{0,−} = (σ + c₂)/2`.
    pub sigma_plus0: f64,
    /// `σ_{−,0} = σ_{0,+} = (σ + max(c₁,0))/2`.
    pub sigma_minus0: f64,
}

impl LineSpeeds {
    pub fn sigma_0plus(&self) -> f64 {
        self.sigma_minus0
    }

    pub fn sigma_0minus(&self) -> f64 {
        self.sigma_plus0
    }
}

impl PairParams {
    pub fn new(p1: WaveParams, p2: WaveParams) -> Result<Self> {
        if !(p2.x0 > p1.x0) {
            return Err(Error::InvalidConfig(format!("pair needs x₁ < x₂, got {} and {}", p1.x0, p2.x0)));
        }
        Ok(PairParams { p1, p2 })
    }

    pub fn separation(&self) -> f64 {
        self.p2.x0 - self.p1.x0
    }

    pub fn speeds(&self) -> Result<LineSpeeds> {
        let (p1, p2) = (self.p1, self.p2);
        if p1.c == p2.c {
            return Err(Error::UndefinedSpeedRatio);
        }
        let sigma = 2.0 * (p2.omega - p1.omega) / (p2.c - p1.c);
        Ok(LineSpeeds {
            sigma,
            sigma_plus0: 0.5 * (sigma + p2.c),
            sigma_minus0: 0.5 * (sigma + p1.c.max(0.0)),
        })
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        let (p1, p2) = (self.p1, self.p2);
        let s = self.speeds()?;
        let r1 = (4.0 * p1.omega - p1.c * p1.c).sqrt();
        let r2 = (4.0 * p2.omega - p2.c * p2.c).sqrt();
        let theta1 = 0.25 * r1.min(r2).min(p2.c - p1.c);
        let line = |v: f64| (v - p1.c).min(p2.c - v).min(0.25 * r1).min(0.25 * r2) / 16.0;
        let theta2 = line(s.sigma);
        let theta3 = line(s.sigma_plus0).min(line(s.sigma_minus0));
        Ok(Thresholds { theta1, theta2, theta3, theta0: theta1.min(theta2).min(theta3) })
    }

    pub fn waves(&self) -> [WaveParams; 2] {
        [self.p1, self.p2]
    }
}

/// Outcome of [`check_speed_conditions`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    /// `c_k² < 4ω_k` for both waves.
    pub subcritical: bool,
    /// `0 < c₁ < c₂`.
    pub forward: bool,
    /// `max(c₁,0) < σ < c₂`.
    pub relative: bool,
    pub speeds: LineSpeeds,
    pub thresholds: Thresholds,
}

impl SpeedReport {
    pub fn all_pass(&self) -> bool {
        self.subcritical && self.forward && self.relative
    }
}

pub fn check_speed_conditions(pp: &PairParams) -> Result<SpeedReport> {
    let (p1, p2) = (pp.p1, pp.p2);
    let speeds = pp.speeds()?;
    Ok(SpeedReport {
        subcritical: p1.c * p1.c < 4.0 * p1.omega && p2.c * p2.c < 4.0 * p2.omega,
        forward: 0.0 < p1.c && p1.c < p2.c,
        relative: p1.c.max(0.0) < speeds.sigma && speeds.sigma < p2.c,
        speeds,
        thresholds: pp.thresholds()?,
    })
}

/// The eight pair conditions: the four directions of each `R_k` paired with
/// `ε = u − R₁ − R₂`.
pub fn residuals_pair(pp: &PairParams, u: &Field) -> Result<[f64; 8]> {
    let v = pair_residual_vec(&pp.waves(), u)?;
    Ok(std::array::from_fn(|i| v[i]))
}

fn pair_residual_vec(waves: &[WaveParams], u: &Field) -> Result<Vec<f64>> {
    let mut eps = u.clone();
    let mut dirs = Vec::with_capacity(4 * waves.len());
    for p in waves {
        require_subcritical(p)?;
        let r = sample_wave(p, u.grid(), 0.0)?;
        eps = &eps - &r;
        dirs.extend(directions_of(&r));
    }
    Ok(dirs.iter().map(|q| inner_re_unchecked(q, &eps)).collect())
}

/// Result of a modulation fit.
#[derive(Clone, Debug)]
pub struct ModulationState {
    /// One or two fitted waves.
    pub waves: Vec<WaveParams>,
    pub epsilon: Field,
    pub residual_norm: f64,
    pub eps_l2: f64,
    pub eps_h1: f64,
    pub iterations: usize,
    /// Largest cross-block Jacobian entry (pairs only).
    pub cross_block: Option<f64>,
}

fn pack(waves: &[WaveParams], gammas: &[f64]) -> Vec<f64> {
    waves.iter().zip(gammas).flat_map(|(p, &g)| p.to_array(g)).collect()
}

fn unpack(z: &[f64]) -> Vec<WaveParams> {
    z.chunks(4).map(|w| WaveParams::new(w[0], w[1], w[2], w[3])).collect()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central-difference Jacobian of the conditions in `(ω, c, x₀, γ)` per wave.
fn jacobian(z: &[f64], u: &Field) -> Result<Mat<f64>> {
    let all: Vec<usize> = (0..z.len()).collect();
    jacobian_on(z, u, &all)
}

/// Jacobian restricted to the rows and columns in `active`.
fn jacobian_on(z: &[f64], u: &Field, active: &[usize]) -> Result<Mat<f64>> {
    let n = active.len();
    let mut jac = Mat::<f64>::zeros(n, n);
    for (jj, &j) in active.iter().enumerate() {
        let h = FD_STEP * f64::max(1.0, z[j].abs());
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[j] += h;
        zm[j] -= h;
        let fp = pair_residual_vec(&unpack(&zp), u)?;
        let fm = pair_residual_vec(&unpack(&zm), u)?;
        for (ii, &i) in active.iter().enumerate() {
            jac[(ii, jj)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// FD Jacobian of `(ρ₁..ρ₄)` in `(ω, c, x₀, γ)` at `p`.
pub fn single_jacobian(p: &WaveParams, u: &Field) -> Result<[[f64; 4]; 4]> {
    require_subcritical(p)?;
    let jac = jacobian(&p.to_array(p.gamma()), u)?;
    Ok(std::array::from_fn(|i| std::array::from_fn(|j| jac[(i, j)])))
}

fn solve(a: &Mat<f64>, b: &[f64]) -> Result<Vec<f64>> {
    use faer::linalg::solvers::Solve;
    let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
    let x = a.partial_piv_lu().solve(&rhs);
    let out: Vec<f64> = (0..b.len()).map(|i| x[(i, 0)]).collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::SolverFailure("singular modulation Jacobian".into()))
    }
}

/// Largest factor `≤ 1` keeping each wave's step within `|Δω| ≤ ω/10`, `|Δc| ≤ √ω/10`,
/// `|Δx₀| ≤ 1` and `|Δγ| ≤ 1`. Near the critical edge the conditions have further roots a
/// full Newton step can jump to.
fn trust_scale(z: &[f64], step: &[f64]) -> f64 {
    let mut scale: f64 = 1.0;
    for (w, s) in z.chunks(4).zip(step.chunks(4)) {
        let caps = [0.1 * w[0].abs(), 0.1 * w[0].abs().sqrt(), 1.0, 1.0];
        for (cap, d) in caps.iter().zip(s) {
            if d.abs() > *cap {
                scale = scale.min(cap / d.abs());
            }
        }
    }
    scale
}

/// Damped Newton on the conditions, starting from `z0` (γ entries unwrapped).
///
/// A first pass solves the translation and phase conditions with `(ω, c)` frozen. From a
/// guess that is off in position by a few tenths, the full system otherwise drifts to a
/// second root with the right `(x₀, γ)` and smaller `(ω, c)`.
fn newton(u: &Field, z0: Vec<f64>) -> Result<(Vec<f64>, f64, usize, Mat<f64>)> {
    let positional: Vec<usize> = (0..z0.len()).filter(|i| i % 4 >= 2).collect();
    let z = match newton_on(u, z0.clone(), &positional, POSITIONAL_ITER) {
        Ok((z, ..)) | Err((z, _)) => z,
    };
    let all: Vec<usize> = (0..z0.len()).collect();
    let (z, fnorm, it) = newton_on(u, z, &all, FIT_MAX_ITER).map_err(|(_, e)| e)?;
    let jac = jacobian(&z, u)?;
    Ok((z, fnorm, it, jac))
}

type NewtonOut = std::result::Result<(Vec<f64>, f64, usize), (Vec<f64>, Error)>;

/// Damped Newton on the `active` conditions in the `active` unknowns. On failure the
/// last accepted iterate is returned with the error.
fn newton_on(u: &Field, z0: Vec<f64>, active: &[usize], max_iter: usize) -> NewtonOut {
    let sub = |f: &[f64]| active.iter().map(|&i| f[i]).collect::<Vec<f64>>();
    let mut z = z0;
    let mut f = match pair_residual_vec(&unpack(&z), u) {
        Ok(f) => sub(&f),
        Err(e) => return Err((z, e)),
    };
    let mut fnorm = l2(&f);
    for it in 0..=max_iter {
        if fnorm < FIT_TOL {
            return Ok((z, fnorm, it));
        }
        if it == max_iter {
            break;
        }
        let step = match jacobian_on(&z, u, active).and_then(|j| solve(&j, &f)) {
            Ok(s) => s,
            Err(e) => return Err((z, e)),
        };
        let mut full = vec![0.0; z.len()];
        for (k, &i) in active.iter().enumerate() {
            full[i] = step[k];
        }
        let mut lambda = trust_scale(&z, &full);
        let mut accepted = false;
        let mut lost = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = z.iter().zip(&full).map(|(a, s)| a - lambda * s).collect();
            let waves = unpack(&trial);
            if let Some(p) = waves.iter().find(|p| classify_regime(p.omega, p.c) != Regime::Subcritical) {
                lost = Some(*p);
            } else {
                let ft = match pair_residual_vec(&waves, u) {
                    Ok(f) => sub(&f),
                    Err(e) => return Err((z, e)),
                };
                let nt = l2(&ft);
                if nt < fnorm {
                    z = trial;
                    f = ft;
                    fnorm = nt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            let e = match lost {
                Some(p) => Error::RegimeLost { omega: p.omega, c: p.c },
                None => Error::NoConvergence { residual: fnorm, iterations: it },
            };
            return Err((z, e));
        }
    }
    Err((z, Error::NoConvergence { residual: fnorm, iterations: max_iter }))
}

fn finish(u: &Field, z: &[f64], residual: f64, iterations: usize, cross_block: Option<f64>) -> Result<ModulationState> {
    let waves = unpack(z);
    let mut eps = u.clone();
    for p in &waves {
        eps = &eps - &sample_wave(p, u.grid(), 0.0)?;
    }
    Ok(ModulationState {
        eps_l2: norm(&eps, NormKind::L2),
        eps_h1: norm(&eps, NormKind::H1),
        waves,
        epsilon: eps,
        residual_norm: residual,
        iterations,
        cross_block,
    })
}

/// Solves the four single-wave conditions by damped Newton from `guess`.
pub fn fit_single(u: &Field, guess: &WaveParams) -> Result<ModulationState> {
    fit_single_from(u, guess, guess.gamma()).map(|(s, _)| s)
}

/// As [`fit_single`] with the initial phase given unwrapped; also returns the fitted
/// phase on the same branch.
fn fit_single_from(u: &Field, guess: &WaveParams, gamma: f64) -> Result<(ModulationState, f64)> {
    require_subcritical(guess)?;
    let (z, res, it, _) = newton(u, guess.to_array(gamma).to_vec())?;
    Ok((finish(u, &z, res, it, None)?, z[3]))
}

/// Solves the eight pair conditions from `guess`.
pub fn fit_pair(u: &Field, guess: &PairParams) -> Result<ModulationState> {
    let g = guess.waves();
    fit_pair_from(u, guess, [g[0].gamma(), g[1].gamma()]).map(|(s, _)| s)
}

fn fit_pair_from(u: &Field, guess: &PairParams, gammas: [f64; 2]) -> Result<(ModulationState, [f64; 2])> {
    if guess.separation() < MIN_SEPARATION {
        return Err(Error::SeparationTooSmall(guess.separation()));
    }
    let (z, res, it, jac) = newton(u, pack(&guess.waves(), &gammas))?;
    let mut cross: f64 = 0.0;
    for i in 0..8 {
        for j in 0..8 {
            if i / 4 != j / 4 {
                cross = cross.max(jac[(i, j)].abs());
            }
        }
    }
    Ok((finish(u, &z, res, it, Some(cross))?, [z[3], z[7]]))
}

/// Fitted parameters over time, with `γ` unwrapped.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ModulationTrack {
    pub times: Vec<f64>,
    /// `waves[n][k]`: wave `k` at frame `n`.
    pub waves: Vec<Vec<WaveParams>>,
    /// Unwrapped phases, parallel to `waves`.
    pub gammas: Vec<Vec<f64>>,
    pub eps_l2: Vec<f64>,
    pub eps_h1: Vec<f64>,
    pub residual_norm: Vec<f64>,
}

impl ModulationTrack {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_waves(&self) -> usize {
        self.waves.first().map_or(0, Vec::len)
    }

    /// Discrete `ẋ_k` and `γ̇_k`: central differences inside, one-sided at the ends.
    fn rates(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let x: Vec<f64> = self.waves.iter().map(|w| w[k].x0).collect();
        let g: Vec<f64> = self.gammas.iter().map(|g| g[k]).collect();
        let diff = |v: &[f64]| -> Vec<f64> {
            if n < 2 {
                return vec![0.0; n];
            }
            (0..n)
                .map(|i| {
                    let (a, b) = if i == 0 {
                        (0, 1)
                    } else if i == n - 1 {
                        (n - 2, n - 1)
                    } else {
                        (i - 1, i + 1)
                    };
                    (v[b] - v[a]) / (self.times[b] - self.times[a])
                })
                .collect()
        };
        (diff(&x), diff(&g))
    }

    /// `|ẋ_k − c_k|` per frame.
    pub fn x_rate_error(&self, k: usize) -> Vec<f64> {
        let (xd, _) = self.rates(k);
        xd.iter().zip(&self.waves).map(|(v, w)| (v - w[k].c).abs()).collect()
    }

    /// `|γ̇_k − ω_k|` per frame.
    pub fn gamma_rate_error(&self, k: usize) -> Vec<f64> {
        let (_, gd) = self.rates(k);
        gd.iter().zip(&self.waves).map(|(v, w)| (v - w[k].omega).abs()).collect()
    }

    /// `max_t (|ω_k(t) − ω_k(0)| + |c_k(t) − c_k(0)|)`.
    pub fn param_drift(&self, k: usize) -> f64 {
        let w0 = self.waves[0][k];
        self.waves.iter().map(|w| (w[k].omega - w0.omega).abs() + (w[k].c - w0.c).abs()).fold(0.0, f64::max)
    }

    /// `x₂(t) − x₁(t)` for pair tracks.
    pub fn separation(&self) -> Vec<f64> {
        self.waves.iter().map(|w| w[1].x0 - w[0].x0).collect()
    }

    /// CSV header: `t`, then per wave `omega_k, c_k, x_k, gamma_k, xdot_err_k, gammadot_err_k`,
    /// then `eps_l2, eps_h1, residual_norm`.
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for k in 1..=self.n_waves() {
            for name in ["omega", "c", "x", "gamma", "xdot_err", "gammadot_err"] {
                h.push(format!("{name}_{k}"));
            }
        }
        h.extend(["eps_l2", "eps_h1", "residual_norm"].map(String::from));
        h
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        let errs: Vec<(Vec<f64>, Vec<f64>)> =
            (0..self.n_waves()).map(|k| (self.x_rate_error(k), self.gamma_rate_error(k))).collect();
        (0..self.len())
            .map(|n| {
                let mut row = vec![self.times[n]];
                for (k, (xe, ge)) in errs.iter().enumerate() {
                    let w = self.waves[n][k];
                    row.extend([w.omega, w.c, w.x0, self.gammas[n][k], xe[n], ge[n]]);
                }
                row.extend([self.eps_l2[n], self.eps_h1[n], self.residual_norm[n]]);
                row
            })
            .collect()
    }
}

/// Streaming tracker: refits at every observed frame from the extrapolated previous fit.
#[derive(Clone, Debug)]
pub struct Tracker {
    last: Vec<WaveParams>,
    last_gamma: Vec<f64>,
    last_t: Option<f64>,
    track: ModulationTrack,
    latest: Option<ModulationState>,
}

impl Tracker {
    /// Starts from one or two guessed waves.
    pub fn new(initial: &[WaveParams]) -> Result<Self> {
        if initial.is_empty() || initial.len() > 2 {
            return Err(Error::InvalidConfig(format!("tracking needs one or two waves, got {}", initial.len())));
        }
        Ok(Tracker {
            last: initial.to_vec(),
            last_gamma: initial.iter().map(WaveParams::gamma).collect(),
            last_t: None,
            track: ModulationTrack::default(),
            latest: None,
        })
    }

    pub fn track(&self) -> &ModulationTrack {
        &self.track
    }

    pub fn into_track(self) -> ModulationTrack {
        self.track
    }

    /// Fit at the most recent frame.
    pub fn latest(&self) -> Option<&ModulationState> {
        self.latest.as_ref()
    }

    fn fit_at(&mut self, t: f64, u: &Field) -> Result<()> {
        let dt = self.last_t.map_or(0.0, |t0| t - t0);
        let guess: Vec<WaveParams> = self
            .last
            .iter()
            .map(|p| WaveParams::new(p.omega, p.c, p.x0 + p.c * dt, p.gamma() + p.omega * dt))
            .collect();
        let gammas: Vec<f64> = self.last_gamma.iter().zip(&self.last).map(|(g, p)| g + p.omega * dt).collect();
        let (state, fitted) = if guess.len() == 1 {
            let (s, g) = fit_single_from(u, &guess[0], gammas[0])?;
            (s, vec![g])
        } else {
            let pp = PairParams { p1: guess[0], p2: guess[1] };
            let (s, g) = fit_pair_from(u, &pp, [gammas[0], gammas[1]])?;
            (s, g.to_vec())
        };
        let unwrapped: Vec<f64> = fitted.iter().zip(&gammas).map(|(&g, &r)| unwrap_near(g, r)).collect();
        self.track.times.push(t);
        self.track.waves.push(state.waves.clone());
        self.track.gammas.push(unwrapped.clone());
        self.track.eps_l2.push(state.eps_l2);
        self.track.eps_h1.push(state.eps_h1);
        self.track.residual_norm.push(state.residual_norm);
        self.last = state.waves.clone();
        self.last_gamma = unwrapped;
        self.last_t = Some(t);
        self.latest = Some(state);
        Ok(())
    }
}

impl Observer for Tracker {
    fn observe(&mut self, t: f64, u: &Field) -> Result<()> {
        self.fit_at(t, u).map_err(|e| Error::FitFailed { time: t, source: Box::new(e) })
    }
}

/// Fits every kept frame of `trajectory`, starting from `initial`.
pub fn track(trajectory: &Trajectory, initial: &ModulationState) -> Result<ModulationTrack> {
    if trajectory.frames.len() != trajectory.times.len() {
        return Err(Error::InvalidConfig("trajectory frames were not kept".into()));
    }
    let mut tracker = Tracker::new(&initial.waves)?;
    for (t, u) in trajectory.times.iter().zip(&trajectory.frames) {
        tracker.observe(*t, u)?;
    }
    Ok(tracker.into_track())
}

/// Upper bound for `inf_{y,γ} ‖u − e^{iγ} w(· − y)‖_{H¹}` with `w = φ_{ω,c} e^{icx/2}`.
///
/// Coarse search over grid shifts and 32 phases, Newton refinement in `(y, γ)`, then a
/// direct evaluation of the distance at the refined point.
pub fn orbit_distance(u: &Field, omega: f64, c: f64) -> Result<f64> {
    Ok(orbit_fit(u, omega, c)?.0)
}

/// [`orbit_distance`] together with the minimizing `(y, γ)`.
pub fn orbit_fit(u: &Field, omega: f64, c: f64) -> Result<(f64, f64, f64)> {
    if classify_regime(omega, c) != Regime::Subcritical {
        return Err(Error::RegimeUnsupported { omega, c });
    }
    let grid = *u.grid();
    let n = grid.n_points();
    let w = sample_wave(&WaveParams::new(omega, c, 0.0, 0.0), &grid, 0.0)?;
    let mut uh = u.values().to_vec();
    let mut wh = w.values().to_vec();
    fft_forward(&mut uh);
    fft_forward(&mut wh);
    let ks = grid.wavenumbers();
    // Spectral weights of C(y) = Re-less H¹ pairing ∫(u w̄_y + u_x w̄_y,x).
    let coef: Vec<C64> = (0..n).map(|j| uh[j] * wh[j].conj() * (1.0 + ks[j] * ks[j]) * (grid.dx() / n as f64)).collect();
    let mut corr = coef.clone();
    crate::numerics::fft_inverse(&mut corr);
    // fft_inverse divides by N; the sum Σ_j coef_j e^{2πi js/N} is N times that.
    let corr: Vec<C64> = corr.iter().map(|v| v * n as f64).collect();
    let phases: Vec<f64> = (0..32).map(|k| std::f64::consts::TAU * k as f64 / 32.0).collect();
    let mut best = (f64::NEG_INFINITY, 0usize, 0.0);
    for (s, cv) in corr.iter().enumerate() {
        for &g in &phases {
            let f = (C64::from_polar(1.0, -g) * cv).re;
            if f > best.0 {
                best = (f, s, g);
            }
        }
    }
    // Shift s corresponds to w(x − s·Δx); map to the symmetric range.
    let s = best.1 as f64;
    let mut y = if s > n as f64 / 2.0 { (s - n as f64) * grid.dx() } else { s * grid.dx() };
    let mut gamma = best.2;
    let eval = |y: f64| -> [C64; 3] {
        let mut out = [C64::new(0.0, 0.0); 3];
        for j in 0..n {
            let e = C64::from_polar(1.0, ks[j] * y) * coef[j];
            let ik = I * ks[j];
            out[0] += e;
            out[1] += e * ik;
            out[2] += e * ik * ik;
        }
        out
    };
    for _ in 0..30 {
        let [c0, c1, c2] = eval(y);
        let rot = C64::from_polar(1.0, -gamma);
        let (a0, a1, a2) = (rot * c0, rot * c1, rot * c2);
        // Gradient and Hessian of f(y, γ) = Re(e^{−iγ} C(y)).
        let gy = a1.re;
        let gg = a0.im;
        let hyy = a2.re;
        let hgg = -a0.re;
        let hyg = a1.im;
        let det = hyy * hgg - hyg * hyg;
        if det <= 0.0 || hyy >= 0.0 {
            break;
        }
        let dy = -(hgg * gy - hyg * gg) / det;
        let dg = -(hyy * gg - hyg * gy) / det;
        let dy = dy.clamp(-grid.dx(), grid.dx());
        y += dy;
        gamma += dg;
        if dy.abs() < 1e-14 && dg.abs() < 1e-14 {
            break;
        }
    }
    let member = w.translate(y).scale(C64::from_polar(1.0, gamma));
    let direct = norm(&(u - &member), NormKind::H1);
    Ok((direct, y, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::d_second;
    use crate::numerics::{make_grid, random_smooth_field, XorShift64Star};
    use crate::waves::{profile_slope, profile_value, resolved_grid};

    #[test]
    fn exact_wave_has_zero_residuals() {
        let g = make_grid(25.0, 512).unwrap();
        let p = WaveParams::new(1.0, 0.4, 1.0, 0.3);
        let u = sample_wave(&p, &g, 0.0).unwrap();
        assert!(residuals_single(&p, &u).unwrap().iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn translation_error_shows_in_the_third_condition() {
        let g = make_grid(25.0, 512).unwrap();
        let p = WaveParams::new(1.0, 0.0, 0.0, 0.0);
        let r = sample_wave(&p, &g, 0.0).unwrap();
        let rx = spectral_derivative(&r, 1);
        let d = 1e-3;
        let u = &r + &rx.scale_re(d);
        let rho = residuals_single(&p, &u).unwrap();
        let want = d * norm(&rx, NormKind::L2).powi(2);
        assert!((rho[2] - want).abs() < 1e-12);
        let rot = residuals_single(&p, &r.scale(C64::from_polar(1.0, d))).unwrap();
        let want4 = d * norm(&r, NormKind::L2).powi(2);
        assert!((rot[3] - want4).abs() < 1e-8 * want4.abs() + 1e-9, "{} {}", rot[3], want4);
    }

    #[test]
    fn fit_recovers_parameters() {
        let g = resolved_grid(1.0, 0.3, 2.0, 512).unwrap();
        let truth = WaveParams::new(1.0, 0.3, 1.7, 0.9);
        let u = sample_wave(&truth, &g, 0.0).unwrap();
        let s = fit_single(&u, &WaveParams::new(1.05, 0.25, 1.5, 0.7)).unwrap();
        let p = s.waves[0];
        assert!((p.omega - 1.0).abs() < 1e-9);
        assert!((p.c - 0.3).abs() < 1e-9);
        assert!((p.x0 - 1.7).abs() < 1e-9);
        assert!((p.gamma() - 0.9).abs() < 1e-9);
        assert!(s.residual_norm < FIT_TOL);
    }

    #[test]
    fn jacobian_determinant_matches_hessian_formula() {
        for (omega, c) in [(1.0, 0.0), (1.0, 1.0)] {
            let g = resolved_grid(omega, c, 0.0, 1024).unwrap();
            let p = WaveParams::new(omega, c, 0.0, 0.0);
            let u = sample_wave(&p, &g, 0.0).unwrap();
            let jac = single_jacobian(&p, &u).unwrap();
            let m = Mat::<f64>::from_fn(4, 4, |i, j| jac[i][j]);
            let det = m.determinant();
            let phi = Field::from_fn(g, |x| C64::new(profile_value(omega, c, x), 0.0));
            let slope = Field::from_fn(g, |x| C64::new(profile_slope(omega, c, x), 0.0));
            let d2 = d_second(omega, c, &g, 1e-4).unwrap();
            let want = -norm(&slope, NormKind::L2).powi(2) * norm(&phi, NormKind::L2).powi(2) * d2.det();
            assert!(((det - want) / want).abs() < 0.01, "{det} vs {want}");
        }
    }

    #[test]
    fn pair_fit_and_cross_block() {
        let g = make_grid(60.0, 2048).unwrap();
        let truth = PairParams::new(WaveParams::new(1.0, 1.0, -15.0, 0.0), WaveParams::new(3.0, 3.0, 15.0, 1.0)).unwrap();
        let u = &sample_wave(&truth.p1, &g, 0.0).unwrap() + &sample_wave(&truth.p2, &g, 0.0).unwrap();
        assert!(residuals_pair(&truth, &u).unwrap().iter().all(|r| r.abs() < 1e-10));
        let guess = PairParams::new(
            WaveParams::new(1.02, 0.98, -14.8, 0.1),
            WaveParams::new(2.98, 3.01, 15.2, 0.9),
        )
        .unwrap();
        let s = fit_pair(&u, &guess).unwrap();
        for (a, b) in s.waves.iter().zip(truth.waves()) {
            assert!((a.omega - b.omega).abs() < 1e-8 && (a.c - b.c).abs() < 1e-8);
            assert!((a.x0 - b.x0).abs() < 1e-8 && (a.gamma() - b.gamma()).abs() < 1e-8);
        }
        assert!(s.cross_block.unwrap() < 1e-4);
    }

    #[test]
    fn close_pairs_are_rejected() {
        let g = make_grid(40.0, 512).unwrap();
        let pp = PairParams::new(WaveParams::new(1.0, 1.0, -2.0, 0.0), WaveParams::new(3.0, 3.0, 2.0, 0.0)).unwrap();
        let u = Field::zeros(g);
        assert!(matches!(fit_pair(&u, &pp), Err(Error::SeparationTooSmall(_))));
    }

    #[test]
    fn speed_conditions() {
        let w = |o, c| WaveParams::new(o, c, 0.0, 0.0);
        let mk = |a: WaveParams, b: WaveParams| PairParams { p1: a, p2: WaveParams::new(b.omega, b.c, 30.0, 0.0) };
        let r = check_speed_conditions(&mk(w(1.0, 1.0), w(3.0, 3.0))).unwrap();
        assert!(r.all_pass());
        assert_eq!(r.speeds.sigma, 2.0);
        assert_eq!(r.speeds.sigma_plus0, 2.5);
        assert_eq!(r.speeds.sigma_minus0, 1.5);
        assert!((r.thresholds.theta1 - 3f64.sqrt() / 4.0).abs() < 1e-15);
        assert!((r.thresholds.theta0 - 3f64.sqrt() / 64.0).abs() < 1e-15);
        let r = check_speed_conditions(&mk(w(1.0, 1.0), w(4.0, 3.0))).unwrap();
        assert!(r.subcritical && r.forward && !r.relative);
        let r = check_speed_conditions(&mk(w(1.0, -1.0), w(3.0, 3.0))).unwrap();
        assert!(!r.forward);
        assert!(matches!(check_speed_conditions(&mk(w(1.0, 1.0), w(3.0, 1.0))), Err(Error::UndefinedSpeedRatio)));
    }

    #[test]
    fn orbit_distance_examples() {
        let g = make_grid(30.0, 1024).unwrap();
        let p = WaveParams::new(1.0, 0.5, 3.3, 2.1);
        let r = sample_wave(&p, &g, 0.0).unwrap();
        assert!(orbit_distance(&r, 1.0, 0.5).unwrap() < 1e-9);
        let scaled = orbit_distance(&r.scale_re(1.01), 1.0, 0.5).unwrap();
        let want = 0.01 * norm(&r, NormKind::H1);
        assert!((scaled - want).abs() < 0.1 * want);
        let zero = orbit_distance(&Field::zeros(g), 1.0, 0.5).unwrap();
        assert!((zero - norm(&r, NormKind::H1)).abs() < 1e-12);
    }

    #[test]
    fn tracker_follows_exact_orbit() {
        let g = resolved_grid(1.0, 0.5, 4.0, 512).unwrap();
        let p = WaveParams::new(1.0, 0.5, -1.0, 0.2);
        let mut tr = Tracker::new(&[WaveParams::new(1.01, 0.49, -0.9, 0.25)]).unwrap();
        for k in 0..=20 {
            let t = 0.25 * k as f64;
            tr.observe(t, &sample_wave(&p, &g, t).unwrap()).unwrap();
        }
        let track = tr.into_track();
        for (n, t) in track.times.iter().enumerate() {
            assert!((track.waves[n][0].x0 - (-1.0 + 0.5 * t)).abs() < 1e-6);
            assert!((track.gammas[n][0] - (0.2 + t)).abs() < 1e-6);
        }
        assert!(track.gamma_rate_error(0).iter().all(|e| *e < 1e-6));
    }

    #[test]
    fn noisy_fit_is_close() {
        let g = resolved_grid(1.0, 0.0, 0.0, 512).unwrap();
        let p = WaveParams::new(1.0, 0.0, 0.0, 0.0);
        let mut rng = XorShift64Star::new(1);
        let noise = random_smooth_field(g, &mut rng, 0.0, 3.0, 3.0);
        let noise = noise.scale_re(1e-2 / norm(&noise, NormKind::H1));
        let u = &sample_wave(&p, &g, 0.0).unwrap() + &noise;
        let s = fit_single(&u, &p).unwrap();
        assert!(s.eps_h1 < 3e-2);
    }
}
