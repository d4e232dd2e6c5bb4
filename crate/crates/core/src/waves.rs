//! Exact traveling waves, their parameter derivatives and stationary-equation residuals.
//!
//! For `c² < 4ω` the profile is
//! `φ(x) = [ (√ω/(4ω−c²)) (cosh(√(4ω−c²) x) − c/(2√ω)) ]^{−1/2}`,
//! and for `c² = 4ω, c > 0` it is the algebraic profile `2√c (c²x²+1)^{−1/2}`.
//! The full wave is `R(x) = φ(x−x₀) e^{i(γ + (c/2)(x−x₀))}`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{spectral_derivative, Field, GridSpec, C64};

/// Existence regime of the stationary problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Subcritical,
    CriticalPositive,
    None,
}

pub fn classify_regime(omega: f64, c: f64) -> Regime {
    let gap = 4.0 * omega - c * c;
    if (c * c - 4.0 * omega).abs() <= 1e-12 * f64::max(1.0, c * c) && c > 0.0 {
        Regime::CriticalPositive
    } else if gap > 0.0 {
        Regime::Subcritical
    } else {
        Regime::None
    }
}

/// One traveling wave `(ω, c, x₀, γ)`; `γ` is stored in `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    pub omega: f64,
    pub c: f64,
    pub x0: f64,
    gamma: f64,
}

impl WaveParams {
    pub fn new(omega: f64, c: f64, x0: f64, gamma: f64) -> Self {
        WaveParams { omega, c, x0, gamma: wrap_phase(gamma) }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) {
        self.gamma = wrap_phase(gamma);
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self.omega, self.c)
    }

    /// Parameters as the vector `(ω, c, x₀, γ)` with `γ` replaced by `gamma`.
    pub(crate) fn to_array(self, gamma: f64) -> [f64; 4] {
        [self.omega, self.c, self.x0, gamma]
    }

    /// Center and phase after evolving the exact wave for time `t`.
    pub fn advanced(&self, t: f64) -> WaveParams {
        WaveParams::new(self.omega, self.c, self.x0 + self.c * t, self.gamma + self.omega * t)
    }
}

/// Reduces a phase to `[0, 2π)`.
pub fn wrap_phase(gamma: f64) -> f64 {
    let g = gamma.rem_euclid(TAU);
    if g >= TAU {
        0.0
    } else {
        g
    }
}

/// The representative of `gamma` (mod 2π) closest to `reference`.
pub fn unwrap_near(gamma: f64, reference: f64) -> f64 {
    gamma + TAU * ((reference - gamma) / TAU).round()
}

fn require_profile(omega: f64, c: f64) -> Result<Regime> {
    match classify_regime(omega, c) {
        Regime::None => Err(Error::RegimeUnsupported { omega, c }),
        r => Ok(r),
    }
}

/// `φ_{ω,c}(x)`; the caller guarantees that a profile exists.
pub fn profile_value(omega: f64, c: f64, x: f64) -> f64 {
    match classify_regime(omega, c) {
        Regime::CriticalPositive => 2.0 * c.sqrt() / (c * c * x * x + 1.0).sqrt(),
        _ => {
            let d = 4.0 * omega - c * c;
            let sd = d.sqrt();
            let z = sd * x.abs();
            if z > 700.0 {
                return 0.0;
            }
            let a = omega.sqrt() / d * (z.cosh() - c / (2.0 * omega.sqrt()));
            1.0 / a.sqrt()
        }
    }
}

/// `φ′_{ω,c}(x)` in closed form.
pub fn profile_slope(omega: f64, c: f64, x: f64) -> f64 {
    match classify_regime(omega, c) {
        Regime::CriticalPositive => {
            let q = c * c * x * x + 1.0;
            -2.0 * c.sqrt() * c * c * x / (q * q.sqrt())
        }
        _ => {
            let d = 4.0 * omega - c * c;
            let sd = d.sqrt();
            if sd * x.abs() > 700.0 {
                return 0.0;
            }
            let k = omega.sqrt() / d;
            let a = k * ((sd * x).cosh() - c / (2.0 * omega.sqrt()));
            -0.5 * k * sd * (sd * x).sinh() / (a * a.sqrt())
        }
    }
}

/// Real profile `φ_{ω,c}` sampled at the (unshifted) grid nodes.
pub fn phi_profile(omega: f64, c: f64, grid: &GridSpec) -> Result<Field> {
    require_profile(omega, c)?;
    Ok(Field::from_fn(*grid, |x| C64::new(profile_value(omega, c, x), 0.0)))
}

/// Exact solution `e^{iωt} φ(x−x₀−ct) e^{i(γ + (c/2)(x−x₀−ct))}` without the edge check.
pub fn sample_wave(p: &WaveParams, grid: &GridSpec, t: f64) -> Result<Field> {
    require_profile(p.omega, p.c)?;
    let center = p.x0 + p.c * t;
    let base = p.omega * t + p.gamma;
    Ok(Field::from_fn(*grid, |x| {
        let xi = x - center;
        C64::from_polar(profile_value(p.omega, p.c, xi), base + 0.5 * p.c * xi)
    }))
}

/// Largest profile value at either box edge for a wave centered at `center`.
pub fn edge_tail(omega: f64, c: f64, center: f64, grid: &GridSpec) -> f64 {
    let l = grid.half_length();
    f64::max(profile_value(omega, c, -l - center), profile_value(omega, c, l - center))
}

fn check_tail(omega: f64, c: f64, center: f64, grid: &GridSpec) -> Result<()> {
    let value = edge_tail(omega, c, center, grid);
    if value > 1e-10 {
        return Err(Error::TailTooFat { value });
    }
    Ok(())
}

/// The traveling wave at time `t`; rejects boxes too small for the tails.
pub fn wave_field(p: &WaveParams, grid: &GridSpec, t: f64) -> Result<Field> {
    require_profile(p.omega, p.c)?;
    check_tail(p.omega, p.c, p.x0 + p.c * t, grid)?;
    sample_wave(p, grid, t)
}

/// `(∂_ω R, ∂_c R, ∂_{x₀} R, ∂_γ R)` at `t = 0`.
///
/// `∂_ω R` and `∂_c R` are central differences with step `step·max(1,|param|)`.
pub fn wave_param_grad(p: &WaveParams, grid: &GridSpec, step: f64) -> Result<[Field; 4]> {
    if classify_regime(p.omega, p.c) != Regime::Subcritical {
        return Err(Error::RegimeUnsupported { omega: p.omega, c: p.c });
    }
    let hw = step * f64::max(1.0, p.omega.abs());
    let hc = step * f64::max(1.0, p.c.abs());
    for (omega, c) in [(p.omega + hw, p.c), (p.omega - hw, p.c), (p.omega, p.c + hc), (p.omega, p.c - hc)] {
        if classify_regime(omega, c) != Regime::Subcritical {
            return Err(Error::StepBreaksRegime { omega, c });
        }
    }
    let at = |omega: f64, c: f64| sample_wave(&WaveParams { omega, c, ..*p }, grid, 0.0);
    let r = sample_wave(p, grid, 0.0)?;
    let d_omega = (&at(p.omega + hw, p.c)? - &at(p.omega - hw, p.c)?).scale_re(0.5 / hw);
    let d_c = (&at(p.omega, p.c + hc)? - &at(p.omega, p.c - hc)?).scale_re(0.5 / hc);
    let d_x0 = spectral_derivative(&r, 1).scale_re(-1.0);
    let d_gamma = r.scale(C64::new(0.0, 1.0));
    Ok([d_omega, d_c, d_x0, d_gamma])
}

/// Sup norm of `(ω−c²/4)φ − φ″ − (3/16)φ⁵ + (c/2)φ³` for a real grid function `phi`.
pub fn elliptic_residual(omega: f64, c: f64, phi: &Field) -> f64 {
    let pxx = spectral_derivative(phi, 2);
    let w = omega - 0.25 * c * c;
    phi.values()
        .iter()
        .zip(pxx.values())
        .map(|(&f, &fxx)| {
            let f = f.re;
            (w * f - fxx.re - 3.0 / 16.0 * f.powi(5) + 0.5 * c * f.powi(3)).abs()
        })
        .fold(0.0, f64::max)
}

/// Sup norm of `ωR − R″ − (3/16)|R|⁴R + icR′ − (i/2)|R|²R′ + (i/2)R² conj(R′)`.
pub fn traveling_residual(omega: f64, c: f64, r: &Field) -> f64 {
    let rx = spectral_derivative(r, 1);
    let rxx = spectral_derivative(r, 2);
    let i = C64::new(0.0, 1.0);
    r.values()
        .iter()
        .zip(rx.values())
        .zip(rxx.values())
        .map(|((&u, &ux), &uxx)| {
            let a2 = u.norm_sqr();
            let res = u * omega - uxx - u * (3.0 / 16.0 * a2 * a2) + i * c * ux - i * 0.5 * a2 * ux
                + i * 0.5 * u * u * ux.conj();
            res.norm()
        })
        .fold(0.0, f64::max)
}

/// `(r_elliptic, r_tw)` for the wave `p` on `grid`.
pub fn residuals(p: &WaveParams, grid: &GridSpec) -> Result<(f64, f64)> {
    if classify_regime(p.omega, p.c) != Regime::Subcritical {
        return Err(Error::RegimeUnsupported { omega: p.omega, c: p.c });
    }
    let r = wave_field(p, grid, 0.0)?;
    let phi = Field::from_fn(*grid, |x| C64::new(profile_value(p.omega, p.c, x - p.x0), 0.0));
    Ok((elliptic_residual(p.omega, p.c, &phi), traveling_residual(p.omega, p.c, &r)))
}

/// Asymptotic tail prefactor: `φ(x) ~ K e^{−√(4ω−c²)|x|/2}` with `K = √(2(4ω−c²)/√ω)`.
pub fn tail_prefactor(omega: f64, c: f64) -> f64 {
    let d = 4.0 * omega - c * c;
    (2.0 * d / omega.sqrt()).sqrt()
}

/// Distance from the real axis to the nearest complex singularity of `φ`,
/// `arccos(c/(2√ω)) / √(4ω−c²)`; it sets the Fourier decay rate of the profile.
pub fn singularity_distance(omega: f64, c: f64) -> f64 {
    let d = 4.0 * omega - c * c;
    let rho = (c / (2.0 * omega.sqrt())).clamp(-1.0, 1.0);
    rho.acos() / d.sqrt()
}

/// Grid that resolves the subcritical wave `(ω, c)` whose center stays within `|x| ≤ reach`.
///
/// The box leaves at least `2/√(4ω−c²)·ln(K/1e-13)` beyond `reach`, so the edge tail is
/// below `1e-13`. `N` is the smallest power of two, not below `min_points`, with
/// `k_max · s ≥ 24`, where `s` is [`singularity_distance`].
pub fn resolved_grid(omega: f64, c: f64, reach: f64, min_points: usize) -> Result<GridSpec> {
    resolved_grid_to(omega, c, reach, min_points, 1e-13)
}

/// [`resolved_grid`] with the edge tail bounded by `tail` instead of `1e-13`.
pub fn resolved_grid_to(omega: f64, c: f64, reach: f64, min_points: usize, tail: f64) -> Result<GridSpec> {
    if classify_regime(omega, c) != Regime::Subcritical {
        return Err(Error::RegimeUnsupported { omega, c });
    }
    let d = 4.0 * omega - c * c;
    let margin = 2.0 / d.sqrt() * (tail_prefactor(omega, c) / tail).ln().max(1.0);
    let half_length = (reach.abs() + margin).ceil();
    let k_needed = 24.0 / singularity_distance(omega, c);
    let n_needed = (2.0 * half_length * k_needed / PI).ceil() as usize;
    let n = n_needed.max(min_points).max(16).next_power_of_two();
    GridSpec::new(half_length, n)
}
