//! Conserved quantities, the action and Nehari functionals, and the Hessian `d″(ω,c)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate_real, spectral_derivative, Field, GridSpec};
use crate::waves::{classify_regime, wave_field, Regime, WaveParams};

/// Mass, momentum and energy of a field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservedTriple {
    pub mass: f64,
    pub momentum: f64,
    pub energy: f64,
}

/// `d″(ω,c) = [[∂_ω M, ∂_c M], [∂_ω P, ∂_c P]]` along the soliton family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianD2 {
    pub m: [[f64; 2]; 2],
}

impl HessianD2 {
    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// `|∂_c M − ∂_ω P|`.
    pub fn symmetry_defect(&self) -> f64 {
        (self.m[0][1] - self.m[1][0]).abs()
    }
}

/// Pointwise densities `|u|²`, `Im(ū u_x)`, `|u_x|²` shared by the functionals.
pub(crate) struct Densities {
    pub abs2: Vec<f64>,
    pub im_conj_ux: Vec<f64>,
    pub abs2_ux: Vec<f64>,
}

impl Densities {
    pub(crate) fn of(u: &Field) -> Self {
        let ux = spectral_derivative(u, 1);
        let abs2 = u.abs2();
        let im_conj_ux = u.values().iter().zip(ux.values()).map(|(a, b)| (a.conj() * b).im).collect();
        let abs2_ux = ux.abs2();
        Densities { abs2, im_conj_ux, abs2_ux }
    }

    /// Momentum density `−½ Im(ū u_x) + ⅛|u|⁴`.
    pub(crate) fn momentum(&self) -> Vec<f64> {
        self.abs2.iter().zip(&self.im_conj_ux).map(|(a, i)| -0.5 * i + 0.125 * a * a).collect()
    }
}

/// `M = ½∫|u|²`, `P = −½ Im∫ū u_x + ⅛∫|u|⁴`, `E = ½∫|u_x|² − (1/32)∫|u|⁶`.
pub fn conserved(u: &Field) -> ConservedTriple {
    let dx = u.grid().dx();
    let d = Densities::of(u);
    let mass = 0.5 * integrate_real(&d.abs2, dx);
    let momentum = integrate_real(&d.momentum(), dx);
    let sextic: Vec<f64> = d.abs2.iter().map(|a| a * a * a).collect();
    let energy = 0.5 * integrate_real(&d.abs2_ux, dx) - integrate_real(&sextic, dx) / 32.0;
    ConservedTriple { mass, momentum, energy }
}

/// `J_{ω,c}(u) = E + ωM + cP`.
pub fn action_j(omega: f64, c: f64, u: &Field) -> f64 {
    let q = conserved(u);
    q.energy + omega * q.mass + c * q.momentum
}

/// `K_{ω,c}(u) = ∫(|u_x|² − (3/16)|u|⁶ + ω|u|² − c Im(ū u_x) + (c/2)|u|⁴)`.
pub fn nehari_k(omega: f64, c: f64, u: &Field) -> f64 {
    let d = Densities::of(u);
    let density: Vec<f64> = (0..u.len())
        .map(|m| {
            let a = d.abs2[m];
            d.abs2_ux[m] - 3.0 / 16.0 * a * a * a + omega * a - c * d.im_conj_ux[m] + 0.5 * c * a * a
        })
        .collect();
    integrate_real(&density, u.grid().dx())
}

/// `(M, P)` of the centered wave `φ_{ω,c} e^{icx/2}`.
pub fn soliton_mp(omega: f64, c: f64, grid: &GridSpec) -> Result<(f64, f64)> {
    if classify_regime(omega, c) != Regime::Subcritical {
        return Err(Error::RegimeUnsupported { omega, c });
    }
    let q = conserved(&wave_field(&WaveParams::new(omega, c, 0.0, 0.0), grid, 0.0)?);
    Ok((q.mass, q.momentum))
}

/// Central-difference `d″(ω,c)` with steps `step·max(1,|ω|)` and `step·max(1,|c|)`.
pub fn d_second(omega: f64, c: f64, grid: &GridSpec, step: f64) -> Result<HessianD2> {
    let hw = step * f64::max(1.0, omega.abs());
    let hc = step * f64::max(1.0, c.abs());
    let probes = [(omega + hw, c), (omega - hw, c), (omega, c + hc), (omega, c - hc)];
    for &(w, cc) in &probes {
        if classify_regime(w, cc) != Regime::Subcritical {
            return Err(Error::StepBreaksRegime { omega: w, c: cc });
        }
    }
    let [wp, wm, cp, cm] = probes.map(|(w, cc)| soliton_mp(w, cc, grid));
    let (wp, wm, cp, cm) = (wp?, wm?, cp?, cm?);
    Ok(HessianD2 {
        m: [
            [(wp.0 - wm.0) / (2.0 * hw), (cp.0 - cm.0) / (2.0 * hc)],
            [(wp.1 - wm.1) / (2.0 * hw), (cp.1 - cm.1) / (2.0 * hc)],
        ],
    })
}

/// One row of the soliton audit table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub omega: f64,
    pub c: f64,
    pub mass: f64,
    pub momentum: f64,
    pub energy: f64,
    pub action: f64,
    pub nehari: f64,
    pub d11: f64,
    pub d12: f64,
    pub d21: f64,
    pub d22: f64,
    pub det: f64,
}

pub const AUDIT_HEADER: [&str; 12] = ["omega", "c", "M", "P", "E", "J", "K", "d11", "d12", "d21", "d22", "det"];

impl AuditRow {
    pub fn compute(omega: f64, c: f64, grid: &GridSpec) -> Result<Self> {
        let r = wave_field(&WaveParams::new(omega, c, 0.0, 0.0), grid, 0.0)?;
        let q = conserved(&r);
        let h = d_second(omega, c, grid, 1e-4)?;
        Ok(AuditRow {
            omega,
            c,
            mass: q.mass,
            momentum: q.momentum,
            energy: q.energy,
            action: q.energy + omega * q.mass + c * q.momentum,
            nehari: nehari_k(omega, c, &r),
            d11: h.m[0][0],
            d12: h.m[0][1],
            d21: h.m[1][0],
            d22: h.m[1][1],
            det: h.det(),
        })
    }

    pub fn values(&self) -> [f64; 12] {
        [
            self.omega, self.c, self.mass, self.momentum, self.energy, self.action, self.nehari, self.d11,
            self.d12, self.d21, self.d22, self.det,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{make_grid, C64};
    use crate::waves::{phi_profile, resolved_grid};
    use std::f64::consts::PI;

    // Closed forms from ∫dy/(cosh y − b) = 2 arccos(−b)/√(1−b²) and its b-derivative.
    fn mass_oracle(omega: f64, c: f64) -> f64 {
        let rho = c / (2.0 * omega.sqrt());
        2.0 * (-rho).acos()
    }

    fn momentum_oracle(omega: f64, c: f64) -> f64 {
        let rho = c / (2.0 * omega.sqrt());
        let d = 4.0 * omega - c * c;
        let s = 1.0 - rho * rho;
        let quartic = d * d / omega / d.sqrt() * (2.0 / s + 2.0 * rho * (-rho).acos() / s.powf(1.5));
        -c * (-rho).acos() + quartic / 8.0
    }

    #[test]
    fn sech_soliton_values() {
        let g = make_grid(20.0, 1024).unwrap();
        let phi = phi_profile(1.0, 0.0, &g).unwrap();
        let q = conserved(&phi);
        assert!((q.mass - PI).abs() < 1e-8);
        assert!((q.momentum - 2.0).abs() < 1e-8);
        assert!(q.energy.abs() < 1e-8);
        assert!((action_j(1.0, 0.0, &phi) - PI).abs() < 1e-8);
        assert!(nehari_k(1.0, 0.0, &phi).abs() < 1e-8);
    }

    #[test]
    fn zero_field_and_phase_invariance() {
        let g = make_grid(20.0, 256).unwrap();
        let z = Field::zeros(g);
        assert_eq!(conserved(&z), ConservedTriple { mass: 0.0, momentum: 0.0, energy: 0.0 });
        assert_eq!(action_j(1.0, 0.5, &z), 0.0);
        assert_eq!(nehari_k(1.0, 0.5, &z), 0.0);
        let u = Field::from_fn(g, |x| C64::new((-(x * x)).exp(), 0.3 * x * (-(x * x)).exp()));
        let q = conserved(&u);
        let r = conserved(&u.scale(C64::from_polar(1.0, 0.77)));
        assert!((q.mass - r.mass).abs() < 1e-12);
        assert!((q.momentum - r.momentum).abs() < 1e-12);
        assert!((q.energy - r.energy).abs() < 1e-12);
    }

    #[test]
    fn moving_soliton_is_on_nehari_manifold() {
        let g = resolved_grid(1.0, 1.0, 0.0, 1024).unwrap();
        let r = wave_field(&WaveParams::new(1.0, 1.0, 0.0, 0.0), &g, 0.0).unwrap();
        assert!(nehari_k(1.0, 1.0, &r).abs() < 1e-7);
    }

    #[test]
    fn soliton_mp_matches_closed_forms() {
        for &(omega, c) in &[(1.0, 0.0), (1.0, 1.0), (0.5, -0.6), (2.0, 2.0)] {
            let g = resolved_grid(omega, c, 0.0, 1024).unwrap();
            let (m, p) = soliton_mp(omega, c, &g).unwrap();
            assert!((m - mass_oracle(omega, c)).abs() < 1e-10, "M({omega},{c})");
            assert!((p - momentum_oracle(omega, c)).abs() < 1e-10, "P({omega},{c})");
        }
    }

    #[test]
    fn soliton_mp_scaling_and_refinement() {
        let g = resolved_grid(1.0, 0.0, 0.0, 1024).unwrap();
        let (m4, _) = soliton_mp(4.0, 0.0, &g).unwrap();
        assert!((m4 - PI).abs() < 1e-10);
        let g2 = GridSpec::new(g.half_length(), 2 * g.n_points()).unwrap();
        let (a, b) = (soliton_mp(1.0, 0.7, &g).unwrap(), soliton_mp(1.0, 0.7, &g2).unwrap());
        assert!((a.0 - b.0).abs() < 1e-10 && (a.1 - b.1).abs() < 1e-10);
    }

    #[test]
    fn action_derivative_in_omega_is_mass() {
        let g = resolved_grid(1.0, 0.5, 0.0, 1024).unwrap();
        let h = 1e-4;
        let j = |w: f64| {
            let r = wave_field(&WaveParams::new(w, 0.5, 0.0, 0.0), &g, 0.0).unwrap();
            action_j(w, 0.5, &r)
        };
        let dj = (j(1.0 + h) - j(1.0 - h)) / (2.0 * h);
        let (m, _) = soliton_mp(1.0, 0.5, &g).unwrap();
        assert!((dj - m).abs() < 1e-5);
    }

    #[test]
    fn hessian_is_nondegenerate_and_matches_oracle() {
        for &(omega, c) in &[(1.0, 0.0), (1.0, 1.0)] {
            let g = resolved_grid(omega, c, 0.0, 1024).unwrap();
            let h = d_second(omega, c, &g, 1e-4).unwrap();
            assert!(h.det() < 0.0);
            assert!(h.symmetry_defect() < 1e-4);
            let e = 1e-6;
            let dm_dw = (mass_oracle(omega + e, c) - mass_oracle(omega - e, c)) / (2.0 * e);
            let dp_dc = (momentum_oracle(omega, c + e) - momentum_oracle(omega, c - e)) / (2.0 * e);
            assert!((h.m[0][0] - dm_dw).abs() < 1e-6);
            assert!((h.m[1][1] - dp_dc).abs() < 1e-6);
        }
        let g = make_grid(40.0, 1024).unwrap();
        assert!(matches!(d_second(1.0, 1.99999, &g, 1e-4), Err(Error::StepBreaksRegime { .. })));
    }

    #[test]
    fn audit_row_layout() {
        let g = resolved_grid(1.0, 0.0, 0.0, 1024).unwrap();
        let row = AuditRow::compute(1.0, 0.0, &g).unwrap();
        assert_eq!(row.values().len(), AUDIT_HEADER.len());
        assert!((row.action - PI).abs() < 1e-8);
        assert!(row.det < 0.0);
    }
}
