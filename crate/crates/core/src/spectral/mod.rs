//! Linearized operators `L±` around a traveling wave, their low spectrum, constrained
//! minima, and the quadratic forms built on them.

mod eigen;
mod forms;

use faer::Mat;
use serde::{Deserialize, Serialize};

pub use eigen::{orthonormal_constraints, smallest_eigenpairs, EigenMethod, SymOp, DENSE_LIMIT};
pub use forms::{
    coercivity_constant, form_h, form_htilde, h2_form, h_form, hb_form, htilde_form, localized_form,
    partition_weights, phi_weight, project_constraints, LocalCut, QuadraticForm,
};

use crate::error::{Error, Result};
use crate::numerics::{fft_forward, fft_inverse, Field, GridSpec, C64};
use crate::waves::{classify_regime, profile_slope, profile_value, Regime};

/// Eigenvalues below this are counted as negative.
pub const NEG_TOL: f64 = -1e-8;

/// Schrödinger operator `−½∂² + V` on real grid functions, `V` depending on the wave `(ω, c)`.
#[derive(Clone, Debug)]
pub struct LinOp {
    grid: GridSpec,
    omega: f64,
    c: f64,
    potential: Vec<f64>,
}

impl LinOp {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> (f64, f64) {
        (self.omega, self.c)
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Matrix-free action with the Fourier Laplacian.
    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        fft_forward(&mut buf);
        for (b, v) in buf.iter_mut().enumerate() {
            let k = self.grid.wavenumber(b);
            *v *= 0.5 * k * k;
        }
        fft_inverse(&mut buf);
        buf.iter().zip(x).zip(&self.potential).map(|((l, &x), &p)| l.re + p * x).collect()
    }

    /// Action on the real part of `f`.
    pub fn apply(&self, f: &Field) -> Field {
        Field::from_real(self.grid, &self.apply_vec(&f.re()))
    }

    /// `⟨Lη, η⟩ = ∫ (Lη) η` for real `η` (the real part of `f`).
    pub fn quadratic(&self, f: &Field) -> f64 {
        let x = f.re();
        let y = self.apply_vec(&x);
        x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() * self.grid.dx()
    }

    /// Dense matrix: circulant Fourier Laplacian plus the diagonal potential.
    pub fn dense(&self) -> Mat<f64> {
        let n = self.grid.n_points();
        let mut col: Vec<C64> = (0..n)
            .map(|b| {
                let k = self.grid.wavenumber(b);
                C64::new(0.5 * k * k, 0.0)
            })
            .collect();
        fft_inverse(&mut col);
        let col: Vec<f64> = (0..n).map(|m| 0.5 * (col[m].re + col[(n - m) % n].re)).collect();
        Mat::from_fn(n, n, |p, q| {
            let v = col[(p + n - q) % n];
            if p == q {
                v + self.potential[p]
            } else {
                v
            }
        })
    }

    /// `½(ω − c²/4)`, the bottom of the continuous spectrum.
    pub fn ess_floor(&self) -> f64 {
        ess_floor(self.omega, self.c)
    }
}

impl SymOp for LinOp {
    fn dim(&self) -> usize {
        self.grid.n_points()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.apply_vec(x));
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let shift = self.ess_floor().max(1e-3);
        let mut buf: Vec<C64> = r.iter().map(|&v| C64::new(v, 0.0)).collect();
        fft_forward(&mut buf);
        for (b, v) in buf.iter_mut().enumerate() {
            let k = self.grid.wavenumber(b);
            *v /= 0.5 * k * k + shift;
        }
        fft_inverse(&mut buf);
        z.iter_mut().zip(&buf).for_each(|(z, b)| *z = b.re);
    }

    fn to_dense(&self) -> Mat<f64> {
        self.dense()
    }
}

/// `½(ω − c²/4)`.
pub fn ess_floor(omega: f64, c: f64) -> f64 {
    0.5 * (omega - 0.25 * c * c)
}

fn require_subcritical(omega: f64, c: f64) -> Result<()> {
    if classify_regime(omega, c) != Regime::Subcritical {
        return Err(Error::RegimeUnsupported { omega, c });
    }
    Ok(())
}

/// `(L₊, L₋)` around `φ_{ω,c}` centered at the origin:
/// `L₊ = −½∂² + ½(ω−c²/4) + (3c/4)φ² − (15/32)φ⁴`,
/// `L₋ = −½∂² + ½(ω−c²/4) + (c/4)φ² − (3/32)φ⁴`.
pub fn linearized_ops(omega: f64, c: f64, grid: &GridSpec) -> Result<(LinOp, LinOp)> {
    require_subcritical(omega, c)?;
    let floor = ess_floor(omega, c);
    let phi2: Vec<f64> = grid.nodes().iter().map(|&x| profile_value(omega, c, x).powi(2)).collect();
    let plus = phi2.iter().map(|&p| floor + 0.75 * c * p - 15.0 / 32.0 * p * p).collect();
    let minus = phi2.iter().map(|&p| floor + 0.25 * c * p - 3.0 / 32.0 * p * p).collect();
    let op = |potential| LinOp { grid: *grid, omega, c, potential };
    Ok((op(plus), op(minus)))
}

/// Eigenvalue and eigenvector normalized in `L²` on the grid measure.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

fn normalize_pair(value: f64, mut v: Vec<f64>, dx: f64) -> EigenPair {
    let nrm = (v.iter().map(|x| x * x).sum::<f64>() * dx).sqrt();
    let pivot = v.iter().copied().fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
    let s = pivot.signum() / nrm;
    v.iter_mut().for_each(|x| *x *= s);
    EigenPair { value, vector: v }
}

/// The `k ≤ 20` smallest eigenpairs of `op`, ascending.
pub fn eigen_bottom(op: &LinOp, k: usize) -> Result<Vec<EigenPair>> {
    eigen_bottom_with(op, k, EigenMethod::Auto)
}

pub fn eigen_bottom_with(op: &LinOp, k: usize, method: EigenMethod) -> Result<Vec<EigenPair>> {
    if k > 20 {
        return Err(Error::InvalidConfig(format!("eigen_bottom supports k ≤ 20, got {k}")));
    }
    let dx = op.grid.dx();
    Ok(smallest_eigenpairs(op, k, &[], method)?
        .into_iter()
        .map(|(value, v)| normalize_pair(value, v, dx))
        .collect())
}

/// Smallest eigenvalue of `op` on the `L²`-orthogonal complement of the real parts of
/// `constraints`.
pub fn constrained_min(op: &LinOp, constraints: &[Field]) -> Result<f64> {
    constrained_min_with(op, constraints, EigenMethod::Auto)
}

pub fn constrained_min_with(op: &LinOp, constraints: &[Field], method: EigenMethod) -> Result<f64> {
    let q: Vec<Vec<f64>> = constraints.iter().map(Field::re).collect();
    Ok(smallest_eigenpairs(op, 1, &q, method)?[0].0)
}

/// `∂_ω φ` and `∂_c φ` by central differences with relative step `step`.
pub fn profile_param_derivatives(omega: f64, c: f64, grid: &GridSpec, step: f64) -> Result<(Field, Field)> {
    require_subcritical(omega, c)?;
    let hw = step * f64::max(1.0, omega.abs());
    let hc = step * f64::max(1.0, c.abs());
    for (w, cc) in [(omega + hw, c), (omega - hw, c), (omega, c + hc), (omega, c - hc)] {
        if classify_regime(w, cc) != Regime::Subcritical {
            return Err(Error::StepBreaksRegime { omega: w, c: cc });
        }
    }
    let diff = |w1: f64, c1: f64, w0: f64, c0: f64, h: f64| {
        Field::from_fn(*grid, |x| C64::new((profile_value(w1, c1, x) - profile_value(w0, c0, x)) / (2.0 * h), 0.0))
    };
    Ok((diff(omega + hw, c, omega - hw, c, hw), diff(omega, c + hc, omega, c - hc, hc)))
}

/// Relative residuals of `L₊∂_ωφ = −sφ` and `L₊∂_cφ = s(cφ/2 − φ³/2)`.
///
/// Differentiating the profile equation gives `s = ½` for this normalization of `L₊`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StructureResiduals {
    pub omega_rel: f64,
    pub c_rel: f64,
}

pub fn structure_residuals(omega: f64, c: f64, grid: &GridSpec, scale: f64) -> Result<StructureResiduals> {
    let (lp, _) = linearized_ops(omega, c, grid)?;
    let (d_omega, d_c) = profile_param_derivatives(omega, c, grid, 1e-4)?;
    let phi: Vec<f64> = grid.nodes().iter().map(|&x| profile_value(omega, c, x)).collect();
    let rel = |lhs: Vec<f64>, target: Vec<f64>| {
        let num: f64 = lhs.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = target.iter().map(|b| b * b).sum();
        (num / den).sqrt()
    };
    let t_omega = phi.iter().map(|p| -scale * p).collect();
    let t_c = phi.iter().map(|p| scale * (0.5 * c * p - 0.5 * p.powi(3))).collect();
    Ok(StructureResiduals {
        omega_rel: rel(lp.apply_vec(&d_omega.re()), t_omega),
        c_rel: rel(lp.apply_vec(&d_c.re()), t_c),
    })
}

/// `‖L₊φ′‖/‖φ′‖` and `‖L₋φ‖/‖φ‖` with the closed-form `φ` and `φ′`.
pub fn kernel_residuals(lp: &LinOp, lm: &LinOp) -> (f64, f64) {
    let (omega, c) = lp.params();
    let nodes = lp.grid.nodes();
    let slope: Vec<f64> = nodes.iter().map(|&x| profile_slope(omega, c, x)).collect();
    let phi: Vec<f64> = nodes.iter().map(|&x| profile_value(omega, c, x)).collect();
    let rel = |op: &LinOp, v: &[f64]| {
        let r = op.apply_vec(v);
        (r.iter().map(|x| x * x).sum::<f64>() / v.iter().map(|x| x * x).sum::<f64>()).sqrt()
    };
    (rel(lp, &slope), rel(lm, &phi))
}

/// Spectral summary of `L±` at one wave.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralReport {
    pub omega: f64,
    pub c: f64,
    /// `λ₁² = −(bottom eigenvalue of L₊)`.
    pub lambda1_sq: f64,
    /// Second eigenvalue of `L₊` (the translation kernel).
    pub lambda2: f64,
    /// Ground state `χ` of `L₊`, unit `L²` norm.
    pub chi: Vec<f64>,
    pub neg_count_plus: usize,
    pub neg_count_minus: usize,
    /// `‖L₊φ′‖/‖φ′‖`.
    pub kernel_plus: f64,
    /// `‖L₋φ‖/‖φ‖`.
    pub kernel_minus: f64,
    /// `μ(L₋ | φ)`.
    pub mu_minus: f64,
    /// `μ(L₊ | φ, φ³, φ′)`.
    pub mu_plus: f64,
    pub ess_floor: f64,
}

/// Column names of [`SpectralReport::csv_row`].
pub const SPECTRAL_HEADER: [&str; 11] = [
    "omega",
    "c",
    "lambda1_sq",
    "lambda2",
    "neg_count_plus",
    "neg_count_minus",
    "mu_minus",
    "mu_plus",
    "ess_floor",
    "kernel_plus",
    "kernel_minus",
];

impl SpectralReport {
    pub fn compute(omega: f64, c: f64, grid: &GridSpec) -> Result<Self> {
        let (lp, lm) = linearized_ops(omega, c, grid)?;
        let bottom_plus = eigen_bottom(&lp, 3)?;
        let bottom_minus = eigen_bottom(&lm, 2)?;
        let count = |pairs: &[EigenPair]| pairs.iter().filter(|p| p.value < NEG_TOL).count();
        let field = |f: &dyn Fn(f64) -> f64| Field::from_fn(*grid, |x| C64::new(f(x), 0.0));
        let phi = field(&|x| profile_value(omega, c, x));
        let phi3 = field(&|x| profile_value(omega, c, x).powi(3));
        let slope = field(&|x| profile_slope(omega, c, x));
        let (kernel_plus, kernel_minus) = kernel_residuals(&lp, &lm);
        Ok(SpectralReport {
            omega,
            c,
            lambda1_sq: -bottom_plus[0].value,
            lambda2: bottom_plus[1].value,
            chi: bottom_plus[0].vector.clone(),
            neg_count_plus: count(&bottom_plus),
            neg_count_minus: count(&bottom_minus),
            kernel_plus,
            kernel_minus,
            mu_minus: constrained_min(&lm, std::slice::from_ref(&phi))?,
            mu_plus: constrained_min(&lp, &[phi, phi3, slope])?,
            ess_floor: ess_floor(omega, c),
        })
    }

    pub fn csv_row(&self) -> [f64; 11] {
        [
            self.omega,
            self.c,
            self.lambda1_sq,
            self.lambda2,
            self.neg_count_plus as f64,
            self.neg_count_minus as f64,
            self.mu_minus,
            self.mu_plus,
            self.ess_floor,
            self.kernel_plus,
            self.kernel_minus,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_grid;

    fn grid() -> GridSpec {
        make_grid(20.0, 512).unwrap()
    }

    #[test]
    fn dense_matches_matrix_free_and_is_symmetric() {
        let (lp, _) = linearized_ops(1.0, 0.5, &grid()).unwrap();
        let a = lp.dense();
        let n = a.nrows();
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
            }
        }
        assert!(asym < 1e-12);
        let x: Vec<f64> = (0..n).map(|m| ((m as f64) * 0.37).sin() * (-(lp.grid.node(m) / 4.0).powi(2)).exp()).collect();
        let y = lp.apply_vec(&x);
        for i in 0..n {
            let yi: f64 = (0..n).map(|j| a[(i, j)] * x[j]).sum();
            assert!((yi - y[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_relations_hold() {
        let g = crate::waves::resolved_grid(1.0, 0.0, 0.0, 1024).unwrap();
        let (lp, lm) = linearized_ops(1.0, 0.0, &g).unwrap();
        let (kp, km) = kernel_residuals(&lp, &lm);
        assert!(kp < 1e-6, "{kp}");
        assert!(km < 1e-8, "{km}");
    }

    #[test]
    fn differentiated_profile_equation_fixes_the_half() {
        let g = make_grid(30.0, 1024).unwrap();
        for (omega, c) in [(1.0, 0.0), (1.0, 1.0), (2.0, -1.5)] {
            let half = structure_residuals(omega, c, &g, 0.5).unwrap();
            assert!(half.omega_rel < 1e-6 && half.c_rel < 1e-6, "{half:?}");
            let unit = structure_residuals(omega, c, &g, 1.0).unwrap();
            assert!((unit.omega_rel - 0.5).abs() < 1e-6, "{unit:?}");
        }
    }

    #[test]
    fn spectrum_at_the_cubic_point() {
        let g = make_grid(20.0, 512).unwrap();
        let (lp, lm) = linearized_ops(1.0, 0.0, &g).unwrap();
        let p = eigen_bottom(&lp, 3).unwrap();
        assert!(p[0].value < NEG_TOL);
        assert!(p[1].value.abs() < 1e-6, "{}", p[1].value);
        assert!(p[2].value > 0.0);
        let chi_norm: f64 = p[0].vector.iter().map(|x| x * x).sum::<f64>() * g.dx();
        assert!((chi_norm - 1.0).abs() < 1e-12);
        let m = eigen_bottom(&lm, 1).unwrap();
        assert!(m[0].value.abs() < 1e-6);
        let phi: Vec<f64> = g.nodes().iter().map(|&x| profile_value(1.0, 0.0, x)).collect();
        let pn = (phi.iter().map(|x| x * x).sum::<f64>() * g.dx()).sqrt();
        let overlap: f64 = phi.iter().zip(&m[0].vector).map(|(a, b)| a * b).sum::<f64>() * g.dx() / pn;
        assert!(overlap.abs() > 0.999);
    }

    #[test]
    fn box_modes_sit_above_the_floor() {
        let g = make_grid(20.0, 256).unwrap();
        let (lp, _) = linearized_ops(1.0, 0.0, &g).unwrap();
        let p = eigen_bottom(&lp, 10).unwrap();
        assert!(p[2..].iter().all(|e| e.value > lp.ess_floor() - 1e-3));
    }

    #[test]
    fn constraints_only_raise_the_minimum() {
        let g = grid();
        let (lp, lm) = linearized_ops(1.0, 0.0, &g).unwrap();
        let phi = Field::from_fn(g, |x| C64::new(profile_value(1.0, 0.0, x), 0.0));
        let phi3 = phi.map(|v| v * v * v);
        let slope = Field::from_fn(g, |x| C64::new(profile_slope(1.0, 0.0, x), 0.0));
        let free = constrained_min(&lp, &[]).unwrap();
        assert!((free - eigen_bottom(&lp, 1).unwrap()[0].value).abs() < 1e-12);
        let one = constrained_min(&lp, std::slice::from_ref(&phi)).unwrap();
        let all = constrained_min(&lp, &[phi.clone(), phi3, slope]).unwrap();
        assert!(free <= one + 1e-12 && one <= all + 1e-12);
        assert!(all > 1e-3);
        assert!(constrained_min(&lm, &[phi]).unwrap() > 1e-3);
    }

    #[test]
    fn matrix_free_agrees_with_dense() {
        let g = make_grid(20.0, 256).unwrap();
        let (lp, _) = linearized_ops(1.0, 0.5, &g).unwrap();
        let d = eigen_bottom_with(&lp, 3, EigenMethod::Dense).unwrap();
        let f = eigen_bottom_with(&lp, 3, EigenMethod::MatrixFree).unwrap();
        for (a, b) in d.iter().zip(&f) {
            assert!((a.value - b.value).abs() < 1e-7, "{} {}", a.value, b.value);
        }
    }

    #[test]
    fn supercritical_is_rejected() {
        assert!(matches!(linearized_ops(1.0, 2.5, &grid()), Err(Error::RegimeUnsupported { .. })));
    }
}
