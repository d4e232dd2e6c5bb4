//! Quadratic forms around one or two traveling waves and their coercivity against `‖·‖²_{H¹}`.
//!
//! Every form here has the shape
//! `½∫w|ε_x|² + ∫V|ε|² + Σ_k ∫W_k (Re R̄_k ε)² + Σ_j a_j ∫g_j Im(ε̄ ε_x)`.
//! [`QuadraticForm::value`] evaluates that integral directly and [`QuadraticForm::apply`]
//! gives the symmetric operator `A` with `value(ε) = Re∫(Aε) ε̄` on the grid.

use faer::Mat;

use super::eigen::{smallest_eigenpairs, EigenMethod, SymOp};
use super::{ess_floor, require_subcritical};
use crate::error::{Error, Result};
use crate::modulation::PairParams;
use crate::monotone::cutoff_h;
use crate::numerics::{apply_symbol, inner_re_unchecked, spectral_derivative, Field, GridSpec, C64};
use crate::waves::{profile_value, sample_wave, WaveParams};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug)]
pub struct QuadraticForm {
    grid: GridSpec,
    kinetic: Option<Vec<f64>>,
    potential: Vec<f64>,
    projections: Vec<(Field, Vec<f64>)>,
    currents: Vec<(f64, Option<Vec<f64>>)>,
}

impl QuadraticForm {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// The integral display evaluated with spectral derivatives.
    pub fn value(&self, eps: &Field) -> f64 {
        let ex = spectral_derivative(eps, 1);
        let e = eps.values();
        let d = ex.values();
        let mut total = 0.0;
        for m in 0..e.len() {
            let w = self.kinetic.as_ref().map_or(1.0, |k| k[m]);
            total += 0.5 * w * d[m].norm_sqr() + self.potential[m] * e[m].norm_sqr();
            for (r, wk) in &self.projections {
                total += wk[m] * (r.values()[m].conj() * e[m]).re.powi(2);
            }
            for (a, g) in &self.currents {
                let g = g.as_ref().map_or(1.0, |g| g[m]);
                total += a * g * (e[m].conj() * d[m]).im;
            }
        }
        total * self.grid.dx()
    }

    /// Symmetric operator of the form:
    /// `−½∂(w∂ε) + Vε + Σ W_k R_k Re(R̄_k ε) − (i/2) Σ a_j (g_j ε_x + ∂(g_j ε))`.
    pub fn apply(&self, eps: &Field) -> Field {
        let ex = spectral_derivative(eps, 1);
        let kin = match &self.kinetic {
            Some(w) => spectral_derivative(&ex.weight(w), 1),
            None => spectral_derivative(eps, 2),
        };
        let mut out: Vec<C64> = kin
            .values()
            .iter()
            .zip(eps.values())
            .zip(&self.potential)
            .map(|((k, e), v)| -0.5 * k + e * v)
            .collect();
        for (r, wk) in &self.projections {
            for (m, o) in out.iter_mut().enumerate() {
                let rm = r.values()[m];
                *o += rm * (wk[m] * (rm.conj() * eps.values()[m]).re);
            }
        }
        for (a, g) in &self.currents {
            let (ge_x, dge) = match g {
                Some(g) => (ex.weight(g), spectral_derivative(&eps.weight(g), 1)),
                None => (ex.clone(), ex.clone()),
            };
            for (m, o) in out.iter_mut().enumerate() {
                *o += -0.5 * a * I * (ge_x.values()[m] + dge.values()[m]);
            }
        }
        Field::from_vec(self.grid, out)
    }
}

fn real_field(grid: &GridSpec, f: impl Fn(f64) -> f64) -> Field {
    Field::from_fn(*grid, |x| C64::new(f(x), 0.0))
}

/// `H̃` around `φ_{ω,c}`: `⟨L₊η₁,η₁⟩ + ⟨L₋η₂,η₂⟩` in integral form.
pub fn htilde_form(omega: f64, c: f64, grid: &GridSpec) -> Result<QuadraticForm> {
    require_subcritical(omega, c)?;
    let phi = real_field(grid, |x| profile_value(omega, c, x));
    let floor = ess_floor(omega, c);
    let p2: Vec<f64> = phi.abs2();
    Ok(QuadraticForm {
        grid: *grid,
        kinetic: None,
        potential: p2.iter().map(|&p| floor + 0.25 * c * p - 3.0 / 32.0 * p * p).collect(),
        projections: vec![(phi, p2.iter().map(|&p| 0.5 * c - 3.0 / 8.0 * p).collect())],
        currents: Vec::new(),
    })
}

pub fn form_htilde(omega: f64, c: f64, eta: &Field) -> Result<f64> {
    Ok(htilde_form(omega, c, eta.grid())?.value(eta))
}

/// Soliton terms `c/4|R|² − 3/32|R|⁴` (potential) and `c/2 − 3/8|R|²` (projection).
fn soliton_terms(p: &WaveParams, grid: &GridSpec, weight: Option<&[f64]>) -> Result<(Vec<f64>, (Field, Vec<f64>))> {
    let r = sample_wave(p, grid, 0.0)?;
    let r2 = r.abs2();
    let w = |m: usize| weight.map_or(1.0, |w| w[m]);
    let pot = r2.iter().enumerate().map(|(m, &a)| w(m) * (0.25 * p.c * a - 3.0 / 32.0 * a * a)).collect();
    let proj = r2.iter().enumerate().map(|(m, &a)| w(m) * (0.5 * p.c - 3.0 / 8.0 * a)).collect();
    Ok((pot, (r, proj)))
}

/// `H` around `R(p)`:
/// `½∫|ε_x|² + ω/2∫|ε|² − c/2 Im∫ε̄ε_x + c/8(2∫|R|²|ε|² + 4∫(Re R̄ε)²)
///  − 1/32(3∫|R|⁴|ε|² + 12∫|R|²(Re R̄ε)²)`.
pub fn h_form(p: &WaveParams, grid: &GridSpec) -> Result<QuadraticForm> {
    require_subcritical(p.omega, p.c)?;
    let (pot, proj) = soliton_terms(p, grid, None)?;
    Ok(QuadraticForm {
        grid: *grid,
        kinetic: None,
        potential: pot.iter().map(|v| v + 0.5 * p.omega).collect(),
        projections: vec![proj],
        currents: vec![(-0.5 * p.c, None)],
    })
}

pub fn form_h(p: &WaveParams, eps: &Field) -> Result<f64> {
    Ok(h_form(p, eps.grid())?.value(eps))
}

/// Two-wave form `H₂` with the partition `g` (and `h = 1 − g`) weighting the `ω_k` and
/// `c_k Im` terms.
pub fn h2_form(pair: &PairParams, g: &[f64], grid: &GridSpec) -> Result<QuadraticForm> {
    let (p1, p2) = (pair.p1, pair.p2);
    require_subcritical(p1.omega, p1.c)?;
    require_subcritical(p2.omega, p2.c)?;
    let h: Vec<f64> = g.iter().map(|g| 1.0 - g).collect();
    let (pot1, proj1) = soliton_terms(&p1, grid, None)?;
    let (pot2, proj2) = soliton_terms(&p2, grid, None)?;
    let potential = (0..grid.n_points())
        .map(|m| 0.5 * p1.omega * g[m] + 0.5 * p2.omega * h[m] + pot1[m] + pot2[m])
        .collect();
    Ok(QuadraticForm {
        grid: *grid,
        kinetic: None,
        potential,
        projections: vec![proj1, proj2],
        currents: vec![(-0.5 * p1.c, Some(g.to_vec())), (-0.5 * p2.c, Some(h))],
    })
}

/// Even `C²` weight equal to 1 on `|x| ≤ 1` and to `e^{−|x|}` on `|x| ≥ 3/2`:
/// `Φ(x) = exp(−|x| S((|x|−1)/½))` with the quintic smoothstep `S`.
pub fn phi_weight(x: f64) -> f64 {
    let a = x.abs();
    let t = ((a - 1.0) / 0.5).clamp(0.0, 1.0);
    let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    (-a * s).exp()
}

/// `Φ((x − y₀)/B)` at the grid nodes.
pub fn phi_weight_field(b: f64, y0: f64, grid: &GridSpec) -> Vec<f64> {
    grid.nodes().iter().map(|&x| phi_weight((x - y0) / b)).collect()
}

/// `H` around `R(p)` with every integrand weighted by `Φ_{B,y₀}`.
pub fn hb_form(p: &WaveParams, b: f64, y0: f64, grid: &GridSpec) -> Result<QuadraticForm> {
    require_subcritical(p.omega, p.c)?;
    let w = phi_weight_field(b, y0, grid);
    let (pot, proj) = soliton_terms(p, grid, Some(&w))?;
    Ok(QuadraticForm {
        grid: *grid,
        kinetic: Some(w.clone()),
        potential: pot.iter().zip(&w).map(|(v, w)| v + 0.5 * p.omega * w).collect(),
        projections: vec![proj],
        currents: vec![(-0.5 * p.c, Some(w))],
    })
}

/// Default partition for `H₂`: `g` falls from 1 to 0 across `[x₁ + L/8, x₂ − L/8]`,
/// `L = x₂ − x₁`.
pub fn partition_weights(pair: &PairParams, grid: &GridSpec) -> Vec<f64> {
    let (x1, x2) = (pair.p1.x0, pair.p2.x0);
    let mid = 0.5 * (x1 + x2);
    let half = 0.375 * (x2 - x1);
    grid.nodes().iter().map(|&x| 1.0 - cutoff_h((x - mid) / half)).collect()
}

/// Localization used by [`localized_form`].
#[derive(Clone, Debug)]
pub enum LocalCut {
    /// `H₂` with partition `g`, `h = 1 − g`.
    Partition { g: Vec<f64> },
    /// `H_{B,y₀}` around wave `which` (0 or 1) of the pair.
    Weight { which: usize, b: f64, y0: f64 },
}

pub fn localized_form(pair: &PairParams, eps: &Field, cut: &LocalCut) -> Result<f64> {
    let grid = eps.grid();
    let form = match cut {
        LocalCut::Partition { g } => {
            if g.len() != grid.n_points() || g.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidConfig("partition weights must lie in [0,1] on the grid".into()));
            }
            h2_form(pair, g, grid)?
        }
        LocalCut::Weight { which, b, y0 } => {
            let p = match which {
                0 => pair.p1,
                1 => pair.p2,
                _ => return Err(Error::InvalidConfig(format!("wave index {which} out of range"))),
            };
            if !(*b > 0.0) {
                return Err(Error::InvalidConfig(format!("localization scale B = {b} must be positive")));
            }
            hb_form(&p, *b, *y0, grid)?
        }
    };
    Ok(form.value(eps))
}

/// `ε − Σ aᵢqᵢ` with `a` chosen so that `Re∫ε̄ qᵢ = 0` for every constraint.
pub fn project_constraints(eps: &Field, constraints: &[Field]) -> Result<Field> {
    let m = constraints.len();
    if m == 0 {
        return Ok(eps.clone());
    }
    for q in constraints {
        if q.grid() != eps.grid() {
            return Err(Error::GridMismatch);
        }
    }
    let gram = Mat::<f64>::from_fn(m, m, |i, j| inner_re_unchecked(&constraints[i], &constraints[j]));
    let rhs = Mat::<f64>::from_fn(m, 1, |i, _| inner_re_unchecked(&constraints[i], eps));
    let a = solve_spd(&gram, &rhs)?;
    let mut out = eps.clone();
    for (i, q) in constraints.iter().enumerate() {
        out = &out - &q.scale_re(a[i]);
    }
    Ok(out)
}

fn solve_spd(a: &Mat<f64>, b: &Mat<f64>) -> Result<Vec<f64>> {
    use faer::linalg::solvers::Solve;
    let llt = a.llt(faer::Side::Lower).map_err(|_| Error::RankDeficient)?;
    let x = llt.solve(b);
    Ok((0..b.nrows()).map(|i| x[(i, 0)]).collect())
}

/// `A` conjugated by `B^{-1/2}`, `B = 1 − ∂²`, acting on `[Re ε; Im ε]`.
struct H1Normalized<'a> {
    form: &'a QuadraticForm,
}

fn b_inv_sqrt(f: &Field) -> Field {
    apply_symbol(f, |k| C64::new(1.0 / (1.0 + k * k).sqrt(), 0.0))
}

fn pack(f: &Field) -> Vec<f64> {
    let mut v = f.re();
    v.extend(f.im());
    v
}

fn unpack(grid: &GridSpec, x: &[f64]) -> Field {
    let n = grid.n_points();
    Field::from_vec(*grid, (0..n).map(|m| C64::new(x[m], x[n + m])).collect())
}

impl SymOp for H1Normalized<'_> {
    fn dim(&self) -> usize {
        2 * self.form.grid.n_points()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let e = b_inv_sqrt(&unpack(&self.form.grid, x));
        let out = b_inv_sqrt(&self.form.apply(&e));
        y.copy_from_slice(&pack(&out));
    }
}

/// `min form(ε)/‖ε‖²_{H¹}` over `ε` with `Re∫ε̄ qᵢ = 0` for all constraints.
pub fn coercivity_constant(form: &QuadraticForm, constraints: &[Field], method: EigenMethod) -> Result<f64> {
    let q: Vec<Vec<f64>> = constraints.iter().map(|q| pack(&b_inv_sqrt(q))).collect();
    let op = H1Normalized { form };
    Ok(smallest_eigenpairs(&op, 1, &q, method)?[0].0)
}
