//! Cutoff function, moving-line weights, localized mass/momentum functionals, the local mass
//! window, and the quartic interpolation inequality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{conserved, Densities};
use crate::modulation::PairParams;
use crate::numerics::{integrate_real, spectral_derivative, Field, GridSpec};

/// `C³` nondecreasing cutoff: 0 for `x ≤ −1`, 1 for `x ≥ 1`, and
/// `s(t) = 35t⁴ − 84t⁵ + 70t⁶ − 20t⁷` with `t = (x+1)/2` in between.
pub fn cutoff_h(x: f64) -> f64 {
    cutoff_derivatives(x)[0]
}

/// `(h, h′, h″, h‴)` at `x`.
pub fn cutoff_derivatives(x: f64) -> [f64; 4] {
    if x <= -1.0 {
        return [0.0; 4];
    }
    if x >= 1.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let t = 0.5 * (x + 1.0);
    let u = 1.0 - t;
    let poly = |t: f64| t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3));
    // s(t) = 1 − s(1 − t) keeps the upper half within [0, 1] under rounding.
    let s = if t <= 0.5 { poly(t) } else { 1.0 - poly(u) };
    let s1 = 140.0 * t.powi(3) * u.powi(3);
    let s2 = 420.0 * t * t * u * u * (1.0 - 2.0 * t);
    let s3 = 840.0 * t * u * (1.0 - 5.0 * t + 5.0 * t * t);
    [s, 0.5 * s1, 0.25 * s2, 0.125 * s3]
}

/// Suprema of `(h′)²/h` and `(h″)²/h′` over the open transition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffAudit {
    pub c_a: f64,
    pub c_b: f64,
}

/// Samples `10⁵` points of `(−1, 1)` avoiding `10⁻⁶` bands at the ends.
pub fn cutoff_audit() -> CutoffAudit {
    let n = 100_000;
    let (lo, hi) = (-1.0 + 1e-6, 1.0 - 1e-6);
    let mut audit = CutoffAudit { c_a: 0.0, c_b: 0.0 };
    for i in 0..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let [h, h1, h2, _] = cutoff_derivatives(x);
        audit.c_a = audit.c_a.max(h1 * h1 / h);
        audit.c_b = audit.c_b.max(h2 * h2 / h1);
    }
    audit
}

/// Which moving line a weight follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineVariant {
    /// Speed `σ`.
    Center,
    /// Speed `σ_{+,0}`.
    PlusZero,
    /// Speed `σ_{−,0}`.
    MinusZero,
    /// Speed `σ_{0,+}`.
    ZeroPlus,
    /// Speed `σ_{0,−}`.
    ZeroMinus,
}

impl LineVariant {
    pub const ALL: [LineVariant; 5] =
        [LineVariant::Center, LineVariant::PlusZero, LineVariant::MinusZero, LineVariant::ZeroPlus, LineVariant::ZeroMinus];
}

/// Line `x = x̄⁰ + σt` with transition width `√(t + a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneLineSpec {
    pub xbar0: f64,
    pub sigma: f64,
    pub a: f64,
    pub variant: LineVariant,
}

impl MonotoneLineSpec {
    /// Line through the midpoint of the initial pair, `a = L²/64` with `L = x₂⁰ − x₁⁰`.
    pub fn new(pp0: &PairParams, variant: LineVariant) -> Result<Self> {
        let s = pp0.speeds()?;
        let sigma = match variant {
            LineVariant::Center => s.sigma,
            LineVariant::PlusZero => s.sigma_plus0,
            LineVariant::MinusZero => s.sigma_minus0,
            LineVariant::ZeroPlus => s.sigma_0plus(),
            LineVariant::ZeroMinus => s.sigma_0minus(),
        };
        let l = pp0.separation();
        Ok(MonotoneLineSpec { xbar0: 0.5 * (pp0.p1.x0 + pp0.p2.x0), sigma, a: l * l / 64.0, variant })
    }

    fn argument(&self, t: f64, x: f64) -> f64 {
        (x - self.xbar0 - self.sigma * t) / (t + self.a).sqrt()
    }
}

/// `(𝔤, 𝔥)` with `𝔥 = h((x − x̄⁰ − σt)/√(t+a))` and `𝔤 = 1 − 𝔥`.
pub fn line_weights(t: f64, spec: &MonotoneLineSpec, grid: &GridSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(t >= 0.0) {
        return Err(Error::InvalidConfig(format!("line weights need t ≥ 0, got {t}")));
    }
    let h: Vec<f64> = grid.nodes().iter().map(|&x| cutoff_h(spec.argument(t, x))).collect();
    let g = h.iter().map(|h| 1.0 - h).collect();
    Ok((g, h))
}

/// Localized functionals at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizedValues {
    /// `𝔉`.
    pub f: f64,
    /// `𝔔 = 𝔉 − ω₁M − c₁P`.
    pub q: f64,
    pub q_plus0: f64,
    pub q_minus0: f64,
    pub q_0plus: f64,
    pub q_0minus: f64,
    /// `𝔈 = E + 𝔉`.
    pub e_loc: f64,
}

impl LocalizedValues {
    /// `[𝔔, 𝔔_{+,0}, 𝔔_{−,0}, 𝔔_{0,+}, 𝔔_{0,−}]`.
    pub fn monotone(&self) -> [f64; 5] {
        [self.q, self.q_plus0, self.q_minus0, self.q_0plus, self.q_0minus]
    }
}

/// Evaluates the localized functionals at time `t` with weights frozen at the initial pair.
pub fn localized_functionals(t: f64, u: &Field, pp0: &PairParams) -> Result<LocalizedValues> {
    let (p1, p2) = (pp0.p1, pp0.p2);
    if p1.omega == p2.omega {
        return Err(Error::InvalidConfig("ω₁ = ω₂ leaves the line functionals undefined".into()));
    }
    let speeds = pp0.speeds()?;
    let grid = u.grid();
    let dx = grid.dx();
    let dens = Densities::of(u);
    let half_mass: Vec<f64> = dens.abs2.iter().map(|a| 0.5 * a).collect();
    let mom = dens.momentum();
    let weighted = |w: &[f64], d: &[f64]| integrate_real(&w.iter().zip(d).map(|(a, b)| a * b).collect::<Vec<_>>(), dx);
    let along = |variant| -> Result<(f64, f64)> {
        let (_, h) = line_weights(t, &MonotoneLineSpec::new(pp0, variant)?, grid)?;
        Ok((weighted(&h, &half_mass), weighted(&h, &mom)))
    };
    let (gm, hm) = {
        let (g, h) = line_weights(t, &MonotoneLineSpec::new(pp0, LineVariant::Center)?, grid)?;
        ((weighted(&g, &half_mass), weighted(&g, &mom)), (weighted(&h, &half_mass), weighted(&h, &mom)))
    };
    let f = p1.omega * gm.0 + p1.c * gm.1 + p2.omega * hm.0 + p2.c * hm.1;
    let total = conserved(u);
    let dc = p2.c - p1.c;
    let dw = p2.omega - p1.omega;
    let (mp, pp) = along(LineVariant::PlusZero)?;
    let (mm, pm) = along(LineVariant::MinusZero)?;
    let (m0p, p0p) = along(LineVariant::ZeroPlus)?;
    let (m0m, p0m) = along(LineVariant::ZeroMinus)?;
    Ok(LocalizedValues {
        f,
        q: f - p1.omega * total.mass - p1.c * total.momentum,
        q_plus0: dc * (0.5 * speeds.sigma_plus0 * mp + pp),
        q_minus0: dc * (0.5 * speeds.sigma_minus0 * mm + pm),
        q_0plus: dw * (m0p + 2.0 / speeds.sigma_0plus() * p0p),
        q_0minus: dw * (m0m + 2.0 / speeds.sigma_0minus() * p0m),
        e_loc: total.energy + f,
    })
}

/// `∫_{|x − x̄⁰ − σt| < √(t+a)} |u|²` by the rectangle rule.
pub fn local_mass_window(t: f64, u: &Field, spec: &MonotoneLineSpec) -> f64 {
    window_integral(t, &u.abs2(), spec, u.grid())
}

/// Rectangle-rule integral of `density` over the window of `spec` at time `t`.
pub fn window_integral(t: f64, density: &[f64], spec: &MonotoneLineSpec, grid: &GridSpec) -> f64 {
    grid.nodes()
        .iter()
        .zip(density)
        .filter(|(&x, _)| spec.argument(t, x).abs() < 1.0)
        .map(|(_, d)| d)
        .sum::<f64>()
        * grid.dx()
}

/// Both sides of the two quartic interpolation inequalities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarticAudit {
    /// `∫|w|⁴h`.
    pub lhs_quartic: f64,
    /// `‖|w|²h‖_∞ ∫_{supp h}|w|²`.
    pub rhs_quartic: f64,
    /// `‖|w|²h‖_∞`.
    pub lhs_sup: f64,
    /// `2(∫|w_x|²h)^{1/2}(∫|w|²h)^{1/2} + ∫|w|²|h_x|`.
    pub rhs_sup: f64,
    pub pass: bool,
}

/// Evaluates the inequalities for a nonnegative weight `h` that is smooth and periodic on
/// the box (its derivative is spectral).
pub fn quartic_inequality_audit(w: &Field, h: &[f64]) -> Result<QuarticAudit> {
    let grid = w.grid();
    if h.len() != grid.n_points() {
        return Err(Error::GridMismatch);
    }
    if h.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidConfig("quartic audit needs a nonnegative bounded weight".into()));
    }
    let dx = grid.dx();
    let a2 = w.abs2();
    let wx2 = spectral_derivative(w, 1).abs2();
    let hx = spectral_derivative(&Field::from_real(*grid, h), 1).re();
    let sum = |f: &dyn Fn(usize) -> f64| (0..a2.len()).map(f).sum::<f64>() * dx;
    let lhs_quartic = sum(&|m| a2[m] * a2[m] * h[m]);
    let lhs_sup = (0..a2.len()).map(|m| a2[m] * h[m]).fold(0.0, f64::max);
    let supp_mass = sum(&|m| if h[m] > 0.0 { a2[m] } else { 0.0 });
    let rhs_quartic = lhs_sup * supp_mass;
    let rhs_sup = 2.0 * sum(&|m| wx2[m] * h[m]).sqrt() * sum(&|m| a2[m] * h[m]).sqrt() + sum(&|m| a2[m] * hx[m].abs());
    let tol = 1.0 + 1e-10;
    Ok(QuarticAudit {
        lhs_quartic,
        rhs_quartic,
        lhs_sup,
        rhs_sup,
        pass: lhs_quartic <= rhs_quartic * tol && lhs_sup <= rhs_sup * tol,
    })
}

/// Increments of the five monotone functionals with the data of their bounds.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MonotoneSeries {
    pub times: Vec<f64>,
    /// `[𝔔, 𝔔_{+,0}, 𝔔_{−,0}, 𝔔_{0,+}, 𝔔_{0,−}](t) − (same)(0)`.
    pub increments: Vec<[f64; 5]>,
    /// `sup_{s ≤ t} ∫|ε(s)|²`.
    pub eps_sup: Vec<f64>,
    pub separation: f64,
    pub theta2: f64,
    pub theta3: f64,
}

impl MonotoneSeries {
    /// Builds the series from per-frame values and `‖ε‖_{L²}`.
    pub fn new(times: &[f64], values: &[LocalizedValues], eps_l2: &[f64], pp0: &PairParams) -> Result<Self> {
        if values.is_empty() || values.len() != times.len() || eps_l2.len() != times.len() {
            return Err(Error::InvalidConfig("monotone series needs matching, nonempty inputs".into()));
        }
        let th = pp0.thresholds()?;
        let q0 = values[0].monotone();
        let mut running: f64 = 0.0;
        let eps_sup = eps_l2
            .iter()
            .map(|e| {
                running = running.max(e * e);
                running
            })
            .collect();
        Ok(MonotoneSeries {
            times: times.to_vec(),
            increments: values.iter().map(|v| std::array::from_fn(|i| v.monotone()[i] - q0[i])).collect(),
            eps_sup,
            separation: pp0.separation(),
            theta2: th.theta2,
            theta3: th.theta3,
        })
    }

    /// `sup∫|ε|²/L + e^{−θL}` with `θ₂` for `𝔔` and `θ₃` for the line variants.
    pub fn driver(&self, n: usize, i: usize) -> f64 {
        let theta = if i == 0 { self.theta2 } else { self.theta3 };
        self.eps_sup[n] / self.separation + (-theta * self.separation).exp()
    }

    /// `1.5 · max(0, max_{n,i} increment/driver)`.
    pub fn fitted_constant(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (n, inc) in self.increments.iter().enumerate() {
            for (i, v) in inc.iter().enumerate() {
                worst = worst.max(v / self.driver(n, i));
            }
        }
        1.5 * worst
    }

    /// Bound `C · driver` per frame and functional.
    pub fn bound(&self, constant: f64) -> Vec<[f64; 5]> {
        (0..self.times.len()).map(|n| std::array::from_fn(|i| constant * self.driver(n, i))).collect()
    }

    /// Whether every increment stays below its bound.
    pub fn holds(&self, constant: f64) -> bool {
        self.increments
            .iter()
            .zip(self.bound(constant))
            .all(|(inc, b)| inc.iter().zip(&b).all(|(v, b)| v <= b))
    }

    /// Largest `|increment|` over frames and functionals.
    pub fn max_excursion(&self) -> f64 {
        self.increments.iter().flat_map(|v| v.iter()).fold(0.0, |a: f64, v| a.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{make_grid, random_smooth_field, XorShift64Star, C64};
    use crate::waves::{sample_wave, WaveParams};

    fn pair() -> PairParams {
        PairParams::new(WaveParams::new(1.0, 1.0, -15.0, 0.0), WaveParams::new(3.0, 3.0, 15.0, 1.0)).unwrap()
    }

    #[test]
    fn cutoff_values_and_derivatives() {
        assert_eq!(cutoff_h(-2.0), 0.0);
        assert_eq!(cutoff_h(2.0), 1.0);
        assert!((cutoff_h(0.0) - 0.5).abs() < 1e-15);
        let d = cutoff_derivatives(0.0);
        // s′(1/2) = 140/64, so h′(0) = 35/32.
        assert!((d[1] - 35.0 / 32.0).abs() < 1e-15);
        let h = 1e-4;
        for &x in &[-0.7, -0.2, 0.3, 0.85] {
            let a = cutoff_derivatives(x);
            let p = cutoff_derivatives(x + h);
            let m = cutoff_derivatives(x - h);
            for k in 0..3 {
                assert!(((p[k] - m[k]) / (2.0 * h) - a[k + 1]).abs() < 1e-6);
            }
            assert!(a[1] > 0.0);
        }
    }

    #[test]
    fn cutoff_constants_are_finite() {
        let a = cutoff_audit();
        assert!(a.c_a.is_finite() && a.c_b.is_finite());
        assert!(a.c_a > 0.0 && a.c_b > 0.0);
    }

    #[test]
    fn weights_partition_unity() {
        let g = make_grid(60.0, 1024).unwrap();
        let spec = MonotoneLineSpec::new(&pair(), LineVariant::Center).unwrap();
        assert_eq!(spec.sigma, 2.0);
        assert_eq!(spec.a, 900.0 / 64.0);
        let (gw, hw) = line_weights(0.0, &spec, &g).unwrap();
        for (a, b) in gw.iter().zip(&hw) {
            assert!((a + b - 1.0).abs() < 1e-15 && (0.0..=1.0).contains(b));
        }
        assert_eq!(hw[0], 0.0);
        // Transition spans 2√(t+a) up to one cell.
        let t = 3.0;
        let (_, hw) = line_weights(t, &spec, &g).unwrap();
        let inside: Vec<f64> = g.nodes().into_iter().zip(&hw).filter(|(_, h)| **h > 0.01 && **h < 0.99).map(|(x, _)| x).collect();
        let width = inside.last().unwrap() - inside.first().unwrap();
        let h01 = {
            // The 1%..99% band of h is narrower than its support; compare against the exact band.
            let mut lo = -1.0;
            let mut hi = 0.0;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if cutoff_h(mid) < 0.01 {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            -2.0 * hi
        };
        assert!((width - h01 * (t + spec.a).sqrt()).abs() <= 2.0 * g.dx());
    }

    #[test]
    fn zero_field_and_weight_collapse() {
        let g = make_grid(60.0, 1024).unwrap();
        let z = localized_functionals(0.0, &Field::zeros(g), &pair()).unwrap();
        assert!(z.monotone().iter().all(|v| *v == 0.0) && z.f == 0.0);
        // Waves far to the right of every line: 𝔥 = 1 on their support.
        let pp = PairParams::new(WaveParams::new(1.0, 1.0, -200.0, 0.0), WaveParams::new(3.0, 3.0, -120.0, 0.0)).unwrap();
        let u = sample_wave(&WaveParams::new(1.0, 0.5, 20.0, 0.0), &g, 0.0).unwrap();
        let v = localized_functionals(0.0, &u, &pp).unwrap();
        let c = conserved(&u);
        assert!((v.f - (3.0 * c.mass + 3.0 * c.momentum)).abs() < 1e-12);
    }

    #[test]
    fn window_mass_between_solitons() {
        let g = make_grid(60.0, 4096).unwrap();
        let pp = pair();
        let u = &sample_wave(&pp.p1, &g, 0.0).unwrap() + &sample_wave(&pp.p2, &g, 0.0).unwrap();
        let spec = MonotoneLineSpec::new(&pp, LineVariant::Center).unwrap();
        assert!(local_mass_window(0.0, &u, &spec) < 1e-6);
        let inside = Field::from_fn(g, |x| C64::new((-(x * x) * 4.0).exp(), 0.0));
        let full: f64 = inside.abs2().iter().sum::<f64>() * g.dx();
        assert!((local_mass_window(0.0, &inside, &spec) - full).abs() < 1e-14);
    }

    #[test]
    fn quartic_inequalities() {
        let g = make_grid(20.0, 512).unwrap();
        let bump = |x: f64| cutoff_h((x + 6.0) / 2.0) * (1.0 - cutoff_h((x - 5.0) / 3.0));
        let h: Vec<f64> = g.nodes().iter().map(|&x| bump(x)).collect();
        let w = Field::from_fn(g, |x| C64::new((-(x - 1.0).powi(2)).exp(), 0.0));
        assert!(quartic_inequality_audit(&w, &h).unwrap().pass);
        let z = quartic_inequality_audit(&Field::zeros(g), &h).unwrap();
        assert!(z.pass && z.lhs_quartic == 0.0);
        let mut rng = XorShift64Star::new(42);
        for _ in 0..20 {
            let center = rng.uniform(-5.0, 5.0);
            let w = random_smooth_field(g, &mut rng, center, 3.0, 4.0);
            assert!(quartic_inequality_audit(&w.scale_re(3.0), &h).unwrap().pass);
        }
    }
}
