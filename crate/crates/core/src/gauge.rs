//! Gauge transformation `u = e^{i a ∫_{−Λ}^{x} |v|²} v` between equivalent forms of the equation.
//!
//! The phase integral starts at the left box edge, standing in for `−∞`. The cumulative sum at
//! node `m` is the left rectangle sum `Δx Σ_{j<m} |v_j|²`.

use crate::error::{Error, Result};
use crate::numerics::{Field, C64};

/// Default gauge exponent linking the two forms of the equation.
pub const GAUGE_A: f64 = 0.75;

/// Left-rectangle cumulative mass `Δx Σ_{j<m} |f_j|²` at every node.
pub fn cumulative_mass(f: &Field) -> Vec<f64> {
    let dx = f.grid().dx();
    let mut acc = 0.0;
    f.values()
        .iter()
        .map(|v| {
            let here = acc;
            acc += v.norm_sqr() * dx;
            here
        })
        .collect()
}

fn check_left_edge(f: &Field) -> Result<()> {
    let sup = f.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let edge = f.values().first().map_or(0.0, |v| v.norm());
    if edge > 1e-8 * sup {
        return Err(Error::LeftTailNotDecayed { edge, sup });
    }
    Ok(())
}

fn rotate(f: &Field, a: f64) -> Result<Field> {
    check_left_edge(f)?;
    let phase = cumulative_mass(f);
    let values = f.values().iter().zip(&phase).map(|(&v, &s)| v * C64::from_polar(1.0, a * s)).collect();
    Ok(Field::from_vec(*f.grid(), values))
}

/// `u = e^{i a ∫|v|²} v`.
pub fn gauge_forward(v: &Field, a: f64) -> Result<Field> {
    rotate(v, a)
}

/// `v = e^{−i a ∫|u|²} u`; exact inverse of [`gauge_forward`] since `|u| = |v|`.
pub fn gauge_inverse(u: &Field, a: f64) -> Result<Field> {
    rotate(u, -a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{make_grid, norm, NormKind};

    fn bump() -> Field {
        let g = make_grid(20.0, 512).unwrap();
        Field::from_fn(g, |x| C64::new((-(x - 1.0).powi(2)).exp(), 0.5 * (-(x + 2.0).powi(2)).exp()))
    }

    #[test]
    fn zero_exponent_is_identity() {
        let v = bump();
        assert_eq!(gauge_forward(&v, 0.0).unwrap(), v);
    }

    #[test]
    fn real_input_gets_cumulative_phase() {
        let g = make_grid(20.0, 512).unwrap();
        let u = Field::from_fn(g, |x| C64::new(1.0 / x.cosh(), 0.0));
        let a = 1.7;
        let v = gauge_inverse(&u, a).unwrap();
        let dx = g.dx();
        let mut s = 0.0;
        for m in 0..512 {
            let want = C64::from_polar(u.values()[m].re, -a * s);
            assert!((v.values()[m] - want).norm() < 1e-14);
            s += u.values()[m].re.powi(2) * dx;
        }
    }

    #[test]
    fn zero_field_maps_to_zero() {
        let z = Field::zeros(make_grid(5.0, 64).unwrap());
        assert_eq!(gauge_inverse(&z, GAUGE_A).unwrap(), z);
    }

    #[test]
    fn undecayed_left_edge_is_rejected() {
        let g = make_grid(5.0, 64).unwrap();
        let flat = Field::from_fn(g, |_| C64::new(1.0, 0.0));
        assert!(matches!(gauge_forward(&flat, GAUGE_A), Err(Error::LeftTailNotDecayed { .. })));
    }

    #[test]
    fn round_trip_and_modulus() {
        let v = bump();
        let u = gauge_forward(&v, GAUGE_A).unwrap();
        for (a, b) in u.values().iter().zip(v.values()) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }
        let back = gauge_inverse(&u, GAUGE_A).unwrap();
        assert!(norm(&(&back - &v), NormKind::Linf) < 1e-12);
    }
}
