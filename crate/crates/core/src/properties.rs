//! Property tests: invariances and identities checked against direct sums and exact algebra.

use std::f64::consts::TAU;

use crate::evolve::{evolve, EvolveConfig};
use crate::functionals::conserved;
use crate::gauge::{gauge_forward, gauge_inverse};
use crate::modulation::fit_single;
use crate::monotone::{line_weights, LineVariant, MonotoneLineSpec};
use crate::numerics::{
    fft_forward, fft_inverse, field_from_snapshot, make_grid, snapshot_bytes, spectral_derivative, XorShift64Star,
};
use crate::waves::sample_wave;
use crate::{Field, GridSpec, PairParams, WaveParams, C64};
use proptest::prelude::*;

fn grid() -> GridSpec {
    make_grid(20.0, 256).unwrap()
}

/// Sum of two complex Gaussians, negligible at the box edge.
fn bumps(a: [f64; 4], centers: [f64; 2], widths: [f64; 2]) -> Field {
    Field::from_fn(grid(), |x| {
        let g1 = (-((x - centers[0]) / widths[0]).powi(2)).exp();
        let g2 = (-((x - centers[1]) / widths[1]).powi(2)).exp();
        C64::new(a[0], a[1]) * g1 + C64::new(a[2], a[3]) * g2
    })
}

fn field_strategy() -> impl Strategy<Value = Field> {
    (prop::array::uniform4(-2.0..2.0f64), prop::array::uniform2(-5.0..5.0f64), prop::array::uniform2(0.7..2.0f64))
        .prop_map(|(a, c, w)| bumps(a, c, w))
}

fn max_diff(f: &Field, g: &Field) -> f64 {
    f.values().iter().zip(g.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

fn max_abs(f: &Field) -> f64 {
    f.values().iter().map(|v| v.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval_matches_direct_sums(f in field_strategy()) {
        let mut hat = f.values().to_vec();
        fft_forward(&mut hat);
        let direct: f64 = f.values().iter().map(|v| v.norm_sqr()).sum();
        let spectral: f64 = hat.iter().map(|v| v.norm_sqr()).sum::<f64>() / hat.len() as f64;
        prop_assert!((direct - spectral).abs() <= 1e-12 * (1.0 + direct));
        fft_inverse(&mut hat);
        let back = Field::new(*f.grid(), hat).unwrap();
        prop_assert!(max_diff(&back, &f) <= 1e-13 * (1.0 + max_abs(&f)));
    }

    #[test]
    fn derivative_is_linear(f in field_strategy(), g in field_strategy(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let combo = f.zip_map(&g, |x, y| x * a + y * b);
        let lhs = spectral_derivative(&combo, 1);
        let rhs = spectral_derivative(&f, 1).zip_map(&spectral_derivative(&g, 1), |x, y| x * a + y * b);
        prop_assert!(max_diff(&lhs, &rhs) <= 1e-11 * (1.0 + max_abs(&lhs)));
    }

    #[test]
    fn derivative_commutes_with_cell_shifts(f in field_strategy(), cells in -40isize..40) {
        let lhs = spectral_derivative(&f.roll(cells), 1);
        let rhs = spectral_derivative(&f, 1).roll(cells);
        prop_assert!(max_diff(&lhs, &rhs) <= 1e-11 * (1.0 + max_abs(&lhs)));
    }

    #[test]
    fn derivative_integrates_to_zero(f in field_strategy()) {
        let df = spectral_derivative(&f, 1);
        prop_assert!(df.integral().norm() <= 1e-11 * (1.0 + max_abs(&df)));
    }

    #[test]
    fn conserved_quantities_invariant_under_cell_shifts(f in field_strategy(), cells in -40isize..40) {
        let a = conserved(&f);
        let b = conserved(&f.roll(cells));
        for (x, y) in [(a.mass, b.mass), (a.momentum, b.momentum), (a.energy, b.energy)] {
            prop_assert!((x - y).abs() <= 1e-11 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn mass_scales_exactly_for_powers_of_two(f in field_strategy(), k in -4i32..4) {
        let s = 2f64.powi(k);
        let m = conserved(&f).mass;
        let ms = conserved(&f.scale_re(s)).mass;
        prop_assert_eq!(ms, s * s * m);
    }

    #[test]
    fn mass_scales_quadratically(f in field_strategy(), s in 0.01..3.0f64) {
        let m = conserved(&f).mass;
        let ms = conserved(&f.scale_re(s)).mass;
        prop_assert!((ms - s * s * m).abs() <= 1e-13 * (1.0 + ms));
    }

    #[test]
    fn gauge_transforms_compose_and_invert(f in field_strategy(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let twice = gauge_forward(&gauge_forward(&f, a).unwrap(), b).unwrap();
        let once = gauge_forward(&f, a + b).unwrap();
        prop_assert!(max_diff(&twice, &once) <= 1e-12 * (1.0 + max_abs(&f)));
        let back = gauge_inverse(&gauge_forward(&f, a).unwrap(), a).unwrap();
        prop_assert!(max_diff(&back, &f) <= 1e-13 * (1.0 + max_abs(&f)));
        let moduli = gauge_forward(&f, a).unwrap().abs();
        for (x, y) in moduli.iter().zip(f.abs()) {
            prop_assert!((x - y).abs() <= 1e-14 * (1.0 + y));
        }
    }

    #[test]
    fn snapshots_round_trip_bitwise(f in field_strategy()) {
        let back = field_from_snapshot(&snapshot_bytes(&f)).unwrap();
        prop_assert_eq!(back.grid(), f.grid());
        prop_assert_eq!(back.values(), f.values());
    }

    #[test]
    fn dyadic_phase_shift_by_full_turn_is_bitwise_periodic(
        omega in 0.5..2.0f64, rho in -0.8..0.8f64, x0 in -3.0..3.0f64, k in 0u32..64,
    ) {
        let c = rho * 2.0 * omega.sqrt();
        let gamma = k as f64 / 16.0;
        let a = sample_wave(&WaveParams::new(omega, c, x0, gamma), &grid(), 0.0).unwrap();
        let b = sample_wave(&WaveParams::new(omega, c, x0, gamma + TAU), &grid(), 0.0).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn line_weights_partition_unity(t in 0.0..20.0f64, x2 in 15.0..40.0f64) {
        let pp = PairParams::new(WaveParams::new(1.0, 1.0, -x2, 0.0), WaveParams::new(3.0, 3.0, x2, 1.0)).unwrap();
        let g = make_grid(60.0, 512).unwrap();
        for variant in LineVariant::ALL {
            let spec = MonotoneLineSpec::new(&pp, variant).unwrap();
            let (gw, hw) = line_weights(t, &spec, &g).unwrap();
            for (a, b) in gw.iter().zip(&hw) {
                prop_assert!((0.0..=1.0).contains(a) && (0.0..=1.0).contains(b));
                prop_assert!((a + b - 1.0).abs() <= 1e-15);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn evolution_commutes_with_constant_phase(f in field_strategy(), theta in 0.0..TAU) {
        let cfg = EvolveConfig { dt: 1e-3, t_final: 0.02, dealias: true, observer_stride: 20 };
        let rot = C64::from_polar(1.0, theta);
        let a = evolve(&f.scale(rot), &cfg, &mut []).unwrap().final_state;
        let b = evolve(&f, &cfg, &mut []).unwrap().final_state.scale(rot);
        prop_assert!(max_diff(&a, &b) <= 1e-11 * (1.0 + max_abs(&b)));
    }

    #[test]
    fn fit_recovers_sampled_wave(omega in 0.6..2.0f64, rho in -0.6..0.6f64, x0 in -1.0..1.0f64, gamma in 0.0..TAU) {
        let c = rho * 2.0 * omega.sqrt();
        let p = WaveParams::new(omega, c, x0, gamma);
        let g = make_grid(40.0, 1024).unwrap();
        let u = sample_wave(&p, &g, 0.0).unwrap();
        let guess = WaveParams::new(omega * 1.02, c + 0.02, x0 + 0.05, gamma + 0.05);
        let fit = fit_single(&u, &guess).unwrap();
        let q = fit.waves[0];
        prop_assert!((q.omega - omega).abs() < 1e-8 && (q.c - c).abs() < 1e-8 && (q.x0 - x0).abs() < 1e-8);
        let dg = (q.gamma() - p.gamma()).rem_euclid(TAU);
        prop_assert!(dg.min(TAU - dg) < 1e-8);
        prop_assert!(fit.eps_h1 < 1e-8);
    }
}

#[test]
fn random_smooth_fields_are_reproducible_from_the_seed() {
    let draw = |seed| {
        let mut rng = XorShift64Star::new(seed);
        crate::numerics::random_smooth_field(grid(), &mut rng, 0.0, 3.0, 4.0)
    };
    assert_eq!(draw(7).values(), draw(7).values());
    assert_ne!(draw(7).values(), draw(8).values());
}
