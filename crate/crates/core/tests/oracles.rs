//! Comparisons against values computed outside this crate: 50-digit mpmath
//! series and Laplace inversion (see `data/oracle_values.py`), closed forms,
//! and an independent RK4 integrator.

#![allow(clippy::excessive_precision)]

use fracfit_core::model::SeriesKernel;
use fracfit_core::presets::{design1, design2};
use fracfit_core::special::mittag_leffler_3p;
use fracfit_core::*;
use statrs::function::erf::erfc;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn mittag_leffler_matches_high_precision_series() {
    let cases = [
        ((1.406, 2.0, 1.0, -1.0), 0.716_474_970_848_530_55),
        ((1.406, 2.21, 3.0, -5.0), -0.104_796_959_667_299_5),
        ((0.5, 1.0, 1.0, -5.0), 0.110_704_637_733_068_63),
        ((1.5, 2.0, 4.0, -10.0), 0.146_897_350_073_598_92),
        ((0.8, 1.3, 2.5, 3.0), 481.986_536_205_491_95),
    ];
    for ((a, b, g, z), want) in cases {
        let r = mittag_leffler_3p(a, b, g, z).unwrap();
        assert!(r.converged, "{a} {b} {g} {z}");
        let err = (r.value - want).abs() / want.abs().max(1.0);
        assert!(
            err < 1e-12,
            "E({a},{b},{g};{z}) = {} want {want} (rel err {err:e})",
            r.value
        );
    }
}

// Two-parameter series written out independently of the crate.
fn ml2_reference(alpha: f64, beta: f64, z: f64) -> f64 {
    let mut sum = 0.0;
    for n in 0..400 {
        let t = z.powi(n) / statrs::function::gamma::gamma(alpha * n as f64 + beta);
        sum += t;
        if n > 10 && t.abs() < 1e-18 {
            break;
        }
    }
    sum
}

// E_{1/2,1}(z) = e^{z²} erfc(−z)
fn ml_half_1(z: f64) -> f64 {
    (z * z).exp() * erfc(-z)
}

#[test]
fn three_parameter_reduces_to_two_parameter() {
    let zs = [-5.0, -3.3, -1.0, -0.2, 0.0, 0.4, 1.7, 3.0, 5.0];
    for &z in &zs {
        for (alpha, beta) in [(1.0, 1.0), (1.0, 2.0), (1.5, 1.0), (1.5, 2.0)] {
            let want = ml2_reference(alpha, beta, z);
            let got = mittag_leffler_3p(alpha, beta, 1.0, z).unwrap().value;
            assert!(
                close(got, want, 1e-10 * want.abs().max(1.0)),
                "a={alpha} b={beta} z={z}: {got} vs {want}"
            );
        }
        let want1 = ml_half_1(z);
        let got1 = mittag_leffler_3p(0.5, 1.0, 1.0, z).unwrap().value;
        assert!(
            close(got1, want1, 1e-10 * want1.abs().max(1.0)),
            "a=0.5 b=1 z={z}: {got1} vs {want1}"
        );
        if z != 0.0 {
            // E_{1/2,2}(z) = ((E_{1/2,1}(z) − 1)/z − 1/Γ(3/2)) / z
            let want2 = ((want1 - 1.0) / z - 2.0 / std::f64::consts::PI.sqrt()) / z;
            let got2 = mittag_leffler_3p(0.5, 2.0, 1.0, z).unwrap().value;
            let tol =
                1e-10 * want2.abs().max(1.0) + if z.abs() < 1.0 { 1e-14 / (z * z) } else { 0.0 };
            assert!(
                close(got2, want2, tol),
                "a=0.5 b=2 z={z}: {got2} vs {want2}"
            );
        }
    }
}

#[test]
fn exponential_identity_over_wide_range() {
    for i in -200..=200 {
        let z = i as f64 / 10.0;
        let v = mittag_leffler_3p(1.0, 1.0, 1.0, z).unwrap().value;
        let e = z.exp();
        // Absolute 1e-9 holds until e^z itself has a spacing above 1e-9.
        let tol = if z <= 15.0 { 1e-9 } else { 1e-14 * e };
        assert!(close(v, e, tol), "z={z}: {v} vs {e}");
    }
}

#[test]
fn frequency_response_matches_complex_arithmetic_oracle() {
    let g = freq_response(&design2(), 1.0).unwrap();
    assert!(close(g.re, 0.197_343_234_438_680_8, 1e-14));
    assert!(close(g.im, -0.279_888_537_015_721_2, 1e-14));
}

#[test]
fn resonance_magnitude_of_integer_order_case() {
    let tf = FracTransferFunction::new(2.0, 1.0, 0.6, 4.0, 1.3).unwrap();
    let wn = 2.0;
    let g = freq_response(&tf, wn).unwrap();
    assert!(close(g.norm(), 1.3 / (0.6 * wn), 1e-12));
}

#[test]
fn step_series_matches_high_precision_values() {
    let d1 = [
        (0.5, 0.158_750_620_069_096_3),
        (1.0, 0.337_630_373_699_477_66),
        (2.0, 0.571_460_644_583_347_3),
        (5.0, 0.615_947_971_020_267_6),
    ];
    let d2 = [
        (0.5, 0.111_388_719_530_223_92),
        (1.0, 0.228_712_144_904_895_9),
        (2.0, 0.362_261_823_219_892_44),
        (5.0, 0.364_463_378_857_411_96),
    ];
    for (tf, table) in [(design1(), d1), (design2(), d2)] {
        let mut k = SeriesKernel::new(&tf).unwrap();
        for (t, want) in table {
            let p = k.eval(t);
            let tol = 1e-12 + p.rounding_estimate;
            assert!(close(p.value, want, tol), "t={t}: {} vs {want}", p.value);
        }
    }
    let deg = FracTransferFunction::new(2.0, 1.0, 2.0, 1.0, 1.0).unwrap();
    let y = step_response_series(&deg, 1.0).unwrap();
    assert!(close(y, 0.264_241_117_657_115_36, 1e-12));
}

#[test]
fn long_horizon_gl_matches_laplace_inversion() {
    // Talbot inversion in 30-digit arithmetic; about six significant digits.
    let tf = design1();
    let grid = SimGrid::new(49.0, 1e-3).unwrap();
    let tr = simulate_gl(&tf, 1.0, &grid).unwrap();
    for (t, want) in [(10.0, 0.576_762), (20.0, 0.573_013), (49.0, 0.571_059)] {
        let i = (t / grid.step).round() as usize;
        assert!(
            close(tr.values[i], want, 2e-5),
            "t={t}: {} vs {want}",
            tr.values[i]
        );
    }
}

// y'' + a1 y' + a0 y = b0 by classical RK4.
fn rk4_second_order(a1: f64, a0: f64, b0: f64, h: f64, n: usize) -> Vec<f64> {
    let f = |y: f64, v: f64| (v, b0 - a1 * v - a0 * y);
    let (mut y, mut v) = (0.0, 0.0);
    let mut out = vec![0.0];
    for _ in 1..n {
        let k1 = f(y, v);
        let k2 = f(y + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
        let k3 = f(y + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
        let k4 = f(y + h * k3.0, v + h * k3.1);
        y += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        out.push(y);
    }
    out
}

#[test]
fn integer_orders_reduce_to_classical_second_order() {
    for (a1, a0, b0) in [(2.0, 1.0, 1.0), (0.8, 4.0, 2.0), (3.0, 1.5, 0.5)] {
        let tf = FracTransferFunction::new(2.0, 1.0, a1, a0, b0).unwrap();
        let fine = SimGrid::new(10.0, 1e-4).unwrap();
        let gl = simulate_gl(&tf, 1.0, &fine).unwrap();
        let rk = rk4_second_order(a1, a0, b0, fine.step, fine.n_points());
        let err = gl
            .values
            .iter()
            .zip(&rk)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "GL vs RK4 ({a1},{a0},{b0}): {err:e}");

        // The fallback is first order in its step; 0.1 ms keeps it well
        // inside the bound for every case here.
        let grid = SimGrid::default();
        let opts = ResponseOptions {
            gl_step: 1e-4,
            ..ResponseOptions::default()
        };
        let resp = step_response(&tf, &grid.times(), &opts).unwrap();
        let rk = rk4_second_order(a1, a0, b0, grid.step, grid.n_points());
        let err = resp
            .values
            .iter()
            .zip(&rk)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "step_response vs RK4 ({a1},{a0},{b0}): {err:e}");
    }
}

#[test]
fn baseline_linear_case_equals_integer_order_fractional_model() {
    // ζ = 0.5, ωn = 1.5 in both parameterizations.
    let (zeta, wn) = (0.5, 1.5);
    let frac = FracTransferFunction::new(2.0, 1.0, 2.0 * zeta * wn, wn * wn, wn * wn).unwrap();
    let base = NonlinearParams {
        m_eq: 1.0,
        c_np: 2.0 * zeta * wn,
        k_np: wn * wn,
        n_p: 1.0,
        delta_np: 0.0,
        force: wn * wn,
    };
    let grid = SimGrid::default();
    let a = step_response(&frac, &grid.times(), &ResponseOptions::default()).unwrap();
    let b = simulate_nonlinear(&base, &grid).unwrap();
    let err = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn dc_gain_examples() {
    assert!(close(dc_gain(&design1()), 0.570_207_570_207_570_2, 1e-15));
    assert!(close(dc_gain(&design2()), 0.346_172_135_045_173_6, 1e-15));
    let unity = FracTransferFunction::new(1.5, 1.2, 0.7, 1.9, 1.9).unwrap();
    assert_eq!(dc_gain(&unity), 1.0);
}
