use fracfit_core::dataset::{average_traces, gen_synthetic, write_csv};
use fracfit_core::presets::design2;
use fracfit_core::*;

#[test]
fn halving_rk4_step_barely_moves_the_trace() {
    let p = NonlinearParams::with_default_damping(2.0, 3.0);
    let a = simulate_nonlinear(&p, &SimGrid::new(10.0, 2e-3).unwrap()).unwrap();
    let b = simulate_nonlinear(&p, &SimGrid::new(10.0, 1e-3).unwrap()).unwrap();
    for (i, v) in a.values.iter().enumerate() {
        assert!((v - b.values[2 * i]).abs() < 1e-6, "t={}", a.times[i]);
    }
}

#[test]
fn oscillation_envelope_decays() {
    let p = NonlinearParams {
        c_np: 0.3,
        ..NonlinearParams::with_default_damping(4.0, 2.0)
    };
    let tr = simulate_nonlinear(&p, &SimGrid::new(40.0, 1e-3).unwrap()).unwrap();
    let ss = p.steady_state();
    let dev: Vec<f64> = tr.values.iter().map(|v| (v - ss).abs()).collect();
    let peaks: Vec<f64> = (1..dev.len() - 1)
        .filter(|&i| dev[i] > dev[i - 1] && dev[i] >= dev[i + 1])
        .map(|i| dev[i])
        .collect();
    assert!(peaks.len() > 3);
    assert!(peaks.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{peaks:?}");
}

#[test]
fn steady_state_solves_the_spring_balance() {
    for (k, f, n, dn) in [
        (2.0, 3.0, 1.5, 0.0),
        (0.7, 1.2, 2.0, -0.4),
        (5.0, 0.5, 1.0, 0.3),
    ] {
        let p = NonlinearParams {
            n_p: n,
            delta_np: dn,
            ..NonlinearParams::with_default_damping(k, f)
        };
        let th = p.steady_state();
        assert!((k * th.powf(n + dn) - f).abs() < 1e-12 * f);
    }
}

#[test]
fn seven_trial_file_loads_seven_traces() {
    let ds = gen_synthetic(
        &design2(),
        &SimGrid::new(5.0, 0.1).unwrap(),
        30.0,
        7,
        0.01,
        4,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("seven.csv");
    export_csv(&ds, &path).unwrap();
    let back = load_csv(&path).unwrap();
    assert_eq!(back.traces.len(), 7);
    assert_eq!(back.material, "seven");
    assert_eq!(back.traces, ds.traces);
}

#[test]
fn synthetic_export_is_byte_identical_per_seed() {
    let grid = SimGrid::new(5.0, 0.05).unwrap();
    let bytes = |seed| {
        let ds = gen_synthetic(&design2(), &grid, 30.0, 3, 0.01, seed).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        buf
    };
    assert_eq!(bytes(17), bytes(17));
    assert_ne!(bytes(17), bytes(18));
    let text = String::from_utf8(bytes(17)).unwrap();
    assert!(text.starts_with("trial_id,t_s,theta_deg,setpoint_deg\n"));
    assert!(!text.contains('\r'));
}

#[test]
fn synthetic_design2_settles_at_scaled_dc_gain() {
    let tf = design2();
    let ds = gen_synthetic(&tf, &SimGrid::new(40.0, 0.5).unwrap(), 30.0, 1, 0.0, 0).unwrap();
    let last = *ds.traces[0].values.last().unwrap();
    assert!((last / 30.0 - dc_gain(&tf)).abs() < 1e-3, "{last}");
    let n = normalize(&ds).unwrap();
    assert!((n.traces[0].values.last().unwrap() - 0.3462).abs() < 1e-3);
}

#[test]
fn mean_of_noisy_copies_tracks_truth() {
    let tf = design2();
    let sigma = 0.02;
    let grid = SimGrid::new(8.0, 0.1).unwrap();
    let noisy = normalize(&gen_synthetic(&tf, &grid, 30.0, 7, sigma, 21).unwrap()).unwrap();
    let truth = normalize(&gen_synthetic(&tf, &grid, 30.0, 1, 0.0, 0).unwrap()).unwrap();
    let mean = average_traces(&noisy, &grid).unwrap();
    let bound = 3.0 * sigma / 7f64.sqrt();
    let within = mean
        .values
        .iter()
        .zip(&truth.traces[0].values)
        .filter(|(m, t)| (*m - *t).abs() <= bound)
        .count();
    // 3σ holds pointwise with probability 0.997; allow the odd exceedance.
    assert!(
        within as f64 >= 0.98 * mean.values.len() as f64,
        "{within}/{}",
        mean.values.len()
    );
}

#[test]
fn metrics_in_degrees_and_percent() {
    let tf = design2();
    let grid = SimGrid::new(5.0, 0.1).unwrap();
    let a = gen_synthetic(&tf, &grid, 60.0, 1, 0.0, 0)
        .unwrap()
        .traces
        .remove(0);
    let mut b = a.clone();
    b.values.iter_mut().for_each(|v| *v += 2.52);
    let m = ErrorMetrics::between(&a, &b, 60.0).unwrap();
    assert!((m.rmse_deg - 2.52).abs() < 1e-12);
    assert!((m.rmse_percent - 4.2).abs() < 1e-12);
    let json = serde_json::to_value(m).unwrap();
    for key in ["rmse_deg", "rmse_percent", "setpoint_deg"] {
        assert!(json.get(key).is_some());
    }
}
