use fracfit_core::dataset::{average_traces, read_csv, rmse_values, write_csv};
use fracfit_core::model::SeriesKernel;
use fracfit_core::pso::{
    particle_rng, run_pso_with, sample_particle, update_particle, Particle, Position, UpdateOrder,
};
use fracfit_core::special::{ml_series_term, pochhammer};
use fracfit_core::*;
use proptest::prelude::*;

fn tf_in_bounds() -> impl Strategy<Value = FracTransferFunction> {
    (
        1.1f64..1.9,
        1.0f64..1.5,
        0.3f64..1.2,
        0.8f64..2.5,
        0.5f64..2.0,
    )
        .prop_filter("alpha1 < alpha2", |(a2, a1, ..)| a1 < a2)
        .prop_map(|(a2, a1, c1, c0, b0)| FracTransferFunction::new(a2, a1, c1, c0, b0).unwrap())
}

proptest! {
    #[test]
    fn pochhammer_recurrence(g in -20.0f64..20.0, n in 0u32..40) {
        let a = pochhammer(g, n).unwrap();
        let b = pochhammer(g, n + 1).unwrap();
        prop_assert!((b - a * (g + n as f64)).abs() <= 1e-12 * b.abs().max(1e-300) + 1e-300);
    }

    #[test]
    fn series_term_is_composed_from_parts(alpha in 0.2f64..2.0, beta in 0.1f64..3.0, g in 0.1f64..4.0, z in -8.0f64..8.0, n in 0u32..30) {
        let t = ml_series_term(alpha, beta, g, z, n).unwrap();
        let nf = (1..=n).map(f64::from).product::<f64>();
        let want = pochhammer(g, n).unwrap() * z.powi(n as i32) / (nf * gamma_fn(alpha * n as f64 + beta).unwrap());
        prop_assert!((t - want).abs() <= 1e-13 * want.abs() + 1e-300, "{t} vs {want}");
    }

    #[test]
    fn gl_response_is_exactly_linear(tf in tf_in_bounds(), amp in -50.0f64..50.0) {
        let grid = SimGrid::new(2.0, 1e-3).unwrap();
        let unit = simulate_gl(&tf, 1.0, &grid).unwrap();
        let scaled = simulate_gl(&tf, amp, &grid).unwrap();
        for (u, s) in unit.values.iter().zip(&scaled.values) {
            prop_assert_eq!(*s, amp * u);
        }
    }

    #[test]
    fn every_path_starts_at_zero(tf in tf_in_bounds()) {
        prop_assert_eq!(step_response_series(&tf, 0.0).unwrap(), 0.0);
        prop_assert_eq!(simulate_gl(&tf, 1.0, &SimGrid::new(1.0, 1e-2).unwrap()).unwrap().values[0], 0.0);
        prop_assert_eq!(step_response(&tf, &[0.0], &ResponseOptions::default()).unwrap().values[0], 0.0);
    }

    #[test]
    fn rmse_is_a_metric(
        a in prop::collection::vec(-10.0f64..10.0, 1..40),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = a.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect();
        prop_assert_eq!(rmse_values(&a, &b), rmse_values(&b, &a));
        prop_assert_eq!(rmse_values(&a, &a), 0.0);
        if a != b {
            prop_assert!(rmse_values(&a, &b) > 0.0);
        }
        prop_assert!(rmse_values(&a, &c) <= rmse_values(&a, &b) + rmse_values(&b, &c) + 1e-12);
    }

    #[test]
    fn csv_round_trip(
        n_trials in 1usize..5,
        n_points in 1usize..30,
        sp in 1.0f64..90.0,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let traces = (0..n_trials).map(|i| {
            let mut t = 0.0;
            let times: Vec<f64> = (0..n_points).map(|_| { t += rng.random_range(1e-3..0.5); t }).collect();
            let values = (0..n_points).map(|_| rng.random_range(-5.0..100.0)).collect();
            StepTrace::new(format!("trial {i}"), times, values, sp).unwrap()
        }).collect();
        let ds = Dataset::new(traces, "m").unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), "m").unwrap();
        prop_assert_eq!(back.traces, ds.traces);
        let mut again = Vec::new();
        write_csv(&read_csv(buf.as_slice(), "m").unwrap(), &mut again).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn averaging_commutes_with_normalization(sp in 5.0f64..90.0, seed in any::<u64>(), n in 1usize..6) {
        let tf = presets::design2();
        let times = SimGrid::new(4.0, 0.1).unwrap();
        let ds = dataset::gen_synthetic(&tf, &times, sp, n, 0.02, seed).unwrap();
        let grid = SimGrid::new(3.9, 0.05).unwrap();
        let a = average_traces(&normalize(&ds).unwrap(), &grid).unwrap();
        let b = average_traces(&ds, &grid).unwrap();
        let b = normalize(&Dataset::new(vec![b], "m").unwrap()).unwrap().traces.remove(0);
        prop_assert_eq!(&a.times, &b.times);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn series_and_gl_agree_across_bounds(tf in tf_in_bounds()) {
        let grid = SimGrid::default();
        let gl = simulate_gl(&tf, 1.0, &grid).unwrap();
        let mut k = SeriesKernel::new(&tf).unwrap();
        for (i, t) in grid.times().into_iter().enumerate().step_by(7) {
            let p = k.eval(t);
            if p.converged {
                prop_assert!((p.value - gl.values[i]).abs() < 1e-3, "t={t}: {} vs {}", p.value, gl.values[i]);
            }
        }
    }

    #[test]
    fn response_tail_approaches_dc_gain(tf in tf_in_bounds()) {
        let dc = dc_gain(&tf);
        let probe = SimGrid::new(30.0, 1e-2).unwrap();
        let tr = simulate_gl(&tf, 1.0, &probe).unwrap();
        let ts = model::settling_time(&tr.times, &tr.values, dc, 0.02);
        prop_assume!(ts.is_some());
        let horizon = (10.0 * ts.unwrap()).max(1.0);
        let long = SimGrid::new(horizon, 1e-2).unwrap();
        let tr = simulate_gl(&tf, 1.0, &long).unwrap();
        let end = *tr.values.last().unwrap();
        prop_assert!((end - dc).abs() < 1e-2 * dc, "{end} vs {dc}");
    }
}

fn sphere(target: Position) -> impl Fn(&Position) -> f64 + Sync {
    move |x: &Position| {
        x.iter()
            .zip(&target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn swarm_invariants(seed in any::<u64>(), swarm in 2usize..30, iters in 1usize..12, sync in any::<bool>()) {
        let cfg = PsoConfig {
            swarm_size: swarm,
            iterations: iters,
            seed,
            update: if sync { UpdateOrder::Synchronous } else { UpdateOrder::Sequential },
            ..PsoConfig::default()
        };
        let f = sphere([1.4, 1.2, 0.8, 1.6, 0.9]);
        let r = run_pso_with(&cfg, &f).unwrap();
        prop_assert_eq!(r.history.len(), iters);
        prop_assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(r.best_fitness, *r.history.last().unwrap());
        prop_assert_eq!(f(&r.best_position), r.best_fitness);
        for p in r.trajectory.iter().chain(std::iter::once(&r.best_position)) {
            prop_assert!(cfg.bounds.contains(p));
            prop_assert!(p[1] < p[0]);
        }
        prop_assert_eq!(r.clone(), run_pso_with(&cfg, &f).unwrap());
    }

    #[test]
    fn updates_stay_feasible(seed in any::<u64>(), gb in prop::array::uniform5(0.0f64..3.0)) {
        let cfg = PsoConfig { seed, ..PsoConfig::default() };
        let mut rng = particle_rng(seed, 0);
        let (x, v) = sample_particle(&cfg, &mut rng);
        prop_assert!(cfg.bounds.contains(&x) && x[1] < x[0]);
        let mut p = Particle { position: x, velocity: v, best_position: x, best_fitness: 1.0 };
        let cap = cfg.cap();
        for _ in 0..20 {
            p = update_particle(&p, &gb, &cfg, &mut rng);
            prop_assert!(cfg.bounds.contains(&p.position));
            prop_assert!((0..5).all(|i| p.velocity[i].abs() <= cap[i]));
        }
    }
}

#[test]
fn without_social_term_particles_evolve_independently() {
    // With c2 = 0 each particle must follow exactly the path it would take
    // alone with its own random stream, whatever the rest of the swarm does.
    let f = sphere([1.5, 1.1, 0.6, 2.0, 1.2]);
    for update in [UpdateOrder::Sequential, UpdateOrder::Synchronous] {
        let cfg = PsoConfig {
            swarm_size: 12,
            iterations: 15,
            c2: 0.0,
            seed: 99,
            update,
            ..PsoConfig::default()
        };
        let mut swarm = pso::Swarm::init(&cfg, &f).unwrap();
        for _ in 0..cfg.iterations {
            swarm.step(&cfg, &f);
        }
        for i in 0..cfg.swarm_size {
            let mut rng = particle_rng(cfg.seed, i);
            let (x, v) = sample_particle(&cfg, &mut rng);
            let mut p = Particle {
                position: x,
                velocity: v,
                best_position: x,
                best_fitness: f(&x),
            };
            // Any p_gb works: it is multiplied by c2 = 0.
            let unrelated = [1.9, 1.0, 1.2, 0.8, 2.0];
            for _ in 0..cfg.iterations {
                p = update_particle(&p, &unrelated, &cfg, &mut rng);
                let fx = f(&p.position);
                if fx < p.best_fitness {
                    p.best_fitness = fx;
                    p.best_position = p.position;
                }
            }
            assert_eq!(p, swarm.particles[i], "particle {i} ({update:?})");
        }
    }
}

#[test]
fn init_is_deterministic_and_sized() {
    let f = sphere([1.5; 5]);
    let cfg = PsoConfig {
        seed: 5,
        ..PsoConfig::default()
    };
    let a = pso::Swarm::init(&cfg, &f).unwrap();
    let b = pso::Swarm::init(&cfg, &f).unwrap();
    assert_eq!(a.particles.len(), 200);
    assert_eq!(a.particles, b.particles);
    let point = [1.5, 1.2, 0.8, 1.6, 0.9];
    let collapsed = PsoConfig {
        swarm_size: 10,
        bounds: ParamBounds {
            lower: point,
            upper: point,
        },
        ..PsoConfig::default()
    };
    let s = pso::Swarm::init(&collapsed, &f).unwrap();
    assert!(s.particles.iter().all(|p| p.position == point));
}

#[test]
fn fitness_examples() {
    let tf = presets::design1();
    let grid = SimGrid::new(9.8, 0.2).unwrap();
    let clean = normalize(&dataset::gen_synthetic(&tf, &grid, 30.0, 2, 0.0, 1).unwrap()).unwrap();
    let sim = SimGrid::default();
    let exact = StepTrace {
        times: grid.times(),
        values: step_response(&tf, &grid.times(), &ResponseOptions::default())
            .unwrap()
            .values,
        setpoint: 1.0,
        trial_id: "model".into(),
        normalized: true,
    };
    let exact = Dataset::new(vec![exact], "m").unwrap();
    assert_eq!(fitness(&tf.to_array(), &[exact], &sim).unwrap(), 0.0);
    // Scaling to degrees and back costs only rounding.
    assert!(fitness(&tf.to_array(), std::slice::from_ref(&clean), &sim).unwrap() < 1e-15);

    let mut shifted = clean.clone();
    for tr in &mut shifted.traces {
        tr.values.iter_mut().for_each(|v| *v += 0.1);
    }
    let f = fitness(&tf.to_array(), &[shifted], &sim).unwrap();
    assert!((f - 0.1).abs() < 1e-12, "{f}");

    let noisy = normalize(
        &dataset::gen_synthetic(&tf, &SimGrid::new(9.99, 0.01).unwrap(), 30.0, 4, 0.01, 3).unwrap(),
    )
    .unwrap();
    let f = fitness(&tf.to_array(), &[noisy], &sim).unwrap();
    assert!((f - 0.01).abs() < 1e-3, "{f}");

    let raw = dataset::gen_synthetic(&tf, &grid, 30.0, 1, 0.0, 1).unwrap();
    assert!(matches!(
        fitness(&tf.to_array(), &[raw], &sim),
        Err(PsoError::RawData(_))
    ));
    assert!(matches!(
        fitness(&tf.to_array(), &[], &sim),
        Err(PsoError::NoData)
    ));
    let bad = [1.0, 1.5, 0.5, 1.0, 1.0];
    assert_eq!(fitness(&bad, &[clean], &sim).unwrap(), f64::INFINITY);
}
