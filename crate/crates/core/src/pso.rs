//! Particle swarm identification of the five transfer-function parameters
//! `(α2, α1, a1, a0, b0)` from normalized step-response data.
//!
//! Each particle owns its own ChaCha stream (`seed`, stream = particle index),
//! so a run is reproducible regardless of how fitness evaluations are
//! scheduled across threads. Updates within an iteration are synchronous:
//! every particle moves towards the global best known at the start of the
//! iteration, then all new positions are evaluated, then personal and global
//! bests are refreshed in particle order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::PsoError;
use crate::model::{step_response, FracTransferFunction, ResponseOptions, SimGrid, GL_MAX_STEP};

pub const DIM: usize = 5;
pub const PARAM_NAMES: [&str; DIM] = ["alpha2", "alpha1", "a1", "a0", "b0"];

/// Datasets fewer than this trigger a data-sufficiency warning.
pub const MIN_TRACES: usize = 4;
/// Total samples fewer than this trigger a data-sufficiency warning.
pub const MIN_POINTS: usize = 200;

pub type Position = [f64; DIM];

/// Box constraints in `(α2, α1, a1, a0, b0)` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: Position,
    pub upper: Position,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self::widened()
    }
}

impl ParamBounds {
    /// Default search box; both published parameter sets are interior points.
    pub fn widened() -> Self {
        Self {
            lower: [1.1, 1.0, 0.3, 0.8, 0.5],
            upper: [1.9, 1.5, 1.2, 2.5, 2.0],
        }
    }

    /// The narrower box quoted with the original identification runs. The
    /// reported optima lie outside it in `a0` and `b0`.
    pub fn reported() -> Self {
        Self {
            lower: [1.1, 1.0, 0.5, 1.0, 1.0],
            upper: [1.9, 1.5, 1.0, 2.0, 2.0],
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "widened" | "default" => Some(Self::widened()),
            "reported" => Some(Self::reported()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), PsoError> {
        for (i, name) in PARAM_NAMES.iter().enumerate() {
            let (l, u) = (self.lower[i], self.upper[i]);
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(PsoError::Config(format!(
                    "bounds for {name} must satisfy lower <= upper, got [{l}, {u}]"
                )));
            }
        }
        if !(self.lower[1] > 0.0) || self.upper[0] > 2.0 {
            return Err(PsoError::Config(
                "fractional orders must lie in (0, 2]".into(),
            ));
        }
        if !(self.lower[1] < self.upper[0]) {
            return Err(PsoError::Config(format!(
                "bounds admit no alpha1 < alpha2 point (alpha1 >= {}, alpha2 <= {})",
                self.lower[1], self.upper[0]
            )));
        }
        if !(self.lower[3] > 0.0) || !(self.lower[4] > 0.0) || self.lower[2] < 0.0 {
            return Err(PsoError::Config(
                "bounds require a0 > 0, b0 > 0 and a1 >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, x: &Position) -> bool {
        (0..DIM).all(|i| x[i] >= self.lower[i] && x[i] <= self.upper[i])
    }

    pub fn range(&self) -> Position {
        std::array::from_fn(|i| self.upper[i] - self.lower[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
    pub seed: u64,
    pub bounds: ParamBounds,
    /// Per-component speed limit; half the bound range when absent.
    pub velocity_cap: Option<Position>,
    /// Draw `r1`, `r2` per dimension instead of once per update.
    pub per_dimension_random: bool,
    pub update: UpdateOrder,
}

/// When the global best seen by the other particles is refreshed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateOrder {
    /// After each particle's move and evaluation.
    #[default]
    Sequential,
    /// Once per iteration, after all particles have moved; evaluations run
    /// in parallel.
    Synchronous,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 200,
            iterations: 10,
            inertia: 0.729,
            c1: 1.494,
            c2: 1.494,
            seed: 0,
            bounds: ParamBounds::default(),
            velocity_cap: None,
            per_dimension_random: false,
            update: UpdateOrder::default(),
        }
    }
}

impl PsoConfig {
    pub fn cap(&self) -> Position {
        self.velocity_cap
            .unwrap_or_else(|| self.bounds.range().map(|r| 0.5 * r))
    }

    pub fn validate(&self) -> Result<(), PsoError> {
        if self.swarm_size < 2 {
            return Err(PsoError::Config(format!(
                "swarm_size must be >= 2, got {}",
                self.swarm_size
            )));
        }
        if self.iterations < 1 {
            return Err(PsoError::Config("iterations must be >= 1".into()));
        }
        if !(self.inertia > 0.0 && self.inertia <= 1.0) {
            return Err(PsoError::Config(format!(
                "inertia must lie in (0, 1], got {}",
                self.inertia
            )));
        }
        if !(self.c1 >= 0.0 && self.c1.is_finite()) || !(self.c2 >= 0.0 && self.c2.is_finite()) {
            return Err(PsoError::Config(format!(
                "c1, c2 must be >= 0, got {}, {}",
                self.c1, self.c2
            )));
        }
        self.bounds.validate()?;
        if let Some(cap) = self.velocity_cap {
            if cap.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
                return Err(PsoError::Config(format!(
                    "velocity_cap must be positive, got {cap:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: Position,
    pub velocity: Position,
    pub best_position: Position,
    pub best_fitness: f64,
}

/// The random stream owned by particle `index`.
pub fn particle_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Swaps `α1`, `α2` when out of order, then clamps both back into bounds.
fn repair_orders(x: &mut Position, v: &mut Position, bounds: &ParamBounds) {
    if x[1] >= x[0] {
        x.swap(0, 1);
        for i in 0..2 {
            if x[i] < bounds.lower[i] {
                x[i] = bounds.lower[i];
                v[i] = 0.0;
            } else if x[i] > bounds.upper[i] {
                x[i] = bounds.upper[i];
                v[i] = 0.0;
            }
        }
    }
}

/// Random position and velocity for one particle, before evaluation.
pub fn sample_particle(config: &PsoConfig, rng: &mut impl Rng) -> (Position, Position) {
    let b = &config.bounds;
    let cap = config.cap();
    let mut x = [0.0; DIM];
    for _ in 0..100 {
        x = std::array::from_fn(|i| uniform(rng, b.lower[i], b.upper[i]));
        if x[1] < x[0] {
            break;
        }
    }
    let mut v: Position = std::array::from_fn(|i| uniform(rng, -cap[i], cap[i]));
    repair_orders(&mut x, &mut v, b);
    (x, v)
}

/// One velocity/position update towards the personal best and `p_gb`.
/// Velocity is clamped to the cap; a position component leaving the box is
/// clamped and its velocity zeroed.
pub fn update_particle(
    p: &Particle,
    p_gb: &Position,
    config: &PsoConfig,
    rng: &mut impl Rng,
) -> Particle {
    let cap = config.cap();
    let b = &config.bounds;
    let (r1, r2): (Position, Position) = if config.per_dimension_random {
        let r1 = std::array::from_fn(|_| rng.random::<f64>());
        let r2 = std::array::from_fn(|_| rng.random::<f64>());
        (r1, r2)
    } else {
        let (a, c) = (rng.random::<f64>(), rng.random::<f64>());
        ([a; DIM], [c; DIM])
    };
    let mut x = p.position;
    let mut v = p.velocity;
    for i in 0..DIM {
        v[i] = config.inertia * v[i]
            + config.c1 * r1[i] * (p.best_position[i] - x[i])
            + config.c2 * r2[i] * (p_gb[i] - x[i]);
        v[i] = v[i].clamp(-cap[i], cap[i]);
        x[i] += v[i];
        if x[i] < b.lower[i] {
            x[i] = b.lower[i];
            v[i] = 0.0;
        } else if x[i] > b.upper[i] {
            x[i] = b.upper[i];
            v[i] = 0.0;
        }
    }
    repair_orders(&mut x, &mut v, b);
    Particle {
        position: x,
        velocity: v,
        best_position: p.best_position,
        best_fitness: p.best_fitness,
    }
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

/// Swarm state between iterations.
#[derive(Debug, Clone)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    pub global_best: Position,
    pub global_best_fitness: f64,
    pub evaluations: usize,
    rngs: Vec<ChaCha8Rng>,
}

impl Swarm {
    /// Samples and evaluates the initial swarm.
    pub fn init<F>(config: &PsoConfig, objective: &F) -> Result<Self, PsoError>
    where
        F: Fn(&Position) -> f64 + Sync,
    {
        config.validate()?;
        let mut rngs: Vec<ChaCha8Rng> = (0..config.swarm_size)
            .map(|i| particle_rng(config.seed, i))
            .collect();
        let starts: Vec<(Position, Position)> = rngs
            .iter_mut()
            .map(|r| sample_particle(config, r))
            .collect();
        let fits: Vec<f64> = starts
            .par_iter()
            .map(|(x, _)| sanitize(objective(x)))
            .collect();
        let particles: Vec<Particle> = starts
            .into_iter()
            .zip(fits)
            .map(|((x, v), f)| Particle {
                position: x,
                velocity: v,
                best_position: x,
                best_fitness: f,
            })
            .collect();
        let mut swarm = Self {
            global_best: particles[0].best_position,
            global_best_fitness: f64::INFINITY,
            evaluations: particles.len(),
            particles,
            rngs,
        };
        swarm.refresh_global();
        Ok(swarm)
    }

    // Lowest personal-best fitness wins; ties go to the lowest index, and
    // the incumbent is replaced only by a strict improvement.
    fn refresh_global(&mut self) {
        let mut best: Option<usize> = None;
        for (i, p) in self.particles.iter().enumerate() {
            if best.map_or(true, |b| p.best_fitness < self.particles[b].best_fitness) {
                best = Some(i);
            }
        }
        if let Some(b) = best {
            let p = &self.particles[b];
            if p.best_fitness < self.global_best_fitness || self.global_best_fitness.is_nan() {
                self.global_best = p.best_position;
                self.global_best_fitness = p.best_fitness;
            }
        }
    }

    /// One synchronous iteration.
    pub fn step<F>(&mut self, config: &PsoConfig, objective: &F)
    where
        F: Fn(&Position) -> f64 + Sync,
    {
        if config.update == UpdateOrder::Sequential {
            self.step_sequential(config, objective);
            return;
        }
        let gb = self.global_best;
        let moved: Vec<Particle> = self
            .particles
            .iter()
            .zip(self.rngs.iter_mut())
            .map(|(p, rng)| update_particle(p, &gb, config, rng))
            .collect();
        let fits: Vec<f64> = moved
            .par_iter()
            .map(|p| sanitize(objective(&p.position)))
            .collect();
        self.evaluations += moved.len();
        self.particles = moved;
        for (p, f) in self.particles.iter_mut().zip(fits) {
            if f < p.best_fitness {
                p.best_fitness = f;
                p.best_position = p.position;
            }
        }
        self.refresh_global();
    }

    fn step_sequential<F>(&mut self, config: &PsoConfig, objective: &F)
    where
        F: Fn(&Position) -> f64 + Sync,
    {
        for i in 0..self.particles.len() {
            let mut p = update_particle(
                &self.particles[i],
                &self.global_best,
                config,
                &mut self.rngs[i],
            );
            let f = sanitize(objective(&p.position));
            self.evaluations += 1;
            if f < p.best_fitness {
                p.best_fitness = f;
                p.best_position = p.position;
                if f < self.global_best_fitness {
                    self.global_best_fitness = f;
                    self.global_best = p.position;
                }
            }
            self.particles[i] = p;
        }
    }
}

/// Outcome of a swarm run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub best_position: Position,
    pub best_fitness: f64,
    /// Global-best fitness after each iteration.
    pub history: Vec<f64>,
    /// Global-best position after each iteration.
    pub trajectory: Vec<Position>,
    pub evaluations: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn transfer_function(&self) -> Option<FracTransferFunction> {
        FracTransferFunction::from_array(self.best_position).ok()
    }
}

/// Runs the swarm against an arbitrary objective.
pub fn run_pso_with<F>(config: &PsoConfig, objective: &F) -> Result<FitResult, PsoError>
where
    F: Fn(&Position) -> f64 + Sync,
{
    let mut swarm = Swarm::init(config, objective)?;
    let mut history = Vec::with_capacity(config.iterations);
    let mut trajectory = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        swarm.step(config, objective);
        log::debug!(
            "iteration {}: best fitness {:.6e}",
            it + 1,
            swarm.global_best_fitness
        );
        history.push(swarm.global_best_fitness);
        trajectory.push(swarm.global_best);
    }
    Ok(FitResult {
        best_position: swarm.global_best,
        best_fitness: swarm.global_best_fitness,
        history,
        trajectory,
        evaluations: swarm.evaluations,
        warnings: Vec::new(),
    })
}

/// Normalized samples pooled from every trace, with the model evaluated
/// once on the union of their sample times.
#[derive(Debug, Clone)]
pub struct FitnessTarget {
    times: Vec<f64>,
    // (index into `times`, observed normalized value)
    samples: Vec<(usize, f64)>,
    opts: ResponseOptions,
    traces: usize,
}

impl FitnessTarget {
    pub fn new(datasets: &[Dataset], grid: &SimGrid) -> Result<Self, PsoError> {
        grid.validate()
            .map_err(|e| PsoError::Config(e.to_string()))?;
        if grid.step > GL_MAX_STEP {
            return Err(PsoError::Config(format!(
                "grid step {} s exceeds the {} s simulation limit",
                grid.step, GL_MAX_STEP
            )));
        }
        let mut all: Vec<(f64, f64)> = Vec::new();
        let mut traces = 0;
        for ds in datasets {
            for tr in &ds.traces {
                if !tr.normalized {
                    return Err(PsoError::RawData(tr.trial_id.clone()));
                }
                traces += 1;
                all.extend(tr.times.iter().copied().zip(tr.values.iter().copied()));
            }
        }
        if all.is_empty() {
            return Err(PsoError::NoData);
        }
        if all
            .iter()
            .any(|(t, v)| !(*t >= 0.0) || !t.is_finite() || !v.is_finite())
        {
            return Err(PsoError::Config(
                "samples need finite values at times t >= 0".into(),
            ));
        }
        let mut times: Vec<f64> = all.iter().map(|s| s.0).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let samples = all
            .iter()
            .map(|&(t, v)| {
                (
                    times
                        .binary_search_by(|x| x.total_cmp(&t))
                        .expect("time present"),
                    v,
                )
            })
            .collect();
        Ok(Self {
            times,
            samples,
            opts: ResponseOptions {
                gl_step: grid.step,
                ..ResponseOptions::default()
            },
            traces,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_traces(&self) -> usize {
        self.traces
    }

    /// Data-sufficiency warnings for this sample set.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.traces < MIN_TRACES {
            w.push(format!(
                "only {} step responses supplied; reliable identification needs at least {MIN_TRACES}",
                self.traces
            ));
        }
        if self.samples.len() < MIN_POINTS {
            w.push(format!(
                "only {} data points supplied; reliable identification needs at least {MIN_POINTS}",
                self.samples.len()
            ));
        }
        w
    }

    /// Pooled RMSE between the samples and the model at `position`;
    /// `+∞` if the position is not a valid model or simulation fails.
    pub fn evaluate(&self, position: &Position) -> f64 {
        let Ok(tf) = FracTransferFunction::from_array(*position) else {
            return f64::INFINITY;
        };
        let Ok(resp) = step_response(&tf, &self.times, &self.opts) else {
            return f64::INFINITY;
        };
        let ss: f64 = self
            .samples
            .iter()
            .map(|&(i, v)| {
                let d = resp.values[i] - v;
                d * d
            })
            .sum();
        sanitize((ss / self.samples.len() as f64).sqrt())
    }
}

/// Pooled RMSE of the model at `position` against every normalized trace.
pub fn fitness(position: &Position, datasets: &[Dataset], grid: &SimGrid) -> Result<f64, PsoError> {
    Ok(FitnessTarget::new(datasets, grid)?.evaluate(position))
}

/// Identifies the transfer function from normalized datasets.
pub fn run_pso(
    config: &PsoConfig,
    datasets: &[Dataset],
    grid: &SimGrid,
) -> Result<FitResult, PsoError> {
    config.validate()?;
    let target = FitnessTarget::new(datasets, grid)?;
    let warnings = target.warnings();
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut result = run_pso_with(config, &|x: &Position| target.evaluate(x))?;
    if !result.best_fitness.is_finite() {
        return Err(PsoError::Optimization(
            "every particle failed to simulate".into(),
        ));
    }
    result.warnings = warnings;
    Ok(result)
}
