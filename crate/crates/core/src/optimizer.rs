//! Global-MPPI: graduated non-convexity restarts of box sampling, LSE
//! smoothing, lengthscale calibration, kernel SOS proposal and MPPI
//! refinement, wrapped in a receding-horizon loop. The sampling baselines
//! share the same outer loop and trace format.

use std::time::Instant;

use log::{debug, warn};
use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{auto_calibrate, median_pairwise_distance, CalibrationConfig};
use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelSpec};
use crate::ksos::{fit_with, propose_candidate, SampleSet};
use crate::mppi::{mppi_refine_with, mppi_step_with, predictive_sampling_step, MppiConfig, Temperature};
use crate::problems::{Bounds, CountingProblem, Problem};
use crate::random::{derive_seed, draw_perturbations, rng_from_seed};
use crate::scalar::Real;
use crate::sdp::{SdpStatus, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::smoothing::{perturbed_costs, soft_min};

pub use crate::problems::spline::receding_shift;

/// Annealing state: `σ_lse = ρʲ σ₀`, `Δ = γʲ Δ₀` after `j` shrinks.
#[derive(Debug, Clone, PartialEq)]
pub struct GncSchedule<T: Real> {
    pub sigma_lse: T,
    pub delta: DVector<T>,
    pub rho: T,
    pub gamma: T,
    pub restart_index: usize,
    sigma0: T,
    delta0: DVector<T>,
}

impl<T: Real> GncSchedule<T> {
    pub fn new(sigma0: T, delta0: DVector<T>, rho: T, gamma: T) -> Result<Self> {
        let unit = |v: T| v > T::zero() && v <= T::one();
        if !unit(rho) || !unit(gamma) {
            return Err(Error::Config(format!(
                "rho and gamma must lie in (0, 1], got {rho} and {gamma}"
            )));
        }
        if !(sigma0 >= T::zero()) || delta0.iter().any(|d| !(*d >= T::zero())) {
            return Err(Error::Config("initial noise and radius must be non-negative".into()));
        }
        Ok(Self {
            sigma_lse: sigma0,
            delta: delta0.clone(),
            rho,
            gamma,
            restart_index: 0,
            sigma0,
            delta0,
        })
    }

    pub fn shrink(&mut self) {
        self.restart_index += 1;
        let j = self.restart_index as i32;
        self.sigma_lse = self.sigma0 * self.rho.powi(j);
        self.delta = &self.delta0 * self.gamma.powi(j);
    }

    pub fn reset(&mut self) {
        self.restart_index = 0;
        self.sigma_lse = self.sigma0;
        self.delta = self.delta0.clone();
    }

    /// `γʲ`.
    pub fn delta_scale(&self) -> T {
        self.gamma.powi(self.restart_index as i32)
    }

    pub fn sigma0(&self) -> T {
        self.sigma0
    }

    pub fn delta0(&self) -> &DVector<T> {
        &self.delta0
    }
}

/// Component switches for ablation runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Hold `σ_lse` at its last scheduled value `ρ^(restarts-1) σ₀`.
    pub no_gnc: bool,
    /// Use the kernel SOS candidate without MPPI refinement.
    pub no_refine: bool,
    /// Skip NLL calibration and use [`GlobalMppiConfig::fixed_lengthscale`].
    pub no_autocal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalMppiConfig {
    pub n_ksos_samples: usize,
    pub n_lse_samples: usize,
    pub n_mppi_samples: usize,
    pub mppi_iterations: usize,
    pub n_restarts: usize,
    pub sigma_lse0: f64,
    pub mu: f64,
    pub kernel: KernelKind,
    /// Initial sampling radius per dimension; half the box width when unset.
    pub delta0: Option<Vec<f64>>,
    /// Initial nominal; the box center when unset.
    pub u0: Option<Vec<f64>>,
    pub rho: f64,
    pub gamma: f64,
    pub converge_tol: f64,
    pub horizon_steps: usize,
    pub temperature: Temperature<f64>,
    pub calibration: CalibrationConfig<f64>,
    pub sdp_max_iters: usize,
    pub sdp_tol: f64,
    /// Keep shrinking across outer steps instead of resetting the schedule.
    pub carry_over: bool,
    pub ablation: Ablation,
    /// Lengthscale used with `no_autocal`; median pairwise sample distance
    /// when unset.
    pub fixed_lengthscale: Option<f64>,
    /// MPPI steps per outer step for the sampling baselines; matched to the
    /// Global-MPPI evaluation budget when unset.
    pub baseline_iterations: Option<usize>,
    pub seed: u64,
    /// Record wall-clock times. Off by default so traces are reproducible.
    pub timing: bool,
}

impl Default for GlobalMppiConfig {
    fn default() -> Self {
        Self {
            n_ksos_samples: 80,
            n_lse_samples: 100,
            n_mppi_samples: 256,
            mppi_iterations: 10,
            n_restarts: 5,
            sigma_lse0: 0.4,
            mu: 1e-5,
            kernel: KernelKind::Laplace,
            delta0: None,
            u0: None,
            rho: 0.5,
            gamma: 0.85,
            converge_tol: 1e-4,
            horizon_steps: 10,
            temperature: Temperature::default(),
            calibration: CalibrationConfig::default(),
            sdp_max_iters: DEFAULT_MAX_ITERS,
            sdp_tol: DEFAULT_TOL,
            carry_over: false,
            ablation: Ablation::default(),
            fixed_lengthscale: None,
            baseline_iterations: None,
            seed: 0,
            timing: false,
        }
    }
}

impl GlobalMppiConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_ksos_samples", self.n_ksos_samples),
            ("n_lse_samples", self.n_lse_samples),
            ("n_mppi_samples", self.n_mppi_samples),
            ("mppi_iterations", self.mppi_iterations),
            ("n_restarts", self.n_restarts),
            ("horizon_steps", self.horizon_steps),
            ("sdp_max_iters", self.sdp_max_iters),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        for (name, v) in [
            ("mu", self.mu),
            ("sdp_tol", self.sdp_tol),
            ("converge_tol", self.converge_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sigma_lse0 >= 0.0) {
            return Err(Error::Config("sigma_lse0 must be non-negative".into()));
        }
        if let Some(s) = self.fixed_lengthscale {
            if !(s > 0.0) {
                return Err(Error::Config("fixed_lengthscale must be positive".into()));
            }
        }
        self.temperature.validate()?;
        self.calibration.validate()?;
        Ok(())
    }

    /// Cost evaluations spent by one restart stage: the smoothing rollouts,
    /// the MPPI rollouts and one nominal check per candidate and MPPI step.
    pub fn stage_budget(&self) -> u64 {
        let smoothing = (self.n_ksos_samples * self.n_lse_samples) as u64;
        let refine = if self.ablation.no_refine {
            0
        } else {
            (self.mppi_iterations * (self.n_mppi_samples + 1)) as u64
        };
        smoothing + refine + 1
    }

    /// Baseline MPPI steps per outer step.
    pub fn baseline_steps(&self) -> usize {
        self.baseline_iterations.unwrap_or_else(|| {
            let per_outer = self.stage_budget() * self.n_restarts as u64;
            ((per_outer / (self.n_mppi_samples as u64 + 1)) as usize).max(1)
        })
    }
}

/// Per-stage wall-clock times in milliseconds (zero unless timing is on).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub sample: f64,
    pub smooth: f64,
    pub calibrate: f64,
    pub ksos: f64,
    pub refine: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.sample + self.smooth + self.calibrate + self.ksos + self.refine
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub restart: usize,
    pub sigma_lse: f64,
    pub delta_scale: f64,
    pub delta: Vec<f64>,
    pub lambda: Option<f64>,
    pub lengthscale: Option<f64>,
    pub sdp_status: Option<SdpStatus>,
    pub c_bound: Option<f64>,
    pub candidate_cost: Option<f64>,
    pub refined_cost: Option<f64>,
    /// Nominal cost after the stage.
    pub nominal_cost: f64,
    pub cumulative_evaluations: u64,
    pub failure: Option<String>,
    pub wall_ms: StageTimes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub iteration: usize,
    pub start_cost: f64,
    pub nominal_cost: f64,
    pub best_cost: f64,
    pub cumulative_evaluations: u64,
    pub restarts: Vec<RestartRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GlobalMppi,
    Mppi,
    PredictiveSampling,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::GlobalMppi, Method::Mppi, Method::PredictiveSampling];

    pub fn name(&self) -> &'static str {
        match self {
            Method::GlobalMppi => "global-mppi",
            Method::Mppi => "mppi",
            Method::PredictiveSampling => "predictive-sampling",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub method: Method,
    pub seed: u64,
    pub initial_cost: f64,
    pub outer: Vec<OuterRecord>,
    pub evaluations: u64,
    pub best_cost: f64,
    /// Outer iterations run before the improvement fell below the tolerance,
    /// or `None` if the horizon ran out first.
    pub converged_after: Option<usize>,
    pub failed_stages: usize,
    pub total_stages: usize,
}

impl RunTrace {
    /// Every restart (or baseline step) record in execution order.
    pub fn stages(&self) -> impl Iterator<Item = (&OuterRecord, &RestartRecord)> {
        self.outer.iter().flat_map(|o| o.restarts.iter().map(move |r| (o, r)))
    }

    pub fn iterations(&self) -> usize {
        self.outer.len()
    }
}

#[derive(Debug, Clone)]
pub struct Solution<T: Real> {
    pub u: DVector<T>,
    pub cost: T,
    pub trace: RunTrace,
}

/// `n` uniform samples on `[center - Δ, center + Δ] ∩ bounds`. Dimensions
/// where the intersection is empty collapse to the clipped center.
pub fn sample_uniform_box<T: Real, R: Rng + ?Sized>(
    center: &DVector<T>,
    delta: &DVector<T>,
    bounds: &Bounds<T>,
    n: usize,
    rng: &mut R,
) -> Vec<DVector<T>> {
    let d = center.len();
    let clipped = bounds.clip(center);
    let mut lo = DVector::zeros(d);
    let mut hi = DVector::zeros(d);
    for i in 0..d {
        let a = (center[i] - delta[i]).max(bounds.lower()[i]);
        let b = (center[i] + delta[i]).min(bounds.upper()[i]);
        if a > b {
            warn!("sampling box is empty in dimension {i}; using the clipped center");
            lo[i] = clipped[i];
            hi[i] = clipped[i];
        } else {
            lo[i] = a;
            hi[i] = b;
        }
    }
    (0..n)
        .map(|_| {
            DVector::from_fn(d, |i, _| {
                let t = T::lit(rng.random::<f64>());
                (lo[i] + (hi[i] - lo[i]) * t).min(hi[i])
            })
        })
        .collect()
}

fn lit_vec<T: Real>(v: &[f64]) -> DVector<T> {
    DVector::from_iterator(v.len(), v.iter().map(|x| T::lit(*x)))
}

fn sanitize<T: Real>(c: T) -> T {
    if c.is_finite() {
        c
    } else {
        T::infinity()
    }
}

fn elapsed(start: Option<Instant>) -> f64 {
    start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3)
}

struct Setup<T: Real> {
    u0: DVector<T>,
    delta0: DVector<T>,
}

fn setup<T: Real, P: Problem<T> + ?Sized>(problem: &P, cfg: &GlobalMppiConfig) -> Result<Setup<T>> {
    cfg.validate()?;
    let d = problem.dim();
    let u0 = match &cfg.u0 {
        Some(v) => lit_vec(v),
        None => problem.initial(),
    };
    let delta0 = match &cfg.delta0 {
        Some(v) => lit_vec(v),
        None => problem.bounds().half_width(),
    };
    if u0.len() != d || delta0.len() != d {
        return Err(Error::Config(format!("u0 and delta0 must have dimension {d}")));
    }
    if delta0.iter().any(|x| !(*x >= T::zero())) {
        return Err(Error::Config("delta0 must be non-negative".into()));
    }
    Ok(Setup {
        u0: problem.bounds().clip(&u0),
        delta0,
    })
}

/// Nominal control and cost carried through the outer loop, plus the best
/// point seen so far.
struct Tracker<T: Real> {
    u: DVector<T>,
    cost: T,
    best_u: DVector<T>,
    best_cost: T,
}

impl<T: Real> Tracker<T> {
    fn new(u: DVector<T>, cost: T) -> Self {
        Self {
            best_u: u.clone(),
            best_cost: cost,
            u,
            cost,
        }
    }

    /// Replaces the nominal unless the new point is worse.
    fn offer(&mut self, u: DVector<T>, cost: T) {
        if cost < self.best_cost || !self.best_cost.is_finite() && cost.is_finite() {
            self.best_u = u.clone();
            self.best_cost = cost;
        }
        if cost <= self.cost || !self.cost.is_finite() {
            self.u = u;
            self.cost = cost;
        }
    }

    /// Moves the nominal without comparing costs (receding shift).
    fn force(&mut self, u: DVector<T>, cost: T) {
        if cost < self.best_cost {
            self.best_u = u.clone();
            self.best_cost = cost;
        }
        self.u = u;
        self.cost = cost;
    }
}

struct StageOutcome<T: Real> {
    record: RestartRecord,
    proposal: Option<(DVector<T>, T)>,
}

/// Runs Global-MPPI on `problem`.
pub fn solve<T, P>(problem: &P, cfg: &GlobalMppiConfig) -> Result<Solution<T>>
where
    T: Real,
    P: Problem<T> + ?Sized,
{
    run(problem, cfg, Method::GlobalMppi)
}

/// Runs Global-MPPI or one of the sampling baselines with a shared outer
/// loop, receding shift and termination rule.
pub fn run<T, P>(problem: &P, cfg: &GlobalMppiConfig, method: Method) -> Result<Solution<T>>
where
    T: Real,
    P: Problem<T> + ?Sized,
{
    let Setup { u0, delta0 } = setup(problem, cfg)?;
    let counted = CountingProblem::new(problem);
    let problem = &counted;

    let mut schedule = GncSchedule::new(T::lit(cfg.sigma_lse0), delta0, T::lit(cfg.rho), T::lit(cfg.gamma))?;
    let initial_cost = sanitize(problem.evaluate(&u0));
    let mut tracker = Tracker::new(u0, initial_cost);
    let mut outer = Vec::new();
    let mut converged_after = None;
    let (mut failed, mut total) = (0, 0);
    let mut previous = initial_cost;
    let mut stage_counter = 0u64;

    for t in 0..cfg.horizon_steps {
        let start_cost = tracker.cost;
        let mut restarts = Vec::new();
        match method {
            Method::GlobalMppi => {
                if !cfg.carry_over {
                    schedule.reset();
                }
                for j in 0..cfg.n_restarts {
                    let seed = derive_seed(cfg.seed, stage_counter);
                    stage_counter += 1;
                    total += 1;
                    let mut out = global_stage(problem, cfg, &schedule, &tracker.u, seed, j);
                    match out.proposal.take() {
                        Some((u, c)) => tracker.offer(u, c),
                        None => failed += 1,
                    }
                    out.record.nominal_cost = tracker.cost.as_f64();
                    out.record.cumulative_evaluations = counted.count();
                    restarts.push(out.record);
                    schedule.shrink();
                }
            }
            Method::Mppi | Method::PredictiveSampling => {
                let sigma = T::lit(cfg.sigma_lse0);
                let temperature = cfg.temperature.map(T::lit);
                let mppi = MppiConfig {
                    n_samples: cfg.n_mppi_samples,
                    lambda: T::one(),
                    sigma,
                    iterations: 1,
                    seed: 0,
                };
                let mut rng = rng_from_seed(derive_seed(cfg.seed, t as u64));
                for k in 0..cfg.baseline_steps() {
                    total += 1;
                    let clock = cfg.timing.then(Instant::now);
                    let step = if method == Method::Mppi {
                        mppi_step_with(problem, &tracker.u, &mppi, &temperature, &mut rng).map(|u| {
                            let c = sanitize(problem.evaluate(&u));
                            (u, c)
                        })
                    } else {
                        predictive_sampling_step(problem, &tracker.u, tracker.cost, &mppi, &mut rng)
                    };
                    let failure = match step {
                        Ok((u, c)) => {
                            if method == Method::Mppi {
                                tracker.force(u, c);
                            } else {
                                tracker.offer(u, c);
                            }
                            None
                        }
                        Err(e) => {
                            failed += 1;
                            Some(e.to_string())
                        }
                    };
                    restarts.push(RestartRecord {
                        restart: k,
                        sigma_lse: sigma.as_f64(),
                        delta_scale: 0.0,
                        delta: Vec::new(),
                        lambda: None,
                        lengthscale: None,
                        sdp_status: None,
                        c_bound: None,
                        candidate_cost: None,
                        refined_cost: None,
                        nominal_cost: tracker.cost.as_f64(),
                        cumulative_evaluations: counted.count(),
                        failure,
                        wall_ms: StageTimes {
                            refine: elapsed(clock),
                            ..Default::default()
                        },
                    });
                }
            }
        }

        let end_cost = tracker.cost;
        outer.push(OuterRecord {
            iteration: t,
            start_cost: start_cost.as_f64(),
            nominal_cost: end_cost.as_f64(),
            best_cost: tracker.best_cost.as_f64(),
            cumulative_evaluations: counted.count(),
            restarts,
        });
        debug!("{method} outer {t}: cost {end_cost:e}, best {:e}", tracker.best_cost);

        if (end_cost - previous).abs() < T::lit(cfg.converge_tol) {
            converged_after = Some(t + 1);
            break;
        }
        previous = end_cost;
        if t + 1 < cfg.horizon_steps {
            let shifted = problem.shift(&tracker.u);
            if shifted != tracker.u {
                let c = sanitize(problem.evaluate(&shifted));
                tracker.force(shifted, c);
            }
        }
    }

    if failed > 0 && 2 * failed >= total {
        return Err(Error::RunFailed { failed, total });
    }

    let trace = RunTrace {
        method,
        seed: cfg.seed,
        initial_cost: initial_cost.as_f64(),
        outer,
        evaluations: counted.count(),
        best_cost: tracker.best_cost.as_f64(),
        converged_after,
        failed_stages: failed,
        total_stages: total,
    };
    Ok(Solution {
        u: tracker.best_u,
        cost: tracker.best_cost,
        trace,
    })
}

fn global_stage<T, P>(
    problem: &P,
    cfg: &GlobalMppiConfig,
    schedule: &GncSchedule<T>,
    nominal: &DVector<T>,
    seed: u64,
    restart: usize,
) -> StageOutcome<T>
where
    T: Real,
    P: Problem<T> + ?Sized,
{
    let sigma = if cfg.ablation.no_gnc {
        schedule.sigma0() * schedule.rho.powi(cfg.n_restarts as i32 - 1)
    } else {
        schedule.sigma_lse
    };
    let mut record = RestartRecord {
        restart,
        sigma_lse: sigma.as_f64(),
        delta_scale: schedule.delta_scale().as_f64(),
        delta: schedule.delta.iter().map(|d| d.as_f64()).collect(),
        lambda: None,
        lengthscale: None,
        sdp_status: None,
        c_bound: None,
        candidate_cost: None,
        refined_cost: None,
        nominal_cost: f64::NAN,
        cumulative_evaluations: 0,
        failure: None,
        wall_ms: StageTimes::default(),
    };
    match stage_body(problem, cfg, schedule, sigma, nominal, seed, &mut record) {
        Ok(proposal) => StageOutcome {
            record,
            proposal: Some(proposal),
        },
        Err(e) => {
            warn!("restart {restart} failed: {e}");
            record.failure = Some(e.to_string());
            StageOutcome { record, proposal: None }
        }
    }
}

fn stage_body<T, P>(
    problem: &P,
    cfg: &GlobalMppiConfig,
    schedule: &GncSchedule<T>,
    sigma: T,
    nominal: &DVector<T>,
    seed: u64,
    record: &mut RestartRecord,
) -> Result<(DVector<T>, T)>
where
    T: Real,
    P: Problem<T> + ?Sized,
{
    let bounds = problem.bounds();
    let n = cfg.n_ksos_samples;

    let clock = cfg.timing.then(Instant::now);
    let points = sample_uniform_box(
        nominal,
        &schedule.delta,
        bounds,
        n,
        &mut rng_from_seed(derive_seed(seed, 0)),
    );
    record.wall_ms.sample = elapsed(clock);

    let clock = cfg.timing.then(Instant::now);
    let raw: Vec<Vec<T>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            if sigma == T::zero() {
                return vec![sanitize(problem.evaluate(p))];
            }
            let mut rng = rng_from_seed(derive_seed(seed, 1 + i as u64));
            let eps = draw_perturbations(&mut rng, cfg.n_lse_samples, p.len());
            perturbed_costs(problem, p, sigma, &eps)
                .into_iter()
                .map(sanitize)
                .collect()
        })
        .collect();
    let temperature = cfg.temperature.map(T::lit);
    let pooled: Vec<T> = raw.iter().flatten().copied().collect();
    let lambda = temperature.resolve(&pooled);
    record.lambda = Some(lambda.as_f64());
    let (mut kept, mut smoothed) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (p, costs) in points.into_iter().zip(&raw) {
        let v = soft_min(costs, lambda);
        if v.is_finite() {
            kept.push(p);
            smoothed.push(v);
        }
    }
    if kept.len() < n {
        warn!("{} of {n} samples had no finite smoothed cost", n - kept.len());
    }
    if kept.is_empty() {
        return Err(Error::NumericalFailure("no sample has a finite smoothed cost".into()));
    }
    let samples = SampleSet::new(kept, DVector::from_vec(smoothed), bounds.clone())?;
    record.wall_ms.smooth = elapsed(clock);

    let clock = cfg.timing.then(Instant::now);
    let base = KernelSpec::new(cfg.kernel, T::one())?;
    let spec = if cfg.ablation.no_autocal {
        let s = match cfg.fixed_lengthscale {
            Some(s) => T::lit(s),
            None => median_pairwise_distance(&base, &samples.points),
        };
        base.with_lengthscale(if s > T::zero() { s } else { T::one() })
    } else if samples.len() < 2 {
        base
    } else {
        let mean = samples.costs.mean();
        let y = samples.costs.map(|c| c - mean);
        let cal_cfg = CalibrationConfig {
            grid: cfg
                .calibration
                .grid
                .as_ref()
                .map(|g| g.iter().map(|s| T::lit(*s)).collect()),
            noise_var: cfg.calibration.noise_var.map(T::lit),
            refine_steps: cfg.calibration.refine_steps,
            refine_rate: T::lit(cfg.calibration.refine_rate),
        };
        auto_calibrate(&samples.points, &y, cfg.kernel, &cal_cfg)?.spec
    };
    record.lengthscale = Some(spec.lengthscale.as_f64());
    record.wall_ms.calibrate = elapsed(clock);

    let clock = cfg.timing.then(Instant::now);
    let (model, solution) = fit_with(&samples, &spec, T::lit(cfg.mu), cfg.sdp_max_iters, T::lit(cfg.sdp_tol))?;
    record.sdp_status = Some(solution.status);
    record.c_bound = Some(solution.c.as_f64());
    let candidate = propose_candidate(&model, &solution, &samples)?;
    record.wall_ms.ksos = elapsed(clock);

    let clock = cfg.timing.then(Instant::now);
    let (u, cost) = if cfg.ablation.no_refine {
        let c = sanitize(problem.evaluate(&candidate.point));
        record.candidate_cost = Some(c.as_f64());
        (candidate.point, c)
    } else {
        let mppi = MppiConfig {
            n_samples: cfg.n_mppi_samples,
            lambda: T::one(),
            sigma: if sigma > T::zero() {
                sigma
            } else {
                T::lit(f64::MIN_POSITIVE)
            },
            iterations: cfg.mppi_iterations,
            seed: derive_seed(seed, 1 + n as u64),
        };
        let out = mppi_refine_with(problem, &candidate.point, &mppi, &temperature)?;
        record.candidate_cost = Some(sanitize(out.initial_cost).as_f64());
        (out.u, sanitize(out.cost))
    };
    record.refined_cost = Some(cost.as_f64());
    record.wall_ms.refine = elapsed(clock);
    Ok((u, cost))
}
