//! Quasi-static planar pusher–slider model and the PushT task built on it.
//!
//! A disk pusher is position-servoed toward a spline target with a speed cap.
//! The slider is a union of body-frame rectangles. Contact uses a penalty
//! normal force with Coulomb-capped friction, and the slider twist follows the
//! ellipsoidal limit surface `V = k (F, (r × F) / c²)`. Without contact the
//! slider does not move.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::pose::{so2_error, Pose2};
use super::spline::{receding_shift, ControlSpline, EndCondition};
use super::{Bounds, Problem};
use crate::error::{invalid, Error, Result};

/// Default scenario shipped with the crate.
pub const DEFAULT_SCENARIO: &str = include_str!("../../scenarios/pusht.toml");

/// Contact and limit-surface constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Pusher disk radius (m).
    pub pusher_radius: f64,
    /// Pusher speed cap (m/s).
    pub v_max: f64,
    /// Penalty stiffness (N/m).
    pub k_n: f64,
    /// Coulomb friction coefficient at the contact.
    pub mu_f: f64,
    /// Limit-surface ratio `c` (m).
    pub ls_ratio: f64,
    /// Force-to-velocity gain of the limit surface ((m/s)/N).
    pub mobility: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            pusher_radius: 0.01,
            v_max: 0.5,
            k_n: 1000.0,
            mu_f: 0.3,
            ls_ratio: 0.05,
            mobility: 1.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pusher_radius", self.pusher_radius),
            ("v_max", self.v_max),
            ("k_n", self.k_n),
            ("ls_ratio", self.ls_ratio),
            ("mobility", self.mobility),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("model parameter {name} must be positive, got {v}"));
            }
        }
        if !(self.mu_f >= 0.0) || !self.mu_f.is_finite() {
            return invalid(format!("friction coefficient must be non-negative, got {}", self.mu_f));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle in the slider body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
}

impl Rect {
    fn area(&self) -> f64 {
        4.0 * self.half_extents[0] * self.half_extents[1]
    }
}

/// Slider shape: a union of rectangles with the body origin at the centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct SliderGeometry {
    rects: Vec<Rect>,
}

impl SliderGeometry {
    /// Re-centers `rects` so that the area centroid sits at the body origin.
    /// Overlaps are counted twice in the centroid.
    pub fn new(rects: Vec<Rect>) -> Result<Self> {
        if rects.is_empty() {
            return invalid("slider needs at least one rectangle");
        }
        if rects
            .iter()
            .any(|r| !(r.half_extents[0] > 0.0 && r.half_extents[1] > 0.0))
        {
            return invalid("rectangle half extents must be positive");
        }
        let area: f64 = rects.iter().map(Rect::area).sum();
        let cx = rects.iter().map(|r| r.area() * r.center[0]).sum::<f64>() / area;
        let cy = rects.iter().map(|r| r.area() * r.center[1]).sum::<f64>() / area;
        let rects = rects
            .into_iter()
            .map(|r| Rect {
                center: [r.center[0] - cx, r.center[1] - cy],
                ..r
            })
            .collect();
        Ok(Self { rects })
    }

    pub fn rectangle(half_x: f64, half_y: f64) -> Result<Self> {
        Self::new(vec![Rect {
            center: [0.0, 0.0],
            half_extents: [half_x, half_y],
        }])
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    /// Deepest penetration of a disk (body frame) into the union, as
    /// `(depth, outward normal, boundary point)`.
    fn deepest(&self, q: &Vector2<f64>, radius: f64) -> Option<(f64, Vector2<f64>, Vector2<f64>)> {
        let mut best: Option<(f64, Vector2<f64>, Vector2<f64>)> = None;
        for r in &self.rects {
            let c = Vector2::new(r.center[0], r.center[1]);
            let h = Vector2::new(r.half_extents[0], r.half_extents[1]);
            let d = q - c;
            let inside = d.x.abs() <= h.x && d.y.abs() <= h.y;
            let hit = if inside {
                let sx = if d.x >= 0.0 { 1.0 } else { -1.0 };
                let sy = if d.y >= 0.0 { 1.0 } else { -1.0 };
                let (gx, gy) = (h.x - d.x.abs(), h.y - d.y.abs());
                if gx <= gy {
                    Some((radius + gx, Vector2::new(sx, 0.0), c + Vector2::new(sx * h.x, d.y)))
                } else {
                    Some((radius + gy, Vector2::new(0.0, sy), c + Vector2::new(d.x, sy * h.y)))
                }
            } else {
                let clamped = Vector2::new(d.x.clamp(-h.x, h.x), d.y.clamp(-h.y, h.y));
                let diff = d - clamped;
                let dist = diff.norm();
                (dist < radius).then(|| (radius - dist, diff / dist, c + clamped))
            };
            if let Some(h) = hit {
                if best.as_ref().is_none_or(|b| h.0 > b.0) {
                    best = Some(h);
                }
            }
        }
        best
    }
}

/// Pusher–slider configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PusherSliderState {
    pub slider: Pose2<f64>,
    pub pusher: Vector2<f64>,
}

impl PusherSliderState {
    pub fn is_finite(&self) -> bool {
        self.slider.p.iter().all(|v| v.is_finite())
            && self.slider.theta.is_finite()
            && self.pusher.iter().all(|v| v.is_finite())
    }
}

/// Contact between pusher and slider in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub depth: f64,
    /// Unit normal pointing from the slider toward the pusher.
    pub normal: Vector2<f64>,
    pub point: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PusherSliderModel {
    pub params: ModelParams,
    pub geometry: SliderGeometry,
}

impl PusherSliderModel {
    pub fn new(params: ModelParams, geometry: SliderGeometry) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, geometry })
    }

    pub fn contact(&self, state: &PusherSliderState) -> Option<Contact> {
        let local = state.slider.inverse_transform(&state.pusher);
        let (depth, n, pt) = self.geometry.deepest(&local, self.params.pusher_radius)?;
        Some(Contact {
            depth,
            normal: state.slider.rotate(&n),
            point: state.slider.transform(&pt),
        })
    }

    /// Advances the state by `dt` with the pusher servoing toward `target`.
    pub fn step(&self, state: &PusherSliderState, target: &Vector2<f64>, dt: f64) -> PusherSliderState {
        let prm = &self.params;
        let mut delta = target - state.pusher;
        let max_move = prm.v_max * dt;
        let dist = delta.norm();
        if dist > max_move {
            delta *= max_move / dist;
        }
        let mut next = PusherSliderState {
            slider: state.slider,
            pusher: state.pusher + delta,
        };
        let Some(contact) = self.contact(&next) else {
            return next;
        };

        let n_in = -contact.normal;
        let tan = Vector2::new(-n_in.y, n_in.x);
        let r = contact.point - state.slider.p;
        let r_perp = Vector2::new(-r.y, r.x);
        let c2 = prm.ls_ratio * prm.ls_ratio;
        let g = Matrix2::identity() + r_perp * r_perp.transpose() / c2;
        let (gnn, gnt, gtt) = (n_in.dot(&(g * n_in)), n_in.dot(&(g * tan)), tan.dot(&(g * tan)));
        let a = prm.mobility * dt;
        let kd = prm.k_n * contact.depth;
        let v_t = delta.dot(&tan) / dt;

        // Sticking: normal penalty balance after the slider moves, and the
        // slider contact point follows the pusher tangentially.
        let m = Matrix2::new(
            1.0 + prm.k_n * a * gnn,
            prm.k_n * a * gnt,
            prm.mobility * gnt,
            prm.mobility * gtt,
        );
        let (mut f_n, mut f_t) = match m.lu().solve(&Vector2::new(kd, v_t)) {
            Some(f) => (f.x, f.y),
            None => (f64::INFINITY, f64::INFINITY),
        };
        if !(f_n >= 0.0) || f_t.abs() > prm.mu_f * f_n || !f_t.is_finite() {
            let s = if f_t < 0.0 { -1.0 } else { 1.0 };
            let denom = 1.0 + prm.k_n * a * (gnn + s * prm.mu_f * gnt);
            f_n = if denom > 0.0 { kd / denom } else { 0.0 };
            f_t = s * prm.mu_f * f_n;
        }
        if !(f_n > 0.0) {
            return next;
        }

        let force = n_in * f_n + tan * f_t;
        let v = force * prm.mobility;
        let omega = prm.mobility * r_perp.dot(&force) / c2;
        next.slider = Pose2::new(
            state.slider.p.x + dt * v.x,
            state.slider.p.y + dt * v.y,
            state.slider.theta + dt * omega,
        );
        next
    }
}

/// Rolls the model forward from `initial`, tracking the spline (world-frame
/// pusher targets) at its time step. Returns `n_steps + 1` states.
pub fn pusher_slider_rollout(
    model: &PusherSliderModel,
    initial: &PusherSliderState,
    spline: &ControlSpline<f64>,
) -> Result<Vec<PusherSliderState>> {
    if spline.control_points().ncols() != 2 {
        return invalid("pusher targets must be two-dimensional");
    }
    let dt = spline.dt();
    let n = spline.n_steps();
    let mut traj = Vec::with_capacity(n + 1);
    let mut state = *initial;
    traj.push(state);
    for i in 1..=n {
        let target = spline.eval(dt * i as f64);
        state = model.step(&state, &Vector2::new(target[0], target[1]), dt);
        if !state.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "non-finite pusher-slider state at step {i}"
            )));
        }
        traj.push(state);
    }
    Ok(traj)
}

/// Pose tracking cost: running `dt (‖p - p_g‖² + w e_θ²)` over all but the
/// last state plus the same error, unweighted by `dt`, at the last state.
pub fn pusht_cost(traj: &[PusherSliderState], goal: &Pose2<f64>, w: f64, dt: f64) -> f64 {
    let err = |s: &PusherSliderState| {
        let e = so2_error(s.slider.theta, goal.theta);
        (s.slider.p - goal.p).norm_squared() + w * e * e
    };
    let Some((last, running)) = traj.split_last() else {
        return 0.0;
    };
    running.iter().map(|s| dt * err(s)).sum::<f64>() + err(last)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    model: ModelParams,
    slider: SliderSection,
    initial: InitialSection,
    goal: [f64; 3],
    #[serde(default)]
    task: TaskSection,
    golden: Option<GoldenSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SliderSection {
    rects: Vec<Rect>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    slider: [f64; 3],
    pusher: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TaskSection {
    weight: f64,
    dt: f64,
    horizon: f64,
    control_points: usize,
    workspace: [f64; 2],
    end_condition: EndCondition,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            weight: 0.3,
            dt: 0.01,
            horizon: 1.0,
            control_points: 6,
            workspace: [0.3, 0.3],
            end_condition: EndCondition::Natural,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoldenSection {
    controls: Vec<f64>,
}

/// A PushT task: model, start, goal and control parameterization.
///
/// Decision vectors are normalized to `[-1, 1]^(2P)`; control point `k` maps
/// to the world pusher target `pusher_start + workspace ∘ u_k`.
#[derive(Debug, Clone)]
pub struct PushTScenario {
    pub model: PusherSliderModel,
    pub initial: PusherSliderState,
    pub goal: Pose2<f64>,
    pub weight: f64,
    pub dt: f64,
    pub horizon: f64,
    pub control_points: usize,
    pub workspace: Vector2<f64>,
    pub end_condition: EndCondition,
    /// Normalized controls of the recorded reference trajectory.
    pub golden_controls: Option<DVector<f64>>,
}

impl PushTScenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let model = PusherSliderModel::new(f.model, SliderGeometry::new(f.slider.rects)?)?;
        let t = f.task;
        if t.control_points < 2 {
            return invalid("a PushT scenario needs at least two control points");
        }
        if !(t.dt > 0.0 && t.horizon >= t.dt && t.weight >= 0.0) {
            return invalid("invalid task timing or weight");
        }
        if !(t.workspace[0] > 0.0 && t.workspace[1] > 0.0) {
            return invalid("workspace half-ranges must be positive");
        }
        let golden_controls = match f.golden {
            Some(g) if g.controls.len() != 2 * t.control_points => {
                return invalid(format!(
                    "golden controls need {} values, got {}",
                    2 * t.control_points,
                    g.controls.len()
                ))
            }
            Some(g) => Some(DVector::from_vec(g.controls)),
            None => None,
        };
        Ok(Self {
            model,
            initial: PusherSliderState {
                slider: Pose2::new(f.initial.slider[0], f.initial.slider[1], f.initial.slider[2]),
                pusher: Vector2::new(f.initial.pusher[0], f.initial.pusher[1]),
            },
            goal: Pose2::new(f.goal[0], f.goal[1], f.goal[2]),
            weight: t.weight,
            dt: t.dt,
            horizon: t.horizon,
            control_points: t.control_points,
            workspace: Vector2::new(t.workspace[0], t.workspace[1]),
            end_condition: t.end_condition,
            golden_controls,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn default_scenario() -> Self {
        Self::from_toml(DEFAULT_SCENARIO).expect("bundled scenario is valid")
    }

    pub fn dim(&self) -> usize {
        2 * self.control_points
    }

    /// World-frame pusher target spline for a normalized decision vector.
    pub fn target_spline(&self, u: &DVector<f64>) -> Result<ControlSpline<f64>> {
        if u.len() != self.dim() {
            return invalid(format!("expected {} controls, got {}", self.dim(), u.len()));
        }
        let start = self.initial.pusher;
        let points = DMatrix::from_fn(self.control_points, 2, |k, j| {
            start[j] + self.workspace[j] * u[2 * k + j]
        });
        ControlSpline::new(points, self.horizon, self.dt, self.end_condition)
    }

    pub fn rollout(&self, u: &DVector<f64>) -> Result<Vec<PusherSliderState>> {
        pusher_slider_rollout(&self.model, &self.initial, &self.target_spline(u)?)
    }

    pub fn cost(&self, traj: &[PusherSliderState]) -> f64 {
        pusht_cost(traj, &self.goal, self.weight, self.dt)
    }
}

/// Trajectory as CSV with columns `t, slider_x, slider_y, slider_theta,
/// pusher_x, pusher_y` and 17 significant digits.
pub fn trajectory_csv(traj: &[PusherSliderState], dt: f64) -> String {
    let mut out = String::from("t,slider_x,slider_y,slider_theta,pusher_x,pusher_y\n");
    for (i, s) in traj.iter().enumerate() {
        let row = [
            dt * i as f64,
            s.slider.p.x,
            s.slider.p.y,
            s.slider.theta,
            s.pusher.x,
            s.pusher.y,
        ];
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// The PushT scenario as an optimization problem over normalized controls.
#[derive(Debug, Clone)]
pub struct PushTProblem {
    scenario: PushTScenario,
    bounds: Bounds<f64>,
}

impl PushTProblem {
    pub fn new(scenario: PushTScenario) -> Self {
        let bounds = Bounds::uniform(scenario.dim(), -1.0, 1.0).expect("positive dimension");
        Self { scenario, bounds }
    }

    pub fn scenario(&self) -> &PushTScenario {
        &self.scenario
    }
}

impl Problem<f64> for PushTProblem {
    fn name(&self) -> &str {
        "pusht-quasistatic"
    }

    fn bounds(&self) -> &Bounds<f64> {
        &self.bounds
    }

    fn evaluate(&self, u: &DVector<f64>) -> f64 {
        match self.scenario.rollout(u) {
            Ok(traj) => self.scenario.cost(&traj),
            Err(_) => f64::INFINITY,
        }
    }

    fn shift(&self, u: &DVector<f64>) -> DVector<f64> {
        let p = self.scenario.control_points;
        let points = DMatrix::from_fn(p, 2, |k, j| u[2 * k + j]);
        let shifted = receding_shift(&points);
        DVector::from_fn(2 * p, |i, _| shifted[(i / 2, i % 2)])
    }
}
