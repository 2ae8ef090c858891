//! Synthetic RSS traces sampled from the mixture model along a trajectory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::MixtureConstants;
use crate::error::{DflError, Result};
use crate::geometry::{excess_path_length, segment_intersects_wall, Bounds, LinkId, Point};
use crate::rss_model::{derive_affected_params, RssFrame, RssValue};
use crate::site::Site;

/// A stop on a scripted path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    /// Time spent standing still on arrival (s).
    #[serde(default)]
    pub dwell_s: f64,
}

/// Random waypoints drawn from the grid after the scripted ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomWaypoints {
    pub count: usize,
    #[serde(default)]
    pub dwell_s: f64,
    #[serde(default)]
    pub seed: u64,
    /// Only draw grid pixels inside this box.
    #[serde(default)]
    pub region: Option<Bounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    #[serde(default = "default_period")]
    pub period_s: f64,
    #[serde(default = "default_speed")]
    pub speed_mps: f64,
    /// Vacant time before the person enters (s).
    #[serde(default)]
    pub prologue_s: f64,
    /// Vacant time after the person leaves (s).
    #[serde(default)]
    pub epilogue_s: f64,
    #[serde(default)]
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub random: Option<RandomWaypoints>,
}

fn default_period() -> f64 {
    0.5
}

fn default_speed() -> f64 {
    1.0
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            period_s: default_period(),
            speed_mps: default_speed(),
            prologue_s: 0.0,
            epilogue_s: 0.0,
            waypoints: Vec::new(),
            random: None,
        }
    }
}

/// True positions per frame; `None` is out of the area.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub period_s: f64,
    pub timestamps: Vec<f64>,
    pub positions: Vec<Option<Point>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Piecewise path: each leg is (start time, duration, from, to).
struct Leg {
    start: f64,
    duration: f64,
    from: Point,
    to: Point,
}

fn resolve_waypoints(spec: &TrajectorySpec, site: &Site) -> Result<Vec<Waypoint>> {
    let mut points = spec.waypoints.clone();
    let Some(random) = spec.random else { return Ok(points) };
    let grid = site.grid();
    let pool: Vec<Point> = grid
        .points()
        .iter()
        .copied()
        .filter(|p| random.region.is_none_or(|r| r.contains(*p)))
        .collect();
    if pool.is_empty() {
        return Err(DflError::Input("random waypoint region holds no grid pixel".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(random.seed);
    let mut current = match points.last() {
        Some(w) => Point::new(w.x, w.y),
        None => {
            let p = match grid.entrances().next() {
                Some(k) if spec.prologue_s > 0.0 => grid.points()[k],
                _ => pool[rng.random_range(0..pool.len())],
            };
            points.push(Waypoint { x: p.x, y: p.y, dwell_s: random.dwell_s });
            p
        }
    };
    let exit = grid.entrances().next().filter(|_| spec.epilogue_s > 0.0).map(|k| grid.points()[k]);
    let target = points.len() + random.count;
    let mut attempts = 0;
    while points.len() < target {
        attempts += 1;
        if attempts > 1000 * (random.count + 1) {
            return Err(DflError::Input("could not draw wall-free random waypoints".into()));
        }
        let p = pool[rng.random_range(0..pool.len())];
        if p == current || segment_intersects_wall(current, p, site.walls()) {
            continue;
        }
        if points.len() + 1 == target && exit.is_some_and(|e| segment_intersects_wall(p, e, site.walls())) {
            continue;
        }
        points.push(Waypoint { x: p.x, y: p.y, dwell_s: random.dwell_s });
        current = p;
    }
    if let Some(exit) = exit.filter(|e| *e != current) {
        points.push(Waypoint { x: exit.x, y: exit.y, dwell_s: 0.0 });
    }
    Ok(points)
}

/// Sample the scripted path every `period_s`. Phases are half-open, so a
/// prologue of `T` seconds covers exactly `T / period` frames.
pub fn generate_trajectory(spec: &TrajectorySpec, site: &Site) -> Result<Trajectory> {
    let max_speed = site.config().motion.max_speed_mps;
    if !(spec.speed_mps > 0.0 && spec.speed_mps <= max_speed) {
        return Err(DflError::Input(format!("speed {} m/s outside (0, {max_speed}]", spec.speed_mps)));
    }
    if !(spec.period_s > 0.0) || !spec.period_s.is_finite() {
        return Err(DflError::Input(format!("frame period {} s must be positive", spec.period_s)));
    }
    for (name, v) in [("prologue", spec.prologue_s), ("epilogue", spec.epilogue_s)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(DflError::Input(format!("{name} duration {v} s must be non-negative")));
        }
    }
    let waypoints = resolve_waypoints(spec, site)?;
    let bounds = site.config().grid.bounds;
    for w in &waypoints {
        let p = Point::new(w.x, w.y);
        if !p.is_finite() || !bounds.contains(p) {
            return Err(DflError::Input(format!("waypoint ({}, {}) lies outside the area", w.x, w.y)));
        }
        if !(w.dwell_s >= 0.0) {
            return Err(DflError::Input("dwell time must be non-negative".into()));
        }
    }
    if waypoints.is_empty() && spec.prologue_s + spec.epilogue_s <= 0.0 {
        return Err(DflError::Input("trajectory has no waypoints and no vacant time".into()));
    }

    let grid = site.grid();
    let max_step = site.config().motion.max_step_m;
    let near_entrance = |p: Point| {
        grid.entrances().next().is_none()
            || grid.entrances().any(|k| grid.points()[k].distance(&p) <= max_step + grid.spacing())
    };
    if let (Some(first), Some(last)) = (waypoints.first(), waypoints.last()) {
        if spec.prologue_s > 0.0 && !near_entrance(Point::new(first.x, first.y)) {
            return Err(DflError::Input("the person must enter the area next to an entrance".into()));
        }
        if spec.epilogue_s > 0.0 && !near_entrance(Point::new(last.x, last.y)) {
            return Err(DflError::Input("the person must leave the area next to an entrance".into()));
        }
    }

    let mut legs = Vec::new();
    let mut t = spec.prologue_s;
    for (i, w) in waypoints.iter().enumerate() {
        let p = Point::new(w.x, w.y);
        if i > 0 {
            let prev = waypoints[i - 1];
            let from = Point::new(prev.x, prev.y);
            if segment_intersects_wall(from, p, site.walls()) {
                return Err(DflError::Input(format!(
                    "path from ({}, {}) to ({}, {}) crosses a wall",
                    prev.x, prev.y, w.x, w.y
                )));
            }
            let duration = from.distance(&p) / spec.speed_mps;
            legs.push(Leg { start: t, duration, from, to: p });
            t += duration;
        }
        legs.push(Leg { start: t, duration: w.dwell_s, from: p, to: p });
        t += w.dwell_s;
    }
    let present_end = t;
    let total = present_end + spec.epilogue_s;
    let n = (total / spec.period_s + 1e-9).floor() as usize + 1;
    let mut timestamps = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut leg = 0;
    for i in 0..n {
        let t = i as f64 * spec.period_s;
        timestamps.push(t);
        let inside = !waypoints.is_empty()
            && t + 1e-9 >= spec.prologue_s
            && (t < present_end - 1e-9 || (spec.epilogue_s == 0.0 && t <= present_end + 1e-9));
        if !inside {
            positions.push(None);
            continue;
        }
        while leg + 1 < legs.len() && t >= legs[leg].start + legs[leg].duration - 1e-9 {
            leg += 1;
        }
        let l = &legs[leg];
        let f = if l.duration > 0.0 { ((t - l.start) / l.duration).clamp(0.0, 1.0) } else { 1.0 };
        positions.push(Some(Point::new(
            l.from.x + f * (l.to.x - l.from.x),
            l.from.y + f * (l.to.y - l.from.y),
        )));
    }
    Ok(Trajectory { period_s: spec.period_s, timestamps, positions })
}

/// Generating parameters of one link. `beta` may be zero here, unlike the
/// fitted spatial parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerativeLinkParams {
    pub mu_u: f64,
    pub var_u: f64,
    pub mu_a: f64,
    pub var_a: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl GenerativeLinkParams {
    pub fn new(mu_u: f64, var_u: f64, beta: f64, lambda: f64, consts: &MixtureConstants) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) || !(lambda > 0.0) {
            return Err(DflError::Parameter(format!("generative beta={beta}, lambda={lambda} out of range")));
        }
        let (mu_a, var_a) = derive_affected_params(mu_u, var_u, consts.delta_db, consts.eta, consts.omega_db)?;
        Ok(GenerativeLinkParams { mu_u, var_u, mu_a, var_a, beta, lambda })
    }
}

/// Plausible random parameters: log-distance path loss for the means,
/// uniform variance, decay and line-of-sight weight.
pub fn random_link_params(site: &Site, seed: u64) -> Result<Vec<GenerativeLinkParams>> {
    let consts = &site.config().mixture;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    site.links()
        .iter()
        .map(|l| {
            let mu = -45.0 - 20.0 * l.length.max(0.1).log10() + rng.random_range(-4.0..4.0);
            let var = rng.random_range(0.6..3.0);
            let beta = rng.random_range(0.5..0.9);
            let lambda = rng.random_range(0.2..0.8);
            GenerativeLinkParams::new(mu, var, beta, lambda, consts)
        })
        .collect()
}

/// Additive shift of selected links' means from `time_s` onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentEvent {
    pub time_s: f64,
    pub shifts: Vec<LinkShift>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkShift {
    pub link: LinkId,
    pub shift_db: f64,
}

/// Per-link mean offsets over time built from a list of events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventSchedule {
    /// Per link: sorted `(time, shift)` steps.
    steps: Vec<Vec<(f64, f64)>>,
}

impl EventSchedule {
    pub fn new(num_links: usize) -> Self {
        EventSchedule { steps: vec![Vec::new(); num_links] }
    }

    /// Register `event`; shifts on a link add up.
    pub fn inject_environment_change(&mut self, site: &Site, event: &EnvironmentEvent) -> Result<()> {
        if !event.time_s.is_finite() {
            return Err(DflError::Input("event time must be finite".into()));
        }
        for s in &event.shifts {
            if !s.shift_db.is_finite() {
                return Err(DflError::Input(format!("shift on {} is not finite", s.link)));
            }
            let l = site
                .link_index(s.link)
                .ok_or_else(|| DflError::Input(format!("event names unknown link {}", s.link)))?;
            let steps = &mut self.steps[l];
            steps.push((event.time_s, s.shift_db));
            steps.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        Ok(())
    }

    /// Total shift active on `link` at time `t`.
    pub fn offset(&self, link: usize, t: f64) -> f64 {
        self.steps[link].iter().take_while(|(at, _)| *at <= t).map(|(_, s)| s).sum()
    }
}

/// A simulated trace with the truth that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrace {
    pub frames: Vec<RssFrame>,
    pub trajectory: Trajectory,
    pub params: Vec<GenerativeLinkParams>,
    pub seed: u64,
}

const CHANNEL_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Independent random stream for one link, stable under adding other links.
fn link_rng(seed: u64, id: LinkId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (id.channel as u64 + 1).wrapping_mul(CHANNEL_MIX));
    rng.set_stream(((id.tx as u64) << 32) | id.rx as u64);
    rng
}

pub fn synthesize_trace(
    site: &Site,
    params: &[GenerativeLinkParams],
    trajectory: &Trajectory,
    events: &[EnvironmentEvent],
    loss_prob: f64,
    seed: u64,
) -> Result<GroundTruthTrace> {
    if params.len() != site.num_links() {
        return Err(DflError::Input(format!(
            "{} link parameter sets for {} links",
            params.len(),
            site.num_links()
        )));
    }
    if !(0.0..=1.0).contains(&loss_prob) {
        return Err(DflError::Input(format!("loss probability {loss_prob} outside [0, 1]")));
    }
    let mut schedule = EventSchedule::new(site.num_links());
    for e in events {
        schedule.inject_environment_change(site, e)?;
    }
    let alphabet = site.alphabet();
    let sentinel_pa = site.config().mixture.sentinel_affected;
    let mut frames: Vec<RssFrame> = trajectory
        .timestamps
        .iter()
        .map(|t| RssFrame { timestamp: *t, values: Vec::with_capacity(params.len()) })
        .collect();
    for (l, (geom, p)) in site.links().iter().zip(params).enumerate() {
        let mut rng = link_rng(seed, geom.id);
        for (i, frame) in frames.iter_mut().enumerate() {
            let pa = match trajectory.positions[i] {
                Some(pos) => p.beta * (-excess_path_length(pos, geom) / p.lambda).exp(),
                None => sentinel_pa,
            };
            let u_state: f64 = rng.random();
            let z: f64 = rng.sample(StandardNormal);
            let u_loss: f64 = rng.random();
            let shift = schedule.offset(l, trajectory.timestamps[i]);
            let (mu, var) = if u_state < pa { (p.mu_a, p.var_a) } else { (p.mu_u, p.var_u) };
            let x = mu + shift + var.sqrt() * z;
            let r = if u_loss < loss_prob { RssValue::Missing } else { RssValue::Dbm(alphabet.quantize(x)) };
            frame.values.push(r);
        }
    }
    Ok(GroundTruthTrace { frames, trajectory: trajectory.clone(), params: params.to_vec(), seed })
}
