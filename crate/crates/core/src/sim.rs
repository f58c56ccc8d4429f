//! Fixed-timestep replay of HIP trajectories through the proxy engine.

use std::hint::black_box;
use std::io::{Read, Write};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{process_contact, NoteEvent, ZoneMap, DEFAULT_G0};
use crate::error::{Error, Result};
use crate::geometry::{Heightfield, Vec3};
use crate::grid::Grid;
use crate::proxy::{EngineConfig, Material, ProbeState, ProxyEngine};

pub const DEFAULT_RATE: f64 = 1000.0;
pub const TRACE_HEADER: [&str; 14] = [
    "t", "hip_x", "hip_y", "hip_z", "proxy_x", "proxy_y", "proxy_z", "fx", "fy", "fz", "contact",
    "stuck", "mu_d", "iters",
];
pub const MIN_BENCH_SAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Waypoint {
    pub fn new(t: f64, p: Vec3) -> Self {
        Self {
            t,
            x: p.x,
            y: p.y,
            z: p.z,
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }
}

/// Piecewise-linear position at time `t`, held constant outside the
/// covered interval. `points` must be non-empty with increasing times.
pub fn interpolate_waypoints(points: &[Waypoint], t: f64) -> Vec3 {
    let first = points.first().expect("waypoints are non-empty");
    if t <= first.t {
        return first.position();
    }
    let k = points.partition_point(|w| w.t <= t);
    if k == points.len() {
        return points[k - 1].position();
    }
    let (a, b) = (&points[k - 1], &points[k]);
    let s = (t - a.t) / (b.t - a.t);
    a.position() + (b.position() - a.position()) * s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    rate: f64,
    waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn new(rate: f64, waypoints: Vec<Waypoint>) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid("trajectory rate must be > 0"));
        }
        if waypoints.is_empty() {
            return Err(Error::invalid("trajectory needs at least one waypoint"));
        }
        for w in &waypoints {
            if ![w.t, w.x, w.y, w.z].iter().all(|v| v.is_finite()) {
                return Err(Error::invalid("waypoints must be finite"));
            }
        }
        if waypoints.windows(2).any(|p| p[1].t <= p[0].t) {
            return Err(Error::invalid("waypoint times must be strictly increasing"));
        }
        if waypoints[0].t < 0.0 {
            return Err(Error::invalid("waypoint times must be >= 0"));
        }
        Ok(Self { rate, waypoints })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn duration(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.t)
    }

    /// Ticks `0..num_ticks()` cover `[0, duration]` at `1 / rate` spacing.
    pub fn num_ticks(&self) -> usize {
        (self.duration() * self.rate + 1e-9).floor() as usize + 1
    }

    pub fn tick_time(&self, tick: usize) -> f64 {
        tick as f64 / self.rate
    }

    pub fn hip_at(&self, t: f64) -> Vec3 {
        interpolate_waypoints(&self.waypoints, t)
    }

    /// Starts at `above`, descends vertically to depth `z_contact` over
    /// `t_descend`, then holds for `t_hold`.
    pub fn poke(above: Vec3, z_contact: f64, t_descend: f64, t_hold: f64) -> Result<Self> {
        let bottom = Vec3::new(above.x, above.y, z_contact);
        let mut points = vec![Waypoint::new(0.0, above), Waypoint::new(t_descend, bottom)];
        if t_hold > 0.0 {
            points.push(Waypoint::new(t_descend + t_hold, bottom));
        }
        Self::new(DEFAULT_RATE, points)
    }

    /// Hovers at `above` for `t_free`, descends to `z_contact`, drags
    /// laterally to `to` at that depth over `t_drag`, then holds.
    pub fn poke_then_drag(
        above: Vec3,
        t_free: f64,
        z_contact: f64,
        t_descend: f64,
        to: (f64, f64),
        t_drag: f64,
        t_hold: f64,
    ) -> Result<Self> {
        let bottom = Vec3::new(above.x, above.y, z_contact);
        let end = Vec3::new(to.0, to.1, z_contact);
        let mut t = t_free;
        let mut points = vec![Waypoint::new(0.0, above), Waypoint::new(t, above)];
        t += t_descend;
        points.push(Waypoint::new(t, bottom));
        t += t_drag;
        points.push(Waypoint::new(t, end));
        t += t_hold;
        points.push(Waypoint::new(t, end));
        Self::new(DEFAULT_RATE, points)
    }

    /// Follows the surface along `y = y0` from `x0` to `x1` at `depth`
    /// below it, sampled at `segments + 1` points.
    pub fn surface_sweep(
        hf: &Heightfield,
        y0: f64,
        x0: f64,
        x1: f64,
        depth: f64,
        duration: f64,
        segments: usize,
    ) -> Result<Self> {
        if segments == 0 {
            return Err(Error::invalid("sweep needs at least one segment"));
        }
        let points = (0..=segments)
            .map(|k| {
                let s = k as f64 / segments as f64;
                let x = x0 + (x1 - x0) * s;
                Waypoint::new(duration * s, Vec3::new(x, y0, hf.sample(x, y0) - depth))
            })
            .collect();
        Self::new(DEFAULT_RATE, points)
    }

    /// Reads `t,x,y,z` rows with a header line.
    pub fn read_csv(reader: impl Read, rate: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let points = rdr
            .deserialize::<Waypoint>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(rate, points)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.waypoints {
            w.serialize(p)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn default_rate() -> f64 {
    DEFAULT_RATE
}

/// Declarative trajectory description, as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectorySpec {
    Poke {
        above: [f64; 3],
        z_contact: f64,
        t_descend: f64,
        t_hold: f64,
    },
    Drag {
        above: [f64; 3],
        t_free: f64,
        z_contact: f64,
        t_descend: f64,
        to: [f64; 2],
        t_drag: f64,
        t_hold: f64,
    },
    Sweep {
        y: f64,
        x0: f64,
        x1: f64,
        depth: f64,
        duration: f64,
        segments: usize,
    },
    Waypoints {
        #[serde(default = "default_rate")]
        rate: f64,
        points: Vec<Waypoint>,
    },
}

impl TrajectorySpec {
    pub fn build(&self, hf: &Heightfield) -> Result<Trajectory> {
        let v = |a: &[f64; 3]| Vec3::new(a[0], a[1], a[2]);
        match self {
            TrajectorySpec::Poke {
                above,
                z_contact,
                t_descend,
                t_hold,
            } => Trajectory::poke(v(above), *z_contact, *t_descend, *t_hold),
            TrajectorySpec::Drag {
                above,
                t_free,
                z_contact,
                t_descend,
                to,
                t_drag,
                t_hold,
            } => Trajectory::poke_then_drag(
                v(above),
                *t_free,
                *z_contact,
                *t_descend,
                (to[0], to[1]),
                *t_drag,
                *t_hold,
            ),
            TrajectorySpec::Sweep {
                y,
                x0,
                x1,
                depth,
                duration,
                segments,
            } => Trajectory::surface_sweep(hf, *y, *x0, *x1, *depth, *duration, *segments),
            TrajectorySpec::Waypoints { rate, points } => Trajectory::new(*rate, points.clone()),
        }
    }
}

/// Surface data a haptic loop renders against.
#[derive(Clone, Debug)]
pub struct Scene {
    pub heightfield: Heightfield,
    pub friction: Option<Grid>,
    pub zones: Option<ZoneMap>,
}

impl Scene {
    pub fn new(heightfield: Heightfield, friction: Option<Grid>, zones: Option<ZoneMap>) -> Result<Self> {
        let shape = heightfield.depth_map().samples().shape();
        if let Some(mu) = &friction {
            if mu.shape() != shape {
                return Err(Error::ShapeMismatch {
                    expected: shape,
                    actual: mu.shape(),
                });
            }
            if mu.as_slice().iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                return Err(Error::invalid("friction coefficients must be finite and >= 0"));
            }
        }
        if let Some(z) = &zones {
            if z.shape() != shape {
                return Err(Error::ShapeMismatch {
                    expected: shape,
                    actual: z.shape(),
                });
            }
        }
        Ok(Self {
            heightfield,
            friction,
            zones,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub engine: EngineConfig,
    /// Note gain per unit force.
    pub g0: f64,
    pub friction_enabled: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            g0: DEFAULT_G0,
            friction_enabled: true,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.engine.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if !(self.engine.eps.is_finite() && self.engine.eps >= 0.0) {
            return Err(Error::invalid("eps must be finite and >= 0"));
        }
        if !(self.g0.is_finite() && self.g0 > 0.0) {
            return Err(Error::invalid("g0 must be > 0"));
        }
        Ok(())
    }
}

/// Output of one haptic tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HapticFrame {
    pub t: u64,
    pub hip: Vec3,
    pub proxy: Vec3,
    pub force: Vec3,
    pub in_contact: bool,
    pub stuck: bool,
    pub mu_d: f64,
    pub iters: usize,
    /// Remaining tangential distance to the HIP after the tick.
    pub tangent_residual: f64,
    pub events: Vec<NoteEvent>,
}

/// Stateful 1 kHz loop: proxy engine, force and note events.
#[derive(Clone, Debug)]
pub struct HapticLoop {
    scene: Arc<Scene>,
    material: Material,
    config: LoopConfig,
    state: ProbeState,
    prev_zone: Option<u32>,
    tick: u64,
}

impl HapticLoop {
    pub fn new(scene: Arc<Scene>, material: Material, config: LoopConfig, start: Vec3) -> Result<Self> {
        material.validate()?;
        config.validate()?;
        Ok(Self {
            scene,
            material,
            config,
            state: ProbeState::free(start),
            prev_zone: None,
            tick: 0,
        })
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn config(&self) -> &LoopConfig {
        &self.config
    }

    pub fn state(&self) -> &ProbeState {
        &self.state
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn set_material(&mut self, material: Material) -> Result<()> {
        material.validate()?;
        self.material = material;
        Ok(())
    }

    pub fn set_g0(&mut self, g0: f64) -> Result<()> {
        let config = LoopConfig { g0, ..self.config };
        config.validate()?;
        self.config = config;
        Ok(())
    }

    pub fn set_friction_enabled(&mut self, on: bool) {
        self.config.friction_enabled = on;
    }

    /// Swaps the surface; the probe restarts in free space at its HIP.
    pub fn set_scene(&mut self, scene: Arc<Scene>) {
        self.scene = scene;
        self.reset();
    }

    /// Swaps the surface data without touching the probe state.
    pub fn update_scene(&mut self, scene: Arc<Scene>) {
        self.scene = scene;
    }

    /// Proxy back onto the HIP, contact and zone memory cleared.
    pub fn reset(&mut self) {
        self.state = ProbeState::free(self.state.hip);
        self.prev_zone = None;
    }

    pub fn step(&mut self, hip: Vec3) -> HapticFrame {
        let scene = &*self.scene;
        let friction = if self.config.friction_enabled {
            scene.friction.as_ref()
        } else {
            None
        };
        let engine =
            ProxyEngine::new_unchecked(&scene.heightfield, friction, self.material, self.config.engine);
        let out = engine.tick(&self.state, hip);
        let mut events = Vec::new();
        if let Some(zones) = &scene.zones {
            let (ev, zone) =
                process_contact(self.tick, self.prev_zone, &out.state, &out.force, zones, self.config.g0);
            events.extend(ev);
            self.prev_zone = zone;
        }
        let frame = HapticFrame {
            t: self.tick,
            hip,
            proxy: out.state.proxy,
            force: out.force,
            in_contact: out.state.in_contact,
            stuck: out.state.stuck,
            mu_d: out.mu_d,
            iters: out.iters,
            tangent_residual: out.tangent_residual,
            events,
        };
        self.state = out.state;
        self.tick += 1;
        frame
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub ticks: usize,
    pub contact_ticks: usize,
    /// First in-contact tick whose residual tangent fell below eps.
    pub convergence_tick: Option<u64>,
    pub event_count: usize,
    pub max_abs_force: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_step_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p99_step_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub frames: Vec<HapticFrame>,
    pub metrics: SessionMetrics,
}

/// One line of the trace CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub hip_x: f64,
    pub hip_y: f64,
    pub hip_z: f64,
    pub proxy_x: f64,
    pub proxy_y: f64,
    pub proxy_z: f64,
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    pub contact: u8,
    pub stuck: u8,
    pub mu_d: f64,
    pub iters: usize,
}

impl From<&HapticFrame> for TraceRow {
    fn from(f: &HapticFrame) -> Self {
        Self {
            t: f.t,
            hip_x: f.hip.x,
            hip_y: f.hip.y,
            hip_z: f.hip.z,
            proxy_x: f.proxy.x,
            proxy_y: f.proxy.y,
            proxy_z: f.proxy.z,
            fx: f.force.x,
            fy: f.force.y,
            fz: f.force.z,
            contact: f.in_contact as u8,
            stuck: f.stuck as u8,
            mu_d: f.mu_d,
            iters: f.iters,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct EventRow {
    t: u64,
    zone: u32,
    gain: f64,
}

impl SessionTrace {
    pub fn rows(&self) -> Vec<TraceRow> {
        self.frames.iter().map(TraceRow::from).collect()
    }

    pub fn events(&self) -> impl Iterator<Item = &NoteEvent> {
        self.frames.iter().flat_map(|f| f.events.iter())
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(TRACE_HEADER)?;
        for f in &self.frames {
            w.serialize(TraceRow::from(f))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_events_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(["t", "zone", "gain"])?;
        for e in self.events() {
            w.serialize(EventRow {
                t: e.t,
                zone: e.zone_id,
                gain: e.gain,
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn metrics_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.metrics)?)
    }
}

pub fn read_trace_csv(reader: impl Read) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != TRACE_HEADER {
        return Err(Error::format("trace csv", format!("unexpected header {header:?}")));
    }
    Ok(rdr
        .deserialize::<TraceRow>()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

pub fn read_events_csv(reader: impl Read) -> Result<Vec<NoteEvent>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize::<EventRow>()
        .map(|r| {
            let r = r?;
            Ok(NoteEvent {
                t: r.t,
                zone_id: r.zone,
                gain: r.gain,
            })
        })
        .collect()
}

fn compute_metrics(frames: &[HapticFrame], eps: f64, step_seconds: Option<&[f64]>) -> SessionMetrics {
    let convergence_tick = frames
        .iter()
        .find(|f| f.in_contact && f.tangent_residual < eps)
        .map(|f| f.t);
    let (mean, p99) = match step_seconds {
        Some(s) if !s.is_empty() => {
            let q = quantiles(s);
            (Some(q.mean), Some(q.p99))
        }
        _ => (None, None),
    };
    SessionMetrics {
        ticks: frames.len(),
        contact_ticks: frames.iter().filter(|f| f.in_contact).count(),
        convergence_tick,
        event_count: frames.iter().map(|f| f.events.len()).sum(),
        max_abs_force: frames.iter().map(|f| f.force.norm()).fold(0.0, f64::max),
        mean_step_seconds: mean,
        p99_step_seconds: p99,
    }
}

fn run(
    scene: Arc<Scene>,
    material: Material,
    config: LoopConfig,
    traj: &Trajectory,
    timed: bool,
) -> Result<SessionTrace> {
    let mut lp = HapticLoop::new(scene, material, config, traj.hip_at(0.0))?;
    let n = traj.num_ticks();
    let mut frames = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(if timed { n } else { 0 });
    for i in 0..n {
        let hip = traj.hip_at(traj.tick_time(i));
        if timed {
            let start = Instant::now();
            let f = lp.step(hip);
            times.push(start.elapsed().as_secs_f64());
            frames.push(f);
        } else {
            frames.push(lp.step(hip));
        }
    }
    let metrics = compute_metrics(&frames, config.engine.eps, timed.then_some(&times[..]));
    Ok(SessionTrace { frames, metrics })
}

/// Replays `traj` deterministically; the trace carries no timing data.
pub fn run_session(
    scene: Arc<Scene>,
    material: Material,
    config: LoopConfig,
    traj: &Trajectory,
) -> Result<SessionTrace> {
    run(scene, material, config, traj, false)
}

/// As [`run_session`], additionally recording wall-clock time per tick.
pub fn run_session_timed(
    scene: Arc<Scene>,
    material: Material,
    config: LoopConfig,
    traj: &Trajectory,
) -> Result<SessionTrace> {
    run(scene, material, config, traj, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagReport {
    pub plain_tick: u64,
    pub friction_tick: u64,
    /// `friction_tick - plain_tick`
    pub lag_ticks: i64,
    /// Largest proxy separation once both traces have converged.
    pub max_proxy_diff: f64,
    pub max_proxy_z_diff: f64,
}

pub fn friction_lag_metric(plain: &SessionTrace, friction: &SessionTrace) -> Result<LagReport> {
    if plain.frames.len() != friction.frames.len() {
        return Err(Error::TraceLengthMismatch(plain.frames.len(), friction.frames.len()));
    }
    let a = plain.metrics.convergence_tick.ok_or(Error::NotConverged)?;
    let b = friction.metrics.convergence_tick.ok_or(Error::NotConverged)?;
    let from = a.max(b) as usize;
    let (mut diff, mut dz) = (0.0f64, 0.0f64);
    for (p, f) in plain.frames[from..].iter().zip(&friction.frames[from..]) {
        diff = diff.max((p.proxy - f.proxy).norm());
        dz = dz.max((p.proxy.z - f.proxy.z).abs());
    }
    Ok(LagReport {
        plain_tick: a,
        friction_tick: b,
        lag_ticks: b as i64 - a as i64,
        max_proxy_diff: diff,
        max_proxy_z_diff: dz,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchStats {
    pub samples: usize,
    pub mean: f64,
    pub p50: f64,
    pub p99: f64,
    pub max: f64,
}

fn quantiles(samples: &[f64]) -> BenchStats {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let at = |q: f64| s[((q * (s.len() - 1) as f64).round() as usize).min(s.len() - 1)];
    BenchStats {
        samples: s.len(),
        mean: s.iter().sum::<f64>() / s.len() as f64,
        p50: at(0.5),
        p99: at(0.99),
        max: s[s.len() - 1],
    }
}

/// Random in-contact probe states spread over the interior of `hf`.
pub fn random_contact_states(hf: &Heightfield, count: usize, seed: u64) -> Vec<ProbeState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (xmax, ymax) = hf.depth_map().extent();
    let reach = 0.05 * xmax.max(ymax);
    (0..count)
        .map(|_| {
            let x = rng.random_range(0.05 * xmax..0.95 * xmax);
            let y = rng.random_range(0.05 * ymax..0.95 * ymax);
            let proxy = hf.vertical_projection(x, y).position;
            let offset = Vec3::new(
                rng.random_range(-reach..reach),
                rng.random_range(-reach..reach),
                -rng.random_range(0.0..reach),
            );
            ProbeState {
                hip: proxy + offset,
                proxy,
                in_contact: true,
                stuck: false,
                slide_factor: None,
            }
        })
        .collect()
}

/// Wall-clock latency of single proxy updates over random contact states.
pub fn bench_step(
    hf: &Heightfield,
    material: Material,
    friction: Option<&Grid>,
    samples: usize,
    seed: u64,
) -> Result<BenchStats> {
    if samples < MIN_BENCH_SAMPLES {
        return Err(Error::invalid(format!(
            "bench needs at least {MIN_BENCH_SAMPLES} samples, got {samples}"
        )));
    }
    let engine = ProxyEngine::new(hf, friction, material, EngineConfig::default())?;
    let states = random_contact_states(hf, samples, seed);
    // warm caches and branch predictors
    for s in states.iter().take(64) {
        black_box(engine.proxy_step(black_box(s)));
    }
    let times: Vec<f64> = states
        .iter()
        .map(|s| {
            let start = Instant::now();
            black_box(engine.proxy_step(black_box(s)));
            start.elapsed().as_secs_f64()
        })
        .collect();
    Ok(quantiles(&times))
}
