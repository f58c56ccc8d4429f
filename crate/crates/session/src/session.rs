//! One client's haptic session: scene selection, HIP path and frame publishing.

use std::sync::Arc;

use hapto_core::sim::{interpolate_waypoints, DEFAULT_RATE};
use hapto_core::{
    HapticFrame, HapticLoop, LoopConfig, Material, NoteEvent, RoiSelection, Scene, TextureParams,
    Vec3, Waypoint, WorkspaceMapping,
};
use serde::{Deserialize, Serialize};

use crate::error::SessionError;
use crate::library::{ModelLibrary, PreparedModel};
use crate::protocol::{AckPayload, ClientCommand, FramePayload, HelloPayload, TileInfo, ViewDescriptor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub tick_rate: f64,
    pub publish_rate: f64,
    /// Delay applied to `HipMove` targets that carry no timestamp.
    pub hip_lead: f64,
    pub start: [f64; 3],
    pub material: Material,
    pub loop_config: LoopConfig,
    /// Largest tile side sent to clients; bigger tiles are subsampled.
    pub max_tile_side: usize,
    pub max_levels: usize,
    pub texture: TextureParams,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            tick_rate: DEFAULT_RATE,
            publish_rate: 60.0,
            hip_lead: 0.02,
            start: [0.5, 0.5, 1.0],
            material: Material::default(),
            loop_config: LoopConfig::default(),
            max_tile_side: 129,
            max_levels: 4,
            texture: TextureParams::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        if !(self.tick_rate.is_finite() && self.tick_rate > 0.0) {
            return Err(SessionError::Invalid("tick_rate must be > 0".into()));
        }
        if !(self.publish_rate.is_finite() && self.publish_rate > 0.0 && self.publish_rate <= self.tick_rate) {
            return Err(SessionError::Invalid("publish_rate must be in (0, tick_rate]".into()));
        }
        if !(self.hip_lead.is_finite() && self.hip_lead >= 0.0) {
            return Err(SessionError::Invalid("hip_lead must be >= 0".into()));
        }
        if self.start.iter().any(|v| !v.is_finite()) {
            return Err(SessionError::Invalid("start must be finite".into()));
        }
        if self.max_tile_side < 2 {
            return Err(SessionError::Invalid("max_tile_side must be >= 2".into()));
        }
        self.material.validate()?;
        self.loop_config.validate()?;
        Ok(())
    }
}

/// Result of one tick.
#[derive(Clone, Debug)]
pub struct TickReport {
    pub frame: HapticFrame,
    /// True when this tick falls on the publish schedule.
    pub publish: bool,
}

pub struct Session {
    library: Arc<ModelLibrary>,
    config: SessionConfig,
    model: Arc<PreparedModel>,
    roi: RoiSelection,
    mapping: WorkspaceMapping,
    hloop: HapticLoop,
    path: Vec<Waypoint>,
    pending: Vec<NoteEvent>,
}

impl Session {
    pub fn new(library: Arc<ModelLibrary>, config: SessionConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let model = library.first();
        let roi = model.pyramid.full_roi(0).expect("pyramid has a base level");
        let (scene, mapping) = model.tile(&roi, &config.material)?;
        let start = Vec3::from(config.start);
        let hloop = HapticLoop::new(Arc::new(scene), config.material, config.loop_config, start)?;
        Ok(Self {
            library,
            config,
            model,
            roi,
            mapping,
            hloop,
            path: Vec::new(),
            pending: Vec::new(),
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn scene(&self) -> &Arc<Scene> {
        self.hloop.scene()
    }

    pub fn haptic_loop(&self) -> &HapticLoop {
        &self.hloop
    }

    /// Session time of the next tick, in seconds.
    pub fn now(&self) -> f64 {
        self.hloop.tick_index() as f64 / self.config.tick_rate
    }

    pub fn hip_at(&self, t: f64) -> Vec3 {
        if self.path.is_empty() {
            self.hloop.state().hip
        } else {
            interpolate_waypoints(&self.path, t)
        }
    }

    pub fn view(&self) -> ViewDescriptor {
        ViewDescriptor {
            model: self.model.name().to_owned(),
            level: self.roi.level,
            levels: self.model.levels(),
            roi: self.roi,
            mapping: self.mapping,
            friction: self.hloop.config().friction_enabled,
        }
    }

    pub fn tile_info(&self) -> TileInfo {
        let scene = self.scene();
        let depth = scene.heightfield.depth_map();
        let n = depth.width();
        let stride = (n - 1).div_ceil(self.config.max_tile_side - 1).max(1);
        let idx: Vec<usize> = (0..n).step_by(stride).collect();
        let mut heights = Vec::with_capacity(idx.len() * idx.len());
        let mut friction = scene.friction.as_ref().map(|_| Vec::new());
        let mut zones = scene.zones.as_ref().map(|_| Vec::new());
        for &j in &idx {
            for &i in &idx {
                heights.push(depth.samples().get(i, j) * depth.depth_scale());
                if let (Some(out), Some(g)) = (friction.as_mut(), scene.friction.as_ref()) {
                    out.push(g.get(i, j));
                }
                if let (Some(out), Some(z)) = (zones.as_mut(), scene.zones.as_ref()) {
                    out.push(z.label(i, j));
                }
            }
        }
        TileInfo {
            width: idx.len(),
            height: idx.len(),
            stride,
            spacing: depth.spacing() * stride as f64,
            heights,
            friction,
            zones,
        }
    }

    pub fn hello(&self) -> HelloPayload {
        HelloPayload {
            models: self.library.names(),
            tick_rate: self.config.tick_rate,
            publish_rate: self.config.publish_rate,
            view: self.view(),
            tile: self.tile_info(),
        }
    }

    /// Applies a command. On error the session is left unchanged.
    pub fn handle_command(&mut self, seq: u64, cmd: &ClientCommand) -> Result<AckPayload, SessionError> {
        cmd.validate()?;
        let mut scene_changed = false;
        match *cmd {
            ClientCommand::HipMove { x, y, z, at } => {
                self.push_target(Vec3::new(x, y, z), at)?;
            }
            ClientCommand::SelectModel { ref name } => {
                let model = self.library.get(name)?;
                let roi = model.pyramid.full_roi(0).expect("pyramid has a base level");
                let (scene, mapping) = model.tile(&roi, self.hloop.material())?;
                self.model = model;
                self.install(roi, mapping, scene);
                scene_changed = true;
            }
            ClientCommand::SelectLevel { level } => {
                let roi = self.model.pyramid.full_roi(level).ok_or(SessionError::LevelOutOfRange {
                    level,
                    levels: self.model.levels(),
                })?;
                let (scene, mapping) = self.model.tile(&roi, self.hloop.material())?;
                self.install(roi, mapping, scene);
                scene_changed = true;
            }
            ClientCommand::SelectRoi {
                center,
                extent,
                depth_gain,
            } => {
                let roi = RoiSelection {
                    level: self.roi.level,
                    center: (center[0], center[1]),
                    extent,
                    depth_gain: depth_gain.unwrap_or(self.roi.depth_gain),
                };
                let (scene, mapping) = self.model.tile(&roi, self.hloop.material())?;
                self.install(roi, mapping, scene);
                scene_changed = true;
            }
            ClientCommand::SetMaterial {
                k,
                rho,
                mu_s,
                mu_max,
                g0,
            } => {
                let old = *self.hloop.material();
                let material = Material {
                    stiffness_k: k,
                    rho,
                    mu_s,
                    mu_max,
                    workspace_r: old.workspace_r,
                };
                material.validate()?;
                let config = LoopConfig {
                    g0,
                    ..*self.hloop.config()
                };
                config.validate()?;
                let rebuilt = if mu_max != old.mu_max {
                    Some(self.model.tile(&self.roi, &material)?)
                } else {
                    None
                };
                self.hloop.set_material(material)?;
                self.hloop.set_g0(g0)?;
                if let Some((scene, mapping)) = rebuilt {
                    self.mapping = mapping;
                    self.hloop.update_scene(Arc::new(scene));
                    scene_changed = true;
                }
            }
            ClientCommand::ToggleFriction { on } => self.hloop.set_friction_enabled(on),
            ClientCommand::Reset => {
                self.hloop.reset();
                self.pending.clear();
            }
        }
        let view_changed = !matches!(cmd, ClientCommand::HipMove { .. } | ClientCommand::Reset);
        Ok(AckPayload {
            command_seq: seq,
            command: cmd.name().to_owned(),
            view: view_changed.then(|| self.view()),
            tile: scene_changed.then(|| self.tile_info()),
        })
    }

    fn install(&mut self, roi: RoiSelection, mapping: WorkspaceMapping, scene: Scene) {
        self.roi = roi;
        self.mapping = mapping;
        self.hloop.set_scene(Arc::new(scene));
        self.pending.clear();
    }

    /// Adds a HIP target. Targets without `at` are scheduled `hip_lead`
    /// seconds ahead; later targets replace any path beyond their time.
    fn push_target(&mut self, pos: Vec3, at: Option<f64>) -> Result<(), SessionError> {
        let now = self.now();
        let at = at.unwrap_or(now + self.config.hip_lead);
        if at < now {
            return Err(SessionError::Invalid(format!(
                "HipMove: target time {at} is before session time {now}"
            )));
        }
        let current = self.hip_at(now);
        self.path.retain(|w| w.t < at);
        if at > now && self.path.last().is_none_or(|w| w.t < now) {
            self.path.push(Waypoint::new(now, current));
        }
        self.path.push(Waypoint::new(at, pos));
        Ok(())
    }

    /// Runs one haptic tick at the current session time.
    pub fn tick(&mut self) -> TickReport {
        let now = self.now();
        let hip = self.hip_at(now);
        // keep the last waypoint at or before now as the interpolation anchor
        if let Some(k) = self.path.iter().rposition(|w| w.t <= now) {
            self.path.drain(..k);
        }
        let frame = self.hloop.step(hip);
        self.pending.extend(frame.events.iter().copied());
        let ratio = self.config.publish_rate / self.config.tick_rate;
        let publish = ((frame.t + 1) as f64 * ratio).floor() > (frame.t as f64 * ratio).floor();
        TickReport { frame, publish }
    }

    /// Frame for publication together with every event since the last call.
    pub fn take_frame(&mut self, frame: &HapticFrame) -> FramePayload {
        let events = std::mem::take(&mut self.pending);
        FramePayload::new(frame, events, self.roi.level, self.roi)
    }
}
