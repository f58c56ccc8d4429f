//! Haptic rendering of depth-map surfaces.
//!
//! A point proxy is constrained to the heightfield described by a
//! [`DepthMap`] and coupled to the haptic interface point by a spring. Fine
//! surface texture is separated from the envelope with a bilateral filter
//! and turned into a per-sample dynamic friction coefficient.

pub mod audio;
pub mod demo;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod lod;
pub mod model;
pub mod proxy;
pub mod sim;
pub mod texture;

pub use audio::{AudioClip, NoteEvent, ZoneMap};

pub use error::{Error, Result};
pub use geometry::{DepthMap, Heightfield, SurfacePoint, Vec3};
pub use grid::Grid;
pub use proxy::{
    contact_forces, friction_gate, reaction_force, tangent_direction, ContactForces,
    EngineConfig, FrictionGate, Material, ProbeState, ProxyEngine, ProxyKinematics, StepOutcome,
    TickOutput,
};
pub use texture::{
    bilateral_filter, curvature_maps, extract_texture, friction_coefficient, friction_map,
    CurvatureSource, FilterParams, TextureBundle, TextureParams,
};
pub use lod::{build_pyramid, select_roi, Pyramid, RoiSelection, WorkspaceMapping};
pub use model::Model;
pub use sim::{
    bench_step, friction_lag_metric, run_session, BenchStats, HapticFrame, HapticLoop, LagReport,
    LoopConfig, Scene, SessionTrace, Trajectory, TrajectorySpec, Waypoint,
};
