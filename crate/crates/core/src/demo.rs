//! Synthetic models for demos and reproducible scenarios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::ZoneMap;
use crate::error::Result;
use crate::geometry::{default_spacing, DepthMap, Heightfield, Vec3};
use crate::grid::Grid;
use crate::model::Model;
use crate::proxy::Material;
use crate::sim::Trajectory;

/// `z = base + amplitude * sin(2 pi x / wavelength)`, constant along y, on
/// an `n x n` lattice over the unit workspace. Samples are workspace depths.
pub fn sinusoid(n: usize, base: f64, amplitude: f64, wavelength: f64) -> Result<DepthMap> {
    let s = default_spacing(n, n);
    let g = Grid::from_fn(n, n, |i, _| {
        base + amplitude * (std::f64::consts::TAU * i as f64 * s / wavelength).sin()
    });
    DepthMap::new(g, s, 1.0)
}

/// Spherical cap of radius `r` whose apex sits at the lattice center with
/// height `apex`; samples are workspace depths.
pub fn sphere_cap(n: usize, r: f64, apex: f64) -> Result<DepthMap> {
    let s = default_spacing(n, n);
    let c = (n - 1) as f64 * s / 2.0;
    let g = Grid::from_fn(n, n, |i, j| {
        let dx = i as f64 * s - c;
        let dy = j as f64 * s - c;
        let q = (r * r - dx * dx - dy * dy).max(0.0);
        apex - r + q.sqrt()
    });
    DepthMap::new(g, s, 1.0)
}

/// Smooth dome carrying fine ripples and seeded noise.
pub fn textured_relief(n: usize, seed: u64) -> Result<DepthMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = default_spacing(n, n);
    let g = Grid::from_fn(n, n, |i, j| {
        let (x, y) = (i as f64 * s, j as f64 * s);
        let r2 = (x - 0.5).powi(2) + (y - 0.5).powi(2);
        let dome = 0.3 + 0.15 * (-r2 / 0.08).exp();
        let ripple = 0.004
            * (std::f64::consts::TAU * 12.0 * x).sin()
            * (std::f64::consts::TAU * 9.0 * y).sin();
        dome + ripple + rng.random_range(-0.002..0.002)
    });
    DepthMap::new(g, s, 1.0)
}

/// Seven raised pillars in a row over a flat base, each labeled with its
/// own zone 1..=7 over its top face.
pub fn pillars(n: usize) -> Result<(DepthMap, ZoneMap)> {
    let s = default_spacing(n, n);
    let footprint = |i: usize, j: usize| -> Option<u32> {
        let (x, y) = (i as f64 * s, j as f64 * s);
        if !(0.35..=0.65).contains(&y) {
            return None;
        }
        let slot = (x - 0.08) / 0.12;
        if !(0.0..7.0).contains(&slot) || slot.fract() > 0.7 {
            return None;
        }
        Some(slot as u32 + 1)
    };
    let g = Grid::from_fn(n, n, |i, j| match footprint(i, j) {
        Some(k) => 0.3 + 0.02 * k as f64,
        None => 0.2,
    });
    let mut labels = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            labels.push(footprint(i, j).unwrap_or(0));
        }
    }
    Ok((DepthMap::new(g, s, 1.0)?, ZoneMap::new(n, n, labels, s)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DemoKind {
    Sinusoid,
    Relief,
    Pillars,
    Sphere,
}

pub fn demo_model(kind: DemoKind, n: usize, seed: u64) -> Result<Model> {
    Ok(match kind {
        DemoKind::Sinusoid => Model::new("sinusoid", sinusoid(n, 0.5, 0.05, 0.2)?),
        DemoKind::Relief => Model::new("relief", textured_relief(n, seed)?),
        DemoKind::Sphere => Model::new("sphere", sphere_cap(n, 0.5, 0.6)?),
        DemoKind::Pillars => {
            let (d, z) = pillars(n)?;
            Model::new("pillars", d).with_zones(z)?
        }
    })
}

/// A surface, a scripted HIP path and the material to replay it with.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub depth: DepthMap,
    pub trajectory: Trajectory,
    pub material: Material,
}

/// Quick poke onto the steep flank of a sinusoid, then a hold. The slide
/// toward equilibrium runs with `mu_d cot(beta)` near 0.5 when friction is on.
pub fn friction_lag_scenario() -> Result<Scenario> {
    let depth = sinusoid(129, 0.5, 0.05, 0.2)?;
    let hf = Heightfield::new(depth.clone());
    let (x, y) = (0.4, 0.5);
    let top = hf.sample(x, y);
    let trajectory = Trajectory::poke(Vec3::new(x, y, top + 0.001), top - 0.02, 0.004, 0.5)?;
    let material = Material {
        rho: 0.01,
        mu_s: 0.1,
        ..Material::default()
    };
    Ok(Scenario {
        depth,
        trajectory,
        material,
    })
}

/// Lattice index of the valley the force-trace scenario ends in.
pub const FORCE_TRACE_END_NODE: usize = 56;

/// Free-space hover, vertical poke into one valley of a gentle sinusoid,
/// drag at constant height into the next valley, hold. Valleys sit on
/// lattice nodes.
pub fn force_trace_scenario() -> Result<Scenario> {
    let depth = sinusoid(129, 0.5, 0.01, 0.25)?;
    let s = depth.spacing();
    let (x0, x1, y) = (24.0 * s, FORCE_TRACE_END_NODE as f64 * s, 0.5);
    let valley = depth.samples().get(FORCE_TRACE_END_NODE, 64) * depth.depth_scale();
    let trajectory = Trajectory::poke_then_drag(
        Vec3::new(x0, y, 0.7),
        0.5,
        valley - 0.01,
        0.5,
        (x1, y),
        1.0,
        0.5,
    )?;
    Ok(Scenario {
        depth,
        trajectory,
        material: Material {
            mu_s: 0.0,
            ..Material::default()
        },
    })
}
