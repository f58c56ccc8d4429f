//! Continuous heightfield over a depth-map lattice.
//!
//! The surface is the Monge patch `z = f(x, y)` obtained by bilinear
//! interpolation of the stored samples. Free space is `z > f(x, y)`; a point
//! with `z` exactly on the surface is not penetrating. Coordinates outside the
//! lattice are clamped to the border.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cell_coord, Grid};

pub type Vec3 = Vector3<f64>;

/// Edge length of the normalized haptic workspace cube.
pub const WORKSPACE_EXTENT: f64 = 1.0;

/// Depth scale used when no sidecar metadata is available, as a fraction of
/// the workspace extent.
pub const DEFAULT_DEPTH_FRACTION: f64 = 0.25;

const PROJECTION_MAX_ITERS: usize = 16;
const PROJECTION_TOL: f64 = 1e-7;

/// Regular lattice of depth samples with its workspace mapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    samples: Grid,
    /// Workspace length per lattice step, identical along x and y.
    spacing: f64,
    /// Multiplier from stored sample values to workspace length.
    depth_scale: f64,
}

impl DepthMap {
    pub fn new(samples: Grid, spacing: f64, depth_scale: f64) -> Result<Self> {
        if samples.width() < 2 || samples.height() < 2 {
            return Err(Error::GridTooSmall {
                width: samples.width(),
                height: samples.height(),
                min: 2,
            });
        }
        if !samples.all_finite() {
            return Err(Error::invalid("depth samples must be finite"));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid(format!("spacing must be > 0, got {spacing}")));
        }
        if !(depth_scale.is_finite() && depth_scale > 0.0) {
            return Err(Error::invalid(format!(
                "depth_scale must be > 0, got {depth_scale}"
            )));
        }
        Ok(Self {
            samples,
            spacing,
            depth_scale,
        })
    }

    /// Maps the lattice onto the unit workspace: the longer axis spans the
    /// full extent and depths occupy a quarter of it.
    pub fn with_default_mapping(samples: Grid) -> Result<Self> {
        let spacing = default_spacing(samples.width(), samples.height());
        Self::new(
            samples,
            spacing,
            DEFAULT_DEPTH_FRACTION * WORKSPACE_EXTENT,
        )
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.samples.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.samples.height()
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    #[inline]
    pub fn depth_scale(&self) -> f64 {
        self.depth_scale
    }

    pub fn samples(&self) -> &Grid {
        &self.samples
    }

    pub fn into_samples(self) -> Grid {
        self.samples
    }

    /// Lateral extent `(x_max, y_max)` covered by the lattice.
    pub fn extent(&self) -> (f64, f64) {
        (
            (self.width() - 1) as f64 * self.spacing,
            (self.height() - 1) as f64 * self.spacing,
        )
    }

    /// Same mapping, different samples.
    pub fn with_samples(&self, samples: Grid) -> Result<Self> {
        Self::new(samples, self.spacing, self.depth_scale)
    }
}

pub fn default_spacing(width: usize, height: usize) -> f64 {
    WORKSPACE_EXTENT / (width.max(height).max(2) - 1) as f64
}

/// A point on the surface together with the unit normal there.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub normal: Vec3,
}

/// Immutable continuous view of a [`DepthMap`].
///
/// Lattice gradients are computed once at construction (central differences,
/// one-sided on the border) and interpolated bilinearly for normals.
#[derive(Clone, Debug)]
pub struct Heightfield {
    depth: DepthMap,
    grad_x: Grid,
    grad_y: Grid,
}

impl Heightfield {
    pub fn new(depth: DepthMap) -> Self {
        let (grad_x, grad_y) = lattice_gradients(&depth);
        Self {
            depth,
            grad_x,
            grad_y,
        }
    }

    pub fn depth_map(&self) -> &DepthMap {
        &self.depth
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.depth.spacing
    }

    #[inline]
    pub fn depth_scale(&self) -> f64 {
        self.depth.depth_scale
    }

    /// Surface height at workspace coordinates `(x, y)`.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let inv = 1.0 / self.depth.spacing;
        self.depth.samples.sample_bilinear(x * inv, y * inv) * self.depth.depth_scale
    }

    /// Surface height at fractional lattice coordinates.
    #[inline]
    pub fn sample_lattice(&self, u: f64, v: f64) -> f64 {
        self.depth.samples.sample_bilinear(u, v) * self.depth.depth_scale
    }

    /// Interpolated surface gradient `(df/dx, df/dy)` in workspace units.
    #[inline]
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let inv = 1.0 / self.depth.spacing;
        let (u, v) = (x * inv, y * inv);
        (
            self.grad_x.sample_bilinear(u, v),
            self.grad_y.sample_bilinear(u, v),
        )
    }

    /// Unit normal pointing into free space.
    #[inline]
    pub fn normal(&self, x: f64, y: f64) -> Vec3 {
        let (gx, gy) = self.gradient(x, y);
        Vec3::new(-gx, -gy, 1.0).normalize()
    }

    #[inline]
    pub fn is_penetrating(&self, p: &Vec3) -> bool {
        self.sample(p.x, p.y) > p.z
    }

    /// Point on the surface directly above or below `(x, y)`.
    pub fn vertical_projection(&self, x: f64, y: f64) -> SurfacePoint {
        SurfacePoint {
            position: Vec3::new(x, y, self.sample(x, y)),
            normal: self.normal(x, y),
        }
    }

    /// Moves `p` along the line `p + t n` onto the surface.
    ///
    /// Solves `f(p_xy + t n_xy) = p_z + t n_z` by secant iteration. The
    /// returned height is snapped to the interpolated surface. Falls back to
    /// the vertical projection when the iteration fails or strays further
    /// than the initial vertical gap warrants.
    pub fn project_to_surface(&self, p: &Vec3, n: &Vec3) -> SurfacePoint {
        let residual = |t: f64| self.sample(p.x + t * n.x, p.y + t * n.y) - (p.z + t * n.z);
        let tol = PROJECTION_TOL * self.depth.depth_scale;

        let g_start = residual(0.0);
        if g_start.abs() < tol {
            return self.vertical_projection(p.x, p.y);
        }
        let nz = n.z.abs().max(0.05);
        let max_step = 2.0 * g_start.abs() / nz + self.depth.spacing;

        let (mut t0, mut g0) = (0.0, g_start);
        let mut t1 = g_start / nz;
        for _ in 0..PROJECTION_MAX_ITERS {
            let g1 = residual(t1);
            if g1.abs() < tol {
                if t1.abs() <= max_step {
                    return self.vertical_projection(p.x + t1 * n.x, p.y + t1 * n.y);
                }
                break;
            }
            let denom = g1 - g0;
            if denom == 0.0 {
                break;
            }
            let t2 = t1 - g1 * (t1 - t0) / denom;
            if !t2.is_finite() {
                break;
            }
            (t0, g0, t1) = (t1, g1, t2);
        }
        self.vertical_projection(p.x, p.y)
    }

    /// First point where the straight segment `from -> to` enters the solid,
    /// or `None` when the whole segment stays in free space.
    ///
    /// The segment is marched at half-lattice steps and the crossing refined
    /// by bisection; the returned point lies on the surface.
    pub fn first_crossing(&self, from: &Vec3, to: &Vec3) -> Option<Vec3> {
        let delta = to - from;
        let lateral = (delta.x * delta.x + delta.y * delta.y).sqrt();
        let steps = ((lateral / (0.5 * self.depth.spacing)).ceil() as usize).clamp(1, 4096);
        let mut prev = 0.0;
        for k in 1..=steps {
            let s = k as f64 / steps as f64;
            let q = from + delta * s;
            if self.is_penetrating(&q) {
                let (mut lo, mut hi) = (prev, s);
                for _ in 0..48 {
                    let mid = 0.5 * (lo + hi);
                    if self.is_penetrating(&(from + delta * mid)) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let q = from + delta * lo;
                return Some(Vec3::new(q.x, q.y, self.sample(q.x, q.y)));
            }
            prev = s;
        }
        None
    }
}

fn lattice_gradients(depth: &DepthMap) -> (Grid, Grid) {
    let g = depth.samples();
    let (w, h) = g.shape();
    let scale = depth.depth_scale / depth.spacing;
    let gx = Grid::from_fn(w, h, |i, j| {
        let d = if i == 0 {
            g.get(1, j) - g.get(0, j)
        } else if i == w - 1 {
            g.get(w - 1, j) - g.get(w - 2, j)
        } else {
            0.5 * (g.get(i + 1, j) - g.get(i - 1, j))
        };
        d * scale
    });
    let gy = Grid::from_fn(w, h, |i, j| {
        let d = if j == 0 {
            g.get(i, 1) - g.get(i, 0)
        } else if j == h - 1 {
            g.get(i, h - 1) - g.get(i, h - 2)
        } else {
            0.5 * (g.get(i, j + 1) - g.get(i, j - 1))
        };
        d * scale
    });
    (gx, gy)
}

/// Lattice cell containing workspace coordinate `x` for a map of `n` nodes.
pub fn cell_of(x: f64, spacing: f64, n: usize) -> (usize, f64) {
    cell_coord(x / spacing, n)
}
