//! Octave pyramid of depth maps and region-of-interest selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, WORKSPACE_EXTENT};
use crate::grid::Grid;

pub const DEFAULT_SIGMA_PRE: f64 = 1.0;
/// Smallest level side the pyramid may produce.
pub const MIN_LEVEL_SIZE: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pyramid {
    levels: Vec<DepthMap>,
    sigma_pre: f64,
}

impl Pyramid {
    pub fn levels(&self) -> &[DepthMap] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> Option<&DepthMap> {
        self.levels.get(l)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn sigma_pre(&self) -> f64 {
        self.sigma_pre
    }

    /// Selection covering the whole of level `l` at unit gain.
    pub fn full_roi(&self, l: usize) -> Option<RoiSelection> {
        let d = self.levels.get(l)?;
        let extent = d.width().min(d.height()) - 1;
        Some(RoiSelection {
            level: l,
            center: ((d.width() - 1) as f64 / 2.0, (d.height() - 1) as f64 / 2.0),
            extent,
            depth_gain: 1.0,
        })
    }
}

/// Normalized Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
/// `sigma = 0` yields the identity kernel.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(g: &Grid, sigma: f64) -> Grid {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return g.clone();
    }
    let r = (kernel.len() / 2) as isize;
    let (w, h) = g.shape();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let horiz = Grid::from_fn(w, h, |i, j| {
        let row = g.row(j);
        kernel
            .iter()
            .enumerate()
            .map(|(t, k)| k * row[clamp(i as isize + t as isize - r, w)])
            .sum()
    });
    Grid::from_fn(w, h, |i, j| {
        kernel
            .iter()
            .enumerate()
            .map(|(t, k)| k * horiz.get(i, clamp(j as isize + t as isize - r, h)))
            .sum()
    })
}

/// Keeps every second sample starting at index 0.
pub fn decimate(g: &Grid) -> Grid {
    let w = g.width().div_ceil(2);
    let h = g.height().div_ceil(2);
    Grid::from_fn(w, h, |i, j| g.get(2 * i, 2 * j))
}

pub fn build_pyramid(depth: &DepthMap, num_levels: usize) -> Result<Pyramid> {
    build_pyramid_with_sigma(depth, num_levels, DEFAULT_SIGMA_PRE)
}

pub fn build_pyramid_with_sigma(
    depth: &DepthMap,
    num_levels: usize,
    sigma_pre: f64,
) -> Result<Pyramid> {
    if num_levels == 0 {
        return Err(Error::invalid("pyramid needs at least one level"));
    }
    if !(sigma_pre.is_finite() && sigma_pre >= 0.0) {
        return Err(Error::invalid(format!("sigma_pre must be >= 0, got {sigma_pre}")));
    }
    let (w, h) = (depth.width(), depth.height());
    let shrink = |n: usize| n.div_ceil(1 << (num_levels - 1));
    if num_levels > usize::BITS as usize
        || shrink(w) < MIN_LEVEL_SIZE
        || shrink(h) < MIN_LEVEL_SIZE
    {
        return Err(Error::TooManyLevels {
            levels: num_levels,
            width: w,
            height: h,
            min: MIN_LEVEL_SIZE,
        });
    }

    let span = depth.spacing() * (w.max(h) - 1) as f64;
    let mut levels = Vec::with_capacity(num_levels);
    levels.push(depth.clone());
    for _ in 1..num_levels {
        let prev = levels.last().expect("at least one level").samples();
        let next = decimate(&gaussian_blur(prev, sigma_pre));
        let spacing = span / (next.width().max(next.height()) - 1) as f64;
        levels.push(DepthMap::new(next, spacing, depth.depth_scale())?);
    }
    Ok(Pyramid { levels, sigma_pre })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiSelection {
    pub level: usize,
    /// Tile center in lattice coordinates of the chosen level.
    pub center: (f64, f64),
    /// Tile side in lattice intervals; the tile holds `extent + 1` samples.
    pub extent: usize,
    pub depth_gain: f64,
}

/// Placement of an extracted tile in its level and in the workspace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceMapping {
    pub level: usize,
    /// Lattice index of the tile's first sample in the level.
    pub origin: (usize, usize),
    pub extent: usize,
    /// Workspace length per tile lattice step.
    pub spacing: f64,
    pub depth_scale: f64,
    /// Ratio of tile spacing to level spacing.
    pub magnification: f64,
}

fn clamp_origin(center: f64, extent: usize, n: usize) -> usize {
    let max = (n - 1 - extent) as f64;
    let c = if center.is_finite() { center } else { 0.0 };
    (c - extent as f64 / 2.0).round().clamp(0.0, max) as usize
}

pub fn select_roi(pyr: &Pyramid, sel: &RoiSelection) -> Result<(DepthMap, WorkspaceMapping)> {
    let level = pyr
        .level(sel.level)
        .ok_or_else(|| Error::invalid(format!("level out of range: {}", sel.level)))?;
    if !(sel.depth_gain.is_finite() && sel.depth_gain > 0.0) {
        return Err(Error::invalid("depth_gain must be > 0"));
    }
    let (w, h) = (level.width(), level.height());
    let extent = sel.extent.clamp(1, w.min(h) - 1);
    let i0 = clamp_origin(sel.center.0, extent, w);
    let j0 = clamp_origin(sel.center.1, extent, h);
    let samples = level.samples().window(i0, j0, extent + 1, extent + 1)?;

    let spacing = WORKSPACE_EXTENT / extent as f64;
    let magnification = spacing / level.spacing();
    let depth_scale = level.depth_scale() * magnification * sel.depth_gain;
    let tile = DepthMap::new(samples, spacing, depth_scale)?;
    Ok((
        tile,
        WorkspaceMapping {
            level: sel.level,
            origin: (i0, j0),
            extent,
            spacing,
            depth_scale,
            magnification,
        },
    ))
}
