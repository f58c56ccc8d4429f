//! Envelope/texture decomposition and the curvature-driven friction map.
//!
//! The envelope `f_b` is an edge-preserving bilateral smoothing of the depth
//! samples; the texture is the residual `h = f - f_b`. Mean and Gaussian
//! curvature of the texture feed the dynamic friction coefficient
//! `mu_d = 1 / (R * sqrt(H^2 + K^2))`, clamped to `mu_max`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, WORKSPACE_EXTENT};
use crate::grid::Grid;

/// Upper clamp for the dynamic friction coefficient.
pub const DEFAULT_MU_MAX: f64 = 0.9;
/// Radius of the largest sphere inscribed in the unit workspace cube.
pub const DEFAULT_WORKSPACE_R: f64 = 0.5 * WORKSPACE_EXTENT;
/// Spatial spread of the default filter, in lattice steps.
pub const DEFAULT_SIGMA_S: f64 = 3.0;
/// Range spread of the default filter as a fraction of the data range.
pub const DEFAULT_SIGMA_R_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Spatial spread in lattice units.
    pub sigma_s: f64,
    /// Range spread in sample units.
    pub sigma_r: f64,
    /// Half-width of the square support.
    pub window_radius: usize,
}

impl FilterParams {
    /// Window radius defaults to `ceil(3 * sigma_s)`.
    pub fn new(sigma_s: f64, sigma_r: f64) -> Result<Self> {
        let window_radius = (3.0 * sigma_s).ceil().max(1.0) as usize;
        Self::with_radius(sigma_s, sigma_r, window_radius)
    }

    pub fn with_radius(sigma_s: f64, sigma_r: f64, window_radius: usize) -> Result<Self> {
        let params = Self {
            sigma_s,
            sigma_r,
            window_radius,
        };
        params.validate()?;
        Ok(params)
    }

    /// Defaults scaled to the data: `sigma_s = 3`, `sigma_r = 0.1 * range`.
    pub fn for_samples(samples: &Grid) -> Self {
        let (lo, hi) = samples.min_max();
        let range = hi - lo;
        let sigma_r = if range > 0.0 && range.is_finite() {
            DEFAULT_SIGMA_R_FRACTION * range
        } else {
            1.0
        };
        Self::new(DEFAULT_SIGMA_S, sigma_r).expect("default filter parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_s.is_finite() && self.sigma_s > 0.0) {
            return Err(Error::invalid(format!("sigma_s must be > 0, got {}", self.sigma_s)));
        }
        if self.sigma_r.is_nan() || self.sigma_r <= 0.0 {
            return Err(Error::invalid(format!("sigma_r must be > 0, got {}", self.sigma_r)));
        }
        if self.window_radius < 1 {
            return Err(Error::invalid("window_radius must be >= 1"));
        }
        Ok(())
    }
}

/// Edge-preserving bilateral smoothing over a window truncated at the grid
/// border. Rows are filtered in parallel; each output depends only on the
/// input, so the result does not depend on the partitioning.
pub fn bilateral_filter(samples: &Grid, params: &FilterParams) -> Result<Grid> {
    params.validate()?;
    let (w, h) = samples.shape();
    let r = params.window_radius as isize;
    let side = (2 * r + 1) as usize;
    let spatial_denom = 2.0 * params.sigma_s * params.sigma_s;
    let range_coeff = -0.5 / (params.sigma_r * params.sigma_r);

    let mut spatial = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            spatial.push((-((dx * dx + dy * dy) as f64) / spatial_denom).exp());
        }
    }

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(j, row)| {
        let j = j as isize;
        let y0 = (j - r).max(0);
        let y1 = (j + r).min(h as isize - 1);
        for (i, slot) in row.iter_mut().enumerate() {
            let i = i as isize;
            let x0 = (i - r).max(0);
            let x1 = (i + r).min(w as isize - 1);
            let center = samples.get(i as usize, j as usize);
            let mut acc = 0.0;
            let mut norm = 0.0;
            for y in y0..=y1 {
                let krow = ((y - j + r) as usize) * side;
                let src = samples.row(y as usize);
                for x in x0..=x1 {
                    let v = src[x as usize];
                    let d = center - v;
                    let weight = spatial[krow + (x - i + r) as usize] * (range_coeff * d * d).exp();
                    acc += weight * v;
                    norm += weight;
                }
            }
            *slot = acc / norm;
        }
    });
    Grid::new(w, h, out)
}

/// Texture residual `h = depth - envelope`.
pub fn extract_texture(depth: &Grid, envelope: &Grid) -> Result<Grid> {
    depth.zip_with(envelope, |f, fb| f - fb)
}

/// First derivative along x; central inside, second-order one-sided at the border.
fn diff_x(g: &Grid, spacing: f64) -> Grid {
    let (w, h) = g.shape();
    let inv = 1.0 / spacing;
    Grid::from_fn(w, h, |i, j| {
        let d = if i == 0 {
            -1.5 * g.get(0, j) + 2.0 * g.get(1, j) - 0.5 * g.get(2, j)
        } else if i == w - 1 {
            1.5 * g.get(w - 1, j) - 2.0 * g.get(w - 2, j) + 0.5 * g.get(w - 3, j)
        } else {
            0.5 * (g.get(i + 1, j) - g.get(i - 1, j))
        };
        d * inv
    })
}

fn diff_y(g: &Grid, spacing: f64) -> Grid {
    let (w, h) = g.shape();
    let inv = 1.0 / spacing;
    Grid::from_fn(w, h, |i, j| {
        let d = if j == 0 {
            -1.5 * g.get(i, 0) + 2.0 * g.get(i, 1) - 0.5 * g.get(i, 2)
        } else if j == h - 1 {
            1.5 * g.get(i, h - 1) - 2.0 * g.get(i, h - 2) + 0.5 * g.get(i, h - 3)
        } else {
            0.5 * (g.get(i, j + 1) - g.get(i, j - 1))
        };
        d * inv
    })
}

/// Second derivative along x; border nodes reuse the adjacent three-point stencil.
fn diff2_x(g: &Grid, spacing: f64) -> Grid {
    let (w, h) = g.shape();
    let inv = 1.0 / (spacing * spacing);
    Grid::from_fn(w, h, |i, j| {
        let c = i.clamp(1, w - 2);
        (g.get(c + 1, j) - 2.0 * g.get(c, j) + g.get(c - 1, j)) * inv
    })
}

fn diff2_y(g: &Grid, spacing: f64) -> Grid {
    let (w, h) = g.shape();
    let inv = 1.0 / (spacing * spacing);
    Grid::from_fn(w, h, |i, j| {
        let c = j.clamp(1, h - 2);
        (g.get(i, c + 1) - 2.0 * g.get(i, c) + g.get(i, c - 1)) * inv
    })
}

/// Mean (`H`) and Gaussian (`K`) curvature of a Monge patch sampled on a
/// lattice with the given spacing. Values must be in the same length unit
/// as `spacing`.
pub fn curvature_maps(surface: &Grid, spacing: f64) -> Result<(Grid, Grid)> {
    let (w, h) = surface.shape();
    if w < 3 || h < 3 {
        return Err(Error::GridTooSmall {
            width: w,
            height: h,
            min: 3,
        });
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::invalid(format!("spacing must be > 0, got {spacing}")));
    }
    let hx = diff_x(surface, spacing);
    let hy = diff_y(surface, spacing);
    let hxx = diff2_x(surface, spacing);
    let hyy = diff2_y(surface, spacing);
    let hxy = diff_y(&hx, spacing);

    let n = w * h;
    let mut mean = Vec::with_capacity(n);
    let mut gauss = Vec::with_capacity(n);
    for k in 0..n {
        let (px, py) = (hx.as_slice()[k], hy.as_slice()[k]);
        let (pxx, pyy, pxy) = (hxx.as_slice()[k], hyy.as_slice()[k], hxy.as_slice()[k]);
        let g = 1.0 + px * px + py * py;
        mean.push(
            (pxx * (1.0 + py * py) + pyy * (1.0 + px * px) - 2.0 * pxy * px * py)
                / (2.0 * g.powf(1.5)),
        );
        gauss.push((pxx * pyy - pxy * pxy) / (g * g));
    }
    Ok((Grid::new(w, h, mean)?, Grid::new(w, h, gauss)?))
}

/// Dynamic friction coefficient at a single point.
#[inline]
pub fn friction_coefficient(mean: f64, gauss: f64, workspace_r: f64, mu_max: f64) -> f64 {
    let resultant = mean.hypot(gauss);
    if resultant == 0.0 || resultant.is_nan() {
        return mu_max;
    }
    (1.0 / (workspace_r * resultant)).min(mu_max)
}

/// `mu_d = min(mu_max, 1 / (R * sqrt(H^2 + K^2)))`; zero curvature maps to `mu_max`.
pub fn friction_map(mean: &Grid, gauss: &Grid, workspace_r: f64, mu_max: f64) -> Result<Grid> {
    if workspace_r.is_nan() || workspace_r <= 0.0 {
        return Err(Error::invalid(format!("R must be > 0, got {workspace_r}")));
    }
    if mu_max.is_nan() || mu_max <= 0.0 {
        return Err(Error::invalid(format!("mu_max must be > 0, got {mu_max}")));
    }
    mean.zip_with(gauss, |hm, kg| friction_coefficient(hm, kg, workspace_r, mu_max))
}

/// Which surface the curvature is measured on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureSource {
    /// The texture residual `h` (normal operation).
    #[default]
    Texture,
    /// The raw depth map, for calibration against analytic shapes.
    Depth,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureParams {
    /// `None` selects [`FilterParams::for_samples`].
    pub filter: Option<FilterParams>,
    pub workspace_r: f64,
    pub mu_max: f64,
    pub source: CurvatureSource,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            filter: None,
            workspace_r: DEFAULT_WORKSPACE_R,
            mu_max: DEFAULT_MU_MAX,
            source: CurvatureSource::Texture,
        }
    }
}

/// Everything derived from one depth map. Envelope and texture are in sample
/// units; curvatures are in inverse workspace length.
#[derive(Clone, Debug)]
pub struct TextureBundle {
    pub envelope: Grid,
    pub texture: Grid,
    pub mean_curv: Grid,
    pub gauss_curv: Grid,
    pub friction: Grid,
}

impl TextureBundle {
    pub fn analyze(depth: &DepthMap, params: &TextureParams) -> Result<Self> {
        let samples = depth.samples();
        let filter = params
            .filter
            .unwrap_or_else(|| FilterParams::for_samples(samples));
        let envelope = bilateral_filter(samples, &filter)?;
        let texture = extract_texture(samples, &envelope)?;
        let scale = depth.depth_scale();
        let surface = match params.source {
            CurvatureSource::Texture => texture.map(|v| v * scale),
            CurvatureSource::Depth => samples.map(|v| v * scale),
        };
        let (mean_curv, gauss_curv) = curvature_maps(&surface, depth.spacing())?;
        let friction = friction_map(&mean_curv, &gauss_curv, params.workspace_r, params.mu_max)?;
        Ok(Self {
            envelope,
            texture,
            mean_curv,
            gauss_curv,
            friction,
        })
    }

    /// Recomputes the friction map for new material constants.
    pub fn refriction(&mut self, workspace_r: f64, mu_max: f64) -> Result<()> {
        self.friction = friction_map(&self.mean_curv, &self.gauss_curv, workspace_r, mu_max)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation of the bilateral sum with normalized Gaussians and
    /// per-term kernel evaluation; shares no code with the production filter.
    fn bilateral_oracle(f: &Grid, sigma_s: f64, sigma_r: f64, radius: usize) -> Grid {
        use std::f64::consts::PI;
        let gauss2 = |dx: f64, dy: f64| {
            (-(dx * dx + dy * dy) / (2.0 * sigma_s * sigma_s)).exp() / (2.0 * PI * sigma_s * sigma_s)
        };
        let gauss1 = |d: f64| {
            (-(d * d) / (2.0 * sigma_r * sigma_r)).exp() / ((2.0 * PI).sqrt() * sigma_r)
        };
        let (w, h) = f.shape();
        let r = radius as i64;
        Grid::from_fn(w, h, |i, j| {
            let mut num = 0.0;
            let mut den = 0.0;
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    let (dx, dy) = (i as i64 - x, j as i64 - y);
                    if dx.abs() > r || dy.abs() > r {
                        continue;
                    }
                    let v = f.get(x as usize, y as usize);
                    let wgt = gauss2(dx as f64, dy as f64) * gauss1(f.get(i, j) - v);
                    num += wgt * v;
                    den += wgt;
                }
            }
            num / den
        })
    }

    fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Grid {
        Grid::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    #[test]
    fn filter_params_validation() {
        assert!(FilterParams::new(0.0, 1.0).is_err());
        assert!(FilterParams::new(1.0, 0.0).is_err());
        assert!(FilterParams::with_radius(1.0, 1.0, 0).is_err());
        assert_eq!(FilterParams::new(1.2, 1.0).unwrap().window_radius, 4);
        let p = FilterParams::for_samples(&Grid::from_fn(4, 4, |i, _| i as f64));
        assert_eq!(p.sigma_s, 3.0);
        assert_abs_diff_eq!(p.sigma_r, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn bilateral_preserves_constants() {
        let g = Grid::filled(12, 9, 5.0);
        let out = bilateral_filter(&g, &FilterParams::new(2.0, 0.1).unwrap()).unwrap();
        for &v in out.as_slice() {
            assert_abs_diff_eq!(v, 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bilateral_matches_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let g = random_grid(&mut rng, 16, 16);
            let p = FilterParams::new(1.5, 0.2).unwrap();
            let fast = bilateral_filter(&g, &p).unwrap();
            let slow = bilateral_oracle(&g, p.sigma_s, p.sigma_r, p.window_radius);
            for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn bilateral_with_huge_range_is_gaussian_blur() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_grid(&mut rng, 14, 10);
        let p = FilterParams::new(1.0, 1e6).unwrap();
        let out = bilateral_filter(&g, &p).unwrap();
        // independent truncated, renormalized Gaussian convolution
        let r = p.window_radius as i64;
        let blur = Grid::from_fn(14, 10, |i, j| {
            let (mut num, mut den) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (x, y) = (i as i64 + dx, j as i64 + dy);
                    if x < 0 || y < 0 || x >= 14 || y >= 10 {
                        continue;
                    }
                    let wgt = (-((dx * dx + dy * dy) as f64) / 2.0).exp();
                    num += wgt * g.get(x as usize, y as usize);
                    den += wgt;
                }
            }
            num / den
        });
        for (a, b) in out.as_slice().iter().zip(blur.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn bilateral_output_within_window_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_grid(&mut rng, 10, 10);
        let p = FilterParams::new(1.0, 0.3).unwrap();
        let out = bilateral_filter(&g, &p).unwrap();
        let r = p.window_radius;
        for j in 0..10usize {
            for i in 0..10usize {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for y in j.saturating_sub(r)..(j + r + 1).min(10) {
                    for x in i.saturating_sub(r)..(i + r + 1).min(10) {
                        lo = lo.min(g.get(x, y));
                        hi = hi.max(g.get(x, y));
                    }
                }
                let v = out.get(i, j);
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn bilateral_preserves_step_edges() {
        let sigma_r = 0.05;
        let step = 10.0 * sigma_r;
        let g = Grid::from_fn(20, 12, |i, _| if i < 10 { 0.2 } else { 0.2 + step });
        let out = bilateral_filter(&g, &FilterParams::new(2.0, sigma_r).unwrap()).unwrap();
        for j in 0..12 {
            for i in 0..20 {
                let plateau = g.get(i, j);
                assert!((out.get(i, j) - plateau).abs() < 0.01 * step);
            }
        }
    }

    #[test]
    fn texture_is_residual() {
        let depth = Grid::new(2, 1, vec![7.0, 3.0]).unwrap();
        let env = Grid::new(2, 1, vec![5.0, 3.0]).unwrap();
        let tex = extract_texture(&depth, &env).unwrap();
        assert_eq!(tex.as_slice(), &[2.0, 0.0]);
        assert_eq!(
            extract_texture(&depth, &depth).unwrap().as_slice(),
            &[0.0, 0.0]
        );
        assert!(extract_texture(&depth, &Grid::filled(1, 2, 0.0)).is_err());
    }

    #[test]
    fn texture_adds_back_exactly() {
        // Within one binade the residual is an exact floating-point difference.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Grid::from_fn(16, 16, |_, _| 1.0 + rng.random::<f64>());
        let env = bilateral_filter(&g, &FilterParams::new(2.0, 0.2).unwrap()).unwrap();
        let tex = extract_texture(&g, &env).unwrap();
        for k in 0..g.as_slice().len() {
            assert_eq!(env.as_slice()[k] + tex.as_slice()[k], g.as_slice()[k]);
        }
    }

    #[test]
    fn curvature_of_plane_vanishes() {
        let g = Grid::from_fn(9, 7, |i, j| 0.3 * i as f64 - 0.7 * j as f64);
        let (hm, kg) = curvature_maps(&g, 0.5).unwrap();
        for (&a, &b) in hm.as_slice().iter().zip(kg.as_slice()) {
            assert_abs_diff_eq!(a, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(b, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn curvature_needs_three_by_three() {
        assert!(curvature_maps(&Grid::filled(2, 5, 0.0), 1.0).is_err());
    }

    #[test]
    fn sphere_cap_apex_curvature() {
        let r = 10.0;
        let s = 0.1;
        let g = Grid::from_fn(21, 21, |i, j| {
            let (x, y) = ((i as f64 - 10.0) * s, (j as f64 - 10.0) * s);
            (r * r - x * x - y * y).sqrt()
        });
        let (hm, kg) = curvature_maps(&g, s).unwrap();
        assert!((hm.get(10, 10).abs() - 0.1).abs() < 0.002);
        assert!((kg.get(10, 10) - 0.01).abs() < 0.0002);
    }

    #[test]
    fn friction_formula_and_clamp() {
        let mu = friction_coefficient(0.1, 0.01, 100.0, 10.0);
        assert_abs_diff_eq!(mu, 1.0 / (100.0 * 0.0101f64.sqrt()), epsilon = 1e-15);
        assert_abs_diff_eq!(mu, 0.0995037, epsilon = 1e-6);
        assert_eq!(friction_coefficient(0.0, 0.0, 1.0, 0.8), 0.8);
        let h = Grid::filled(3, 3, 0.0);
        assert!(friction_map(&h, &h, 0.0, 1.0).is_err());
        assert!(friction_map(&h, &h, 1.0, 0.0).is_err());
        assert!(friction_map(&h, &Grid::filled(2, 2, 0.0), 1.0, 1.0).is_err());
    }
}
