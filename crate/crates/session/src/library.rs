//! Models prepared for interactive exploration.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use hapto_core::geometry::Heightfield;
use hapto_core::lod::MIN_LEVEL_SIZE;
use hapto_core::texture::friction_map;
use hapto_core::{
    build_pyramid, select_roi, Grid, Material, Model, Pyramid, RoiSelection, Scene, TextureBundle,
    TextureParams, WorkspaceMapping,
};
use log::info;

use crate::error::SessionError;

/// A model with its pyramid and per-level curvature maps.
#[derive(Debug)]
pub struct PreparedModel {
    pub model: Model,
    pub pyramid: Pyramid,
    curvature: Vec<(Grid, Grid)>,
}

/// Number of octave levels an `w x h` grid supports, capped at `max`.
pub fn feasible_levels(w: usize, h: usize, max: usize) -> usize {
    let mut levels = 1;
    while levels < max && w.div_ceil(1 << levels) >= MIN_LEVEL_SIZE && h.div_ceil(1 << levels) >= MIN_LEVEL_SIZE {
        levels += 1;
    }
    levels
}

impl PreparedModel {
    pub fn prepare(model: Model, max_levels: usize, texture: &TextureParams) -> Result<Self, SessionError> {
        let levels = feasible_levels(model.depth.width(), model.depth.height(), max_levels.max(1));
        let pyramid = build_pyramid(&model.depth, levels)?;
        let curvature = pyramid
            .levels()
            .iter()
            .map(|level| {
                TextureBundle::analyze(level, texture).map(|b| (b.mean_curv, b.gauss_curv))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            model,
            pyramid,
            curvature,
        })
    }

    pub fn name(&self) -> &str {
        &self.model.name
    }

    pub fn levels(&self) -> usize {
        self.pyramid.len()
    }

    /// Scene for the selected tile; friction uses the material's `R` and
    /// `mu_max` on curvature measured at the level's own scale.
    pub fn tile(&self, sel: &RoiSelection, material: &Material) -> Result<(Scene, WorkspaceMapping), SessionError> {
        if sel.level >= self.levels() {
            return Err(SessionError::LevelOutOfRange {
                level: sel.level,
                levels: self.levels(),
            });
        }
        let (tile, mapping) = select_roi(&self.pyramid, sel)?;
        let (mean, gauss) = &self.curvature[sel.level];
        let n = mapping.extent + 1;
        let (i0, j0) = mapping.origin;
        let friction = friction_map(
            &mean.window(i0, j0, n, n)?,
            &gauss.window(i0, j0, n, n)?,
            material.workspace_r,
            material.mu_max,
        )?;
        let zones = match &self.model.zones {
            Some(z) => Some(z.for_tile(&mapping)?),
            None => None,
        };
        let scene = Scene::new(Heightfield::new(tile), Some(friction), zones)?;
        Ok((scene, mapping))
    }
}

#[derive(Debug)]
pub struct ModelLibrary {
    models: BTreeMap<String, Arc<PreparedModel>>,
}

impl ModelLibrary {
    pub fn from_models(
        models: impl IntoIterator<Item = Model>,
        max_levels: usize,
        texture: &TextureParams,
    ) -> Result<Self, SessionError> {
        let mut out = BTreeMap::new();
        for m in models {
            let prepared = PreparedModel::prepare(m, max_levels, texture)?;
            info!(
                "prepared model {} ({} levels)",
                prepared.name(),
                prepared.levels()
            );
            out.insert(prepared.name().to_owned(), Arc::new(prepared));
        }
        if out.is_empty() {
            return Err(SessionError::EmptyLibrary);
        }
        Ok(Self { models: out })
    }

    /// Loads a single model directory, or every model directory inside `path`.
    pub fn load(path: &Path, max_levels: usize, texture: &TextureParams) -> Result<Self, SessionError> {
        let is_model = ["depth.pgm", "depth.csv"].iter().any(|f| path.join(f).exists());
        let models = if is_model {
            vec![Model::load(path)?]
        } else {
            let mut dirs: Vec<_> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| ["depth.pgm", "depth.csv"].iter().any(|f| p.join(f).exists()))
                .collect();
            dirs.sort();
            dirs.iter().map(|d| Model::load(d)).collect::<Result<_, _>>()?
        };
        Self::from_models(models, max_levels, texture)
    }

    pub fn names(&self) -> Vec<String> {
        self.models.keys().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<PreparedModel>, SessionError> {
        self.models
            .get(name)
            .cloned()
            .ok_or_else(|| SessionError::UnknownModel(name.to_owned()))
    }

    pub fn first(&self) -> Arc<PreparedModel> {
        self.models
            .values()
            .next()
            .cloned()
            .expect("library is never empty")
    }
}
