//! On-disk model directories.
//!
//! ```text
//! model/
//!   depth.pgm | depth.csv   depth samples
//!   depth.json              spacing, depth_scale, value range (optional)
//!   zones.pgm               8-bit zone labels (optional)
//!   zones.json              {"<zone id>": "<clip>.wav"} (optional)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::audio::{demo_clips, extract_cycle, AudioClip, ZoneMap};
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Heightfield};
use crate::io;
use crate::sim::Scene;
use crate::texture::{TextureBundle, TextureParams};

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub name: String,
    pub depth: DepthMap,
    pub zones: Option<ZoneMap>,
    pub clips: BTreeMap<u32, AudioClip>,
}

impl Model {
    pub fn new(name: impl Into<String>, depth: DepthMap) -> Self {
        Self {
            name: name.into(),
            depth,
            zones: None,
            clips: BTreeMap::new(),
        }
    }

    /// Attaches zones; zones without clips get the demo scale.
    pub fn with_zones(mut self, zones: ZoneMap) -> Result<Self> {
        if zones.shape() != self.depth.samples().shape() {
            return Err(Error::ShapeMismatch {
                expected: self.depth.samples().shape(),
                actual: zones.shape(),
            });
        }
        let demo = demo_clips();
        for z in zones.zone_ids() {
            if !self.clips.contains_key(z) {
                if let Some(c) = demo.get(&((z - 1) % 7 + 1)) {
                    self.clips.insert(*z, AudioClip { zone_id: *z, ..c.clone() });
                }
            }
        }
        self.zones = Some(zones);
        Ok(self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let depth_path = ["depth.pgm", "depth.csv"]
            .iter()
            .map(|f| dir.join(f))
            .find(|p| p.exists())
            .ok_or_else(|| {
                Error::io(
                    dir.join("depth.pgm"),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "model has no depth map"),
                )
            })?;
        let (depth, sidecar) = io::read_depth_map(&depth_path)?;
        let name = sidecar.name.unwrap_or_else(|| {
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into())
        });
        let mut model = Model::new(name, depth);

        let zones_path = dir.join("zones.pgm");
        if zones_path.exists() {
            let index_path = dir.join("zones.json");
            if index_path.exists() {
                let f = std::fs::File::open(&index_path).map_err(|e| Error::io(&index_path, e))?;
                let index: BTreeMap<String, String> = serde_json::from_reader(f)?;
                for (id, clip) in index {
                    let zone: u32 = id
                        .parse()
                        .map_err(|_| Error::format("zones.json", format!("bad zone id {id:?}")))?;
                    let (samples, sr) = io::read_wav(&dir.join(&clip))?;
                    let cycle = extract_cycle(&samples)?;
                    model.clips.insert(zone, AudioClip::new(zone, cycle, sr)?);
                }
            }
            let (w, h, labels) = io::read_pgm_codes(&zones_path)?;
            let zones = ZoneMap::new(w, h, labels, model.depth.spacing())?;
            model = model.with_zones(zones)?;
        }
        Ok(model)
    }

    /// Writes depth as CSV so that samples survive bit-exactly.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_depth_map(&dir.join("depth.csv"), &self.depth, Some(&self.name))?;
        if let Some(z) = &self.zones {
            io::write_label_pgm(&dir.join("zones.pgm"), z.width(), z.height(), z.labels())?;
            let mut index = BTreeMap::new();
            for (id, clip) in &self.clips {
                let file = format!("zone{id}.wav");
                io::write_wav(&dir.join(&file), &clip.cycle.repeat(64), clip.sample_rate)?;
                index.insert(id.to_string(), file);
            }
            let path = dir.join("zones.json");
            let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::to_writer_pretty(f, &index)?;
        }
        Ok(())
    }

    /// Heightfield plus friction map and zones, ready for a haptic loop.
    pub fn scene(&self, params: &TextureParams) -> Result<Scene> {
        let bundle = TextureBundle::analyze(&self.depth, params)?;
        Scene::new(
            Heightfield::new(self.depth.clone()),
            Some(bundle.friction),
            self.zones.clone(),
        )
    }
}
