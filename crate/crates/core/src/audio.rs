//! Zone-triggered notes whose loudness follows the rendered force.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::nearest_index;
use crate::lod::WorkspaceMapping;
use crate::proxy::ProbeState;

pub const DEFAULT_DECAY_TAU: f64 = 0.5;
pub const DEFAULT_NOTE_SECONDS: f64 = 1.0;
pub const DEFAULT_G0: f64 = 0.5;
pub const DEMO_SAMPLE_RATE: u32 = 44_100;
/// Tonic of the demo scale, Hz.
pub const DEMO_TONIC: f64 = 261.63;
/// Just-intonation ratios of the seven demo notes.
pub const DEMO_RATIOS: [f64; 7] = [1.0, 9.0 / 8.0, 5.0 / 4.0, 4.0 / 3.0, 3.0 / 2.0, 5.0 / 3.0, 15.0 / 8.0];

/// Integer labels on the depth lattice; 0 means no zone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    spacing: f64,
    zone_ids: BTreeSet<u32>,
}

impl ZoneMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>, spacing: f64) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::invalid(format!(
                "zone map {}x{} needs {} labels, got {}",
                width,
                height,
                width * height,
                labels.len()
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid("zone map spacing must be > 0"));
        }
        let zone_ids = labels.iter().copied().filter(|&z| z != 0).collect();
        Ok(Self {
            width,
            height,
            labels,
            spacing,
            zone_ids,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn zone_ids(&self) -> &BTreeSet<u32> {
        &self.zone_ids
    }

    #[inline]
    pub fn label(&self, i: usize, j: usize) -> u32 {
        self.labels[j * self.width + i]
    }

    /// Nearest-lattice label under workspace position `(x, y)`, clamped.
    pub fn zone_at(&self, x: f64, y: f64) -> Option<u32> {
        let i = nearest_index(x / self.spacing, self.width);
        let j = nearest_index(y / self.spacing, self.height);
        match self.label(i, j) {
            0 => None,
            z => Some(z),
        }
    }

    /// Labels aligned with a tile cut from pyramid level `mapping.level`.
    pub fn for_tile(&self, mapping: &WorkspaceMapping) -> Result<ZoneMap> {
        let step = 1usize << mapping.level;
        let n = mapping.extent + 1;
        let mut labels = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let li = ((mapping.origin.0 + i) * step).min(self.width - 1);
                let lj = ((mapping.origin.1 + j) * step).min(self.height - 1);
                labels.push(self.label(li, lj));
            }
        }
        ZoneMap::new(n, n, labels, mapping.spacing)
    }
}

/// One waveform period used as a looping note source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    pub zone_id: u32,
    pub cycle: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(zone_id: u32, cycle: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if cycle.len() < 2 {
            return Err(Error::invalid("audio cycle needs at least 2 samples"));
        }
        if cycle.iter().any(|s| !(s.is_finite() && s.abs() <= 1.0)) {
            return Err(Error::invalid("audio samples must lie in [-1, 1]"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be > 0"));
        }
        Ok(Self {
            zone_id,
            cycle,
            sample_rate,
        })
    }

    /// A single period of a sine at roughly `freq` Hz.
    pub fn sine(zone_id: u32, freq: f64, sample_rate: u32, amplitude: f64) -> Result<Self> {
        if !(freq > 0.0 && freq.is_finite()) {
            return Err(Error::invalid("frequency must be > 0"));
        }
        let len = (sample_rate as f64 / freq).round().max(2.0) as usize;
        let cycle = (0..len)
            .map(|k| amplitude * (std::f64::consts::TAU * k as f64 / len as f64).sin())
            .collect();
        Self::new(zone_id, cycle, sample_rate)
    }

    pub fn period_seconds(&self) -> f64 {
        self.cycle.len() as f64 / self.sample_rate as f64
    }
}

/// Seven sine notes of a just-intonation scale for zones 1..=7.
pub fn demo_clips() -> BTreeMap<u32, AudioClip> {
    DEMO_RATIOS
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let zone = k as u32 + 1;
            let clip = AudioClip::sine(zone, DEMO_TONIC * r, DEMO_SAMPLE_RATE, 0.8)
                .expect("demo clip parameters are valid");
            (zone, clip)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    /// Tick index.
    pub t: u64,
    pub zone_id: u32,
    pub gain: f64,
}

#[inline]
pub fn note_gain(force: &Vec3, g0: f64) -> f64 {
    (g0 * force.norm()).min(1.0)
}

/// Emits a note when the proxy touches a zone other than the one touched
/// last in this contact episode. Returns the event and the zone to carry
/// into the next tick.
pub fn process_contact(
    t: u64,
    prev_zone: Option<u32>,
    state: &ProbeState,
    force: &Vec3,
    zones: &ZoneMap,
    g0: f64,
) -> (Option<NoteEvent>, Option<u32>) {
    if !state.in_contact {
        return (None, None);
    }
    let zone = zones.zone_at(state.proxy.x, state.proxy.y);
    let event = match zone {
        Some(z) if Some(z) != prev_zone => Some(NoteEvent {
            t,
            zone_id: z,
            gain: note_gain(force, g0),
        }),
        _ => None,
    };
    (event, zone)
}

/// Tiles the clip's cycle over `duration` seconds under a decaying envelope
/// `gain * exp(-t / decay_tau)`. An infinite `decay_tau` disables decay.
pub fn synth_note(clip: &AudioClip, duration: f64, gain: f64, decay_tau: f64) -> Result<Vec<f64>> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid("note duration must be > 0"));
    }
    if !(0.0..=1.0).contains(&gain) {
        return Err(Error::invalid("gain must lie in [0, 1]"));
    }
    if decay_tau.is_nan() || decay_tau <= 0.0 {
        return Err(Error::invalid("decay tau must be > 0"));
    }
    let sr = clip.sample_rate as f64;
    let n = (duration * sr).round() as usize;
    let len = clip.cycle.len();
    Ok((0..n)
        .map(|k| {
            let env = gain * (-(k as f64 / sr) / decay_tau).exp();
            (clip.cycle[k % len] * env).clamp(-1.0, 1.0)
        })
        .collect())
}

/// Cuts one period out of a recording: the period comes from the highest
/// autocorrelation peak past its first negative lobe and the cut starts at
/// the first upward zero crossing.
pub fn extract_cycle(samples: &[f64]) -> Result<Vec<f64>> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::invalid("recording too short to find a period"));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = samples.iter().map(|s| s - mean).collect();
    let max_lag = n / 2;
    let ac: Vec<f64> = (0..=max_lag)
        .map(|lag| {
            x[..n - lag]
                .iter()
                .zip(&x[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / (n - lag) as f64
        })
        .collect();
    if ac[0] <= 0.0 {
        return Err(Error::invalid("recording is silent"));
    }
    let dip = ac
        .iter()
        .position(|&v| v < 0.0)
        .ok_or_else(|| Error::invalid("no periodicity found"))?;
    let period = (dip..ac.len())
        .max_by(|&a, &b| ac[a].total_cmp(&ac[b]))
        .filter(|&p| ac[p] > 0.0 && p >= 2)
        .ok_or_else(|| Error::invalid("no periodicity found"))?;

    let start = (1..n)
        .find(|&k| x[k - 1] < 0.0 && x[k] >= 0.0)
        .unwrap_or(0);
    if start + period > n {
        return Err(Error::invalid("recording shorter than one period after the first crossing"));
    }
    Ok(samples[start..start + period].to_vec())
}
