//! File formats: PGM depth and label images, grid CSV, JSON sidecars, WAV.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{GraymapHeader, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageBuffer, ImageReader, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{default_spacing, DepthMap, DEFAULT_DEPTH_FRACTION, WORKSPACE_EXTENT};
use crate::grid::Grid;

/// Mapping and naming metadata stored next to a grid file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Value of the lowest code; absent means codes map onto `[0, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl Sidecar {
    /// `path` with its extension replaced by `.json`.
    pub fn path_for(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }

    /// Reads the sidecar if it exists.
    pub fn read_optional(path: &Path) -> Result<Option<Self>> {
        if path.exists() {
            Self::read(path).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        f.flush().map_err(|e| Error::io(path, e))
    }

    fn decode(&self, unit: f64) -> f64 {
        match (self.min, self.max) {
            (Some(lo), Some(hi)) => lo + (hi - lo) * unit,
            _ => unit,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    Ok(reader.decode()?)
}

/// Gray PGM (8 or 16 bit) as values in `[0, 1]`.
pub fn read_pgm_unit(path: &Path) -> Result<Grid> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => {
            return Err(Error::format(
                "pgm",
                format!("{}: expected a grayscale image, got {:?}", path.display(), other.color()),
            ))
        }
    };
    Grid::new(w, h, data)
}

/// Raw integer codes of an 8- or 16-bit gray image.
pub fn read_pgm_codes(path: &Path) -> Result<(usize, usize, Vec<u32>)> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let codes = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(u32::from).collect(),
        other => {
            return Err(Error::format(
                "pgm",
                format!("{}: expected a grayscale image, got {:?}", path.display(), other.color()),
            ))
        }
    };
    Ok((w, h, codes))
}

fn pnm_encoder<W: Write>(w: W) -> PnmEncoder<W> {
    PnmEncoder::new(w).with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
}

fn dims(grid: &Grid) -> Result<(u32, u32)> {
    let w = u32::try_from(grid.width()).map_err(|_| Error::invalid("grid too wide"))?;
    let h = u32::try_from(grid.height()).map_err(|_| Error::invalid("grid too tall"))?;
    Ok((w, h))
}

/// Writes `grid` as a 16-bit PGM and returns the value range the codes map
/// onto. Grids inside `[0, 1]` keep the unit range; anything else is
/// stretched over its own min and max.
pub fn write_pgm16(path: &Path, grid: &Grid) -> Result<Sidecar> {
    let (lo, hi) = grid.min_max();
    let unit = lo >= 0.0 && hi <= 1.0;
    let (offset, span) = if unit { (0.0, 1.0) } else { (lo, hi - lo) };
    let code = |v: f64| {
        if span > 0.0 {
            ((v - offset) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        }
    };
    let (w, h) = dims(grid)?;
    let codes: Vec<u16> = grid.as_slice().iter().map(|&v| code(v)).collect();
    let mut out = create(path)?;
    let header = GraymapHeader {
        encoding: SampleEncoding::Binary,
        width: w,
        height: h,
        maxwhite: 65535,
    };
    PnmEncoder::new(&mut out)
        .with_header(header.into())
        .encode(&codes[..], w, h, ExtendedColorType::L16)?;
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(Sidecar {
        min: Some(offset),
        max: Some(offset + span),
        ..Sidecar::default()
    })
}

/// 8-bit preview of `grid` stretched over `[lo, hi]`.
pub fn write_pgm8_preview(path: &Path, grid: &Grid, lo: f64, hi: f64) -> Result<()> {
    let span = hi - lo;
    let (w, h) = dims(grid)?;
    let data = grid
        .as_slice()
        .iter()
        .map(|&v| {
            if span > 0.0 && v.is_finite() {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w, h, data).expect("buffer length matches dimensions");
    buf.write_with_encoder(pnm_encoder(create(path)?))?;
    Ok(())
}

pub fn write_label_pgm(path: &Path, width: usize, height: usize, labels: &[u32]) -> Result<()> {
    let data: Vec<u8> = labels
        .iter()
        .map(|&l| u8::try_from(l).map_err(|_| Error::invalid(format!("label {l} exceeds 255"))))
        .collect::<Result<_>>()?;
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(width as u32, height as u32, data)
        .ok_or_else(|| Error::invalid("label count does not match dimensions"))?;
    buf.write_with_encoder(pnm_encoder(create(path)?))?;
    Ok(())
}

/// Headerless comma-separated rows, one per lattice row.
pub fn write_grid_csv(path: &Path, grid: &Grid) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    for j in 0..grid.height() {
        w.write_record(grid.row(j).iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_grid_csv(path: &Path) -> Result<Grid> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(f));
    let mut width = None;
    let mut data = Vec::new();
    let mut height = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if width.is_some_and(|w| w != rec.len()) {
            return Err(Error::format("grid csv", format!("row {height} has {} values", rec.len())));
        }
        width = Some(rec.len());
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::format("grid csv", format!("not a number: {field:?}")))?;
            data.push(v);
        }
        height += 1;
    }
    Grid::new(width.unwrap_or(0), height, data)
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Loads a grid from PGM or CSV, applying the value range of its sidecar.
pub fn read_grid(path: &Path) -> Result<(Grid, Option<Sidecar>)> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    let sidecar = Sidecar::read_optional(&Sidecar::path_for(path))?;
    let grid = if is_csv(path) {
        read_grid_csv(path)?
    } else {
        let unit = read_pgm_unit(path)?;
        match &sidecar {
            Some(s) => unit.map(|u| s.decode(u)),
            None => unit,
        }
    };
    Ok((grid, sidecar))
}

/// Writes `grid` in the format implied by the extension plus a sidecar.
pub fn write_grid(path: &Path, grid: &Grid, mut meta: Sidecar) -> Result<()> {
    if is_csv(path) {
        write_grid_csv(path, grid)?;
        meta.min = None;
        meta.max = None;
    } else {
        let range = write_pgm16(path, grid)?;
        meta.min = range.min;
        meta.max = range.max;
    }
    meta.write(&Sidecar::path_for(path))
}

/// Depth map with the sidecar's mapping, falling back to the default one.
pub fn read_depth_map(path: &Path) -> Result<(DepthMap, Sidecar)> {
    let (grid, sidecar) = read_grid(path)?;
    let sidecar = sidecar.unwrap_or_default();
    let spacing = sidecar
        .spacing
        .unwrap_or_else(|| default_spacing(grid.width(), grid.height()));
    let depth_scale = sidecar
        .depth_scale
        .unwrap_or(DEFAULT_DEPTH_FRACTION * WORKSPACE_EXTENT);
    Ok((DepthMap::new(grid, spacing, depth_scale)?, sidecar))
}

pub fn write_depth_map(path: &Path, depth: &DepthMap, name: Option<&str>) -> Result<()> {
    write_grid(
        path,
        depth.samples(),
        Sidecar {
            spacing: Some(depth.spacing()),
            depth_scale: Some(depth.depth_scale()),
            name: name.map(str::to_owned),
            ..Sidecar::default()
        },
    )
}

/// Mono samples in `[-1, 1]`; multichannel input is averaged.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut rdr = hound::WavReader::open(path)?;
    let spec = rdr.spec();
    let channels = spec.channels.max(1) as usize;
    let raw: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => rdr
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let full = (1i64 << (spec.bits_per_sample - 1)) as f64;
            rdr.samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let mono = raw
        .chunks(channels)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    Ok((mono, spec.sample_rate))
}

/// 16-bit mono WAV.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm16_round_trip_unit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pgm");
        let g = Grid::from_fn(5, 3, |i, j| ((i + 5 * j) * 4000) as f64 / 65535.0);
        let meta = write_pgm16(&p, &g).unwrap();
        assert_eq!((meta.min, meta.max), (Some(0.0), Some(1.0)));
        assert_eq!(read_pgm_unit(&p).unwrap(), g);
    }

    #[test]
    fn pgm16_range_is_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pgm");
        let g = Grid::from_fn(4, 4, |i, j| -2.0 + (i + 4 * j) as f64);
        write_grid(&p, &g, Sidecar::default()).unwrap();
        let (back, meta) = read_grid(&p).unwrap();
        let meta = meta.unwrap();
        assert_eq!((meta.min, meta.max), (Some(-2.0), Some(13.0)));
        for (a, b) in back.as_slice().iter().zip(g.as_slice()) {
            assert!((a - b).abs() < 15.0 / 65535.0);
        }
    }

    #[test]
    fn csv_grid_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let g = Grid::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0));
        write_grid_csv(&p, &g).unwrap();
        assert_eq!(read_grid_csv(&p).unwrap(), g);
    }

    #[test]
    fn depth_map_defaults_without_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pgm");
        write_pgm16(&p, &Grid::filled(9, 5, 0.5)).unwrap();
        let (d, _) = read_depth_map(&p).unwrap();
        assert_eq!(d.spacing(), 1.0 / 8.0);
        assert_eq!(d.depth_scale(), 0.25);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_grid(Path::new("/nonexistent/x.pgm")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let s: Vec<f64> = (0..100).map(|k| (k as f64 * 0.1).sin() * 0.5).collect();
        write_wav(&p, &s, 8000).unwrap();
        let (back, sr) = read_wav(&p).unwrap();
        assert_eq!(sr, 8000);
        for (a, b) in back.iter().zip(&s) {
            assert!((a - b).abs() < 1.0 / 32767.0);
        }
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.pgm");
        let labels = vec![0, 1, 2, 7, 0, 3];
        write_label_pgm(&p, 3, 2, &labels).unwrap();
        assert_eq!(read_pgm_codes(&p).unwrap(), (3, 2, labels));
    }
}
