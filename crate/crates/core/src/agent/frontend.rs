//! Frozen perceptual frontends mapping a view to a fixed-size feature vector.

use std::collections::HashMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::worldgen::View;

pub const GRID: usize = 32;
pub const CHANNELS: usize = 3;
pub const INPUT_DIM: usize = GRID * GRID * CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontendKind {
    #[default]
    SeededProjection,
    FeatureFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendConfig {
    pub kind: FrontendKind,
    pub seed: u64,
    pub output_dim: usize,
    /// Resample the bounding box of the visible non-background pixels onto the
    /// grid instead of downsampling the whole view.
    pub object_crop: bool,
    pub feature_file: Option<PathBuf>,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            kind: FrontendKind::SeededProjection,
            seed: 0x5EED,
            output_dim: 512,
            object_crop: true,
            feature_file: None,
        }
    }
}

/// A fixed random linear map of the `32 × 32 × 3` grid followed by ReLU.
#[derive(Debug, Clone)]
pub struct SeededProjection {
    output_dim: usize,
    object_crop: bool,
    /// Column-major: column `k` is `columns[k * output_dim..]`.
    columns: Vec<f64>,
}

impl SeededProjection {
    pub fn new(seed: u64, output_dim: usize, object_crop: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (INPUT_DIM + output_dim) as f64).sqrt();
        let columns = (0..INPUT_DIM * output_dim).map(|_| rng.gen_range(-limit..limit)).collect();
        SeededProjection {
            output_dim,
            object_crop,
            columns,
        }
    }

    /// The `32 × 32 × 3` input grid (row-major, channel last), values in `[0, 1]`.
    pub fn grid(&self, view: &View<'_>) -> Vec<f64> {
        let pixels: Vec<(u8, u8)> = view.pixels().collect();
        let rgb = view.example.mask.color.rgb().map(|c| c as f64 / 255.0);
        let mut grid = vec![0.0; INPUT_DIM];
        if pixels.is_empty() {
            return grid;
        }
        if self.object_crop {
            let (mut x0, mut x1, mut y0, mut y1) = (u8::MAX, 0u8, u8::MAX, 0u8);
            for &(x, y) in &pixels {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
            let (w, h) = ((x1 - x0) as usize + 1, (y1 - y0) as usize + 1);
            let mut local = vec![false; w * h];
            for &(x, y) in &pixels {
                local[(y - y0) as usize * w + (x - x0) as usize] = true;
            }
            let side = w.max(h) as f64;
            let cx = (x0 as f64 + x1 as f64 + 1.0) / 2.0;
            let cy = (y0 as f64 + y1 as f64 + 1.0) / 2.0;
            let step = side / GRID as f64;
            for v in 0..GRID {
                let py = (cy - side / 2.0 + (v as f64 + 0.5) * step).floor();
                if py < y0 as f64 || py > y1 as f64 {
                    continue;
                }
                for u in 0..GRID {
                    let px = (cx - side / 2.0 + (u as f64 + 0.5) * step).floor();
                    if px < x0 as f64 || px > x1 as f64 {
                        continue;
                    }
                    if local[(py as usize - y0 as usize) * w + (px as usize - x0 as usize)] {
                        let o = (v * GRID + u) * CHANNELS;
                        grid[o..o + CHANNELS].copy_from_slice(&rgb);
                    }
                }
            }
        } else {
            let cell = crate::worldgen::CANVAS as usize / GRID;
            let w = 1.0 / (cell * cell) as f64;
            for &(x, y) in &pixels {
                let o = ((y as usize / cell) * GRID + x as usize / cell) * CHANNELS;
                for c in 0..CHANNELS {
                    grid[o + c] += rgb[c] * w;
                }
            }
        }
        grid
    }

    pub fn project(&self, grid: &[f64]) -> Vec<f64> {
        let d = self.output_dim;
        let mut out = vec![0.0; d];
        for (k, &x) in grid.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let col = &self.columns[k * d..(k + 1) * d];
            for (o, &p) in out.iter_mut().zip(col) {
                *o += x * p;
            }
        }
        out.iter_mut().for_each(|v| *v = v.max(0.0));
        out
    }
}

/// Precomputed features keyed by `"<example id>:<side>"` or `"<example id>"`.
#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    pub dim: usize,
    pub rows: HashMap<String, Vec<f64>>,
}

impl FeatureTable {
    /// Parses `key v1 .. vD` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = FeatureTable::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap().to_string();
            let values: Vec<f64> = parts
                .map(|s| s.parse::<f64>().map_err(|e| Error::Format(format!("features line {}: {e}", lineno + 1))))
                .collect::<Result<_>>()?;
            if table.dim == 0 {
                table.dim = values.len();
            } else if values.len() != table.dim {
                return Err(Error::Format(format!("features line {}: inconsistent width", lineno + 1)));
            }
            table.rows.insert(key, values);
        }
        Ok(table)
    }

    pub fn lookup(&self, view: &View<'_>) -> Result<&[f64]> {
        let key = view.feature_key();
        self.rows
            .get(&key)
            .or_else(|| self.rows.get(&view.example.id.to_string()))
            .map(Vec::as_slice)
            .ok_or(Error::FeatureLookup(key))
    }
}

/// The frozen sensory stack shared by every agent of a run.
#[derive(Debug, Clone)]
pub enum Frontend {
    Projection(SeededProjection),
    Table(FeatureTable),
}

impl Frontend {
    pub fn from_config(cfg: &FrontendConfig) -> Result<Self> {
        match cfg.kind {
            FrontendKind::SeededProjection => Ok(Frontend::Projection(SeededProjection::new(
                cfg.seed,
                cfg.output_dim,
                cfg.object_crop,
            ))),
            FrontendKind::FeatureFile => {
                let path = cfg
                    .feature_file
                    .as_ref()
                    .ok_or_else(|| Error::Config("frontend.feature_file is required for kind = feature_file".into()))?;
                let table = FeatureTable::parse(&std::fs::read_to_string(path)?)?;
                if table.dim != cfg.output_dim {
                    return Err(Error::Config(format!(
                        "feature file width {} does not match frontend.output_dim {}",
                        table.dim, cfg.output_dim
                    )));
                }
                Ok(Frontend::Table(table))
            }
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Frontend::Projection(p) => p.output_dim,
            Frontend::Table(t) => t.dim,
        }
    }

    pub fn features(&self, view: &View<'_>) -> Result<Vec<f64>> {
        match self {
            Frontend::Projection(p) => Ok(p.project(&p.grid(view))),
            Frontend::Table(t) => t.lookup(view).map(<[f64]>::to_vec),
        }
    }

    /// Digest of the frozen weights.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        match self {
            Frontend::Projection(p) => {
                h.update((p.output_dim as u64).to_le_bytes());
                h.update([p.object_crop as u8]);
                for v in &p.columns {
                    h.update(v.to_le_bytes());
                }
            }
            Frontend::Table(t) => {
                let mut keys: Vec<&String> = t.rows.keys().collect();
                keys.sort();
                for k in keys {
                    h.update(k.as_bytes());
                    for v in &t.rows[k] {
                        h.update(v.to_le_bytes());
                    }
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
