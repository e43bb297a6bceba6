//! File formats: measurement cube CSV with JSON sidecar, matrix CSV maps,
//! 16-bit PGM previews, solver traces.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MeasurementCube, ModulationPlan, PixelMap};

pub const CUBE_HEADER: &str = "pixel_x,pixel_y,harmonic,re,im";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Write {
        path: path.to_path_buf(),
        source,
    }
}

fn read_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Read {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(what: &'static str, path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        what,
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes `bytes` to `path` through a closure over a buffered writer.
pub fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(write_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(write_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(read_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(what, path, e.to_string()))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(write_err(path))
}

/// Sidecar for a cube CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeMeta {
    pub width: usize,
    pub height: usize,
    pub plan: ModulationPlan,
    pub noise_sigma: f64,
}

/// `cube.csv` -> `cube.meta.json`
pub fn cube_sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// Writes the cube CSV and its sidecar next to it.
pub fn write_cube(csv: &Path, cube: &MeasurementCube) -> Result<()> {
    write_with(csv, |w| {
        writeln!(w, "{CUBE_HEADER}")?;
        for y in 0..cube.height {
            for x in 0..cube.width {
                for (i, z) in cube.pixel(x, y).iter().enumerate() {
                    writeln!(w, "{x},{y},{},{},{}", i + 1, z.re, z.im)?;
                }
            }
        }
        Ok(())
    })?;
    write_json(
        &cube_sidecar_path(csv),
        &CubeMeta {
            width: cube.width,
            height: cube.height,
            plan: cube.plan,
            noise_sigma: cube.noise_sigma,
        },
    )
}

/// Reads a cube CSV and its sidecar. Every `(pixel, harmonic)` must appear
/// exactly once; row order is free.
pub fn read_cube(csv: &Path) -> Result<MeasurementCube> {
    let meta: CubeMeta = read_json(&cube_sidecar_path(csv), "cube metadata")?;
    meta.plan.validate()?;
    let n = meta.plan.harmonic_count;
    let total = meta.width * meta.height * n;
    let mut values = vec![Complex64::new(0.0, 0.0); total];
    let mut seen = vec![false; total];

    let file = File::open(csv).map_err(read_err(csv))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == CUBE_HEADER => {}
        Some(Err(e)) => return Err(read_err(csv)(e)),
        _ => return Err(parse_err("cube", csv, format!("expected header `{CUBE_HEADER}`"))),
    }
    for (i, line) in lines.enumerate() {
        let line = line.map_err(read_err(csv))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 2;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(parse_err("cube", csv, format!("line {row}: expected 5 fields")));
        }
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| parse_err("cube", csv, format!("line {row}: {e}")))
        };
        let float = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| parse_err("cube", csv, format!("line {row}: {e}")))
        };
        let (x, y, h) = (int(fields[0])?, int(fields[1])?, int(fields[2])?);
        if x >= meta.width || y >= meta.height || h == 0 || h > n {
            return Err(parse_err("cube", csv, format!("line {row}: index out of range")));
        }
        let idx = (y * meta.width + x) * n + h - 1;
        if seen[idx] {
            return Err(parse_err("cube", csv, format!("line {row}: duplicate entry")));
        }
        seen[idx] = true;
        values[idx] = Complex64::new(float(fields[3])?, float(fields[4])?);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        let (p, h) = (missing / n, missing % n + 1);
        return Err(parse_err(
            "cube",
            csv,
            format!("missing pixel ({}, {}) harmonic {h}", p % meta.width, p / meta.width),
        ));
    }
    Ok(MeasurementCube {
        width: meta.width,
        height: meta.height,
        plan: meta.plan,
        noise_sigma: meta.noise_sigma,
        values,
    })
}

/// One CSV line per image row.
pub fn write_map_csv(path: &Path, map: &PixelMap<f64>) -> Result<()> {
    write_with(path, |w| {
        for row in map.data.chunks(map.width.max(1)) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    })
}

pub fn read_map_csv(path: &Path) -> Result<PixelMap<f64>> {
    let text = std::fs::read_to_string(path).map_err(read_err(path))?;
    let mut data = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err("map", path, format!("line {}: {e}", i + 1)))?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err("map", path, format!("line {}: ragged row", i + 1)))
            }
            _ => {}
        }
        data.extend(row);
        height += 1;
    }
    PixelMap::from_vec(width.unwrap_or(0), height, data)
}

/// Binary 16-bit PGM (P5, big-endian). Values are scaled by `1 / full_scale`,
/// clamped to `[0, 1]` and mapped to `0..=65535`.
pub fn write_pgm16(path: &Path, map: &PixelMap<f64>, full_scale: f64) -> Result<()> {
    write_with(path, |w| {
        write!(w, "P5\n{} {}\n65535\n", map.width, map.height)?;
        for &v in &map.data {
            let level = if v.is_finite() {
                ((v / full_scale).clamp(0.0, 1.0) * 65535.0).round() as u16
            } else {
                0
            };
            w.write_all(&level.to_be_bytes())?;
        }
        Ok(())
    })
}
