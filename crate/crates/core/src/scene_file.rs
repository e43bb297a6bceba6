//! JSON scene files.
//!
//! ```json
//! {
//!   "width": 2, "height": 1,
//!   "layers": [
//!     { "depth": 0.3, "amplitude": 0.5 },
//!     { "depth": [8.1, 8.1], "amplitude": [0.15, 0.05] }
//!   ]
//! }
//! ```
//!
//! Each layer field is either a scalar broadcast to every pixel or a
//! row-major array of `width * height` values. See `docs/scene-format.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Layer, PixelMap, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum FieldValue {
    Scalar(f64),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    depth: FieldValue,
    amplitude: FieldValue,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    width: usize,
    height: usize,
    layers: Vec<LayerFile>,
}

fn expand(value: FieldValue, width: usize, height: usize, what: &str) -> Result<PixelMap<f64>> {
    match value {
        FieldValue::Scalar(v) => Ok(PixelMap::filled(width, height, v)),
        FieldValue::Values(v) => PixelMap::from_vec(width, height, v)
            .map_err(|_| Error::Input(format!("{what}: expected {} values", width * height))),
    }
}

fn compact(map: &PixelMap<f64>) -> FieldValue {
    match map.data.first() {
        Some(&first) if map.data.iter().all(|v| v.to_bits() == first.to_bits()) => {
            FieldValue::Scalar(first)
        }
        _ => FieldValue::Values(map.data.clone()),
    }
}

/// Parses scene JSON. The scene is not validated here; see
/// [`crate::validate_scene`].
pub fn parse_scene(text: &str) -> Result<Scene> {
    let file: SceneFile =
        serde_json::from_str(text).map_err(|e| Error::Input(format!("scene JSON: {e}")))?;
    let (w, h) = (file.width, file.height);
    let layers = file
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            Ok(Layer::new(
                expand(l.depth, w, h, &format!("layer {i} depth"))?,
                expand(l.amplitude, w, h, &format!("layer {i} amplitude"))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scene::new(w, h, layers))
}

pub fn scene_to_json(scene: &Scene) -> String {
    let file = SceneFile {
        width: scene.width,
        height: scene.height,
        layers: scene
            .layers
            .iter()
            .map(|l| LayerFile {
                name: None,
                depth: compact(&l.depth),
                amplitude: compact(&l.amplitude),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("scene serializes")
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scene(&text).map_err(|e| match e {
        Error::Input(message) => Error::Parse {
            what: "scene",
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn save_scene(path: &Path, scene: &Scene) -> Result<()> {
    std::fs::write(path, scene_to_json(scene) + "\n").map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}
