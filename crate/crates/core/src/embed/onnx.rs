//! ONNX model runner for the external embedder.
//!
//! The contract is narrow: an operator graph with a single NCHW float input
//! and a single `[N, D]` (or `[D]`) float output, typically the
//! global-average-pooled penultimate layer of a pretrained CNN exported to
//! ONNX. Inference runs on CPU through tract.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use tract_onnx::prelude::*;

use super::{EmbedError, Result};
use crate::ingest::ImageTile;

type Plan = Arc<TypedRunnableModel>;

/// A parsed ONNX model ready to embed same-shaped tiles.
pub struct OnnxEmbedder {
    path: PathBuf,
    model: InferenceModel,
    expected_dim: usize,
}

impl OnnxEmbedder {
    /// Parse the model file; fails early on unreadable or malformed graphs.
    pub fn load(path: &Path, expected_dim: usize) -> Result<Self> {
        let model = tract_onnx::onnx()
            .model_for_path(path)
            .map_err(|e| EmbedError::ModelLoad {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        Ok(OnnxEmbedder {
            path: path.to_path_buf(),
            model,
            expected_dim,
        })
    }

    /// Bind the input to `[1, 3, h, w]` and optimize for execution.
    fn plan_for(&self, h: usize, w: usize) -> Result<Plan> {
        self.model
            .clone()
            .with_input_fact(0, f32::fact([1, 3, h, w]).into())
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| EmbedError::ModelLoad {
                path: self.path.clone(),
                message: e.to_string(),
            })
    }

    /// Embed one tile (a fresh execution plan per call; prefer
    /// [`OnnxEmbedder::embed_all`] for batches).
    pub fn embed(&self, tile: &ImageTile) -> Result<Vec<f32>> {
        Ok(self.embed_all(std::slice::from_ref(tile))?.pop().unwrap())
    }

    /// Embed tiles in order. All tiles must share one shape (external models
    /// have a fixed input size; resize via preprocessing first).
    pub fn embed_all(&self, tiles: &[ImageTile]) -> Result<Vec<Vec<f32>>> {
        let first = match tiles.first() {
            Some(t) => t,
            None => return Ok(Vec::new()),
        };
        let (h, w) = (first.height(), first.width());
        if let Some(t) = tiles.iter().find(|t| !t.same_shape(first)) {
            return Err(EmbedError::Inference {
                message: format!(
                    "mixed tile shapes in one batch: {}x{} vs {}x{}",
                    h,
                    w,
                    t.height(),
                    t.width()
                ),
            });
        }
        let plan = self.plan_for(h as usize, w as usize)?;
        tiles.iter().map(|tile| self.run_one(&plan, tile)).collect()
    }

    fn run_one(&self, plan: &Plan, tile: &ImageTile) -> Result<Vec<f32>> {
        let (h, w) = (tile.height() as usize, tile.width() as usize);
        let input = tract_ndarray::Array4::from_shape_fn((1, 3, h, w), |(_, c, y, x)| {
            tile.get(y as u32, x as u32, c)
        });
        let outputs = plan
            .run(tvec!(Tensor::from(input).into()))
            .map_err(|e| EmbedError::Inference {
                message: e.to_string(),
            })?;
        if outputs.len() != 1 {
            return Err(EmbedError::Inference {
                message: format!("expected a single output, model produced {}", outputs.len()),
            });
        }
        let view = outputs[0]
            .to_plain_array_view::<f32>()
            .map_err(|e| EmbedError::Inference {
                message: e.to_string(),
            })?;
        let row: Vec<f32> = view.iter().copied().collect();
        if row.len() != self.expected_dim {
            return Err(EmbedError::OutputShape {
                expected: self.expected_dim,
                found: row.len(),
            });
        }
        Ok(row)
    }
}
