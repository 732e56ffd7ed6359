//! Patch-grid embeddings and scene similarity.

use super::InstanceError;

pub const DEFAULT_GRID: usize = 4;
pub const DEFAULT_DIM: usize = 382;

/// A `grid x grid` array of `dim`-dimensional patch vectors for one image.
///
/// Patch norms are computed once on construction; zero or non-finite rows
/// are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEmbedding {
    grid: usize,
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl PatchEmbedding {
    pub fn new(grid: usize, dim: usize, data: Vec<f64>) -> Result<Self, InstanceError> {
        if grid == 0 || dim == 0 || data.len() != grid * grid * dim {
            return Err(InstanceError::ShapeMismatch {
                expected: (grid, dim),
                found: format!("{} values", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(InstanceError::DegenerateEmbedding("non-finite value".into()));
        }
        let norms: Vec<f64> = data
            .chunks_exact(dim)
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        if let Some(p) = norms.iter().position(|&n| n == 0.0) {
            return Err(InstanceError::DegenerateEmbedding(format!("patch {p} has zero norm")));
        }
        Ok(Self {
            grid,
            dim,
            data,
            norms,
        })
    }

    pub fn from_f32(grid: usize, dim: usize, data: &[f32]) -> Result<Self, InstanceError> {
        Self::new(grid, dim, data.iter().map(|&v| v as f64).collect())
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.grid, self.dim)
    }

    pub fn patch_count(&self) -> usize {
        self.grid * self.grid
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn patches(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Copy with every value rounded to `f32`, as stored on disk.
    pub fn quantized_f32(&self) -> Self {
        let data: Vec<f64> = self.data.iter().map(|&v| v as f32 as f64).collect();
        Self::new(self.grid, self.dim, data).expect("f32 rounding keeps rows nonzero")
    }
}

/// Mean over query patches of the best cosine similarity against any
/// reference patch. Not symmetric in its arguments.
pub fn scene_similarity(q: &PatchEmbedding, r: &PatchEmbedding) -> Result<f64, InstanceError> {
    if q.shape() != r.shape() {
        return Err(InstanceError::ShapeMismatch {
            expected: q.shape(),
            found: format!("{:?}", r.shape()),
        });
    }
    let dim = q.dim;
    let mut total = 0.0;
    for (qi, q_patch) in q.data.chunks_exact(dim).enumerate() {
        let qn = q.norms[qi];
        let mut best = f64::NEG_INFINITY;
        for (ri, r_patch) in r.data.chunks_exact(dim).enumerate() {
            let dot: f64 = q_patch.iter().zip(r_patch).map(|(a, b)| a * b).sum();
            let cos = dot / (qn * r.norms[ri]);
            if cos > best {
                best = cos;
            }
        }
        total += best;
    }
    Ok((total / q.patch_count() as f64).clamp(-1.0, 1.0))
}
