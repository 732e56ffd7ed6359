//! Embedding producers: a deterministic pixel embedder for frames and a
//! seeded cluster generator for synthetic benchmarks.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::protocol::Frame;

use super::PatchEmbedding;

pub trait Embedder {
    /// Deterministic for identical frames.
    fn embed(&self, frame: &Frame) -> PatchEmbedding;

    fn shape(&self) -> (usize, usize);
}

const POOL: usize = 4;
const FEATURES: usize = 2 * POOL * POOL + 2;

/// Random projection of pooled pixel statistics.
///
/// Each patch feature holds a 4x4 average pool of the patch, a 4x4 pool of
/// the whole frame, the patch-minus-frame mean and a constant.
#[derive(Debug, Clone)]
pub struct PixelEmbedder {
    grid: usize,
    dim: usize,
    projection: Vec<f64>,
}

impl PixelEmbedder {
    /// Projection seed shared by every tool that builds or queries a database.
    pub const DEFAULT_SEED: u64 = 0x1815;

    pub fn new(grid: usize, dim: usize, seed: u64) -> Self {
        assert!(grid > 0 && dim > 0, "grid and dim must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = (0..dim * FEATURES)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Self {
            grid,
            dim,
            projection,
        }
    }

    fn features(frame: &Frame, x0: usize, x1: usize, y0: usize, y1: usize, out: &mut [f64]) {
        let (w, h) = (x1 - x0, y1 - y0);
        for (k, slot) in out.iter_mut().enumerate().take(POOL * POOL) {
            let (bx, by) = (k % POOL, k / POOL);
            let (sx0, sx1) = (x0 + bx * w / POOL, x0 + ((bx + 1) * w / POOL).max(bx * w / POOL + 1));
            let (sy0, sy1) = (y0 + by * h / POOL, y0 + ((by + 1) * h / POOL).max(by * h / POOL + 1));
            let mut sum = 0u64;
            let mut n = 0u64;
            for y in sy0..sy1.min(y1) {
                let row = &frame.pixels[y * frame.width..(y + 1) * frame.width];
                for &p in &row[sx0..sx1.min(x1)] {
                    sum += p as u64;
                    n += 1;
                }
            }
            *slot = if n == 0 { 0.0 } else { sum as f64 / n as f64 / 255.0 - 0.5 };
        }
    }
}

impl Embedder for PixelEmbedder {
    fn embed(&self, frame: &Frame) -> PatchEmbedding {
        let g = self.grid;
        let mut global = [0.0; POOL * POOL];
        Self::features(frame, 0, frame.width, 0, frame.height, &mut global);
        let global_mean = global.iter().sum::<f64>() / global.len() as f64;

        let mut data = Vec::with_capacity(g * g * self.dim);
        let mut f = [0.0; FEATURES];
        for py in 0..g {
            for px in 0..g {
                let x0 = px * frame.width / g;
                let x1 = ((px + 1) * frame.width / g).max(x0 + 1);
                let y0 = py * frame.height / g;
                let y1 = ((py + 1) * frame.height / g).max(y0 + 1);
                Self::features(frame, x0, x1, y0, y1, &mut f[..POOL * POOL]);
                let local_mean = f[..POOL * POOL].iter().sum::<f64>() / (POOL * POOL) as f64;
                f[POOL * POOL..2 * POOL * POOL].copy_from_slice(&global);
                f[2 * POOL * POOL] = local_mean - global_mean;
                f[2 * POOL * POOL + 1] = 1.0;
                let start = data.len();
                for row in self.projection.chunks_exact(FEATURES) {
                    data.push(row.iter().zip(&f).map(|(a, b)| a * b).sum());
                }
                if data[start..].iter().all(|&v| v == 0.0) {
                    data[start] = 1.0;
                }
            }
        }
        PatchEmbedding::new(g, self.dim, data).expect("patch rows are nonzero by construction")
    }

    fn shape(&self) -> (usize, usize) {
        (self.grid, self.dim)
    }
}

/// Wraps an embedder and counts how often it runs.
#[derive(Debug)]
pub struct CountingEmbedder<E> {
    inner: E,
    calls: AtomicUsize,
}

impl<E: Embedder> CountingEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<E: Embedder> Embedder for CountingEmbedder<E> {
    fn embed(&self, frame: &Frame) -> PatchEmbedding {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.embed(frame)
    }

    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }
}

/// Maps (scene, patch) pairs to fixed random unit vectors, and draws noisy
/// samples around them.
#[derive(Debug, Clone)]
pub struct ClusterGenerator {
    grid: usize,
    dim: usize,
    seed: u64,
}

impl ClusterGenerator {
    pub fn new(grid: usize, dim: usize, seed: u64) -> Self {
        assert!(grid > 0 && dim > 0, "grid and dim must be positive");
        Self { grid, dim, seed }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.grid, self.dim)
    }

    /// Unit vector for one patch of one scene.
    pub fn patch_center(&self, scene: u64, patch: usize) -> Vec<f64> {
        let key = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(scene.wrapping_mul(0xD1B5_4A32_D192_ED03))
            .wrapping_add(patch as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    pub fn center(&self, scene: u64) -> PatchEmbedding {
        self.compose(&vec![scene; self.grid * self.grid])
    }

    /// Embedding whose patch `i` is taken from scene `scenes[i]`.
    pub fn compose(&self, scenes: &[u64]) -> PatchEmbedding {
        assert_eq!(scenes.len(), self.grid * self.grid, "one scene per patch");
        let data = scenes
            .iter()
            .enumerate()
            .flat_map(|(i, &s)| self.patch_center(s, i))
            .collect();
        PatchEmbedding::new(self.grid, self.dim, data).expect("unit rows")
    }

    /// `base` plus isotropic Gaussian noise; `noise` is the expected noise
    /// norm relative to a unit patch.
    pub fn sample_around<R: Rng + ?Sized>(
        &self,
        base: &PatchEmbedding,
        noise: f64,
        rng: &mut R,
    ) -> PatchEmbedding {
        let sigma = noise / (self.dim as f64).sqrt();
        loop {
            let data: Vec<f64> = base
                .data()
                .iter()
                .map(|&v| {
                    let z: f64 = StandardNormal.sample(rng);
                    v + sigma * z
                })
                .collect();
            if let Ok(e) = PatchEmbedding::new(base.grid(), base.dim(), data) {
                return e;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, scene: u64, noise: f64, rng: &mut R) -> PatchEmbedding {
        self.sample_around(&self.center(scene), noise, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::scene_similarity;
    use crate::protocol::{FRAME_BYTES, FRAME_WIDTH};

    fn frame(f: impl Fn(usize, usize) -> u8) -> Frame {
        let pixels = (0..FRAME_BYTES).map(|i| f(i % FRAME_WIDTH, i / FRAME_WIDTH)).collect();
        Frame::new(pixels).unwrap()
    }

    #[test]
    fn pixel_embedder_is_deterministic() {
        let fr = frame(|x, y| ((x * 3 + y * 7) % 256) as u8);
        let a = PixelEmbedder::new(4, 32, 7).embed(&fr);
        let b = PixelEmbedder::new(4, 32, 7).embed(&fr);
        assert_eq!(a, b);
        assert_eq!(a.shape(), (4, 32));
        assert_ne!(a, PixelEmbedder::new(4, 32, 8).embed(&fr));
    }

    #[test]
    fn pixel_embedder_handles_flat_frames() {
        for v in [0u8, 128, 255] {
            let e = PixelEmbedder::new(4, 382, 1).embed(&frame(|_, _| v));
            assert!(e.norms().iter().all(|&n| n > 0.0));
        }
    }

    #[test]
    fn pixel_embedder_separates_scenes() {
        let emb = PixelEmbedder::new(4, 64, 3);
        let a = frame(|x, _| if x < 80 { 20 } else { 230 });
        let a2 = frame(|x, y| if x < 80 { 22 + (y % 3) as u8 } else { 228 });
        let b = frame(|_, y| if y < 60 { 230 } else { 20 });
        let (ea, ea2, eb) = (emb.embed(&a), emb.embed(&a2), emb.embed(&b));
        let same = scene_similarity(&ea2, &ea).unwrap();
        let other = scene_similarity(&ea2, &eb).unwrap();
        assert!(same > other, "{same} vs {other}");
    }

    #[test]
    fn counting_embedder_counts() {
        let c = CountingEmbedder::new(PixelEmbedder::new(2, 8, 0));
        assert_eq!(c.calls(), 0);
        c.embed(&frame(|_, _| 1));
        c.embed(&frame(|_, _| 2));
        assert_eq!(c.calls(), 2);
    }

    #[test]
    fn clusters_are_tight_and_separated() {
        let g = ClusterGenerator::new(4, 382, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a1 = g.sample(1, 0.2, &mut rng);
        let a2 = g.sample(1, 0.2, &mut rng);
        let b = g.sample(2, 0.2, &mut rng);
        assert!(scene_similarity(&a1, &a2).unwrap() > 0.9);
        assert!(scene_similarity(&a1, &b).unwrap() < 0.2);
        assert_eq!(g.center(5), g.center(5));
    }
}
