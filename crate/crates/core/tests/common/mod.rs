//! Independent reference implementations and fixtures shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

use iris_core::instances::{ClusterGenerator, EmbeddingDb, PatchEmbedding};
use iris_core::perception::{BoundingBox, DeviceClass};
use iris_core::protocol::{
    ImuSample, RingPacket, StatusFlags, FRAME_BYTES, LAST_PACKET_DATA, PACKETS_PER_FRAME, PAYLOAD_LEN,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use uuid::Uuid;

/// Explicit double loop over patches with norms computed in place.
pub fn brute_similarity(grid: usize, dim: usize, q: &[f64], r: &[f64]) -> f64 {
    let n = grid * grid;
    let mut total = 0.0;
    for i in 0..n {
        let mut best = -2.0f64;
        for j in 0..n {
            let mut dot = 0.0;
            let mut qq = 0.0;
            let mut rr = 0.0;
            for k in 0..dim {
                let a = q[i * dim + k];
                let b = r[j * dim + k];
                dot += a * b;
                qq += a * a;
                rr += b * b;
            }
            let c = dot / (qq.sqrt() * rr.sqrt());
            if c > best {
                best = c;
            }
        }
        total += best;
    }
    total / n as f64
}

pub fn random_data(rng: &mut impl Rng, grid: usize, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..grid * grid * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.chunks(dim).all(|p| p.iter().any(|&x| x != 0.0)) {
            return v;
        }
    }
}

/// CODA by exhaustive comparison: non-background boxes, nearest center,
/// then highest confidence, then lowest index.
pub fn brute_coda(boxes: &[BoundingBox], w: f64, h: f64) -> Option<usize> {
    let d = |b: &BoundingBox| ((b.cx - w / 2.0).powi(2) + (b.cy - h / 2.0).powi(2)).sqrt();
    let candidates: Vec<usize> = (0..boxes.len())
        .filter(|&i| boxes[i].class_id != DeviceClass::Background)
        .collect();
    let min_d = candidates.iter().map(|&i| d(&boxes[i])).fold(f64::INFINITY, f64::min);
    let nearest: Vec<usize> = candidates.into_iter().filter(|&i| d(&boxes[i]) == min_d).collect();
    let max_c = nearest.iter().map(|&i| boxes[i].confidence).fold(f64::NEG_INFINITY, f64::max);
    nearest.into_iter().find(|&i| boxes[i].confidence == max_c)
}

/// An encoded stream of `frames` frames plus the start-of-frame packet of
/// one more, so the last real frame can close.
pub struct SourceStream {
    pub frames: Vec<Vec<u8>>,
    pub packets: Vec<RingPacket>,
}

pub fn source_stream(frames: usize, seed: u64) -> SourceStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SourceStream {
        frames: Vec::new(),
        packets: Vec::new(),
    };
    let mut seq = 0u8;
    for f in 0..=frames {
        let pixels: Vec<u8> = (0..FRAME_BYTES).map(|_| rng.random()).collect();
        for p in 0..PACKETS_PER_FRAME {
            let mut payload = vec![0u8; PAYLOAD_LEN];
            let start = p * PAYLOAD_LEN;
            let len = if p + 1 == PACKETS_PER_FRAME { LAST_PACKET_DATA } else { PAYLOAD_LEN };
            payload[..len].copy_from_slice(&pixels[start..start + len]);
            let imu_valid = rng.random_bool(0.7);
            out.packets.push(RingPacket {
                seq,
                flags: StatusFlags {
                    start_of_frame: p == 0,
                    imu_valid,
                    button_pressed: false,
                },
                imu: if imu_valid {
                    ImuSample {
                        accel: [rng.random(), rng.random(), rng.random()],
                        gyro: [rng.random(), rng.random(), rng.random()],
                    }
                } else {
                    ImuSample::default()
                },
                camera_payload: payload,
            });
            seq = seq.wrapping_add(1);
            if f == frames {
                break;
            }
        }
        if f < frames {
            out.frames.push(pixels);
        }
    }
    out
}

/// Indices of frames that must come out of the assembler for `kept`:
/// every packet of the frame and the next frame's first packet arrived.
pub fn expected_frames(kept: &[bool]) -> Vec<usize> {
    let frames = (kept.len() - 1) / PACKETS_PER_FRAME;
    (0..frames)
        .filter(|&k| {
            let s = k * PACKETS_PER_FRAME;
            kept[s..s + PACKETS_PER_FRAME].iter().all(|&x| x) && kept[s + PACKETS_PER_FRAME]
        })
        .collect()
}

pub fn device(i: usize) -> Uuid {
    Uuid::from_u128(0x1000 + i as u128)
}

/// Seeded multi-view instance benchmark. Each device is seen from
/// `views` distinct viewpoints; reference `k` of a device comes from view
/// `k % views`.
pub struct ClusterBench {
    pub generator: ClusterGenerator,
    pub devices: usize,
    pub views: u64,
    pub noise: f64,
    pub refs: Vec<Vec<PatchEmbedding>>,
    pub queries: Vec<(usize, PatchEmbedding)>,
}

impl ClusterBench {
    pub fn new(devices: usize, views: u64, max_refs: usize, queries: usize, grid: usize, dim: usize, seed: u64) -> Self {
        let generator = ClusterGenerator::new(grid, dim, seed);
        let noise = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBE7C);
        let scene = |d: usize, v: u64| d as u64 * views + v;
        let refs = (0..devices)
            .map(|d| {
                (0..max_refs)
                    .map(|k| generator.sample(scene(d, k as u64 % views), noise, &mut rng))
                    .collect()
            })
            .collect();
        let queries = (0..queries)
            .map(|_| {
                let d = rng.random_range(0..devices);
                let v = rng.random_range(0..views);
                (d, generator.sample(scene(d, v), noise, &mut rng))
            })
            .collect();
        Self {
            generator,
            devices,
            views,
            noise,
            refs,
            queries,
        }
    }

    pub fn database(&self, refs_per_device: usize) -> EmbeddingDb {
        let (g, d) = self.generator.shape();
        let mut db = EmbeddingDb::new(g, d);
        let directory = |_: &Uuid| Some(DeviceClass::Lights);
        let mut t = 0;
        for k in 0..refs_per_device {
            for (dev, refs) in self.refs.iter().enumerate() {
                db.add_embedding(&directory, refs[k].clone(), device(dev), format!("d{dev}r{k}"), t)
                    .unwrap();
                t += 1;
            }
        }
        db
    }

    pub fn accuracy(&self, refs_per_device: usize) -> f64 {
        let db = self.database(refs_per_device);
        let hits = self
            .queries
            .iter()
            .filter(|(d, q)| db.resolve_instance(q, None).unwrap().device_uuid == device(*d))
            .count();
        hits as f64 / self.queries.len() as f64
    }
}

/// Coefficient of determination of the least-squares line through `pts`.
pub fn r_squared(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}
