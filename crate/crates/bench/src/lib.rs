//! Seeded inputs for the benchmarks.

use iris_core::instances::{ClusterGenerator, EmbeddingDb, PatchEmbedding};
use iris_core::perception::{BoundingBox, DeviceClass};
use iris_core::protocol::Frame;
use iris_core::ringsim::packetize_frame;
use iris_core::RingPacket;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

fn device(i: usize) -> Uuid {
    Uuid::from_u128(0xbe00 + i as u128)
}

/// Database of `n` references spread over `classes` controllable classes.
pub fn database(n: usize, classes: usize, grid: usize, dim: usize, seed: u64) -> EmbeddingDb {
    let g = ClusterGenerator::new(grid, dim, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut db = EmbeddingDb::new(grid, dim);
    for i in 0..n {
        let class = DeviceClass::CONTROLLABLE[i % classes.clamp(1, DeviceClass::CONTROLLABLE.len())];
        let dir = move |_: &Uuid| Some(class);
        db.add_embedding(&dir, g.sample(i as u64, 0.2, &mut rng), device(i), "", i as u64)
            .expect("generated shapes match");
    }
    db
}

pub fn query(grid: usize, dim: usize, seed: u64) -> PatchEmbedding {
    let g = ClusterGenerator::new(grid, dim, seed);
    g.sample(7, 0.2, &mut ChaCha8Rng::seed_from_u64(seed ^ 1))
}

/// Packets for `frames` random frames, plus the next start-of-frame.
pub fn packet_stream(frames: usize, seed: u64) -> Vec<RingPacket> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut seq = 0u8;
    for _ in 0..=frames {
        let pixels: Vec<u8> = (0..iris_core::protocol::FRAME_BYTES).map(|_| rng.random()).collect();
        let frame = Frame::new(pixels).expect("frame size");
        let pk = packetize_frame(&frame, seq, false, &[]).expect("no imu");
        seq = seq.wrapping_add(pk.len() as u8);
        out.extend(pk);
    }
    out.truncate(frames * iris_core::protocol::PACKETS_PER_FRAME + 1);
    out
}

pub fn boxes(n: usize, seed: u64) -> Vec<BoundingBox> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let class = DeviceClass::ALL[rng.random_range(0..DeviceClass::ALL.len())];
            BoundingBox::new(
                class,
                rng.random_range(0.0..160.0),
                rng.random_range(0.0..120.0),
                20.0,
                20.0,
                rng.random_range(0.0..1.0),
            )
        })
        .collect()
}
