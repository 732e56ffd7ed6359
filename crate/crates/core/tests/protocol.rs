mod common;

use common::{brute_coda, expected_frames, source_stream};
use iris_core::perception::{coda_index, BoundingBox, DeviceClass};
use iris_core::protocol::{assemble_all, decode_packet, encode_packet, read_capture, write_capture, RingPacket};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dropped_packets_never_tear_frames(seed in any::<u64>(), mask in prop::collection::vec(prop::bool::weighted(0.98), 8 * 83 + 1)) {
        let src = source_stream(8, seed);
        let kept: Vec<RingPacket> = src.packets.iter().zip(&mask).filter(|(_, &k)| k).map(|(p, _)| p.clone()).collect();
        let (frames, report) = assemble_all(&kept);
        let want = expected_frames(&mask);
        prop_assert_eq!(frames.len(), want.len());
        for (f, k) in frames.iter().zip(want) {
            prop_assert_eq!(&f.pixels, &src.frames[k]);
        }
        let imu = kept.iter().filter(|p| p.flags.imu_valid).count();
        prop_assert_eq!(report.imu_samples, imu);
    }

    #[test]
    fn capture_round_trip(seed in any::<u64>()) {
        let src = source_stream(2, seed);
        let mut buf = Vec::new();
        write_capture(&mut buf, &src.packets).unwrap();
        prop_assert_eq!(read_capture(&buf[..]).unwrap(), src.packets.clone());
        for p in &src.packets {
            prop_assert_eq!(&decode_packet(&encode_packet(p).unwrap()).unwrap(), p);
        }
    }

    #[test]
    fn coda_matches_exhaustive_search(
        raw in prop::collection::vec((0usize..9, 0u8..17, 0u8..13, 1u8..5), 0..10),
    ) {
        let boxes: Vec<BoundingBox> = raw
            .iter()
            .map(|&(c, x, y, conf)| BoundingBox::new(DeviceClass::ALL[c], 10.0 * x as f64, 10.0 * y as f64, 8.0, 8.0, conf as f64 / 4.0))
            .collect();
        let got = coda_index(&boxes, 160.0, 120.0);
        prop_assert_eq!(got, brute_coda(&boxes, 160.0, 120.0));
        if let Some(i) = got {
            prop_assert_ne!(boxes[i].class_id, DeviceClass::Background);
        }
    }
}

#[test]
fn lossless_stream_delivers_every_frame() {
    let src = source_stream(5, 1);
    let (frames, report) = assemble_all(&src.packets);
    assert_eq!(frames.len(), 5);
    assert_eq!(report.frames_invalidated, 0);
    for (f, want) in frames.iter().zip(&src.frames) {
        assert_eq!(&f.pixels, want);
    }
}
