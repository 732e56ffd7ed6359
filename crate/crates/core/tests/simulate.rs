use iris_core::demo::{self, demo_fixture};
use iris_core::gesture::map_rotation;
use iris_core::ringsim::RingConfig;
use iris_core::simulate::{run_simulation, SimulationInput, SimulationReport};

fn run(seed: u64, drop_probability: f64) -> SimulationReport {
    let mut fx = demo_fixture();
    fx.scenario.drop_probability = drop_probability;
    let images = fx.image_map();
    run_simulation(SimulationInput {
        scenario: &fx.scenario,
        images: &images,
        trace: &fx.trace,
        registry: fx.registry.clone(),
        db: fx.db.clone(),
        ring: RingConfig::default(),
        seed,
    })
    .unwrap()
}

fn rotate_sum(timeline: &str) -> f64 {
    timeline
        .lines()
        .filter_map(|l| l.split_once(" gesture RotateDelta "))
        .map(|(_, v)| v.parse::<f64>().unwrap())
        .sum()
}

#[test]
fn demo_toggles_blinds_2_and_turns_up_speaker() {
    let r = run(7, 0.0);
    let blinds = r.transport.device(&demo::BLINDS_2).unwrap();
    assert!(blinds.state.power, "{}", r.timeline);
    assert!(!r.transport.device(&demo::BLINDS_1).unwrap().state.power);

    let swept = rotate_sum(&r.timeline);
    assert!((swept - demo::SPEAKER_ROLL_DEG).abs() <= 1.8, "{swept}");
    let want = demo::SPEAKER_START_LEVEL as f64 + map_rotation(swept, (0.0, 100.0));
    let level = r.transport.device(&demo::SPEAKER).unwrap().state.level.unwrap();
    assert_eq!(level as f64, want.round(), "{}", r.timeline);
    assert_eq!(r.packets_dropped, 0);
    assert_eq!(r.assembly.frames_invalidated, 0);
    assert!(r.timeline.contains("target Blinds 2"));
    assert!(r.timeline.contains("target Speaker"));
    assert!(r.timeline.contains("shortcut"));
}

#[test]
fn same_seed_same_timeline() {
    let a = run(3, 0.05);
    let b = run(3, 0.05);
    assert_eq!(a.timeline, b.timeline);
    assert_eq!(a.summary, b.summary);
    let c = run(4, 0.05);
    assert_ne!(a.timeline, c.timeline);
}

#[test]
fn lossy_link_never_delivers_torn_frames() {
    let r = run(11, 0.02);
    assert!(r.packets_dropped > 0);
    assert!(r.assembly.frames_invalidated > 0);
    for line in r.timeline.lines().filter(|l| l.contains(" frame ")) {
        let mean: f64 = line.rsplit_once("mean=").unwrap().1.parse().unwrap();
        assert!(mean > 0.0);
    }
}
