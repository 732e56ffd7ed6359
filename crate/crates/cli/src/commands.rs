use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use iris_core::budget::{
    battery_life_hours, battery_table, ble_throughput, e2e_latency_ms, latency_table, throughput_table,
    LatencyProfile,
};
use iris_core::demo::demo_fixture;
use iris_core::gesture::recognize_trace;
use iris_core::image::GrayImage;
use iris_core::instances::{read_query, undo_correct, write_query, Embedder, PixelEmbedder};
use iris_core::protocol::{assemble_capture, read_capture, write_capture, Frame, FRAME_HEIGHT, FRAME_WIDTH, PACKETS_PER_FRAME};
use iris_core::ringsim::{bin_image, read_imu_trace, run_ring, NetworkChange, RingConfig, SENSOR_SIZE};
use iris_core::simulate::{run_simulation, Scenario, SimulationInput};
use iris_core::{DeviceClass, EmbeddingDb, LinkConfig, PowerProfile, Registry};
use serde::Deserialize;

use crate::error::{create_dir, read_bytes, read_text, write_bytes, CliError, CliResult, ValidationExt};
use crate::{BudgetModel, Cli, Command, DbAction, SimulateArgs};

/// Default locations read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    registry: Option<PathBuf>,
    db: Option<PathBuf>,
}

struct Context {
    seed: u64,
    config: FileConfig,
}

impl Context {
    fn load(cli: &Cli) -> CliResult<Self> {
        let config = match &cli.config {
            None => FileConfig::default(),
            Some(path) => {
                let mut c: FileConfig = serde_json::from_str(&read_text(path)?).invalid_in(path)?;
                let base = path.parent().unwrap_or(Path::new(""));
                c.registry = c.registry.map(|p| base.join(p));
                c.db = c.db.map(|p| base.join(p));
                c
            }
        };
        Ok(Self { seed: cli.seed, config })
    }

    fn registry_path(&self, flag: Option<PathBuf>) -> CliResult<PathBuf> {
        flag.or_else(|| self.config.registry.clone())
            .ok_or_else(|| CliError::usage("no registry: pass --registry or set it in --config"))
    }

    fn db_path(&self, flag: Option<PathBuf>) -> CliResult<PathBuf> {
        flag.or_else(|| self.config.db.clone())
            .ok_or_else(|| CliError::usage("no database: pass --db or set it in --config"))
    }
}

pub fn run(cli: Cli) -> CliResult {
    let ctx = Context::load(&cli)?;
    let out = match cli.command {
        Command::Decode { input, out_dir } => decode(&input, &out_dir)?,
        Command::Simulate(args) => simulate(&ctx, args)?,
        Command::Gesture { trace } => gesture(&trace)?,
        Command::Resolve { db, query, class } => resolve(&ctx.db_path(db)?, &query, class.as_deref())?,
        Command::Embed { image, out } => embed(&image, &out)?,
        Command::Db { action } => db(&ctx, action)?,
        Command::Budget { model } => budget(model)?,
        Command::Demo { out_dir } => demo(&out_dir)?,
    };
    print!("{out}");
    Ok(())
}

fn load_registry(path: &Path) -> CliResult<Registry> {
    Registry::from_json(&read_text(path)?).invalid_in(path)
}

fn load_db(path: &Path) -> CliResult<EmbeddingDb> {
    EmbeddingDb::read_from(&read_bytes(path)?[..]).invalid_in(path)
}

fn save_db(path: &Path, db: &EmbeddingDb) -> CliResult {
    let mut buf = Vec::new();
    db.write_to(&mut buf).invalid()?;
    write_bytes(path, &buf)
}

fn load_image(path: &Path) -> CliResult<GrayImage> {
    GrayImage::from_pgm_bytes(&read_bytes(path)?).invalid_in(path)
}

/// Accepts a full sensor image, which is binned, or an already binned frame.
fn load_frame(path: &Path) -> CliResult<Frame> {
    let img = load_image(path)?;
    let img = match (img.width(), img.height()) {
        (FRAME_WIDTH, FRAME_HEIGHT) => img,
        (SENSOR_SIZE, SENSOR_SIZE) => bin_image(&img).invalid_in(path)?,
        (w, h) => {
            return Err(CliError::invalid(format!(
                "{}: {w}x{h} image, expected {SENSOR_SIZE}x{SENSOR_SIZE} or {FRAME_WIDTH}x{FRAME_HEIGHT}",
                path.display()
            )))
        }
    };
    Frame::from_image(&img).invalid_in(path)
}

fn embedder_for(db: &EmbeddingDb) -> PixelEmbedder {
    let (g, d) = db.shape();
    PixelEmbedder::new(g, d, PixelEmbedder::DEFAULT_SEED)
}

fn decode(input: &Path, out_dir: &Path) -> CliResult<String> {
    let packets = read_capture(&read_bytes(input)?[..]).invalid_in(input)?;
    let (frames, report) = assemble_capture(&packets);
    create_dir(out_dir)?;
    let mut out = String::new();
    for (i, f) in frames.iter().enumerate() {
        let path = out_dir.join(format!("frame_{i:04}.pgm"));
        write_bytes(&path, &f.to_image().to_pgm_bytes())?;
        let _ = writeln!(out, "frame {i} first_seq={} path={}", f.first_seq, path.display());
    }
    let _ = writeln!(
        out,
        "packets={} frames_ok={} frames_invalidated={} sequence_gaps={} imu_samples={} button_packets={} discarded={}",
        report.packets,
        report.frames_ok,
        report.frames_invalidated,
        report.sequence_gaps,
        report.imu_samples,
        report.button_packets,
        report.discarded
    );
    Ok(out)
}

fn simulate(ctx: &Context, args: SimulateArgs) -> CliResult<String> {
    let scenario = Scenario::from_json(&read_text(&args.scene)?).invalid_in(&args.scene)?;
    let mut images = HashMap::new();
    for shot in &scenario.shots {
        if !images.contains_key(&shot.image) {
            images.insert(shot.image.clone(), load_image(&args.images.join(&shot.image))?);
        }
    }
    let trace = read_imu_trace(&read_bytes(&args.imu)?[..]).invalid_in(&args.imu)?;
    let registry = load_registry(&ctx.registry_path(args.registry)?)?;
    let db = load_db(&ctx.db_path(args.db)?)?;
    let report = run_simulation(SimulationInput {
        scenario: &scenario,
        images: &images,
        trace: &trace,
        registry,
        db,
        ring: RingConfig::default(),
        seed: ctx.seed,
    })
    .invalid()?;
    if let Some(path) = &args.out {
        write_bytes(path, report.timeline.as_bytes())?;
    }
    if let Some(path) = &args.db_out {
        save_db(path, &report.db)?;
    }
    Ok(format!("{}{}", report.timeline, report.summary))
}

fn gesture(trace: &Path) -> CliResult<String> {
    let rows = read_imu_trace(&read_bytes(trace)?[..]).invalid_in(trace)?;
    let events = recognize_trace(&rows, Default::default()).invalid()?;
    Ok(events.iter().map(|e| format!("{e}\n")).collect())
}

fn resolve(db_path: &Path, query: &Path, class: Option<&str>) -> CliResult<String> {
    let db = load_db(db_path)?;
    let q = read_query(&read_bytes(query)?[..]).invalid_in(query)?;
    let hint = class.map(|c| c.parse::<DeviceClass>()).transpose().invalid()?;
    let res = db.resolve_instance(&q, hint).invalid()?;
    let mut out = format!("scoped={}\n", res.scoped);
    let mut seen = Vec::new();
    for m in &res.ranked {
        if seen.contains(&m.device_uuid) {
            continue;
        }
        seen.push(m.device_uuid);
        let _ = writeln!(
            out,
            "{} {} {} {:.6} {}",
            seen.len(),
            m.device_uuid,
            m.class.name(),
            m.score,
            m.label
        );
    }
    Ok(out)
}

fn embed(image: &Path, out: &Path) -> CliResult<String> {
    let frame = load_frame(image)?;
    let e = PixelEmbedder::new(
        iris_core::instances::DEFAULT_GRID,
        iris_core::instances::DEFAULT_DIM,
        PixelEmbedder::DEFAULT_SEED,
    )
    .embed(&frame);
    let mut buf = Vec::new();
    write_query(&mut buf, &e).invalid()?;
    write_bytes(out, &buf)?;
    Ok(format!("grid={} dim={} out={}\n", e.grid(), e.dim(), out.display()))
}

fn device_uuid(registry: &Registry, key: &str) -> CliResult<uuid::Uuid> {
    registry
        .lookup(key)
        .map(|d| d.uuid)
        .ok_or_else(|| CliError::invalid(format!("unknown device {key}")))
}

fn db(ctx: &Context, action: DbAction) -> CliResult<String> {
    match action {
        DbAction::List { db } => {
            let db = load_db(&ctx.db_path(db)?)?;
            let (g, d) = db.shape();
            let mut out = format!("grid={g} dim={d} entries={}\n", db.len());
            for (i, e) in db.entries().iter().enumerate() {
                let _ = writeln!(out, "{i} {} {} {} {}", e.device_uuid, e.class.name(), e.added_at_ms, e.label);
            }
            Ok(out)
        }
        DbAction::Add { db, registry, device, image, label, at } => {
            let db_path = ctx.db_path(db)?;
            let registry = load_registry(&ctx.registry_path(registry)?)?;
            let uuid = device_uuid(&registry, &device)?;
            let mut db = if db_path.exists() {
                load_db(&db_path)?
            } else {
                EmbeddingDb::new(iris_core::instances::DEFAULT_GRID, iris_core::instances::DEFAULT_DIM)
            };
            let frame = load_frame(&image)?;
            let embedder = embedder_for(&db);
            let idx = db.add_reference(&registry, &frame, &embedder, uuid, label, at).invalid()?;
            save_db(&db_path, &db)?;
            Ok(format!("added {idx} {uuid} entries={}\n", db.len()))
        }
        DbAction::Undo { db, registry, query, device, at } => {
            let db_path = ctx.db_path(db)?;
            let registry = load_registry(&ctx.registry_path(registry)?)?;
            let uuid = device_uuid(&registry, &device)?;
            let mut db = load_db(&db_path)?;
            let q = read_query(&read_bytes(&query)?[..]).invalid_in(&query)?;
            let idx = undo_correct(&mut db, &registry, Some(&q), uuid, at).invalid()?;
            save_db(&db_path, &db)?;
            Ok(format!("corrected {idx} {uuid} entries={}\n", db.len()))
        }
    }
}

fn budget(model: BudgetModel) -> CliResult<String> {
    let link = LinkConfig::default();
    match model {
        BudgetModel::Throughput { table: true } => Ok(throughput_table(&link)),
        BudgetModel::Throughput { table: false } => Ok(format!("{}\n", ble_throughput(&link))),
        BudgetModel::Latency { table, db_size, partition } => {
            let profile = LatencyProfile::default();
            if table {
                return Ok(latency_table(&profile));
            }
            let sizes = db_size.map_or(vec![4, 50, 100], |n| vec![n]);
            let mut out = String::new();
            for n in sizes {
                let ms = e2e_latency_ms(&profile, n, partition.is_some(), partition.unwrap_or(n)).invalid()?;
                let _ = writeln!(out, "{n} {ms}");
            }
            Ok(out)
        }
        BudgetModel::Battery { table, sleep_fraction, gestures_per_hour, measured } => {
            let profile = if measured { PowerProfile::default() } else { PowerProfile::quoted_currents() };
            if table {
                return battery_table(&profile, sleep_fraction.unwrap_or(0.5)).invalid();
            }
            let rates = gestures_per_hour.map_or(vec![10, 30, 60], |n| vec![n]);
            let mut out = String::new();
            for n in rates {
                let h = battery_life_hours(n, &profile, sleep_fraction.unwrap_or(0.0)).invalid()?;
                let _ = writeln!(out, "{n} {h:.3}");
            }
            Ok(out)
        }
    }
}

/// Writes the example household plus `capture.bin`, a loss-free recording
/// of the ring's packets for the same script.
fn demo(out_dir: &Path) -> CliResult<String> {
    let fx = demo_fixture();
    create_dir(out_dir)?;
    fx.write_to(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let images = fx.image_map();
    let shots = fx.scenario.shots.clone();
    let network: Vec<NetworkChange> = fx
        .scenario
        .home_network
        .iter()
        .map(|n| NetworkChange { t_ms: n.t_ms, present: n.present })
        .collect();
    let mut capture = |t: f64| {
        let shot = shots.iter().rev().find(|s| s.from_ms <= t).unwrap_or(&shots[0]);
        Ok(images[&shot.image].clone())
    };
    let run = run_ring(&RingConfig::default(), &fx.trace, &network, None, &mut capture).invalid()?;
    let mut per_frame = vec![0usize; run.frames_started];
    for p in &run.packets {
        per_frame[p.frame_index] += 1;
    }
    let complete = per_frame.iter().filter(|&&n| n == PACKETS_PER_FRAME).count();
    let packets: Vec<_> = run.packets.into_iter().map(|p| p.packet).collect();
    let mut buf = Vec::new();
    write_capture(&mut buf, &packets).invalid()?;
    let path = out_dir.join("capture.bin");
    write_bytes(&path, &buf)?;
    let mut out = String::new();
    for name in ["scene.json", "images/", "trace.csv", "registry.json", "db.irdb", "capture.bin"] {
        let _ = writeln!(out, "wrote {}", out_dir.join(name).display());
    }
    let _ = writeln!(out, "capture packets={} frames_started={} frames_complete={complete}",
        packets.len(),
        run.frames_started
    );
    Ok(out)
}
