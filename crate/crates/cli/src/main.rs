mod commands;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "iris", version, about = "Camera ring smart-home controller toolkit")]
pub struct Cli {
    /// Seed for every randomized path.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON file with default `registry` and `db` paths.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Reassemble frames from a packet capture.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the full ring-to-device pipeline over a scripted scenario.
    Simulate(SimulateArgs),
    /// Recognize gestures in an IMU trace.
    Gesture {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Rank devices for a stored query embedding.
    Resolve {
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        class: Option<String>,
    },
    /// Embed an image and store the query.
    Embed {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Manage reference embeddings.
    Db {
        #[command(subcommand)]
        action: DbAction,
    },
    /// Bandwidth, latency and battery models.
    Budget {
        #[command(subcommand)]
        model: BudgetModel,
    },
    /// Write a ready-to-run example household.
    Demo {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub imu: PathBuf,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub db: Option<PathBuf>,
    /// Also write the timeline here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Save the reference database after corrections.
    #[arg(long)]
    pub db_out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum DbAction {
    /// Embed an image as a new reference for a device.
    Add {
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Device UUID or name.
        #[arg(long)]
        device: String,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value = "")]
        label: String,
        #[arg(long, default_value_t = 0)]
        at: u64,
    },
    List {
        #[arg(long)]
        db: Option<PathBuf>,
    },
    /// Store a misresolved query as a reference of the right device.
    Undo {
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        device: String,
        #[arg(long, default_value_t = 0)]
        at: u64,
    },
}

#[derive(Subcommand, Debug)]
pub enum BudgetModel {
    Throughput {
        #[arg(long)]
        table: bool,
    },
    Latency {
        #[arg(long)]
        table: bool,
        #[arg(long)]
        db_size: Option<usize>,
        /// Class partition size; enables scoping.
        #[arg(long)]
        partition: Option<usize>,
    },
    Battery {
        #[arg(long)]
        table: bool,
        /// Fraction of time asleep; the table defaults to 0.5, single values to 0.
        #[arg(long)]
        sleep_fraction: Option<f64>,
        #[arg(long)]
        gestures_per_hour: Option<u32>,
        /// Use the measured powers instead of the quoted currents.
        #[arg(long)]
        measured: bool,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IRIS_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                std::process::exit(0);
            }
            let _ = e.print();
            eprintln!("{}", CliError::usage(e.kind()).to_json_line());
            std::process::exit(1);
        }
    };
    if let Err(e) = commands::run(cli) {
        log::debug!("{e}");
        eprintln!("{}", e.to_json_line());
        std::process::exit(e.kind.exit_code());
    }
}
