use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

/// Health state estimation over a personal event and sensor store.
#[derive(Debug, Parser)]
#[command(name = "hse", version, about)]
pub struct Cli {
    /// Store directory (overrides `store` in the config file)
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,

    /// `key = value` settings file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the initial graph block for an intent
    Init(InitArgs),
    /// Append activity CSVs, locations, sensor readings or observations
    Ingest(IngestArgs),
    /// Check or run interface-event rules
    #[command(subcommand)]
    Rules(RulesCommand),
    /// Run the daily update over a date range
    Update(UpdateArgs),
    #[command(subcommand)]
    Query(QueryCommand),
    #[command(subcommand)]
    Learn(LearnCommand),
    #[command(subcommand)]
    Report(ReportCommand),
    /// Print serialized engine state
    #[command(subcommand)]
    State(StateCommand),
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Free-text intent used to pick a lamina, e.g. "cycling"
    #[arg(long)]
    pub intent: String,
    /// Knowledge file (overrides `knowledge` in the config)
    #[arg(long)]
    pub knowledge: Option<PathBuf>,
    /// Athlete profile JSON
    #[arg(long)]
    pub profile: PathBuf,
    /// Lamina name when the intent matches more than one
    #[arg(long)]
    pub lamina: Option<String>,
    /// Genotype as rsid=GENOTYPE; repeatable
    #[arg(long = "genotype", value_name = "RSID=GT")]
    pub genotypes: Vec<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Activity CSV files
    pub files: Vec<PathBuf>,
    /// Location CSV (t,lat,lon[,alt])
    #[arg(long)]
    pub locations: Option<PathBuf>,
    /// Sensor reading CSV
    #[arg(long)]
    pub sensors: Option<PathBuf>,
    /// Observation CSV (t,path,value)
    #[arg(long)]
    pub observations: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum RulesCommand {
    /// Parse a rule file and report problems
    Check { file: PathBuf },
    /// Evaluate a rule file over the store and record interface events
    Run {
        file: PathBuf,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
    },
}

#[derive(Debug, Args)]
pub struct UpdateArgs {
    #[arg(long)]
    pub from: NaiveDate,
    #[arg(long)]
    pub to: NaiveDate,
    /// Rule file evaluated on each activity (overrides `rules` in the config)
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RangeArgs {
    #[arg(long)]
    pub from: NaiveDate,
    #[arg(long)]
    pub to: NaiveDate,
}

#[derive(Debug, Subcommand)]
pub enum QueryCommand {
    /// Distance from the day's state to a region of interest
    Readiness {
        /// Region label; all regions of the lamina when omitted
        #[arg(long)]
        roi: Option<String>,
        /// Day to read; the latest updated day when omitted
        #[arg(long)]
        day: Option<NaiveDate>,
    },
    /// Per-minute pollutant intake for one activity
    Exposure {
        #[arg(long)]
        activity: String,
    },
    /// Daily healthy/pathological gene balance
    Heart(RangeArgs),
    /// Daily stroke volume
    Sv(RangeArgs),
}

#[derive(Debug, Subcommand)]
pub enum LearnCommand {
    /// Fit the HR to power edge from gated parallel observations
    Edges {
        /// End of the trailing window; the last activity day when omitted
        #[arg(long)]
        as_of: Option<NaiveDate>,
    },
    /// Fuse VO2max estimates from training load, active time and VAM
    Fusion,
    /// Holdout error of trailing-mean models across memory horizons
    Memory {
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,42,60,80,100")]
        horizons: Vec<u32>,
        /// Feature to sweep: trimp or active_time
        #[arg(long, default_value = "trimp")]
        feature: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Critical power curve with region boundaries
    Cp {
        #[arg(long)]
        day: NaiveDate,
        /// Log-spaced curve points between 1 s and 5 h
        #[arg(long, default_value_t = 60)]
        points: usize,
    },
    /// Stored daily reports
    Daily(RangeArgs),
}

#[derive(Debug, Subcommand)]
pub enum StateCommand {
    /// Flattened attributes of a day's block, or of the initial block
    Dump {
        #[arg(long)]
        day: Option<NaiveDate>,
    },
}
