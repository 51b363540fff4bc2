use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use linimpact::app::commands;
use linimpact::app::config::{Experiment, FlowModel, PipelineConfig};
use linimpact::app::{emit_report, run_experiment};
use linimpact::{Error, Result, TimeUnit};

#[derive(Parser)]
#[command(name = "linimpact", version, about = "Kyle-model and propagator-model price impact toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    ridge: Option<f64>,
    #[arg(long, global = true)]
    max_lag: Option<usize>,
    /// Number of simulated steps.
    #[arg(long, global = true)]
    length: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FlowArg {
    White,
    Ar1,
    Powerlaw,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitArg {
    Step,
    Min,
    Day,
    Month,
    Year,
}

impl From<UnitArg> for TimeUnit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Step => TimeUnit::Step,
            UnitArg::Min => TimeUnit::Minute,
            UnitArg::Day => TimeUnit::Day,
            UnitArg::Month => TimeUnit::Month,
            UnitArg::Year => TimeUnit::Year,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a flow series and the prices an exponential kernel produces.
    Generate {
        #[arg(long, value_enum)]
        flow: Option<FlowArg>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Calibrate propagator kernels from price and flow series.
    CalibratePropagator {
        #[arg(long, requires = "flows")]
        prices: Option<PathBuf>,
        #[arg(long, requires = "prices")]
        flows: Option<PathBuf>,
        /// Coarse-graining ratios, comma separated.
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<usize>>,
    },
    /// Solve the stationary Kyle equilibrium for an AR(1) signal.
    CalibrateKyle {
        /// Signal mean-reversion time in steps.
        #[arg(long)]
        tau_f: Option<f64>,
        #[arg(long, value_enum)]
        flow: Option<FlowArg>,
    },
    /// Coarse-grain a series file by an integer ratio.
    Coarsen {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ratio: usize,
    },
    /// Remove a causal log-growth trend from a positive series file.
    Detrend {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, requires = "window_unit")]
        window: Option<f64>,
        #[arg(long, value_enum, requires = "window")]
        window_unit: Option<UnitArg>,
    },
    /// Run a named experiment pipeline.
    Experiment {
        /// universality, lowfreq_table1, multiscale_fig2, phi_fig4 or appendixB
        name: String,
        #[arg(long)]
        monthly_csv: Option<PathBuf>,
        #[arg(long)]
        binned_csv: Option<PathBuf>,
    },
}

fn flow_model(f: FlowArg) -> FlowModel {
    match f {
        FlowArg::White => FlowModel::White,
        FlowArg::Ar1 => FlowModel::Ar1,
        FlowArg::Powerlaw => FlowModel::Powerlaw,
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(r) = common.ridge {
        cfg.calibration.ridge = r;
    }
    if let Some(l) = common.max_lag {
        cfg.calibration.max_lag = Some(l);
        cfg.kyle.max_lag = l;
    }
    if let Some(n) = common.length {
        cfg.synthetic.length = Some(n);
    }
    Ok(cfg)
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Generate { flow, beta } => {
            if let Some(f) = flow {
                cfg.synthetic.flow = flow_model(f);
            }
            if let Some(b) = beta {
                cfg.synthetic.beta = b;
            }
            cfg.validate()?;
            print_paths(&commands::generate_market(&cfg, &cfg.out)?);
        }
        Command::CalibratePropagator { prices, flows, scales } => {
            if let Some(s) = scales {
                cfg.calibration.scales = s;
            }
            cfg.validate()?;
            let (p, q) = commands::load_market(&cfg, prices.as_deref(), flows.as_deref())?;
            let bundle = commands::calibrate_propagator(&cfg, &p, &q)?;
            print_paths(&emit_report(&bundle, &cfg.out)?);
        }
        Command::CalibrateKyle { tau_f, flow } => {
            if let Some(t) = tau_f {
                cfg.kyle.tau_f = t;
            }
            if let Some(f) = flow {
                cfg.synthetic.flow = flow_model(f);
            }
            cfg.validate()?;
            let bundle = commands::calibrate_kyle(&cfg)?;
            print_paths(&emit_report(&bundle, &cfg.out)?);
        }
        Command::Coarsen { input, ratio } => {
            cfg.validate()?;
            let path = commands::coarsen_file(&cfg, &input, ratio, &cfg.out)?;
            print_paths(&[path]);
        }
        Command::Detrend { input, window, window_unit } => {
            cfg.validate()?;
            let w = window.zip(window_unit.map(TimeUnit::from));
            print_paths(&commands::detrend_file(&cfg, &input, w, &cfg.out)?);
        }
        Command::Experiment { name, monthly_csv, binned_csv } => {
            cfg.experiment = Some(name.parse::<Experiment>()?);
            if monthly_csv.is_some() {
                cfg.lowfreq.monthly_csv = monthly_csv;
            }
            if binned_csv.is_some() {
                cfg.highfreq.binned_csv = binned_csv;
            }
            let bundle = run_experiment(&cfg)?;
            for (k, v) in &bundle.scalars {
                log::info!("{k} = {v}");
            }
            let out: &Path = &cfg.out;
            print_paths(&emit_report(&bundle, out).map_err(|e| e.in_stage("emit report"))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
