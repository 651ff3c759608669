use clap::{Args, Parser, Subcommand, ValueEnum};

use margin_pursuit::calibration::{build_psi_table, DEFAULT_GRID_SIZE};
use margin_pursuit::cubic::{solve_cubic, CubicPoly};
use margin_pursuit::data::{
    fmt_f64, gaussian_fixture, min_max_scale, parse_csv, parse_libsvm, Dataset,
};
use margin_pursuit::harness::{parse_experiment_config, run_experiment, run_single};
use margin_pursuit::trainer::{Algorithm, Init, Mode, StepRule, TrainConfig};
use margin_pursuit::ScaledLoss;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "margin-pursuit",
    about = "Margin-level pursuit for binary linear classification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a single model and emit its trace CSV and weight dump.
    Train(TrainArgs),
    /// Run a multi-trial sweep from a key = value config file.
    Experiment(ExperimentArgs),
    /// Emit the calibration transform table as CSV (`u,psi`).
    PsiTable(PsiTableArgs),
    /// Solve a cubic polynomial (debugging aid).
    SolveCubic(CubicArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    MarginPursuit,
    Pegasos,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Batch,
    Stochastic,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Libsvm,
    Csv,
}

#[derive(Args)]
struct TrainArgs {
    /// Training data file (LIBSVM or CSV); omit to use the synthetic fixture.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Evaluation data file for per-checkpoint test error.
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Label value mapped to +1; all others map to -1.
    #[arg(long, default_value_t = 1.0)]
    positive_label: f64,
    /// Synthetic fixture shape when no data file is given: n,d,separation.
    #[arg(long, default_value = "200,5,3.0")]
    synth: String,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::MarginPursuit)]
    algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Stochastic)]
    mode: ModeArg,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Initial scale.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    /// Fixed step size (batch mode); stochastic mode uses the decaying schedule.
    #[arg(long)]
    step_size: Option<f64>,
    /// Iteration budget in epoch-equivalents (n gradients each).
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Epoch at which to apply the one-shot quantile rescale.
    #[arg(long)]
    rescale_at_epoch: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 10.0)]
    k_bias: f64,
    /// Apply per-feature min-max scaling to [0,1].
    #[arg(long, default_value_t = false)]
    normalize: bool,
    /// Write the trace CSV here (stdout when omitted).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the final weights here, one value per line.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Key = value experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Base seed for all trials (mandatory for reproducibility).
    #[arg(long)]
    seed: u64,
    /// Output directory override.
    #[arg(long)]
    outdir: Option<PathBuf>,
}

#[derive(Args)]
struct PsiTableArgs {
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Grid size.
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid: usize,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CubicArgs {
    #[arg(long, allow_hyphen_values = true)]
    a: f64,
    #[arg(long, allow_hyphen_values = true)]
    b: f64,
    #[arg(long, allow_hyphen_values = true)]
    c: f64,
    #[arg(long, allow_hyphen_values = true)]
    d: f64,
}

fn load_file(
    path: &PathBuf,
    format: Option<FormatArg>,
    positive_label: f64,
) -> Result<Dataset, margin_pursuit::Error> {
    let text = fs::read_to_string(path)?;
    let is_csv = match format {
        Some(FormatArg::Csv) => true,
        Some(FormatArg::Libsvm) => false,
        None => path.extension().map(|e| e == "csv").unwrap_or(false),
    };
    if is_csv {
        parse_csv(&text, move |l| l == positive_label)
    } else {
        parse_libsvm(&text, move |l| l == positive_label)
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), margin_pursuit::Error> {
    let train_ds = match &args.data {
        Some(path) => load_file(path, args.format, args.positive_label)?,
        None => {
            let parts: Vec<&str> = args.synth.split(',').collect();
            if parts.len() != 3 {
                return Err(margin_pursuit::Error::Config(
                    "--synth expects n,d,separation".into(),
                ));
            }
            let n = parts[0].trim().parse().map_err(|_| {
                margin_pursuit::Error::Config(format!("bad synth n `{}`", parts[0]))
            })?;
            let d = parts[1].trim().parse().map_err(|_| {
                margin_pursuit::Error::Config(format!("bad synth d `{}`", parts[1]))
            })?;
            let sep = parts[2].trim().parse().map_err(|_| {
                margin_pursuit::Error::Config(format!("bad synth separation `{}`", parts[2]))
            })?;
            gaussian_fixture(n, d, sep, args.seed)?
        }
    };
    let train_ds = if args.normalize {
        min_max_scale(&train_ds)?
    } else {
        train_ds
    };
    let test_ds = match &args.test_data {
        Some(path) => Some(load_file(path, args.format, args.positive_label)?),
        None => None,
    };

    let mut cfg = TrainConfig::new(ScaledLoss::new(args.scale, args.gamma)?);
    cfg.algorithm = match args.algorithm {
        AlgorithmArg::MarginPursuit => Algorithm::MarginPursuit,
        AlgorithmArg::Pegasos => Algorithm::Pegasos,
    };
    cfg.mode = match args.mode {
        ModeArg::Batch => Mode::Batch,
        ModeArg::Stochastic => Mode::Stochastic,
    };
    cfg.lambda = args.lambda;
    cfg.seed = args.seed;
    cfg.delta = args.delta;
    cfg.k_bias = args.k_bias;
    cfg.init = Init::RandomUniform;
    cfg.step = match (cfg.mode, args.step_size) {
        (Mode::Batch, Some(a)) => StepRule::Fixed(a),
        (Mode::Batch, None) => StepRule::Fixed(0.1),
        (Mode::Stochastic, Some(a)) => StepRule::Fixed(a),
        (Mode::Stochastic, None) => StepRule::RegularizedDecay,
    };
    let n = train_ds.n();
    cfg.iters = match cfg.mode {
        Mode::Batch => args.epochs,
        Mode::Stochastic => args.epochs * n.max(1),
    };
    cfg.rescale_at = args.rescale_at_epoch.map(|e| e * n.max(1));

    let out = run_single(&train_ds, test_ds.as_ref(), &cfg)?;
    match &args.trace {
        Some(path) => fs::write(path, &out.trace_csv)?,
        None => print!("{}", out.trace_csv),
    }
    if let Some(path) = &args.weights {
        let dump: String = out
            .weights
            .iter()
            .map(|w| format!("{}\n", fmt_f64(*w)))
            .collect();
        fs::write(path, dump)?;
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), margin_pursuit::Error> {
    let text = fs::read_to_string(&args.config)?;
    let cfg = parse_experiment_config(&text, args.seed, args.outdir)?;
    let files = run_experiment(&cfg)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn cmd_psi_table(args: PsiTableArgs) -> Result<(), margin_pursuit::Error> {
    let loss = ScaledLoss::new(args.scale, args.gamma)?;
    let table = build_psi_table(&loss, args.grid)?;
    match &args.out {
        Some(path) => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            fs::write(path, buf)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            table.write_csv(&mut stdout)?;
        }
    }
    Ok(())
}

fn cmd_solve_cubic(args: CubicArgs) -> Result<(), margin_pursuit::Error> {
    let poly = CubicPoly::new(args.a, args.b, args.c, args.d)?;
    let roots = solve_cubic(&poly, 1e-9)?;
    println!("discriminant,{}", fmt_f64(roots.discriminant));
    println!("root,multiplicity");
    for (value, mult) in &roots.roots {
        println!("{},{mult}", fmt_f64(*value));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::PsiTable(args) => cmd_psi_table(args),
        Command::SolveCubic(args) => cmd_solve_cubic(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
