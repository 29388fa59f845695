use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fusecurr::config::TrainConfig;
use fusecurr::degrade::{degrade_image, DegradationParams};
use fusecurr::imgio::{load_pgm, save_pgm};
use fusecurr::trainer::{evaluate, make_synthetic_dataset, metrics_csv, metrics_table, run_pretrain, train, Fuser};
use fusecurr::{Error, Result};

#[derive(Parser)]
#[command(name = "fusecurr", version, about = "Curriculum distillation for infrared/visible image fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic IR/VI dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        pairs: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the student against the teacher only.
    Pretrain(ConfigArgs),
    /// Pretrain, then run the agent-driven curriculum.
    Train(ConfigArgs),
    /// Fuse every pair of a dataset and tabulate metrics.
    Eval {
        /// Student checkpoint, or `rule` for the rule-based teacher.
        #[arg(long)]
        ckpt: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics table for every PGM in a directory.
    Metrics {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to look for `<stem>_ir.pgm` / `<stem>_vi.pgm` (defaults to --data).
        #[arg(long)]
        sources: Option<PathBuf>,
    },
    /// Apply the degradation pipeline to one image.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        blur: f64,
        #[arg(long, default_value_t = 0.0)]
        compress: f64,
        #[arg(long, default_value_t = 0.5)]
        brightness: f64,
        #[arg(long, default_value_t = 0.5)]
        contrast: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Config file plus per-key overrides.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset_dir: Option<String>,
    #[arg(long)]
    teacher: Option<String>,
    #[arg(long)]
    student_lr: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    agent_lr: Option<String>,
    #[arg(long)]
    pretrain_epochs: Option<String>,
    #[arg(long)]
    train_epochs: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    steps_per_episode: Option<String>,
    #[arg(long)]
    crop: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    baseline_enabled: Option<String>,
    #[arg(long)]
    log_path: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None => TrainConfig::default(),
        };
        let overrides = [
            ("dataset_dir", &self.dataset_dir),
            ("teacher", &self.teacher),
            ("student_lr", &self.student_lr),
            ("batch_size", &self.batch_size),
            ("agent_lr", &self.agent_lr),
            ("pretrain_epochs", &self.pretrain_epochs),
            ("train_epochs", &self.train_epochs),
            ("p", &self.p),
            ("steps_per_episode", &self.steps_per_episode),
            ("crop", &self.crop),
            ("seed", &self.seed),
            ("baseline_enabled", &self.baseline_enabled),
            ("log_path", &self.log_path),
            ("out_dir", &self.out_dir),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, pairs, size, seed } => {
            let files = make_synthetic_dataset(&out, pairs, size, seed)?;
            println!("wrote {} images to {}", files.len(), out.display());
        }
        Command::Pretrain(args) => {
            let cfg = args.resolve()?;
            if args.dump_config {
                print!("{}", cfg.dump());
                return Ok(());
            }
            let (_, means) = run_pretrain(&cfg)?;
            for (e, m) in means.iter().enumerate() {
                println!("pretrain epoch {e}: mean l_t {m}");
            }
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            if args.dump_config {
                print!("{}", cfg.dump());
                return Ok(());
            }
            let report = train(&cfg)?;
            if let Some(m) = report.pretrain_lt.last() {
                println!("pretrain final mean l_t {m}");
            }
            println!("{} training steps logged to {}", report.rows.len(), cfg.log_path.display());
        }
        Command::Eval { ckpt, data, out } => {
            let rows = evaluate(&Fuser::from_arg(&ckpt)?, &data, &out)?;
            println!("evaluated {} pairs into {}", rows.len() - 1, out.display());
        }
        Command::Metrics { data, out, sources } => {
            let rows = metrics_table(&data, sources.as_ref().unwrap_or(&data))?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&out, metrics_csv(&rows))?;
            println!("{} rows written to {}", rows.len(), out.display());
        }
        Command::Degrade { input, out, blur, compress, brightness, contrast, noise, seed } => {
            let params = DegradationParams::new(blur, compress, brightness, contrast, noise)?;
            let img = load_pgm(&input)?;
            save_pgm(&degrade_image(&img, &params, seed), &out, 255)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(2)
        }
    }
}

fn report(e: &Error) {
    eprintln!("error: {}: {e}", e.kind());
}
