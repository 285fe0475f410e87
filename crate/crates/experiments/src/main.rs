use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use jsc_core::digital::{CodedModConfig, LinkMode, QamOrder};
use jsc_core::hops::HopChain;
use jsc_experiments::config::{Scheme, TrainConfig, TransportConfig};
use jsc_experiments::dataset::{data_dir, load_dataset, DatasetConfig, DatasetName, Split};
use jsc_experiments::models::Model;
use jsc_experiments::report::{emit_report, plot_per, read_json, write_csv, write_json, DataFormat, FigureKind, PlotFormat};
use jsc_experiments::run::{train_run, RunDir};
use jsc_experiments::sweeps::{self, HopSweepModels, PerRecord, ResultRecord};

#[derive(Parser)]
#[command(name = "jsc", version, about = "Hybrid JSCC multi-hop image transmission experiments")]
struct Cli {
    /// Output directory for configs, checkpoints, records and plots.
    #[arg(long, global = true, default_value = "runs/default")]
    run_dir: PathBuf,
    /// Dataset cache directory (overrides JSC_DATA_DIR).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model from a TOML config.
    Train(TrainArgs),
    /// Evaluate one checkpoint over a route.
    Eval(EvalArgs),
    /// PSNR against hop count for several schemes.
    HopSweep(HopSweepArgs),
    /// Train and evaluate a grid of JSC models over SNR and lambda.
    RdSweep(RdSweepArgs),
    /// Evaluate a JSC model at first-hop SNRs it was not trained for.
    Mismatch(MismatchArgs),
    /// Plot a JSON record file.
    Plot(PlotArgs),
    /// Packet error rate of the LDPC + QAM chain against SNR.
    PerSweep(PerArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    snr_s: Option<f64>,
    #[arg(long)]
    n_hops: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Point-to-point checkpoint that initializes the codec of a JSC model.
    #[arg(long)]
    init_from: Option<PathBuf>,
    /// Start from the reduced desk-scale schedule instead of the full one.
    #[arg(long)]
    desk: bool,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Take dataset settings from the `[data]` section of a training config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "cifar10")]
    dataset: DatasetName,
    /// Side length of synthetic images.
    #[arg(long, default_value_t = 32)]
    synthetic_size: usize,
    /// Limit the number of test images.
    #[arg(long)]
    test_images: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DataArgs {
    fn config(&self) -> anyhow::Result<DatasetConfig> {
        let base = match &self.config {
            Some(p) => TrainConfig::load(p)?.data,
            None => DatasetConfig {
                name: self.dataset,
                synthetic_size: self.synthetic_size,
                ..DatasetConfig::default()
            },
        };
        Ok(DatasetConfig {
            max_test: self.test_images.or(base.max_test),
            ..base
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Transport {
    /// Error-free pipe at R_N = 2 bits per channel use.
    Ideal,
    /// Rate-1/2 LDPC with 16-QAM on every core hop.
    Coded,
}

impl Transport {
    fn core(self) -> anyhow::Result<LinkMode> {
        Ok(match self {
            Transport::Ideal => TransportConfig::ideal_core().build()?,
            Transport::Coded => TransportConfig::Coded(CodedModConfig::default()).build()?,
        })
    }

    fn source(self) -> anyhow::Result<LinkMode> {
        Ok(match self {
            Transport::Ideal => TransportConfig::Ideal { efficiency: 1.0 }.build()?,
            Transport::Coded => TransportConfig::coded_source().build()?,
        })
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 2)]
    n_hops: usize,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    snr_s: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    snr_n: f64,
    #[arg(long, value_enum, default_value = "ideal")]
    transport: Transport,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct HopSweepArgs {
    #[arg(long)]
    jsc: Vec<PathBuf>,
    #[arg(long)]
    af: Option<PathBuf>,
    /// PF checkpoints, one per trained hop count.
    #[arg(long)]
    pf: Vec<PathBuf>,
    /// Point-to-point DeepJSCC checkpoint for the naive quantization baselines.
    #[arg(long)]
    p2p: Option<PathBuf>,
    /// Bits per real dimension of the Lloyd baseline; the 32-bit bound is always added.
    #[arg(long, default_value_t = 4)]
    bits: u32,
    #[arg(long, default_value_t = 1_000_000)]
    design_samples: usize,
    /// Image codec checkpoint for the fully digital baseline.
    #[arg(long)]
    codec: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    n_max: usize,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    snr_s: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    snr_n: f64,
    #[arg(long, value_enum, default_value = "ideal")]
    transport: Transport,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct RdSweepArgs {
    /// Base training config; scheme, SNR and lambda are overridden per cell.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "-1,2,5,8", allow_hyphen_values = true)]
    snrs: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "200,400,800,1600,3200")]
    lambdas: Vec<f64>,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    snr_n: f64,
    /// Reuse checkpoints already present in the run directory.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    test_images: Option<usize>,
}

#[derive(Args)]
struct MismatchArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,8", allow_hyphen_values = true)]
    test_snrs: Vec<f64>,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    snr_n: f64,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long, value_enum)]
    kind: FigureKind,
    #[arg(long, value_enum, default_value = "svg")]
    format: PlotFormat,
}

#[derive(Args)]
struct PerArgs {
    #[arg(long, default_value_t = 16)]
    order: u32,
    #[arg(long, value_delimiter = ',', default_value = "4,5,6,7,8,9,10", allow_hyphen_values = true)]
    snrs: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    blocks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parity-check matrix in the sparse text format.
    #[arg(long)]
    parity: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let data_root = cli.data_dir.clone().unwrap_or_else(data_dir);
    let run = RunDir::create(&cli.run_dir)?;
    match cli.cmd {
        Command::Train(a) => train(a, &run, &data_root),
        Command::Eval(a) => eval(a, &run, &data_root),
        Command::HopSweep(a) => hop_sweep(a, &run, &data_root),
        Command::RdSweep(a) => rd_sweep(a, &run, &data_root),
        Command::Mismatch(a) => mismatch(a, &run, &data_root),
        Command::Plot(a) => plot(a, &run),
        Command::PerSweep(a) => per(a, &run),
    }
}

fn train(a: TrainArgs, run: &RunDir, data_root: &Path) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None if a.desk => TrainConfig::desk_scale(),
        None => TrainConfig::default(),
    };
    if let Some(s) = a.scheme {
        cfg.scheme = s;
    }
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(s) = a.snr_s {
        cfg.snr_s_db = s;
    }
    if let Some(n) = a.n_hops {
        cfg.n_hops = n;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.init_from.is_some() {
        cfg.init_from = a.init_from;
    }
    let (path, out) = train_run(&cfg, run, data_root)?;
    println!(
        "saved {} (best epoch {}, validation loss {:.5})",
        path.display(),
        out.best_epoch,
        out.best_val_loss
    );
    Ok(())
}

fn checkpoint_id(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn print_records(records: &[ResultRecord]) {
    println!("{:<18} {:>4} {:>7} {:>7} {:>8} {:>7} {:>8}", "scheme", "n", "SNR_s", "PSNR", "+-", "bpp", "k'");
    for r in records {
        println!(
            "{:<18} {:>4} {:>7.1} {:>7.2} {:>8.2} {:>7.3} {:>8.1}",
            r.scheme, r.n_hops, r.snr_s_test_db, r.psnr_mean, r.psnr_std, r.bpp, r.k_prime
        );
    }
}

fn eval(a: EvalArgs, run: &RunDir, data_root: &Path) -> anyhow::Result<()> {
    let test = load_dataset(&a.data.config()?, Split::Test, data_root)?;
    let (model, _) = Model::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let core = a.transport.core()?;
    let rec = match &model {
        Model::Jsc(m) => sweeps::eval_jsc(m, &test, &HopChain::hybrid(a.snr_s, a.snr_n, a.n_hops, core), a.data.seed)?,
        Model::Analog(m) => sweeps::eval_analog(m, &test, &HopChain::analog(a.snr_s, a.snr_n, a.n_hops), a.data.seed)?,
        Model::Codec(m) => {
            let route = HopChain::digital(a.snr_s, a.snr_n, a.n_hops, a.transport.source()?, core);
            sweeps::eval_digital(&m.codec, &test, &route, a.data.seed)?
        }
    }
    .with_checkpoint(checkpoint_id(&a.checkpoint));
    print_records(std::slice::from_ref(&rec));
    let name = format!("eval_{}_n{}", checkpoint_id(&a.checkpoint), a.n_hops);
    emit_report(&run.root, &name, &[rec], &[DataFormat::Csv, DataFormat::Json], None, &[])?;
    Ok(())
}

fn hop_sweep(a: HopSweepArgs, run: &RunDir, data_root: &Path) -> anyhow::Result<()> {
    let test = load_dataset(&a.data.config()?, Split::Test, data_root)?;
    let jsc = a
        .jsc
        .iter()
        .map(|p| Ok(Model::load(p)?.0.into_jsc()?))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let af = a.af.as_ref().map(|p| Model::load(p).and_then(|m| m.0.into_analog())).transpose()?;
    let mut pf = BTreeMap::new();
    for p in &a.pf {
        let m = Model::load(p)?.0.into_analog()?;
        pf.insert(m.config().n_hops, m);
    }
    let p2p = a.p2p.as_ref().map(|p| Model::load(p).and_then(|m| m.0.into_analog())).transpose()?;
    let codec = a.codec.as_ref().map(|p| Model::load(p).and_then(|m| m.0.into_codec())).transpose()?;
    let mut quantizers = Vec::new();
    if let Some(p) = &p2p {
        let design_cfg = DatasetConfig {
            max_val: None,
            ..a.data.config()?
        };
        let design = load_dataset(&design_cfg, Split::Val, data_root)?;
        let q = sweeps::design_quantizer(p, &design, a.snr_s, a.bits, a.design_samples, a.data.seed ^ 0xd5)?;
        write_json(&run.record(&format!("quantizer_{}bit", a.bits), "json"), std::slice::from_ref(&q))?;
        quantizers.push(q);
        quantizers.push(jsc_core::baselines::NaiveQuantizer::Float32);
    }
    let models = HopSweepModels {
        jsc: jsc.iter().collect(),
        af: af.as_ref(),
        pf: pf.iter().map(|(n, m)| (*n, m)).collect(),
        p2p: p2p.as_ref(),
        quantizers,
        digital: match &codec {
            Some(c) => Some((&c.codec as &dyn jsc_core::baselines::ImageCodec<f32>, a.transport.source()?)),
            None => None,
        },
    };
    let recs = sweeps::hop_sweep(&models, a.n_max, &a.transport.core()?, a.snr_s, a.snr_n, &test, a.data.seed)?;
    print_records(&recs);
    report(run, "hop_sweep", &recs, FigureKind::Hops)
}

fn report(run: &RunDir, name: &str, recs: &[ResultRecord], kind: FigureKind) -> anyhow::Result<()> {
    emit_report(&run.root, name, recs, &[DataFormat::Csv, DataFormat::Json], None, &[])?;
    // records are already safe on disk; a missing font only costs the figure
    if let Err(e) = emit_report(&run.root, name, recs, &[], Some(kind), &[PlotFormat::Svg, PlotFormat::Png]) {
        log::warn!("plotting {name} failed: {e}");
    }
    Ok(())
}

fn rd_sweep(a: RdSweepArgs, run: &RunDir, data_root: &Path) -> anyhow::Result<()> {
    let base = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    let mut models = Vec::new();
    for &snr in &a.snrs {
        for &lambda in &a.lambdas {
            let cfg = TrainConfig {
                scheme: Scheme::Jsc,
                snr_s_db: snr,
                lambda,
                ..base.clone()
            };
            let path = run.checkpoint(&cfg.tag());
            if !(a.resume && path.exists()) {
                train_run(&cfg, run, data_root)?;
            }
            models.push(Model::load(&path)?.0.into_jsc()?);
        }
    }
    let data = DatasetConfig {
        max_test: a.test_images.or(base.data.max_test),
        ..base.data.clone()
    };
    let test = load_dataset(&data, Split::Test, data_root)?;
    let refs: Vec<_> = models.iter().collect();
    let recs = sweeps::rd_sweep(&refs, a.snr_n, &Transport::Ideal.core()?, &test, base.seed)?;
    print_records(&recs);
    report(run, "rd_sweep", &recs, FigureKind::RateDistortion)
}

fn mismatch(a: MismatchArgs, run: &RunDir, data_root: &Path) -> anyhow::Result<()> {
    let test = load_dataset(&a.data.config()?, Split::Test, data_root)?;
    let model = Model::load(&a.checkpoint)?.0.into_jsc()?;
    let recs: Vec<ResultRecord> =
        sweeps::mismatch_eval(&model, &a.test_snrs, a.snr_n, &Transport::Ideal.core()?, &test, a.data.seed)?
            .into_iter()
            .map(|r| r.with_checkpoint(checkpoint_id(&a.checkpoint)))
            .collect();
    print_records(&recs);
    report(run, "mismatch", &recs, FigureKind::Mismatch)
}

fn plot(a: PlotArgs, run: &RunDir) -> anyhow::Result<()> {
    let recs: Vec<ResultRecord> = read_json(&a.records)?;
    let name = checkpoint_id(&a.records);
    let written = emit_report(&run.root, &name, &recs, &[], Some(a.kind), &[a.format])?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn per(a: PerArgs, run: &RunDir) -> anyhow::Result<()> {
    let order = match a.order {
        4 => QamOrder::Qam4,
        16 => QamOrder::Qam16,
        o => bail!("unsupported QAM order {o} (use 4 or 16)"),
    };
    let scheme = CodedModConfig {
        order,
        parity_file: a.parity,
        ..CodedModConfig::default()
    }
    .build()?;
    let recs: Vec<PerRecord> = sweeps::per_sweep(&scheme, &a.snrs, a.blocks, a.seed)?;
    for r in &recs {
        println!("{:>5.1} dB  PER {:.2e}  ({} blocks)", r.snr_db, r.per, r.blocks);
    }
    let name = format!("per_{}qam", a.order);
    let header = ["qam_order", "code_rate", "block_length", "snr_db", "blocks", "per"];
    write_csv(&run.record(&name, "csv"), &recs, &header)?;
    write_json(&run.record(&name, "json"), &recs)?;
    for ext in ["svg", "png"] {
        if let Err(e) = plot_per(&run.plot(&name, ext), &recs) {
            log::warn!("plotting {name}.{ext} failed: {e}");
        }
    }
    Ok(())
}
