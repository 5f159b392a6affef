use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use ccid_core::confidence::ConfidenceModel;
use ccid_core::denoisers::DenoiserSpec;
use ccid_core::fixtures::{write_fixture_set, FIXTURE_SIDE};
use ccid_core::harness::{
    confidence_distribution, default_training_specs, load_dataset, train_confidence_model, weight_sweep,
    write_distribution, write_ood_csv, ConfidenceSource, DeepSource, ExperimentSpec, OodConfig, WeightGrid, DIST_BINS,
};
use ccid_core::transforms::Wavelet;
use ccid_core::{FusionMode, NoiseSpec, Schedule};
use ccid_service::{port_from_env, ServiceConfig, DEFAULT_MAX_SESSIONS};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ccid",
    version,
    about = "Controllable fusion of a reliable and a deep denoiser"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the fusion weight over a dataset and write CSV curves and fused images.
    Sweep(SweepArgs),
    /// Out-of-distribution table from a TOML case file.
    Ood(OodArgs),
    /// Histograms of ground-truth confidence across noise levels.
    ConfDist(ConfDistArgs),
    /// Fit the linear confidence surrogate and save it as JSON.
    FitConf(FitArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write the synthetic fixture images as PNG.
    Fixtures(FixtureArgs),
}

#[derive(Args)]
struct Pipeline {
    /// Directory of clean grayscale images (png, pgm).
    #[arg(long)]
    dataset: PathBuf,
    /// Noise model, e.g. gaussian:25, poisson:30, none.
    #[arg(long, default_value = "gaussian:25")]
    noise: NoiseSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reliable branch, e.g. gaussian:4, file:DIR, cmd:"prog {in} {out}".
    #[arg(long, default_value = "gaussian:4")]
    reliable: DenoiserSpec,
    /// Deep branch: file:DIR, cmd:"...", mock:identity|box3|corrupt_half, or clean.
    #[arg(long, default_value = "mock:identity")]
    deep: DeepSource,
    /// Clamp the deep image to [0, 255] before fusion.
    #[arg(long)]
    clamp_deep: bool,
    /// Run external denoiser commands concurrently.
    #[arg(long)]
    parallel_external: bool,
}

impl Pipeline {
    fn spec(&self) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(&self.dataset);
        spec.noise = self.noise;
        spec.noise.seed = self.seed;
        spec.reliable = self.reliable.clone();
        spec.deep = self.deep.clone();
        spec.clamp_deep = self.clamp_deep;
        spec.parallel_external = self.parallel_external;
        spec
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    pipeline: Pipeline,
    /// Fusion modes, repeatable or comma separated.
    #[arg(long, value_delimiter = ',', default_value = "dct")]
    mode: Vec<FusionMode>,
    /// Weights as start:stop:step, a comma list, or one value.
    #[arg(long, default_value = "0:1:0.05")]
    grid: WeightGrid,
    /// oracle, model:PATH, file:DIR, or none.
    #[arg(long, default_value = "none")]
    conf: ConfidenceSource,
    #[arg(long, default_value = "low-first")]
    schedule: Schedule,
    #[arg(long, default_value = "haar")]
    wavelet: Wavelet,
    /// Frequency spread scale of the DCT mask.
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Confidence threshold of the region weight.
    #[arg(long)]
    t: Option<f64>,
    /// Skip writing fused PNGs.
    #[arg(long)]
    no_images: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OodArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the output directory named in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfDistArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "gaussian:4")]
    reliable: DenoiserSpec,
    /// Deep branch; a {sigma} placeholder in file paths is filled per level.
    #[arg(long, default_value = "mock:box3")]
    deep: DeepSource,
    /// Noise levels as start:stop:step or a comma list.
    #[arg(long, default_value = "0:100:10")]
    sigmas: String,
    #[arg(long, default_value_t = DIST_BINS)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Training images; the built-in fixtures when omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Defaults to CCID_PORT, then 8787.
    #[arg(long)]
    port: Option<u16>,
    /// Directory with the built UI, served under /app.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_SESSIONS)]
    max_sessions: usize,
    /// Deep branch used when an upload carries no deep image.
    #[arg(long, default_value = "mock:box3")]
    deep: DenoiserSpec,
    /// Confidence model JSON; the built-in surrogate when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = FIXTURE_SIDE)]
    side: usize,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep(args) => sweep(args),
        Command::Ood(args) => ood(args),
        Command::ConfDist(args) => conf_dist(args),
        Command::FitConf(args) => fit_conf(args),
        Command::Serve(args) => serve(args),
        Command::Fixtures(args) => {
            for path in write_fixture_set(&args.out, args.side)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut spec = args.pipeline.spec();
    spec.modes = args.mode;
    spec.grid = args.grid;
    spec.conf = args.conf;
    spec.fusion.schedule = args.schedule;
    spec.fusion.wavelet = args.wavelet;
    if let Some(a) = args.a {
        spec.fusion.a = a;
    }
    if let Some(eps) = args.eps {
        spec.fusion.eps = eps;
    }
    if let Some(t) = args.t {
        spec.fusion.t = t;
    }
    spec.save_images = !args.no_images;
    spec.out = Some(args.out.clone());
    let report = weight_sweep(&spec)?;
    println!("{:>6} {:>9} {:>10} {:>8}", "w", "mode", "psnr_db", "ssim");
    for row in &report.rows {
        println!("{:>6.3} {:>9} {:>10.4} {:>8.5}", row.w, row.mode, row.psnr_db, row.ssim);
    }
    for f in &report.failures {
        eprintln!("skipped {}: {}", f.image, f.error);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn ood(args: OodArgs) -> Result<()> {
    let config = OodConfig::load(&args.config)?;
    let base = args.config.parent().unwrap_or_else(|| ".".as_ref());
    let Some(out) = args.out.or_else(|| config.out.as_ref().map(|p| base.join(p))) else {
        bail!("no output directory: pass --out or set `out` in the config");
    };
    let rows = ccid_core::harness::ood_eval(&config.cases(base)?)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("ood.csv");
    write_ood_csv(&rows, &path)?;
    println!(
        "{:<12} {:>9} {:>10} {:>10} {:>10} {:>10} {:>6}",
        "ood_type", "mode", "reliable", "deep", "ccid_d", "ccid", "best_w"
    );
    for r in &rows {
        println!(
            "{:<12} {:>9} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>6.2}",
            r.ood_type.as_str(),
            r.mode,
            r.reliable.psnr_db,
            r.deep.psnr_db,
            r.ccid_d.psnr_db,
            r.ccid.psnr_db,
            r.best_w
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn parse_levels(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let levels = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step): (f64, f64, f64) = (start.parse()?, stop.parse()?, step.parse()?);
            if !(step > 0.0) || stop < start {
                bail!("bad range {text:?}");
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| start + step * i as f64).collect()
        }
        _ => text
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<Vec<f64>, _>>()?,
    };
    if levels.is_empty() || levels.iter().any(|s| !s.is_finite() || *s < 0.0) {
        bail!("noise levels must be finite and non-negative: {text:?}");
    }
    Ok(levels)
}

fn conf_dist(args: ConfDistArgs) -> Result<()> {
    let sigmas = parse_levels(&args.sigmas)?;
    let mut spec = ExperimentSpec::new(&args.dataset);
    spec.noise.seed = args.seed;
    spec.reliable = args.reliable;
    spec.deep = args.deep;
    let images = load_dataset(&args.dataset)?;
    let rows = confidence_distribution(&spec, &images, &sigmas, args.bins)?;
    write_distribution(&rows, &args.out)?;
    println!(
        "{:>9} {:>6} {:>12} {:>12}",
        "denoiser", "sigma", "mean_region", "mean_image"
    );
    for r in &rows {
        println!(
            "{:>9} {:>6} {:>12.4} {:>12.4}",
            r.denoiser, r.sigma, r.mean_region, r.mean_image
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn fit_conf(args: FitArgs) -> Result<()> {
    let images = match &args.dataset {
        Some(dir) => load_dataset(dir)?,
        None => ccid_core::fixtures::fixture_set(FIXTURE_SIDE)
            .into_iter()
            .map(|(name, image)| ccid_core::harness::NamedImage::new(name, image))
            .collect(),
    };
    let (model, report) = train_confidence_model(&default_training_specs(), &images)?;
    model.save(&args.out)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let port = match args.port {
        Some(p) => p,
        None => port_from_env().map_err(anyhow::Error::msg)?,
    };
    let model = args.model.as_ref().map(ConfidenceModel::load).transpose()?;
    let config = ServiceConfig {
        max_sessions: args.max_sessions,
        static_dir: args.static_dir,
        default_deep: args.deep,
        model,
    };
    let addr = SocketAddr::new(args.host, port);
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("listening on http://{addr}");
    runtime.block_on(ccid_service::serve(addr, config))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn levels() {
        assert_eq!(parse_levels("0:100:10").unwrap().len(), 11);
        assert_eq!(parse_levels("5,15").unwrap(), vec![5.0, 15.0]);
        assert!(parse_levels("10:0:1").is_err());
        assert!(parse_levels("-1").is_err());
    }

    #[test]
    fn sweep_flags_parse() {
        let cli = Cli::try_parse_from([
            "ccid",
            "sweep",
            "--dataset",
            "d",
            "--mode",
            "dct,dwt",
            "--mode",
            "dwt-conf",
            "--conf",
            "oracle",
            "--deep",
            "clean",
            "--grid",
            "0:1:0.25",
            "--out",
            "o",
        ])
        .unwrap();
        let Command::Sweep(args) = cli.command else { panic!() };
        assert_eq!(args.mode, vec![FusionMode::Dct, FusionMode::Dwt, FusionMode::DwtConf]);
        assert_eq!(args.grid.weights(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(args.pipeline.deep, DeepSource::Clean);
        assert!(Cli::try_parse_from(["ccid", "sweep", "--dataset", "d", "--mode", "fft", "--out", "o"]).is_err());
    }
}
