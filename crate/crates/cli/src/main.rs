mod manifest;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ipdnn_core::em::{ForwardModel, MeasurementSet, PermittivityMap, Setup};
use ipdnn_core::inversion::{
    finetune_with, invert_with, relative_error, write_log_csv, InversionConfig, ReconstructionResult, RunOptions,
};
use ipdnn_core::net::{read_checkpoint, write_checkpoint, Activation};
use ipdnn_core::scenario::{self, Channel, SceneSpec, TubeGeometry};
use ipdnn_core::BinaryMask;
use num_complex::Complex64;
use serde::Serialize;

use manifest::{write_json, Recorder};

#[derive(Parser)]
#[command(name = "ipdnn", version, about = "Physics-driven neural network inverse scattering")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a built-in scene description.
    Preset(PresetArgs),
    /// Rasterize a scene and simulate its measurements.
    Generate(GenerateArgs),
    /// Reconstruct a permittivity map from measurements.
    Invert(InvertArgs),
    /// Train on measurements of a defect-free object and save the network.
    Pretrain(InvertArgs),
    /// Continue training a saved network on new measurements.
    Finetune(FinetuneArgs),
    /// Compare an estimate with the ground truth.
    Eval(EvalArgs),
    /// Render a permittivity map or mask as an image.
    Render(RenderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetKind {
    Disk,
    TwoDisks,
    Tube,
    TubeDefect,
    Austria,
}

#[derive(Args)]
struct PresetArgs {
    #[arg(value_enum)]
    kind: PresetKind,
    /// Output scene JSON.
    #[arg(long)]
    out: PathBuf,
    /// Cells per DOI side.
    #[arg(long, default_value_t = 32)]
    n_side: usize,
    /// Disk radius in metres.
    #[arg(long, default_value_t = 0.03)]
    radius: f64,
    /// Gap between the two disks in metres.
    #[arg(long, default_value_t = 0.01)]
    gap: f64,
    /// Real part of the object permittivity.
    #[arg(long, default_value_t = 2.0)]
    eps_re: f64,
    /// Imaginary part of the object permittivity.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    eps_im: f64,
}

#[derive(Args)]
struct GenerateArgs {
    /// Scene JSON.
    #[arg(long)]
    scene: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Noise level as a fraction of the measurement Frobenius norm.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulate on a finer grid with this many cells per side.
    #[arg(long)]
    fine_grid: Option<usize>,
}

#[derive(Args)]
struct InvertArgs {
    /// Measurement CSV.
    #[arg(long)]
    meas: PathBuf,
    /// Setup JSON the measurements were taken with.
    #[arg(long)]
    setup: PathBuf,
    /// Output run directory.
    #[arg(long)]
    out: PathBuf,
    /// Inversion config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ground-truth permittivity CSV for per-iteration relative error.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bound-penalty weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// Total-variation weight.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// glow, relu, leakyrelu, tanh or softsign.
    #[arg(long)]
    activation: Option<Activation>,
    /// Use only this many evenly spread transmitters.
    #[arg(long)]
    tx_subset: Option<usize>,
    /// Stop when the relative change of the total loss drops below this.
    #[arg(long)]
    stop_tol: Option<f64>,
}

#[derive(Args)]
struct FinetuneArgs {
    /// Checkpoint written by pretrain or invert.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    run: InvertArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth permittivity CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Estimated permittivity CSV.
    #[arg(long)]
    estimate: PathBuf,
    /// Also write the report to this JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Permittivity CSV to render as a heatmap.
    #[arg(long, conflicts_with = "mask", required_unless_present = "mask")]
    map: Option<PathBuf>,
    /// PBM mask to copy as a bilevel image.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Output image (.pgm for maps, .pbm for masks).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "re")]
    channel: Channel,
    /// Also write a colour-ramp PPM next to the PGM.
    #[arg(long)]
    color: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for unreadable or malformed inputs, 3 for invalid configuration or
/// mismatched artifacts, 4 for numerical failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    use ipdnn_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_) | E::Parse { .. } | E::Json(_) | E::Shape(_) => 2,
                E::Config(_) | E::Fingerprint { .. } | E::InvalidSetup(_) => 3,
                E::DegenerateContrast { .. } | E::NonConvergence(_) | E::NonFinite { .. } | E::EmptyMask => 4,
            };
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 3;
        }
    }
    2
}

/// Invalid flag or config-file value detected by the CLI itself.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        set_threads(n)?;
    }
    match cli.command {
        Command::Preset(a) => cmd_preset(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Invert(a) => cmd_invert("invert", &a, None),
        Command::Pretrain(a) => cmd_invert("pretrain", &a, None),
        Command::Finetune(a) => cmd_invert("finetune", &a.run, Some(&a.checkpoint)),
        Command::Eval(a) => cmd_eval(&a),
        Command::Render(a) => cmd_render(&a),
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<()> {
    if n == 0 {
        bail!(ConfigError("--threads must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")
}

#[cfg(not(feature = "parallel"))]
fn set_threads(n: usize) -> Result<()> {
    if n != 1 {
        log::warn!("built without the parallel feature; ignoring --threads {n}");
    }
    Ok(())
}

fn cmd_preset(a: &PresetArgs) -> Result<()> {
    let setup = scenario::default_setup(a.n_side)?;
    let eps = Complex64::new(a.eps_re, a.eps_im);
    let scene = match a.kind {
        PresetKind::Disk => scenario::disk_scene(&setup, a.radius, eps)?,
        PresetKind::TwoDisks => scenario::two_disks_scene(&setup, a.radius, a.gap, eps)?,
        PresetKind::Tube => scenario::tube_scene(&setup, &TubeGeometry::default())?,
        PresetKind::TubeDefect => scenario::tube_with_defect_scene(&setup, &TubeGeometry::default())?,
        PresetKind::Austria => scenario::austria_scene(&setup, eps)?,
    };
    scenario::write_scene(&a.out, &scene).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

/// Simulated measurements of `truth`. Only the object's support enters the
/// solve; an empty scene scatters nothing.
fn simulate(setup: &Setup, truth: &PermittivityMap) -> Result<MeasurementSet> {
    let support = BinaryMask::support_of(truth);
    if support.is_empty() {
        return Ok(MeasurementSet::zeros(setup.n_rx(), setup.n_tx(), setup.geometry_fingerprint()));
    }
    Ok(ForwardModel::new(setup)?.forward(truth, &support)?)
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let mut rec = Recorder::new("generate", &a.out)?;
    rec.input(&a.scene);
    rec.seed(a.seed);
    let scene = scenario::read_scene(&a.scene).with_context(|| format!("reading {}", a.scene.display()))?;
    let setup = scene.setup.clone();
    let truth = scenario::rasterize(&scene)?;

    let clean = match a.fine_grid {
        Some(n) if n != setup.n_side => {
            let fine_setup = setup.with_n_side(n)?;
            let fine = SceneSpec::new(fine_setup.clone(), scene.shapes.clone())?;
            simulate(&fine_setup, &scenario::rasterize(&fine)?)?
        }
        _ => simulate(&setup, &truth)?,
    };
    let meas = scenario::add_noise(&clean, a.noise, a.seed)?;

    scenario::write_setup(&rec.output("setup.json"), &setup)?;
    scenario::write_scene(&rec.output("scene.json"), &scene)?;
    write_csv(&rec.output("truth.csv"), |w| scenario::write_permittivity(w, &truth))?;
    write_csv(&rec.output("meas.csv"), |w| scenario::write_measurements(w, &meas))?;
    if a.noise > 0.0 {
        write_csv(&rec.output("meas_clean.csv"), |w| scenario::write_measurements(w, &clean))?;
    }
    let img = rec.output("truth.pgm");
    scenario::render_map(&truth, &img, Channel::Re, false)?;
    rec.output("truth.txt");

    rec.config(&serde_json::json!({
        "noise": a.noise,
        "seed": a.seed,
        "fine_grid": a.fine_grid,
        "n_side": setup.n_side,
        "measurement_norm": meas.frobenius_norm(),
    }))?;
    rec.finish()?;
    println!(
        "wrote {} ({} rx x {} tx, |E| = {:.4e})",
        a.out.display(),
        meas.n_rx(),
        meas.n_tx(),
        meas.frobenius_norm()
    );
    Ok(())
}

fn write_csv(path: &Path, f: impl FnOnce(BufWriter<File>) -> ipdnn_core::Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f(BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path)
        .map_err(ipdnn_core::Error::from)
        .with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn read_map(path: &Path) -> Result<PermittivityMap> {
    Ok(scenario::read_permittivity(open(path)?, &path.display().to_string())?)
}

fn resolve_config(a: &InvertArgs) -> Result<InversionConfig> {
    let mut c = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(ipdnn_core::Error::from)
                .with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<InversionConfig>(&text)
                .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
        }
        None => InversionConfig::default(),
    };
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.alpha {
        c.weights.alpha = v;
    }
    if let Some(v) = a.beta {
        c.weights.beta = v;
    }
    if let Some(v) = a.lr {
        c.lr = v;
    }
    if let Some(v) = a.max_iters {
        c.max_iters = v;
    }
    if let Some(v) = a.activation {
        c.activation = v;
    }
    if let Some(v) = a.stop_tol {
        c.stop_tol = v;
    }
    c.validate()?;
    Ok(c)
}

#[derive(Serialize)]
struct Summary {
    command: String,
    iterations: usize,
    best_iteration: usize,
    data: f64,
    bound: f64,
    tv: f64,
    total: f64,
    rel_err: Option<f64>,
    n_active_cells: usize,
    initial_active_cells: usize,
    mask_updates: Vec<usize>,
    activation: Activation,
    n_tx: usize,
    grid_fingerprint: String,
    wall_time_s: f64,
}

fn cmd_invert(command: &str, a: &InvertArgs, checkpoint: Option<&PathBuf>) -> Result<()> {
    let mut rec = Recorder::new(command, &a.out)?;
    let config = resolve_config(a)?;
    rec.seed(config.seed);

    rec.input(&a.setup);
    let full_setup = scenario::read_setup(&a.setup).with_context(|| format!("reading {}", a.setup.display()))?;
    rec.input(&a.meas);
    let full_meas = scenario::read_measurements(open(&a.meas)?, &a.meas.display().to_string(), &full_setup)?;
    let (setup, meas) = match a.tx_subset {
        Some(count) => {
            let idx = full_setup.tx_subset_indices(count)?;
            let setup = full_setup.select_tx(&idx)?;
            let meas = full_meas.select_tx(&idx, setup.geometry_fingerprint())?;
            (setup, meas)
        }
        None => (full_setup, full_meas),
    };
    let truth = match &a.truth {
        Some(p) => {
            rec.input(p);
            let t = read_map(p)?;
            t.check_n_side(setup.n_side)?;
            Some(t)
        }
        None => None,
    };
    let ckpt = match checkpoint {
        Some(p) => {
            rec.input(p);
            Some(read_checkpoint(p).with_context(|| format!("reading {}", p.display()))?)
        }
        None => None,
    };

    let options = RunOptions {
        truth: truth.as_ref(),
        ..RunOptions::default()
    };
    log::info!(
        "{command}: {}x{} grid, {} tx, {} iterations",
        setup.n_side,
        setup.n_side,
        setup.n_tx(),
        config.max_iters
    );
    let result = match &ckpt {
        Some(c) => finetune_with(c, &meas, &setup, &config, options)?,
        None => invert_with(&meas, &setup, &config, options)?,
    };
    let mut resolved = config;
    resolved.activation = result.activation;
    write_json(&rec.output("config.json"), &resolved)?;
    rec.config(&serde_json::json!({
        "inversion": resolved,
        "tx_subset": a.tx_subset,
    }))?;
    write_run_outputs(command, &mut rec, &result, truth.as_ref(), setup.n_tx())?;
    let summary_rel = truth.as_ref().map(|t| relative_error(t, &result.eps_hat)).transpose()?;
    rec.finish()?;
    let best = result.best_row();
    match summary_rel {
        Some(r) => println!(
            "{command}: best iteration {} of {}, total {:.4e}, rel_err {r:.4}",
            result.best_iteration, result.iterations, best.total
        ),
        None => println!(
            "{command}: best iteration {} of {}, total {:.4e}",
            result.best_iteration, result.iterations, best.total
        ),
    }
    Ok(())
}

fn write_run_outputs(
    command: &str,
    rec: &mut Recorder,
    result: &ReconstructionResult,
    truth: Option<&PermittivityMap>,
    n_tx: usize,
) -> Result<()> {
    write_csv(&rec.output("log.csv"), |w| write_log_csv(w, &result.log))?;
    write_csv(&rec.output("eps_hat.csv"), |w| scenario::write_permittivity(w, &result.eps_hat))?;
    write_csv(&rec.output("initial.csv"), |w| scenario::write_permittivity(w, &result.initial_estimate))?;
    scenario::render_map(&result.eps_hat, &rec.output("eps_hat.pgm"), Channel::Re, false)?;
    rec.output("eps_hat.txt");
    scenario::render_mask(&result.initial_mask, &rec.output("mask_k0000.pbm"))?;
    for (k, m) in &result.mask_updates {
        scenario::render_mask(m, &rec.output(&format!("mask_k{k:04}.pbm")))?;
    }
    write_checkpoint(rec.output("checkpoint.bin"), &result.checkpoint())?;

    let best = result.best_row();
    let summary = Summary {
        command: command.to_string(),
        iterations: result.iterations,
        best_iteration: result.best_iteration,
        data: best.data,
        bound: best.bound,
        tv: best.tv,
        total: best.total,
        rel_err: truth.map(|t| relative_error(t, &result.eps_hat)).transpose()?,
        n_active_cells: result.mask.count(),
        initial_active_cells: result.initial_mask.count(),
        mask_updates: result.mask_updates.iter().map(|(k, _)| *k).collect(),
        activation: result.activation,
        n_tx,
        grid_fingerprint: result.grid_fingerprint.clone(),
        wall_time_s: result.wall_time.as_secs_f64(),
    };
    write_json(&rec.output("summary.json"), &summary)
}

#[derive(Serialize)]
struct RegionStats {
    cells: usize,
    /// ‖truth − estimate‖ / ‖truth‖ over the region.
    rel_err: f64,
    mean_re: f64,
    mean_im: f64,
    max_abs_err: f64,
}

#[derive(Serialize)]
struct EvalReport {
    rel_err: f64,
    object: Option<RegionStats>,
    background: Option<RegionStats>,
}

fn region_stats(truth: &PermittivityMap, est: &PermittivityMap, pick: impl Fn(Complex64) -> bool) -> Option<RegionStats> {
    let pairs: Vec<(Complex64, Complex64)> = truth
        .values
        .iter()
        .zip(est.values.iter())
        .filter(|(t, _)| pick(**t))
        .map(|(t, e)| (*t, *e))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let diff: f64 = pairs.iter().map(|(t, e)| (t - e).norm_sqr()).sum();
    let norm: f64 = pairs.iter().map(|(t, _)| t.norm_sqr()).sum();
    Some(RegionStats {
        cells: pairs.len(),
        rel_err: (diff / norm).sqrt(),
        mean_re: pairs.iter().map(|(_, e)| e.re).sum::<f64>() / n,
        mean_im: pairs.iter().map(|(_, e)| e.im).sum::<f64>() / n,
        max_abs_err: pairs.iter().map(|(t, e)| (t - e).norm()).fold(0.0, f64::max),
    })
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let truth = read_map(&a.truth)?;
    let est = read_map(&a.estimate)?;
    let background = Complex64::new(1.0, 0.0);
    let report = EvalReport {
        rel_err: relative_error(&truth, &est)?,
        object: region_stats(&truth, &est, |t| t != background),
        background: region_stats(&truth, &est, |t| t == background),
    };
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(p) = &a.out {
        std::fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display()))?;
    }
    // A closed pipe (e.g. `| head`) is not an error for a report.
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    if let Some(p) = &a.mask {
        let mask = scenario::read_pbm(open(p)?, &p.display().to_string())?;
        scenario::render_mask(&mask, &a.out)?;
        println!("{}: {} of {} cells active", a.out.display(), mask.count(), mask.n_side().pow(2));
        return Ok(());
    }
    let Some(p) = &a.map else {
        bail!(ConfigError("one of --map or --mask is required".into()));
    };
    let map = read_map(p)?;
    let stats = scenario::render_map(&map, &a.out, a.channel, a.color)?;
    println!("{}: min {:e}, max {:e}", a.out.display(), stats.min, stats.max);
    Ok(())
}
