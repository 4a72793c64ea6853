//! The `phaseprior` command line: `simulate`, `retrieve`, `reconstruct3d` and
//! `benchmark`. Every command writes its resolved settings to `config.txt`
//! next to its outputs. Exit codes: 0 success, 1 usage or input error,
//! 2 numerical failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::{Display, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

use crate::classical::{born_band_error, SolverOptions, StepSize, Termination};
use crate::error::{Error, Result};
use crate::grid::Image2D;
use crate::imageio::{is_grid, load_any, load_image, save_gray16, save_grid};
use crate::metrics::{mesh_skewness, MvgModel};
use crate::nets::{NetworkKind, NetworkSpec};
use crate::optics::{forward_full, ForwardModel, ImagingConfig};
use crate::phantom::{add_noise, generate, Phantom};
use crate::pipeline::{benchmark_image, retrieve, Benchmark, Solver, SolverParams};
use crate::surface::{mesh_from_height, reconstruct_surface, HeightField, SurfaceOptions, SweepOptions};
use crate::untrained::{FitOptions, ToleranceMode};

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "PHASEPRIOR_OUT";
const DEFAULT_OUT: &str = "phaseprior-out";
const DEFAULT_SIZE: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "phaseprior", version, about = "Phase retrieval with classical solvers and untrained network priors")]
struct Cli {
    /// Plain `key = value` file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (also PHASEPRIOR_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a ground-truth phase and its measured intensity.
    Simulate(SimulateArgs),
    /// Recover a phase map from an intensity image.
    Retrieve(RetrieveArgs),
    /// Turn a phase map into a height field and triangle mesh.
    Reconstruct3d(ReconstructArgs),
    /// Score solvers and forward models on a set of phase objects.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
struct OpticsArgs {
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Metres.
    #[arg(long, allow_negative_numbers = true)]
    wavelength: Option<f64>,
    /// Propagation distance in metres.
    #[arg(long, allow_negative_numbers = true)]
    distance: Option<f64>,
    /// Metres per pixel.
    #[arg(long)]
    pixel_pitch: Option<f64>,
    /// Illumination intensity.
    #[arg(long)]
    i0: Option<f64>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// relative | absolute
    #[arg(long)]
    tol_mode: Option<String>,
    /// Adam learning rate for network solvers.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record progress every N iterations (network solvers).
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    inner_depth: Option<usize>,
    #[arg(long)]
    stages: Option<usize>,
    /// Tikhonov weight of the Born inverse.
    #[arg(long)]
    born_alpha: Option<f64>,
    /// Fixed Wirtinger-flow step; automatic when absent.
    #[arg(long)]
    step_size: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// blob | steps | text-mask | file
    #[arg(long)]
    phantom: Option<String>,
    /// Image used as the phase object when `--phantom file`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Peak phase in radians.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Standard deviation of additive Gaussian intensity noise.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    optics: OpticsArgs,
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    /// Intensity as a `.grid` file or a grayscale image.
    input: PathBuf,
    /// gs | wf | born | unet | u2net | resu2net
    #[arg(long)]
    solver: Option<String>,
    /// full | born
    #[arg(long)]
    model: Option<String>,
    /// Ground-truth phase; adds an error figure to the summary.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    optics: OpticsArgs,
    #[command(flatten)]
    solver_args: SolverArgs,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    /// Phase as a `.grid` file or a grayscale image.
    input: PathBuf,
    /// sfs (shape from shading) | direct (phase used as height)
    #[arg(long)]
    pipeline: Option<String>,
    #[arg(long)]
    sweep_tol: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Directory of grayscale images used as ground-truth phase objects.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Built-in phantoms used when `--images` is absent.
    #[arg(long, value_delimiter = ',')]
    phantoms: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    solvers: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Peak phase in radians.
    #[arg(long)]
    amplitude: Option<f64>,
    #[command(flatten)]
    optics: OpticsArgs,
    #[command(flatten)]
    solver_args: SolverArgs,
}

/// Layered settings: flag, then config file, then default. Every looked-up
/// key is recorded for `config.txt`.
struct Settings {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(p) = path {
            let text = fs::read_to_string(p).map_err(|e| Error::Input(format!("cannot read config {}: {e}", p.display())))?;
            for (n, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| Error::Usage(format!("config line {}: expected key = value", n + 1)))?;
                file.insert(k.trim().replace('-', "_"), v.trim().to_string());
            }
        }
        Ok(Self { file, resolved: BTreeMap::new() })
    }

    fn raw(&mut self, key: &str, flag: Option<String>) -> Option<String> {
        let v = flag.or_else(|| self.file.get(key).cloned());
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.clone());
        }
        v
    }

    fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(s) => s.parse().map_err(|e| Error::Usage(format!("config key {key}: {e}")))?,
                None => default,
            },
        };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file.get(key).map(|s| s.parse().map_err(|e| Error::Usage(format!("config key {key}: {e}")))).transpose()?,
        };
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    fn list(&mut self, key: &str, flag: Option<Vec<String>>) -> Option<Vec<String>> {
        let v = flag.or_else(|| self.file.get(key).map(|s| s.split(',').map(|t| t.trim().to_string()).collect()));
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.join(","));
        }
        v
    }

    fn optics(&mut self, a: &OpticsArgs, shape: Option<(usize, usize)>) -> Result<ImagingConfig> {
        let (rows, cols) = match shape {
            Some((r, c)) => {
                if a.rows.is_some_and(|v| v != r) || a.cols.is_some_and(|v| v != c) {
                    return Err(Error::Usage(format!("--rows/--cols disagree with the {r}x{c} input")));
                }
                self.resolved.insert("rows".into(), r.to_string());
                self.resolved.insert("cols".into(), c.to_string());
                (r, c)
            }
            None => (self.value("rows", a.rows, DEFAULT_SIZE)?, self.value("cols", a.cols, DEFAULT_SIZE)?),
        };
        let cfg = ImagingConfig {
            wavelength: self.value("wavelength", a.wavelength, ImagingConfig::DEFAULT_WAVELENGTH)?,
            distance: self.value("distance", a.distance, ImagingConfig::DEFAULT_DISTANCE)?,
            pixel_pitch: self.value("pixel_pitch", a.pixel_pitch, ImagingConfig::DEFAULT_PITCH)?,
            i0: self.value("i0", a.i0, 1.0)?,
            rows,
            cols,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn solver_params(&mut self, a: &SolverArgs) -> Result<SolverParams> {
        let d = SolverParams::default();
        let seed = self.value("seed", a.seed, 0u64)?;
        let max_iters = self.value("max_iters", a.max_iters, d.fit.max_iters)?;
        let tol = self.value("tol", a.tol, d.fit.tol)?;
        let tol_mode = match self.raw("tol_mode", a.tol_mode.clone()).as_deref() {
            None | Some("relative") => ToleranceMode::RelativeChange,
            Some("absolute") => ToleranceMode::AbsoluteLoss,
            Some(other) => return Err(Error::Usage(format!("unknown tol_mode '{other}' (expected relative or absolute)"))),
        };
        let step_size = match self.optional("step_size", a.step_size)? {
            Some(mu) => StepSize::Fixed(mu),
            None => StepSize::Auto,
        };
        let classical = SolverOptions { max_iters, tol, step_size, seed, ..d.classical };
        classical.validate()?;
        let network = NetworkSpec::new(NetworkKind::UNet)
            .with_depth(self.value("depth", a.depth, d.network.depth)?)
            .with_base_channels(self.value("base_channels", a.base_channels, d.network.base_channels)?)
            .with_inner_depth(self.value("inner_depth", a.inner_depth, d.network.inner_depth)?)
            .with_stages(self.value("stages", a.stages, d.network.stages)?)
            .with_seed(seed);
        network.validate()?;
        let fit = FitOptions {
            max_iters,
            tol,
            tol_mode,
            lr: self.value("lr", a.lr, d.fit.lr)?,
            seed,
            log_every: self.value("log_every", a.log_every, 0usize)?,
            ..d.fit
        };
        fit.validate()?;
        let born_alpha = self.value("born_alpha", a.born_alpha, d.born_alpha)?;
        if !(born_alpha > 0.0 && born_alpha.is_finite()) {
            return Err(Error::Config(format!("born_alpha must be positive, got {born_alpha}")));
        }
        Ok(SolverParams { classical, born_alpha, network, fit })
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let mut s = String::new();
        for (k, v) in &self.resolved {
            let _ = writeln!(s, "{k} = {v}");
        }
        fs::write(dir.join("config.txt"), s)?;
        Ok(())
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let sub = match &cli.command {
        Command::Simulate(_) => "simulate",
        Command::Retrieve(_) => "retrieve",
        Command::Reconstruct3d(_) => "reconstruct3d",
        Command::Benchmark(_) => "benchmark",
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Usage(_)) {
                let mut cmd = Cli::command();
                if let Some(sc) = cmd.find_subcommand_mut(sub) {
                    eprintln!("\n{}", sc.render_usage());
                }
            }
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite(_) => 2,
        _ => 1,
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let mut settings = Settings::load(cli.config.as_deref())?;
    let out = match cli.out.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)) {
        Some(p) => p,
        None => PathBuf::from(settings.file.get("out").cloned().unwrap_or_else(|| DEFAULT_OUT.into())),
    };
    match cli.command {
        Command::Simulate(a) => simulate(a, &mut settings, &out),
        Command::Retrieve(a) => retrieve_cmd(a, &mut settings, &out),
        Command::Reconstruct3d(a) => reconstruct(a, &mut settings, &out),
        Command::Benchmark(a) => benchmark(a, &mut settings, &out),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Input(format!("cannot create output directory {}: {e}", dir.display())))
}

fn simulate(a: SimulateArgs, s: &mut Settings, out: &Path) -> Result<i32> {
    let phantom = s.raw("phantom", a.phantom.clone()).unwrap_or_else(|| "blob".into());
    let amplitude = s.value("amplitude", a.amplitude, 1.0)?;
    let noise = s.value("noise", a.noise, 0.0)?;
    let seed = s.value("seed", a.seed, 0u64)?;
    if !(noise >= 0.0) {
        return Err(Error::Usage(format!("noise must be non-negative, got {noise}")));
    }
    let (theta, cfg) = if phantom == "file" {
        let path = a.input.clone().ok_or_else(|| Error::Usage("--phantom file needs --input <image>".into()))?;
        s.resolved.insert("input".into(), path.display().to_string());
        let img = load_any(&path)?.normalized();
        let cfg = s.optics(&a.optics, Some(img.shape()))?;
        (img.map(|v| v * amplitude), cfg)
    } else {
        let kind: Phantom = phantom.parse()?;
        let cfg = s.optics(&a.optics, None)?;
        (generate(kind, cfg.rows, cfg.cols, amplitude)?, cfg)
    };
    let intensity = add_noise(&forward_full(&theta, &cfg)?, noise, seed);
    prepare_out(out)?;
    save_grid(&out.join("theta_true.grid"), &theta)?;
    save_gray16(&out.join("theta_true.png"), &theta)?;
    save_grid(&out.join("intensity.grid"), &intensity)?;
    save_gray16(&out.join("intensity.png"), &intensity)?;
    s.write(out)?;
    println!("simulated {phantom} {}x{} -> {}", cfg.rows, cfg.cols, out.display());
    Ok(0)
}

#[derive(Serialize)]
struct Summary {
    solver: &'static str,
    model: &'static str,
    rows: usize,
    cols: usize,
    iterations_run: usize,
    max_iters: usize,
    terminated_by: &'static str,
    initial_loss: f64,
    final_loss: f64,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_error: Option<f64>,
}

/// Band threshold on the contrast transfer used for the truth comparison.
const ERROR_BAND: f64 = 0.2;

fn retrieve_cmd(a: RetrieveArgs, s: &mut Settings, out: &Path) -> Result<i32> {
    let solver: Solver = s.raw("solver", a.solver.clone()).unwrap_or_else(|| "resu2net".into()).parse()?;
    let model = match s.raw("model", a.model.clone()) {
        Some(m) => {
            let m: ForwardModel = m.parse()?;
            if !solver.supports(m) {
                return Err(Error::Usage(format!("solver {} does not support the {} model", solver.name(), m.name())));
            }
            m
        }
        None => solver.native_model().unwrap_or(ForwardModel::Full),
    };
    s.resolved.insert("model".into(), model.name().into());
    let raw = load_any(&a.input)?;
    s.resolved.insert("input".into(), a.input.display().to_string());
    let cfg = s.optics(&a.optics, Some(raw.shape()))?;
    let params = s.solver_params(&a.solver_args)?;
    // quantised images carry no absolute scale; propagation conserves power
    let i_meas = if is_grid(&a.input) {
        raw
    } else {
        let m = raw.mean();
        if m <= 0.0 {
            return Err(Error::Input("intensity image is entirely dark".into()));
        }
        raw.map(|v| v * cfg.i0 / m)
    };
    let truth = a.truth.as_deref().map(load_any).transpose()?;
    if let Some(t) = &truth {
        t.ensure_same_shape(&i_meas)?;
    }

    let o = match retrieve(solver, model, &i_meas, &cfg, &params) {
        Err(Error::Config(m)) | Err(Error::Dimension(m)) => return Err(Error::Input(m)),
        other => other?,
    };
    let relative_error = match &truth {
        Some(t) => born_band_error(&o.phase, t, &cfg, ERROR_BAND)?,
        None => None,
    };
    prepare_out(out)?;
    save_grid(&out.join("phase.grid"), &o.phase)?;
    save_gray16(&out.join("phase.png"), &o.phase)?;
    let mut csv = String::from("iteration,loss\n");
    for (j, l) in o.loss_trace.iter().enumerate() {
        let _ = writeln!(csv, "{j},{l:e}");
    }
    fs::write(out.join("loss.csv"), csv)?;
    if !o.log.is_empty() {
        let mut p = String::from("iteration,loss,seconds\n");
        for (j, l, t) in &o.log {
            let _ = writeln!(p, "{j},{l:e},{t:.3}");
        }
        fs::write(out.join("progress.csv"), p)?;
    }
    let summary = Summary {
        solver: solver.name(),
        model: model.name(),
        rows: cfg.rows,
        cols: cfg.cols,
        iterations_run: o.iterations_run,
        max_iters: params.fit.max_iters,
        terminated_by: o.terminated_by.name(),
        initial_loss: o.loss_trace[0],
        final_loss: o.final_loss(),
        seed: params.fit.seed,
        relative_error,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Input(e.to_string()))?;
    fs::write(out.join("summary.json"), json + "\n")?;
    s.write(out)?;
    println!(
        "{} ({}): {} iterations, {}, loss {:.3e} -> {:.3e}, {:.2} s",
        solver.label(),
        model.name(),
        o.iterations_run,
        o.terminated_by.name(),
        summary.initial_loss,
        summary.final_loss,
        o.wall_time
    );
    Ok(if o.terminated_by == Termination::Divergence { 2 } else { 0 })
}

fn reconstruct(a: ReconstructArgs, s: &mut Settings, out: &Path) -> Result<i32> {
    let pipeline = s.raw("pipeline", a.pipeline.clone()).unwrap_or_else(|| "sfs".into());
    let sweep = SweepOptions {
        tol: s.value("sweep_tol", a.sweep_tol, SweepOptions::default().tol)?,
        max_sweeps: s.value("max_sweeps", a.max_sweeps, SweepOptions::default().max_sweeps)?,
    };
    let theta = load_any(&a.input)?;
    s.resolved.insert("input".into(), a.input.display().to_string());
    let (rows, cols) = theta.shape();
    if rows < 2 || cols < 2 {
        return Err(Error::Input(format!("meshing needs at least 2x2 samples, got {rows}x{cols}")));
    }
    let height = match pipeline.as_str() {
        "sfs" => reconstruct_surface(&theta, &SurfaceOptions { sweep })?.height,
        "direct" => {
            if !theta.is_finite() {
                return Err(Error::Input("phase image contains non-finite values".into()));
            }
            let u = if theta.max() > theta.min() { theta.normalized() } else { Image2D::zeros(rows, cols) };
            HeightField { u, h: 1.0 / (rows.max(cols) - 1) as f64 }
        }
        other => return Err(Error::Usage(format!("unknown pipeline '{other}' (expected sfs or direct)"))),
    };
    let mesh = mesh_from_height(&height)?;
    let skew = mesh_skewness(&mesh)?;
    prepare_out(out)?;
    save_grid(&out.join("height.grid"), &height.u)?;
    save_gray16(&out.join("height.png"), &height.u)?;
    mesh.write_obj(std::io::BufWriter::new(fs::File::create(out.join("mesh.obj"))?))?;
    fs::write(
        out.join("skewness.txt"),
        format!("triangles = {}\nmean = {:.12e}\nmax = {:.12e}\n", mesh.triangles.len(), skew.mean, skew.max),
    )?;
    s.write(out)?;
    println!("{} triangles, skewness mean {:.4} max {:.4}", mesh.triangles.len(), skew.mean, skew.max);
    Ok(0)
}

fn benchmark(a: BenchmarkArgs, s: &mut Settings, out: &Path) -> Result<i32> {
    let solvers: Vec<Solver> = match s.list("solvers", a.solvers.clone()) {
        Some(v) => v.iter().map(|t| t.parse()).collect::<Result<_>>()?,
        None => Solver::ALL.to_vec(),
    };
    let models: Vec<ForwardModel> = match s.list("models", a.models.clone()) {
        Some(v) => v.iter().map(|t| t.parse()).collect::<Result<_>>()?,
        None => vec![ForwardModel::Full, ForwardModel::Born],
    };
    let amplitude = s.value("amplitude", a.amplitude, 1.0)?;
    let params = s.solver_params(&a.solver_args)?;

    let mut objects: Vec<(String, Image2D)> = Vec::new();
    match a.images.clone().or_else(|| s.file.get("images").map(PathBuf::from)) {
        Some(dir) => {
            s.resolved.insert("images".into(), dir.display().to_string());
            let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(|e| Error::Input(format!("cannot read image directory {}: {e}", dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension().and_then(|x| x.to_str()).is_some_and(|x| matches!(x.to_ascii_lowercase().as_str(), "png" | "pgm" | "pnm"))
                })
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(Error::Input(format!("no png/pgm images in {}", dir.display())));
            }
            for p in paths {
                let img = load_image(&p)?.normalized().map(|v| v * amplitude);
                let name = p.file_stem().and_then(|n| n.to_str()).unwrap_or("image").to_string();
                objects.push((name, img));
            }
        }
        None => {
            let names = s.list("phantoms", a.phantoms.clone()).unwrap_or_else(|| Phantom::ALL.iter().map(|p| p.name().to_string()).collect());
            let cfg = s.optics(&a.optics, None)?;
            for n in names {
                let kind: Phantom = n.parse()?;
                objects.push((n, generate(kind, cfg.rows, cfg.cols, amplitude)?));
            }
        }
    }

    let nss = MvgModel::bundled();
    let surface = SurfaceOptions::default();
    let mut bench = Benchmark::default();
    for (name, theta) in &objects {
        let cfg = s.optics(&a.optics, Some(theta.shape()))?;
        eprintln!("benchmark: {name} ({}x{})", cfg.rows, cfg.cols);
        benchmark_image(name, theta, &cfg, &solvers, &models, &params, nss, &surface, &mut bench)?;
    }
    if objects.iter().any(|(_, t)| t.shape() != objects[0].1.shape()) {
        s.resolved.remove("rows");
        s.resolved.remove("cols");
    }

    let mut report = bench.tables(&solvers, &models);
    report.push_str(&bench.ordering_report(&models));
    if !bench.failures.is_empty() {
        report.push_str("\nFailed cells:\n");
        for f in &bench.failures {
            let _ = writeln!(report, "  {} {} {}: {}", f.image, f.solver.name(), f.model.name(), f.reason);
        }
    }
    prepare_out(out)?;
    fs::write(out.join("report.txt"), &report)?;
    fs::write(out.join("benchmark.csv"), bench.csv())?;
    let mut timing = String::from("image,solver,model,seconds\n");
    for c in &bench.cells {
        let _ = writeln!(timing, "{},{},{},{:.3}", c.image, c.solver.name(), c.model.name(), c.wall_time);
    }
    fs::write(out.join("timing.csv"), timing)?;
    s.write(out)?;
    print!("{report}");
    let numerical = bench.failures.iter().any(|f| f.reason.contains("non-finite"));
    Ok(if numerical { 2 } else { 0 })
}
