//! `dynlf`: simulate captures, train, evaluate and benchmark coded
//! dynamic light-field cameras.
//!
//! Any failure prints one line `error: code=<code> exit=<n> msg=<text>` on
//! stderr and exits with `<n>`.

use clap::{Parser, Subcommand};
use dynlf_core::bench::{run_benchmark_cached, TrainedCache, BENCHMARKS};
use dynlf_core::config::RunConfig;
use dynlf_core::eval::{
    ablation_compare, capture_exported, eval_sequence, psf_atlas, psf_grid, working_range_sweep, ModelReconstructor,
    Reconstructor,
};
use dynlf_core::forward::{coded_capture, free5d_capture, AperturePattern, ExposureTile};
use dynlf_core::io::{read_lf5d, read_pgm, read_raw_f32, write_lf5d, write_pgm, write_raw_f32};
use dynlf_core::lf::{pack_space_to_depth, Dims, LightField5D};
use dynlf_core::net::Model;
use dynlf_core::patterns::{ExportedPatterns, ExposureMode, Variant};
use dynlf_core::scene::{MotionDisparity, Texture};
use dynlf_core::train::{load_checkpoint, loss_csv, save_checkpoint, train_until, TrainState};
use dynlf_core::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "dynlf", version, about = "Coded dynamic light-field acquisition lab")]
struct Cli {
    /// key=value run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides paths.out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 is the bit-reproducibility reference, 0 picks the core count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Capture an LF5D field through the checkpoint's patterns (uniform without one).
    Simulate {
        #[arg(long)]
        input: PathBuf,
        /// Also write the 64-channel packed tensor.
        #[arg(long)]
        packed: bool,
    },
    /// Point-spread atlas for a list of `alpha_x,alpha_y,d` triples separated by `;`.
    Psf {
        #[arg(long)]
        md: Option<String>,
    },
    /// Working-range sweep of a trained checkpoint.
    Sweep,
    /// Joint pattern and network training.
    Train {
        /// Continue from paths.checkpoint.
        #[arg(long)]
        resume: bool,
        /// Stop after this many total steps; the schedule still spans train.steps.
        #[arg(long)]
        until: Option<u64>,
    },
    /// Score a trained checkpoint on held-out scenes or an LF5D sequence.
    Eval {
        #[arg(long)]
        sequence: Option<PathBuf>,
    },
    /// Convert between LF5D, a PGM view stack directory and raw f32.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run a named benchmark, or `all`.
    Bench { name: String },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error: code={} exit={code} msg={e}", e.code());
            ExitCode::from(code as u8)
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            if !p.exists() {
                return Err(Error::MissingArtifact(p.clone()));
            }
            RunConfig::parse(&std::fs::read_to_string(p)?)?
        }
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config { line: 0, msg: format!("override {kv:?} is not key=value") })?;
        cfg.set_override(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        cfg.set_override("seed", &s.to_string())?;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let cfg = resolve(&cli)?;
    let out = cfg.paths.out.clone();
    std::fs::create_dir_all(&out)?;
    cfg.echo(&out)?;
    match cli.command {
        Command::Simulate { input, packed } => simulate(&cfg, &input, packed, &out),
        Command::Psf { md } => psf(&cfg, md.as_deref(), &out),
        Command::Sweep => sweep(&cfg, &out),
        Command::Train { resume, until } => train_cmd(&cfg, resume, until, &out),
        Command::Eval { sequence } => eval_cmd(&cfg, sequence.as_deref(), &out),
        Command::Convert { input, output } => convert(&input, &output),
        Command::Bench { name } => bench(&cfg, &name, &out),
    }
}

fn load_model(cfg: &RunConfig) -> Result<TrainState> {
    let path = &cfg.paths.checkpoint;
    if path.as_os_str().is_empty() {
        return Err(Error::MissingArtifact(PathBuf::from("<paths.checkpoint unset>")));
    }
    Ok(load_checkpoint(path, &cfg.model_config())?.0)
}

fn uniform_patterns(d: Dims) -> ExportedPatterns {
    ExportedPatterns {
        variant: Variant::Ordinary,
        aperture: AperturePattern::uniform(d, 1.0),
        exposure: ExposureTile::ones(d.n_t),
        mask: None,
    }
}

/// Deployed patterns from the configured checkpoint, or uniform ones when
/// no checkpoint is configured.
fn patterns_for(cfg: &RunConfig, dims: Dims) -> Result<ExportedPatterns> {
    if cfg.paths.checkpoint.as_os_str().is_empty() {
        return Ok(uniform_patterns(dims));
    }
    let state = load_model(cfg)?;
    let md = state.model.cfg.dims;
    if (md.n_u, md.n_v, md.n_t) != (dims.n_u, dims.n_v, dims.n_t) {
        return Err(Error::DimensionMismatch(format!("input {dims:?} vs checkpoint {md:?}")));
    }
    Ok(state.export_patterns())
}

fn simulate(cfg: &RunConfig, input: &Path, packed: bool, out: &Path) -> Result<()> {
    let lf = read_lf5d(input)?;
    let d = lf.dims();
    let pats = patterns_for(cfg, d)?;
    let raw = match &pats.mask {
        Some(m) => free5d_capture(&lf, m)?,
        None => coded_capture(&lf, &pats.aperture, &pats.exposure)?,
    };
    let norm = capture_exported(&pats, &lf)?;
    write_raw_f32(out.join("capture_raw.f32"), &raw.data)?;
    write_raw_f32(out.join("capture.f32"), &norm.data)?;
    write_pgm(out.join("capture.pgm"), norm.n_x, norm.n_y, &norm.data)?;
    if packed {
        write_raw_f32(out.join("packed.f32"), &pack_space_to_depth(&norm)?.data)?;
    }
    println!("captured {}x{} image from {} rays per pixel", d.n_x, d.n_y, d.rays_per_pixel());
    Ok(())
}

fn parse_md_list(s: &str) -> Result<Vec<MotionDisparity>> {
    s.split(';')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let v: Vec<f32> = t
                .split(',')
                .map(|x| x.trim().parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidArgument(format!("md entry {t:?}: {e}")))?;
            match v[..] {
                [ax, ay, d] => MotionDisparity::new(ax, ay, d),
                _ => Err(Error::InvalidArgument(format!("md entry {t:?} needs alpha_x,alpha_y,d"))),
            }
        })
        .collect()
}

fn psf(cfg: &RunConfig, md: Option<&str>, out: &Path) -> Result<()> {
    let d = cfg.dims;
    let dims = Dims::new(d.n_u, d.n_v, cfg.eval.psf_size, cfg.eval.psf_size, d.n_t)?;
    let mds = match md {
        Some(s) => parse_md_list(s)?,
        None => psf_grid(),
    };
    let atlas = psf_atlas(&patterns_for(cfg, dims)?, dims, &mds)?;
    atlas.write(out)?;
    println!("{} stamps, max NCC {:.4}", atlas.stamps.len(), atlas.max_cross_correlation());
    Ok(())
}

fn sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let state = load_model(cfg)?;
    let d = cfg.dims;
    let pad = (cfg.eval.sweep_alpha_x.iter().fold(0.0f32, |m, a| m.max(a.abs())) * (d.n_t - 1) as f32
        + cfg.eval.sweep_d.iter().fold(0.0f32, |m, v| m.max(v.abs())) * (d.n_u.max(d.n_v) / 2) as f32)
        .ceil() as usize
        + 1;
    let tex = Texture::dead_leaves(d.n_x + 2 * pad, d.n_y + 2 * pad, cfg.eval.data.seed);
    let rec = ModelReconstructor::deployed(&state.model);
    let g = working_range_sweep(&rec, &cfg.eval.sweep_alpha_x, &cfg.eval.sweep_d, &tex, (pad, pad), cfg.eval.crop)?;
    std::fs::write(out.join("sweep.csv"), g.to_csv())?;
    print!("{}", g.to_csv());
    Ok(())
}

fn train_cmd(cfg: &RunConfig, resume: bool, until: Option<u64>, out: &Path) -> Result<()> {
    let data = cfg.dataset(&cfg.data)?;
    std::fs::write(out.join("manifest.txt"), data.manifest())?;
    let mut state = if resume {
        let (state, seed) = load_checkpoint(&cfg.paths.checkpoint, &cfg.model_config())?;
        if seed != cfg.seed {
            return Err(Error::CheckpointMismatch(format!("checkpoint seed {seed}, config seed {}", cfg.seed)));
        }
        state
    } else {
        TrainState::new(Model::new(cfg.model_config(), cfg.seed)?)
    };
    train_until(&mut state, &data, &cfg.train, until.unwrap_or(cfg.train.steps), |_| Ok(()))?;
    save_checkpoint(&out.join("checkpoint.lfck"), &state, cfg.seed)?;
    std::fs::write(out.join("loss.csv"), loss_csv(&state.log))?;
    state.export_patterns().write(&out.join("patterns"))?;
    let (first, last) = (state.log.first(), state.log.last());
    if let (Some(f), Some(l)) = (first, last) {
        println!("steps {} loss {:.6} -> {:.6}", state.log.len(), f.loss, l.loss);
    }
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, sequence: Option<&Path>, out: &Path) -> Result<()> {
    let state = load_model(cfg)?;
    if let Some(seq) = sequence {
        let seq = read_lf5d(seq)?;
        let report = eval_sequence(&ModelReconstructor::deployed(&state.model), &seq, cfg.eval.crop)?;
        std::fs::write(out.join("sequence_psnr.csv"), report.to_csv())?;
        println!("mean PSNR {:.4} dB over {} frames", report.mean, report.frames());
        return Ok(());
    }
    let ds = cfg.dataset(&cfg.eval.data)?;
    let scenes: Vec<LightField5D> = (0..ds.len()).map(|i| ds.sample(i)).collect::<Result<_>>()?;
    let tau = cfg.train.tau(cfg.train.steps.saturating_sub(1));
    let relaxed = ModelReconstructor { model: &state.model, mode: ExposureMode::Relaxed, tau };
    let binary = ModelReconstructor::deployed(&state.model);
    let entries: Vec<(String, &dyn Reconstructor)> = vec![("binary".into(), &binary), ("relaxed".into(), &relaxed)];
    let table = ablation_compare(&entries, &scenes, cfg.eval.crop)?;
    std::fs::write(out.join("eval.csv"), table.to_csv())?;
    std::fs::write(out.join("eval_per_frame.csv"), table.per_frame_csv())?;
    let (b, r) = (table.mean_of("binary").unwrap_or(f64::NAN), table.mean_of("relaxed").unwrap_or(f64::NAN));
    println!("held-out PSNR binary {b:.4} dB, relaxed {r:.4} dB, deploy gap {:.4} dB", (r - b).abs());
    Ok(())
}

fn is_lf5d(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "lf5d")
}

fn is_raw(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "f32")
}

fn dims_sidecar(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".dims");
    PathBuf::from(s)
}

fn parse_dims(text: &str) -> Result<Dims> {
    let v: Vec<usize> = text
        .split_whitespace()
        .map(|x| x.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("dims sidecar: {e}")))?;
    match v[..] {
        [n_u, n_v, n_x, n_y, n_t] => Dims::new(n_u, n_v, n_x, n_y, n_t),
        _ => Err(Error::InvalidArgument(format!("dims sidecar needs 5 numbers, got {}", v.len()))),
    }
}

fn fmt_dims(d: Dims) -> String {
    format!("{} {} {} {} {}\n", d.n_u, d.n_v, d.n_x, d.n_y, d.n_t)
}

fn convert(input: &Path, output: &Path) -> Result<()> {
    match (is_lf5d(input), is_lf5d(output)) {
        (true, false) if is_raw(output) => {
            let lf = read_lf5d(input)?;
            write_raw_f32(output, lf.data())?;
            std::fs::write(dims_sidecar(output), fmt_dims(lf.dims()))?;
            println!("wrote raw f32 (lossless)");
        }
        (false, true) if is_raw(input) => {
            let side = dims_sidecar(input);
            if !side.exists() {
                return Err(Error::MissingArtifact(side));
            }
            let dims = parse_dims(&std::fs::read_to_string(side)?)?;
            write_lf5d(&LightField5D::new(dims, read_raw_f32(input)?)?, output)?;
            println!("wrote LF5D (lossless)");
        }
        (true, false) => {
            let lf = read_lf5d(input)?;
            let d = lf.dims();
            std::fs::create_dir_all(output)?;
            std::fs::write(output.join("dims.txt"), fmt_dims(d))?;
            for t in 0..d.n_t {
                for v in 0..d.n_v {
                    for u in 0..d.n_u {
                        write_pgm(output.join(view_name(t, v, u)), d.n_x, d.n_y, lf.view(t, v, u))?;
                    }
                }
            }
            eprintln!("warning: PGM stack is quantized to 8 bits; use a .f32 target for a lossless copy");
        }
        (false, true) => {
            let side = input.join("dims.txt");
            if !side.exists() {
                return Err(Error::MissingArtifact(side));
            }
            let d = parse_dims(&std::fs::read_to_string(side)?)?;
            let mut data = Vec::with_capacity(d.len());
            for t in 0..d.n_t {
                for v in 0..d.n_v {
                    for u in 0..d.n_u {
                        let (w, h, px) = read_pgm(input.join(view_name(t, v, u)))?;
                        if (w, h) != (d.n_x, d.n_y) {
                            return Err(Error::DimensionMismatch(format!("view {t},{v},{u} is {w}x{h}")));
                        }
                        data.extend(px);
                    }
                }
            }
            write_lf5d(&LightField5D::new(d, data)?, output)?;
            eprintln!("warning: values carry 8-bit quantization from the PGM stack");
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "convert needs one .lf5d side: {} -> {}",
                input.display(),
                output.display()
            )))
        }
    }
    Ok(())
}

fn view_name(t: usize, v: usize, u: usize) -> String {
    format!("view_t{t}_v{v}_u{u}.pgm")
}

fn bench(cfg: &RunConfig, name: &str, out: &Path) -> Result<()> {
    let names: Vec<&str> = if name == "all" { BENCHMARKS.to_vec() } else { vec![name] };
    let mut cache = TrainedCache::default();
    let mut failed = 0;
    let mut summary = String::new();
    for n in names {
        let o = run_benchmark_cached(n, cfg, out, &mut cache)?;
        for c in &o.checks {
            writeln!(summary, "{n} {} {}: {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail).unwrap();
        }
        failed += usize::from(!o.passed());
    }
    print!("{summary}");
    if failed > 0 {
        log::warn!("{failed} benchmark(s) failed their checks");
    }
    Ok(())
}
