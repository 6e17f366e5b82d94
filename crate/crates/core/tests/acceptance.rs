//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line to the
//! real stderr (bypassing libtest capture) and fails its test on `FAIL`.
//!
//! Criteria run one at a time under [`SERIAL`] so the runtime bounds are
//! measured without contention. Trained models are shared via [`CACHE`].

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{LazyLock, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use dynlf_autodiff::catalog::{check_case, operator_catalog};
use dynlf_core::bench::{run_benchmark_cached, train_variant, TrainedCache, BENCHMARKS};
use dynlf_core::config::RunConfig;
use dynlf_core::forward::{
    capture_with_region_timing, coded_capture, free5d_capture, ordinary_capture, AperturePattern, ExposurePattern,
    ExposureTile, Free5DMask, RegionTiming,
};
use dynlf_core::lf::{CodedImage, Dims, LightField5D, TILE};
use dynlf_core::net::{Model, ModelConfig, RecNetConfig};
use dynlf_core::patterns::{export, make_variant, ExportedPatterns, ExposureMode, Variant};
use dynlf_core::scene::{motion_grid, synth_plane, Boundary, Dataset, MotionDisparity, SourceSpec, Texture};
use dynlf_core::train::{encode_checkpoint, load_checkpoint, loss_csv, save_checkpoint, train, train_until, TrainState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());
static CACHE: LazyLock<Mutex<TrainedCache>> = LazyLock::new(|| Mutex::new(TrainedCache::default()));
static OUT: LazyLock<tempfile::TempDir> = LazyLock::new(|| tempfile::tempdir().expect("temp dir"));

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

type Outcome = Result<String, String>;

/// Runs `body`, prints its verdict line and fails the test unless it passed.
fn criterion(n: u32, name: &str, body: impl FnOnce() -> Outcome) {
    let _serial = lock(&SERIAL);
    let start = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match &res {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    let line = format!("acceptance criterion {n:>2} {name}: {tag} ({detail}; {secs:.1} s)\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(d) = res {
        panic!("criterion {n} {name} failed: {d}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dims(n_u: usize, n_v: usize, n_x: usize, n_y: usize, n_t: usize) -> Dims {
    Dims::new(n_u, n_v, n_x, n_y, n_t).unwrap()
}

fn random_lf(d: Dims, rng: &mut ChaCha8Rng) -> LightField5D {
    LightField5D::from_fn(d, |_, _, _, _, _| rng.random())
}

fn random_aperture(d: Dims, rng: &mut ChaCha8Rng) -> AperturePattern {
    AperturePattern::new(d.n_t, d.n_v, d.n_u, (0..d.rays_per_pixel()).map(|_| rng.random()).collect()).unwrap()
}

fn random_exposure(n_t: usize, rng: &mut ChaCha8Rng) -> ExposureTile {
    let mut logit = || (0..n_t * TILE).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>();
    let rows = logit();
    ExposurePattern::new(n_t, rows, logit()).unwrap().realize()
}

fn random_mask(d: Dims, rng: &mut ChaCha8Rng) -> Free5DMask {
    let n = d.rays_per_pixel() * TILE * TILE;
    Free5DMask::new(d.n_t, d.n_v, d.n_u, (0..n).map(|_| rng.random()).collect()).unwrap()
}

fn bitwise_eq(a: &CodedImage, b: &CodedImage) -> bool {
    a.data.len() == b.data.len() && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Largest `|got - want| / |want|`; a zero reference demands an exact zero.
fn max_rel(got: &[f32], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(&g, &w)| match (w == 0.0, g == 0.0) {
            (true, true) => 0.0,
            (true, false) => f64::INFINITY,
            _ => (g as f64 - w).abs() / w.abs(),
        })
        .fold(0.0, f64::max)
}

fn toy_config() -> RunConfig {
    RunConfig::default()
}

// ------------------------------------------------------------------ 1

#[test]
fn c01_forward_oracle() {
    criterion(1, "forward-oracle", || {
        let start = Instant::now();
        let mut worst: f64 = 0.0;
        for (k, d) in [dims(3, 3, 16, 16, 2), dims(5, 5, 16, 16, 4)].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
            for _ in 0..100 {
                let lf = random_lf(d, &mut rng);
                let a = random_aperture(d, &mut rng);
                let p = random_exposure(d.n_t, &mut rng);
                let m = random_mask(d, &mut rng);
                let mut coded = vec![0.0f64; d.pixels()];
                let mut free = vec![0.0f64; d.pixels()];
                for y in 0..d.n_y {
                    for x in 0..d.n_x {
                        for t in 0..d.n_t {
                            for v in 0..d.n_v {
                                for u in 0..d.n_u {
                                    let l = lf.get(t, v, u, y, x) as f64;
                                    coded[y * d.n_x + x] +=
                                        p.get(t, y % 8, x % 8) as f64 * a.get(t, v, u) as f64 * l;
                                    free[y * d.n_x + x] += m.get(t, v, u, y % 8, x % 8) as f64 * l;
                                }
                            }
                        }
                    }
                }
                worst = worst.max(max_rel(&coded_capture(&lf, &a, &p).unwrap().data, &coded));
                worst = worst.max(max_rel(&free5d_capture(&lf, &m).unwrap().data, &free));
            }
        }
        let took = start.elapsed();
        ensure(worst <= 1e-5, || format!("max relative error {worst:.3e} > 1e-5"))?;
        ensure(took < Duration::from_secs(10), || format!("took {took:?}, limit 10 s"))?;
        Ok(format!("200 instances, max relative error {worst:.2e}, {:.2} s", took.as_secs_f64()))
    });
}

// ------------------------------------------------------------------ 2

#[test]
fn c02_degeneracy() {
    criterion(2, "degeneracy-identities", || {
        let mut cases = 0;
        for (k, d) in [dims(3, 3, 16, 16, 2), dims(5, 5, 16, 16, 4), dims(3, 3, 32, 32, 2)].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + k as u64);
            for i in 0..30 {
                let lf = random_lf(d, &mut rng);
                let ord = ordinary_capture(&lf);
                let uni = coded_capture(&lf, &AperturePattern::uniform(d, 1.0), &ExposureTile::ones(d.n_t)).unwrap();
                ensure(bitwise_eq(&uni, &ord), || format!("uniform patterns differ from ordinary at {d:?}"))?;
                // random patterns and the deployed A+P initial patterns
                let (a, p) = if i % 2 == 0 {
                    (random_aperture(d, &mut rng), random_exposure(d.n_t, &mut rng))
                } else {
                    let e = export(&make_variant(Variant::APlusP, d, i));
                    (e.aperture, e.exposure)
                };
                let m = Free5DMask::factorized(&a, &p).unwrap();
                let ap = coded_capture(&lf, &a, &p).unwrap();
                let fr = free5d_capture(&lf, &m).unwrap();
                ensure(bitwise_eq(&ap, &fr), || format!("factorized mask differs from A+P at {d:?}"))?;
                cases += 1;
            }
        }
        Ok(format!("{cases} instances bitwise identical"))
    });
}

// ------------------------------------------------------------------ 3

#[test]
fn c03_gradients() {
    criterion(3, "gradient-correctness", || {
        let start = Instant::now();
        let mut lines = Vec::new();
        for case in operator_catalog() {
            let r = check_case(&case, 20).map_err(|e| format!("{}: {e}", case.name))?;
            ensure(r.passed && r.nonzero > 0, || format!("{}: {:?}", case.name, r.worst))?;
            lines.push(case.name);
        }
        let mut tensors = 0;
        for variant in [Variant::APlusP, Variant::Free5D] {
            for (name, r) in common::audit_until(variant, 3) {
                ensure(r.passed, || format!("{variant} {name}: relative error {:.3e}", r.max_rel_error))?;
                ensure(r.nonzero >= 3, || format!("{variant} {name}: only {} kink-free probes", r.nonzero))?;
                tensors += 1;
            }
        }
        let took = start.elapsed();
        ensure(took < Duration::from_secs(120), || format!("took {took:?}, limit 120 s"))?;
        Ok(format!("{} operators x 20 points, {tensors} end-to-end parameter tensors", lines.len()))
    });
}

// ------------------------------------------------------------------ 4

/// All-pairs search over 0/1 row and column indicators for one time slice.
fn tile_is_outer_product(p: &ExposureTile, t: usize) -> bool {
    (0u32..256).any(|rows| {
        (0u32..256).any(|cols| {
            (0..TILE).all(|j| {
                (0..TILE).all(|i| {
                    let want = ((rows >> j) & 1) * ((cols >> i) & 1);
                    p.get(t, j, i) == want as f32
                })
            })
        })
    })
}

fn check_hardware(e: &ExportedPatterns, d: Dims) -> Result<(), String> {
    let who = e.variant;
    let p = &e.exposure;
    ensure(p.values().iter().all(|&v| v == 0.0 || v == 1.0), || format!("{who}: exposure not binary"))?;
    for t in 0..p.n_t {
        ensure(tile_is_outer_product(p, t), || format!("{who}: t={t} tile is not row-column separable"))?;
    }
    // the exposure the sensor model applies repeats every 8 pixels
    for t in 0..d.n_t {
        let lf = LightField5D::from_fn(d, |tt, _, _, _, _| f32::from(tt == t));
        let img = coded_capture(&lf, &AperturePattern::uniform(d, 1.0), p).unwrap();
        for y in 0..d.n_y {
            for x in 0..d.n_x {
                ensure(img.get(y, x) == img.get(y % TILE, x % TILE), || format!("{who}: not 8x8-periodic at ({x},{y})"))?;
            }
        }
    }
    ensure(e.aperture.values().iter().all(|v| (0.0..=1.0).contains(v)), || format!("{who}: aperture outside [0,1]"))?;
    if let Some(m) = &e.mask {
        ensure(m.values().iter().all(|v| (0.0..=1.0).contains(v)), || format!("{who}: mask outside [0,1]"))?;
    }
    Ok(())
}

/// Re-reads `patterns.csv` as written to disk.
fn check_written(e: &ExportedPatterns, dir: &Path) -> Result<(), String> {
    e.write(dir).map_err(|err| err.to_string())?;
    let text = std::fs::read_to_string(dir.join("patterns.csv")).map_err(|err| err.to_string())?;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let v: f32 = f[4].parse().map_err(|_| format!("bad value in {line}"))?;
        let ok = match f[0] {
            "exposure" => v == 0.0 || v == 1.0,
            _ => (0.0..=1.0).contains(&v),
        };
        ensure(ok, || format!("{}: exported row {line} violates constraints", e.variant))?;
    }
    Ok(())
}

#[test]
fn c04_hardware_constraints() {
    criterion(4, "hardware-constraints", || {
        let cfg = toy_config();
        let mut checked = 0;
        for seed in 0..20 {
            for v in Variant::ALL {
                check_hardware(&export(&make_variant(v, cfg.dims, seed)), cfg.dims)?;
                checked += 1;
            }
        }
        let mut cache = lock(&CACHE);
        for v in Variant::ALL {
            let e = cache.get(&cfg, v).map_err(|err| err.to_string())?.export_patterns();
            check_hardware(&e, cfg.dims)?;
            check_written(&e, &OUT.path().join(format!("c04-{}", v.name().replace('+', "p"))))?;
            checked += 1;
        }
        Ok(format!("{checked} exported pattern sets, 5 of them trained"))
    });
}

// ------------------------------------------------------------------ 5, 6, 9

fn bench_checks(name: &str) -> Result<(Vec<(String, bool, String)>, Duration), String> {
    let cfg = toy_config();
    let mut cache = lock(&CACHE);
    let start = Instant::now();
    let o = run_benchmark_cached(name, &cfg, &OUT.path().join("bench"), &mut cache).map_err(|e| e.to_string())?;
    Ok((o.checks.into_iter().map(|c| (c.name, c.passed, c.detail)).collect(), start.elapsed()))
}

fn require(checks: &[(String, bool, String)], names: &[&str]) -> Outcome {
    let mut details = Vec::new();
    let mut failed = Vec::new();
    for n in names {
        let (_, ok, d) = checks.iter().find(|c| c.0 == *n).ok_or_else(|| format!("check {n} missing"))?;
        details.push(format!("{n}: {d}"));
        if !ok {
            failed.push(*n);
        }
    }
    if failed.is_empty() {
        Ok(details.join("; "))
    } else {
        Err(format!("failed {failed:?}; {}", details.join("; ")))
    }
}

#[test]
fn c05_toy_training_converges() {
    criterion(5, "toy-train-loss-ratio", || {
        let (checks, took) = bench_checks("toy-train")?;
        ensure(took <= Duration::from_secs(15 * 60), || format!("took {took:?}, limit 15 min"))?;
        require(&checks, &["loss-ratio"])
    });
}

#[test]
fn c06_ablation_ordering() {
    criterion(6, "ablation-ordering", || {
        let (checks, _) = bench_checks("ablation-toy")?;
        require(&checks, &["a+p-beats-ordinary", "free5d-near-a+p"])
    });
}

#[test]
fn c09_psf_distinctness() {
    criterion(9, "psf-distinctness", || {
        let (checks, _) = bench_checks("psf-grid")?;
        require(&checks, &["psf-distinct"])
    });
}

// ------------------------------------------------------------------ 7

/// Tent-kernel weight of the impulse at texel `(ix, iy)` seen by pixel
/// `(x, y)` of view `(u, v)` at time `t`.
fn impulse_oracle(d: Dims, md: MotionDisparity, origin: (usize, usize), imp: (usize, usize), t: usize, v: usize, u: usize, y: usize, x: usize) -> f64 {
    let cu = u as f64 - (d.n_u / 2) as f64;
    let cv = v as f64 - (d.n_v / 2) as f64;
    let sx = origin.0 as f64 + x as f64 - md.d as f64 * cu - md.alpha_x as f64 * t as f64;
    let sy = origin.1 as f64 + y as f64 - md.d as f64 * cv - md.alpha_y as f64 * t as f64;
    let tent = |s: f64, c: usize| (1.0 - (s - c as f64).abs()).max(0.0);
    tent(sx, imp.0) * tent(sy, imp.1)
}

#[test]
fn c07_synthesis_impulses() {
    criterion(7, "synthesis-impulses", || {
        let d = dims(3, 3, 16, 16, 3);
        let (origin, imp) = ((24, 24), (32, 31));
        let tex = Texture::impulses(64, 64, &[imp]).unwrap();
        let mut integer = 0;
        let mut worst: f64 = 0.0;
        let mut fractional = 0;
        let mut cases = Vec::new();
        for ax in -2..=2 {
            for ay in -2..=2 {
                for dd in [-1, 0, 1, 2] {
                    cases.push((ax as f32, ay as f32, dd as f32, true));
                }
            }
        }
        for (ax, ay, dd) in [(0.5, -0.25, 0.3), (-1.5, 0.75, -0.6), (0.1, 1.9, 1.25), (2.0, 0.0, 0.5), (-0.3, -0.7, 0.0)] {
            cases.push((ax, ay, dd, false));
        }
        for (ax, ay, dd, is_int) in cases {
            let md = MotionDisparity::new(ax, ay, dd).unwrap();
            let lf = synth_plane(&tex, md, d, origin, Boundary::Strict).map_err(|e| e.to_string())?;
            let mut mass = 0.0f64;
            for t in 0..d.n_t {
                for v in 0..d.n_v {
                    for u in 0..d.n_u {
                        for y in 0..d.n_y {
                            for x in 0..d.n_x {
                                let want = impulse_oracle(d, md, origin, imp, t, v, u, y, x);
                                let got = lf.get(t, v, u, y, x) as f64;
                                mass += got;
                                if is_int {
                                    ensure(got == want, || format!("integer case {md:?} differs at {t},{v},{u},{y},{x}: {got} vs {want}"))?;
                                } else {
                                    worst = worst.max((got - want).abs());
                                }
                            }
                        }
                    }
                }
            }
            if is_int {
                // the impulse stays inside every frame, so each view holds unit mass
                ensure(mass == d.rays_per_pixel() as f64, || format!("integer case {md:?} mass {mass}"))?;
                integer += 1;
            } else {
                fractional += 1;
            }
        }
        ensure(worst <= 1e-6, || format!("fractional error {worst:.3e} > 1e-6"))?;
        Ok(format!("{integer} integer cases exact, {fractional} fractional within {worst:.1e}"))
    });
}

// ------------------------------------------------------------------ 8

#[test]
fn c08_dataset_combinatorics() {
    criterion(8, "dataset-combinatorics", || {
        let grid = motion_grid();
        let distinct: BTreeSet<(i32, i32)> = grid.iter().map(|&(x, y)| (x as i32, y as i32)).collect();
        let full: BTreeSet<(i32, i32)> = (-2..=2).flat_map(|y| (-2..=2).map(move |x| (x, y))).collect();
        ensure(grid.len() == 25 && distinct == full, || format!("motion grid {grid:?}"))?;
        let (size, patch, stride, n_t) = (40usize, 16usize, 8usize, 2usize);
        let scales = [1.0f32, 0.5];
        let spec = SourceSpec { count: 3, size, n_u: 3, n_v: 3, d_max: 1.0, seed: 5 };
        let ds = Dataset::build(spec.generate().map_err(|e| e.to_string())?, patch, stride, &scales, &grid, n_t)
            .map_err(|e| e.to_string())?;
        let margin = 2 * (n_t - 1);
        let per_axis = (size - 2 * margin - patch) / stride + 1;
        let patches = spec.count * per_axis * per_axis;
        let want = patches * scales.len() * 25;
        ensure(ds.len() == want, || format!("dataset has {} samples, expected {want}", ds.len()))?;
        let parsed = dynlf_core::scene::parse_manifest(&ds.manifest()).map_err(|e| e.to_string())?;
        ensure(parsed.len() == want, || format!("manifest lists {} entries, expected {want}", parsed.len()))?;
        let mut per_patch: BTreeMap<(usize, usize, usize, u32), BTreeSet<(i32, i32)>> = BTreeMap::new();
        for e in &parsed {
            per_patch
                .entry((e.source_id, e.patch_x, e.patch_y, e.scale.to_bits()))
                .or_default()
                .insert((e.alpha_x as i32, e.alpha_y as i32));
        }
        ensure(per_patch.len() == patches * scales.len(), || format!("{} patch/scale pairs", per_patch.len()))?;
        ensure(per_patch.values().all(|m| *m == full), || "some patch lacks one of the 25 motions".into())?;
        // the motion is really applied: frame 1 is frame 0 shifted by alpha
        let i = parsed.iter().position(|e| (e.alpha_x, e.alpha_y) == (2.0, -1.0)).expect("motion present");
        let lf = ds.sample(i).map_err(|e| e.to_string())?;
        for y in 2..patch - 2 {
            for x in 2..patch - 2 {
                ensure(lf.get(1, 1, 1, y, x) == lf.get(0, 1, 1, y + 1, x - 2), || format!("motion not applied at ({x},{y})"))?;
            }
        }
        Ok(format!("{patches} patches x {} scales x 25 motions = {want} manifest entries", scales.len()))
    });
}

// ------------------------------------------------------------------ 10

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn c10_determinism() {
    criterion(10, "determinism", || {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
        let mut cfg = toy_config();
        cfg.train.steps = 40;
        let runs: Vec<BTreeMap<PathBuf, Vec<u8>>> = (0..2)
            .map(|r| {
                let dir = OUT.path().join(format!("c10-run{r}"));
                pool.install(|| {
                    let mut cache = TrainedCache::default();
                    for b in BENCHMARKS {
                        run_benchmark_cached(b, &cfg, &dir, &mut cache).map_err(|e| e.to_string())?;
                    }
                    Ok::<_, String>(files_under(&dir))
                })
            })
            .collect::<Result<_, _>>()?;
        ensure(runs[0].keys().eq(runs[1].keys()), || "artifact sets differ".into())?;
        for (path, bytes) in &runs[0] {
            ensure(runs[1][path] == *bytes, || format!("{} differs between runs", path.display()))?;
        }

        // resume from a mid-run checkpoint
        cfg.train.steps = 30;
        let (whole, resumed) = pool.install(|| {
            let whole = train_variant(&cfg, cfg.variant)?;
            let data = cfg.dataset(&cfg.data)?;
            let mut first = TrainState::new(Model::new(cfg.model_config(), cfg.seed)?);
            train_until(&mut first, &data, &cfg.train, 13, |_| Ok(()))?;
            let path = OUT.path().join("c10-resume.lfck");
            save_checkpoint(&path, &first, cfg.seed)?;
            let (mut resumed, _) = load_checkpoint(&path, &cfg.model_config())?;
            train(&mut resumed, &data, &cfg.train)?;
            let head = first.log;
            resumed.log = head.into_iter().chain(resumed.log).collect();
            Ok::<_, dynlf_core::Error>((whole, resumed))
        })
        .map_err(|e| e.to_string())?;
        ensure(encode_checkpoint(&whole, cfg.seed) == encode_checkpoint(&resumed, cfg.seed), || {
            "resumed parameters or optimizer state differ".into()
        })?;
        ensure(loss_csv(&whole.log) == loss_csv(&resumed.log), || "resumed loss log differs".into())?;
        Ok(format!("{} artifacts of {} benchmarks bitwise equal; resume at step 13 of 30 exact", runs[0].len(), BENCHMARKS.len()))
    });
}

// ------------------------------------------------------------------ 11

#[test]
fn c11_region_timing() {
    criterion(11, "region-timing-consistency", || {
        let rt = RegionTiming::staggered();
        let mut captures = 0;
        for (k, d) in [dims(3, 3, 32, 32, 2), dims(5, 5, 16, 16, 4), dims(3, 3, 32, 32, 4)].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(1100 + k as u64);
            for _ in 0..10 {
                let frame = random_lf(d.with_time(1), &mut rng);
                let ext = d.with_time(rt.time_extent(d.n_t));
                let long = LightField5D::from_fn(ext, |_, v, u, y, x| frame.get(0, v, u, y, x));
                let a = random_aperture(d, &mut rng);
                let p = random_exposure(d.n_t, &mut rng);
                let staggered = capture_with_region_timing(&long, &a, &p, &rt).map_err(|e| e.to_string())?;
                let plain = coded_capture(&long.time_window(0, d.n_t).unwrap(), &a, &p).unwrap();
                ensure(bitwise_eq(&staggered, &plain), || format!("region-timed capture differs at {d:?}"))?;
                captures += 1;
            }
        }

        let d = dims(3, 3, 32, 32, 2);
        let mut regions = 0;
        for variant in [Variant::APlusP, Variant::Free5D] {
            let cfg = ModelConfig { dims: d, variant, recnet: RecNetConfig::toy(d), noise_sigma: 0.005, region_timing: true };
            let model = Model::new(cfg, 3).map_err(|e| e.to_string())?;
            ensure(model.recnets.len() == 4, || format!("{} region networks", model.recnets.len()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(1111);
            let frame = random_lf(d.with_time(1), &mut rng);
            let lf = LightField5D::from_fn(d, |_, v, u, y, x| frame.get(0, v, u, y, x));
            let packed = model.acquire(&lf, None, ExposureMode::Binary, 1.0).map_err(|e| e.to_string())?;
            let outs: Vec<LightField5D> =
                (0..4).map(|k| model.reconstruct(&packed, k)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
            let bits = |lf: &LightField5D| lf.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            for k in 1..4 {
                ensure(bits(&outs[k]) == bits(&outs[0]), || format!("{variant}: region {k} output differs from region 0"))?;
            }
            let joined = model.infer(&lf, ExposureMode::Binary, 1.0).map_err(|e| e.to_string())?;
            ensure(bits(&joined) == bits(&outs[0]), || format!("{variant}: banded inference differs"))?;
            regions += 4;
        }
        Ok(format!("{captures} static captures bitwise equal; {regions} region outputs identical"))
    });
}
