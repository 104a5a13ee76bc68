//! `bnngp`: desk-scale experiments on bottleneck NNGPs, emitted as CSV.

mod lists;

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bnngp::analytics::{self, BottleneckGeometry};
use bnngp::data::{self, fmt_num, Dataset, ResultTable};
use bnngp::likelihood::{self, GradientMethod, OptConfig};
use bnngp::sampler;
use bnngp::{Architecture, Error, Hyperparams, Matrix, Nonlinearity, RngSeed};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lists::{parse_f64_list, parse_usize_list};

#[derive(Parser, Debug)]
#[command(name = "bnngp", version, about = "Bottleneck NNGP experiments; every command writes a long-format CSV")]
struct Cli {
    /// Root seed of every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output CSV path (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the 120-point Rings dataset (columns x_0, x_1, x_2, y_0).
    RingsGen(RingsArgs),
    /// Optimize hyperparameters on an (H, D2) grid plus the H = inf column.
    /// Columns: width, d2, status, iterations, converged, v_b, v_w, v_n, mll, mll_std_error, mll_per_n, message.
    MllSweep(SweepArgs),
    /// Quadratic correlation of two outputs at a single bottleneck.
    /// Columns: width, depth, beta, theory, sim_mean, sim_std, sim_std_error, z_score.
    Quadcorr(QuadcorrArgs),
    /// Infinite-depth correlations and depth scale over a v_w grid.
    /// Columns: quantity, alpha, beta, v_w, value.
    Phase(PhaseArgs),
    /// Quadratic correlation with several equally spaced bottlenecks.
    /// Columns: width, n_bottlenecks, positions, q_cross_mean, q_cross_std, q_cross_std_error.
    MultiBottleneck(MultiArgs),
    /// Monte-Carlo MLL of wide bottlenecks against the no-bottleneck limit.
    /// Columns: width, mll, mll_std_error, mll_limit, abs_gap, z_error.
    Correspondence(CorrespondenceArgs),
}

#[derive(Args, Debug)]
struct RingsArgs {
    /// Standardize inputs and targets before writing.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset CSV with x_* and y_* columns (default: Rings).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Use the data as given instead of standardizing it.
    #[arg(long)]
    raw: bool,
    /// Keep every k-th row only.
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Phi {
    Relu,
    Sinusoidal,
}

impl Phi {
    fn get(self) -> Nonlinearity {
        match self {
            Phi::Relu => Nonlinearity::NormalizedRelu,
            Phi::Sinusoidal => Nonlinearity::Sinusoidal,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Grad {
    Analytic,
    Fd,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Wide hidden layers before the bottleneck.
    #[arg(long, default_value_t = 1)]
    d1: usize,
    #[arg(long, default_value = "2,8,64,1024")]
    widths: String,
    /// Wide hidden layers after the bottleneck.
    #[arg(long, default_value = "1,3,7")]
    depths: String,
    #[arg(long, default_value_t = 100)]
    n_mc: usize,
    #[arg(long, default_value_t = 1000)]
    final_n_mc: usize,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, value_enum, default_value_t = Phi::Relu)]
    phi: Phi,
    #[arg(long, value_enum, default_value_t = Grad::Analytic)]
    gradient: Grad,
    #[arg(long, default_value_t = likelihood::DEFAULT_INIT.v_b)]
    init_vb: f64,
    #[arg(long, default_value_t = likelihood::DEFAULT_INIT.v_w)]
    init_vw: f64,
    #[arg(long, default_value_t = likelihood::DEFAULT_INIT.v_n)]
    init_vn: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Mode {
    Theory,
    Sim,
    Compare,
}

#[derive(Args, Debug)]
struct QuadcorrArgs {
    #[arg(long, value_enum, default_value_t = Mode::Compare)]
    mode: Mode,
    /// Bottleneck widths, e.g. `1..10` or `1,2,4`.
    #[arg(long, default_value = "1..10")]
    h_list: String,
    /// Weight layers after the bottleneck.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Wide hidden layers before the bottleneck.
    #[arg(long, default_value_t = 1)]
    d1: usize,
    #[arg(long, default_value_t = 1.0)]
    vb: f64,
    #[arg(long, default_value_t = 1.0)]
    vw: f64,
    #[arg(long, default_value_t = 1e-4)]
    vn: f64,
    /// Angle between the inputs (1, 0) and (cos a, sin a); accepts `0.5pi`.
    #[arg(long, default_value = "0.5pi")]
    alpha: String,
    #[arg(long, default_value_t = 1_000_000)]
    n_samples: usize,
    #[arg(long, default_value_t = 10)]
    n_runs: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Quantity {
    QxInf,
    QInf,
    DepthScale,
}

impl Quantity {
    fn name(self) -> &'static str {
        match self {
            Quantity::QxInf => "qx-inf",
            Quantity::QInf => "q-inf",
            Quantity::DepthScale => "depth-scale",
        }
    }
}

#[derive(Args, Debug)]
struct PhaseArgs {
    #[arg(long, value_enum)]
    quantity: Quantity,
    /// Comma list and/or `lo:step:hi` ranges.
    #[arg(long, default_value = "0.5:0.01:2")]
    vw_grid: String,
    #[arg(long, default_value = "0.1pi,0.3pi,0.5pi,0.7pi,0.9pi")]
    alpha_list: String,
    #[arg(long, default_value_t = 0.09)]
    vb: f64,
    #[arg(long, default_value_t = 0.0)]
    vn: f64,
    #[arg(long = "H", default_value_t = 2)]
    width: usize,
}

#[derive(Args, Debug)]
struct MultiArgs {
    #[arg(long, default_value = "1..10")]
    widths: String,
    #[arg(long, default_value = "0..3")]
    n_bottlenecks_list: String,
    #[arg(long, default_value_t = 11)]
    total_hidden: usize,
    #[arg(long, default_value_t = 1.0)]
    vb: f64,
    #[arg(long, default_value_t = 1.0)]
    vw: f64,
    #[arg(long, default_value_t = 1e-4)]
    vn: f64,
    #[arg(long, default_value_t = 1_000_000)]
    n_samples: usize,
    #[arg(long, default_value_t = 10)]
    n_runs: usize,
}

#[derive(Args, Debug)]
struct CorrespondenceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1)]
    d1: usize,
    #[arg(long, default_value_t = 1)]
    d2: usize,
    #[arg(long, default_value = "4,16,64,256,1024")]
    width_ladder: String,
    #[arg(long, default_value_t = 200)]
    n_mc: usize,
    #[arg(long, default_value_t = 0.1)]
    vb: f64,
    #[arg(long, default_value_t = 1.0)]
    vw: f64,
    #[arg(long, default_value_t = 0.01)]
    vn: f64,
    #[arg(long, value_enum, default_value_t = Phi::Relu)]
    phi: Phi,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(Error::Io(_) | Error::Parse { .. }) => 3,
            Failure::Core(e) if e.is_numerical() => 2,
            Failure::Core(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("bnngp: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Outcome<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| usage(e.to_string()))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Outcome<()> {
    let seed = RngSeed(cli.seed);
    let out = cli.out.as_deref();
    match &cli.cmd {
        Command::RingsGen(a) => rings_gen(a, out),
        Command::MllSweep(a) => mll_sweep(a, seed, out),
        Command::Quadcorr(a) => quadcorr(a, seed, out),
        Command::Phase(a) => phase(a, out),
        Command::MultiBottleneck(a) => multi_bottleneck(a, seed, out),
        Command::Correspondence(a) => correspondence(a, seed, out),
    }
}

fn open_out(out: Option<&Path>) -> Outcome<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", p.display()))))?;
            Box::new(BufWriter::new(f))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(table: &ResultTable, out: Option<&Path>) -> Outcome<()> {
    let mut w = open_out(out)?;
    table.write_to(&mut w)?;
    w.flush().map_err(Error::Io)?;
    Ok(())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(";")
}

fn hyper(v_b: f64, v_w: f64, v_n: f64) -> Outcome<Hyperparams> {
    Ok(Hyperparams::new(v_b, v_w, v_n)?)
}

fn load_data(a: &DataArgs) -> Outcome<Dataset> {
    if a.stride == 0 {
        return Err(usage("--stride must be at least 1"));
    }
    let raw = match &a.data {
        Some(p) => data::load_csv(p)?,
        None => data::generate_rings(),
    };
    let d = if a.raw { raw } else { data::standardize(&raw)? };
    let idx: Vec<usize> = (0..d.len()).step_by(a.stride).collect();
    Ok(d.subset(&idx))
}

fn data_config(t: &mut ResultTable, a: &DataArgs, d: &Dataset) {
    let src = a.data.as_ref().map_or("rings".to_string(), |p| p.display().to_string());
    t.config("data", src)
        .config("standardized", !a.raw)
        .config("stride", a.stride)
        .config("n", d.len())
        .config("m", d.x.cols())
        .config("l", d.y.cols());
}

fn rings_gen(a: &RingsArgs, out: Option<&Path>) -> Outcome<()> {
    let mut d = data::generate_rings();
    if a.standardize {
        d = data::standardize(&d)?;
    }
    let mut w = open_out(out)?;
    data::write_csv(&mut w, &d)?;
    w.flush().map_err(Error::Io)?;
    Ok(())
}

fn mll_sweep(a: &SweepArgs, seed: RngSeed, out: Option<&Path>) -> Outcome<()> {
    let d = load_data(&a.data)?;
    let widths = parse_usize_list(&a.widths).map_err(usage)?;
    let depths = parse_usize_list(&a.depths).map_err(usage)?;
    let init = hyper(a.init_vb, a.init_vw, a.init_vn)?;
    let cfg = OptConfig {
        n_mc: a.n_mc,
        lr0: a.lr,
        max_iters: a.max_iters,
        final_n_mc: a.final_n_mc,
        gradient: match a.gradient {
            Grad::Analytic => GradientMethod::Analytic,
            Grad::Fd => GradientMethod::FiniteDifference,
        },
        ..OptConfig::default()
    };
    if cfg.n_mc == 0 || cfg.final_n_mc == 0 {
        return Err(usage("Monte-Carlo sample counts must be positive"));
    }
    let phi = a.phi.get();
    let cells = likelihood::mll_sweep(&d.x, &d.y, a.d1, &widths, &depths, &phi, &init, &cfg, seed)?;

    let mut t = ResultTable::new(&[
        "width", "d2", "status", "iterations", "converged", "v_b", "v_w", "v_n", "mll", "mll_std_error", "mll_per_n",
        "message",
    ]);
    t.config("command", "mll-sweep").config("seed", seed.0);
    data_config(&mut t, &a.data, &d);
    t.config("d1", a.d1)
        .config("widths", join(&widths))
        .config("depths", join(&depths))
        .config("phi", phi.name())
        .config("n_mc", cfg.n_mc)
        .config("final_n_mc", cfg.final_n_mc)
        .config("max_iters", cfg.max_iters)
        .config("lr0", fmt_num(cfg.lr0))
        .config("window", cfg.window)
        .config("rel_tol", fmt_num(cfg.rel_tol))
        .config("gradient", format!("{:?}", cfg.gradient))
        .config("init", format!("v_b={} v_w={} v_n={}", fmt_num(init.v_b), fmt_num(init.v_w), fmt_num(init.v_n)));
    let mut ok = 0;
    for c in &cells {
        let w = c.width.map_or("inf".to_string(), |w| w.to_string());
        let row = match &c.outcome {
            Ok(r) => {
                ok += 1;
                vec![
                    w,
                    c.d2.to_string(),
                    "ok".into(),
                    r.iterations.to_string(),
                    r.converged.to_string(),
                    fmt_num(r.hyperparams.v_b),
                    fmt_num(r.hyperparams.v_w),
                    fmt_num(r.hyperparams.v_n),
                    fmt_num(r.final_mll),
                    fmt_num(r.final_std_error),
                    fmt_num(c.mll_per_n),
                    String::new(),
                ]
            }
            Err(m) => {
                let mut row = vec![w, c.d2.to_string(), "failed".into()];
                row.extend(std::iter::repeat(String::new()).take(8));
                row.push(m.clone());
                row
            }
        };
        t.push(row);
    }
    emit(&t, out)?;
    if ok == 0 {
        return Err(Failure::Core(Error::OptimizationDiverged { iteration: 0, trace: Vec::new() }));
    }
    Ok(())
}

fn unit_pair(alpha: f64) -> Matrix {
    Matrix::from_rows(&[[1.0, 0.0], [alpha.cos(), alpha.sin()]])
}

fn quadcorr(a: &QuadcorrArgs, seed: RngSeed, out: Option<&Path>) -> Outcome<()> {
    let widths = parse_usize_list(&a.h_list).map_err(usage)?;
    let alpha = single(parse_f64_list(&a.alpha).map_err(usage)?, "--alpha")?;
    if a.d == 0 {
        return Err(usage("--d must be at least 1"));
    }
    if a.mode != Mode::Theory && (a.n_samples < 2 || a.n_runs < 2) {
        return Err(usage("simulation needs at least 2 samples and 2 runs"));
    }
    let h = hyper(a.vb, a.vw, a.vn)?;
    let x = unit_pair(alpha);
    let geom = BottleneckGeometry::from_inputs(x.row(0), x.row(1), &h, a.d1, true)?;
    let beta = geom.beta(0, 1);

    let mut t = ResultTable::new(&["width", "depth", "beta", "theory", "sim_mean", "sim_std", "sim_std_error", "z_score"]);
    t.config("command", "quadcorr")
        .config("seed", seed.0)
        .config("mode", format!("{:?}", a.mode).to_lowercase())
        .config("h_list", join(&widths))
        .config("d", a.d)
        .config("d1", a.d1)
        .config("v_b", fmt_num(a.vb))
        .config("v_w", fmt_num(a.vw))
        .config("v_n", fmt_num(a.vn))
        .config("alpha", fmt_num(alpha))
        .config("inputs", "(1,0);(cos alpha,sin alpha)")
        .config("n_samples", a.n_samples)
        .config("n_runs", a.n_runs);
    for &w in &widths {
        let theory = if a.mode != Mode::Sim {
            Some(analytics::quad_corr_between(&geom, &h, a.d, w, 0, 1)?)
        } else {
            None
        };
        let sim = if a.mode != Mode::Theory {
            let arch = Architecture::single_bottleneck(2, 2, a.d1, w, a.d - 1, Nonlinearity::NormalizedRelu, true)?;
            Some(sampler::quad_corr_runs(&arch, &h, &x, (0, 1), a.n_samples, a.n_runs, seed.child(w as u64))?)
        } else {
            None
        };
        let opt = |v: Option<f64>| v.map_or(String::new(), fmt_num);
        let z = match (&theory, &sim) {
            (Some(th), Some(s)) => Some((th - s.mean) / s.std_error),
            _ => None,
        };
        t.push(vec![
            w.to_string(),
            a.d.to_string(),
            fmt_num(beta),
            opt(theory),
            opt(sim.as_ref().map(|s| s.mean)),
            opt(sim.as_ref().map(|s| s.std)),
            opt(sim.as_ref().map(|s| s.std_error)),
            opt(z),
        ]);
    }
    emit(&t, out)
}

fn single(v: Vec<f64>, flag: &str) -> Outcome<f64> {
    match v.as_slice() {
        [x] => Ok(*x),
        _ => Err(usage(format!("{flag} takes exactly one value"))),
    }
}

fn phase(a: &PhaseArgs, out: Option<&Path>) -> Outcome<()> {
    let grid = parse_f64_list(&a.vw_grid).map_err(usage)?;
    let alphas = parse_f64_list(&a.alpha_list).map_err(usage)?;
    if a.width == 0 {
        return Err(usage("--H must be at least 1"));
    }
    let mut t = ResultTable::new(&["quantity", "alpha", "beta", "v_w", "value"]);
    t.config("command", "phase")
        .config("quantity", a.quantity.name())
        .config("vw_grid", join_f64(&grid));
    if !matches!(a.quantity, Quantity::DepthScale) {
        t.config("alpha_list", join_f64(&alphas));
    }
    t.config("v_b", fmt_num(a.vb))
        .config("v_n", fmt_num(a.vn))
        .config("H", a.width)
        .config("pre_depth", 0)
        .config("bottleneck_noise", true);
    match a.quantity {
        Quantity::DepthScale => {
            for &vw in &grid {
                let h = hyper(a.vb, vw, a.vn)?;
                let lam = analytics::depth_scale(&h);
                t.push(vec![a.quantity.name().into(), String::new(), String::new(), fmt_num(vw), fmt_num(lam)]);
            }
        }
        q => {
            for &alpha in &alphas {
                if !(0.0..=PI).contains(&alpha) {
                    return Err(usage(format!("input angle {alpha} outside [0, pi]")));
                }
                for &vw in &grid {
                    let h = hyper(a.vb, vw, a.vn)?;
                    let geom = BottleneckGeometry::from_input_angle(alpha, &h, true)?;
                    let value = match q {
                        Quantity::QxInf => analytics::quad_corr_between_inf(&geom, &h, a.width, 0, 1)?,
                        _ => analytics::quad_corr_single_inf(&geom, &h, a.width, 0, 1)?,
                    };
                    t.push(vec![
                        q.name().into(),
                        fmt_num(alpha),
                        fmt_num(geom.beta(0, 1)),
                        fmt_num(vw),
                        fmt_num(value),
                    ]);
                }
            }
        }
    }
    emit(&t, out)
}

fn multi_bottleneck(a: &MultiArgs, seed: RngSeed, out: Option<&Path>) -> Outcome<()> {
    let widths = parse_usize_list(&a.widths).map_err(usage)?;
    let counts = parse_usize_list(&a.n_bottlenecks_list).map_err(usage)?;
    if a.n_samples < 2 || a.n_runs < 2 {
        return Err(usage("simulation needs at least 2 samples and 2 runs"));
    }
    let h = hyper(a.vb, a.vw, a.vn)?;
    let x = unit_pair(PI / 2.0);
    let mut t = ResultTable::new(&["width", "n_bottlenecks", "positions", "q_cross_mean", "q_cross_std", "q_cross_std_error"]);
    t.config("command", "multi-bottleneck")
        .config("seed", seed.0)
        .config("widths", join(&widths))
        .config("n_bottlenecks_list", join(&counts))
        .config("total_hidden", a.total_hidden)
        .config("v_b", fmt_num(a.vb))
        .config("v_w", fmt_num(a.vw))
        .config("v_n", fmt_num(a.vn))
        .config("inputs", "(1,0);(0,1)")
        .config("n_samples", a.n_samples)
        .config("n_runs", a.n_runs);
    for &nb in &counts {
        for &w in &widths {
            let cell = seed.child(((w as u64) << 8) | nb as u64);
            let r = sampler::multi_bottleneck_experiment(a.total_hidden, nb, w, &h, &x, a.n_samples, a.n_runs, cell)?;
            t.push(vec![
                w.to_string(),
                nb.to_string(),
                join(&r.positions),
                fmt_num(r.q_cross.mean),
                fmt_num(r.q_cross.std),
                fmt_num(r.q_cross.std_error),
            ]);
        }
    }
    emit(&t, out)
}

fn correspondence(a: &CorrespondenceArgs, seed: RngSeed, out: Option<&Path>) -> Outcome<()> {
    let d = load_data(&a.data)?;
    let widths = parse_usize_list(&a.width_ladder).map_err(usage)?;
    if a.n_mc == 0 {
        return Err(usage("--n-mc must be positive"));
    }
    let h = hyper(a.vb, a.vw, a.vn)?;
    let phi = a.phi.get();
    let rows = sampler::wide_correspondence_check(a.d1, a.d2, &widths, &h, &phi, &d.x, &d.y, a.n_mc, seed)?;
    let mut t = ResultTable::new(&["width", "mll", "mll_std_error", "mll_limit", "abs_gap", "z_error"]);
    t.config("command", "correspondence").config("seed", seed.0);
    data_config(&mut t, &a.data, &d);
    t.config("d1", a.d1)
        .config("d2", a.d2)
        .config("width_ladder", join(&widths))
        .config("n_mc", a.n_mc)
        .config("z_error_reps", sampler::Z_ERROR_REPS)
        .config("v_b", fmt_num(a.vb))
        .config("v_w", fmt_num(a.vw))
        .config("v_n", fmt_num(a.vn))
        .config("phi", phi.name());
    for r in rows {
        t.push(vec![
            r.width.to_string(),
            fmt_num(r.mll),
            fmt_num(r.mll_std_error),
            fmt_num(r.mll_limit),
            fmt_num(r.abs_gap),
            fmt_num(r.z_error),
        ]);
    }
    emit(&t, out)
}
