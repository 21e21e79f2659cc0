use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use smile::data::{center, load_csv, read_header, Dataset, RoleMap};
use smile::inference::{sbll_curve, standard_errors, write_curve_csv, GridSpec, RefitFit, SbllOptions};
use smile::select::{fit_variant, ModelStructure, SelectionConfig, TuningReport, Variant};
use smile::sim::{run_experiment, write_experiment, ExperimentConfig};
use smile::Error;

#[derive(Parser)]
#[command(name = "smile", version, about = "Structure selection and inference for additive partially linear models")]
struct Cli {
    /// Worker threads for replicate and grid parallelism (default: all cores).
    #[arg(long, global = true, env = "SMILE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select the model structure on a CSV file, refit, and write bands.
    Fit(FitArgs),
    /// Run a replicated simulation experiment.
    Simulate(SimulateArgs),
    /// Recompute band tables from a previous `fit` directory.
    Bands(BandsArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Data file with a header row.
    #[arg(long)]
    input: PathBuf,
    /// JSON role map `{"response", "z", "x"}`; default uses y / z_* / x_* prefixes.
    #[arg(long)]
    roles: Option<PathBuf>,
    /// Selection config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Recorded in run metadata; the fit itself is deterministic.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Points per band grid.
    #[arg(long, default_value_t = 101)]
    grid: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BandsArgs {
    /// Output directory of a previous `fit`.
    #[arg(long)]
    input: PathBuf,
    /// Where to write the curves (default: `<input>/curves`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 101)]
    grid: usize,
}

/// Failure tagged with the stage that raised it.
struct Failure {
    stage: &'static str,
    error: Error,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<Error>> Stage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure { stage, error: e.into() })
    }
}

/// Everything `bands` needs to rebuild curves without refitting.
#[derive(Serialize, Deserialize)]
struct SavedModel {
    variant: Variant,
    config: SelectionConfig,
    refit: RefitFit,
    data: Dataset,
}

#[derive(Serialize)]
struct StructureReport<'a> {
    variant: Variant,
    s_z: Vec<&'a str>,
    s_x_pl: Vec<&'a str>,
    s_x_ln: Vec<&'a str>,
    s_x_pn: Vec<&'a str>,
    indices: &'a ModelStructure,
    n_knots_select: Option<usize>,
    outer_iterations: Option<usize>,
    tuning: &'a [TuningReport],
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    threads: usize,
    input: String,
    data_fingerprint: u64,
    n: usize,
    p1: usize,
    p2: usize,
    config: &'a SelectionConfig,
    alpha: f64,
    grid: usize,
    seconds: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_curves(ds: &Dataset, fit: &RefitFit, dir: &Path, alpha: f64, grid: usize) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).stage("write")?;
    for l in fit.structure.s_x_nonlinear() {
        let opts = SbllOptions { alpha, bandwidth: None };
        let curve = sbll_curve(ds, fit, l, &GridSpec::Uniform(grid), opts).stage("bands")?;
        write_curve_csv(&curve, dir.join(format!("{}.csv", ds.column_names.x[l]))).stage("write")?;
    }
    Ok(())
}

fn write_coefficients(ds: &Dataset, fit: &RefitFit, path: &Path) -> Result<(), Failure> {
    let se = standard_errors(fit, ds).stage("inference")?;
    let mut rows = String::from("term,block,estimate,std_error\n");
    let terms = fit.structure.s_z.iter().map(|&k| (&ds.column_names.z[k], "Z"));
    let terms = terms.chain(fit.structure.s_x_pl.iter().map(|&l| (&ds.column_names.x[l], "X")));
    let est = fit.alpha_star.iter().chain(&fit.beta_star);
    for (((name, block), b), s) in terms.zip(est).zip(&se) {
        rows.push_str(&format!("{name},{block},{b},{s}\n"));
    }
    std::fs::write(path, rows).stage("write")
}

fn cmd_fit(args: &FitArgs, threads: usize) -> Result<(), Failure> {
    let start = Instant::now();
    let roles = match &args.roles {
        Some(p) => RoleMap::from_json_file(p).stage("roles")?,
        None => RoleMap::from_prefixes(&read_header(&args.input).stage("load")?).stage("roles")?,
    };
    let raw = load_csv(&args.input, &roles).stage("load")?;
    let cfg = match &args.config {
        Some(p) => SelectionConfig::from_json_file(p).stage("config")?,
        None => SelectionConfig::default(),
    };
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidArgs(format!("alpha must be in (0, 1), got {}", args.alpha))).stage("config");
    }
    let ds = center(&raw).stage("load")?;
    let model = fit_variant(&ds, &cfg, cfg.variant, None).stage("select")?;
    std::fs::create_dir_all(&args.out).stage("write")?;

    let names = |idx: &[usize]| idx.iter().map(|&l| ds.column_names.x[l].as_str()).collect::<Vec<_>>();
    let st = &model.structure;
    let report = StructureReport {
        variant: model.variant,
        s_z: st.s_z.iter().map(|&k| ds.column_names.z[k].as_str()).collect(),
        s_x_pl: names(&st.s_x_pl),
        s_x_ln: names(&st.s_x_ln),
        s_x_pn: names(&st.s_x_pn),
        indices: st,
        n_knots_select: model.selection.as_ref().map(|s| s.n_knots),
        outer_iterations: model.selection.as_ref().map(|s| s.outer_iterations),
        tuning: model.selection.as_ref().map_or(&[], |s| &s.tuning),
    };
    write_json(&args.out.join("structure.json"), &report).stage("write")?;
    write_coefficients(&ds, &model.refit, &args.out.join("coefficients.csv"))?;
    write_curves(&ds, &model.refit, &args.out.join("curves"), args.alpha, args.grid)?;
    let saved = SavedModel { variant: model.variant, config: cfg.clone(), refit: model.refit.clone(), data: ds.clone() };
    write_json(&args.out.join("model.json"), &saved).stage("write")?;
    let meta = RunMeta {
        command: "fit",
        version: env!("CARGO_PKG_VERSION"),
        seed: args.seed,
        threads,
        input: args.input.display().to_string(),
        data_fingerprint: raw.fingerprint(),
        n: raw.n(),
        p1: raw.p1(),
        p2: raw.p2(),
        config: &cfg,
        alpha: args.alpha,
        grid: args.grid,
        seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&args.out.join("run_meta.json"), &meta).stage("write")?;
    println!(
        "fit: Z {:?}, linear X {:?}, linear+nonlinear X {:?}, nonlinear X {:?} -> {}",
        report.s_z,
        report.s_x_pl,
        report.s_x_ln,
        report.s_x_pn,
        args.out.display()
    );
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::from_json_file(&args.config).stage("config")?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let res = run_experiment(&cfg).stage("simulate")?;
    write_experiment(&res, &args.out).stage("write")?;
    for s in &res.summaries {
        let sel: Vec<String> = s.selection.iter().map(|v| v.map_or("NA".into(), |x| format!("{x:.1}"))).collect();
        println!("{:>6}: {}", s.variant.name(), sel.join(" "));
    }
    Ok(())
}

fn cmd_bands(args: &BandsArgs) -> Result<(), Failure> {
    let path = args.input.join("model.json");
    if !path.exists() {
        return Err(Error::InvalidArgs(format!("no fitted model at {}", path.display()))).stage("load");
    }
    let text = std::fs::read_to_string(&path).stage("load")?;
    let saved: SavedModel = serde_json::from_str(&text).stage("load")?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidArgs(format!("alpha must be in (0, 1), got {}", args.alpha))).stage("config");
    }
    let out = args.out.clone().unwrap_or_else(|| args.input.join("curves"));
    write_curves(&saved.data, &saved.refit, &out, args.alpha, args.grid)?;
    println!("bands: {} curves -> {}", saved.refit.structure.s_x_nonlinear().len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error [config]: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error [config]: {e}");
            return ExitCode::from(2);
        }
    }
    let threads = rayon::current_num_threads();
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a, threads),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bands(a) => cmd_bands(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error [{}]: {}", f.stage, f.error);
            ExitCode::from(if f.error.is_input_error() { 2 } else { 3 })
        }
    }
}
