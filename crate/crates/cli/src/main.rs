//! Pipeline driver: simulate, fit, summarize, and run bootstrap
//! inference on learner-behavior factorizations from the command line.
//!
//! Every command is deterministic given its flags, inputs, and seed, and
//! writes a `manifest_<command>.json` with SHA-256 digests of its inputs
//! for reproduction audits. Exit code 1 signals a validation problem
//! (bad flags, malformed files), exit code 2 a numerical failure.

mod manifest;
mod svg;

use clap::{Parser, Subcommand};
use learnmf_core::data_io::{
    load_factors, load_groups, load_matrix, save_factors, save_matrix, scale_rows,
    zero_columns, DataIoError, FactorsMeta, Orientation,
};
use learnmf_core::matrix::{Matrix, MatrixError};
use learnmf_core::nmf::{fit, reconstruct, FitConfig, FitError, RescaleMode};
use learnmf_core::stats::{
    bootstrap_ci, group_test, summarize_affinities, BootstrapConfig, StatsError,
};
use learnmf_core::synth::{generate, GroupShift, SynthConfig, SynthError};
use manifest::ManifestBuilder;
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "learnmf",
    version,
    about = "Factorize learner-behavior matrices into learning patterns and affinities"
)]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory (defaults to the factors directory for commands
    /// that read one).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Suppress stdout summaries; errors still go to stderr.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feature matrix with known ground truth.
    Simulate(SimulateArgs),
    /// Fit the factorization X ~ P A^T and write a factors directory.
    Fit(FitArgs),
    /// Bootstrap confidence intervals for the pattern coefficients.
    Ci(CiArgs),
    /// Permutation-bootstrap test of group mean-affinity differences.
    Test(TestArgs),
    /// Reconstruct one learner's feature vector from the factors.
    Reconstruct(ReconstructArgs),
    /// Per-pattern affinity summary statistics.
    Summary(SummaryArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Number of features.
    #[arg(long, default_value_t = 21)]
    p: usize,
    /// Number of learners.
    #[arg(long, default_value_t = 111)]
    n: usize,
    /// Number of patterns.
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// High-loading features per pattern.
    #[arg(long, default_value_t = 3)]
    defining: usize,
    /// Probability an individual affinity is exactly zero.
    #[arg(long, default_value_t = 0.3)]
    zero_affinity_prob: f64,
    /// Standard deviation of additive noise (clamped at zero).
    #[arg(long, default_value_t = 0.0)]
    noise_sd: f64,
    /// Plant a group shift: "<pattern>,<delta>,<fraction>" with a
    /// 1-based pattern index; shifted learners are labeled "f".
    #[arg(long)]
    group_shift: Option<String>,
}

#[derive(clap::Args)]
struct FitArgs {
    /// Feature matrix CSV.
    #[arg(long)]
    input: PathBuf,
    /// CSV orientation: learners-as-rows or features-as-rows.
    #[arg(long, default_value = "learners-as-rows")]
    orientation: Orientation,
    /// Number of patterns.
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// Relative objective-change convergence tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Maximum alternating iterations per restart.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Seeded restarts; the best objective wins.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Affinity rescale mode: max, mean, or none.
    #[arg(long, default_value = "max")]
    rescale: RescaleMode,
    /// Skip dividing feature rows by their maxima before fitting.
    #[arg(long)]
    no_scale: bool,
    /// Comma-separated pattern labels (exactly k of them).
    #[arg(long)]
    labels: Option<String>,
}

#[derive(clap::Args)]
struct CiArgs {
    /// Fitted factors directory.
    #[arg(long)]
    factors: PathBuf,
    /// Feature matrix CSV the factors were fitted on.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "learners-as-rows")]
    orientation: Orientation,
    /// Bootstrap replications.
    #[arg(long, default_value_t = 10_000)]
    b: usize,
    /// Confidence level.
    #[arg(long, default_value_t = 0.99)]
    level: f64,
    /// refit: re-estimate factors per replication; fast: re-solve
    /// patterns against the reference affinities.
    #[arg(long, default_value = "refit")]
    mode: String,
    /// Restarts per bootstrap refit.
    #[arg(long, default_value_t = 1)]
    boot_restarts: usize,
}

#[derive(clap::Args)]
struct TestArgs {
    #[arg(long)]
    factors: PathBuf,
    /// Two-group labeling CSV (header id,group).
    #[arg(long)]
    groups: PathBuf,
    /// Feature matrix CSV; required in refit mode.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "learners-as-rows")]
    orientation: Orientation,
    #[arg(long, default_value_t = 10_000)]
    b: usize,
    /// fast: permute labels on the reference affinities; refit:
    /// re-estimate factors per replication.
    #[arg(long, default_value = "fast")]
    mode: String,
    /// Restarts per bootstrap refit.
    #[arg(long, default_value_t = 1)]
    boot_restarts: usize,
}

#[derive(clap::Args)]
struct ReconstructArgs {
    #[arg(long)]
    factors: PathBuf,
    /// Learner id, as in the affinities.csv id column.
    #[arg(long)]
    learner: String,
    /// Observed feature matrix for an observed-vs-reconstructed table.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "learners-as-rows")]
    orientation: Orientation,
}

#[derive(clap::Args)]
struct SummaryArgs {
    #[arg(long)]
    factors: PathBuf,
    /// Optional two-group labeling CSV for group mean columns.
    #[arg(long)]
    groups: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<DataIoError> for CliError {
    fn from(e: DataIoError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MatrixError> for CliError {
    fn from(e: MatrixError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Nnls(_) | FitError::Matrix(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::ReplicationFailed { .. } => CliError::Numerical(e.to_string()),
            StatsError::Fit(inner) => inner.into(),
            StatsError::Matrix(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("i/o error: {e}"))
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(&cli, args),
        Command::Fit(args) => cmd_fit(&cli, args),
        Command::Ci(args) => cmd_ci(&cli, args),
        Command::Test(args) => cmd_test(&cli, args),
        Command::Reconstruct(args) => cmd_reconstruct(&cli, args),
        Command::Summary(args) => cmd_summary(&cli, args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}

fn require_out_dir(cli: &Cli, command: &str) -> Result<PathBuf, CliError> {
    cli.out_dir.clone().ok_or_else(|| {
        CliError::Validation(format!("{command} needs --out-dir to know where to write"))
    })
}

/// Output directory for commands operating on a factors directory:
/// --out-dir when given, the factors directory otherwise.
fn out_dir_or(cli: &Cli, factors: &Path) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(|| factors.to_path_buf())
}

fn say(cli: &Cli, line: &str) {
    if !cli.quiet {
        println!("{line}");
    }
}

fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

fn safe_name(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn parse_mode(mode: &str, command: &str) -> Result<bool, CliError> {
    match mode {
        "refit" => Ok(true),
        "fast" => Ok(false),
        other => Err(CliError::Validation(format!(
            "{command}: unknown --mode '{other}' (expected refit or fast)"
        ))),
    }
}

/// Load the matrix the factors were fitted on, reapplying the stored
/// row scaling so downstream inference sees the exact fitted X.
fn load_fitted_input(
    path: &Path,
    orientation: Orientation,
    meta: &FactorsMeta,
) -> Result<Matrix, CliError> {
    let x = load_matrix(path, orientation)?;
    match &meta.row_maxima {
        None => Ok(x),
        Some(maxima) => {
            if maxima.len() != x.rows() {
                return Err(CliError::Validation(format!(
                    "stored scaling covers {} feature rows but the input has {}",
                    maxima.len(),
                    x.rows()
                )));
            }
            let mut scaled = x.clone();
            for i in 0..x.rows() {
                if maxima[i] == 0.0 {
                    return Err(CliError::Validation(format!(
                        "stored scaling has a zero maximum for feature row {i}"
                    )));
                }
                for j in 0..x.cols() {
                    scaled.set(i, j, x.get(i, j) / maxima[i]);
                }
            }
            Ok(scaled)
        }
    }
}

fn fit_config_from_meta(meta: &FactorsMeta, restarts: usize) -> FitConfig {
    let mut cfg = FitConfig::new(meta.k);
    cfg.seed = meta.seed;
    cfg.tol = meta.tol;
    cfg.max_iter = meta.max_iter;
    cfg.restarts = restarts;
    cfg.rescale_mode = meta.rescale_mode;
    cfg
}

fn learner_ids(a_mat: &Matrix) -> Result<Vec<String>, CliError> {
    a_mat
        .row_names()
        .map(|n| n.to_vec())
        .ok_or_else(|| CliError::Validation("affinities carry no learner ids".into()))
}

fn pattern_names(p_mat: &Matrix, k: usize) -> Vec<String> {
    p_mat
        .col_names()
        .map(|n| n.to_vec())
        .unwrap_or_else(|| (1..=k).map(|i| format!("pattern_{i}")).collect())
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<(), CliError> {
    let out_dir = require_out_dir(cli, "simulate")?;
    let group_shift = match &args.group_shift {
        None => None,
        Some(raw) => Some(parse_group_shift(raw, args.k)?),
    };
    let mut cfg = SynthConfig::new(args.p, args.n, args.k);
    cfg.defining_per_pattern = args.defining;
    cfg.zero_affinity_prob = args.zero_affinity_prob;
    cfg.noise_sd = args.noise_sd;
    cfg.seed = cli.seed;
    cfg.group_shift = group_shift;

    let mani = ManifestBuilder::new(
        "simulate",
        json!({
            "p": args.p, "n": args.n, "k": args.k,
            "defining": args.defining,
            "zero_affinity_prob": args.zero_affinity_prob,
            "noise_sd": args.noise_sd,
            "seed": cli.seed,
            "group_shift": args.group_shift,
        }),
    );

    let data = generate(&cfg)?;
    std::fs::create_dir_all(&out_dir)?;
    let mut outputs = Vec::new();

    let matrix_path = out_dir.join("matrix.csv");
    save_matrix(&data.x, &matrix_path, Orientation::LearnersAsRows)?;
    outputs.push(matrix_path);

    let p_path = out_dir.join("p_true.csv");
    save_matrix(&data.p_true, &p_path, Orientation::FeaturesAsRows)?;
    outputs.push(p_path);

    let a_path = out_dir.join("a_true.csv");
    save_matrix(&data.a_true, &a_path, Orientation::FeaturesAsRows)?;
    outputs.push(a_path);

    if let Some(groups) = &data.groups {
        let mut body = String::from("id,group\n");
        for id in groups.ids() {
            body.push_str(&format!("{},{}\n", id, groups.tag_of(id).unwrap()));
        }
        let g_path = out_dir.join("groups.csv");
        write_file(&g_path, &body)?;
        outputs.push(g_path);
    }

    mani.write(&out_dir, &outputs)?;
    say(
        cli,
        &format!(
            "simulated {} features x {} learners with {} patterns into {}",
            args.p,
            args.n,
            args.k,
            out_dir.display()
        ),
    );
    Ok(())
}

fn parse_group_shift(raw: &str, k: usize) -> Result<GroupShift, CliError> {
    let parts: Vec<&str> = raw.split(',').collect();
    let bad = |msg: &str| {
        CliError::Validation(format!(
            "--group-shift expects '<pattern>,<delta>,<fraction>': {msg}"
        ))
    };
    if parts.len() != 3 {
        return Err(bad(&format!("got {} field(s)", parts.len())));
    }
    let pattern: usize = parts[0]
        .trim()
        .parse()
        .map_err(|_| bad("pattern must be a 1-based integer"))?;
    if pattern < 1 || pattern > k {
        return Err(bad(&format!("pattern must lie in 1..={k}")));
    }
    let delta: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| bad("delta must be a number"))?;
    let fraction: f64 = parts[2]
        .trim()
        .parse()
        .map_err(|_| bad("fraction must be a number"))?;
    Ok(GroupShift {
        pattern: pattern - 1,
        delta,
        fraction,
    })
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Result<(), CliError> {
    let out_dir = require_out_dir(cli, "fit")?;
    let labels: Option<Vec<String>> = args
        .labels
        .as_ref()
        .map(|raw| raw.split(',').map(|s| s.trim().to_string()).collect());
    if let Some(l) = &labels {
        if l.len() != args.k {
            return Err(CliError::Validation(format!(
                "--labels gives {} name(s) but k = {}",
                l.len(),
                args.k
            )));
        }
    }

    let mut mani = ManifestBuilder::new(
        "fit",
        json!({
            "input": args.input.display().to_string(),
            "orientation": format!("{:?}", args.orientation),
            "k": args.k, "tol": args.tol, "max_iter": args.max_iter,
            "restarts": args.restarts,
            "rescale": format!("{}", args.rescale),
            "no_scale": args.no_scale,
            "labels": args.labels,
            "seed": cli.seed,
        }),
    );
    mani.input(&args.input);

    let raw = load_matrix(&args.input, args.orientation)?;
    let zeros = zero_columns(&raw);
    if !zeros.is_empty() {
        let names: Vec<String> = zeros
            .iter()
            .map(|&j| {
                raw.col_names()
                    .map(|n| n[j].clone())
                    .unwrap_or_else(|| format!("column {j}"))
            })
            .collect();
        eprintln!(
            "warning: {} all-zero learner column(s): {}",
            zeros.len(),
            names.join(", ")
        );
    }

    let (x, row_maxima) = if args.no_scale {
        (raw, None)
    } else {
        let (scaled, record) = scale_rows(&raw)?;
        (scaled, Some(record.row_maxima))
    };

    let mut cfg = FitConfig::new(args.k);
    cfg.seed = cli.seed;
    cfg.tol = args.tol;
    cfg.max_iter = args.max_iter;
    cfg.restarts = args.restarts;
    cfg.rescale_mode = args.rescale;
    let fp = fit(&x, &cfg)?;

    let meta = FactorsMeta::from_fit(&fp, &cfg, row_maxima);
    save_factors(&out_dir, &fp, &meta, labels.as_deref())?;

    let outputs = vec![
        out_dir.join("patterns.csv"),
        out_dir.join("affinities.csv"),
        out_dir.join("meta.json"),
    ];
    mani.write(&out_dir, &outputs)?;

    let dead = fp.dead_patterns();
    say(
        cli,
        &format!(
            "fit k={} objective={:.6e} converged={} iterations={} restarts={}",
            fp.k,
            fp.objective,
            fp.converged,
            fp.objective_trace.len(),
            fp.restarts_used
        ),
    );
    if !dead.is_empty() {
        eprintln!("warning: {} dead pattern(s) (all-zero columns)", dead.len());
    }
    Ok(())
}

fn cmd_ci(cli: &Cli, args: &CiArgs) -> Result<(), CliError> {
    let refit = parse_mode(&args.mode, "ci")?;
    let out_dir = out_dir_or(cli, &args.factors);

    let mut mani = ManifestBuilder::new(
        "ci",
        json!({
            "factors": args.factors.display().to_string(),
            "input": args.input.display().to_string(),
            "orientation": format!("{:?}", args.orientation),
            "b": args.b, "level": args.level, "mode": args.mode,
            "boot_restarts": args.boot_restarts,
            "seed": cli.seed,
        }),
    );
    mani.input_dir_csvs(&args.factors);
    mani.input(&args.input);

    let (fp, meta) = load_factors(&args.factors)?;
    let x = load_fitted_input(&args.input, args.orientation, &meta)?;
    let cfg_fit = fit_config_from_meta(&meta, args.boot_restarts);
    let mut cfg_boot = BootstrapConfig::new(args.b);
    cfg_boot.level = args.level;
    cfg_boot.seed = cli.seed;
    cfg_boot.refit = refit;

    let ci = bootstrap_ci(&x, &cfg_fit, &cfg_boot, &fp)?;

    std::fs::create_dir_all(&out_dir)?;
    let mut outputs = Vec::new();

    let mut body = String::from("feature,pattern,boot_mean,lower,upper\n");
    for k in 0..ci.pattern_names.len() {
        for i in 0..ci.feature_names.len() {
            body.push_str(&format!(
                "{},{},{},{},{}\n",
                ci.feature_names[i],
                ci.pattern_names[k],
                ci.boot_mean.get(i, k),
                ci.lower.get(i, k),
                ci.upper.get(i, k)
            ));
        }
    }
    let ci_path = out_dir.join("ci.csv");
    write_file(&ci_path, &body)?;
    outputs.push(ci_path);

    for k in 0..ci.pattern_names.len() {
        let means: Vec<f64> = (0..ci.feature_names.len())
            .map(|i| ci.boot_mean.get(i, k))
            .collect();
        let lowers: Vec<f64> = (0..ci.feature_names.len())
            .map(|i| ci.lower.get(i, k))
            .collect();
        let uppers: Vec<f64> = (0..ci.feature_names.len())
            .map(|i| ci.upper.get(i, k))
            .collect();
        // Highlight the pattern-defining features: coefficients within
        // half of the pattern's largest bootstrap mean.
        let top = means.iter().cloned().fold(0.0f64, f64::max);
        let highlight: Vec<bool> = means.iter().map(|&m| top > 0.0 && m >= 0.5 * top).collect();
        let svg_body = svg::interval_plot(
            &format!(
                "{} ({}% CI, B={})",
                ci.pattern_names[k],
                100.0 * ci.level,
                ci.replications
            ),
            &ci.feature_names,
            &means,
            &lowers,
            &uppers,
            &highlight,
        );
        let path = out_dir.join(format!("ci_{}.svg", safe_name(&ci.pattern_names[k])));
        write_file(&path, &svg_body)?;
        outputs.push(path);
    }

    mani.write(&out_dir, &outputs)?;
    say(
        cli,
        &format!(
            "ci: B={} level={} mode={} -> {}",
            ci.replications,
            ci.level,
            args.mode,
            out_dir.display()
        ),
    );
    Ok(())
}

fn cmd_test(cli: &Cli, args: &TestArgs) -> Result<(), CliError> {
    let refit = parse_mode(&args.mode, "test")?;
    let out_dir = out_dir_or(cli, &args.factors);

    let mut mani = ManifestBuilder::new(
        "test",
        json!({
            "factors": args.factors.display().to_string(),
            "groups": args.groups.display().to_string(),
            "input": args.input.as_ref().map(|p| p.display().to_string()),
            "orientation": format!("{:?}", args.orientation),
            "b": args.b, "mode": args.mode,
            "boot_restarts": args.boot_restarts,
            "seed": cli.seed,
        }),
    );
    mani.input_dir_csvs(&args.factors);
    mani.input(&args.groups);

    let (fp, meta) = load_factors(&args.factors)?;
    let ids = learner_ids(&fp.a_mat)?;
    let groups = load_groups(&args.groups, &ids)?;

    let x = match &args.input {
        Some(path) => {
            mani.input(path);
            Some(load_fitted_input(path, args.orientation, &meta)?)
        }
        None => {
            if refit {
                return Err(CliError::Validation(
                    "test --mode refit needs --input to re-estimate factors".into(),
                ));
            }
            None
        }
    };

    let cfg_fit = fit_config_from_meta(&meta, args.boot_restarts);
    let mut cfg_boot = BootstrapConfig::new(args.b);
    cfg_boot.seed = cli.seed;
    cfg_boot.refit = refit;

    let report = group_test(x.as_ref(), &fp, &groups, &cfg_fit, &cfg_boot)?;
    let summary = summarize_affinities(&fp.a_mat, Some(&groups))?;

    std::fs::create_dir_all(&out_dir)?;
    let (tag_first, tag_second) = (&report.tags.0, &report.tags.1);

    let mut body =
        String::from("pattern,group_mean_f,group_mean_p,pooled_sd,diff,p_two_sided,p_greater,p_less\n");
    let mut text = format!(
        "group mean-affinity test: '{tag_first}' minus '{tag_second}', B={}\n\
         significance: * p<0.1  ** p<0.05  *** p<0.01\n\n",
        report.replications
    );
    for (k, name) in report.pattern_names.iter().enumerate() {
        let t = &report.patterns[k];
        let g = summary.patterns[k]
            .group
            .as_ref()
            .ok_or_else(|| CliError::Validation("missing group statistics".into()))?;
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            name,
            g.mean_first,
            g.mean_second,
            g.pooled_sd,
            t.observed_diff,
            t.p_two_sided,
            t.p_greater,
            t.p_less
        ));
        text.push_str(&format!(
            "{name}: mean[{tag_first}]={:.4} mean[{tag_second}]={:.4} pooled_sd={:.4} diff={:+.4}\n\
             \x20   p_two={:.4}{}  p_greater={:.4}{}  p_less={:.4}{}\n",
            g.mean_first,
            g.mean_second,
            g.pooled_sd,
            t.observed_diff,
            t.p_two_sided,
            stars(t.p_two_sided),
            t.p_greater,
            stars(t.p_greater),
            t.p_less,
            stars(t.p_less)
        ));
    }

    let csv_path = out_dir.join("test.csv");
    write_file(&csv_path, &body)?;
    let txt_path = out_dir.join("test_summary.txt");
    write_file(&txt_path, &text)?;
    mani.write(&out_dir, &[csv_path, txt_path])?;

    say(cli, text.trim_end());
    Ok(())
}

fn cmd_reconstruct(cli: &Cli, args: &ReconstructArgs) -> Result<(), CliError> {
    let out_dir = out_dir_or(cli, &args.factors);

    let mut mani = ManifestBuilder::new(
        "reconstruct",
        json!({
            "factors": args.factors.display().to_string(),
            "learner": args.learner,
            "input": args.input.as_ref().map(|p| p.display().to_string()),
            "orientation": format!("{:?}", args.orientation),
        }),
    );
    mani.input_dir_csvs(&args.factors);

    let (fp, meta) = load_factors(&args.factors)?;
    let ids = learner_ids(&fp.a_mat)?;
    let index = ids.iter().position(|id| id == &args.learner).ok_or_else(|| {
        CliError::Validation(format!(
            "unknown learner '{}'; affinities list {} learner(s)",
            args.learner,
            ids.len()
        ))
    })?;

    let approx = reconstruct(&fp, index)?;
    let observed = match &args.input {
        None => None,
        Some(path) => {
            mani.input(path);
            let x = load_fitted_input(path, args.orientation, &meta)?;
            let col = x
                .col_names()
                .and_then(|names| names.iter().position(|n| n == &args.learner))
                .ok_or_else(|| {
                    CliError::Validation(format!(
                        "learner '{}' not found in {}",
                        args.learner,
                        path.display()
                    ))
                })?;
            Some(x.column(col))
        }
    };

    let feature_names: Vec<String> = fp
        .p_mat
        .row_names()
        .map(|n| n.to_vec())
        .unwrap_or_else(|| (1..=fp.p_mat.rows()).map(|i| format!("f{i}")).collect());
    let patterns = pattern_names(&fp.p_mat, fp.k);

    std::fs::create_dir_all(&out_dir)?;
    let mut outputs = Vec::new();

    let mut body = String::from(if observed.is_some() {
        "feature,observed,reconstructed\n"
    } else {
        "feature,reconstructed\n"
    });
    for i in 0..approx.len() {
        match &observed {
            Some(obs) => body.push_str(&format!(
                "{},{},{}\n",
                feature_names[i], obs[i], approx[i]
            )),
            None => body.push_str(&format!("{},{}\n", feature_names[i], approx[i])),
        }
    }
    let csv_path = out_dir.join(format!("reconstruction_{}.csv", safe_name(&args.learner)));
    write_file(&csv_path, &body)?;
    outputs.push(csv_path);

    // One scaled-pattern plot per pattern the learner actually uses.
    for k in 0..fp.k {
        let affinity = fp.a_mat.get(index, k);
        if affinity == 0.0 {
            continue;
        }
        let pattern: Vec<f64> = (0..fp.p_mat.rows()).map(|i| fp.p_mat.get(i, k)).collect();
        let scaled: Vec<f64> = pattern.iter().map(|v| v * affinity).collect();
        let svg_body = svg::scaled_pattern_plot(
            &format!("{} x {} (affinity {:.3})", args.learner, patterns[k], affinity),
            &feature_names,
            &pattern,
            &scaled,
        );
        let path = out_dir.join(format!(
            "reconstruction_{}_{}.svg",
            safe_name(&args.learner),
            safe_name(&patterns[k])
        ));
        write_file(&path, &svg_body)?;
        outputs.push(path);
    }

    mani.write(&out_dir, &outputs)?;

    if !cli.quiet {
        let affinities: Vec<String> = (0..fp.k)
            .map(|k| format!("{}={:.4}", patterns[k], fp.a_mat.get(index, k)))
            .collect();
        println!("learner {}: {}", args.learner, affinities.join(" "));
        for i in 0..approx.len() {
            match &observed {
                Some(obs) => println!(
                    "{:<12} observed {:.4}  reconstructed {:.4}",
                    feature_names[i], obs[i], approx[i]
                ),
                None => println!("{:<12} reconstructed {:.4}", feature_names[i], approx[i]),
            }
        }
    }
    Ok(())
}

fn cmd_summary(cli: &Cli, args: &SummaryArgs) -> Result<(), CliError> {
    let out_dir = out_dir_or(cli, &args.factors);

    let mut mani = ManifestBuilder::new(
        "summary",
        json!({
            "factors": args.factors.display().to_string(),
            "groups": args.groups.as_ref().map(|p| p.display().to_string()),
        }),
    );
    mani.input_dir_csvs(&args.factors);

    let (fp, _meta) = load_factors(&args.factors)?;
    let groups = match &args.groups {
        None => None,
        Some(path) => {
            mani.input(path);
            let ids = learner_ids(&fp.a_mat)?;
            Some(load_groups(path, &ids)?)
        }
    };
    let summary = summarize_affinities(&fp.a_mat, groups.as_ref())?;

    std::fs::create_dir_all(&out_dir)?;
    let mut body = String::from("pattern,k,q25,mean,q50,q75");
    if summary.tags.is_some() {
        body.push_str(",group_mean_f,group_mean_p,pooled_sd");
    }
    body.push('\n');
    for (k, name) in summary.pattern_names.iter().enumerate() {
        let s = &summary.patterns[k];
        body.push_str(&format!(
            "{},{},{},{},{},{}",
            name,
            k + 1,
            s.q25,
            s.mean,
            s.q50,
            s.q75
        ));
        if let Some(g) = &s.group {
            body.push_str(&format!(",{},{},{}", g.mean_first, g.mean_second, g.pooled_sd));
        }
        body.push('\n');
    }
    let path = out_dir.join("summary.csv");
    write_file(&path, &body)?;
    mani.write(&out_dir, &[path])?;

    if !cli.quiet {
        println!("{:<14} {:>3} {:>8} {:>8} {:>8} {:>8}", "pattern", "k", "q25", "mean", "q50", "q75");
        for (k, name) in summary.pattern_names.iter().enumerate() {
            let s = &summary.patterns[k];
            println!(
                "{:<14} {:>3} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                name,
                k + 1,
                s.q25,
                s.mean,
                s.q50,
                s.q75
            );
        }
    }
    Ok(())
}
