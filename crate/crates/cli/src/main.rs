//! Command-line harness for the ngvi library: experiment runs, numerical
//! theory verification, dataset fetching, and plot regeneration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ngvi::data;
use ngvi::harness::{parse_config, run_experiment, verify_suite, VerifyLevel};
use ngvi::harness::svg::write_svg_chart;

#[derive(Parser)]
#[command(name = "ngvi", about = "Natural-gradient variational Gaussian inference harness")]
struct Cli {
    /// Dataset cache directory (default: NGVI_CACHE_DIR or ~/.cache/ngvi)
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Never touch the network; fail if a dataset is not cached
    #[arg(long, global = true)]
    offline: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a config file
    Run {
        /// Path to the config file, or the name of a bundled preset
        config: String,
        /// Output directory (default: '<experiment name>_out')
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the seed list with a single seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the iteration cap
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Run the numerical verification suite
    Verify {
        /// Suite size: 'fast' or 'full'
        #[arg(long, default_value = "fast")]
        level: String,
    },
    /// Download a dataset into the cache
    Fetch {
        /// Dataset name, or 'all'
        dataset: String,
    },
    /// Rebuild the SVG chart from emitted series CSVs in a run directory
    Plot {
        /// Directory produced by 'run'
        run_dir: PathBuf,
    },
    /// List bundled presets and known datasets
    List,
}

const PRESETS: &[(&str, &str)] = &[
    ("australian-scale", include_str!("../presets/australian-scale.cfg")),
    ("diabetes-scale", include_str!("../presets/diabetes-scale.cfg")),
    ("breast-cancer", include_str!("../presets/breast-cancer.cfg")),
    ("mushrooms", include_str!("../presets/mushrooms.cfg")),
    ("phishing", include_str!("../presets/phishing.cfg")),
    ("mnist", include_str!("../presets/mnist.cfg")),
    ("covtype-scale", include_str!("../presets/covtype-scale.cfg")),
    ("leukemia", include_str!("../presets/leukemia.cfg")),
    ("synthetic-quadratic", include_str!("../presets/synthetic-quadratic.cfg")),
    ("synthetic-logistic", include_str!("../presets/synthetic-logistic.cfg")),
];

fn load_config_text(arg: &str) -> Result<String, String> {
    let path = Path::new(arg);
    if path.exists() {
        return std::fs::read_to_string(path).map_err(|e| format!("cannot read {arg}: {e}"));
    }
    if let Some((_, text)) = PRESETS.iter().find(|(name, _)| *name == arg) {
        return Ok((*text).to_string());
    }
    Err(format!(
        "'{arg}' is neither a file nor a bundled preset (see 'ngvi list')"
    ))
}

fn cache_dir(cli: &Cli) -> PathBuf {
    cli.cache_dir.clone().unwrap_or_else(data::default_cache_dir)
}

fn cmd_run(
    cli: &Cli,
    config: &str,
    out: Option<PathBuf>,
    seed: Option<u64>,
    max_iters: Option<usize>,
) -> Result<(), String> {
    let text = load_config_text(config)?;
    let mut cfg = parse_config(&text).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    if let Some(n) = max_iters {
        cfg.max_iters = n;
    }
    let out_dir = out.unwrap_or_else(|| PathBuf::from(format!("{}_out", cfg.name)));
    let outcome = run_experiment(&cfg, &text, &cache_dir(cli), cli.offline, &out_dir)
        .map_err(|e| e.to_string())?;
    println!(
        "experiment '{}' (d = {}) -> {}",
        cfg.name,
        outcome.problem_dim,
        out_dir.display()
    );
    for o in &outcome.outcomes {
        match (&o.record, &o.abort) {
            (Some(r), _) => {
                let last = r.rows.last().expect("non-empty run");
                let status = if r.converged {
                    format!("converged in {} iterations", r.iterations)
                } else {
                    format!("stopped at iteration cap {}", r.iterations)
                };
                let test = o
                    .test
                    .map(|t| {
                        format!(
                            ", test nll {:.4}, accuracy {:.4}",
                            t.nll_sum, t.accuracy
                        )
                    })
                    .unwrap_or_default();
                println!(
                    "  {:<5} seed {}: {status}, train objective {:.6}{test}",
                    o.method.as_str(),
                    o.seed,
                    last.neg_elbo
                );
            }
            (None, Some(msg)) => {
                println!("  {:<5} seed {}: ABORTED ({msg})", o.method.as_str(), o.seed)
            }
            (None, None) => unreachable!("outcome has neither record nor abort"),
        }
    }
    Ok(())
}

fn cmd_verify(level: &str) -> Result<bool, String> {
    let level = VerifyLevel::parse(level).map_err(|e| e.to_string())?;
    let report = verify_suite(level).map_err(|e| e.to_string())?;
    println!("{report}");
    Ok(report.all_passed())
}

fn cmd_fetch(cli: &Cli, dataset: &str) -> Result<(), String> {
    let dir = cache_dir(cli);
    let names: Vec<&str> = if dataset == "all" {
        data::DATASETS.iter().map(|d| d.name).collect()
    } else {
        vec![dataset]
    };
    for name in names {
        let path = data::fetch_dataset(name, &dir, cli.offline).map_err(|e| e.to_string())?;
        let digest = data::file_digest(&path).map_err(|e| e.to_string())?;
        println!("{name}: {} (sha256 {digest})", path.display());
    }
    Ok(())
}

fn cmd_plot(run_dir: &Path) -> Result<(), String> {
    let suffix = "_elbo_gap_iteration.csv";
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(run_dir)
        .map_err(|e| format!("cannot read {}: {e}", run_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix)))
        .collect();
    entries.sort();
    for path in entries {
        let stem = path
            .file_name()
            .and_then(|n| n.to_str())
            .expect("filtered on file name")
            .trim_end_matches(suffix)
            .to_string();
        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let mut points = Vec::new();
        for line in text.lines().skip(1) {
            let mut cols = line.split(',');
            let (Some(x), Some(mean)) = (cols.next(), cols.next()) else {
                return Err(format!("malformed series row in {}", path.display()));
            };
            let x: f64 = x.parse().map_err(|e| format!("{}: {e}", path.display()))?;
            let y: f64 = mean.parse().map_err(|e| format!("{}: {e}", path.display()))?;
            points.push((x, y));
        }
        series.push((stem, points));
    }
    if series.is_empty() {
        return Err(format!(
            "no '*{suffix}' series files found in {}",
            run_dir.display()
        ));
    }
    let refs: Vec<(&str, &[(f64, f64)])> =
        series.iter().map(|(n, p)| (n.as_str(), p.as_slice())).collect();
    let out = run_dir.join("plot.svg");
    write_svg_chart(&out, "objective gap to best (log10)", "iteration", &refs, true)
        .map_err(|e| e.to_string())?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_list() {
    println!("bundled presets:");
    for (name, _) in PRESETS {
        println!("  {name}");
    }
    println!("known datasets:");
    for info in data::DATASETS {
        println!(
            "  {:<18} n = {:>6}, d = {:>5}, train = {:>6}",
            info.name, info.n, info.d, info.train_count
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, seed, max_iters } => {
            cmd_run(&cli, config, out.clone(), *seed, *max_iters).map(|()| true)
        }
        Command::Verify { level } => cmd_verify(level),
        Command::Fetch { dataset } => cmd_fetch(&cli, dataset).map(|()| true),
        Command::Plot { run_dir } => cmd_plot(run_dir).map(|()| true),
        Command::List => {
            cmd_list();
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
