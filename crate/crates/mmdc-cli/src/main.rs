//! `mmdc` command line: single runs and parameter sweeps.
//!
//! Output directory resolution: `--out-dir` flag, else the `MMDC_OUT_DIR`
//! environment variable, else the current directory. Files are written
//! atomically (temp file + rename).

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use mmdc_sim::geometry::Vec2;
use mmdc_sim::metrics::RunMetrics;
use mmdc_sim::network::build_topology;
use mmdc_sim::{ScenarioConfig, Scheme, SweepSpec};

#[derive(Parser)]
#[command(name = "mmdc", version, about = "mmWave dual-connectivity handover simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one scenario and write its summary CSV.
    Run(RunArgs),
    /// Execute the Cartesian sweep described by a spec file.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config (TOML). An empty or missing-field file uses defaults.
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated duration override (seconds).
    #[arg(long)]
    duration: Option<f64>,
    /// Scheme override (dual|single).
    #[arg(long)]
    scheme: Option<String>,
    /// Blockage density override (blockages/km^2).
    #[arg(long)]
    density: Option<f64>,
    /// File size override (bytes).
    #[arg(long)]
    file_size: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write the event trace next to the summary.
    #[arg(long)]
    trace: bool,
    /// Write per-file records CSV.
    #[arg(long)]
    files_csv: bool,
    /// Dump the generated blockage field as CSV and exit paths for plots.
    #[arg(long)]
    dump_field: Option<PathBuf>,
    /// Dump the BS topology as CSV.
    #[arg(long)]
    dump_topology: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep spec (TOML).
    spec: PathBuf,
    /// Output directory (overrides the spec and MMDC_OUT_DIR).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Run cells one at a time instead of in parallel.
    #[arg(long)]
    serial: bool,
}

fn main() {
    if let Err(e) = dispatch() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run_cmd(args),
        Command::Sweep(args) => sweep_cmd(args),
    }
}

fn out_dir(flag: Option<PathBuf>, spec_dir: Option<&str>) -> PathBuf {
    flag.or_else(|| std::env::var_os("MMDC_OUT_DIR").map(PathBuf::from))
        .or_else(|| spec_dir.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn run_cmd(args: RunArgs) -> Result<()> {
    let mut cfg = ScenarioConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(d) = args.duration {
        cfg.duration_s = d;
    }
    if let Some(s) = &args.scheme {
        cfg.scheme = match s.as_str() {
            "dual" => Scheme::Dual,
            "single" => Scheme::Single,
            other => anyhow::bail!("unknown scheme `{other}` (expected dual|single)"),
        };
    }
    if let Some(d) = args.density {
        cfg.blockage_density_per_km2 = d;
    }
    if let Some(b) = args.file_size {
        cfg.file_size_bytes = b;
    }
    cfg.validate()?;

    let dir = out_dir(args.out_dir, None);

    if let Some(path) = &args.dump_topology {
        let topo = build_topology(&cfg)?;
        write_atomic(path, &topo.to_csv())?;
    }
    if let Some(path) = &args.dump_field {
        // Same stream discipline as the run: the dumped field is the one
        // the run will see.
        use mmdc_sim::engine::{RngStreams, StreamId};
        use mmdc_sim::geometry::{generate_field, FieldParams};
        let mut rng = RngStreams::new(cfg.seed).stream(StreamId::Blockage);
        let field = generate_field(
            &FieldParams {
                density_per_km2: cfg.blockage_density_per_km2,
                bounds: Vec2::new(cfg.area_width_m, cfg.area_height_m),
                dim_range: (cfg.blockage_dim_min_m, cfg.blockage_dim_max_m),
                orientation: cfg.blockage_orientation,
                count_mode: cfg.blockage_count_mode,
            },
            &mut rng,
        );
        write_atomic(path, &field.to_csv())?;
    }

    let out = mmdc_sim::run(&cfg, args.trace)?;

    let mut summary = String::from(RunMetrics::CSV_HEADER);
    summary.push('\n');
    summary.push_str(&out.metrics.summary_row());
    summary.push('\n');
    write_atomic(&dir.join("summary.csv"), &summary)?;

    if let Some(trace) = &out.trace {
        write_atomic(&dir.join("trace.jsonl"), trace)?;
    }
    if args.files_csv {
        let mut rows = String::from("file_id,size_bytes,created_s,deadline_s,completed_s,completion_time_s,failed\n");
        for f in &out.metrics.files {
            let failed = f
                .failed(out.metrics.sim_duration_s, cfg.count_inflight_as_failed)
                .map(|b| b.to_string())
                .unwrap_or_default();
            let (completed, ct) = match f.completed {
                Some(t) => (t.to_string(), (t - f.created).to_string()),
                None => (String::new(), String::new()),
            };
            rows.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                f.id, f.size, f.created, f.deadline, completed, ct, failed
            ));
        }
        write_atomic(&dir.join("files.csv"), &rows)?;
    }

    print!("{summary}");
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> Result<()> {
    let spec = SweepSpec::load(&args.spec)
        .with_context(|| format!("loading {}", args.spec.display()))?;
    let dir = out_dir(args.out_dir, spec.out_dir.as_deref());
    let csv = mmdc_sim::sweep::sweep_csv(&spec, !args.serial);
    write_atomic(&dir.join("sweep.csv"), &csv)?;
    let rows = csv.lines().count().saturating_sub(1);
    println!("wrote {} rows to {}", rows, dir.join("sweep.csv").display());
    Ok(())
}
