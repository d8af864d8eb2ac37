use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use salicache::frames::{load_manifest, Scenario};
use salicache::harness::{
    emit_report, run, InputSource, Method, OutputFormat, OutputSpec, RunConfig, RunReport,
};
use salicache::{AttentionConfig, BudgetConfig, Error, SaliencyConfig, TemporalConfig};

#[derive(Parser, Debug)]
#[command(name = "salicache", version, about = "Saliency-aware KV-cache compression for video token streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the selected methods over a frame sequence and write a report.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON manifest listing PPM frames.
    #[arg(long, value_name = "MANIFEST", conflicts_with = "synthetic", required_unless_present = "synthetic")]
    frames: Option<PathBuf>,
    /// Built-in scenario: static, moving_square, noise or composite.
    #[arg(long, value_name = "SCENARIO")]
    synthetic: Option<Scenario>,
    #[arg(long, default_value_t = 100)]
    frames_count: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Comma-separated subset of baseline,sliding,h2o,salicache.
    #[arg(long, value_delimiter = ',', default_value = "baseline,sliding,h2o,salicache")]
    methods: Vec<Method>,
    /// Patch side in pixels; defaults to the manifest's value, else 16.
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long, default_value_t = 0.02)]
    tau_t: f64,
    #[arg(long, default_value_t = 0.90)]
    theta_r: f64,
    #[arg(long, default_value_t = 0.60)]
    tau_high: f64,
    #[arg(long, default_value_t = 0.35)]
    tau_med: f64,
    #[arg(long, default_value_t = 0.15)]
    tau_low: f64,
    #[arg(long, default_value_t = 0.10)]
    canny_low: f64,
    #[arg(long, default_value_t = 0.25)]
    canny_high: f64,
    /// Gaussian sigma applied before edge detection.
    #[arg(long, default_value_t = 1.4)]
    sigma: f64,
    /// Side of the chromatic variance window (odd).
    #[arg(long, default_value_t = 11)]
    var_window: usize,
    /// Weight of the edge signal; the variance signal gets the remainder.
    #[arg(long, default_value_t = 0.5)]
    edge_weight: f64,
    /// Live-token budget for the sliding and h2o baselines.
    #[arg(long, default_value_t = salicache::baselines::DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 8)]
    q_heads: usize,
    #[arg(long, default_value_t = 2)]
    kv_heads: usize,
    #[arg(long, default_value_t = 16)]
    head_dim: usize,
    /// Seeds synthetic frames, projections and probe queries.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probe queries per layer for the fidelity comparison.
    #[arg(long, default_value_t = salicache::harness::DEFAULT_PROBES)]
    probes: usize,
    /// Skip the fidelity comparison (allows runs without `baseline`).
    #[arg(long)]
    no_fidelity: bool,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: OutputFormat,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, Error> {
        let (input, manifest_patch) = match (self.frames, self.synthetic) {
            (Some(path), _) => {
                let p = load_manifest(&path)?.patch_size;
                (InputSource::Manifest { path }, Some(p))
            }
            (None, Some(scenario)) => (
                InputSource::Synthetic {
                    scenario,
                    frames_count: self.frames_count,
                    width: self.width,
                    height: self.height,
                    seed: self.seed,
                },
                None,
            ),
            (None, None) => return Err(Error::Config("one of --frames or --synthetic is required".into())),
        };
        Ok(RunConfig {
            input,
            patch_size: self.patch_size.or(manifest_patch).unwrap_or(16),
            temporal: TemporalConfig {
                tau_t: self.tau_t,
                theta_r: self.theta_r,
            },
            saliency: SaliencyConfig {
                gaussian_sigma: self.sigma,
                canny_low: self.canny_low,
                canny_high: self.canny_high,
                variance_window: self.var_window,
                ..SaliencyConfig::default()
            }
            .with_edge_weight(self.edge_weight)
            .with_tiers(self.tau_high, self.tau_med, self.tau_low),
            attention: AttentionConfig {
                n_layers: self.layers,
                n_q_heads: self.q_heads,
                n_kv_heads: self.kv_heads,
                head_dim: self.head_dim,
                seed: self.seed,
            },
            budget: BudgetConfig { budget: self.budget },
            methods: self.methods,
            fidelity: !self.no_fidelity,
            probes: self.probes,
            output: self.out.map(|path| OutputSpec {
                path,
                format: self.format,
            }),
        })
    }
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or_else(|| "inf".to_string(), |r| format!("{r:.3}"))
}

fn print_summary(report: &RunReport) {
    println!(
        "{:<10} {:>12} {:>12} {:>8} {:>8} {:>10} {:>9}",
        "method", "baseline_B", "actual_B", "ratio", "logical", "wasted", "ms/frame"
    );
    for (m, s) in &report.methods {
        println!(
            "{:<10} {:>12} {:>12} {:>8} {:>8} {:>10} {:>9.3}",
            m.name(),
            s.baseline_bytes,
            s.actual_bytes,
            fmt_ratio(s.compression_ratio),
            fmt_ratio(s.logical_compression_ratio),
            s.wasted_score_computations,
            s.ms_per_frame
        );
    }
    for (m, f) in &report.fidelity {
        match f {
            Some(f) => println!(
                "fidelity {:<10} max_abs={:.3e} mean_abs={:.3e} cosine={:.6}",
                m.name(),
                f.max_abs_err,
                f.mean_abs_err,
                f.cosine
            ),
            None => println!("fidelity {:<10} no attendable tokens", m.name()),
        }
    }
}

fn execute(args: RunArgs) -> Result<(), Error> {
    let format = args.format;
    let config = args.into_config()?;
    let report = run(&config)?;
    match &config.output {
        Some(out) => {
            emit_report(&report, &out.path, out.format)?;
            print_summary(&report);
        }
        None => match format {
            OutputFormat::Json => print!("{}", report.to_json()?),
            OutputFormat::Csv => print!("{}", report.to_csv()?),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let Command::Run(args) = cli.command;
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
