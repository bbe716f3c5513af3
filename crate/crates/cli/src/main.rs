use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use segscreen::bench::{run_bench, write_dataset, BenchResult, BenchSpec};
use segscreen::config::GateConfig;
use segscreen::fusion::ViewRule;
use segscreen::manifest::Manifest;
use segscreen::pipeline::render_report;
use segscreen::runner::{load_report, run_manifest, with_jobs};
use segscreen::stats::{two_sample_test, SampleSet, Statistic, TestConfig};

/// Statistical screening and false-positive gating for segmentation maps.
#[derive(Parser)]
#[command(name = "segscreen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process every image of a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory (masks/, reports/, summary.json).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Two-sample permutation test on two single-column numeric files.
    StatsTest {
        x: PathBuf,
        y: PathBuf,
        #[arg(long, default_value = "mmd2")]
        statistic: Statistic,
        #[arg(long, default_value_t = 199)]
        permutations: usize,
        #[arg(long, default_value_t = 4000)]
        sample_cap: usize,
        #[arg(long, env = "SEGSCREEN_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Run the synthetic benchmark described by a TOML spec.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Also write the full result record here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a benchmark's cases as SGRID files plus a manifest.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretty-print a case report.
    Inspect { report: PathBuf },
}

/// Overrides for the configuration file, grouped as in the file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// TOML file with [scoring], [statistical] and [geometric] sections.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Binarization threshold for candidates and the positive ratio.
    #[arg(long, help_heading = "Scoring")]
    tau_bin: Option<f64>,
    /// Separate threshold for the candidate mask (defaults to tau-bin).
    #[arg(long, help_heading = "Scoring")]
    tau_tumor: Option<f64>,
    /// How views are combined: max, median or mean.
    #[arg(long, help_heading = "Scoring")]
    view_rule: Option<ViewRule>,
    /// ROI scales for plans that do not set them, comma separated.
    #[arg(long, value_delimiter = ',', help_heading = "Scoring")]
    scales: Option<Vec<f64>>,

    /// FDR level of the screen.
    #[arg(long, help_heading = "Statistical")]
    alpha: Option<f64>,
    /// Permutations per test.
    #[arg(long, help_heading = "Statistical")]
    permutations: Option<usize>,
    /// Maximum pixels per sample before subsampling.
    #[arg(long, help_heading = "Statistical")]
    sample_cap: Option<usize>,
    /// L1: KS p-value must be at most this.
    #[arg(long, help_heading = "Statistical")]
    tau_ks: Option<f64>,
    /// mmd2 or energy.
    #[arg(long, help_heading = "Statistical")]
    statistic: Option<Statistic>,
    /// Base seed.
    #[arg(long, env = "SEGSCREEN_SEED", help_heading = "Statistical")]
    seed: Option<u64>,

    /// L1: minimum peak probability.
    #[arg(long, help_heading = "Geometric")]
    tau_max: Option<f64>,
    /// L1: minimum positive fraction of the ROI domain.
    #[arg(long, help_heading = "Geometric")]
    tau_ratio: Option<f64>,
    /// L2: minimum candidate area in pixels.
    #[arg(long, help_heading = "Geometric")]
    a_min: Option<usize>,
    /// L2: minimum mean probability of a candidate.
    #[arg(long, help_heading = "Geometric")]
    tau_mean: Option<f64>,
    /// L2: minimum fraction of a candidate inside the anchor (control) region.
    #[arg(long, help_heading = "Geometric")]
    tau_intersect: Option<f64>,
    /// L3: the best survivor must reach this mean probability x sqrt(area).
    #[arg(long, help_heading = "Geometric")]
    tau_case: Option<f64>,
    /// Components smaller than this are dropped before screening.
    #[arg(long, help_heading = "Geometric")]
    pre_filter_area: Option<usize>,
    /// ROI padding for plans that do not set it, in mm.
    #[arg(long, help_heading = "Geometric")]
    padding_mm: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl ConfigArgs {
    /// Defaults, then the file, then flags; the result is validated once.
    fn resolve(self) -> Result<GateConfig> {
        let mut c = match &self.config {
            Some(p) => GateConfig::load_unchecked(p)?,
            None => GateConfig::default(),
        };
        set(&mut c.scoring.tau_bin, self.tau_bin);
        if self.tau_tumor.is_some() {
            c.scoring.tau_tumor = self.tau_tumor;
        }
        set(&mut c.scoring.view_rule, self.view_rule);
        set(&mut c.scoring.scales, self.scales);
        set(&mut c.statistical.alpha, self.alpha);
        set(&mut c.statistical.permutations, self.permutations);
        set(&mut c.statistical.sample_cap, self.sample_cap);
        set(&mut c.statistical.tau_ks, self.tau_ks);
        set(&mut c.statistical.statistic, self.statistic);
        set(&mut c.statistical.seed, self.seed);
        set(&mut c.geometric.tau_max, self.tau_max);
        set(&mut c.geometric.tau_ratio, self.tau_ratio);
        set(&mut c.geometric.a_min, self.a_min);
        set(&mut c.geometric.tau_mean, self.tau_mean);
        set(&mut c.geometric.tau_intersect, self.tau_intersect);
        set(&mut c.geometric.tau_case, self.tau_case);
        set(&mut c.geometric.pre_filter_area, self.pre_filter_area);
        set(&mut c.geometric.padding_mm, self.padding_mm);
        c.validate().context("configuration")?;
        Ok(c)
    }
}

fn read_column(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => bail!(
                "{}: line {}: expected one finite number, got {:?}",
                path.display(),
                i + 1,
                t
            ),
        }
    }
    Ok(out)
}

fn cmd_stats_test(x: &Path, y: &Path, cfg: TestConfig) -> Result<()> {
    cfg.validate()?;
    let xs = SampleSet::scalar(read_column(x)?)?;
    let ys = SampleSet::scalar(read_column(y)?)?;
    let t = two_sample_test(&xs, &ys, &cfg, cfg.seed)?;
    let record = serde_json::json!({
        "statistic": t.statistic,
        "statistic_observed": t.statistic_observed,
        "sigma": t.bandwidth_sigma,
        "p_value": t.p_value,
        "exceedances": t.exceedances,
        "permutations": t.permutations,
        "m": t.m,
        "n": t.n,
    });
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(())
}

fn print_bench(r: &BenchResult) {
    println!("cases               {:>8}", r.n_cases);
    println!("positive cases      {:>8}", r.n_positive);
    println!("slice sensitivity   {:>8.4}", r.slice_sensitivity);
    println!("slice specificity   {:>8.4}", r.slice_specificity);
    println!("power               {:>8.4}", r.power);
    println!("empirical FDR       {:>8.4}", r.empirical_fdr);
    println!("null tests          {:>8}", r.null_tests);
    println!("null kept by BH     {:>8}", r.null_bh_kept);
    println!("null kept fraction  {:>8.4}", r.null_kept_fraction);
    println!(
        "screen FDR          {:>8.4}  (bound {:.4} over {} families)",
        r.screen_fdr, r.screen_fdr_bound, r.screen_families
    );
    if let Some(m) = &r.metrics {
        println!("dice                {:>8.4} ± {:.4}", m.dice.mean, m.dice.std);
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            manifest,
            out,
            config,
            jobs,
        } => {
            let cfg = config.resolve()?;
            let m = Manifest::load(&manifest)?;
            let summary = run_manifest(&m, &cfg, &out, jobs)?;
            println!(
                "{} cases, {} processed, {} predicted positive, {} failed",
                summary.cases,
                summary.succeeded,
                summary.predicted_positive,
                summary.failures.len()
            );
            for f in &summary.failures {
                eprintln!("{}: {}", f.image_id, f.error);
            }
            if let Some(mm) = &summary.metrics {
                println!(
                    "dice {:.4} ± {:.4}  sensitivity {:.4}  specificity {:.4}",
                    mm.dice.mean, mm.dice.std, mm.sensitivity, mm.specificity
                );
            }
            Ok(if summary.all_succeeded() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::StatsTest {
            x,
            y,
            statistic,
            permutations,
            sample_cap,
            seed,
        } => {
            let cfg = TestConfig {
                permutations,
                sample_cap,
                statistic,
                seed,
                ..TestConfig::default()
            };
            cmd_stats_test(&x, &y, cfg)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            spec,
            config,
            jobs,
            out,
        } => {
            let cfg = config.resolve()?;
            let spec = BenchSpec::load(&spec)?;
            let r = with_jobs(jobs, || run_bench(&spec, &cfg))??;
            print_bench(&r);
            if let Some(out) = out {
                fs::write(&out, serde_json::to_string_pretty(&r)? + "\n")
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            if !r.screen_fdr_within_bound() {
                eprintln!(
                    "screen FDR {:.4} exceeds alpha + 2 SE = {:.4}",
                    r.screen_fdr, r.screen_fdr_bound
                );
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { spec, out } => {
            let spec = BenchSpec::load(&spec)?;
            let m = write_dataset(&spec, &out)?;
            println!(
                "wrote {} cases to {}",
                m.entries.len(),
                out.join("manifest.json").display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { report } => {
            let r = load_report(&report)?;
            print!("{}", render_report(&r));
            Ok(ExitCode::SUCCESS)
        }
    }
}
