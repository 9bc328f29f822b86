//! `coorbit`: build group-invariant embedding pipelines from JSON configs,
//! embed vector batches, estimate bi-Lipschitz constants, run the sorting
//! lemma oracles, benchmark the diagonal embedding, and report exact sign
//! retrieval constants.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 collision found,
//! 3 lemma counterexample.

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use coorbit::analysis::{
    check_separation, estimate_bilipschitz, estimate_bilipschitz_with_pairs, SeparationVerdict,
};
use coorbit::embedding::{embed_diag, read_vector_batch, write_vector_batch, EmbeddingPipeline};
use coorbit::signretrieval::{
    collision_witness, read_frame_file, sign_lower_constant_detailed, sign_upper_constant,
};
use coorbit::sorting::{check_scenario, generate_scenario};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use report::{
    to_json_line, AnalyzeReport, BenchLevel, BenchReport, FrameReport, LemmaCertificate,
    LemmaRunReport, WitnessPair,
};

const EXIT_COLLISION: u8 = 2;
const EXIT_COUNTEREXAMPLE: u8 = 3;
const LEMMA_M_CAP: usize = 7;

#[derive(Parser)]
#[command(name = "coorbit", version, about = "Group-invariant sorting embeddings: pipelines, analyses, oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a batch of vectors (one comma-separated vector per line).
    Embed {
        /// Pipeline config (JSON: group, templates, reduction)
        #[arg(long)]
        config: PathBuf,
        /// Input batch file
        #[arg(long)]
        input: PathBuf,
        /// Output batch file
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate bi-Lipschitz constants and search for orbit collisions.
    Analyze {
        /// Pipeline config (JSON: group, templates, reduction)
        #[arg(long)]
        config: PathBuf,
        /// Sampled pairs per estimate
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Embedding distance below which a well-separated pair counts as a collision
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Report path (JSON)
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the sorting stability lemmas on generated scenarios.
    Lemmas {
        /// Vector dimension (at most 7; the oracles enumerate all m! permutations)
        #[arg(long)]
        m: usize,
        /// Scenarios use every depth 1..=p_max
        #[arg(long, default_value_t = 3)]
        p_max: usize,
        /// Scenarios per (depth, offset) configuration
        #[arg(long, default_value_t = 500)]
        scenarios: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Coefficient budget for the perturbed sums, in (0, 1/2]
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        /// Summary report path (JSON)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the counterexample certificate, if one is found
        #[arg(long, default_value = "lemma-certificate.json")]
        certificate: PathBuf,
        /// Self-test hook: emit a fabricated failing check through the certificate path
        #[arg(long, hide = true)]
        inject_failure: bool,
    },
    /// Time the diagonal embedding over a doubling size ladder.
    BenchDiag {
        /// Rows of X (sorting window)
        #[arg(long, default_value_t = 64)]
        m: usize,
        /// Columns of X
        #[arg(long, default_value_t = 32)]
        n: usize,
        /// Output dimension at the first ladder level
        #[arg(long, default_value_t = 256)]
        d: usize,
        /// Timed instances per level
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ladder levels (the chosen dimension doubles per level)
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// Which dimension doubles: "d" or "n"
        #[arg(long, default_value = "d")]
        ladder: String,
        /// Report path (JSON)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact sign-retrieval constants and collision witness for a frame.
    FrameReport {
        /// Frame file (dimensions, then one measurement vector per line)
        #[arg(long)]
        frame: PathBuf,
        /// Report path (JSON)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Embed { config, input, out } => cmd_embed(&config, &input, &out),
        Command::Analyze {
            config,
            trials,
            seed,
            tol,
            out,
        } => cmd_analyze(&config, trials, seed, tol, &out),
        Command::Lemmas {
            m,
            p_max,
            scenarios,
            seed,
            eps,
            out,
            certificate,
            inject_failure,
        } => cmd_lemmas(
            m,
            p_max,
            scenarios,
            seed,
            eps,
            out.as_deref(),
            &certificate,
            inject_failure,
        ),
        Command::BenchDiag {
            m,
            n,
            d,
            reps,
            seed,
            levels,
            ladder,
            out,
        } => cmd_bench_diag(m, n, d, reps, seed, levels, &ladder, out.as_deref()),
        Command::FrameReport { frame, out } => cmd_frame_report(&frame, out.as_deref()),
    }
}

fn load_pipeline(path: &Path) -> Result<EmbeddingPipeline> {
    build_pipeline_checked(&config::load_config(path)?)
}

fn build_pipeline_checked(cfg: &config::PipelineConfig) -> Result<EmbeddingPipeline> {
    config::build_pipeline(cfg)
}

fn write_report(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_embed(config: &Path, input: &Path, out: &Path) -> Result<u8> {
    let pipeline = load_pipeline(config)?;
    let batch = read_vector_batch(input)
        .with_context(|| format!("reading input batch {}", input.display()))?;
    let evaluator = pipeline.evaluator();
    let embedded = batch
        .iter()
        .enumerate()
        .map(|(line, v)| {
            evaluator
                .embed(v)
                .with_context(|| format!("embedding input line {}", line + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sink = Vec::new();
    write_vector_batch(&mut sink, &embedded)?;
    std::fs::write(out, sink).with_context(|| format!("writing {}", out.display()))?;
    println!("embedded {} vectors -> {}", embedded.len(), out.display());
    Ok(0)
}

fn cmd_analyze(config: &Path, trials: usize, seed: u64, tol: f64, out: &Path) -> Result<u8> {
    let pipeline = load_pipeline(config)?;
    let separation = check_separation(&pipeline, trials, tol, seed)?;
    let estimate = match &separation.collision {
        // Feed the collision pair in first so the reported lower estimate
        // reflects the witness.
        Some(collision) => {
            let (v, w) = (collision.v.clone(), collision.w.clone());
            let dim = pipeline.input_dim();
            let mut first = true;
            estimate_bilipschitz_with_pairs(
                &pipeline,
                move |rng| {
                    if first {
                        first = false;
                        (v.clone(), w.clone())
                    } else {
                        let mut draw =
                            || DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                        (draw(), draw())
                    }
                },
                trials,
                seed,
            )?
        }
        None => estimate_bilipschitz(&pipeline, &Default::default(), trials, seed)?,
    };
    let report = AnalyzeReport::new(&pipeline, &estimate, &separation, tol);
    write_report(out, &to_json_line(&report))?;
    let collided = separation.verdict == SeparationVerdict::CollisionFound;
    println!(
        "c_hat={:.6e} C_hat={:.6e} analytic_upper={:.6e} verdict={}",
        report.c_hat,
        report.big_c_hat,
        report.analytic_upper,
        if collided { "collision-found" } else { "separated-at-scale" },
    );
    Ok(if collided { EXIT_COLLISION } else { 0 })
}

#[allow(clippy::too_many_arguments)]
fn cmd_lemmas(
    m: usize,
    p_max: usize,
    scenarios: usize,
    seed: u64,
    eps: f64,
    out: Option<&Path>,
    certificate: &Path,
    inject_failure: bool,
) -> Result<u8> {
    if m > LEMMA_M_CAP {
        bail!("m = {m} exceeds the cap {LEMMA_M_CAP}; the oracles enumerate all m! permutations");
    }
    if p_max < 1 {
        bail!("p-max must be at least 1");
    }
    if scenarios < 1 {
        bail!("scenarios must be at least 1");
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0usize;
    for p in 1..=p_max {
        for with_offset in [false, true] {
            for _ in 0..scenarios {
                let scenario_seed = master.gen::<u64>();
                let scenario = generate_scenario(m, p, eps, with_offset, scenario_seed)?;
                let verdict = check_scenario(&scenario)?;
                checked += 1;
                let failed = if inject_failure && checked == 1 {
                    vec!["injected-self-test".to_string()]
                } else {
                    verdict.failed_names()
                };
                if !failed.is_empty() {
                    let cert = LemmaCertificate {
                        m,
                        p,
                        eps,
                        with_offset,
                        seed,
                        scenario_seed,
                        failed_checks: failed,
                        scenario,
                    };
                    write_report(certificate, &to_json_line(&cert))?;
                    println!(
                        "counterexample after {checked} scenarios; certificate -> {}",
                        certificate.display()
                    );
                    return Ok(EXIT_COUNTEREXAMPLE);
                }
            }
        }
    }
    if let Some(path) = out {
        let report = LemmaRunReport {
            m,
            p_max,
            scenarios_per_config: scenarios,
            eps,
            seed,
            scenarios_checked: checked,
            counterexamples: 0,
        };
        write_report(path, &to_json_line(&report))?;
    }
    println!("checked {checked} scenarios (m={m}, p<= {p_max}): all lemma conclusions hold");
    Ok(0)
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Median per-call time of `embed_diag` on fresh random instances. Each rep
/// times a short inner loop so small sizes stay above timer resolution.
fn time_level(m: usize, n: usize, d: usize, reps: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let inner = ((1u64 << 23) / ((m * n * d) as u64 + 1)).max(1);
    let mut per_call = Vec::with_capacity(reps);
    for _ in 0..reps {
        let a = gaussian_matrix(n, d, rng);
        let b = gaussian_matrix(m, d, rng);
        let x = gaussian_matrix(m, n, rng);
        let start = Instant::now();
        for _ in 0..inner {
            std::hint::black_box(embed_diag(
                std::hint::black_box(&a),
                std::hint::black_box(&b),
                std::hint::black_box(&x),
            )?);
        }
        per_call.push(start.elapsed().as_nanos() as f64 / inner as f64);
    }
    per_call.sort_by(f64::total_cmp);
    Ok(per_call[reps / 2])
}

fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (mx, my) = (sx / k, sy / k);
    let cov: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    cov / var
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench_diag(
    m: usize,
    n: usize,
    d: usize,
    reps: usize,
    seed: u64,
    levels: usize,
    ladder: &str,
    out: Option<&Path>,
) -> Result<u8> {
    if m == 0 || n == 0 || d == 0 {
        bail!("sizes m, n, d must be positive");
    }
    if reps == 0 || levels == 0 {
        bail!("reps and levels must be positive");
    }
    if !matches!(ladder, "d" | "n") {
        bail!("ladder must be \"d\" or \"n\"");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level_reports = Vec::with_capacity(levels);
    let mut points = Vec::with_capacity(levels);
    for level in 0..levels {
        let (ml, nl, dl) = match ladder {
            "d" => (m, n, d << level),
            _ => (m, n << level, d),
        };
        let median_ns = time_level(ml, nl, dl, reps, &mut rng)?;
        let size = if ladder == "d" { dl } else { nl };
        points.push(((size as f64).ln(), median_ns.ln()));
        println!("m={ml} n={nl} d={dl} median_ns={median_ns:.0}");
        level_reports.push(BenchLevel {
            m: ml,
            n: nl,
            d: dl,
            median_ns,
            reps,
        });
    }
    let slope = if levels >= 2 { fit_slope(&points) } else { f64::NAN };
    println!("ladder={ladder} fitted log-log slope={slope:.3}");
    if let Some(path) = out {
        let report = BenchReport {
            ladder: ladder.to_string(),
            seed,
            levels: level_reports,
            slope,
        };
        write_report(path, &to_json_line(&report))?;
    }
    Ok(0)
}

fn cmd_frame_report(frame_path: &Path, out: Option<&Path>) -> Result<u8> {
    let frame = read_frame_file(frame_path)
        .with_context(|| format!("reading frame {}", frame_path.display()))?;
    let lower = sign_lower_constant_detailed(&frame)?;
    let upper = sign_upper_constant(&frame);
    let witness = collision_witness(&frame)?;
    let report = FrameReport {
        dim: frame.dim(),
        count: frame.count(),
        lower: lower.value,
        upper,
        minimizing_subset: lower.subset,
        witness: witness.as_ref().map(WitnessPair::new),
    };
    let text = to_json_line(&report);
    print!("{text}");
    if let Some(path) = out {
        write_report(path, &text)?;
    }
    Ok(0)
}
