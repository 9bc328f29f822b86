//! Machine-readable JSON reports. Struct declaration order fixes the field
//! order, so identical runs serialize byte for byte.

use coorbit::analysis::{BiLipschitzEstimate, SeparationReport, SeparationVerdict};
use coorbit::embedding::EmbeddingPipeline;
use coorbit::sorting::LemmaScenario;
use nalgebra::DVector;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct WitnessPair {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl WitnessPair {
    pub fn new(pair: &(DVector<f64>, DVector<f64>)) -> Self {
        WitnessPair {
            v: pair.0.iter().copied().collect(),
            w: pair.1.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SeparationSection {
    pub verdict: SeparationVerdict,
    pub collision: Option<CollisionRecord>,
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct CollisionRecord {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub embedding_dist: f64,
    pub quotient_dist: f64,
}

#[derive(Debug, Serialize)]
pub struct AnalyzeReport {
    pub pipeline_digest: String,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub c_hat: f64,
    pub big_c_hat: f64,
    pub analytic_upper: f64,
    pub c_witness: WitnessPair,
    pub big_c_witness: WitnessPair,
    pub separation: SeparationSection,
}

impl AnalyzeReport {
    pub fn new(
        pipeline: &EmbeddingPipeline,
        estimate: &BiLipschitzEstimate,
        separation: &SeparationReport,
        tol: f64,
    ) -> Self {
        AnalyzeReport {
            pipeline_digest: pipeline_digest(pipeline),
            trials: estimate.trials,
            seed: estimate.seed,
            tol,
            c_hat: estimate.c_hat,
            big_c_hat: estimate.big_c_hat,
            analytic_upper: estimate.analytic_upper,
            c_witness: WitnessPair::new(&estimate.c_witness),
            big_c_witness: WitnessPair::new(&estimate.big_c_witness),
            separation: SeparationSection {
                verdict: separation.verdict,
                collision: separation.collision.as_ref().map(|c| CollisionRecord {
                    v: c.v.iter().copied().collect(),
                    w: c.w.iter().copied().collect(),
                    embedding_dist: c.embedding_dist,
                    quotient_dist: c.quotient_dist,
                }),
                trials: separation.trials,
                tol: separation.tol,
                seed: separation.seed,
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LemmaRunReport {
    pub m: usize,
    pub p_max: usize,
    pub scenarios_per_config: usize,
    pub eps: f64,
    pub seed: u64,
    pub scenarios_checked: usize,
    pub counterexamples: usize,
}

#[derive(Debug, Serialize)]
pub struct LemmaCertificate {
    pub m: usize,
    pub p: usize,
    pub eps: f64,
    pub with_offset: bool,
    pub seed: u64,
    pub scenario_seed: u64,
    pub failed_checks: Vec<String>,
    pub scenario: LemmaScenario,
}

#[derive(Debug, Serialize)]
pub struct BenchLevel {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub median_ns: f64,
    pub reps: usize,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub ladder: String,
    pub seed: u64,
    pub levels: Vec<BenchLevel>,
    pub slope: f64,
}

#[derive(Debug, Serialize)]
pub struct FrameReport {
    pub dim: usize,
    pub count: usize,
    pub lower: f64,
    pub upper: f64,
    pub minimizing_subset: Vec<usize>,
    pub witness: Option<WitnessPair>,
}

fn feed_f64s<'a>(hasher: &mut Sha256, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        hasher.update(v.to_bits().to_le_bytes());
    }
}

/// Content hash of the pipeline: dimensions plus the exact bits of every
/// group element, template and reduction entry.
pub fn pipeline_digest(pipeline: &EmbeddingPipeline) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"group");
    hasher.update((pipeline.group.order() as u64).to_le_bytes());
    hasher.update((pipeline.group.dim() as u64).to_le_bytes());
    for element in pipeline.group.elements() {
        feed_f64s(&mut hasher, element.matrix.iter());
    }
    hasher.update(b"templates");
    hasher.update((pipeline.templates.len() as u64).to_le_bytes());
    for template in pipeline.templates.iter() {
        feed_f64s(&mut hasher, template.iter());
    }
    hasher.update(b"reduction");
    hasher.update((pipeline.reduction.output_dim() as u64).to_le_bytes());
    hasher.update((pipeline.reduction.input_dim() as u64).to_le_bytes());
    feed_f64s(&mut hasher, pipeline.reduction.matrix().iter());
    hasher
        .finalize()
        .iter()
        .map(|byte| format!("{byte:02x}"))
        .collect()
}

pub fn to_json_line<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize infallibly");
    text.push('\n');
    text
}
