//! Bi-Lipschitz diagnostics for an embedding pipeline: the analytic upper
//! bound, empirical extremes of the distance ratio with re-checkable
//! witnesses, a two-phase collision search, and a local lower-Lipschitz
//! probe around a base point.

use crate::embedding::{stacked_coorbit_matrix, EmbeddingError, EmbeddingPipeline, Evaluator};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pairs at quotient distance at or below this are same-orbit up to noise;
/// the ratio statistic is meaningless there.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("every sampled pair was degenerate (quotient distance <= {DEGENERACY_FLOOR:e})")]
    AllPairsDegenerate,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Group(#[from] crate::group::GroupError),
}

/// Distribution the trial vectors are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sampler {
    Gaussian { scale: f64 },
    UniformCube { half_width: f64 },
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler::Gaussian { scale: 1.0 }
    }
}

impl Sampler {
    pub fn draw(&self, dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match *self {
            Sampler::Gaussian { scale } => {
                DVector::from_fn(dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
            }
            Sampler::UniformCube { half_width } => {
                DVector::from_fn(dim, |_, _| rng.gen_range(-half_width..=half_width))
            }
        }
    }
}

/// Empirical extremes of `|embed(v) - embed(w)| / dist(v, w)` with the pairs
/// that attained them, plus the analytic Lipschitz upper bound.
#[derive(Debug, Clone)]
pub struct BiLipschitzEstimate {
    pub c_hat: f64,
    pub c_witness: (DVector<f64>, DVector<f64>),
    pub big_c_hat: f64,
    pub big_c_witness: (DVector<f64>, DVector<f64>),
    pub trials: usize,
    pub used_pairs: usize,
    pub seed: u64,
    pub analytic_upper: f64,
}

/// Largest singular value.
pub fn operator_norm(matrix: &DMatrix<f64>) -> f64 {
    matrix
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// `|alpha| * |K|`: operator norm of the reduction times operator norm of
/// the stacked coorbit matrix. Every embedding distance ratio is bounded by
/// this product.
pub fn lipschitz_upper_bound(pipeline: &EmbeddingPipeline) -> f64 {
    let k = stacked_coorbit_matrix(&pipeline.group, &pipeline.templates);
    operator_norm(pipeline.reduction.matrix()) * operator_norm(&k)
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct RatioExtremes {
    min: f64,
    min_pair: (DVector<f64>, DVector<f64>),
    max: f64,
    max_pair: (DVector<f64>, DVector<f64>),
    used: usize,
}

fn scan_ratios(
    trials: usize,
    seed: u64,
    stream_base: u64,
    mut draw_pair: impl FnMut(&mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>),
    dist: impl Fn(&DVector<f64>, &DVector<f64>) -> f64,
    map: impl Fn(&DVector<f64>) -> Result<DVector<f64>, AnalysisError>,
) -> Result<RatioExtremes, AnalysisError> {
    let mut extremes: Option<RatioExtremes> = None;
    for t in 0..trials {
        let mut rng = trial_rng(seed, stream_base + t as u64);
        let (v, w) = draw_pair(&mut rng);
        let d = dist(&v, &w);
        if d <= DEGENERACY_FLOOR {
            continue;
        }
        let ratio = (map(&v)? - map(&w)?).norm() / d;
        match extremes.as_mut() {
            None => {
                extremes = Some(RatioExtremes {
                    min: ratio,
                    min_pair: (v.clone(), w.clone()),
                    max: ratio,
                    max_pair: (v, w),
                    used: 1,
                })
            }
            Some(e) => {
                e.used += 1;
                if ratio < e.min {
                    e.min = ratio;
                    e.min_pair = (v.clone(), w.clone());
                }
                if ratio > e.max {
                    e.max = ratio;
                    e.max_pair = (v, w);
                }
            }
        }
    }
    extremes.ok_or(AnalysisError::AllPairsDegenerate)
}

/// Samples `trials` pairs from `sampler`, skips same-orbit pairs, and
/// records the min and max distance ratio with their witnesses.
/// Deterministic in `seed`; trial `t` draws from stream `t`.
pub fn estimate_bilipschitz(
    pipeline: &EmbeddingPipeline,
    sampler: &Sampler,
    trials: usize,
    seed: u64,
) -> Result<BiLipschitzEstimate, AnalysisError> {
    let dim = pipeline.input_dim();
    estimate_bilipschitz_with_pairs(
        pipeline,
        |rng| (sampler.draw(dim, rng), sampler.draw(dim, rng)),
        trials,
        seed,
    )
}

/// Same as [`estimate_bilipschitz`] but with a caller-supplied pair source,
/// e.g. to restrict trials to a structured slice of the input space or to
/// prepend a known near-collision pair.
pub fn estimate_bilipschitz_with_pairs(
    pipeline: &EmbeddingPipeline,
    draw_pair: impl FnMut(&mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>),
    trials: usize,
    seed: u64,
) -> Result<BiLipschitzEstimate, AnalysisError> {
    if trials == 0 {
        return Err(AnalysisError::InvalidParameter(
            "trials must be at least 1".into(),
        ));
    }
    let evaluator = pipeline.evaluator();
    let extremes = scan_ratios(
        trials,
        seed,
        0,
        draw_pair,
        |v, w| pipeline.group.quotient_dist(v, w).unwrap_or(f64::INFINITY),
        |v| Ok(evaluator.embed(v)?),
    )?;
    Ok(BiLipschitzEstimate {
        c_hat: extremes.min,
        c_witness: extremes.min_pair,
        big_c_hat: extremes.max,
        big_c_witness: extremes.max_pair,
        trials,
        used_pairs: extremes.used,
        seed,
        analytic_upper: lipschitz_upper_bound(pipeline),
    })
}

/// Whether the search produced a pair of distinct orbits with equal
/// embeddings at the working tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeparationVerdict {
    SeparatedAtScale,
    CollisionFound,
}

/// A pair of inputs at quotient distance above the floor whose embeddings
/// coincide at tolerance.
#[derive(Debug, Clone)]
pub struct Collision {
    pub v: DVector<f64>,
    pub w: DVector<f64>,
    pub embedding_dist: f64,
    pub quotient_dist: f64,
}

#[derive(Debug, Clone)]
pub struct SeparationReport {
    pub verdict: SeparationVerdict,
    pub collision: Option<Collision>,
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
}

const REFINE_SWEEPS: usize = 200;
const REFINE_STEP_FLOOR: f64 = 1e-14;
const NEIGHBOR_POOL: usize = 256;

/// Searches for embedding collisions two ways: random pairs, then local
/// minimization of the embedding distance starting from the closest pair of
/// embedded samples, holding the quotient distance above `10 * tol`.
/// Finding nothing is reported as separated at this scale, not as a proof.
pub fn check_separation(
    pipeline: &EmbeddingPipeline,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<SeparationReport, AnalysisError> {
    if trials == 0 {
        return Err(AnalysisError::InvalidParameter(
            "trials must be at least 1".into(),
        ));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(AnalysisError::InvalidParameter(
            "tol must be positive and finite".into(),
        ));
    }
    let evaluator = pipeline.evaluator();
    let sampler = Sampler::default();
    let dim = pipeline.input_dim();
    let floor = 10.0 * tol;
    let report = |collision: Option<Collision>| SeparationReport {
        verdict: if collision.is_some() {
            SeparationVerdict::CollisionFound
        } else {
            SeparationVerdict::SeparatedAtScale
        },
        collision,
        trials,
        tol,
        seed,
    };

    // Phase 1: independent random pairs.
    for t in 0..trials {
        let mut rng = trial_rng(seed, t as u64);
        let v = sampler.draw(dim, &mut rng);
        let w = sampler.draw(dim, &mut rng);
        let quotient = pipeline.group.quotient_dist(&v, &w)?;
        if quotient <= floor {
            continue;
        }
        let embedding = (evaluator.embed(&v)? - evaluator.embed(&w)?).norm();
        if embedding <= tol {
            return Ok(report(Some(Collision {
                v,
                w,
                embedding_dist: embedding,
                quotient_dist: quotient,
            })));
        }
    }

    // Phase 2: nearest embedded neighbors, refined by coordinate descent.
    let pool = trials.min(NEIGHBOR_POOL);
    let points: Vec<DVector<f64>> = (0..pool)
        .map(|i| {
            let mut rng = trial_rng(seed, (trials + i) as u64);
            sampler.draw(dim, &mut rng)
        })
        .collect();
    let embedded: Vec<DVector<f64>> = points
        .iter()
        .map(|p| evaluator.embed(p))
        .collect::<Result<_, _>>()?;
    let mut seed_pair: Option<(usize, usize, f64)> = None;
    for i in 0..pool {
        for j in (i + 1)..pool {
            let quotient = pipeline.group.quotient_dist(&points[i], &points[j])?;
            if quotient <= floor {
                continue;
            }
            let gap = (&embedded[i] - &embedded[j]).norm();
            if seed_pair.map_or(true, |(_, _, best)| gap < best) {
                seed_pair = Some((i, j, gap));
            }
        }
    }
    if let Some((i, j, _)) = seed_pair {
        let (v, w) = refine_collision(pipeline, &evaluator, &points[i], &points[j], floor)?;
        let quotient = pipeline.group.quotient_dist(&v, &w)?;
        let embedding = (evaluator.embed(&v)? - evaluator.embed(&w)?).norm();
        if quotient > floor && embedding <= tol {
            return Ok(report(Some(Collision {
                v,
                w,
                embedding_dist: embedding,
                quotient_dist: quotient,
            })));
        }
    }
    Ok(report(None))
}

/// Coordinate descent on the concatenated pair, minimizing the embedding
/// distance while rejecting any move that drops the quotient distance to
/// the floor or below. The embedding is piecewise linear, so derivative-free
/// halving steps are the right tool near sorting ties.
fn refine_collision(
    pipeline: &EmbeddingPipeline,
    evaluator: &Evaluator<'_>,
    v0: &DVector<f64>,
    w0: &DVector<f64>,
    floor: f64,
) -> Result<(DVector<f64>, DVector<f64>), AnalysisError> {
    let dim = v0.len();
    let mut v = v0.clone();
    let mut w = w0.clone();
    let objective = |v: &DVector<f64>, w: &DVector<f64>| -> Result<f64, AnalysisError> {
        Ok((evaluator.embed(v)? - evaluator.embed(w)?).norm())
    };
    let mut best = objective(&v, &w)?;
    let scale = v
        .iter()
        .chain(w.iter())
        .fold(1.0_f64, |acc, x| acc.max(x.abs()));
    let mut step = 0.5 * scale;
    for _ in 0..REFINE_SWEEPS {
        if step < REFINE_STEP_FLOOR {
            break;
        }
        let mut improved = false;
        for target in 0..2 {
            for k in 0..dim {
                for sign in [1.0, -1.0] {
                    let (mut cv, mut cw) = (v.clone(), w.clone());
                    let slot = if target == 0 { &mut cv } else { &mut cw };
                    slot[k] += sign * step;
                    if pipeline.group.quotient_dist(&cv, &cw)? <= floor {
                        continue;
                    }
                    let value = objective(&cv, &cw)?;
                    if value < best {
                        best = value;
                        v = cv;
                        w = cw;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((v, w))
}

/// For each radius, the minimum distance ratio over pairs drawn from the
/// ball of that radius around `v0`. A separating pipeline keeps these
/// bounded away from zero; the probe exposes maps whose local lower
/// Lipschitz constant vanishes.
pub fn local_lower_probe(
    pipeline: &EmbeddingPipeline,
    v0: &DVector<f64>,
    radii: &[f64],
    trials_per_radius: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>, AnalysisError> {
    let evaluator = pipeline.evaluator();
    local_lower_probe_map(
        |v| Ok(evaluator.embed(v)?),
        |v, w| pipeline.group.quotient_dist(v, w).unwrap_or(f64::INFINITY),
        v0,
        radii,
        trials_per_radius,
        seed,
    )
}

/// Map-generic version of [`local_lower_probe`]; the caller supplies the
/// map and the distance on inputs (plain Euclidean for a trivial action).
pub fn local_lower_probe_map(
    map: impl Fn(&DVector<f64>) -> Result<DVector<f64>, AnalysisError>,
    dist: impl Fn(&DVector<f64>, &DVector<f64>) -> f64,
    v0: &DVector<f64>,
    radii: &[f64],
    trials_per_radius: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if trials_per_radius == 0 {
        return Err(AnalysisError::InvalidParameter(
            "trials_per_radius must be at least 1".into(),
        ));
    }
    if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(AnalysisError::InvalidParameter(
            "radii must be positive and finite".into(),
        ));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(AnalysisError::InvalidParameter(
            "radii must be strictly decreasing".into(),
        ));
    }
    let dim = v0.len();
    let mut out = Vec::with_capacity(radii.len());
    for (k, &radius) in radii.iter().enumerate() {
        // Distinct radii must not share streams; shift by the trial base.
        let extremes = scan_ratios(
            trials_per_radius,
            seed,
            (k * trials_per_radius) as u64,
            |rng| {
                (
                    v0 + ball_point(dim, radius, rng),
                    v0 + ball_point(dim, radius, rng),
                )
            },
            &dist,
            &map,
        )?;
        out.push((radius, extremes.min));
    }
    Ok(out)
}

/// Uniform draw from the closed ball of the given radius.
fn ball_point(dim: usize, radius: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let direction = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = direction.norm();
    if norm == 0.0 {
        return DVector::zeros(dim);
    }
    let u: f64 = rng.gen_range(0.0..=1.0);
    direction * (radius * u.powf(1.0 / dim as f64) / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Reduction, TemplateSet};
    use crate::group::{sign_group, trivial_group};
    use approx::assert_relative_eq;

    fn dvec(entries: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(entries)
    }

    fn isometry_pipeline(d: usize) -> EmbeddingPipeline {
        EmbeddingPipeline::new(
            trivial_group(d).unwrap(),
            TemplateSet::standard_basis(d).unwrap(),
            Reduction::identity(d).unwrap(),
        )
        .unwrap()
    }

    fn abs_pipeline() -> EmbeddingPipeline {
        EmbeddingPipeline::new(
            sign_group(1).unwrap(),
            TemplateSet::new(vec![dvec(&[1.0])]).unwrap(),
            Reduction::select_entries(&[0], 2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn operator_norm_examples() {
        assert_relative_eq!(operator_norm(&DMatrix::identity(4, 4)), 1.0, epsilon = 1e-12);
        let diag = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(operator_norm(&diag), 3.0, epsilon = 1e-12);
        let h = 3.0_f64.sqrt() / 2.0;
        let tight = DMatrix::from_row_slice(2, 3, &[-h, h, 0.0, -0.5, -0.5, 1.0]);
        assert_relative_eq!(operator_norm(&tight), 1.5_f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn upper_bound_examples() {
        assert_relative_eq!(lipschitz_upper_bound(&isometry_pipeline(3)), 1.0, epsilon = 1e-12);

        let group = sign_group(1).unwrap();
        let templates = TemplateSet::new(vec![dvec(&[1.0])]).unwrap();
        let base = EmbeddingPipeline::new(
            group.clone(),
            templates.clone(),
            Reduction::identity(2).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(lipschitz_upper_bound(&base), 2.0_f64.sqrt(), epsilon = 1e-12);

        let tripled = EmbeddingPipeline::new(
            group,
            templates,
            Reduction::dense(DMatrix::identity(2, 2) * 3.0).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(
            lipschitz_upper_bound(&tripled),
            3.0 * 2.0_f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn isometry_ratios_are_one() {
        let pipeline = isometry_pipeline(3);
        let estimate =
            estimate_bilipschitz(&pipeline, &Sampler::default(), 200, 11).unwrap();
        assert_eq!(estimate.c_hat, 1.0);
        assert_eq!(estimate.big_c_hat, 1.0);
        assert_eq!(estimate.used_pairs, 200);
        assert!(estimate.big_c_hat <= estimate.analytic_upper + 1e-8);
    }

    #[test]
    fn zero_reduction_ratios_are_zero() {
        let pipeline = EmbeddingPipeline::new(
            trivial_group(2).unwrap(),
            TemplateSet::standard_basis(2).unwrap(),
            Reduction::dense(DMatrix::zeros(2, 2)).unwrap(),
        )
        .unwrap();
        let estimate =
            estimate_bilipschitz(&pipeline, &Sampler::default(), 50, 3).unwrap();
        assert_eq!(estimate.c_hat, 0.0);
        assert_eq!(estimate.big_c_hat, 0.0);
    }

    #[test]
    fn absolute_value_pipeline_is_a_quotient_isometry() {
        let estimate =
            estimate_bilipschitz(&abs_pipeline(), &Sampler::default(), 500, 7).unwrap();
        assert_eq!(estimate.c_hat, 1.0);
        assert_eq!(estimate.big_c_hat, 1.0);
    }

    #[test]
    fn witnesses_reproduce_the_extremes() {
        let pipeline = EmbeddingPipeline::new(
            sign_group(2).unwrap(),
            TemplateSet::new(vec![dvec(&[1.0, 0.0]), dvec(&[0.0, 1.0]), dvec(&[0.7, 0.3])])
                .unwrap(),
            Reduction::identity(6).unwrap(),
        )
        .unwrap();
        let estimate =
            estimate_bilipschitz(&pipeline, &Sampler::default(), 300, 19).unwrap();
        let evaluator = pipeline.evaluator();
        let ratio = |pair: &(DVector<f64>, DVector<f64>)| {
            let d = pipeline.group.quotient_dist(&pair.0, &pair.1).unwrap();
            (evaluator.embed(&pair.0).unwrap() - evaluator.embed(&pair.1).unwrap()).norm() / d
        };
        assert_relative_eq!(ratio(&estimate.c_witness), estimate.c_hat, epsilon = 1e-12);
        assert_relative_eq!(ratio(&estimate.big_c_witness), estimate.big_c_hat, epsilon = 1e-12);
        assert!(estimate.c_hat <= estimate.big_c_hat);
        assert!(estimate.big_c_hat <= estimate.analytic_upper + 1e-8);
    }

    #[test]
    fn zero_trials_is_a_parameter_error() {
        let pipeline = isometry_pipeline(2);
        assert!(matches!(
            estimate_bilipschitz(&pipeline, &Sampler::default(), 0, 1),
            Err(AnalysisError::InvalidParameter(_))
        ));
    }

    #[test]
    fn zero_reduction_collides_immediately() {
        let pipeline = EmbeddingPipeline::new(
            trivial_group(2).unwrap(),
            TemplateSet::standard_basis(2).unwrap(),
            Reduction::dense(DMatrix::zeros(2, 2)).unwrap(),
        )
        .unwrap();
        let report = check_separation(&pipeline, 50, 1e-9, 4).unwrap();
        assert_eq!(report.verdict, SeparationVerdict::CollisionFound);
        let collision = report.collision.unwrap();
        assert!(collision.embedding_dist <= 1e-9);
        assert!(collision.quotient_dist > 1e-8);
    }

    #[test]
    fn isometry_separates() {
        let report = check_separation(&isometry_pipeline(3), 200, 1e-9, 4).unwrap();
        assert_eq!(report.verdict, SeparationVerdict::SeparatedAtScale);
        assert!(report.collision.is_none());
    }

    #[test]
    fn first_coordinate_only_pipeline_collides() {
        // Seeing only |v1| leaves the second coordinate free.
        let pipeline = EmbeddingPipeline::new(
            sign_group(2).unwrap(),
            TemplateSet::new(vec![dvec(&[1.0, 0.0])]).unwrap(),
            Reduction::identity(2).unwrap(),
        )
        .unwrap();
        let report = check_separation(&pipeline, 100, 1e-9, 42).unwrap();
        assert_eq!(report.verdict, SeparationVerdict::CollisionFound);
        let collision = report.collision.unwrap();
        assert!(collision.embedding_dist <= 1e-9);
        assert!(collision.quotient_dist > 1e-8);
    }

    #[test]
    fn probe_on_isometry_is_flat() {
        let pipeline = isometry_pipeline(2);
        let out =
            local_lower_probe(&pipeline, &dvec(&[0.0, 0.0]), &[4.0, 2.0, 1.0], 100, 5).unwrap();
        assert_eq!(out.len(), 3);
        for (_, min_ratio) in out {
            assert_eq!(min_ratio, 1.0);
        }
    }

    #[test]
    fn probe_on_zero_reduction_is_zero() {
        let pipeline = EmbeddingPipeline::new(
            trivial_group(2).unwrap(),
            TemplateSet::standard_basis(2).unwrap(),
            Reduction::dense(DMatrix::zeros(1, 2)).unwrap(),
        )
        .unwrap();
        let out =
            local_lower_probe(&pipeline, &dvec(&[1.0, 1.0]), &[2.0, 1.0], 50, 6).unwrap();
        for (_, min_ratio) in out {
            assert_eq!(min_ratio, 0.0);
        }
    }

    #[test]
    fn probe_rejects_non_decreasing_radii() {
        let pipeline = isometry_pipeline(2);
        assert!(matches!(
            local_lower_probe(&pipeline, &dvec(&[0.0, 0.0]), &[1.0, 2.0], 10, 1),
            Err(AnalysisError::InvalidParameter(_))
        ));
    }
}
