//! Diagnostics-level properties: sampled ratios honor the analytic bound,
//! collisions and lower estimates agree in both directions, reports are
//! deterministic, and the local probe is consistent with the global
//! estimate on a separating pipeline.

use coorbit::analysis::{
    check_separation, estimate_bilipschitz, estimate_bilipschitz_with_pairs, local_lower_probe,
    AnalysisError, Sampler, SeparationVerdict,
};
use coorbit::embedding::{EmbeddingPipeline, Reduction, TemplateSet};
use coorbit::group::{cyclic_group, row_perm_group, sign_group, trivial_group};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn dvec(entries: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(entries)
}

/// Sign group on the plane with templates rich enough to separate orbits.
fn separating_pipeline() -> EmbeddingPipeline {
    let r = 0.5_f64.sqrt();
    EmbeddingPipeline::new(
        sign_group(2).unwrap(),
        TemplateSet::new(vec![
            dvec(&[1.0, 0.0]),
            dvec(&[0.0, 1.0]),
            dvec(&[r, r]),
        ])
        .unwrap(),
        Reduction::identity(6).unwrap(),
    )
    .unwrap()
}

/// Sign group on the plane that only ever sees the first coordinate.
fn degenerate_pipeline() -> EmbeddingPipeline {
    EmbeddingPipeline::new(
        sign_group(2).unwrap(),
        TemplateSet::new(vec![dvec(&[1.0, 0.0])]).unwrap(),
        Reduction::identity(2).unwrap(),
    )
    .unwrap()
}

#[test]
fn sampled_ratios_respect_the_analytic_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let groups = vec![
        trivial_group(2).unwrap(),
        sign_group(2).unwrap(),
        cyclic_group(3).unwrap(),
        row_perm_group(3, 1).unwrap(),
    ];
    for (k, group) in groups.into_iter().enumerate() {
        let d = group.dim();
        let templates = TemplateSet::new(
            (0..2)
                .map(|_| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)))
                .collect(),
        )
        .unwrap();
        let reduction = Reduction::dense(DMatrix::from_fn(3, group.order() * 2, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        }))
        .unwrap();
        let pipeline = EmbeddingPipeline::new(group, templates, reduction).unwrap();
        let estimate =
            estimate_bilipschitz(&pipeline, &Sampler::default(), 2000, 70 + k as u64).unwrap();
        assert!(estimate.c_hat >= 0.0);
        assert!(estimate.c_hat <= estimate.big_c_hat);
        assert!(
            estimate.big_c_hat <= estimate.analytic_upper + 1e-8,
            "pipeline {k}: {} > {}",
            estimate.big_c_hat,
            estimate.analytic_upper
        );
    }
}

#[test]
fn collision_pair_drives_the_lower_estimate_to_zero() {
    let pipeline = degenerate_pipeline();
    let report = check_separation(&pipeline, 200, 1e-9, 42).unwrap();
    assert_eq!(report.verdict, SeparationVerdict::CollisionFound);
    let collision = report.collision.unwrap();

    let sampler = Sampler::default();
    let mut fed = false;
    let estimate = estimate_bilipschitz_with_pairs(
        &pipeline,
        |rng| {
            if fed {
                (sampler.draw(2, rng), sampler.draw(2, rng))
            } else {
                fed = true;
                (collision.v.clone(), collision.w.clone())
            }
        },
        500,
        42,
    )
    .unwrap();
    assert!(
        estimate.c_hat < 1e-6,
        "appended collision left c_hat at {}",
        estimate.c_hat
    );
}

#[test]
fn separating_pipeline_reports_no_collision() {
    let pipeline = separating_pipeline();
    let estimate =
        estimate_bilipschitz(&pipeline, &Sampler::default(), 20_000, 42).unwrap();
    assert!(
        estimate.c_hat >= 0.05,
        "lower estimate collapsed: {}",
        estimate.c_hat
    );
    let report = check_separation(&pipeline, 2000, 1e-9, 42).unwrap();
    assert_eq!(report.verdict, SeparationVerdict::SeparatedAtScale);
}

#[test]
fn estimates_are_bit_identical_across_runs() {
    let pipeline = separating_pipeline();
    let a = estimate_bilipschitz(&pipeline, &Sampler::default(), 3000, 9).unwrap();
    let b = estimate_bilipschitz(&pipeline, &Sampler::default(), 3000, 9).unwrap();
    assert_eq!(a.c_hat.to_bits(), b.c_hat.to_bits());
    assert_eq!(a.big_c_hat.to_bits(), b.big_c_hat.to_bits());
    assert_eq!(a.used_pairs, b.used_pairs);
    for (x, y) in [(&a.c_witness, &b.c_witness), (&a.big_c_witness, &b.big_c_witness)] {
        assert_eq!(x.0, y.0);
        assert_eq!(x.1, y.1);
    }

    let ra = check_separation(&pipeline, 500, 1e-9, 9).unwrap();
    let rb = check_separation(&pipeline, 500, 1e-9, 9).unwrap();
    assert_eq!(ra.verdict, rb.verdict);
    assert_eq!(ra.collision.is_some(), rb.collision.is_some());
}

#[test]
fn all_degenerate_pairs_is_an_error() {
    let pipeline = separating_pipeline();
    let sampler = Sampler::default();
    let result = estimate_bilipschitz_with_pairs(
        &pipeline,
        |rng| {
            let v = sampler.draw(2, rng);
            (v.clone(), v)
        },
        50,
        3,
    );
    assert!(matches!(result, Err(AnalysisError::AllPairsDegenerate)));
}

#[test]
fn local_probe_stays_above_the_global_lower_estimate() {
    let pipeline = separating_pipeline();
    let seed = 42;
    let global = estimate_bilipschitz(&pipeline, &Sampler::default(), 10_000, seed).unwrap();
    let probed =
        local_lower_probe(&pipeline, &dvec(&[1.0, 0.0]), &[0.5, 0.25, 0.1], 1000, seed).unwrap();
    for (radius, min_ratio) in probed {
        assert!(
            min_ratio >= global.c_hat,
            "radius {radius}: probe {min_ratio} below global {}",
            global.c_hat
        );
    }
}
