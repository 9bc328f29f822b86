//! Pipeline-level properties: group invariance of the embedding, the
//! sorting contraction, operator consistency of the stacked matrix, and
//! agreement between the generic pipeline and the fast diagonal form on
//! row-permutation actions.

use coorbit::embedding::{
    coorbit, diag_pipeline, embed_diag, outer_e1_templates, sorted_coorbit_matrix,
    stacked_coorbit_matrix, vectorize, EmbeddingPipeline, Reduction, TemplateSet,
};
use coorbit::group::{
    act, cyclic_group, row_perm_group, sign_group, trivial_group, FiniteGroup,
};
use coorbit::sorting::sort_desc;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn fixtures() -> Vec<(&'static str, FiniteGroup)> {
    vec![
        ("trivial(3)", trivial_group(3).unwrap()),
        ("sign(2)", sign_group(2).unwrap()),
        ("cyclic(3)", cyclic_group(3).unwrap()),
        ("cyclic(4)", cyclic_group(4).unwrap()),
        ("row-perm(3,1)", row_perm_group(3, 1).unwrap()),
        ("row-perm(2,2)", row_perm_group(2, 2).unwrap()),
        ("row-perm(3,2)", row_perm_group(3, 2).unwrap()),
    ]
}

fn gaussian(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_pipeline(group: FiniteGroup, templates: usize, seed: u64) -> EmbeddingPipeline {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = group.dim();
    let template_set = TemplateSet::new(
        (0..templates).map(|_| gaussian(d, &mut rng)).collect(),
    )
    .unwrap();
    let rows = 1 + group.order();
    let reduction = Reduction::dense(DMatrix::from_fn(
        rows,
        group.order() * templates,
        |_, _| rng.sample::<f64, _>(StandardNormal),
    ))
    .unwrap();
    EmbeddingPipeline::new(group, template_set, reduction).unwrap()
}

#[test]
fn embedding_is_group_invariant() {
    for (k, (name, group)) in fixtures().into_iter().enumerate() {
        let pipeline = random_pipeline(group, 2, 1000 + k as u64);
        let evaluator = pipeline.evaluator();
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + k as u64);
        for _ in 0..100 {
            let v = gaussian(pipeline.input_dim(), &mut rng);
            let base = evaluator.embed(&v).unwrap();
            for g in pipeline.group.elements() {
                let moved = act(g, &v).unwrap();
                let image = evaluator.embed(&moved).unwrap();
                let gap = (&image - &base).amax();
                assert!(gap <= 1e-10, "{name}: invariance broken by {gap}");
            }
        }
    }
}

#[test]
fn sorting_contracts_coorbit_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for (name, group) in fixtures() {
        let d = group.dim();
        for _ in 0..150 {
            let template = gaussian(d, &mut rng);
            let v = gaussian(d, &mut rng);
            let w = gaussian(d, &mut rng);
            let kv = coorbit(&group, &template, &v).unwrap();
            let kw = coorbit(&group, &template, &w).unwrap();
            let sorted_gap = DVector::from_column_slice(&sort_desc(kv.as_slice()))
                - DVector::from_column_slice(&sort_desc(kw.as_slice()));
            assert!(
                sorted_gap.norm() <= (kv - kw).norm() + 1e-12,
                "{name}: sorting expanded a distance"
            );
        }
    }
}

#[test]
fn vectorize_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (m, n) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let x = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = vectorize(&x);
        let back = DMatrix::from_column_slice(m, n, v.as_slice());
        assert_eq!(back, x);
    }
}

#[test]
fn stacked_matrix_reproduces_coorbits_on_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (name, group) in fixtures() {
        let d = group.dim();
        let templates =
            TemplateSet::new((0..3).map(|_| gaussian(d, &mut rng)).collect()).unwrap();
        let k = stacked_coorbit_matrix(&group, &templates);
        assert_eq!(k.nrows(), group.order() * 3);
        assert_eq!(k.ncols(), d);
        let v = gaussian(d, &mut rng);
        let stacked = &k * &v;
        for (j, template) in templates.iter().enumerate() {
            let c = coorbit(&group, template, &v).unwrap();
            for i in 0..group.order() {
                let diff = (stacked[j * group.order() + i] - c[i]).abs();
                assert!(diff <= 1e-12, "{name}: stacked row mismatch {diff}");
            }
        }
    }
}

#[test]
fn stacked_matrix_of_the_trivial_pipeline_is_the_identity() {
    let group = trivial_group(4).unwrap();
    let templates = TemplateSet::standard_basis(4).unwrap();
    let k = stacked_coorbit_matrix(&group, &templates);
    assert_eq!(k, DMatrix::identity(4, 4));
}

#[test]
fn row_perm_coorbit_repeats_sorted_projections() {
    // For the symmetric group on rows and template e1 a^T, the sorted
    // coorbit is sort(Xa) with each entry repeated (m-1)! times.
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for m in [2usize, 3] {
        let n = 2;
        let group = row_perm_group(m, n).unwrap();
        let repeats: usize = (1..m).product();
        for _ in 0..20 {
            let a = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            let templates = outer_e1_templates(&a, m).unwrap();
            let x = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let beta = sorted_coorbit_matrix(&group, &templates, &vectorize(&x)).unwrap();
            // Accumulate each projection entry in template order so the
            // comparison against the coorbit inner products stays exact.
            let raw: Vec<f64> = (0..m)
                .map(|r| (0..n).fold(0.0, |acc, j| acc + x[(r, j)] * a[(j, 0)]))
                .collect();
            let projected = sort_desc(&raw);
            for (r, value) in projected.iter().enumerate() {
                for rep in 0..repeats {
                    assert_eq!(beta[(r * repeats + rep, 0)], *value);
                }
            }
        }
    }
}

#[test]
fn diag_pipeline_matches_embed_diag_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for m in [1usize, 2, 3] {
        for _ in 0..10 {
            let n = rng.gen_range(1..4);
            let d = rng.gen_range(1..5);
            let a = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let pipeline = diag_pipeline(&a, &b).unwrap();
            let x = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let generic = pipeline.embed(&vectorize(&x)).unwrap();
            let fast = embed_diag(&a, &b, &x).unwrap();
            assert!(
                (generic - fast).amax() <= 1e-12,
                "diag form diverged at m={m}"
            );
        }
    }
}

#[test]
fn embed_diag_is_invariant_under_all_row_permutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let group = row_perm_group(3, 2).unwrap();
    let a = DMatrix::from_fn(2, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b = DMatrix::from_fn(3, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    for _ in 0..30 {
        let x = DMatrix::from_fn(3, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let base = embed_diag(&a, &b, &x).unwrap();
        for g in group.elements() {
            let moved = act(g, &vectorize(&x)).unwrap();
            let xm = DMatrix::from_column_slice(3, 2, moved.as_slice());
            assert_eq!(embed_diag(&a, &b, &xm).unwrap(), base);
        }
    }
}
