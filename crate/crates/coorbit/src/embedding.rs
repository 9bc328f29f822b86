//! The invariant embedding pipeline: coorbits, their column-sorted matrix,
//! a linear reduction on its column-major vectorization, and the composite
//! map. Also the stacked coorbit operator (whose operator norm drives the
//! Lipschitz bound) and the fast diagonal form for row-permutation actions.

use crate::group::{FiniteGroup, GroupError};
use crate::sorting::sort_desc;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("template set must contain at least one template")]
    EmptyTemplates,
    #[error("reduction must have {expected} columns to act on the vectorized coorbit matrix, got {got}")]
    ReductionShape { expected: usize, got: usize },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("batch file parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// Sequential inner product; the fixed accumulation order keeps integer
/// matrix pipelines exactly reproducible.
pub(crate) fn dot_seq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// The templates paired with every group element to form coorbits.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: Vec<DVector<f64>>,
}

impl TemplateSet {
    pub fn new(templates: Vec<DVector<f64>>) -> Result<Self, EmbeddingError> {
        let dim = match templates.first() {
            Some(t) => t.len(),
            None => return Err(EmbeddingError::EmptyTemplates),
        };
        for t in &templates {
            if t.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    got: t.len(),
                });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonFinite("template"));
            }
        }
        Ok(TemplateSet { templates })
    }

    pub fn standard_basis(d: usize) -> Result<Self, EmbeddingError> {
        let templates = (0..d)
            .map(|i| DVector::from_fn(d, |j, _| if i == j { 1.0 } else { 0.0 }))
            .collect();
        TemplateSet::new(templates)
    }

    pub fn random_gaussian(d: usize, count: usize, seed: u64) -> Result<Self, EmbeddingError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let templates = (0..count)
            .map(|_| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        TemplateSet::new(templates)
    }

    pub fn dim(&self) -> usize {
        self.templates[0].len()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, j: usize) -> &DVector<f64> {
        &self.templates[j]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.templates.iter()
    }
}

/// Dense linear reduction applied to the column-major vectorization of the
/// sorted coorbit matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    matrix: DMatrix<f64>,
}

impl Reduction {
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self, EmbeddingError> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(EmbeddingError::ShapeMismatch(
                "reduction matrix must be nonempty".into(),
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite("reduction matrix"));
        }
        Ok(Reduction { matrix })
    }

    pub fn identity(n: usize) -> Result<Self, EmbeddingError> {
        Reduction::dense(DMatrix::identity(n, n))
    }

    /// Picks individual entries of the vectorized coorbit matrix, one output
    /// coordinate per listed flat index.
    pub fn select_entries(indices: &[usize], input_len: usize) -> Result<Self, EmbeddingError> {
        if indices.is_empty() {
            return Err(EmbeddingError::ShapeMismatch(
                "entry selection needs at least one index".into(),
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= input_len) {
            return Err(EmbeddingError::ShapeMismatch(format!(
                "selected entry {bad} out of range for input length {input_len}"
            )));
        }
        let mut matrix = DMatrix::zeros(indices.len(), input_len);
        for (row, &idx) in indices.iter().enumerate() {
            matrix[(row, idx)] = 1.0;
        }
        Reduction::dense(matrix)
    }

    /// The reduction equivalent to `X -> diag(B^T sort(X A))` for the
    /// row-permutation pipeline whose templates are `e_1 a_k^T`: each output
    /// takes the B-weighted sum of one representative per repeated block of
    /// the sorted coorbit column. `group_order` must equal `(b.nrows())!`.
    pub fn diag_form(b: &DMatrix<f64>, group_order: usize) -> Result<Self, EmbeddingError> {
        let m = b.nrows();
        let d = b.ncols();
        let expected_order: usize = (1..=m).product();
        if group_order != expected_order {
            return Err(EmbeddingError::ShapeMismatch(format!(
                "diagonal form over {m} rows needs a group of order {expected_order}, got {group_order}"
            )));
        }
        let block = group_order / m; // (m-1)!
        let mut matrix = DMatrix::zeros(d, d * group_order);
        for k in 0..d {
            for r in 0..m {
                matrix[(k, k * group_order + r * block)] = b[(r, k)];
            }
        }
        Reduction::dense(matrix)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Group, templates and reduction assembled into the invariant map.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPipeline {
    pub group: FiniteGroup,
    pub templates: TemplateSet,
    pub reduction: Reduction,
}

impl EmbeddingPipeline {
    pub fn new(
        group: FiniteGroup,
        templates: TemplateSet,
        reduction: Reduction,
    ) -> Result<Self, EmbeddingError> {
        if templates.dim() != group.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: group.dim(),
                got: templates.dim(),
            });
        }
        let expected = group.order() * templates.len();
        if reduction.input_dim() != expected {
            return Err(EmbeddingError::ReductionShape {
                expected,
                got: reduction.input_dim(),
            });
        }
        Ok(EmbeddingPipeline {
            group,
            templates,
            reduction,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.group.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.reduction.output_dim()
    }

    pub fn embed(&self, v: &DVector<f64>) -> Result<DVector<f64>, EmbeddingError> {
        embed(self, v)
    }

    /// Precomputes the stacked coorbit operator for repeated evaluation.
    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator {
            pipeline: self,
            stacked: stacked_coorbit_matrix(&self.group, &self.templates),
        }
    }
}

/// The vector of inner products of `v` with every group image of `template`,
/// in the group's enumeration order.
pub fn coorbit(
    group: &FiniteGroup,
    template: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>, EmbeddingError> {
    let d = group.dim();
    for u in [template, v] {
        if u.len() != d {
            return Err(EmbeddingError::DimensionMismatch {
                expected: d,
                got: u.len(),
            });
        }
    }
    let mut out = DVector::zeros(group.order());
    for e in group.elements() {
        let image = &e.matrix * template;
        out[e.index] = dot_seq(v.as_slice(), image.as_slice());
    }
    Ok(out)
}

/// Matrix whose column `j` is the descending sort of the coorbit for
/// template `j`. Invariant under the group action on `v`.
pub fn sorted_coorbit_matrix(
    group: &FiniteGroup,
    templates: &TemplateSet,
    v: &DVector<f64>,
) -> Result<DMatrix<f64>, EmbeddingError> {
    let m = group.order();
    let mut out = DMatrix::zeros(m, templates.len());
    for (j, template) in templates.iter().enumerate() {
        let sorted = sort_desc(coorbit(group, template, v)?.as_slice());
        for (i, value) in sorted.into_iter().enumerate() {
            out[(i, j)] = value;
        }
    }
    Ok(out)
}

/// Column-major stacking of a matrix into a vector.
pub fn vectorize(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

/// The full pipeline: reduction applied to the vectorized sorted coorbits.
pub fn embed(pipeline: &EmbeddingPipeline, v: &DVector<f64>) -> Result<DVector<f64>, EmbeddingError> {
    let beta = sorted_coorbit_matrix(&pipeline.group, &pipeline.templates, v)?;
    Ok(pipeline.reduction.matrix() * vectorize(&beta))
}

/// The linear operator collecting all coorbits: row `j*M + i` is the group
/// image `g_i` of template `j`, transposed, so applying it to `v` yields the
/// unsorted coorbits in vectorize order.
pub fn stacked_coorbit_matrix(group: &FiniteGroup, templates: &TemplateSet) -> DMatrix<f64> {
    let m = group.order();
    let d = group.dim();
    let mut k = DMatrix::zeros(m * templates.len(), d);
    for (j, template) in templates.iter().enumerate() {
        for e in group.elements() {
            let image = &e.matrix * template;
            for c in 0..d {
                k[(j * m + e.index, c)] = image[c];
            }
        }
    }
    k
}

/// Pipeline evaluator that applies the precomputed stacked operator and
/// sorts in place, avoiding the per-element loop of [`embed`].
pub struct Evaluator<'a> {
    pipeline: &'a EmbeddingPipeline,
    stacked: DMatrix<f64>,
}

impl Evaluator<'_> {
    pub fn pipeline(&self) -> &EmbeddingPipeline {
        self.pipeline
    }

    pub fn stacked(&self) -> &DMatrix<f64> {
        &self.stacked
    }

    pub fn embed(&self, v: &DVector<f64>) -> Result<DVector<f64>, EmbeddingError> {
        let d = self.pipeline.group.dim();
        if v.len() != d {
            return Err(EmbeddingError::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
        let mut coorbits = &self.stacked * v;
        let m = self.pipeline.group.order();
        let storage = coorbits.as_mut_slice();
        for j in 0..self.pipeline.templates.len() {
            storage[j * m..(j + 1) * m].sort_by(|a, b| b.total_cmp(a));
        }
        Ok(self.pipeline.reduction.matrix() * coorbits)
    }
}

/// `diag(B^T sort(X A))` computed column by column in `O(D m (n + log m))`,
/// without forming the `D x D` product.
pub fn embed_diag(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<DVector<f64>, EmbeddingError> {
    let (m, n) = x.shape();
    if a.nrows() != n {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "A has {} rows but X has {} columns",
            a.nrows(),
            n
        )));
    }
    if b.nrows() != m {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "B has {} rows but X has {} rows",
            b.nrows(),
            m
        )));
    }
    if a.ncols() != b.ncols() {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "A has {} columns but B has {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let d = a.ncols();
    let y = x * a;
    let mut out = DVector::zeros(d);
    let mut column = vec![0.0; m];
    for k in 0..d {
        column.copy_from_slice(y.column(k).as_slice());
        column.sort_by(|p, q| q.total_cmp(p));
        out[k] = dot_seq(b.column(k).as_slice(), &column);
    }
    Ok(out)
}

/// Builds the row-permutation pipeline equivalent to `embed_diag(a, b, .)`:
/// the symmetric group on the rows of `m x n` matrices, templates `e_1 a_k^T`
/// (column-major vectorized), and the diagonal-form reduction from `b`.
pub fn diag_pipeline(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<EmbeddingPipeline, EmbeddingError> {
    let n = a.nrows();
    let m = b.nrows();
    if a.ncols() != b.ncols() {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "A has {} columns but B has {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let group = crate::group::row_perm_group(m, n)?;
    let templates = outer_e1_templates(a, m)?;
    let reduction = Reduction::diag_form(b, group.order())?;
    EmbeddingPipeline::new(group, templates, reduction)
}

/// Templates `e_1 a_k^T` for each column `a_k`, as column-major vectorized
/// `m x n` matrices.
pub fn outer_e1_templates(a: &DMatrix<f64>, m: usize) -> Result<TemplateSet, EmbeddingError> {
    let n = a.nrows();
    let templates = (0..a.ncols())
        .map(|k| {
            DVector::from_fn(m * n, |idx, _| {
                let (i, j) = (idx % m, idx / m);
                if i == 0 {
                    a[(j, k)]
                } else {
                    0.0
                }
            })
        })
        .collect();
    TemplateSet::new(templates)
}

/// Reads one vector per line, entries comma-separated.
pub fn read_vector_batch(path: impl AsRef<Path>) -> Result<Vec<DVector<f64>>, EmbeddingError> {
    let text = std::fs::read_to_string(path)?;
    parse_vector_batch(&text)
}

pub fn parse_vector_batch(text: &str) -> Result<Vec<DVector<f64>>, EmbeddingError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let entries: Result<Vec<f64>, _> = line.split(',').map(|tok| tok.trim().parse()).collect();
        match entries {
            Ok(values) if !values.is_empty() => out.push(DVector::from_column_slice(&values)),
            _ => {
                return Err(EmbeddingError::Parse(format!(
                    "line {}: expected comma-separated decimals, got '{line}'",
                    lineno + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Writes one vector per line, entries comma-separated, shortest exact
/// decimal representation.
pub fn write_vector_batch(
    mut sink: impl Write,
    vectors: &[DVector<f64>],
) -> Result<(), EmbeddingError> {
    for v in vectors {
        let line = v
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(sink, "{line}")?;
    }
    Ok(())
}
