//! Exact bi-Lipschitz constants for magnitude-only measurements: the
//! measurement map, its largest-singular-value upper constant, the lower
//! constant as a minimum of paired smallest singular values over column
//! subsets, constructive collision witnesses when that minimum is zero, and
//! the Mercedes-Benz fixture.

use crate::analysis::operator_norm;
use crate::embedding::{outer_e1_templates, EmbeddingError, EmbeddingPipeline, Reduction};
use crate::group::row_perm_group;
use nalgebra::{DMatrix, DVector};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Subset enumeration stops at 2^24 subsets (24 measurement vectors).
pub const SUBSET_CAP: usize = 1 << 24;

/// Above this many columns the per-subset singular values come from
/// incrementally updated Gram matrices instead of fresh decompositions.
const GRAM_THRESHOLD: usize = 16;

/// Paired smallest singular values at or below this are treated as zero
/// when hunting for collision witnesses.
const NULL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SignRetrievalError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("subset enumeration over {d} columns exceeds the cap of {cap} subsets")]
    EnumerationCapExceeded { d: usize, cap: usize },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("frame file parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// A sequence of measurement vectors, stored as the columns of an n x D
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    a: DMatrix<f64>,
}

impl MeasurementFrame {
    pub fn new(a: DMatrix<f64>) -> Result<Self, SignRetrievalError> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(SignRetrievalError::InvalidFrame(
                "frame needs at least one row and one column".into(),
            ));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(SignRetrievalError::InvalidFrame(
                "frame entries must be finite".into(),
            ));
        }
        Ok(MeasurementFrame { a })
    }

    /// Ambient dimension n.
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Number of measurement vectors D.
    pub fn count(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn column(&self, i: usize) -> DVector<f64> {
        self.a.column(i).into_owned()
    }
}

/// The equiangular three-vector tight frame in the plane.
pub fn mercedes_benz() -> MeasurementFrame {
    let h = 3.0_f64.sqrt() / 2.0;
    MeasurementFrame::new(DMatrix::from_row_slice(
        2,
        3,
        &[-h, h, 0.0, -0.5, -0.5, 1.0],
    ))
    .expect("fixed finite entries")
}

/// Magnitude-only measurements `|<x, a_i>|`. Invariant under global sign
/// flip of `x`.
pub fn measure(frame: &MeasurementFrame, x: &DVector<f64>) -> Result<DVector<f64>, SignRetrievalError> {
    if x.len() != frame.dim() {
        return Err(SignRetrievalError::DimensionMismatch {
            expected: frame.dim(),
            got: x.len(),
        });
    }
    Ok(DVector::from_fn(frame.count(), |i, _| {
        frame.a.column(i).dot(x).abs()
    }))
}

/// The upper Lipschitz constant of the measurement map: sigma_1(A).
pub fn sign_upper_constant(frame: &MeasurementFrame) -> f64 {
    operator_norm(&frame.a)
}

/// The lower constant together with a subset attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerConstant {
    pub value: f64,
    /// Column indices of a minimizing subset S (its complement attains the
    /// same value).
    pub subset: Vec<usize>,
}

/// Exact lower Lipschitz constant of the measurement map:
/// `min over S of sqrt(sigma_n(A_S)^2 + sigma_n(A_Sc)^2)`, by exhaustive
/// subset enumeration. A submatrix with fewer than n columns contributes 0.
pub fn sign_lower_constant(frame: &MeasurementFrame) -> Result<f64, SignRetrievalError> {
    Ok(sign_lower_constant_detailed(frame)?.value)
}

pub fn sign_lower_constant_detailed(
    frame: &MeasurementFrame,
) -> Result<LowerConstant, SignRetrievalError> {
    let d = frame.count();
    check_subset_cap(d)?;
    if d > GRAM_THRESHOLD {
        lower_constant_gray(frame)
    } else {
        lower_constant_direct(frame)
    }
}

fn check_subset_cap(d: usize) -> Result<(), SignRetrievalError> {
    if d >= usize::BITS as usize || (1usize << d) > SUBSET_CAP {
        return Err(SignRetrievalError::EnumerationCapExceeded { d, cap: SUBSET_CAP });
    }
    Ok(())
}

fn subset_columns(frame: &MeasurementFrame, mask: usize) -> DMatrix<f64> {
    let picked: Vec<usize> = (0..frame.count()).filter(|i| mask & (1 << i) != 0).collect();
    let n = frame.dim();
    DMatrix::from_fn(n, picked.len(), |r, c| frame.a[(r, picked[c])])
}

/// n-th largest singular value of the subset submatrix; 0 when the subset
/// has fewer than n columns.
fn subset_sigma_n(frame: &MeasurementFrame, mask: usize) -> f64 {
    let size = mask.count_ones() as usize;
    let n = frame.dim();
    if size < n {
        return 0.0;
    }
    subset_columns(frame, mask)
        .singular_values()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

fn mask_to_indices(mask: usize, d: usize) -> Vec<usize> {
    (0..d).filter(|i| mask & (1 << i) != 0).collect()
}

fn lower_constant_direct(frame: &MeasurementFrame) -> Result<LowerConstant, SignRetrievalError> {
    let d = frame.count();
    let full = (1usize << d) - 1;
    let mut best = f64::INFINITY;
    let mut best_mask = 0usize;
    for mask in 0..=full {
        let s = subset_sigma_n(frame, mask);
        let sc = subset_sigma_n(frame, full & !mask);
        let value = (s * s + sc * sc).sqrt();
        if value < best {
            best = value;
            best_mask = mask;
        }
    }
    Ok(LowerConstant {
        value: best,
        subset: mask_to_indices(best_mask, d),
    })
}

/// Same minimum via Gram matrices updated one rank-1 term per Gray-code
/// step; sigma_n^2 of a subset is the smallest eigenvalue of its n x n
/// Gram, which is automatically 0 below n columns.
fn lower_constant_gray(frame: &MeasurementFrame) -> Result<LowerConstant, SignRetrievalError> {
    let d = frame.count();
    let n = frame.dim();
    let full_gram = &frame.a * frame.a.transpose();
    let lambda_min = |g: &DMatrix<f64>| -> f64 {
        g.clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    };
    let mut gram = DMatrix::zeros(n, n);
    let mut mask = 0usize;
    let mut best = f64::INFINITY;
    let mut best_mask = 0usize;
    for k in 0usize..(1usize << d) {
        let gray = k ^ (k >> 1);
        if k > 0 {
            let bit = k.trailing_zeros() as usize;
            let col = frame.a.column(bit);
            let outer = &col * col.transpose();
            if gray & (1 << bit) != 0 {
                gram += &outer;
            } else {
                gram -= &outer;
            }
            mask = gray;
        }
        let complement_gram = &full_gram - &gram;
        let value = (lambda_min(&gram) + lambda_min(&complement_gram)).sqrt();
        if value < best {
            best = value;
            best_mask = mask;
        }
    }
    Ok(LowerConstant {
        value: best,
        subset: mask_to_indices(best_mask, d),
    })
}

/// Unit vector orthogonal to the columns selected by `mask`; any unit
/// vector when the mask is empty. Only meaningful when the selected columns
/// are rank-deficient, which the caller has established.
fn null_direction(frame: &MeasurementFrame, mask: usize) -> Option<DVector<f64>> {
    let n = frame.dim();
    if mask == 0 {
        let mut e = DVector::zeros(n);
        e[0] = 1.0;
        return Some(e);
    }
    let sub = subset_columns(frame, mask);
    let svd = sub.clone().svd(true, false);
    let u = svd.u.as_ref()?;
    if sub.ncols() >= n {
        let values = &svd.singular_values;
        let mut arg = 0;
        for (i, v) in values.iter().enumerate() {
            if *v < values[arg] {
                arg = i;
            }
        }
        return Some(u.column(arg).into_owned());
    }
    // Fewer columns than rows: complement the span of U by deflating the
    // best-conditioned basis vector.
    let mut best: Option<DVector<f64>> = None;
    let mut best_norm = 0.0;
    for j in 0..n {
        let mut candidate = DVector::zeros(n);
        candidate[j] = 1.0;
        for c in 0..u.ncols() {
            let col = u.column(c);
            let coeff = col.dot(&candidate);
            candidate -= col * coeff;
        }
        let norm = candidate.norm();
        if norm > best_norm {
            best_norm = norm;
            best = Some(candidate / norm);
        }
    }
    best
}

/// When some subset has `sigma_n(A_S) = sigma_n(A_Sc) = 0` (within 1e-10),
/// builds `x = u + w`, `y = u - w` with unit `u` orthogonal to the S
/// columns and unit `w` orthogonal to the complement columns; the two have
/// equal measurements but lie on distinct sign orbits. Returns `None` when
/// every subset is well conditioned.
pub fn collision_witness(
    frame: &MeasurementFrame,
) -> Result<Option<(DVector<f64>, DVector<f64>)>, SignRetrievalError> {
    let d = frame.count();
    check_subset_cap(d)?;
    let full = (1usize << d) - 1;
    for mask in 0..=full {
        let complement = full & !mask;
        if subset_sigma_n(frame, mask) > NULL_TOL
            || subset_sigma_n(frame, complement) > NULL_TOL
        {
            continue;
        }
        let (u, w) = match (null_direction(frame, mask), null_direction(frame, complement)) {
            (Some(u), Some(w)) => (u, w),
            _ => continue,
        };
        let x = &u + &w;
        let y = &u - &w;
        let mx = measure(frame, &x)?;
        let my = measure(frame, &y)?;
        let equal_measurements = (mx - my).amax() <= NULL_TOL;
        let distinct_orbits = (&x - &y).norm().min((&x + &y).norm()) > 1e-6;
        if equal_measurements && distinct_orbits {
            return Ok(Some((x, y)));
        }
    }
    Ok(None)
}

/// Column-wise descending sort of `X A` for two-row inputs; the sorted form
/// is invariant under swapping the rows of `X`.
pub fn beta_row_sort(
    frame: &MeasurementFrame,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SignRetrievalError> {
    if x.nrows() != 2 {
        return Err(SignRetrievalError::ShapeMismatch(format!(
            "expected a 2-row input, got {} rows",
            x.nrows()
        )));
    }
    if x.ncols() != frame.dim() {
        return Err(SignRetrievalError::ShapeMismatch(format!(
            "input has {} columns but the frame lives in dimension {}",
            x.ncols(),
            frame.dim()
        )));
    }
    let mut product = x * &frame.a;
    for k in 0..product.ncols() {
        let (top, bottom) = (product[(0, k)], product[(1, k)]);
        if bottom > top {
            product[(0, k)] = bottom;
            product[(1, k)] = top;
        }
    }
    Ok(product)
}

/// The two-row sorting pipeline for this frame: row swaps on 2 x n inputs,
/// templates `e_1 a_k^T`, identity reduction. Restricted to antipodal rows
/// it reproduces the measurement map's distance ratios.
pub fn row_pair_pipeline(frame: &MeasurementFrame) -> Result<EmbeddingPipeline, EmbeddingError> {
    let group = row_perm_group(2, frame.dim())?;
    let templates = outer_e1_templates(&frame.a, 2)?;
    let reduction = Reduction::identity(2 * frame.count())?;
    EmbeddingPipeline::new(group, templates, reduction)
}

/// Column-major vectorization of the 2 x n matrix with rows `x` and `-x`.
pub fn antipodal_input(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(2 * n, |idx, _| {
        let j = idx / 2;
        if idx % 2 == 0 {
            x[j]
        } else {
            -x[j]
        }
    })
}

/// Reads a frame file: tokens `n D` then the D column vectors, `#` starts a
/// comment.
pub fn read_frame_file(path: impl AsRef<Path>) -> Result<MeasurementFrame, SignRetrievalError> {
    parse_frame(&std::fs::read_to_string(path)?)
}

pub fn parse_frame(text: &str) -> Result<MeasurementFrame, SignRetrievalError> {
    let mut tokens = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    let mut cursor = tokens.iter();
    let mut next_usize = |what: &str| -> Result<usize, SignRetrievalError> {
        cursor
            .next()
            .ok_or_else(|| SignRetrievalError::Parse(format!("missing {what}")))?
            .parse()
            .map_err(|_| SignRetrievalError::Parse(format!("{what} must be a count")))
    };
    let n = next_usize("dimension n")?;
    let d = next_usize("vector count D")?;
    if n == 0 || d == 0 {
        return Err(SignRetrievalError::Parse(
            "dimension and count must be positive".into(),
        ));
    }
    let mut a = DMatrix::zeros(n, d);
    for col in 0..d {
        for row in 0..n {
            let token = cursor.next().ok_or_else(|| {
                SignRetrievalError::Parse(format!(
                    "missing entry {row} of column {col} ({n}x{d} frame)"
                ))
            })?;
            a[(row, col)] = token.parse().map_err(|_| {
                SignRetrievalError::Parse(format!("bad entry '{token}' in column {col}"))
            })?;
        }
    }
    if cursor.next().is_some() {
        return Err(SignRetrievalError::Parse(
            "trailing data after the last column".into(),
        ));
    }
    MeasurementFrame::new(a)
}

pub fn write_frame(
    mut sink: impl Write,
    frame: &MeasurementFrame,
) -> Result<(), SignRetrievalError> {
    writeln!(sink, "{} {}", frame.dim(), frame.count())?;
    for col in 0..frame.count() {
        let line = frame
            .a
            .column(col)
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(sink, "{line}")?;
    }
    Ok(())
}
