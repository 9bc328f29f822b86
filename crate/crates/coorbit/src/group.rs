//! Finite groups of orthogonal matrices acting on `R^d`.
//!
//! Groups are generated by breadth-first closure from a generator list and
//! stored as an explicitly enumerated element list with the identity first.
//! The enumeration order is deterministic: elements appear level by level
//! (word length in the generators), lexicographically within a level.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;
use std::path::Path;
use thiserror::Error;

/// Default tolerance for orthogonality checks, element deduplication and
/// stabiliser membership. Doubles keep sign and permutation matrices exact
/// and rotation matrices near-exact, so 1e-9 leaves a wide margin.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Hard cap on generated group order (2 * 7!).
pub const ELEMENT_CAP: usize = 10_080;

#[derive(Debug, Error)]
pub enum GroupError {
    #[error("generator {index} is not orthogonal: ||G^T G - I||_max = {defect:.3e} exceeds {tol:.3e}")]
    NonOrthogonalGenerator { index: usize, defect: f64, tol: f64 },
    #[error("group generation exceeded the cap of {cap} elements")]
    ClosureCapExceeded { cap: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("group file parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One group element: its matrix and its position in the enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub matrix: DMatrix<f64>,
    pub index: usize,
}

/// A finite group of orthogonal `d x d` matrices, enumerated with the
/// identity at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGroup {
    elements: Vec<GroupElement>,
    dim: usize,
    identity_index: usize,
}

fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let mut defect = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((gram[(i, j)] - target).abs());
        }
    }
    defect
}

fn matrices_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
}

fn lex_cmp(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Ordering {
    // Row-major reading order.
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            match a[(i, j)].total_cmp(&b[(i, j)]) {
                Ordering::Equal => {}
                other => return other,
            }
        }
    }
    Ordering::Equal
}

/// Closes the generator set under multiplication with the default element cap.
pub fn build_group_from_generators(
    generators: &[DMatrix<f64>],
    tol: f64,
) -> Result<FiniteGroup, GroupError> {
    build_group_capped(generators, tol, ELEMENT_CAP)
}

/// Breadth-first closure with an explicit element cap.
pub fn build_group_capped(
    generators: &[DMatrix<f64>],
    tol: f64,
    cap: usize,
) -> Result<FiniteGroup, GroupError> {
    if generators.is_empty() {
        return Err(GroupError::InvalidParameter(
            "at least one generator is required".into(),
        ));
    }
    let d = generators[0].nrows();
    for (index, g) in generators.iter().enumerate() {
        if g.nrows() != d || g.ncols() != d {
            return Err(GroupError::DimensionMismatch {
                expected: d,
                got: if g.nrows() != d { g.nrows() } else { g.ncols() },
            });
        }
        let defect = orthogonality_defect(g);
        if defect > tol {
            return Err(GroupError::NonOrthogonalGenerator { index, defect, tol });
        }
    }

    let mut matrices: Vec<DMatrix<f64>> = vec![DMatrix::identity(d, d)];
    let mut frontier: Vec<usize> = vec![0];
    while !frontier.is_empty() {
        let mut fresh: Vec<DMatrix<f64>> = Vec::new();
        for &i in &frontier {
            for g in generators {
                let prod = &matrices[i] * g;
                let seen = matrices.iter().any(|m| matrices_close(m, &prod, tol))
                    || fresh.iter().any(|m| matrices_close(m, &prod, tol));
                if !seen {
                    fresh.push(prod);
                }
            }
        }
        fresh.sort_by(lex_cmp);
        if matrices.len() + fresh.len() > cap {
            return Err(GroupError::ClosureCapExceeded { cap });
        }
        let start = matrices.len();
        matrices.extend(fresh);
        frontier = (start..matrices.len()).collect();
    }

    let elements = matrices
        .into_iter()
        .enumerate()
        .map(|(index, matrix)| GroupElement { matrix, index })
        .collect();
    Ok(FiniteGroup {
        elements,
        dim: d,
        identity_index: 0,
    })
}

/// Applies a group element to a vector.
pub fn act(g: &GroupElement, v: &DVector<f64>) -> Result<DVector<f64>, GroupError> {
    if v.len() != g.matrix.ncols() {
        return Err(GroupError::DimensionMismatch {
            expected: g.matrix.ncols(),
            got: v.len(),
        });
    }
    Ok(&g.matrix * v)
}

/// Indices of the group elements fixing a vector, plus the distance gap to
/// the nearest non-fixing image.
#[derive(Debug, Clone, PartialEq)]
pub struct StabiliserSubset {
    /// Ascending element indices with `||g v - v|| <= tol`.
    pub members: Vec<usize>,
    /// `min_{g not in H(v)} ||g v - v||`; infinite when every element fixes v.
    pub gap: f64,
}

impl StabiliserSubset {
    pub fn contains(&self, index: usize) -> bool {
        self.members.binary_search(&index).is_ok()
    }

    pub fn is_subset_of(&self, other: &StabiliserSubset) -> bool {
        self.members.iter().all(|i| other.contains(*i))
    }

    /// Checks closure of the member set under the group's multiplication.
    pub fn is_subgroup(&self, group: &FiniteGroup, tol: f64) -> bool {
        self.members.iter().all(|&i| {
            self.members.iter().all(|&j| {
                group
                    .product_index(i, j, tol)
                    .map(|k| self.contains(k))
                    .unwrap_or(false)
            })
        })
    }
}

impl FiniteGroup {
    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn element(&self, index: usize) -> &GroupElement {
        &self.elements[index]
    }

    pub fn identity(&self) -> &GroupElement {
        &self.elements[self.identity_index]
    }

    pub fn identity_index(&self) -> usize {
        self.identity_index
    }

    /// Index of the element matching `m` within `tol`, if any.
    pub fn find_element(&self, m: &DMatrix<f64>, tol: f64) -> Option<usize> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return None;
        }
        self.elements
            .iter()
            .position(|e| matrices_close(&e.matrix, m, tol))
    }

    /// Index of the product `g_i g_j`, if it resolves to a group member.
    pub fn product_index(&self, i: usize, j: usize, tol: f64) -> Option<usize> {
        let prod = &self.elements[i].matrix * &self.elements[j].matrix;
        self.find_element(&prod, tol)
    }

    /// First product pair that fails to land in the group, if any.
    /// Exhaustive up to order 720, randomly sampled above that.
    pub fn closure_defect(&self, tol: f64) -> Option<(usize, usize)> {
        let m = self.order();
        if m <= 720 {
            for i in 0..m {
                for j in 0..m {
                    if self.product_index(i, j, tol).is_none() {
                        return Some((i, j));
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x0c5_0b17);
            for _ in 0..100_000 {
                let i = rng.gen_range(0..m);
                let j = rng.gen_range(0..m);
                if self.product_index(i, j, tol).is_none() {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Whether every element's inverse (its transpose) is in the group.
    pub fn contains_inverses(&self, tol: f64) -> bool {
        self.elements
            .iter()
            .all(|e| self.find_element(&e.matrix.transpose(), tol).is_some())
    }

    /// Exact quotient-metric distance `min_g ||v - g w||` by brute force.
    pub fn quotient_dist(&self, v: &DVector<f64>, w: &DVector<f64>) -> Result<f64, GroupError> {
        for u in [v, w] {
            if u.len() != self.dim {
                return Err(GroupError::DimensionMismatch {
                    expected: self.dim,
                    got: u.len(),
                });
            }
        }
        let mut best = f64::INFINITY;
        for e in &self.elements {
            let dist = (v - &e.matrix * w).norm();
            if dist < best {
                best = dist;
            }
        }
        Ok(best)
    }

    /// Stabiliser members of `v` within `tol`, with the gap to the complement.
    pub fn stabiliser(&self, v: &DVector<f64>, tol: f64) -> Result<StabiliserSubset, GroupError> {
        if v.len() != self.dim {
            return Err(GroupError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        let mut members = Vec::new();
        let mut gap = f64::INFINITY;
        for e in &self.elements {
            let dist = (&e.matrix * v - v).norm();
            if dist <= tol {
                members.push(e.index);
            } else if dist < gap {
                gap = dist;
            }
        }
        Ok(StabiliserSubset { members, gap })
    }

    /// All images of `v` in enumeration order.
    pub fn orbit(&self, v: &DVector<f64>) -> Result<Vec<DVector<f64>>, GroupError> {
        if v.len() != self.dim {
            return Err(GroupError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(self.elements.iter().map(|e| &e.matrix * v).collect())
    }
}

fn shift_matrix(d: usize) -> DMatrix<f64> {
    // Sends e_i to e_{i+1} cyclically, so (P v)_i = v_{i-1 mod d}.
    DMatrix::from_fn(d, d, |i, j| if j == (i + d - 1) % d { 1.0 } else { 0.0 })
}

fn transposition_matrix(d: usize, a: usize, b: usize) -> DMatrix<f64> {
    let mut m = DMatrix::identity(d, d);
    m[(a, a)] = 0.0;
    m[(b, b)] = 0.0;
    m[(a, b)] = 1.0;
    m[(b, a)] = 1.0;
    m
}

/// `{I_d}`.
pub fn trivial_group(d: usize) -> Result<FiniteGroup, GroupError> {
    if d == 0 {
        return Err(GroupError::InvalidParameter("dimension must be >= 1".into()));
    }
    build_group_from_generators(&[DMatrix::identity(d, d)], DEFAULT_TOL)
}

/// `{I_d, -I_d}`.
pub fn sign_group(d: usize) -> Result<FiniteGroup, GroupError> {
    if d == 0 {
        return Err(GroupError::InvalidParameter("dimension must be >= 1".into()));
    }
    build_group_from_generators(&[-DMatrix::<f64>::identity(d, d)], DEFAULT_TOL)
}

/// Cyclic coordinate shifts of `R^d`, order `d`.
pub fn cyclic_group(d: usize) -> Result<FiniteGroup, GroupError> {
    if d == 0 {
        return Err(GroupError::InvalidParameter("dimension must be >= 1".into()));
    }
    build_group_from_generators(&[shift_matrix(d)], DEFAULT_TOL)
}

/// `S_m` permuting the rows of `m x n` matrices, acting on their column-major
/// vectorizations in `R^{m n}`. Order `m!`.
pub fn row_perm_group(m: usize, n: usize) -> Result<FiniteGroup, GroupError> {
    if m == 0 || n == 0 {
        return Err(GroupError::InvalidParameter("m and n must be >= 1".into()));
    }
    if m == 1 {
        return trivial_group(n);
    }
    // vec(P X) = (I_n kron P) vec(X) for column-major vec.
    let eye_n = DMatrix::<f64>::identity(n, n);
    let generators: Vec<DMatrix<f64>> = (0..m - 1)
        .map(|i| eye_n.kronecker(&transposition_matrix(m, i, i + 1)))
        .collect();
    build_group_from_generators(&generators, DEFAULT_TOL)
}

/// Builds a named fixture group. Recognised names: "trivial", "sign",
/// "cyclic" (all taking `d`), and "row-perm" (taking `m`, `n`).
pub fn fixture_group(name: &str, params: &[usize]) -> Result<FiniteGroup, GroupError> {
    match (name, params) {
        ("trivial", [d]) => trivial_group(*d),
        ("sign", [d]) => sign_group(*d),
        ("cyclic", [d]) => cyclic_group(*d),
        ("row-perm", [m, n]) => row_perm_group(*m, *n),
        _ => Err(GroupError::InvalidParameter(format!(
            "unknown fixture '{name}' with {} parameter(s)",
            params.len()
        ))),
    }
}

/// Reads generator matrices from a text file and closes them into a group.
///
/// Format: whitespace-separated tokens. First the dimension `d` and the
/// generator count `k`, then `k` matrices of `d*d` entries in row-major
/// order. `#` starts a comment running to the end of its line.
pub fn group_from_generators_file(
    path: impl AsRef<Path>,
    tol: f64,
) -> Result<FiniteGroup, GroupError> {
    let text = std::fs::read_to_string(path)?;
    let generators = parse_generators(&text)?;
    build_group_from_generators(&generators, tol)
}

pub fn parse_generators(text: &str) -> Result<Vec<DMatrix<f64>>, GroupError> {
    let mut tokens = text
        .lines()
        .map(|line| line.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let mut next = |what: &str| -> Result<String, GroupError> {
        tokens
            .next()
            .map(str::to_owned)
            .ok_or_else(|| GroupError::Parse(format!("unexpected end of file, expected {what}")))
    };
    let d: usize = next("dimension")?
        .parse()
        .map_err(|e| GroupError::Parse(format!("bad dimension: {e}")))?;
    let k: usize = next("generator count")?
        .parse()
        .map_err(|e| GroupError::Parse(format!("bad generator count: {e}")))?;
    if d == 0 || k == 0 {
        return Err(GroupError::Parse("dimension and count must be >= 1".into()));
    }
    let mut generators = Vec::with_capacity(k);
    for gi in 0..k {
        let mut entries = Vec::with_capacity(d * d);
        for ei in 0..d * d {
            let tok = next(&format!("entry {ei} of generator {gi}"))?;
            let value: f64 = tok
                .parse()
                .map_err(|e| GroupError::Parse(format!("bad entry '{tok}': {e}")))?;
            entries.push(value);
        }
        generators.push(DMatrix::from_row_slice(d, d, &entries));
    }
    if tokens.next().is_some() {
        return Err(GroupError::Parse("trailing tokens after last generator".into()));
    }
    Ok(generators)
}
