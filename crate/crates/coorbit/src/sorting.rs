//! Sorting combinatorics on `R^M`: descending sort, the permutation sets
//! that sort or fix a vector, the entry-gap statistics `min_gap` and
//! `spread`, and brute-force oracles for the stability lemmas that make
//! sorted coorbits well behaved under small perturbations.
//!
//! Throughout, a permutation acts on vectors by `(p x)_i = x_{p(i)}`.
//! All lemma oracles compare floating-point values exactly; scenario
//! generation leaves enough slack in the hypotheses that rounding cannot
//! flip a conclusion.

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Exhaustive permutation enumeration is limited to M! <= 5040 (M <= 7).
pub const ENUMERATION_CAP: usize = 5040;

#[derive(Debug, Error)]
pub enum SortingError {
    #[error("enumeration of S_{m} has {count} permutations, over the cap of {cap}")]
    EnumerationCapExceeded { m: usize, count: usize, cap: usize },
    #[error("operation undefined for a constant vector")]
    ConstantVector,
    #[error("need at least 2 entries, got {got}")]
    MTooSmall { got: usize },
    #[error("scenario generation exhausted its retry budget of {retries}")]
    DegenerateDraw { retries: usize },
    #[error("scenario hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A permutation of `{0, .., m-1}` acting on vectors by `(p x)_i = x_{p(i)}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Perm(Vec<usize>);

impl Perm {
    pub fn identity(m: usize) -> Self {
        Perm((0..m).collect())
    }

    pub fn from_images(images: Vec<usize>) -> Result<Self, SortingError> {
        let m = images.len();
        let mut seen = vec![false; m];
        for &i in &images {
            if i >= m || seen[i] {
                return Err(SortingError::InvalidParameter(format!(
                    "{images:?} is not a permutation of 0..{m}"
                )));
            }
            seen[i] = true;
        }
        Ok(Perm(images))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.0.iter().map(|&i| x[i]).collect()
    }

    /// Composition such that `compose(a, b).apply(x) == a.apply(&b.apply(x))`.
    pub fn compose(&self, other: &Perm) -> Perm {
        Perm(self.0.iter().map(|&i| other.0[i]).collect())
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0; self.0.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inv[p] = i;
        }
        Perm(inv)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &p)| i == p)
    }
}

/// All of `S_m` in lexicographic order, guarded by the enumeration cap.
pub fn all_perms(m: usize) -> Result<Vec<Perm>, SortingError> {
    let count = (1..=m).product::<usize>();
    if count > ENUMERATION_CAP {
        return Err(SortingError::EnumerationCapExceeded {
            m,
            count,
            cap: ENUMERATION_CAP,
        });
    }
    Ok((0..m).permutations(m).map(Perm).collect())
}

/// Nonincreasing rearrangement.
pub fn sort_desc(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

/// `max(x) - min(x)`; 0 for vectors with fewer than two entries.
pub fn spread(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mut lo = x[0];
    let mut hi = x[0];
    for &v in &x[1..] {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

/// Smallest gap `|x_i - x_j|` over pairs that differ by more than `tol`;
/// infinite when no such pair exists (constant vector convention).
pub fn min_gap(x: &[f64], tol: f64) -> f64 {
    let sorted = sort_desc(x);
    let mut best = f64::INFINITY;
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            let gap = sorted[i] - sorted[j];
            if gap > tol {
                if gap < best {
                    best = gap;
                }
                break; // later j only widen the gap for this i
            }
        }
    }
    best
}

/// Sorting data of one vector: a canonical sorting permutation, the
/// partition of indices into equal-value blocks, and the gap statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SortProfile {
    /// Stable descending sorting permutation (original index order within ties).
    pub sigma: Perm,
    /// Original indices grouped by value, blocks ordered by descending value.
    pub partition: Vec<Vec<usize>>,
    /// Smallest gap between distinct entries; infinite for constant vectors.
    pub min_gap: f64,
    /// Largest entry minus smallest entry.
    pub spread: f64,
}

impl SortProfile {
    /// Number of permutations fixing the vector: the product of factorials
    /// of the block sizes. `None` when it overflows u128.
    pub fn stabiliser_order(&self) -> Option<u128> {
        let mut total: u128 = 1;
        for block in &self.partition {
            for k in 2..=block.len() as u128 {
                total = total.checked_mul(k)?;
            }
        }
        Some(total)
    }
}

/// Computes the [`SortProfile`] of `x`, treating entries within `tol` of
/// their sorted neighbours as equal.
pub fn sort_profile(x: &[f64], tol: f64) -> SortProfile {
    let m = x.len();
    let mut order: Vec<usize> = (0..m).collect();
    // Stable sort keeps the original index order inside ties.
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]));
    let sigma = Perm(order.clone());

    let mut partition: Vec<Vec<usize>> = Vec::new();
    for (rank, &idx) in order.iter().enumerate() {
        let start_new = rank == 0 || {
            let prev = order[rank - 1];
            (x[prev] - x[idx]).abs() > tol
        };
        if start_new {
            partition.push(vec![idx]);
        } else {
            partition.last_mut().unwrap().push(idx);
        }
    }

    SortProfile {
        sigma,
        partition,
        min_gap: min_gap(x, tol),
        spread: spread(x),
    }
}

/// All permutations `p` with `p x = sort_desc(x)` entrywise within `tol`.
pub fn enumerate_sorting_perms(x: &[f64], tol: f64) -> Result<BTreeSet<Perm>, SortingError> {
    let target = sort_desc(x);
    Ok(all_perms(x.len())?
        .into_iter()
        .filter(|p| {
            p.apply(x)
                .iter()
                .zip(&target)
                .all(|(a, b)| (a - b).abs() <= tol)
        })
        .collect())
}

/// All permutations `p` with `p x = x` entrywise within `tol`.
pub fn enumerate_fixing_perms(x: &[f64], tol: f64) -> Result<BTreeSet<Perm>, SortingError> {
    Ok(all_perms(x.len())?
        .into_iter()
        .filter(|p| p.apply(x).iter().zip(x).all(|(a, b)| (a - b).abs() <= tol))
        .collect())
}

/// The pairwise-difference matrix with one row per index pair `i < j`
/// (+1 at `i`, -1 at `j`), rows ordered (0,1),(0,2),..,(M-2,M-1).
/// For every `x`, `||D x||_inf = spread(x)`.
pub fn pairwise_diff_matrix(m: usize) -> Result<DMatrix<f64>, SortingError> {
    if m < 2 {
        return Err(SortingError::MTooSmall { got: m });
    }
    let rows = m * (m - 1) / 2;
    let mut d = DMatrix::zeros(rows, m);
    let mut r = 0;
    for i in 0..m {
        for j in i + 1..m {
            d[(r, i)] = 1.0;
            d[(r, j)] = -1.0;
            r += 1;
        }
    }
    Ok(d)
}

/// The two enumeration-based restatements of the minimal entry gap, next to
/// the gap itself. For non-constant `x` all three coincide exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinGapReexpression {
    pub min_gap: f64,
    /// `min over p not fixing x of ||p x - x||_inf`.
    pub over_non_fixing: f64,
    /// `min over p not sorting x of ||p x - sort_desc(x)||_inf`.
    pub over_non_sorting: f64,
}

impl MinGapReexpression {
    pub fn holds(&self) -> bool {
        self.min_gap == self.over_non_fixing && self.min_gap == self.over_non_sorting
    }
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Evaluates both enumeration minima against `min_gap(x, 0)`.
pub fn min_gap_reexpression(x: &[f64]) -> Result<MinGapReexpression, SortingError> {
    if spread(x) == 0.0 {
        return Err(SortingError::ConstantVector);
    }
    let perms = all_perms(x.len())?;
    let sorted = sort_desc(x);
    let mut over_non_fixing = f64::INFINITY;
    let mut over_non_sorting = f64::INFINITY;
    for p in &perms {
        let px = p.apply(x);
        let to_x = inf_dist(&px, x);
        if to_x > 0.0 {
            over_non_fixing = over_non_fixing.min(to_x);
        }
        let to_sorted = inf_dist(&px, &sorted);
        if to_sorted > 0.0 {
            over_non_sorting = over_non_sorting.min(to_sorted);
        }
    }
    Ok(MinGapReexpression {
        min_gap: min_gap(x, 0.0),
        over_non_fixing,
        over_non_sorting,
    })
}

/// Input bundle for the stability-lemma oracles: a nested family of vectors
/// `xs`, positive per-vector coefficients near 1, the coefficient budget
/// `eps`, and an optional additive offset.
///
/// Hypotheses encoded by [`LemmaScenario::validate`]:
/// - `spread(xs[l+1]) < min_gap(sum of xs[..=l])` for every `l`,
/// - `spread(sum of (coeffs[k]-1) xs[k]) <= eps * min_gap(sum of xs)`,
/// - when the offset is present, `spread(offset) <= min_gap(sum of xs) / 2`
///   and `eps <= 1/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaScenario {
    pub xs: Vec<Vec<f64>>,
    pub coeffs: Vec<f64>,
    pub eps: f64,
    pub offset: Option<Vec<f64>>,
}

fn vec_sum(xs: &[Vec<f64>]) -> Vec<f64> {
    let m = xs[0].len();
    let mut out = vec![0.0; m];
    for x in xs {
        for (o, v) in out.iter_mut().zip(x) {
            *o += v;
        }
    }
    out
}

fn weighted_sum(xs: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let m = xs[0].len();
    let mut out = vec![0.0; m];
    for (x, &w) in xs.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(x) {
            *o += w * v;
        }
    }
    out
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn add_scaled(a: &[f64], t: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * y).collect()
}

impl LemmaScenario {
    pub fn depth(&self) -> usize {
        self.xs.len()
    }

    pub fn dim(&self) -> usize {
        self.xs.first().map_or(0, Vec::len)
    }

    /// Sum of the nested vectors.
    pub fn base_sum(&self) -> Vec<f64> {
        vec_sum(&self.xs)
    }

    /// Sum weighted by the coefficients.
    pub fn scaled_sum(&self) -> Vec<f64> {
        weighted_sum(&self.xs, &self.coeffs)
    }

    /// The coefficient perturbation `sum of (coeffs[k]-1) xs[k]`.
    pub fn coeff_perturbation(&self) -> Vec<f64> {
        let weights: Vec<f64> = self.coeffs.iter().map(|c| c - 1.0).collect();
        weighted_sum(&self.xs, &weights)
    }

    pub fn validate(&self) -> Result<(), SortingError> {
        let p = self.xs.len();
        if p == 0 {
            return Err(SortingError::HypothesisViolated("no vectors".into()));
        }
        let m = self.xs[0].len();
        if self.xs.iter().any(|x| x.len() != m) {
            return Err(SortingError::HypothesisViolated(
                "vectors have mixed dimensions".into(),
            ));
        }
        if self.coeffs.len() != p {
            return Err(SortingError::HypothesisViolated(format!(
                "{} coefficients for {} vectors",
                self.coeffs.len(),
                p
            )));
        }
        if self.coeffs.iter().any(|&c| !(c > 0.0)) {
            return Err(SortingError::HypothesisViolated(
                "coefficients must be positive".into(),
            ));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(SortingError::HypothesisViolated(
                "eps must lie in (0,1)".into(),
            ));
        }
        for l in 0..p - 1 {
            let partial = vec_sum(&self.xs[..=l]);
            let gap = min_gap(&partial, 0.0);
            let next_spread = spread(&self.xs[l + 1]);
            if !(next_spread < gap) {
                return Err(SortingError::HypothesisViolated(format!(
                    "nesting fails at level {l}: spread {next_spread} >= gap {gap}"
                )));
            }
        }
        let total_gap = min_gap(&self.base_sum(), 0.0);
        let coeff_spread = spread(&self.coeff_perturbation());
        let budget = if total_gap.is_finite() {
            self.eps * total_gap
        } else {
            f64::INFINITY
        };
        if !(coeff_spread <= budget) {
            return Err(SortingError::HypothesisViolated(format!(
                "coefficient perturbation spread {coeff_spread} exceeds eps * gap = {budget}"
            )));
        }
        if let Some(offset) = &self.offset {
            if offset.len() != m {
                return Err(SortingError::HypothesisViolated(
                    "offset has wrong dimension".into(),
                ));
            }
            if self.eps > 0.5 {
                return Err(SortingError::HypothesisViolated(
                    "eps must be <= 1/2 when an offset is present".into(),
                ));
            }
            let half_gap = if total_gap.is_finite() {
                0.5 * total_gap
            } else {
                f64::INFINITY
            };
            let offset_spread = spread(offset);
            if !(offset_spread <= half_gap) {
                return Err(SortingError::HypothesisViolated(format!(
                    "offset spread {offset_spread} exceeds gap/2 = {half_gap}"
                )));
            }
        }
        Ok(())
    }
}

fn gaussian_vec(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn has_distinct_entries(x: &[f64]) -> bool {
    let sorted = sort_desc(x);
    sorted.windows(2).all(|w| w[0] > w[1])
}

/// Safety margin keeping generated scenarios strictly inside their bounds,
/// so exact revalidation cannot fail by one rounding step.
const SLACK: f64 = 0.999;
const RETRY_BUDGET: usize = 64;

/// Draws a random scenario satisfying every hypothesis by construction:
/// `xs[0]` has distinct entries, each later vector is rescaled to half the
/// current gap, the coefficients are rescaled to fit the `eps` budget, and
/// the offset (when requested) to half the total gap. Deterministic in
/// `seed`.
pub fn generate_scenario(
    m: usize,
    p: usize,
    eps: f64,
    with_offset: bool,
    seed: u64,
) -> Result<LemmaScenario, SortingError> {
    if m < 2 {
        return Err(SortingError::MTooSmall { got: m });
    }
    if p < 1 {
        return Err(SortingError::InvalidParameter("p must be >= 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(SortingError::InvalidParameter("eps must lie in (0,1)".into()));
    }
    if with_offset && eps > 0.5 {
        return Err(SortingError::InvalidParameter(
            "eps must be <= 1/2 when an offset is requested".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut retries = 0;
    let mut draw = |pred: &dyn Fn(&[f64]) -> bool, rng: &mut ChaCha8Rng| -> Result<Vec<f64>, SortingError> {
        loop {
            let v = gaussian_vec(m, rng);
            if pred(&v) {
                return Ok(v);
            }
            retries += 1;
            if retries > RETRY_BUDGET {
                return Err(SortingError::DegenerateDraw { retries: RETRY_BUDGET });
            }
        }
    };

    let x1 = draw(&has_distinct_entries, &mut rng)?;
    let mut xs = vec![x1];
    for _ in 1..p {
        let gap = min_gap(&vec_sum(&xs), 0.0);
        let raw = draw(&|v| spread(v) > 1e-9, &mut rng)?;
        let scale = 0.5 * gap / spread(&raw);
        xs.push(raw.iter().map(|v| v * scale).collect());
    }

    let total_gap = min_gap(&vec_sum(&xs), 0.0);
    let directions: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let perturbation = weighted_sum(&xs, &directions);
    let pert_spread = spread(&perturbation);
    let coeff_scale = if pert_spread > 0.0 {
        (SLACK * eps * total_gap / pert_spread).min(SLACK)
    } else {
        0.0
    };
    let coeffs: Vec<f64> = directions.iter().map(|u| 1.0 + coeff_scale * u).collect();

    let offset = if with_offset {
        let raw = draw(&|v| spread(v) > 1e-9, &mut rng)?;
        let scale = SLACK * 0.5 * total_gap / spread(&raw);
        Some(raw.iter().map(|v| v * scale).collect())
    } else {
        None
    };

    let scenario = LemmaScenario {
        xs,
        coeffs,
        eps,
        offset,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Result of one lemma sub-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Verdict over all sub-checks run for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioVerdict {
    pub checks: Vec<SubCheck>,
}

impl ScenarioVerdict {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_names(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.clone())
            .collect()
    }
}

/// Exhaustively checks every lemma conclusion applicable to the scenario:
/// nested inclusions of sorting/fixing sets along the partial sums,
/// inclusion and segment stability for the perturbing vector, equality of
/// the sorting/fixing sets between the plain and coefficient-scaled sums,
/// the gap sandwich, and (with an offset) equality of the offset-shifted
/// sorting/fixing sets.
pub fn check_scenario(s: &LemmaScenario) -> Result<ScenarioVerdict, SortingError> {
    s.validate()?;
    let m = s.dim();
    // Probe the cap once up front.
    let _ = all_perms(m)?;
    let ell = |x: &[f64]| enumerate_sorting_perms(x, 0.0).expect("cap checked above");
    let aitch = |x: &[f64]| enumerate_fixing_perms(x, 0.0).expect("cap checked above");

    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(SubCheck {
            name: name.into(),
            passed,
            detail,
        });
    };

    let base = s.base_sum();
    let scaled = s.scaled_sum();
    // The shared perturbing vector: the offset when present, otherwise the
    // coefficient perturbation. Either way its spread is below the gap.
    let w = s
        .offset
        .clone()
        .unwrap_or_else(|| s.coeff_perturbation());
    let shifted = add(&base, &w);

    // Inclusions along the nested partial sums.
    let mut nested_ok = true;
    let mut nested_detail = String::new();
    for l in 0..s.depth() - 1 {
        let partial = vec_sum(&s.xs[..=l]);
        let next = vec_sum(&s.xs[..=l + 1]);
        let l_ok = ell(&next).is_subset(&ell(&partial));
        let h_ok = aitch(&next).is_subset(&aitch(&partial));
        if !(l_ok && h_ok) {
            nested_ok = false;
            nested_detail = format!("inclusion fails between partial sums {l} and {}", l + 1);
            break;
        }
    }
    push("nested_inclusion", nested_ok, nested_detail);

    // Inclusion for the perturbing vector.
    let incl_l = ell(&shifted).is_subset(&ell(&base));
    let incl_h = aitch(&shifted).is_subset(&aitch(&base));
    push(
        "perturbation_inclusion",
        incl_l && incl_h,
        if incl_l && incl_h {
            String::new()
        } else {
            "sorting or fixing set escapes under the perturbing vector".into()
        },
    );

    // Segment stability: sorting sets constant along t in (0, 1].
    let reference = ell(&shifted);
    let mut segment_ok = true;
    let mut segment_detail = String::new();
    for k in 1..=10 {
        let t = k as f64 / 10.0;
        let point = add_scaled(&base, t, &w);
        if ell(&point) != reference {
            segment_ok = false;
            segment_detail = format!("sorting set changes at t = {t}");
            break;
        }
    }
    push("segment_stability", segment_ok, segment_detail);

    // Scaled-coefficient equalities.
    let scale_l = ell(&base) == ell(&scaled);
    push(
        "scaled_sorting_equality",
        scale_l,
        if scale_l {
            String::new()
        } else {
            "sorting sets differ between plain and scaled sums".into()
        },
    );
    let scale_h = aitch(&base) == aitch(&scaled);
    push(
        "scaled_fixing_equality",
        scale_h,
        if scale_h {
            String::new()
        } else {
            "fixing sets differ between plain and scaled sums".into()
        },
    );

    // Gap sandwich.
    let base_gap = min_gap(&base, 0.0);
    let scaled_gap = min_gap(&scaled, 0.0);
    let sandwich = if base_gap.is_finite() {
        (1.0 - s.eps) * base_gap <= scaled_gap && scaled_gap <= (1.0 + s.eps) * base_gap
    } else {
        scaled_gap.is_infinite()
    };
    push(
        "gap_sandwich",
        sandwich,
        if sandwich {
            String::new()
        } else {
            format!("gap {scaled_gap} outside [{}, {}]", (1.0 - s.eps) * base_gap, (1.0 + s.eps) * base_gap)
        },
    );

    // Offset-shifted equalities.
    if let Some(offset) = &s.offset {
        let a = add(&base, offset);
        let b = add(&scaled, offset);
        let off_l = ell(&a) == ell(&b);
        push(
            "offset_sorting_equality",
            off_l,
            if off_l {
                String::new()
            } else {
                "sorting sets differ between offset-shifted sums".into()
            },
        );
        let off_h = aitch(&a) == aitch(&b);
        push(
            "offset_fixing_equality",
            off_h,
            if off_h {
                String::new()
            } else {
                "fixing sets differ between offset-shifted sums".into()
            },
        );
    }

    Ok(ScenarioVerdict { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sort_desc_examples() {
        assert_eq!(sort_desc(&[1.0, 3.0, 2.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(sort_desc(&[5.0, 5.0, 5.0]), vec![5.0, 5.0, 5.0]);
        assert_eq!(sort_desc(&[-1.0, 0.0, -2.0]), vec![0.0, -1.0, -2.0]);
    }

    #[test]
    fn profile_of_tied_vector() {
        let p = sort_profile(&[2.0, 2.0, 1.0], 0.0);
        assert_eq!(p.partition, vec![vec![0, 1], vec![2]]);
        assert_eq!(p.stabiliser_order(), Some(2));
        assert_eq!(p.min_gap, 1.0);
        assert_eq!(p.spread, 1.0);
        assert_eq!(p.sigma, Perm::identity(3));
    }

    #[test]
    fn profile_gap_statistics() {
        let p = sort_profile(&[3.0, 1.0, 1.0], 0.0);
        assert_eq!(p.min_gap, 2.0);
        assert_eq!(p.spread, 2.0);
    }

    #[test]
    fn profile_of_constant_vector() {
        let p = sort_profile(&[7.0, 7.0], 0.0);
        assert!(p.min_gap.is_infinite());
        assert_eq!(p.spread, 0.0);
        assert_eq!(p.stabiliser_order(), Some(2));
    }

    #[test]
    fn sigma_is_stable_under_ties() {
        let p = sort_profile(&[1.0, 3.0, 3.0, 2.0], 0.0);
        assert_eq!(p.sigma.images(), &[1, 2, 3, 0]);
        let sorted = p.sigma.apply(&[1.0, 3.0, 3.0, 2.0]);
        assert!(sorted.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn sorting_perms_of_tied_vector() {
        let set = enumerate_sorting_perms(&[2.0, 2.0, 1.0], 0.0).unwrap();
        let expected: BTreeSet<Perm> = [
            Perm::from_images(vec![0, 1, 2]).unwrap(),
            Perm::from_images(vec![1, 0, 2]).unwrap(),
        ]
        .into_iter()
        .collect();
        assert_eq!(set, expected);
    }

    #[test]
    fn sorting_perm_of_increasing_vector_is_the_reversal() {
        let set = enumerate_sorting_perms(&[1.0, 2.0, 3.0], 0.0).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(
            set.iter().next().unwrap(),
            &Perm::from_images(vec![2, 1, 0]).unwrap()
        );
    }

    #[test]
    fn constant_vector_is_sorted_by_everything() {
        let set = enumerate_sorting_perms(&[4.0, 4.0, 4.0], 0.0).unwrap();
        assert_eq!(set.len(), 6);
    }

    #[test]
    fn enumeration_cap_guards_large_m() {
        assert!(matches!(
            all_perms(8),
            Err(SortingError::EnumerationCapExceeded { m: 8, .. })
        ));
    }

    #[test]
    fn diff_matrix_small_cases() {
        assert_eq!(
            pairwise_diff_matrix(2).unwrap(),
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0])
        );
        assert_eq!(
            pairwise_diff_matrix(3).unwrap(),
            DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0, -1.0])
        );
        assert!(matches!(
            pairwise_diff_matrix(1),
            Err(SortingError::MTooSmall { got: 1 })
        ));
    }

    #[test]
    fn spread_equals_inf_norm_of_diff_matrix_image() {
        let x = [0.25, -1.5, 3.0, 0.75];
        let d = pairwise_diff_matrix(4).unwrap();
        let dx = d * nalgebra::DVector::from_column_slice(&x);
        let inf = dx.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        assert_eq!(inf, spread(&x));
    }

    #[test]
    fn reexpression_examples() {
        let r = min_gap_reexpression(&[3.0, 1.0, 1.0]).unwrap();
        assert_eq!(r.min_gap, 2.0);
        assert!(r.holds());

        let r = min_gap_reexpression(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.min_gap, 1.0);
        assert!(r.holds());

        let r = min_gap_reexpression(&[0.0, 10.0]).unwrap();
        assert_eq!(r.min_gap, 10.0);
        assert!(r.holds());
    }

    #[test]
    fn reexpression_rejects_constant_vectors() {
        assert!(matches!(
            min_gap_reexpression(&[4.0, 4.0]),
            Err(SortingError::ConstantVector)
        ));
    }

    #[test]
    fn min_gap_sees_past_tolerance_chains() {
        // Consecutive sorted gaps are below tol but the pair (0, 1.2) is not.
        assert_eq!(min_gap(&[0.0, 0.6, 1.2], 1.0), 1.2);
    }

    #[test]
    fn generated_scenario_single_level() {
        let s = generate_scenario(4, 1, 0.5, false, 1).unwrap();
        assert_eq!(s.depth(), 1);
        assert!(has_distinct_entries(&s.xs[0]));
        s.validate().unwrap();
    }

    #[test]
    fn generated_scenario_nested_triple() {
        let s = generate_scenario(4, 3, 0.5, false, 7).unwrap();
        assert_eq!(s.depth(), 3);
        s.validate().unwrap();
    }

    #[test]
    fn generated_scenario_with_offset() {
        let s = generate_scenario(5, 2, 0.5, true, 3).unwrap();
        assert!(s.offset.is_some());
        s.validate().unwrap();
    }

    #[test]
    fn identity_scenario_passes_all_checks() {
        let s = LemmaScenario {
            xs: vec![vec![3.0, 1.0, 2.0]],
            coeffs: vec![1.0],
            eps: 0.5,
            offset: None,
        };
        let verdict = check_scenario(&s).unwrap();
        assert!(verdict.all_passed(), "failed: {:?}", verdict.failed_names());
    }

    #[test]
    fn generated_scenario_passes_all_checks() {
        let s = generate_scenario(4, 3, 0.5, false, 7).unwrap();
        let verdict = check_scenario(&s).unwrap();
        assert!(verdict.all_passed(), "failed: {:?}", verdict.failed_names());
    }

    #[test]
    fn oversized_perturbation_is_rejected() {
        let s = LemmaScenario {
            xs: vec![vec![3.0, 1.0, 2.0], vec![100.0, 0.0, -100.0]],
            coeffs: vec![1.0, 1.0],
            eps: 0.5,
            offset: None,
        };
        assert!(matches!(
            check_scenario(&s),
            Err(SortingError::HypothesisViolated(_))
        ));
    }

    #[test]
    fn scenario_serializes_round_trip() {
        let s = generate_scenario(3, 2, 0.25, true, 11).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: LemmaScenario = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }
}
