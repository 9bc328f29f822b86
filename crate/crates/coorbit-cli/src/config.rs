//! Pipeline configuration: a JSON record naming the group, the template
//! source and the reduction, resolved into an `EmbeddingPipeline`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use coorbit::embedding::{outer_e1_templates, EmbeddingPipeline, Reduction, TemplateSet};
use coorbit::group::{
    cyclic_group, group_from_generators_file, row_perm_group, sign_group, trivial_group,
    FiniteGroup, DEFAULT_TOL,
};
use coorbit::signretrieval::read_frame_file;
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub group: GroupSpec,
    pub templates: TemplateSpec,
    pub reduction: ReductionSpec,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GroupSpec {
    Trivial { dim: usize },
    Sign { dim: usize },
    Cyclic { dim: usize },
    RowPerm { m: usize, n: usize },
    GeneratorsFile { path: PathBuf },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TemplateSpec {
    Explicit { vectors: Vec<Vec<f64>> },
    StandardBasis,
    RandomGaussian { count: usize, seed: u64 },
    FrameOuter { path: PathBuf },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReductionSpec {
    Identity,
    Dense { rows: Vec<Vec<f64>> },
    SelectEntries { indices: Vec<usize> },
    DiagForm { b: Vec<Vec<f64>> },
}

pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn build_group(spec: &GroupSpec) -> Result<FiniteGroup> {
    let group = match spec {
        GroupSpec::Trivial { dim } => trivial_group(*dim)?,
        GroupSpec::Sign { dim } => sign_group(*dim)?,
        GroupSpec::Cyclic { dim } => cyclic_group(*dim)?,
        GroupSpec::RowPerm { m, n } => row_perm_group(*m, *n)?,
        GroupSpec::GeneratorsFile { path } => group_from_generators_file(path, DEFAULT_TOL)
            .with_context(|| format!("loading generators from {}", path.display()))?,
    };
    Ok(group)
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let Some(first) = rows.first() else {
        bail!("{what} must have at least one row");
    };
    if rows.iter().any(|r| r.len() != first.len()) {
        bail!("{what} rows must all have the same length");
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        first.len(),
        rows.iter().flatten().copied(),
    ))
}

pub fn build_pipeline(cfg: &PipelineConfig) -> Result<EmbeddingPipeline> {
    let group = build_group(&cfg.group)?;
    let templates = match &cfg.templates {
        TemplateSpec::Explicit { vectors } => {
            if vectors.is_empty() {
                bail!("templates.vectors must be non-empty");
            }
            TemplateSet::new(
                vectors
                    .iter()
                    .map(|v| DVector::from_column_slice(v))
                    .collect(),
            )?
        }
        TemplateSpec::StandardBasis => TemplateSet::standard_basis(group.dim())?,
        TemplateSpec::RandomGaussian { count, seed } => {
            TemplateSet::random_gaussian(group.dim(), *count, *seed)?
        }
        TemplateSpec::FrameOuter { path } => {
            let GroupSpec::RowPerm { m, n } = &cfg.group else {
                bail!("templates.kind frame-outer requires a row-perm group");
            };
            let frame = read_frame_file(path)
                .with_context(|| format!("loading frame from {}", path.display()))?;
            if frame.dim() != *n {
                bail!(
                    "frame dimension {} does not match the row-perm column count {n}",
                    frame.dim()
                );
            }
            outer_e1_templates(frame.matrix(), *m)?
        }
    };
    let coorbit_len = group.order() * templates.len();
    let reduction = match &cfg.reduction {
        ReductionSpec::Identity => Reduction::identity(coorbit_len)?,
        ReductionSpec::Dense { rows } => Reduction::dense(matrix_from_rows(rows, "reduction.rows")?)?,
        ReductionSpec::SelectEntries { indices } => Reduction::select_entries(indices, coorbit_len)?,
        ReductionSpec::DiagForm { b } => {
            Reduction::diag_form(&matrix_from_rows(b, "reduction.b")?, group.order())?
        }
    };
    Ok(EmbeddingPipeline::new(group, templates, reduction)?)
}
