//! Feed-forward ReLU evaluation and the two-layer network that is injective
//! on the line but has no lower Lipschitz bound against the sign action:
//! antipodal points keep output distance 2 while their input distance grows
//! without bound.

use nalgebra::{DMatrix, DVector, Vector2};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReluError {
    #[error("layer shapes do not chain: {0}")]
    ShapeChain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("net file parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Weights and biases of a feed-forward ReLU network. Activation applies to
/// every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNet {
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

impl ReluNet {
    pub fn new(
        weights: Vec<DMatrix<f64>>,
        biases: Vec<DVector<f64>>,
    ) -> Result<Self, ReluError> {
        if weights.is_empty() {
            return Err(ReluError::ShapeChain("a net needs at least one layer".into()));
        }
        if weights.len() != biases.len() {
            return Err(ReluError::ShapeChain(format!(
                "{} weight matrices but {} biases",
                weights.len(),
                biases.len()
            )));
        }
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.nrows() != b.len() {
                return Err(ReluError::ShapeChain(format!(
                    "layer {k}: weight has {} rows but bias has {} entries",
                    w.nrows(),
                    b.len()
                )));
            }
            if k > 0 && w.ncols() != weights[k - 1].nrows() {
                return Err(ReluError::ShapeChain(format!(
                    "layer {k}: expects {} inputs but layer {} outputs {}",
                    w.ncols(),
                    k - 1,
                    weights[k - 1].nrows()
                )));
            }
        }
        Ok(ReluNet { weights, biases })
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].nrows()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut out = vec![self.input_dim()];
        out.extend(self.weights.iter().map(|w| w.nrows()));
        out
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }
}

/// Evaluates the network: affine layers with component-wise `max(., 0)`
/// between them and no activation after the final layer.
pub fn relu_forward(net: &ReluNet, x: &DVector<f64>) -> Result<DVector<f64>, ReluError> {
    if x.len() != net.input_dim() {
        return Err(ReluError::DimensionMismatch {
            expected: net.input_dim(),
            got: x.len(),
        });
    }
    let last = net.depth() - 1;
    let mut state = x.clone();
    for (k, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
        state = w * state + b;
        if k < last {
            state.apply(|v| *v = v.max(0.0));
        }
    }
    Ok(state)
}

/// The depth-2 width-(1,3,2) network realizing [`f_piecewise`].
pub fn counterexample_net() -> ReluNet {
    let w1 = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, -1.0]);
    let b1 = DVector::from_column_slice(&[1.0, -1.0, -1.0]);
    let w2 = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, 1.0]);
    let b2 = DVector::from_column_slice(&[-1.0, 0.0]);
    ReluNet::new(vec![w1, w2], vec![b1, b2]).expect("fixed shapes chain")
}

/// The injective map the counterexample network computes: clamps onto the
/// segment from (-1,0) to (1,0) and unfolds the overshoot into the second
/// coordinate.
pub fn f_piecewise(x: f64) -> Vector2<f64> {
    if x < -1.0 {
        Vector2::new(-1.0, -(x + 1.0))
    } else if x <= 1.0 {
        Vector2::new(x, 0.0)
    } else {
        Vector2::new(1.0, x - 1.0)
    }
}

/// Extension to d inputs: [`f_piecewise`] on the first coordinate, the rest
/// passed through.
pub fn extend_fd(x: &DVector<f64>) -> Result<DVector<f64>, ReluError> {
    if x.is_empty() {
        return Err(ReluError::DimensionMismatch { expected: 1, got: 0 });
    }
    let head = f_piecewise(x[0]);
    let mut out = DVector::zeros(x.len() + 1);
    out[0] = head[0];
    out[1] = head[1];
    for i in 1..x.len() {
        out[i + 1] = x[i];
    }
    Ok(out)
}

/// Reads a net file: depth L, widths l_0..l_L, then the weight matrices
/// row-major, then the biases; `#` starts a comment.
pub fn read_net_file(path: impl AsRef<Path>) -> Result<ReluNet, ReluError> {
    parse_net(&std::fs::read_to_string(path)?)
}

pub fn parse_net(text: &str) -> Result<ReluNet, ReluError> {
    let mut tokens = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    let mut cursor = tokens.iter();
    let mut next = |what: &str| -> Result<&str, ReluError> {
        cursor
            .next()
            .map(String::as_str)
            .ok_or_else(|| ReluError::Parse(format!("missing {what}")))
    };
    let parse_usize = |token: &str, what: &str| -> Result<usize, ReluError> {
        token
            .parse()
            .map_err(|_| ReluError::Parse(format!("{what} must be a count, got '{token}'")))
    };
    let parse_f64 = |token: &str, what: &str| -> Result<f64, ReluError> {
        token
            .parse()
            .map_err(|_| ReluError::Parse(format!("bad entry '{token}' in {what}")))
    };
    let depth = parse_usize(next("depth")?, "depth")?;
    if depth == 0 {
        return Err(ReluError::Parse("depth must be at least 1".into()));
    }
    let mut widths = Vec::with_capacity(depth + 1);
    for k in 0..=depth {
        let width = parse_usize(next("width")?, &format!("width {k}"))?;
        if width == 0 {
            return Err(ReluError::Parse(format!("width {k} must be positive")));
        }
        widths.push(width);
    }
    let mut weights = Vec::with_capacity(depth);
    for k in 0..depth {
        let (rows, cols) = (widths[k + 1], widths[k]);
        let mut entries = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let what = format!("weight matrix {k}");
            entries.push(parse_f64(next(&what)?, &what)?);
        }
        weights.push(DMatrix::from_row_slice(rows, cols, &entries));
    }
    let mut biases = Vec::with_capacity(depth);
    for k in 0..depth {
        let mut entries = Vec::with_capacity(widths[k + 1]);
        for _ in 0..widths[k + 1] {
            let what = format!("bias vector {k}");
            entries.push(parse_f64(next(&what)?, &what)?);
        }
        biases.push(DVector::from_column_slice(&entries));
    }
    if cursor.next().is_some() {
        return Err(ReluError::Parse("trailing data after the last bias".into()));
    }
    ReluNet::new(weights, biases)
}

pub fn write_net(mut sink: impl Write, net: &ReluNet) -> Result<(), ReluError> {
    writeln!(sink, "{}", net.depth())?;
    let widths = net
        .widths()
        .iter()
        .map(|w| w.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    writeln!(sink, "{widths}")?;
    for w in net.weights() {
        for r in 0..w.nrows() {
            let row = (0..w.ncols())
                .map(|c| w[(r, c)].to_string())
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(sink, "{row}")?;
        }
    }
    for b in net.biases() {
        let line = b
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(sink, "{line}")?;
    }
    Ok(())
}
