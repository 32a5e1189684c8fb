//! Alignment and geometry diagnostics: row cosines against a target
//! direction, a classical 2-D multidimensional-scaling embedding of the
//! first-layer rows under cosine distance, and model-agnostic evaluation.

use crate::baselines::{FeatureMap, LinearModel};
use crate::network::{batch_eval, NetworkParams};
use crate::numeric::cosine;
use crate::{FeatError, FeatResult};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Signed cosine of every first-layer row against a target direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub cosines: Vec<f64>,
    /// Largest signed cosine and the row attaining it.
    pub max_cosine: f64,
    pub best_index: usize,
    /// Largest cosine against −target and the row attaining it; mirrored
    /// networks grow both an aligned and an anti-aligned copy.
    pub max_negated: f64,
    pub negated_index: usize,
}

impl AlignmentReport {
    /// Columns: neuron,cosine.
    pub fn to_csv(&self, path: &Path) -> FeatResult<()> {
        let f = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(f);
        writeln!(out, "neuron,cosine")?;
        for (i, c) in self.cosines.iter().enumerate() {
            writeln!(out, "{i},{c}")?;
        }
        Ok(())
    }
}

/// Cosine of each row of `w` against `target`. Zero rows score 0.
pub fn alignment_to_target(
    w: &ArrayView2<f64>,
    target: &ArrayView1<f64>,
) -> FeatResult<AlignmentReport> {
    if w.ncols() != target.len() {
        return Err(FeatError::Dimension(format!(
            "rows have dim {}, target has dim {}",
            w.ncols(),
            target.len()
        )));
    }
    if w.nrows() == 0 {
        return Err(FeatError::Empty);
    }
    let tnorm = target.dot(target).sqrt();
    if tnorm <= 0.0 {
        return Err(FeatError::Param("target direction has zero norm".into()));
    }
    let ts: Vec<f64> = target.iter().copied().collect();
    let cosines: Vec<f64> = w
        .outer_iter()
        .map(|row| {
            let rs: Vec<f64> = row.iter().copied().collect();
            cosine(&rs, &ts)
        })
        .collect();
    let mut max_cosine = f64::NEG_INFINITY;
    let mut best_index = 0;
    let mut max_negated = f64::NEG_INFINITY;
    let mut negated_index = 0;
    for (i, &c) in cosines.iter().enumerate() {
        if c > max_cosine {
            max_cosine = c;
            best_index = i;
        }
        if -c > max_negated {
            max_negated = -c;
            negated_index = i;
        }
    }
    Ok(AlignmentReport { cosines, max_cosine, best_index, max_negated, negated_index })
}

/// 2-D classical MDS embedding with its normalized residual stress.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Embedding2D {
    /// n × 2 coordinates.
    pub points: Array2<f64>,
    /// sqrt(Σ (d̂_ij − D_ij)² / Σ D_ij²) over all pairs; 0 when all
    /// distances vanish.
    pub stress: f64,
}

impl Embedding2D {
    pub fn to_csv(&self, path: &Path) -> FeatResult<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["point", "x", "y"])?;
        for (i, row) in self.points.outer_iter().enumerate() {
            w.write_record([format!("{i}"), format!("{}", row[0]), format!("{}", row[1])])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Classical MDS of the rows of `w` under cosine distance 1 − cos(w_i, w_j).
///
/// Squared distances are double-centered, the top two eigenpairs of the
/// resulting Gram matrix give the coordinates (negative eigenvalues clamp to
/// zero), and each axis is flipped if its coordinate sum is negative so the
/// embedding is deterministic.
pub fn classical_mds(w: &ArrayView2<f64>) -> FeatResult<Embedding2D> {
    let n = w.nrows();
    if n < 3 {
        return Err(FeatError::Param(format!("MDS needs at least 3 rows, got {n}")));
    }
    let rows: Vec<Vec<f64>> = w.outer_iter().map(|r| r.iter().copied().collect()).collect();
    let mut dist = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = 1.0 - cosine(&rows[i], &rows[j]);
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }

    let total: f64 = dist.iter().map(|&d| d * d).sum();
    if total <= 0.0 {
        return Ok(Embedding2D { points: Array2::zeros((n, 2)), stress: 0.0 });
    }

    // B = −1/2 · J·D²·J with J = I − 11ᵀ/n
    let sq = dist.map(|d| d * d);
    let row_means = DVector::from_iterator(n, (0..n).map(|i| sq.row(i).sum() / n as f64));
    let grand = sq.sum() / (n * n) as f64;
    let mut b = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand);
        }
    }

    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| {
        eig.eigenvalues[c].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues")
    });

    let mut points = Array2::zeros((n, 2));
    for (axis, &idx) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[idx].max(0.0);
        let scale = lambda.sqrt();
        let col = eig.eigenvectors.column(idx);
        let flip = if col.sum() < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            points[(i, axis)] = flip * scale * col[i];
        }
    }

    let mut resid = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = points[(i, 0)] - points[(j, 0)];
            let dy = points[(i, 1)] - points[(j, 1)];
            let dhat = (dx * dx + dy * dy).sqrt();
            let diff = dhat - dist[(i, j)];
            resid += diff * diff;
        }
    }
    // compare over unordered pairs; total counted each pair twice
    let stress = (resid / (total / 2.0)).sqrt();
    Ok(Embedding2D { points, stress })
}

/// A scoring model: a bare network or a linear readout over features.
pub enum ModelRef<'a> {
    Network(&'a NetworkParams),
    Linear(&'a LinearModel, &'a FeatureMap),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub hinge: f64,
}

/// Accuracy (sign(0) counts as +1) and mean unweighted hinge on a dataset.
pub fn eval_metrics(
    model: &ModelRef<'_>,
    inputs: ArrayView2<f64>,
    labels: ArrayView1<f64>,
) -> FeatResult<EvalMetrics> {
    let (accuracy, hinge) = match model {
        ModelRef::Network(params) => batch_eval(params, inputs, labels)?,
        ModelRef::Linear(model, map) => model.eval(map, inputs, labels)?,
    };
    debug_assert!(
        1.0 - accuracy <= hinge + 1e-12,
        "misclassification rate {} exceeds hinge {hinge}",
        1.0 - accuracy
    );
    Ok(EvalMetrics { accuracy, hinge })
}
