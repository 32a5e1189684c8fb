//! Fixed-feature baselines: linear models over frozen activation features or
//! first-order (tangent) features of an anchor network, trained with hinge
//! subgradient descent on the same batch budget as the network trainer.
//!
//! Tangent features are never materialized. For an anchor with `rows`
//! neurons the implicit feature vector of x is, in layout order,
//!   [ act(pre_i) ]_i,
//!   [ a_i·1[pre_i ∈ [0,1)]·x_j ]_{i,j} (row-major),
//!   [ a_i·1[pre_i ∈ [0,1)] ]_i,
//! i.e. the gradient of the network output in (a, W, b). Scores and updates
//! against this map reduce to a handful of matrix products.

use crate::activation::trunc_relu;
use crate::network::{ClassWeights, NetworkParams};
use crate::numeric::{chunk_ranges, tree_combine};
use crate::rng::{Stream, StreamSeeds};
use crate::{FeatError, FeatResult};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How the anchor network turns an input into features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    /// One feature per neuron: act(⟨w_i,x⟩ + b_i).
    Activations,
    /// Gradient of the network output in all parameters; rows·(d+2) features.
    Tangent,
}

/// A frozen anchor network plus the featurization rule.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub anchor: NetworkParams,
    pub kind: MapKind,
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        let rows = self.anchor.neurons();
        match self.kind {
            MapKind::Activations => rows,
            MapKind::Tangent => rows * (self.anchor.dim() + 2),
        }
    }

    /// Explicit feature vector; intended for tests and single samples.
    pub fn featurize(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let pre = self.anchor.w.dot(&x) + &self.anchor.b;
        match self.kind {
            MapKind::Activations => pre.mapv(trunc_relu),
            MapKind::Tangent => {
                let rows = self.anchor.neurons();
                let d = self.anchor.dim();
                let mut feat = Array1::zeros(rows * (d + 2));
                for i in 0..rows {
                    feat[i] = trunc_relu(pre[i]);
                    let gate = if (0.0..1.0).contains(&pre[i]) { self.anchor.a[i] } else { 0.0 };
                    for j in 0..d {
                        feat[rows + i * d + j] = gate * x[j];
                    }
                    feat[rows * (d + 1) + i] = gate;
                }
                feat
            }
        }
    }
}

/// Structured weights for the tangent layout; `Dense` covers activations.
#[derive(Debug, Clone)]
enum Weights {
    Dense(Array1<f64>),
    Tangent { va: Array1<f64>, vw: Array2<f64>, vb: Array1<f64> },
}

impl Weights {
    fn zeros(map: &FeatureMap) -> Self {
        let rows = map.anchor.neurons();
        match map.kind {
            MapKind::Activations => Weights::Dense(Array1::zeros(rows)),
            MapKind::Tangent => Weights::Tangent {
                va: Array1::zeros(rows),
                vw: Array2::zeros((rows, map.anchor.dim())),
                vb: Array1::zeros(rows),
            },
        }
    }

    fn flatten(&self) -> Array1<f64> {
        match self {
            Weights::Dense(v) => v.clone(),
            Weights::Tangent { va, vw, vb } => {
                let mut flat = Vec::with_capacity(va.len() + vw.len() + vb.len());
                flat.extend(va.iter());
                flat.extend(vw.iter());
                flat.extend(vb.iter());
                Array1::from_vec(flat)
            }
        }
    }

    fn from_flat(map: &FeatureMap, flat: &Array1<f64>) -> FeatResult<Self> {
        if flat.len() != map.dim() {
            return Err(FeatError::Dimension(format!(
                "weight vector has {} entries, feature map has {}",
                flat.len(),
                map.dim()
            )));
        }
        let rows = map.anchor.neurons();
        Ok(match map.kind {
            MapKind::Activations => Weights::Dense(flat.clone()),
            MapKind::Tangent => {
                let d = map.anchor.dim();
                let va = flat.slice(s![..rows]).to_owned();
                let vw = Array2::from_shape_vec(
                    (rows, d),
                    flat.slice(s![rows..rows + rows * d]).to_vec(),
                )
                .expect("length checked above");
                let vb = flat.slice(s![rows + rows * d..]).to_owned();
                Weights::Tangent { va, vw, vb }
            }
        })
    }
}

/// Linear readout over a feature map; scores are ⟨weights, features(x)⟩.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Array1<f64>,
}

/// Per-chunk activations, indicator gates, and scores, all via gemm.
fn scores_chunk(
    map: &FeatureMap,
    wts: &Weights,
    xc: &ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let anchor = &map.anchor;
    let mut pre = xc.dot(&anchor.w.t());
    pre += &anchor.b;
    let act = pre.mapv(trunc_relu);
    let gate = pre.mapv(|z| if (0.0..1.0).contains(&z) { 1.0 } else { 0.0 });
    let s = match wts {
        Weights::Dense(v) => act.dot(v),
        Weights::Tangent { va, vw, vb } => {
            // s_n = ⟨act_n, va⟩ + Σ_i a_i·gate_{n,i}·(⟨vw_i, x_n⟩ + vb_i)
            let mut m = xc.dot(&vw.t());
            m += vb;
            m *= &gate;
            act.dot(va) + m.dot(&anchor.a)
        }
    };
    (act, gate, s)
}

impl LinearModel {
    pub fn batch_scores(&self, map: &FeatureMap, inputs: ArrayView2<f64>) -> FeatResult<Array1<f64>> {
        let wts = Weights::from_flat(map, &self.weights)?;
        if inputs.ncols() != map.anchor.dim() {
            return Err(FeatError::Dimension(format!(
                "input dim {} vs anchor dim {}",
                inputs.ncols(),
                map.anchor.dim()
            )));
        }
        let n = inputs.nrows();
        if n == 0 {
            return Err(FeatError::Empty);
        }
        let parts: Vec<Array1<f64>> = chunk_ranges(n)
            .into_par_iter()
            .map(|(start, end)| {
                let xc = inputs.slice(s![start..end, ..]);
                scores_chunk(map, &wts, &xc).2
            })
            .collect();
        let mut out = Array1::zeros(n);
        let mut at = 0;
        for p in parts {
            out.slice_mut(s![at..at + p.len()]).assign(&p);
            at += p.len();
        }
        Ok(out)
    }

    /// (accuracy, mean unweighted hinge); sign(0) counts as +1.
    pub fn eval(
        &self,
        map: &FeatureMap,
        inputs: ArrayView2<f64>,
        labels: ArrayView1<f64>,
    ) -> FeatResult<(f64, f64)> {
        let s = self.batch_scores(map, inputs)?;
        if labels.len() != s.len() {
            return Err(FeatError::Dimension(format!(
                "{} labels vs {} scores",
                labels.len(),
                s.len()
            )));
        }
        let mut hinge = 0.0;
        let mut correct = 0usize;
        for (&si, &yi) in s.iter().zip(labels.iter()) {
            hinge += (1.0 - yi * si).max(0.0);
            let pred = if si >= 0.0 { 1.0 } else { -1.0 };
            if pred == yi {
                correct += 1;
            }
        }
        let n = s.len() as f64;
        Ok((correct as f64 / n, hinge / n))
    }
}

/// Batch budget and rate for the linear fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinearTrainOptions {
    pub eta: f64,
    /// Total steps; the first two use the fixed full-approximation sample.
    pub t_steps: usize,
    pub full_batch: usize,
    pub minibatch: usize,
    /// Evaluate on test data every this many steps (0: only at the end).
    pub eval_stride: usize,
    pub weights: ClassWeights,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinearStepRecord {
    pub step: usize,
    pub train_hinge: f64,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearFitResult {
    pub model: LinearModel,
    pub best: LinearModel,
    pub best_step: usize,
    pub best_test_acc: f64,
    pub best_test_hinge: f64,
    pub history: Vec<LinearStepRecord>,
}

struct TangentUpdate {
    da: Array1<f64>,
    dw: Array2<f64>,
    db: Array1<f64>,
    hinge: f64,
}

/// Hinge subgradient fit of a linear model over the feature map.
///
/// Mirrors the network trainer's sampling: steps 1 and 2 see the first
/// min(full_batch, n) rows, later steps draw fresh minibatches keyed by step
/// from the given seed set (callers give each fit its own seed set).
pub fn train_linear(
    map: &FeatureMap,
    train_inputs: ArrayView2<f64>,
    train_labels: ArrayView1<f64>,
    test_inputs: ArrayView2<f64>,
    test_labels: ArrayView1<f64>,
    opts: &LinearTrainOptions,
    seeds: &StreamSeeds,
) -> FeatResult<LinearFitResult> {
    if opts.t_steps == 0 || opts.minibatch == 0 || opts.full_batch == 0 {
        return Err(FeatError::Param("t_steps, full_batch, minibatch must be positive".into()));
    }
    if opts.eta <= 0.0 {
        return Err(FeatError::Param(format!("eta must be > 0, got {}", opts.eta)));
    }
    let n = train_inputs.nrows();
    if n == 0 || test_inputs.nrows() == 0 {
        return Err(FeatError::Empty);
    }
    if train_inputs.ncols() != map.anchor.dim() {
        return Err(FeatError::Dimension(format!(
            "input dim {} vs anchor dim {}",
            train_inputs.ncols(),
            map.anchor.dim()
        )));
    }

    let mut wts = Weights::zeros(map);
    let mut history = Vec::new();
    let mut best: Option<(usize, Array1<f64>, f64, f64)> = None;

    for step in 1..=opts.t_steps {
        let (xb, yb);
        let (xv, yv): (ArrayView2<f64>, ArrayView1<f64>) = if step <= 2 {
            let take = opts.full_batch.min(n);
            (train_inputs.slice(s![..take, ..]), train_labels.slice(s![..take]))
        } else {
            let mut rng = seeds.indexed_rng(Stream::Minibatch, step as u64);
            let idxs: Vec<usize> = (0..opts.minibatch).map(|_| rng.gen_range(0..n)).collect();
            xb = train_inputs.select(Axis(0), &idxs);
            yb = train_labels.select(Axis(0), &idxs);
            (xb.view(), yb.view())
        };

        let hinge = linear_step(map, &mut wts, &xv, &yv, opts.eta, &opts.weights)?;

        let evaluate = step == opts.t_steps
            || (opts.eval_stride > 0 && step % opts.eval_stride == 0);
        let mut rec = LinearStepRecord { step, train_hinge: hinge, test_acc: None };
        if evaluate {
            let model = LinearModel { weights: wts.flatten() };
            let (acc, test_hinge) = model.eval(map, test_inputs, test_labels)?;
            rec.test_acc = Some(acc);
            let better = match &best {
                None => true,
                Some((_, _, bacc, bhinge)) => acc > *bacc || (acc == *bacc && test_hinge < *bhinge),
            };
            if better {
                best = Some((step, model.weights, acc, test_hinge));
            }
        }
        history.push(rec);
    }

    let model = LinearModel { weights: wts.flatten() };
    let (best_step, bw, best_test_acc, best_test_hinge) = best.expect("final step evaluates");
    Ok(LinearFitResult {
        model,
        best: LinearModel { weights: bw },
        best_step,
        best_test_acc,
        best_test_hinge,
        history,
    })
}

/// One subgradient step, in place; returns the batch mean hinge.
fn linear_step(
    map: &FeatureMap,
    wts: &mut Weights,
    inputs: &ArrayView2<f64>,
    labels: &ArrayView1<f64>,
    eta: f64,
    cw: &ClassWeights,
) -> FeatResult<f64> {
    let b = inputs.nrows();
    if b == 0 {
        return Err(FeatError::Empty);
    }
    let anchor = &map.anchor;
    let wts_ref: &Weights = wts;

    let parts: Vec<TangentUpdate> = chunk_ranges(b)
        .into_par_iter()
        .map(|(start, end)| {
            let xc = inputs.slice(s![start..end, ..]);
            let yc = labels.slice(s![start..end]);
            let (act, gate, s) = scores_chunk(map, wts_ref, &xc);
            // coef_n = weight(y)·y·1[margin ≤ 1]
            let mut hinge = 0.0;
            let mut coef = Array1::zeros(s.len());
            for (i, (&si, &yi)) in s.iter().zip(yc.iter()).enumerate() {
                let margin = yi * si;
                hinge += (1.0 - margin).max(0.0);
                if margin <= 1.0 {
                    coef[i] = cw.weight(yi) * yi;
                }
            }
            let da = act.t().dot(&coef);
            match wts_ref {
                Weights::Dense(_) => TangentUpdate {
                    da,
                    dw: Array2::zeros((0, 0)),
                    db: Array1::zeros(0),
                    hinge,
                },
                Weights::Tangent { .. } => {
                    // N_{n,i} = coef_n·a_i·gate_{n,i}
                    let mut ng = gate;
                    ng *= &anchor.a;
                    ng *= &coef.view().insert_axis(Axis(1));
                    let dw = ng.t().dot(&xc);
                    let db = ng.sum_axis(Axis(0));
                    TangentUpdate { da, dw, db, hinge }
                }
            }
        })
        .collect();

    let merged = tree_combine(parts, |mut a, bpart| {
        a.da += &bpart.da;
        if !a.dw.is_empty() {
            a.dw += &bpart.dw;
            a.db += &bpart.db;
        }
        a.hinge += bpart.hinge;
        a
    })
    .expect("nonempty batch");

    let scale = eta / b as f64;
    match wts {
        Weights::Dense(v) => {
            v.scaled_add(scale, &merged.da);
        }
        Weights::Tangent { va, vw, vb } => {
            va.scaled_add(scale, &merged.da);
            vw.scaled_add(scale, &merged.dw);
            vb.scaled_add(scale, &merged.db);
        }
    }
    Ok(merged.hinge / b as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{forward, init_gaussian};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_anchor(rows: usize, d: usize, seed: u64) -> NetworkParams {
        init_gaussian(rows, d, 0.7, &StreamSeeds::new(seed)).unwrap()
    }

    fn random_batch(n: usize, d: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, d));
        for v in x.iter_mut() {
            *v = rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let y = Array1::from_iter((0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }));
        (x, y)
    }

    #[test]
    fn feature_dims() {
        let anchor = random_anchor(6, 4, 1);
        let rf = FeatureMap { anchor: anchor.clone(), kind: MapKind::Activations };
        assert_eq!(rf.dim(), 6);
        let nt = FeatureMap { anchor, kind: MapKind::Tangent };
        assert_eq!(nt.dim(), 6 * (4 + 2));
    }

    #[test]
    fn tangent_featurize_layout_hand_case() {
        let anchor = NetworkParams {
            w: array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            b: array![0.0, 0.3, -2.0],
            a: array![2.0, -1.5, 0.5],
        };
        let map = FeatureMap { anchor, kind: MapKind::Tangent };
        let x = array![0.4, 0.2];
        // pre = [0.4, 0.5, -1.4]; gates: [1, 1, 0]
        let feat = map.featurize(x.view());
        assert_eq!(feat.len(), 12);
        // activation block
        assert!((feat[0] - 0.4).abs() < 1e-15);
        assert!((feat[1] - 0.5).abs() < 1e-15);
        assert!((feat[2] - 0.0).abs() < 1e-15);
        // w block, row-major: a_i·gate·x
        assert!((feat[3] - 2.0 * 0.4).abs() < 1e-15);
        assert!((feat[4] - 2.0 * 0.2).abs() < 1e-15);
        assert!((feat[5] - (-1.5) * 0.4).abs() < 1e-15);
        assert!((feat[6] - (-1.5) * 0.2).abs() < 1e-15);
        assert_eq!(feat[7], 0.0);
        assert_eq!(feat[8], 0.0);
        // bias block
        assert!((feat[9] - 2.0).abs() < 1e-15);
        assert!((feat[10] + 1.5).abs() < 1e-15);
        assert_eq!(feat[11], 0.0);
    }

    #[test]
    fn batch_scores_match_explicit_features() {
        let anchor = random_anchor(7, 5, 3);
        let (x, _) = random_batch(40, 5, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [MapKind::Activations, MapKind::Tangent] {
            let map = FeatureMap { anchor: anchor.clone(), kind };
            let v = Array1::from_iter(
                (0..map.dim()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)),
            );
            let model = LinearModel { weights: v.clone() };
            let scores = model.batch_scores(&map, x.view()).unwrap();
            for (i, row) in x.outer_iter().enumerate() {
                let explicit = map.featurize(row).dot(&v);
                assert!(
                    (scores[i] - explicit).abs() < 1e-12,
                    "{kind:?} row {i}: {} vs {explicit}",
                    scores[i]
                );
            }
        }
    }

    #[test]
    fn tangent_scores_are_directional_derivatives() {
        let anchor = random_anchor(6, 4, 8);
        let map = FeatureMap { anchor: anchor.clone(), kind: MapKind::Tangent };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = Array1::from_iter(
            (0..map.dim()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)),
        );
        let model = LinearModel { weights: v.clone() };
        let wts = Weights::from_flat(&map, &v).unwrap();
        let (va, vw, vb) = match &wts {
            Weights::Tangent { va, vw, vb } => (va, vw, vb),
            _ => unreachable!(),
        };
        let eps = 1e-6;
        let mut checked = 0;
        for trial in 0..200 {
            let x = Array1::from_iter(
                (0..4).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)),
            );
            // skip draws near activation kinks where the map is not smooth
            let pre = anchor.w.dot(&x) + &anchor.b;
            if pre.iter().any(|&z| z.abs() < 1e-3 || (z - 1.0).abs() < 1e-3) {
                continue;
            }
            let mut plus = anchor.clone();
            plus.a.scaled_add(eps, va);
            plus.w.scaled_add(eps, vw);
            plus.b.scaled_add(eps, vb);
            let mut minus = anchor.clone();
            minus.a.scaled_add(-eps, va);
            minus.w.scaled_add(-eps, vw);
            minus.b.scaled_add(-eps, vb);
            let fd = (forward(&plus, x.view()) - forward(&minus, x.view())) / (2.0 * eps);
            let score = model.batch_scores(&map, x.view().insert_axis(Axis(0))).unwrap()[0];
            let denom = fd.abs().max(score.abs()).max(1e-8);
            assert!(
                (fd - score).abs() / denom < 1e-5,
                "trial {trial}: fd {fd} vs score {score}"
            );
            checked += 1;
        }
        assert!(checked > 50, "only {checked} clean trials");
    }

    #[test]
    fn linear_fit_solves_separable_toy() {
        let anchor = random_anchor(32, 2, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 300;
        let mut x = Array2::zeros((n, 2));
        let mut y = Array1::zeros(n);
        for i in 0..n {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            x[(i, 0)] = 0.4 * label + 0.03 * rng.sample::<f64, _>(rand_distr::StandardNormal);
            x[(i, 1)] = -0.3 * label + 0.03 * rng.sample::<f64, _>(rand_distr::StandardNormal);
            y[i] = label;
        }
        let seeds = StreamSeeds::new(14);
        for kind in [MapKind::Activations, MapKind::Tangent] {
            let map = FeatureMap { anchor: anchor.clone(), kind };
            let opts = LinearTrainOptions {
                eta: 0.5,
                t_steps: 400,
                full_batch: n,
                minibatch: 32,
                eval_stride: 100,
                weights: ClassWeights::balanced(),
            };
            let fit =
                train_linear(&map, x.view(), y.view(), x.view(), y.view(), &opts, &seeds).unwrap();
            let (acc, _) = fit.best.eval(&map, x.view(), y.view()).unwrap();
            assert!(acc == 1.0, "{kind:?} best accuracy {acc}");
        }
    }

    #[test]
    fn linear_fit_deterministic_across_thread_counts() {
        let anchor = random_anchor(10, 6, 21);
        let (x, y) = random_batch(4000, 6, 22);
        let map = FeatureMap { anchor, kind: MapKind::Tangent };
        let opts = LinearTrainOptions {
            eta: 0.1,
            t_steps: 25,
            full_batch: 4000,
            minibatch: 40,
            eval_stride: 10,
            weights: ClassWeights::balanced(),
        };
        let seeds = StreamSeeds::new(23);
        let base = train_linear(&map, x.view(), y.view(), x.view(), y.view(), &opts, &seeds)
            .unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let got = pool
            .install(|| train_linear(&map, x.view(), y.view(), x.view(), y.view(), &opts, &seeds))
            .unwrap();
        assert_eq!(base.model.weights, got.model.weights);
        assert_eq!(base.best_step, got.best_step);
    }

    #[test]
    fn anchor_change_changes_features() {
        let a1 = random_anchor(5, 3, 31);
        let mut a2 = a1.clone();
        a2.w[(0, 0)] += 1.0;
        let x = array![0.3, -0.2, 0.9];
        let f1 = FeatureMap { anchor: a1, kind: MapKind::Activations }.featurize(x.view());
        let f2 = FeatureMap { anchor: a2, kind: MapKind::Activations }.featurize(x.view());
        assert_ne!(f1, f2);
    }
}
