//! Two-layer truncated-ReLU network: parameters, initializers, forward
//! passes, and exact batch gradients of the regularized hinge objective.
//!
//! The batch objective is
//!   L = mean_n weight(y_n)·max(0, 1 − y_n·g(x_n)) + λ_a Σ a_i² + λ_w Σ ‖w_i‖²
//! with g(x) = Σ_i a_i·act(⟨w_i,x⟩ + b_i) and `act` the smoothed truncated
//! ReLU. Biases are not regularized. At the hinge kink the subgradient
//! includes the active branch (margin exactly 1 counts as active).

use crate::activation::{trunc_relu, SmoothingConfig};
use crate::numeric::{chunk_ranges, tree_combine};
use crate::rng::{Stream, StreamSeeds};
use crate::synthdata::DataSpec;
use crate::{FeatError, FeatResult};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Weights, biases, and output coefficients; row i is one neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    /// rows × d first-layer weights.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub a: Array1<f64>,
}

/// Serialized checkpoint layout.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    m: usize,
    d: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    a: Vec<f64>,
}

impl NetworkParams {
    pub fn neurons(&self) -> usize {
        self.w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    /// m for a mirrored 2m-row network.
    pub fn half_width(&self) -> FeatResult<usize> {
        if self.neurons() % 2 != 0 {
            return Err(FeatError::Param(format!(
                "network has {} neurons; mirror structure needs an even count",
                self.neurons()
            )));
        }
        Ok(self.neurons() / 2)
    }

    pub fn validate(&self) -> FeatResult<()> {
        if self.b.len() != self.neurons() || self.a.len() != self.neurons() {
            return Err(FeatError::Dimension(format!(
                "inconsistent parameter shapes: w {}x{}, b {}, a {}",
                self.neurons(),
                self.dim(),
                self.b.len(),
                self.a.len()
            )));
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> FeatResult<()> {
        let ck = Checkpoint {
            m: self.neurons(),
            d: self.dim(),
            w: self.w.iter().copied().collect(),
            b: self.b.to_vec(),
            a: self.a.to_vec(),
        };
        let f = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(f), &ck)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> FeatResult<Self> {
        let f = std::fs::File::open(path)?;
        let ck: Checkpoint = serde_json::from_reader(std::io::BufReader::new(f))?;
        if ck.w.len() != ck.m * ck.d || ck.b.len() != ck.m || ck.a.len() != ck.m {
            return Err(FeatError::Dimension(format!(
                "checkpoint claims m={} d={} but carries {} weights, {} biases, {} coefficients",
                ck.m,
                ck.d,
                ck.w.len(),
                ck.b.len(),
                ck.a.len()
            )));
        }
        let w = Array2::from_shape_vec((ck.m, ck.d), ck.w)
            .map_err(|e| FeatError::Dimension(e.to_string()))?;
        Ok(Self { w, b: Array1::from_vec(ck.b), a: Array1::from_vec(ck.a) })
    }
}

/// Mirrored init: rows 0..m drawn with w ~ N(0, (1/k)²·I), b ~ N(0, (1/k²)²),
/// a ~ N(0, σ_a²) where σ_a = σ_x²/(p·k²); rows m..2m copy w and b and negate
/// a, so the initial function is identically zero.
///
/// Draws come from the init stream in row order (d weights, then the bias,
/// then the coefficient, per base row).
pub fn init_unbiased(m: usize, spec: &DataSpec, seeds: &StreamSeeds) -> FeatResult<NetworkParams> {
    if m == 0 {
        return Err(FeatError::Param("m must be positive".into()));
    }
    let d = spec.dim();
    let k = spec.rule.k() as f64;
    if spec.p <= 0.0 || spec.sigma_x <= 0.0 {
        return Err(FeatError::DegenerateSpec(format!(
            "init needs p > 0 and sigma_x > 0, got p={} sigma_x={}",
            spec.p, spec.sigma_x
        )));
    }
    let std_w = 1.0 / k;
    let std_b = 1.0 / (k * k);
    let sigma_a = spec.sigma_x * spec.sigma_x / (spec.p * k * k);

    let mut rng = seeds.stream_rng(Stream::Init);
    let mut w = Array2::zeros((2 * m, d));
    let mut b = Array1::zeros(2 * m);
    let mut a = Array1::zeros(2 * m);
    for i in 0..m {
        for v in w.row_mut(i).iter_mut() {
            *v = std_w * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        b[i] = std_b * rng.sample::<f64, _>(rand_distr::StandardNormal);
        a[i] = sigma_a * rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    for i in 0..m {
        let base = w.row(i).to_owned();
        w.row_mut(m + i).assign(&base);
        b[m + i] = b[i];
        a[m + i] = -a[i];
    }
    Ok(NetworkParams { w, b, a })
}

/// All parameters i.i.d. N(0, scale²); `rows` independent neurons, no mirror.
pub fn init_gaussian(
    rows: usize,
    d: usize,
    scale: f64,
    seeds: &StreamSeeds,
) -> FeatResult<NetworkParams> {
    if rows == 0 || d == 0 {
        return Err(FeatError::Param("rows and d must be positive".into()));
    }
    if scale <= 0.0 {
        return Err(FeatError::Param(format!("scale must be > 0, got {scale}")));
    }
    let mut rng = seeds.stream_rng(Stream::Init);
    let mut w = Array2::zeros((rows, d));
    for v in w.iter_mut() {
        *v = scale * rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    let mut b = Array1::zeros(rows);
    for v in b.iter_mut() {
        *v = scale * rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    let mut a = Array1::zeros(rows);
    for v in a.iter_mut() {
        *v = scale * rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    Ok(NetworkParams { w, b, a })
}

/// g(x) with the hard truncated ReLU.
pub fn forward(params: &NetworkParams, x: ArrayView1<f64>) -> f64 {
    let pre = params.w.dot(&x) + &params.b;
    pre.iter().zip(params.a.iter()).map(|(&z, &a)| a * trunc_relu(z)).sum()
}

/// g(x) with the smoothed activation.
pub fn forward_smoothed(
    params: &NetworkParams,
    x: ArrayView1<f64>,
    smoothing: &SmoothingConfig,
) -> f64 {
    let pre = params.w.dot(&x) + &params.b;
    pre.iter().zip(params.a.iter()).map(|(&z, &a)| a * smoothing.eval(z)).sum()
}

/// Per-class hinge weights w_v = 1/(2·Pr[y = v]).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w_plus: f64,
    pub w_minus: f64,
}

impl ClassWeights {
    /// Both weights 1 (the unweighted objective).
    pub fn balanced() -> Self {
        Self { w_plus: 1.0, w_minus: 1.0 }
    }

    /// From the positive-class probability.
    pub fn from_balance(p_plus: f64) -> FeatResult<Self> {
        if !(p_plus > 0.0 && p_plus < 1.0) {
            return Err(FeatError::Param(format!(
                "class balance must be in (0,1), got {p_plus}"
            )));
        }
        Ok(Self { w_plus: 1.0 / (2.0 * p_plus), w_minus: 1.0 / (2.0 * (1.0 - p_plus)) })
    }

    pub fn weight(&self, y: f64) -> f64 {
        if y > 0.0 {
            self.w_plus
        } else {
            self.w_minus
        }
    }
}

/// Regularization strengths. Biases are never regularized.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegParams {
    pub lambda_a: f64,
    pub lambda_w: f64,
}

impl RegParams {
    pub fn none() -> Self {
        Self { lambda_a: 0.0, lambda_w: 0.0 }
    }
}

/// Exact batch gradients.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
    pub da: Array1<f64>,
}

/// Batch means collected alongside a gradient or loss pass. Accuracy and the
/// hinge here use the same smoothed forward the objective uses.
#[derive(Debug, Clone, Copy)]
pub struct BatchStats {
    /// mean weight(y)·max(0, 1 − y·g).
    pub weighted_hinge: f64,
    /// mean max(0, 1 − y·g), unweighted.
    pub hinge: f64,
    pub accuracy: f64,
}

struct GradAccum {
    pd_w: Array2<f64>,
    pd_b: Array1<f64>,
    pd_a: Array1<f64>,
    weighted_hinge: f64,
    hinge: f64,
    correct: usize,
}

impl GradAccum {
    fn merge(mut self, o: Self) -> Self {
        self.pd_w += &o.pd_w;
        self.pd_b += &o.pd_b;
        self.pd_a += &o.pd_a;
        self.weighted_hinge += o.weighted_hinge;
        self.hinge += o.hinge;
        self.correct += o.correct;
        self
    }
}

fn check_batch(
    params: &NetworkParams,
    inputs: &ArrayView2<f64>,
    labels: &ArrayView1<f64>,
) -> FeatResult<()> {
    params.validate()?;
    if inputs.nrows() == 0 {
        return Err(FeatError::Empty);
    }
    if inputs.nrows() != labels.len() {
        return Err(FeatError::Dimension(format!(
            "{} inputs vs {} labels",
            inputs.nrows(),
            labels.len()
        )));
    }
    if inputs.ncols() != params.dim() {
        return Err(FeatError::Dimension(format!(
            "input dim {} vs network dim {}",
            inputs.ncols(),
            params.dim()
        )));
    }
    Ok(())
}

/// Gradients of the regularized weighted hinge objective over a batch, plus
/// the batch stats from the same pass.
///
/// Work is chunked over samples; chunk partials combine in a fixed tree
/// order, so results are identical for any thread count.
pub fn batch_gradients(
    params: &NetworkParams,
    inputs: ArrayView2<f64>,
    labels: ArrayView1<f64>,
    weights: &ClassWeights,
    smoothing: &SmoothingConfig,
    reg: &RegParams,
) -> FeatResult<(Gradients, BatchStats)> {
    check_batch(params, &inputs, &labels)?;
    smoothing.validate()?;
    let n = inputs.nrows();
    let rows = params.neurons();
    let d = params.dim();

    let parts: Vec<GradAccum> = chunk_ranges(n)
        .into_par_iter()
        .map(|(start, end)| {
            let xc = inputs.slice(ndarray::s![start..end, ..]);
            let yc = labels.slice(ndarray::s![start..end]);
            let mut pre = xc.dot(&params.w.t());
            pre += &params.b;
            let act = pre.mapv(|z| smoothing.eval(z));
            let der = pre.mapv(|z| smoothing.deriv(z));
            let g = act.dot(&params.a);

            let mut acc = GradAccum {
                pd_w: Array2::zeros((rows, d)),
                pd_b: Array1::zeros(rows),
                pd_a: Array1::zeros(rows),
                weighted_hinge: 0.0,
                hinge: 0.0,
                correct: 0,
            };
            // c_n = weight(y)·y·1[y·g ≤ 1]; margin exactly 1 is active
            let mut c = Array1::zeros(g.len());
            for (i, (&gi, &yi)) in g.iter().zip(yc.iter()).enumerate() {
                let margin = yi * gi;
                let h = (1.0 - margin).max(0.0);
                acc.hinge += h;
                acc.weighted_hinge += weights.weight(yi) * h;
                let pred = if gi >= 0.0 { 1.0 } else { -1.0 };
                if pred == yi {
                    acc.correct += 1;
                }
                if margin <= 1.0 {
                    c[i] = weights.weight(yi) * yi;
                }
            }
            let cd = &der * &c.view().insert_axis(Axis(1));
            acc.pd_w = cd.t().dot(&xc);
            acc.pd_b = cd.sum_axis(Axis(0));
            acc.pd_a = act.t().dot(&c);
            acc
        })
        .collect();
    let acc = tree_combine(parts, GradAccum::merge).expect("nonempty batch");

    let nf = n as f64;
    let mut dw = Array2::zeros((rows, d));
    for i in 0..rows {
        let scale = -params.a[i] / nf;
        let mut row = dw.row_mut(i);
        row.assign(&acc.pd_w.row(i));
        row *= scale;
        if reg.lambda_w != 0.0 {
            row.scaled_add(2.0 * reg.lambda_w, &params.w.row(i));
        }
    }
    let db = acc.pd_b.iter().zip(params.a.iter()).map(|(&p, &a)| -a * p / nf).collect();
    let mut da = acc.pd_a.mapv(|p| -p / nf);
    if reg.lambda_a != 0.0 {
        da.scaled_add(2.0 * reg.lambda_a, &params.a);
    }

    let stats = BatchStats {
        weighted_hinge: acc.weighted_hinge / nf,
        hinge: acc.hinge / nf,
        accuracy: acc.correct as f64 / nf,
    };
    Ok((Gradients { dw, db, da: da.to_owned() }, stats))
}

/// Full objective value: mean weighted hinge plus both penalty terms.
pub fn batch_loss(
    params: &NetworkParams,
    inputs: ArrayView2<f64>,
    labels: ArrayView1<f64>,
    weights: &ClassWeights,
    smoothing: &SmoothingConfig,
    reg: &RegParams,
) -> FeatResult<f64> {
    let stats = batch_stats(params, inputs, labels, weights, smoothing)?;
    let reg_a = reg.lambda_a * params.a.iter().map(|v| v * v).sum::<f64>();
    let reg_w = reg.lambda_w * params.w.iter().map(|v| v * v).sum::<f64>();
    Ok(stats.weighted_hinge + reg_a + reg_w)
}

/// Batch means of the smoothed forward: weighted and unweighted hinge,
/// and sign accuracy.
pub fn batch_stats(
    params: &NetworkParams,
    inputs: ArrayView2<f64>,
    labels: ArrayView1<f64>,
    weights: &ClassWeights,
    smoothing: &SmoothingConfig,
) -> FeatResult<BatchStats> {
    check_batch(params, &inputs, &labels)?;
    smoothing.validate()?;
    let n = inputs.nrows();
    let parts: Vec<(f64, f64, usize)> = chunk_ranges(n)
        .into_par_iter()
        .map(|(start, end)| {
            let xc = inputs.slice(ndarray::s![start..end, ..]);
            let yc = labels.slice(ndarray::s![start..end]);
            let mut pre = xc.dot(&params.w.t());
            pre += &params.b;
            let g = pre.mapv(|z| smoothing.eval(z)).dot(&params.a);
            let mut wh = 0.0;
            let mut h = 0.0;
            let mut correct = 0usize;
            for (&gi, &yi) in g.iter().zip(yc.iter()) {
                let hi = (1.0 - yi * gi).max(0.0);
                h += hi;
                wh += weights.weight(yi) * hi;
                let pred = if gi >= 0.0 { 1.0 } else { -1.0 };
                if pred == yi {
                    correct += 1;
                }
            }
            (wh, h, correct)
        })
        .collect();
    let (wh, h, correct) =
        tree_combine(parts, |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2)).expect("nonempty batch");
    let nf = n as f64;
    Ok(BatchStats { weighted_hinge: wh / nf, hinge: h / nf, accuracy: correct as f64 / nf })
}

/// Hard-activation evaluation: (accuracy, mean unweighted hinge).
pub fn batch_eval(
    params: &NetworkParams,
    inputs: ArrayView2<f64>,
    labels: ArrayView1<f64>,
) -> FeatResult<(f64, f64)> {
    let stats = batch_stats(
        params,
        inputs,
        labels,
        &ClassWeights::balanced(),
        &SmoothingConfig::closed_form(0.0),
    )?;
    Ok((stats.accuracy, stats.hinge))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeeds;
    use crate::synthdata::{
        fit_normalization, make_orthonormal_dictionary, DataSpecDraft, HiddenDistribution,
        LabelRule,
    };
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn parity_spec() -> Arc<DataSpec> {
        let dict = make_orthonormal_dictionary(40, 20, 12).unwrap();
        let support: Vec<usize> = (0..5).collect();
        let draft = DataSpecDraft {
            dictionary: dict,
            hidden: HiddenDistribution::ParityMixture { p0: 0.5, support: support.clone() },
            rule: LabelRule::parity(support).unwrap(),
            sigma_zeta: 0.0,
            p_override: None,
        };
        Arc::new(fit_normalization(&draft, 20_000, &StreamSeeds::new(101)).unwrap())
    }

    fn random_params(rows: usize, d: usize, seed: u64) -> NetworkParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Array2::zeros((rows, d));
        for v in w.iter_mut() {
            *v = rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.8;
        }
        let b = Array1::from_iter(
            (0..rows).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.3),
        );
        let a = Array1::from_iter(
            (0..rows).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)),
        );
        NetworkParams { w, b, a }
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
    fn init_unbiased_mirror_structure() {
        let spec = parity_spec();
        let seeds = StreamSeeds::new(7);
        let m = 50;
        let params = init_unbiased(m, &spec, &seeds).unwrap();
        assert_eq!(params.neurons(), 2 * m);
        assert_eq!(params.half_width().unwrap(), m);
        for i in 0..m {
            assert_eq!(params.w.row(i), params.w.row(m + i));
            assert_eq!(params.b[i], params.b[m + i]);
            assert_eq!(params.a[i].to_bits(), (-params.a[m + i]).to_bits());
        }
    }

    #[test]
    fn init_unbiased_function_is_zero() {
        let spec = parity_spec();
        let params = init_unbiased(300, &spec, &StreamSeeds::new(8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = Array1::from_iter(
                (0..spec.dim()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)),
            );
            assert!(forward(&params, x.view()).abs() < 1e-9);
        }
    }

    #[test]
    fn init_unbiased_scales() {
        let spec = parity_spec();
        let m = 400;
        let params = init_unbiased(m, &spec, &StreamSeeds::new(9)).unwrap();
        let k = spec.rule.k() as f64;
        let w_std = (params
            .w
            .slice(ndarray::s![..m, ..])
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            / (m * spec.dim()) as f64)
            .sqrt();
        assert!((w_std - 1.0 / k).abs() < 0.01, "w std {w_std}");
        let sigma_a = spec.sigma_x * spec.sigma_x / (spec.p * k * k);
        let a_std = (params.a.slice(ndarray::s![..m]).iter().map(|v| v * v).sum::<f64>()
            / m as f64)
            .sqrt();
        assert!((a_std - sigma_a).abs() < 0.2 * sigma_a, "a std {a_std} vs {sigma_a}");
    }

    #[test]
    fn init_gaussian_has_no_mirror() {
        let params = init_gaussian(10, 6, 0.5, &StreamSeeds::new(4)).unwrap();
        assert_eq!(params.neurons(), 10);
        assert_ne!(params.w.row(0), params.w.row(5));
    }

    #[test]
    fn forward_manual_case() {
        let params = NetworkParams {
            w: array![[1.0, 0.0], [0.0, 2.0]],
            b: array![0.25, -0.2],
            a: array![3.0, -1.0],
        };
        let x = array![0.25, 0.35];
        // pre = [0.5, 0.5], act = [0.5, 0.5]
        let got = forward(&params, x.view());
        assert!((got - (3.0 * 0.5 - 1.0 * 0.5)).abs() < 1e-15);
        // saturation and cutoff
        let x2 = array![5.0, -5.0];
        assert!((forward(&params, x2.view()) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn smoothed_forward_matches_hard_at_zero_noise() {
        let params = random_params(9, 5, 21);
        let cfg = SmoothingConfig::closed_form(0.0);
        let (x, _) = random_batch(40, 5, 22);
        for row in x.outer_iter() {
            let hard = forward(&params, row);
            let smooth = forward_smoothed(&params, row, &cfg);
            assert_eq!(hard.to_bits(), smooth.to_bits());
        }
    }

    #[test]
    fn class_weights() {
        let cw = ClassWeights::balanced();
        assert_eq!(cw.weight(1.0), 1.0);
        assert_eq!(cw.weight(-1.0), 1.0);
        let cw = ClassWeights::from_balance(0.1).unwrap();
        assert!((cw.weight(1.0) - 5.0).abs() < 1e-12);
        assert!((cw.weight(-1.0) - 1.0 / 1.8).abs() < 1e-12);
        assert!(ClassWeights::from_balance(0.0).is_err());
        assert!(ClassWeights::from_balance(1.0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (x, y) = random_batch(20, 7, 31);
        let weights = ClassWeights::from_balance(0.35).unwrap();
        let reg = RegParams { lambda_a: 0.3, lambda_w: 0.2 };
        for sigma in [0.1, 0.3] {
            let params = random_params(5, 7, 33);
            let cfg = SmoothingConfig::closed_form(sigma);
            let (grads, _) =
                batch_gradients(&params, x.view(), y.view(), &weights, &cfg, &reg).unwrap();
            let eps = 1e-6;
            let loss_at = |p: &NetworkParams| {
                batch_loss(p, x.view(), y.view(), &weights, &cfg, &reg).unwrap()
            };
            let check = |analytic: f64, plus: f64, minus: f64, what: &str| {
                let fd = (plus - minus) / (2.0 * eps);
                let denom = analytic.abs().max(fd.abs()).max(1e-8);
                assert!(
                    (analytic - fd).abs() / denom < 1e-5,
                    "{what}: analytic {analytic} vs fd {fd} (sigma {sigma})"
                );
            };
            for i in 0..params.neurons() {
                for j in 0..params.dim() {
                    let mut p = params.clone();
                    p.w[(i, j)] += eps;
                    let plus = loss_at(&p);
                    p.w[(i, j)] -= 2.0 * eps;
                    let minus = loss_at(&p);
                    check(grads.dw[(i, j)], plus, minus, &format!("dw[{i},{j}]"));
                }
                let mut p = params.clone();
                p.b[i] += eps;
                let plus = loss_at(&p);
                p.b[i] -= 2.0 * eps;
                let minus = loss_at(&p);
                check(grads.db[i], plus, minus, &format!("db[{i}]"));

                let mut p = params.clone();
                p.a[i] += eps;
                let plus = loss_at(&p);
                p.a[i] -= 2.0 * eps;
                let minus = loss_at(&p);
                check(grads.da[i], plus, minus, &format!("da[{i}]"));
            }
        }
    }

    #[test]
    fn mirror_gradients_are_exactly_antisymmetric() {
        let spec = parity_spec();
        let m = 4;
        let params = init_unbiased(m, &spec, &StreamSeeds::new(19)).unwrap();
        let (x, y) = random_batch(16, spec.dim(), 44);
        let cfg = SmoothingConfig::closed_form(0.2);
        let (grads, _) = batch_gradients(
            &params,
            x.view(),
            y.view(),
            &ClassWeights::balanced(),
            &cfg,
            &RegParams::none(),
        )
        .unwrap();
        for i in 0..m {
            for j in 0..spec.dim() {
                assert_eq!(
                    grads.dw[(i, j)].to_bits(),
                    (-grads.dw[(m + i, j)]).to_bits(),
                    "dw mirror at ({i},{j})"
                );
            }
            assert_eq!(grads.db[i].to_bits(), (-grads.db[m + i]).to_bits());
            assert_eq!(grads.da[i].to_bits(), grads.da[m + i].to_bits());
        }
    }

    #[test]
    fn regularizer_contributes_exactly_linear_shift() {
        let params = random_params(6, 4, 55);
        let (x, y) = random_batch(12, 4, 56);
        let cfg = SmoothingConfig::closed_form(0.15);
        let cw = ClassWeights::balanced();
        let (g0, _) =
            batch_gradients(&params, x.view(), y.view(), &cw, &cfg, &RegParams::none()).unwrap();
        let reg = RegParams { lambda_a: 0.7, lambda_w: 1.3 };
        let (g1, _) = batch_gradients(&params, x.view(), y.view(), &cw, &cfg, &reg).unwrap();
        for i in 0..6 {
            for j in 0..4 {
                let want = g0.dw[(i, j)] + 2.0 * reg.lambda_w * params.w[(i, j)];
                assert!((g1.dw[(i, j)] - want).abs() < 1e-14);
            }
            assert_eq!(g1.db[i], g0.db[i], "bias is never regularized");
            let want = g0.da[i] + 2.0 * reg.lambda_a * params.a[i];
            assert!((g1.da[i] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn accuracy_hinge_invariant() {
        let params = random_params(8, 6, 77);
        let (x, y) = random_batch(300, 6, 78);
        let (acc, hinge) = batch_eval(&params, x.view(), y.view()).unwrap();
        assert!(1.0 - acc <= hinge + 1e-12, "acc {acc} hinge {hinge}");
    }

    #[test]
    fn batch_errors() {
        let params = random_params(4, 3, 1);
        let x = Array2::zeros((0, 3));
        let y = Array1::zeros(0);
        assert!(matches!(
            batch_eval(&params, x.view(), y.view()),
            Err(FeatError::Empty)
        ));
        let x = Array2::zeros((5, 2));
        let y = Array1::zeros(5);
        assert!(matches!(
            batch_eval(&params, x.view(), y.view()),
            Err(FeatError::Dimension(_))
        ));
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let params = random_params(7, 5, 91);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        params.save_json(&path).unwrap();
        let back = NetworkParams::load_json(&path).unwrap();
        assert_eq!(back, params);
    }

    #[test]
    fn gradients_deterministic_across_thread_counts() {
        let params = random_params(12, 9, 13);
        let (x, y) = random_batch(6000, 9, 14);
        let cfg = SmoothingConfig::closed_form(0.25);
        let cw = ClassWeights::balanced();
        let reg = RegParams { lambda_a: 0.1, lambda_w: 0.2 };
        let (base, _) =
            batch_gradients(&params, x.view(), y.view(), &cw, &cfg, &reg).unwrap();
        for threads in [1usize, 3] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let (got, _) = pool
                .install(|| batch_gradients(&params, x.view(), y.view(), &cw, &cfg, &reg))
                .unwrap();
            assert_eq!(got.dw, base.dw);
            assert_eq!(got.db, base.db);
            assert_eq!(got.da, base.da);
        }
    }
}
