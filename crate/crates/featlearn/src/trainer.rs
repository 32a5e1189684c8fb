//! Gradient-descent drivers: the staged three-phase schedule and a plain
//! SGD-with-momentum loop for practical-mode runs.
//!
//! The staged schedule encodes the regime the analysis needs: one giant
//! feature-learning step whose weight decay exactly cancels the initial
//! weights, a second unit-rate step with decay 1/2, then a long tail of
//! small noisy-free minibatch steps with constant regularization.

use crate::network::{
    batch_eval, batch_gradients, ClassWeights, Gradients, NetworkParams, RegParams,
};
use crate::activation::SmoothingConfig;
use crate::numeric::cosine;
use crate::rng::{Stream, StreamSeeds};
use crate::synthdata::{DataSpec, Dataset};
use crate::{FeatError, FeatResult};
use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Which rows a step's gradient sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchPlan {
    /// The first min(size, n) rows of the training set, fixed across steps.
    FullApprox(usize),
    /// A fresh uniform-with-replacement minibatch each step.
    Minibatch(usize),
}

/// Everything one gradient step needs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepConfig {
    pub eta: f64,
    pub reg: RegParams,
    pub sigma_xi: f64,
    pub batch: BatchPlan,
    /// Weight the hinge by inverse class frequency this step.
    pub weighted: bool,
}

/// Knobs for [`staged_schedule`]. `None` fields take the derived defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleOptions {
    /// Half-width m; the network has 2m neurons.
    pub m: usize,
    /// Total steps T, at least 3.
    pub t_steps: usize,
    /// Sample cap for the two full-approximation steps.
    pub full_batch: usize,
    /// Minibatch size for steps 3..T.
    pub minibatch: usize,
    /// Activation noise for steps 1 and 2; default k^{-3/2}.
    pub sigma_xi_first_two: Option<f64>,
    /// Default k²/(T·m^{1/3}).
    pub eta_late: Option<f64>,
    /// Default k³/(σ_x·m^{1/3}).
    pub lambda_late: Option<f64>,
    /// When set, steps 1 and 2 weight the hinge by inverse class frequency
    /// and the first-step rate becomes p²·p_min·σ_x/(k·m³), with p_min the
    /// smaller class probability.
    pub weighted_p_min: Option<f64>,
}

impl ScheduleOptions {
    pub fn new(m: usize, t_steps: usize, full_batch: usize, minibatch: usize) -> Self {
        Self {
            m,
            t_steps,
            full_batch,
            minibatch,
            sigma_xi_first_two: None,
            eta_late: None,
            lambda_late: None,
            weighted_p_min: None,
        }
    }
}

/// The three-phase step sequence.
///
/// Step 1: η⁽¹⁾ = p²σ_x²/(k·m³), λ_a = 0, λ_w = 1/(2η⁽¹⁾). The decay factor
/// 1 − 2η⁽¹⁾λ_w vanishes, so the first update overwrites the initial weights
/// with −η⁽¹⁾ times the data gradient.
/// Step 2: η = 1, λ_a = λ_w = 1/2, same smoothing and batch as step 1.
/// Steps 3..T: minibatch steps at η = k²/(T·m^{1/3}) with constant
/// regularization and no activation smoothing.
pub fn staged_schedule(spec: &DataSpec, opts: &ScheduleOptions) -> FeatResult<Vec<StepConfig>> {
    if opts.t_steps < 3 {
        return Err(FeatError::Param(format!(
            "schedule needs at least 3 steps, got {}",
            opts.t_steps
        )));
    }
    if opts.m == 0 || opts.minibatch == 0 || opts.full_batch == 0 {
        return Err(FeatError::Param("m, full_batch, and minibatch must be positive".into()));
    }
    if spec.p <= 0.0 || spec.sigma_x <= 0.0 {
        return Err(FeatError::DegenerateSpec(format!(
            "schedule needs p > 0 and sigma_x > 0, got p={} sigma_x={}",
            spec.p, spec.sigma_x
        )));
    }
    let k = spec.rule.k() as f64;
    let m = opts.m as f64;
    let t = opts.t_steps as f64;
    let p = spec.p;
    let sigma_x = spec.sigma_x;

    let sigma_first = opts.sigma_xi_first_two.unwrap_or_else(|| k.powf(-1.5));
    let eta_first = match opts.weighted_p_min {
        None => p * p * sigma_x * sigma_x / (k * m * m * m),
        Some(p_min) => {
            if !(p_min > 0.0 && p_min <= 0.5) {
                return Err(FeatError::Param(format!(
                    "p_min must be in (0, 1/2], got {p_min}"
                )));
            }
            p * p * p_min * sigma_x / (k * m * m * m)
        }
    };
    let eta_late = opts.eta_late.unwrap_or(k * k / (t * m.cbrt()));
    let lambda_late = opts.lambda_late.unwrap_or(k * k * k / (sigma_x * m.cbrt()));
    let weighted = opts.weighted_p_min.is_some();

    let mut steps = Vec::with_capacity(opts.t_steps);
    steps.push(StepConfig {
        eta: eta_first,
        reg: RegParams { lambda_a: 0.0, lambda_w: 1.0 / (2.0 * eta_first) },
        sigma_xi: sigma_first,
        batch: BatchPlan::FullApprox(opts.full_batch),
        weighted,
    });
    steps.push(StepConfig {
        eta: 1.0,
        reg: RegParams { lambda_a: 0.5, lambda_w: 0.5 },
        sigma_xi: sigma_first,
        batch: BatchPlan::FullApprox(opts.full_batch),
        weighted,
    });
    for _ in 2..opts.t_steps {
        steps.push(StepConfig {
            eta: eta_late,
            reg: RegParams { lambda_a: lambda_late, lambda_w: lambda_late },
            sigma_xi: 0.0,
            batch: BatchPlan::Minibatch(opts.minibatch),
            weighted: false,
        });
    }
    Ok(steps)
}

/// One history row. `test_acc` and `max_cos` are filled at evaluation steps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub train_hinge: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub max_cos: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<StepRecord>,
}

impl TrainHistory {
    /// Columns: step,train_hinge,train_acc,test_acc,max_cos. Optional cells
    /// are blank when not evaluated.
    pub fn to_csv(&self, path: &Path) -> FeatResult<()> {
        let f = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(f);
        writeln!(out, "step,train_hinge,train_acc,test_acc,max_cos")?;
        for r in &self.records {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                r.step,
                r.train_hinge,
                r.train_acc,
                opt(r.test_acc),
                opt(r.max_cos)
            )?;
        }
        Ok(())
    }
}

/// The evaluation snapshot that scored best on test accuracy
/// (ties broken by lower test hinge).
#[derive(Debug, Clone)]
pub struct BestModel {
    pub step: usize,
    pub params: NetworkParams,
    pub test_acc: f64,
    pub test_hinge: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: NetworkParams,
    pub best: BestModel,
    pub history: TrainHistory,
    /// Post-update parameter snapshots at the requested steps
    /// (step 0 means the initialization).
    pub snapshots: Vec<(usize, NetworkParams)>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Evaluate test metrics every this many steps (0: only at the end).
    pub eval_stride: usize,
    /// Steps whose parameters to keep; 0 keeps the initialization.
    pub snapshot_steps: Vec<usize>,
    /// Direction against which max row cosine is tracked.
    pub align_target: Option<Array1<f64>>,
}

fn max_row_cosine(w: &ndarray::Array2<f64>, target: &Array1<f64>) -> f64 {
    let ts = target.as_slice().expect("contiguous target");
    w.outer_iter()
        .map(|row| cosine(row.as_slice().expect("contiguous row"), ts))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Run a step sequence from `init`, recording history and snapshots.
///
/// Minibatch draws come from the minibatch stream keyed by step number, so
/// the trajectory is reproducible regardless of thread count or evaluation
/// cadence.
pub fn train(
    init: NetworkParams,
    schedule: &[StepConfig],
    train_data: &Dataset,
    test_data: &Dataset,
    seeds: &StreamSeeds,
    opts: &TrainOptions,
) -> FeatResult<TrainResult> {
    if schedule.is_empty() {
        return Err(FeatError::Param("empty schedule".into()));
    }
    init.validate()?;
    if train_data.is_empty() || test_data.is_empty() {
        return Err(FeatError::Empty);
    }
    let n = train_data.len();
    let balance = train_data.balance();
    let needs_weighted = schedule.iter().any(|s| s.weighted);
    let weighted_cw = if needs_weighted {
        Some(ClassWeights::from_balance(balance)?)
    } else {
        None
    };

    let mut params = init;
    let mut history = TrainHistory::default();
    let mut snapshots = Vec::new();
    if opts.snapshot_steps.contains(&0) {
        snapshots.push((0, params.clone()));
    }
    let mut best: Option<BestModel> = None;
    let t_total = schedule.len();

    for (idx, cfg) in schedule.iter().enumerate() {
        let step = idx + 1;
        let smoothing = SmoothingConfig::closed_form(cfg.sigma_xi);
        let cw = if cfg.weighted {
            weighted_cw.expect("weighted step implies weights exist")
        } else {
            ClassWeights::balanced()
        };

        let (grads, stats) = match cfg.batch {
            BatchPlan::FullApprox(size) => {
                let take = size.min(n);
                batch_gradients(
                    &params,
                    train_data.inputs.slice(ndarray::s![..take, ..]),
                    train_data.labels.slice(ndarray::s![..take]),
                    &cw,
                    &smoothing,
                    &cfg.reg,
                )?
            }
            BatchPlan::Minibatch(size) => {
                let mut rng = seeds.indexed_rng(Stream::Minibatch, step as u64);
                let idxs: Vec<usize> = (0..size).map(|_| rng.gen_range(0..n)).collect();
                let xb = train_data.inputs.select(Axis(0), &idxs);
                let yb = train_data.labels.select(Axis(0), &idxs);
                batch_gradients(&params, xb.view(), yb.view(), &cw, &smoothing, &cfg.reg)?
            }
        };

        params.w.scaled_add(-cfg.eta, &grads.dw);
        params.b.scaled_add(-cfg.eta, &grads.db);
        params.a.scaled_add(-cfg.eta, &grads.da);

        if opts.snapshot_steps.contains(&step) {
            snapshots.push((step, params.clone()));
        }

        let evaluate = step == t_total
            || (opts.eval_stride > 0 && step % opts.eval_stride == 0);
        let mut record = StepRecord {
            step,
            train_hinge: stats.hinge,
            train_acc: stats.accuracy,
            test_acc: None,
            max_cos: None,
        };
        if evaluate {
            let (acc, hinge) =
                batch_eval(&params, test_data.inputs.view(), test_data.labels.view())?;
            record.test_acc = Some(acc);
            if let Some(t) = &opts.align_target {
                record.max_cos = Some(max_row_cosine(&params.w, t));
            }
            let better = match &best {
                None => true,
                Some(b) => acc > b.test_acc || (acc == b.test_acc && hinge < b.test_hinge),
            };
            if better {
                best = Some(BestModel { step, params: params.clone(), test_acc: acc, test_hinge: hinge });
            }
        }
        history.records.push(record);
    }

    let best = best.expect("final step always evaluates");
    Ok(TrainResult { params, best, history, snapshots })
}

/// Heavy-ball SGD on the unregularized hinge with the hard activation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MomentumOptions {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_hinge: f64,
    pub train_acc: f64,
}

/// Epochwise SGD with momentum: each epoch shuffles the sample order (rng
/// keyed by epoch) and walks it in batches, including a final partial batch.
/// Velocity update v ← βv + ∇, parameters θ ← θ − lr·v.
pub fn sgd_momentum_train(
    init: NetworkParams,
    inputs: ArrayView2<f64>,
    labels: ArrayView1<f64>,
    opts: &MomentumOptions,
    seeds: &StreamSeeds,
) -> FeatResult<(NetworkParams, Vec<EpochRecord>)> {
    if opts.epochs == 0 || opts.batch_size == 0 {
        return Err(FeatError::Param("epochs and batch_size must be positive".into()));
    }
    if !(0.0..1.0).contains(&opts.momentum) {
        return Err(FeatError::Param(format!(
            "momentum must be in [0,1), got {}",
            opts.momentum
        )));
    }
    let n = inputs.nrows();
    if n == 0 {
        return Err(FeatError::Empty);
    }
    let mut params = init;
    params.validate()?;
    let smoothing = SmoothingConfig::closed_form(0.0);
    let cw = ClassWeights::balanced();
    let reg = RegParams::none();

    let mut vel = Gradients {
        dw: ndarray::Array2::zeros(params.w.raw_dim()),
        db: Array1::zeros(params.b.len()),
        da: Array1::zeros(params.a.len()),
    };
    let mut records = Vec::with_capacity(opts.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..opts.epochs {
        let mut rng = seeds.indexed_rng(Stream::Minibatch, epoch as u64);
        order.shuffle(&mut rng);
        let mut hinge_sum = 0.0;
        let mut correct = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let xb = inputs.select(Axis(0), chunk);
            let yb = labels.select(Axis(0), chunk);
            let (grads, stats) =
                batch_gradients(&params, xb.view(), yb.view(), &cw, &smoothing, &reg)?;
            vel.dw *= opts.momentum;
            vel.dw += &grads.dw;
            vel.db *= opts.momentum;
            vel.db += &grads.db;
            vel.da *= opts.momentum;
            vel.da += &grads.da;
            params.w.scaled_add(-opts.lr, &vel.dw);
            params.b.scaled_add(-opts.lr, &vel.db);
            params.a.scaled_add(-opts.lr, &vel.da);
            hinge_sum += stats.hinge;
            correct += stats.accuracy;
            batches += 1.0;
        }
        records.push(EpochRecord {
            epoch,
            train_hinge: hinge_sum / batches,
            train_acc: correct / batches,
        });
    }
    Ok((params, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_unbiased;
    use crate::synthdata::{
        fit_normalization, gen_dataset, make_orthonormal_dictionary, DataSpecDraft,
        HiddenDistribution, LabelRule,
    };
    use approx::assert_relative_eq;
    use ndarray::{Array1, Array2};
    use std::sync::Arc;

    /// Spec with exact hand-set stats so schedule constants can be frozen.
    fn exact_spec(sigma_x: f64, p: f64, k: usize) -> DataSpec {
        let dict = make_orthonormal_dictionary(2 * k, k, 5).unwrap();
        let support: Vec<usize> = (0..k).collect();
        DataSpec {
            dictionary: dict,
            hidden: HiddenDistribution::ParityMixture { p0: 0.5, support: support.clone() },
            rule: LabelRule::parity(support).unwrap(),
            sigma_zeta: 0.0,
            mu_x: Array1::zeros(2 * k),
            sigma_x,
            p,
        }
    }

    fn small_parity_setup(
        seed: u64,
    ) -> (Arc<DataSpec>, Dataset, Dataset, StreamSeeds) {
        let dict = make_orthonormal_dictionary(30, 12, seed).unwrap();
        let support: Vec<usize> = (0..3).collect();
        let draft = DataSpecDraft {
            dictionary: dict,
            hidden: HiddenDistribution::ParityMixture { p0: 0.5, support: support.clone() },
            rule: LabelRule::parity(support).unwrap(),
            sigma_zeta: 0.0,
            p_override: None,
        };
        let seeds = StreamSeeds::new(seed ^ 0xfeed);
        let spec = Arc::new(fit_normalization(&draft, 5000, &seeds).unwrap());
        let train = gen_dataset(&spec, 2000, &seeds, false).unwrap();
        let test = gen_dataset(&spec, 500, &seeds.for_repeat(1), false).unwrap();
        (spec, train, test, seeds)
    }

    #[test]
    fn schedule_constants_for_known_stats() {
        // σ_x = 5, p = 1/4, k = 5, m = 300, T = 600
        let spec = exact_spec(5.0, 0.25, 5);
        let opts = ScheduleOptions::new(300, 600, 50_000, 50);
        let steps = staged_schedule(&spec, &opts).unwrap();
        assert_eq!(steps.len(), 600);

        // η⁽¹⁾ = (1/16)·25 / (5·2.7e7)
        assert_relative_eq!(steps[0].eta, 1.1574074074074074e-8, max_relative = 1e-9);
        assert_eq!(steps[0].reg.lambda_a, 0.0);
        assert_relative_eq!(steps[0].reg.lambda_w, 1.0 / (2.0 * steps[0].eta), max_relative = 1e-15);
        // σ_ξ default 5^{-3/2}
        assert_relative_eq!(steps[0].sigma_xi, 0.08944271909999159, max_relative = 1e-12);
        assert_eq!(steps[0].batch, BatchPlan::FullApprox(50_000));

        assert_eq!(steps[1].eta, 1.0);
        assert_eq!(steps[1].reg.lambda_a, 0.5);
        assert_eq!(steps[1].reg.lambda_w, 0.5);
        assert_eq!(steps[1].sigma_xi, steps[0].sigma_xi);

        // η_late = 25/(600·300^{1/3}), λ_late = 125/(5·300^{1/3})
        assert_relative_eq!(steps[2].eta, 6.2241732591071745e-3, max_relative = 1e-10);
        assert_relative_eq!(steps[2].reg.lambda_w, 3.7345039554643047, max_relative = 1e-10);
        assert_eq!(steps[2].sigma_xi, 0.0);
        assert_eq!(steps[2].batch, BatchPlan::Minibatch(50));
        assert!(!steps[2].weighted);
        for s in &steps[3..] {
            assert_eq!(s.eta, steps[2].eta);
            assert_eq!(s.reg.lambda_w, steps[2].reg.lambda_w);
        }
    }

    #[test]
    fn schedule_weighted_first_step_rate() {
        let spec = exact_spec(5.0, 0.25, 5);
        let mut opts = ScheduleOptions::new(300, 600, 50_000, 50);
        opts.weighted_p_min = Some(0.1);
        let steps = staged_schedule(&spec, &opts).unwrap();
        // (1/16)·0.1·5 / (5·2.7e7)
        assert_relative_eq!(steps[0].eta, 2.3148148148148148e-10, max_relative = 1e-9);
        assert!(steps[0].weighted && steps[1].weighted);
        assert!(!steps[2].weighted);
    }

    #[test]
    fn schedule_rejects_short_runs() {
        let spec = exact_spec(5.0, 0.25, 5);
        let opts = ScheduleOptions::new(10, 2, 100, 10);
        assert!(matches!(staged_schedule(&spec, &opts), Err(FeatError::Param(_))));
    }

    #[test]
    fn first_step_overwrites_init_with_data_gradient() {
        let (spec, train_data, test_data, seeds) = small_parity_setup(3);
        let init = init_unbiased(20, &spec, &seeds).unwrap();
        let schedule = staged_schedule(&spec, &ScheduleOptions::new(20, 3, 2000, 50)).unwrap();
        let cfg = schedule[0];
        let smoothing = SmoothingConfig::closed_form(cfg.sigma_xi);
        let (data_grads, _) = batch_gradients(
            &init,
            train_data.inputs.view(),
            train_data.labels.view(),
            &ClassWeights::balanced(),
            &smoothing,
            &RegParams::none(),
        )
        .unwrap();

        let opts = TrainOptions { snapshot_steps: vec![1], ..Default::default() };
        let result = train(init, &schedule, &train_data, &test_data, &seeds, &opts).unwrap();
        let (step, w1) = &result.snapshots[0];
        assert_eq!(*step, 1);
        let want = data_grads.dw.mapv(|g| -cfg.eta * g);
        let max_err = (&w1.w - &want).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_err < 1e-12, "max |W(1) + η∇| = {max_err}");
    }

    #[test]
    fn train_is_deterministic() {
        let (spec, train_data, test_data, seeds) = small_parity_setup(4);
        let schedule = staged_schedule(&spec, &ScheduleOptions::new(10, 12, 2000, 20)).unwrap();
        let opts = TrainOptions {
            eval_stride: 4,
            snapshot_steps: vec![0, 1, 2],
            align_target: Some(spec.target_direction()),
        };
        let run = || {
            let init = init_unbiased(10, &spec, &seeds).unwrap();
            train(init, &schedule, &train_data, &test_data, &seeds, &opts).unwrap()
        };
        let r1 = run();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let r2 = pool.install(run);
        assert_eq!(r1.params, r2.params);
        assert_eq!(r1.history.records.len(), r2.history.records.len());
        for (a, b) in r1.history.records.iter().zip(&r2.history.records) {
            assert_eq!(a.train_hinge.to_bits(), b.train_hinge.to_bits());
            assert_eq!(a.test_acc.map(f64::to_bits), b.test_acc.map(f64::to_bits));
        }
        assert_eq!(r1.snapshots.len(), 3);
        assert_eq!(r1.best.step, r2.best.step);
    }

    #[test]
    fn best_model_is_at_least_final() {
        let (spec, train_data, test_data, seeds) = small_parity_setup(5);
        let schedule = staged_schedule(&spec, &ScheduleOptions::new(10, 30, 2000, 20)).unwrap();
        let init = init_unbiased(10, &spec, &seeds).unwrap();
        let opts = TrainOptions { eval_stride: 5, ..Default::default() };
        let result = train(init, &schedule, &train_data, &test_data, &seeds, &opts).unwrap();
        let final_acc = result
            .history
            .records
            .last()
            .unwrap()
            .test_acc
            .expect("final step evaluates");
        assert!(result.best.test_acc >= final_acc);
    }

    #[test]
    fn history_csv_layout() {
        let hist = TrainHistory {
            records: vec![
                StepRecord { step: 1, train_hinge: 1.0, train_acc: 0.5, test_acc: None, max_cos: None },
                StepRecord {
                    step: 2,
                    train_hinge: 0.25,
                    train_acc: 0.875,
                    test_acc: Some(0.9),
                    max_cos: Some(0.75),
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hist.csv");
        hist.to_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "step,train_hinge,train_acc,test_acc,max_cos\n1,1,0.5,,\n2,0.25,0.875,0.9,0.75\n"
        );
    }

    #[test]
    fn momentum_first_update_is_plain_gradient_step() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        use rand::{Rng, SeedableRng};
        let n = 16;
        let d = 4;
        let mut x = Array2::zeros((n, d));
        for v in x.iter_mut() {
            *v = rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let y = Array1::from_iter((0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }));
        let seeds = StreamSeeds::new(77);
        let init = crate::network::init_gaussian(6, d, 0.4, &seeds).unwrap();

        // batch_size >= n: exactly one batch in epoch 0
        let opts = MomentumOptions { lr: 0.05, momentum: 0.9, epochs: 1, batch_size: 64 };
        let (after, _) =
            sgd_momentum_train(init.clone(), x.view(), y.view(), &opts, &seeds).unwrap();
        let (grads, _) = batch_gradients(
            &init,
            x.view(),
            y.view(),
            &ClassWeights::balanced(),
            &SmoothingConfig::closed_form(0.0),
            &RegParams::none(),
        )
        .unwrap();
        let want = &init.w - &grads.dw.mapv(|g| opts.lr * g);
        let max_err = (&after.w - &want).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_err < 1e-14, "first momentum update max err {max_err}");
    }

    #[test]
    fn momentum_solves_separable_toy() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        let n = 200;
        let mut x = Array2::zeros((n, 2));
        let mut y = Array1::zeros(n);
        for i in 0..n {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            // clusters at (±0.6, ±0.6) with small jitter
            x[(i, 0)] = 0.6 * label + 0.05 * rng.sample::<f64, _>(rand_distr::StandardNormal);
            x[(i, 1)] = 0.6 * label + 0.05 * rng.sample::<f64, _>(rand_distr::StandardNormal);
            y[i] = label;
        }
        let seeds = StreamSeeds::new(31);
        let init = crate::network::init_gaussian(16, 2, 0.5, &seeds).unwrap();
        let opts = MomentumOptions { lr: 0.05, momentum: 0.9, epochs: 120, batch_size: 32 };
        let (params, records) =
            sgd_momentum_train(init, x.view(), y.view(), &opts, &seeds).unwrap();
        let (acc, _) = batch_eval(&params, x.view(), y.view()).unwrap();
        assert!(acc == 1.0, "separable toy accuracy {acc} after {} epochs", records.len());
    }
}
