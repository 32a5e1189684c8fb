//! Experiment execution: builds data specs from resolved settings, trains the
//! network and the four feature/kernel baselines with matched budgets, and
//! writes tables, training curves, and weight scatters under the output root.

use crate::baselines::{train_linear, FeatureMap, LinearStepRecord, LinearTrainOptions, MapKind};
use crate::diagnostics::{alignment_to_target, classical_mds, Embedding2D};
use crate::harness::config::{
    resolve, ExperimentConfig, ExperimentKind, MixtureSettings, OracleSettings, ResolvedPlan,
    TableSettings,
};
use crate::harness::svg::{emit_svg_scatter, Palette, ScatterColoring};
use crate::harness::table::{Method, MethodResult, MethodTable, SeedTable, Threshold};
use crate::network::{
    batch_eval, forward, init_gaussian, init_unbiased, ClassWeights, NetworkParams,
};
use crate::numeric::cosine;
use crate::oracles::{
    build_reference_network, estimate_gradient_components, parity_family_orthogonality,
};
use crate::rng::{Stream, StreamSeeds};
use crate::synthdata::{
    fit_normalization, gen_dataset, gen_dataset_with_ratio, make_incoherent_dictionary,
    make_orthonormal_dictionary, DataSpec, DataSpecDraft, Dataset, HiddenDistribution, LabelRule,
    sample_gaussian_mixture,
};
use crate::trainer::{
    sgd_momentum_train, staged_schedule, train, MomentumOptions, ScheduleOptions, TrainOptions,
};
use crate::{FeatError, FeatResult};
use ndarray::{s, Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    /// Verbatim echo of the input configuration.
    pub config: serde_json::Value,
    pub out_dir: PathBuf,
    pub body: ReportBody,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportBody {
    Table { table: MethodTable },
    Sweep { variants: Vec<SweepEntry> },
    Mixture { summary: MixtureSummary },
    GradientOracle { summary: GradientOracleSummary },
    SqCheck { summary: SqCheckSummary },
    ReferenceCheck { summary: ReferenceCheckSummary },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub label: String,
    pub table: MethodTable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureSummary {
    pub num_centers: usize,
    pub per_center_best_abs_cosine: Vec<f64>,
    pub min_best_abs_cosine: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientOracleSummary {
    pub support: Vec<usize>,
    /// Smallest estimate/se over class-relevant patterns and neurons with a
    /// nonzero output coefficient.
    pub min_support_z: f64,
    pub min_aggregate_z: f64,
    pub snr: f64,
    pub mean_abs_support: f64,
    pub mean_abs_off_support: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqCheckSummary {
    pub num_patterns: usize,
    pub k: usize,
    pub family_size: usize,
    pub expected_family_size: usize,
    pub max_cross_correlation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceCheckSummary {
    pub n_check: usize,
    pub parity_max_abs_error: f64,
    pub interval_max_abs_error: f64,
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

pub fn run_experiment(cfg: &ExperimentConfig, out_root: &Path) -> FeatResult<ExperimentReport> {
    let plan = resolve(cfg)?;
    let kind = cfg.kind()?;
    let out_dir = out_root.join(kind.name());
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| FeatError::Config(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut artifacts = Vec::new();
    let body = match &plan {
        ResolvedPlan::Table { kind, settings } => {
            let table = run_table(*kind, settings, &out_dir, &mut artifacts)?;
            ReportBody::Table { table }
        }
        ResolvedPlan::Sweep { kind, variants } => {
            let mut entries = Vec::new();
            for (label, settings) in variants {
                let sub = out_dir.join(label);
                std::fs::create_dir_all(&sub)?;
                println!("[{}] variant {label}", kind.name());
                let table = run_table(*kind, settings, &sub, &mut artifacts)?;
                entries.push(SweepEntry { label: label.clone(), table });
            }
            ReportBody::Sweep { variants: entries }
        }
        ResolvedPlan::Mixture(settings) => {
            let summary = run_mixture(settings, &out_dir, &mut artifacts)?;
            ReportBody::Mixture { summary }
        }
        ResolvedPlan::GradientOracle(settings) => {
            let summary = run_gradient_oracle(settings, &out_dir, &mut artifacts)?;
            ReportBody::GradientOracle { summary }
        }
        ResolvedPlan::SqCheck { num_patterns, k } => {
            let summary = run_sq_check(*num_patterns, *k)?;
            ReportBody::SqCheck { summary }
        }
        ResolvedPlan::ReferenceCheck(settings) => {
            let summary = run_reference_check(settings)?;
            ReportBody::ReferenceCheck { summary }
        }
    };

    let report = ExperimentReport {
        experiment: kind.name().to_string(),
        config: cfg.to_value(),
        out_dir: out_dir.clone(),
        body,
        artifacts,
    };
    let report_path = out_dir.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    println!("report: {}", report_path.display());
    Ok(report)
}

/// The pass/fail bounds associated with each named experiment; experiments
/// without published targets get an empty list.
pub fn report_thresholds(report: &ExperimentReport) -> Vec<Threshold> {
    let mut out = Vec::new();
    match (&report.body, report.experiment.as_str()) {
        (ReportBody::Table { table }, "parity") => {
            let acc = |m: Method| table.mean_test(m).unwrap_or(f64::NAN);
            let cos = |m: Method| table.mean_cosine(m).unwrap_or(f64::NAN);
            out.push(Threshold::at_least("parity network test accuracy", acc(Method::Network), 0.99));
            out.push(Threshold::at_least("parity two-step test accuracy", acc(Method::TwoStep), 0.99));
            out.push(Threshold::at_most("parity ntk test accuracy", acc(Method::Ntk), 0.92));
            out.push(Threshold::at_most("parity rf test accuracy", acc(Method::Rf), 0.85));
            out.push(Threshold::at_most("parity one-step test accuracy", acc(Method::OneStep), 0.60));
            out.push(Threshold::at_most(
                "parity no-structure network test accuracy",
                acc(Method::NetworkNoStructure),
                0.60,
            ));
            out.push(Threshold::at_least("parity network alignment", cos(Method::Network), 0.99));
            out.push(Threshold::at_most("parity rf anchor alignment", cos(Method::Rf), 0.40));
            out.push(Threshold::at_least("parity one-step alignment lower", cos(Method::OneStep), 0.60));
            out.push(Threshold::at_most("parity one-step alignment upper", cos(Method::OneStep), 0.95));
            out.push(Threshold::at_least(
                "parity alignment gain from second step",
                cos(Method::TwoStep) - cos(Method::OneStep),
                0.05,
            ));
            out.push(Threshold::at_least(
                "parity two-step over one-step accuracy gain",
                acc(Method::TwoStep) - acc(Method::OneStep),
                0.30,
            ));
        }
        (ReportBody::Table { table }, "interval") => {
            let acc = |m: Method| table.mean_test(m).unwrap_or(f64::NAN);
            out.push(Threshold::at_least("interval network test accuracy", acc(Method::Network), 0.99));
            out.push(Threshold::at_least("interval ntk test accuracy", acc(Method::Ntk), 0.95));
            out.push(Threshold::at_most("interval rf test accuracy", acc(Method::Rf), 0.85));
            out.push(Threshold::at_most("interval one-step test accuracy", acc(Method::OneStep), 0.60));
            out.push(Threshold::at_least(
                "interval no-structure network test accuracy",
                acc(Method::NetworkNoStructure),
                0.95,
            ));
        }
        (ReportBody::Table { table }, "no_structure") => {
            let acc = table.mean_test(Method::Network).unwrap_or(f64::NAN);
            out.push(Threshold::at_most("no-structure network test accuracy", acc, 0.60));
        }
        (ReportBody::Mixture { summary }, _) => {
            out.push(Threshold::at_least(
                "worst cluster-center alignment",
                summary.min_best_abs_cosine,
                0.9,
            ));
        }
        (ReportBody::GradientOracle { summary }, _) => {
            out.push(Threshold::at_least("support component z-score", summary.min_support_z, 3.0));
            out.push(Threshold::at_least("gradient signal-to-noise ratio", summary.snr, 5.0));
        }
        (ReportBody::SqCheck { summary }, _) => {
            out.push(Threshold::at_least(
                "parity family size",
                summary.family_size as f64,
                summary.expected_family_size as f64,
            ));
            out.push(Threshold::at_most(
                "parity family max cross correlation",
                summary.max_cross_correlation,
                0.0,
            ));
        }
        (ReportBody::ReferenceCheck { summary }, _) => {
            out.push(Threshold::at_most(
                "parity reference max error",
                summary.parity_max_abs_error,
                1e-8,
            ));
            out.push(Threshold::at_most(
                "interval reference max error",
                summary.interval_max_abs_error,
                1e-8,
            ));
        }
        _ => {}
    }
    out
}

// ---------------------------------------------------------------------------
// Table experiments
// ---------------------------------------------------------------------------

fn sample_support(num_patterns: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut picked = HashSet::new();
    let mut support = Vec::with_capacity(k);
    while support.len() < k {
        let j = rng.gen_range(0..num_patterns);
        if picked.insert(j) {
            support.push(j);
        }
    }
    support.sort_unstable();
    support
}

fn sample_codewords(
    k: usize,
    words_per_class: usize,
    rng: &mut impl Rng,
) -> FeatResult<(Vec<Vec<u8>>, Vec<Vec<u8>>)> {
    let capacity = if k >= 63 { usize::MAX } else { 1usize << k };
    if 2 * words_per_class > capacity {
        return Err(FeatError::Feasibility(format!(
            "{} codewords do not fit in {{0,1}}^{k}",
            2 * words_per_class
        )));
    }
    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(2 * words_per_class);
    while words.len() < 2 * words_per_class {
        let w: Vec<u8> = (0..k).map(|_| rng.gen_range(0..2u8)).collect();
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    let minus = words.split_off(words_per_class);
    Ok((words, minus))
}

fn build_draft(
    kind: ExperimentKind,
    s: &TableSettings,
    seeds: &StreamSeeds,
) -> FeatResult<DataSpecDraft> {
    let dict_seed = seeds.stream_seed(Stream::Dictionary);
    let dictionary = match s.coherence {
        None => make_orthonormal_dictionary(s.d, s.num_patterns, dict_seed)?,
        Some(mu) => make_incoherent_dictionary(s.d, s.num_patterns, mu, dict_seed, 200)?,
    };
    let mut rng = seeds.indexed_rng(Stream::Dictionary, 1);
    let support = sample_support(s.num_patterns, s.k, &mut rng);
    let (hidden, rule) = match kind {
        ExperimentKind::Interval => {
            let mut q = vec![0.5; s.num_patterns];
            for &j in &support {
                q[j] = 2.0 / 3.0;
            }
            let lo = (2 * s.k) / 3;
            let rule = LabelRule::interval(support, lo.max(1), s.k)?;
            (HiddenDistribution::ProductBernoulli { q }, rule)
        }
        ExperimentKind::NoStructure => {
            (HiddenDistribution::UniformNoStructure, LabelRule::parity(support)?)
        }
        ExperimentKind::Codebook => {
            let mut wrng = seeds.indexed_rng(Stream::Dictionary, 2);
            let (plus_words, minus_words) = sample_codewords(s.k, s.words_per_class, &mut wrng)?;
            let hidden = HiddenDistribution::Codebook {
                support: support.clone(),
                plus_words,
                minus_words,
                background: s.background,
            };
            (hidden, LabelRule::parity(support)?)
        }
        _ => (
            HiddenDistribution::ParityMixture { p0: s.p0, support: support.clone() },
            LabelRule::parity(support)?,
        ),
    };
    Ok(DataSpecDraft {
        dictionary,
        hidden,
        rule,
        sigma_zeta: s.sigma_zeta,
        p_override: s.p_override,
    })
}

/// The ablation twin swaps in the structureless hidden family and pins the
/// label correlation (undefined without structure) to the structured fit;
/// everything else must be identical.
fn check_no_structure_twin(a: &DataSpecDraft, b: &DataSpecDraft) -> FeatResult<()> {
    if !matches!(b.hidden, HiddenDistribution::UniformNoStructure) {
        return Err(FeatError::Param("ablation twin must be structureless".into()));
    }
    let dict_eq = serde_json::to_value(&a.dictionary)? == serde_json::to_value(&b.dictionary)?;
    let rule_eq = serde_json::to_value(&a.rule)? == serde_json::to_value(&b.rule)?;
    if !dict_eq || !rule_eq || a.sigma_zeta != b.sigma_zeta {
        return Err(FeatError::Param(
            "ablation twin may differ only in the hidden distribution".into(),
        ));
    }
    Ok(())
}

fn gen_pair(
    spec: &Arc<DataSpec>,
    s: &TableSettings,
    run_seeds: &StreamSeeds,
) -> FeatResult<(Dataset, Dataset)> {
    let test_seeds = run_seeds.for_repeat(7919);
    let (train, test) = match s.neg_fraction {
        Some(f) => (
            gen_dataset_with_ratio(spec, s.n_train, f, run_seeds, false)?,
            gen_dataset_with_ratio(spec, s.n_test, f, &test_seeds, false)?,
        ),
        None => (
            gen_dataset(spec, s.n_train, run_seeds, false)?,
            gen_dataset(spec, s.n_test, &test_seeds, false)?,
        ),
    };
    Ok((train, test))
}

fn class_weights(train: &Dataset, weighted: bool) -> FeatResult<ClassWeights> {
    if weighted {
        ClassWeights::from_balance(train.balance())
    } else {
        Ok(ClassWeights::balanced())
    }
}

fn write_linear_history(path: &Path, history: &[LinearStepRecord]) -> FeatResult<()> {
    let f = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(f);
    writeln!(out, "step,train_hinge,test_acc")?;
    for r in history {
        let acc = r.test_acc.map_or_else(|| "NA".to_string(), |a| format!("{a}"));
        writeln!(out, "{},{},{}", r.step, r.train_hinge, acc)?;
    }
    Ok(())
}

struct LinearRow {
    result: MethodResult,
    history: Vec<LinearStepRecord>,
}

fn linear_method(
    method: Method,
    anchor: &NetworkParams,
    map_kind: MapKind,
    train_data: &Dataset,
    test_data: &Dataset,
    s: &TableSettings,
    target: &Array1<f64>,
    run_seeds: &StreamSeeds,
) -> FeatResult<LinearRow> {
    let map = FeatureMap { anchor: anchor.clone(), kind: map_kind };
    let weighted = s.neg_fraction.is_some();
    let opts = LinearTrainOptions {
        eta: s.eta_linear,
        t_steps: s.t_steps,
        full_batch: s.full_batch,
        minibatch: s.minibatch,
        eval_stride: s.linear_eval_stride,
        weights: class_weights(train_data, weighted)?,
    };
    let fit = train_linear(
        &map,
        train_data.inputs.view(),
        train_data.labels.view(),
        test_data.inputs.view(),
        test_data.labels.view(),
        &opts,
        run_seeds,
    )?;
    let (train_acc, _) = fit.best.eval(&map, train_data.inputs.view(), train_data.labels.view())?;
    let (final_acc, _) = fit.model.eval(&map, test_data.inputs.view(), test_data.labels.view())?;
    let cosine = match map_kind {
        // the tangent features have no single weight direction to compare
        MapKind::Tangent => None,
        MapKind::Activations => {
            Some(alignment_to_target(&anchor.w.view(), &target.view())?.max_cosine)
        }
    };
    Ok(LinearRow {
        result: MethodResult {
            method,
            train_accuracy: train_acc,
            best_test_accuracy: fit.best_test_acc,
            final_test_accuracy: final_acc,
            test_hinge: fit.best_test_hinge,
            cosine,
        },
        history: fit.history,
    })
}

fn snapshot(result: &crate::trainer::TrainResult, step: usize) -> FeatResult<&NetworkParams> {
    result
        .snapshots
        .iter()
        .find(|(t, _)| *t == step)
        .map(|(_, p)| p)
        .ok_or_else(|| FeatError::Param(format!("missing snapshot at step {step}")))
}

fn run_network(
    spec: &Arc<DataSpec>,
    s: &TableSettings,
    train_data: &Dataset,
    test_data: &Dataset,
    target: &Array1<f64>,
    run_seeds: &StreamSeeds,
    snapshots: Vec<usize>,
) -> FeatResult<(crate::trainer::TrainResult, MethodResult)> {
    let init = init_unbiased(s.m, spec, run_seeds)?;
    let sched_opts = ScheduleOptions {
        m: s.m,
        t_steps: s.t_steps,
        full_batch: s.full_batch,
        minibatch: s.minibatch,
        sigma_xi_first_two: s.sigma_xi,
        eta_late: s.eta_late,
        lambda_late: s.lambda_late,
        weighted_p_min: s.neg_fraction.map(|f| f.min(1.0 - f)),
    };
    let schedule = staged_schedule(spec, &sched_opts)?;
    let opts = TrainOptions {
        eval_stride: s.eval_stride,
        snapshot_steps: snapshots,
        align_target: Some(target.clone()),
    };
    let result = train(init, &schedule, train_data, test_data, run_seeds, &opts)?;
    let (train_acc, _) =
        batch_eval(&result.best.params, train_data.inputs.view(), train_data.labels.view())?;
    let (final_acc, _) =
        batch_eval(&result.params, test_data.inputs.view(), test_data.labels.view())?;
    let align = alignment_to_target(&result.params.w.view(), &target.view())?;
    let row = MethodResult {
        method: Method::Network,
        train_accuracy: train_acc,
        best_test_accuracy: result.best.test_acc,
        final_test_accuracy: final_acc,
        test_hinge: result.best.test_hinge,
        cosine: Some(align.max_cosine),
    };
    Ok((result, row))
}

fn run_table_seed(
    kind: ExperimentKind,
    s: &TableSettings,
    seed_index: usize,
    seed_dir: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> FeatResult<SeedTable> {
    std::fs::create_dir_all(seed_dir)?;
    let run_seeds = StreamSeeds::new(s.base_seed).for_repeat(seed_index);
    let draft = build_draft(kind, s, &run_seeds)?;
    let spec = Arc::new(fit_normalization(&draft, s.n_calib, &run_seeds)?);
    let target = spec.target_direction();
    let (train_data, test_data) = gen_pair(&spec, s, &run_seeds)?;

    let network_only = kind == ExperimentKind::NoStructure;
    let snapshots = if network_only { vec![] } else { vec![0, 1, 2] };
    let (net, net_row) =
        run_network(&spec, s, &train_data, &test_data, &target, &run_seeds, snapshots)?;
    let history_path = seed_dir.join("network_history.csv");
    net.history.to_csv(&history_path)?;
    artifacts.push(history_path);
    println!(
        "  seed {seed_index} network: best test {:.4}, alignment {:.3}",
        net_row.best_test_accuracy,
        net_row.cosine.unwrap_or(f64::NAN)
    );

    let scatter = write_weight_scatter(seed_dir, "weights_mds", &net.params.w, &target)?;
    artifacts.extend(scatter);

    if network_only {
        return Ok(SeedTable { seed_index, rows: vec![net_row] });
    }

    let mut rows = vec![net_row];
    let anchors = [
        (Method::Ntk, snapshot(&net, 0)?, MapKind::Tangent, "ntk"),
        (Method::Rf, snapshot(&net, 0)?, MapKind::Activations, "rf"),
        (Method::OneStep, snapshot(&net, 1)?, MapKind::Activations, "one_step"),
        (Method::TwoStep, snapshot(&net, 2)?, MapKind::Activations, "two_step"),
    ];
    for (method, anchor, map_kind, stem) in anchors {
        let row = linear_method(
            method, anchor, map_kind, &train_data, &test_data, s, &target, &run_seeds,
        )?;
        let path = seed_dir.join(format!("{stem}_history.csv"));
        write_linear_history(&path, &row.history)?;
        artifacts.push(path);
        println!("  seed {seed_index} {}: best test {:.4}", method.id(), row.result.best_test_accuracy);
        rows.push(row.result);
    }

    // the six-method tables end with the ablation twin: same dictionary,
    // labels, sizes, and schedule knobs on structureless hidden vectors
    if kind != ExperimentKind::Codebook {
        let ns_draft = DataSpecDraft {
            dictionary: draft.dictionary.clone(),
            hidden: HiddenDistribution::UniformNoStructure,
            rule: draft.rule.clone(),
            sigma_zeta: draft.sigma_zeta,
            p_override: Some(spec.p),
        };
        check_no_structure_twin(&draft, &ns_draft)?;
        let ns_spec = Arc::new(fit_normalization(&ns_draft, s.n_calib, &run_seeds)?);
        let (ns_train, ns_test) = gen_pair(&ns_spec, s, &run_seeds)?;
        let (ns_net, ns_row) =
            run_network(&ns_spec, s, &ns_train, &ns_test, &target, &run_seeds, vec![])?;
        let ns_history = seed_dir.join("no_structure_history.csv");
        ns_net.history.to_csv(&ns_history)?;
        artifacts.push(ns_history);
        println!(
            "  seed {seed_index} network w/o structure: best test {:.4}",
            ns_row.best_test_accuracy
        );
        rows.push(MethodResult { method: Method::NetworkNoStructure, ..ns_row });
    }

    Ok(SeedTable { seed_index, rows })
}

fn run_table(
    kind: ExperimentKind,
    s: &TableSettings,
    out_dir: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> FeatResult<MethodTable> {
    let mut seeds = Vec::with_capacity(s.repeats);
    for r in 0..s.repeats {
        let seed_dir = out_dir.join(format!("seed{r}"));
        seeds.push(run_table_seed(kind, s, r, &seed_dir, artifacts)?);
    }
    let table = MethodTable::from_seeds(seeds)?;
    let csv_path = out_dir.join("table.csv");
    table.to_csv(&csv_path)?;
    artifacts.push(csv_path);
    print!("{}", table.render_text());
    Ok(table)
}

// ---------------------------------------------------------------------------
// Weight scatter artifacts
// ---------------------------------------------------------------------------

fn direction_color(row: &[f64], plus: &[f64]) -> Palette {
    let c = cosine(row, plus);
    if c >= 0.5 {
        Palette::Red
    } else if c <= -0.5 {
        Palette::Orange
    } else {
        Palette::Blue
    }
}

/// Embeds the weight rows together with ±target, then writes the scatter as
/// CSV (for re-plotting) and SVG. Returns the written paths.
fn write_weight_scatter(
    dir: &Path,
    stem: &str,
    w: &Array2<f64>,
    target: &Array1<f64>,
) -> FeatResult<Vec<PathBuf>> {
    let tslice = target.as_slice().expect("contiguous target");
    let colors: Vec<Palette> = w
        .outer_iter()
        .map(|row| direction_color(row.as_slice().expect("contiguous row"), tslice))
        .collect();
    let stars = vec![(target.clone(), Palette::Red), (-target.clone(), Palette::Orange)];
    write_scatter(dir, stem, w, &colors, &stars)
}

fn write_scatter(
    dir: &Path,
    stem: &str,
    w: &Array2<f64>,
    colors: &[Palette],
    star_dirs: &[(Array1<f64>, Palette)],
) -> FeatResult<Vec<PathBuf>> {
    let n = w.nrows();
    let d = w.ncols();
    let mut rows = Array2::zeros((n + star_dirs.len(), d));
    rows.slice_mut(s![..n, ..]).assign(w);
    for (i, (dir_vec, _)) in star_dirs.iter().enumerate() {
        rows.row_mut(n + i).assign(dir_vec);
    }
    let emb = classical_mds(&rows.view())?;
    let neuron_points = emb.points.slice(s![..n, ..]).to_owned();
    let stars: Vec<(f64, f64, Palette)> = star_dirs
        .iter()
        .enumerate()
        .map(|(i, (_, c))| (emb.points[[n + i, 0]], emb.points[[n + i, 1]], *c))
        .collect();

    let csv_path = dir.join(format!("{stem}.csv"));
    write_scatter_csv(&csv_path, &neuron_points, colors, &stars, emb.stress)?;
    let svg_path = dir.join(format!("{stem}.svg"));
    let neuron_emb = Embedding2D { points: neuron_points, stress: emb.stress };
    let coloring = ScatterColoring { point_colors: colors.to_vec(), stars };
    emit_svg_scatter(&neuron_emb, &coloring, &svg_path)?;
    Ok(vec![csv_path, svg_path])
}

fn write_scatter_csv(
    path: &Path,
    points: &Array2<f64>,
    colors: &[Palette],
    stars: &[(f64, f64, Palette)],
    stress: f64,
) -> FeatResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "x", "y", "color", "stress"])?;
    for (i, row) in points.outer_iter().enumerate() {
        w.write_record([
            "neuron".to_string(),
            format!("{}", row[0]),
            format!("{}", row[1]),
            colors[i].name().to_string(),
            format!("{stress}"),
        ])?;
    }
    for &(x, y, c) in stars {
        w.write_record([
            "star".to_string(),
            format!("{x}"),
            format!("{y}"),
            c.name().to_string(),
            format!("{stress}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds the SVGs for every scatter CSV listed in a saved report. Returns
/// the written SVG paths.
pub fn replot(report_path: &Path, out_override: Option<&Path>) -> FeatResult<Vec<PathBuf>> {
    let text = std::fs::read_to_string(report_path)?;
    let report: ExperimentReport = serde_json::from_str(&text)
        .map_err(|e| FeatError::Config(format!("{}: {e}", report_path.display())))?;
    let mut written = Vec::new();
    for artifact in &report.artifacts {
        let is_scatter = artifact.extension().is_some_and(|e| e == "csv")
            && artifact
                .file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.ends_with("mds") || s.ends_with("scatter"));
        if !is_scatter {
            continue;
        }
        let (points, colors, stars, stress) = read_scatter_csv(artifact)?;
        let svg_path = match out_override {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let mut name = artifact
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("scatter")
                    .to_string();
                // seed directories all use the same stem, so keep them apart
                if let Some(parent) = artifact.parent().and_then(|p| p.file_name()) {
                    name = format!("{}_{name}", parent.to_string_lossy());
                }
                dir.join(format!("{name}.svg"))
            }
            None => artifact.with_extension("svg"),
        };
        let emb = Embedding2D { points, stress };
        emit_svg_scatter(&emb, &ScatterColoring { point_colors: colors, stars }, &svg_path)?;
        written.push(svg_path);
    }
    if written.is_empty() {
        return Err(FeatError::Config(format!(
            "{} lists no scatter CSV artifacts",
            report_path.display()
        )));
    }
    Ok(written)
}

type ScatterData = (Array2<f64>, Vec<Palette>, Vec<(f64, f64, Palette)>, f64);

fn read_scatter_csv(path: &Path) -> FeatResult<ScatterData> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut points = Vec::new();
    let mut colors = Vec::new();
    let mut stars = Vec::new();
    let mut stress = 0.0;
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| -> FeatResult<&str> {
            record
                .get(i)
                .ok_or_else(|| FeatError::Config(format!("{}: short row", path.display())))
        };
        let parse = |v: &str| -> FeatResult<f64> {
            v.parse::<f64>()
                .map_err(|e| FeatError::Config(format!("{}: {e}", path.display())))
        };
        let x = parse(field(1)?)?;
        let y = parse(field(2)?)?;
        let color = Palette::parse(field(3)?)?;
        stress = parse(field(4)?)?;
        match field(0)? {
            "neuron" => {
                points.push([x, y]);
                colors.push(color);
            }
            "star" => stars.push((x, y, color)),
            other => {
                return Err(FeatError::Config(format!(
                    "{}: unknown marker kind '{other}'",
                    path.display()
                )))
            }
        }
    }
    let n = points.len();
    let mut arr = Array2::zeros((n, 2));
    for (i, [x, y]) in points.into_iter().enumerate() {
        arr[[i, 0]] = x;
        arr[[i, 1]] = y;
    }
    Ok((arr, colors, stars, stress))
}

// ---------------------------------------------------------------------------
// Gaussian cluster experiment
// ---------------------------------------------------------------------------

fn mixture_centers(dict: &crate::synthdata::Dictionary) -> Vec<(Array1<f64>, f64)> {
    let k = dict.num_patterns();
    let mut centers = Vec::with_capacity(1 << k);
    for bits in 0..(1usize << k) {
        let mut c = Array1::zeros(dict.dim());
        let mut label = 1.0;
        for j in 0..k {
            let eps = if bits >> j & 1 == 1 { 1.0 } else { -1.0 };
            label *= eps;
            c.scaled_add(eps, &dict.column(j));
        }
        centers.push((c, label));
    }
    centers
}

fn run_mixture(
    s: &MixtureSettings,
    out_dir: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> FeatResult<MixtureSummary> {
    let seeds = StreamSeeds::new(s.base_seed);
    let dict = make_orthonormal_dictionary(s.d, s.k, seeds.stream_seed(Stream::Dictionary))?;
    let mut rng = seeds.stream_rng(Stream::Hidden);
    let mut draw = |n: usize| -> FeatResult<(Array2<f64>, Array1<f64>)> {
        let mut inputs = Array2::zeros((n, s.d));
        let mut labels = Array1::zeros(n);
        for i in 0..n {
            let (x, y) = sample_gaussian_mixture(&dict, s.sigma_r, &mut rng)?;
            inputs.row_mut(i).assign(&x);
            labels[i] = y;
        }
        Ok((inputs, labels))
    };
    let (train_inputs, train_labels) = draw(s.n_train)?;
    let (test_inputs, test_labels) = draw(s.n_test)?;

    let init = init_gaussian(2 * s.m, s.d, s.init_scale, &seeds)?;
    let opts = MomentumOptions {
        lr: s.lr,
        momentum: s.momentum,
        epochs: s.epochs,
        batch_size: s.batch_size,
    };
    let (params, epochs) =
        sgd_momentum_train(init, train_inputs.view(), train_labels.view(), &opts, &seeds)?;

    let epoch_path = out_dir.join("epochs.csv");
    {
        let f = std::fs::File::create(&epoch_path)?;
        let mut out = std::io::BufWriter::new(f);
        writeln!(out, "epoch,train_hinge,train_acc")?;
        for e in &epochs {
            writeln!(out, "{},{},{}", e.epoch, e.train_hinge, e.train_acc)?;
        }
    }
    artifacts.push(epoch_path);

    let (train_acc, _) = batch_eval(&params, train_inputs.view(), train_labels.view())?;
    let (test_acc, _) = batch_eval(&params, test_inputs.view(), test_labels.view())?;

    let centers = mixture_centers(&dict);
    let center_slices: Vec<(Vec<f64>, f64)> =
        centers.iter().map(|(c, y)| (c.to_vec(), *y)).collect();
    let mut per_center = vec![0.0f64; centers.len()];
    for row in params.w.outer_iter() {
        let rs = row.as_slice().expect("contiguous row");
        for (ci, (c, _)) in center_slices.iter().enumerate() {
            let a = cosine(rs, c).abs();
            if a > per_center[ci] {
                per_center[ci] = a;
            }
        }
    }
    let min_best = per_center.iter().copied().fold(f64::INFINITY, f64::min);

    // scatter: neurons colored by the class of the nearest center when the
    // match is decisive, stars at each center colored by its class
    let colors: Vec<Palette> = params
        .w
        .outer_iter()
        .map(|row| {
            let rs = row.as_slice().expect("contiguous row");
            let mut best = 0.0;
            let mut label = 0.0;
            for (c, y) in &center_slices {
                let a = cosine(rs, c);
                if a.abs() > best {
                    best = a.abs();
                    label = *y;
                }
            }
            if best >= 0.5 {
                if label > 0.0 {
                    Palette::Red
                } else {
                    Palette::Orange
                }
            } else {
                Palette::Blue
            }
        })
        .collect();
    let stars: Vec<(Array1<f64>, Palette)> = centers
        .iter()
        .map(|(c, y)| (c.clone(), if *y > 0.0 { Palette::Red } else { Palette::Orange }))
        .collect();
    artifacts.extend(write_scatter(out_dir, "weights_mds", &params.w, &colors, &stars)?);

    println!(
        "gaussian mixture: train {:.4}, test {:.4}, worst center |cos| {:.3}",
        train_acc, test_acc, min_best
    );
    Ok(MixtureSummary {
        num_centers: centers.len(),
        per_center_best_abs_cosine: per_center,
        min_best_abs_cosine: min_best,
        train_accuracy: train_acc,
        test_accuracy: test_acc,
    })
}

// ---------------------------------------------------------------------------
// Oracle experiments
// ---------------------------------------------------------------------------

fn parity_oracle_spec(s: &OracleSettings, seeds: &StreamSeeds) -> FeatResult<Arc<DataSpec>> {
    let dict = make_orthonormal_dictionary(s.d, s.num_patterns, seeds.stream_seed(Stream::Dictionary))?;
    let mut rng = seeds.indexed_rng(Stream::Dictionary, 1);
    let support = sample_support(s.num_patterns, s.k, &mut rng);
    let draft = DataSpecDraft {
        dictionary: dict,
        hidden: HiddenDistribution::ParityMixture { p0: s.p0, support: support.clone() },
        rule: LabelRule::parity(support)?,
        sigma_zeta: 0.0,
        p_override: None,
    };
    Ok(Arc::new(fit_normalization(&draft, s.n_calib, seeds)?))
}

fn run_gradient_oracle(
    s: &OracleSettings,
    out_dir: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> FeatResult<GradientOracleSummary> {
    let seeds = StreamSeeds::new(s.base_seed);
    let spec = parity_oracle_spec(s, &seeds)?;
    let params = init_unbiased(s.m, &spec, &seeds)?;
    let sigma_xi = (s.k as f64).powf(-1.5);
    let report = estimate_gradient_components(
        &spec,
        &params,
        sigma_xi,
        &ClassWeights::balanced(),
        s.n_mc,
        &seeds,
    )?;

    let support: HashSet<usize> = spec.rule.support.iter().copied().collect();
    let zeroed: HashSet<usize> = report.zero_coefficient_neurons.iter().copied().collect();
    let z_of = |v: f64, se: f64| {
        if se > 0.0 {
            v / se
        } else if v > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut min_support_z = f64::INFINITY;
    for i in 0..report.per_neuron.nrows() {
        if zeroed.contains(&i) {
            continue;
        }
        for &j in &spec.rule.support {
            let z = z_of(report.per_neuron[[i, j]], report.per_neuron_se[[i, j]]);
            min_support_z = min_support_z.min(z);
        }
    }
    let mut min_aggregate_z = f64::INFINITY;
    for &j in &spec.rule.support {
        min_aggregate_z = min_aggregate_z.min(z_of(report.aggregate[j], report.aggregate_se[j]));
    }

    let comp_path = out_dir.join("gradient_components.csv");
    {
        let mut w = csv::Writer::from_path(&comp_path)?;
        w.write_record(["pattern", "estimate", "se", "in_support"])?;
        for j in 0..report.aggregate.len() {
            w.write_record([
                format!("{j}"),
                format!("{}", report.aggregate[j]),
                format!("{}", report.aggregate_se[j]),
                format!("{}", support.contains(&j)),
            ])?;
        }
        w.flush()?;
    }
    artifacts.push(comp_path);

    println!(
        "gradient oracle: min support z {:.2}, snr {:.2}",
        min_support_z, report.snr
    );
    Ok(GradientOracleSummary {
        support: spec.rule.support.clone(),
        min_support_z,
        min_aggregate_z,
        snr: report.snr,
        mean_abs_support: report.mean_abs_support,
        mean_abs_off_support: report.mean_abs_off_support,
        n_samples: report.n_samples,
    })
}

fn run_sq_check(num_patterns: usize, k: usize) -> FeatResult<SqCheckSummary> {
    let report = parity_family_orthogonality(num_patterns, k)?;
    let expected = binomial(num_patterns, k);
    println!(
        "sq check: family size {} (expected {}), max cross correlation {}",
        report.family_size, expected, report.max_cross_correlation
    );
    Ok(SqCheckSummary {
        num_patterns,
        k,
        family_size: report.family_size,
        expected_family_size: expected,
        max_cross_correlation: report.max_cross_correlation,
    })
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

fn reference_max_error(spec: &Arc<DataSpec>, n_check: usize, seeds: &StreamSeeds) -> FeatResult<f64> {
    let net = build_reference_network(spec)?;
    let data = gen_dataset(spec, n_check, seeds, false)?;
    let mut max_err = 0.0f64;
    for i in 0..data.len() {
        let g = forward(&net.params, data.inputs.row(i));
        max_err = max_err.max((g - data.labels[i]).abs());
    }
    Ok(max_err)
}

fn run_reference_check(s: &OracleSettings) -> FeatResult<ReferenceCheckSummary> {
    let seeds = StreamSeeds::new(s.base_seed);
    let parity_spec = parity_oracle_spec(s, &seeds)?;
    let parity_err = reference_max_error(&parity_spec, s.n_check, &seeds)?;

    let interval_seeds = seeds.for_repeat(1);
    let dict = make_orthonormal_dictionary(
        s.d,
        s.num_patterns,
        interval_seeds.stream_seed(Stream::Dictionary),
    )?;
    let k = s.num_patterns.min(30).max(2);
    let mut rng = interval_seeds.indexed_rng(Stream::Dictionary, 1);
    let support = sample_support(s.num_patterns, k, &mut rng);
    let mut q = vec![0.5; s.num_patterns];
    for &j in &support {
        q[j] = 2.0 / 3.0;
    }
    let lo = (2 * k) / 3;
    let draft = DataSpecDraft {
        dictionary: dict,
        hidden: HiddenDistribution::ProductBernoulli { q },
        rule: LabelRule::interval(support, lo.max(1), k)?,
        sigma_zeta: 0.0,
        p_override: None,
    };
    let interval_spec = Arc::new(fit_normalization(&draft, s.n_calib, &interval_seeds)?);
    let interval_err = reference_max_error(&interval_spec, s.n_check, &interval_seeds)?;

    println!(
        "reference check: parity max error {parity_err:.2e}, interval max error {interval_err:.2e}"
    );
    Ok(ReferenceCheckSummary {
        n_check: s.n_check,
        parity_max_abs_error: parity_err,
        interval_max_abs_error: interval_err,
    })
}

// ---------------------------------------------------------------------------
// Rendering already-aggregated reports
// ---------------------------------------------------------------------------

/// Text rendering of a report body for the terminal.
pub fn render_report(report: &ExperimentReport) -> String {
    match &report.body {
        ReportBody::Table { table } => table.render_text(),
        ReportBody::Sweep { variants } => {
            let mut out = String::new();
            for entry in variants {
                out.push_str(&format!("-- {}\n", entry.label));
                out.push_str(&entry.table.render_text());
            }
            out
        }
        ReportBody::Mixture { summary } => format!(
            "centers {}, worst |cos| {:.3}, train {:.4}, test {:.4}\n",
            summary.num_centers,
            summary.min_best_abs_cosine,
            summary.train_accuracy,
            summary.test_accuracy
        ),
        ReportBody::GradientOracle { summary } => format!(
            "min support z {:.2}, aggregate z {:.2}, snr {:.2}\n",
            summary.min_support_z, summary.min_aggregate_z, summary.snr
        ),
        ReportBody::SqCheck { summary } => format!(
            "family size {} of {}, max cross correlation {}\n",
            summary.family_size, summary.expected_family_size, summary.max_cross_correlation
        ),
        ReportBody::ReferenceCheck { summary } => format!(
            "parity max error {:.2e}, interval max error {:.2e}\n",
            summary.parity_max_abs_error, summary.interval_max_abs_error
        ),
    }
}
