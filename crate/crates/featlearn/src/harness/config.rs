//! Experiment configuration: a JSON document of optional knobs resolved
//! against per-experiment defaults.

use crate::{FeatError, FeatResult};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Recognized experiment names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Parity,
    Interval,
    NoStructure,
    DimSweep,
    ImbalanceSweep,
    SampleSweep,
    GaussianMixture,
    Codebook,
    GradientOracle,
    SqCheck,
    ReferenceCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 11] = [
        ExperimentKind::Parity,
        ExperimentKind::Interval,
        ExperimentKind::NoStructure,
        ExperimentKind::DimSweep,
        ExperimentKind::ImbalanceSweep,
        ExperimentKind::SampleSweep,
        ExperimentKind::GaussianMixture,
        ExperimentKind::Codebook,
        ExperimentKind::GradientOracle,
        ExperimentKind::SqCheck,
        ExperimentKind::ReferenceCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Parity => "parity",
            ExperimentKind::Interval => "interval",
            ExperimentKind::NoStructure => "no_structure",
            ExperimentKind::DimSweep => "dim_sweep",
            ExperimentKind::ImbalanceSweep => "imbalance_sweep",
            ExperimentKind::SampleSweep => "sample_sweep",
            ExperimentKind::GaussianMixture => "gaussian_mixture",
            ExperimentKind::Codebook => "codebook",
            ExperimentKind::GradientOracle => "gradient_oracle",
            ExperimentKind::SqCheck => "sq_check",
            ExperimentKind::ReferenceCheck => "reference_check",
        }
    }

    pub fn parse(s: &str) -> FeatResult<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FeatError::Config(format!("unknown experiment '{s}'")))
    }

    pub fn summary(self) -> &'static str {
        match self {
            ExperimentKind::Parity => "six-method accuracy table on parity-mixture data",
            ExperimentKind::Interval => "six-method accuracy table on interval labels",
            ExperimentKind::NoStructure => "method table on patternless uniform inputs",
            ExperimentKind::DimSweep => "parity table at several input dimensions",
            ExperimentKind::ImbalanceSweep => "parity table at several class imbalance ratios",
            ExperimentKind::SampleSweep => "parity table at several training-set sizes",
            ExperimentKind::GaussianMixture => {
                "momentum-SGD network on Gaussian clusters; center coverage"
            }
            ExperimentKind::Codebook => "method table on codeword-labeled hidden vectors",
            ExperimentKind::GradientOracle => "first-step gradient component estimates",
            ExperimentKind::SqCheck => "exact pairwise orthogonality of a parity family",
            ExperimentKind::ReferenceCheck => "closed-form reference network exactness check",
        }
    }
}

/// One JSON document of knobs; anything unset falls back to the experiment's
/// defaults. Unknown keys are rejected so typos surface as config errors.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,

    // data geometry
    pub d: Option<usize>,
    pub num_patterns: Option<usize>,
    pub k: Option<usize>,
    pub p0: Option<f64>,
    pub sigma_zeta: Option<f64>,
    /// Coherence bound for a non-orthonormal dictionary; unset keeps the
    /// orthonormal construction.
    pub coherence: Option<f64>,
    pub p_override: Option<f64>,

    // dataset sizes
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub n_calib: Option<usize>,

    // network and schedule
    pub m: Option<usize>,
    pub t_steps: Option<usize>,
    pub full_batch: Option<usize>,
    pub minibatch: Option<usize>,
    pub eta_late: Option<f64>,
    pub lambda_late: Option<f64>,
    pub sigma_xi: Option<f64>,

    // linear baseline fits
    pub eta_linear: Option<f64>,
    pub linear_eval_stride: Option<usize>,
    pub eval_stride: Option<usize>,

    // seeds and repetition
    pub base_seed: Option<u64>,
    pub repeats: Option<usize>,

    // imbalance
    pub neg_fraction: Option<f64>,
    pub neg_fractions: Option<Vec<f64>>,

    // sweeps
    pub dims: Option<Vec<usize>>,
    /// (n_train, m) pairs for the sample-size sweep.
    pub sample_sizes: Option<Vec<(usize, usize)>>,

    // gaussian mixture
    pub sigma_r: Option<f64>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub init_scale: Option<f64>,

    // codebook
    pub words_per_class: Option<usize>,
    pub background: Option<f64>,

    // oracles
    pub n_mc: Option<usize>,
    pub n_check: Option<usize>,

    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn named(kind: ExperimentKind) -> Self {
        Self { experiment: kind.name().to_string(), ..Self::default() }
    }

    pub fn from_json_file(path: &Path) -> FeatResult<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| FeatError::Config(format!("{}: {e}", path.display())))
    }

    pub fn kind(&self) -> FeatResult<ExperimentKind> {
        ExperimentKind::parse(&self.experiment)
    }

    /// Echo used for provenance in reports.
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Concrete settings for one table-style run (parity-like experiments).
#[derive(Debug, Clone, Serialize)]
pub struct TableSettings {
    pub d: usize,
    pub num_patterns: usize,
    pub k: usize,
    pub p0: f64,
    pub sigma_zeta: f64,
    pub coherence: Option<f64>,
    pub p_override: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_calib: usize,
    pub m: usize,
    pub t_steps: usize,
    pub full_batch: usize,
    pub minibatch: usize,
    pub eta_late: Option<f64>,
    pub lambda_late: Option<f64>,
    pub sigma_xi: Option<f64>,
    pub eta_linear: f64,
    pub eval_stride: usize,
    pub linear_eval_stride: usize,
    pub base_seed: u64,
    pub repeats: usize,
    /// Forced −1 label fraction; unset samples the distribution as is.
    pub neg_fraction: Option<f64>,
    pub words_per_class: usize,
    pub background: f64,
}

impl TableSettings {
    fn parity_defaults(cfg: &ExperimentConfig) -> Self {
        TableSettings {
            d: cfg.d.unwrap_or(500),
            num_patterns: cfg.num_patterns.unwrap_or(100),
            k: cfg.k.unwrap_or(5),
            p0: cfg.p0.unwrap_or(0.5),
            sigma_zeta: cfg.sigma_zeta.unwrap_or(0.0),
            coherence: cfg.coherence,
            p_override: cfg.p_override,
            n_train: cfg.n_train.unwrap_or(50_000),
            n_test: cfg.n_test.unwrap_or(10_000),
            n_calib: cfg.n_calib.unwrap_or(100_000),
            m: cfg.m.unwrap_or(300),
            t_steps: cfg.t_steps.unwrap_or(600),
            full_batch: cfg.full_batch.unwrap_or(50_000),
            minibatch: cfg.minibatch.unwrap_or(1000),
            eta_late: cfg.eta_late,
            // the k³/(σ_x·m^{1/3}) schedule default decays the tail to zero
            // over hundreds of steps (2ηλ ≈ 0.046 per step at k=5); table
            // runs pin a value small enough to keep the best model alive
            lambda_late: Some(cfg.lambda_late.unwrap_or(1e-4)),
            sigma_xi: cfg.sigma_xi,
            eta_linear: cfg.eta_linear.unwrap_or(0.05),
            eval_stride: cfg.eval_stride.unwrap_or(20),
            linear_eval_stride: cfg.linear_eval_stride.unwrap_or(50),
            base_seed: cfg.base_seed.unwrap_or(17),
            repeats: cfg.repeats.unwrap_or(5),
            neg_fraction: cfg.neg_fraction,
            words_per_class: cfg.words_per_class.unwrap_or(50),
            background: cfg.background.unwrap_or(0.5),
        }
    }

    fn interval_defaults(cfg: &ExperimentConfig) -> Self {
        let mut s = Self::parity_defaults(cfg);
        s.k = cfg.k.unwrap_or(30);
        s.m = cfg.m.unwrap_or(100);
        s.t_steps = cfg.t_steps.unwrap_or(200);
        // interval features sit ~50x lower than parity's, so the hinge heads
        // need a hotter rate; 0.5 is the sweep optimum for the tangent head
        s.eta_linear = cfg.eta_linear.unwrap_or(0.5);
        s
    }

    pub fn validate(&self) -> FeatResult<()> {
        let positives = [
            ("d", self.d),
            ("num_patterns", self.num_patterns),
            ("k", self.k),
            ("n_train", self.n_train),
            ("n_test", self.n_test),
            ("n_calib", self.n_calib),
            ("m", self.m),
            ("t_steps", self.t_steps),
            ("full_batch", self.full_batch),
            ("minibatch", self.minibatch),
            ("repeats", self.repeats),
        ];
        for (name, v) in positives {
            if v == 0 {
                return Err(FeatError::Config(format!("{name} must be positive")));
            }
        }
        if self.k > self.num_patterns {
            return Err(FeatError::Config(format!(
                "k = {} exceeds num_patterns = {}",
                self.k, self.num_patterns
            )));
        }
        if self.eta_linear <= 0.0 {
            return Err(FeatError::Config("eta_linear must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.p0) || self.p0 == 0.0 {
            return Err(FeatError::Config(format!("p0 must be in (0,1), got {}", self.p0)));
        }
        Ok(())
    }
}

/// Settings for the Gaussian-cluster run.
#[derive(Debug, Clone, Serialize)]
pub struct MixtureSettings {
    pub d: usize,
    pub k: usize,
    pub sigma_r: f64,
    pub m: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub init_scale: f64,
    pub base_seed: u64,
}

/// Settings for the oracle-style experiments.
#[derive(Debug, Clone, Serialize)]
pub struct OracleSettings {
    pub d: usize,
    pub num_patterns: usize,
    pub k: usize,
    pub p0: f64,
    pub n_calib: usize,
    pub n_mc: usize,
    pub n_check: usize,
    pub m: usize,
    pub base_seed: u64,
}

/// Fully resolved plan for an experiment run.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "plan", rename_all = "snake_case")]
pub enum ResolvedPlan {
    Table { kind: ExperimentKind, settings: TableSettings },
    /// Named variants run as separate tables (sweeps).
    Sweep { kind: ExperimentKind, variants: Vec<(String, TableSettings)> },
    Mixture(MixtureSettings),
    GradientOracle(OracleSettings),
    SqCheck { num_patterns: usize, k: usize },
    ReferenceCheck(OracleSettings),
}

pub fn resolve(cfg: &ExperimentConfig) -> FeatResult<ResolvedPlan> {
    let kind = cfg.kind()?;
    let plan = match kind {
        ExperimentKind::Parity => {
            ResolvedPlan::Table { kind, settings: TableSettings::parity_defaults(cfg) }
        }
        ExperimentKind::Interval => {
            ResolvedPlan::Table { kind, settings: TableSettings::interval_defaults(cfg) }
        }
        ExperimentKind::NoStructure => {
            let mut s = TableSettings::parity_defaults(cfg);
            // uniform patterns have no parity correlation; p is pinned to the
            // structured experiment's analytic value so the init matches
            s.p_override = Some(cfg.p_override.unwrap_or(0.25));
            ResolvedPlan::Table { kind, settings: s }
        }
        ExperimentKind::Codebook => {
            let mut s = TableSettings::parity_defaults(cfg);
            s.num_patterns = cfg.num_patterns.unwrap_or(250);
            s.k = cfg.k.unwrap_or(50);
            // single-coordinate correlation of a random codebook has an
            // arbitrary sign, so the init scale is pinned up front
            s.p_override = Some(cfg.p_override.unwrap_or(0.25));
            ResolvedPlan::Table { kind, settings: s }
        }
        ExperimentKind::DimSweep => {
            let dims = cfg.dims.clone().unwrap_or_else(|| vec![100, 2000]);
            if dims.is_empty() {
                return Err(FeatError::Config("dims must be nonempty".into()));
            }
            let variants = dims
                .into_iter()
                .map(|d| {
                    let mut s = TableSettings::parity_defaults(cfg);
                    s.d = d;
                    s.repeats = cfg.repeats.unwrap_or(1);
                    (format!("d{d}"), s)
                })
                .collect();
            ResolvedPlan::Sweep { kind, variants }
        }
        ExperimentKind::ImbalanceSweep => {
            let fracs = cfg.neg_fractions.clone().unwrap_or_else(|| vec![0.8, 0.9]);
            if fracs.is_empty() {
                return Err(FeatError::Config("neg_fractions must be nonempty".into()));
            }
            let variants = fracs
                .into_iter()
                .map(|f| {
                    let mut s = TableSettings::parity_defaults(cfg);
                    s.neg_fraction = Some(f);
                    s.repeats = cfg.repeats.unwrap_or(1);
                    (format!("neg{f}"), s)
                })
                .collect();
            ResolvedPlan::Sweep { kind, variants }
        }
        ExperimentKind::SampleSweep => {
            // the smallest-sample variant also shrinks the network, which is
            // what keeps it from overfitting
            let sizes = cfg
                .sample_sizes
                .clone()
                .unwrap_or_else(|| vec![(25_000, 300), (10_000, 50)]);
            if sizes.is_empty() {
                return Err(FeatError::Config("sample_sizes must be nonempty".into()));
            }
            let variants = sizes
                .into_iter()
                .map(|(n, m)| {
                    let mut s = TableSettings::parity_defaults(cfg);
                    s.n_train = n;
                    s.m = m;
                    s.full_batch = s.full_batch.min(n);
                    s.repeats = cfg.repeats.unwrap_or(1);
                    (format!("n{n}"), s)
                })
                .collect();
            ResolvedPlan::Sweep { kind, variants }
        }
        ExperimentKind::GaussianMixture => ResolvedPlan::Mixture(MixtureSettings {
            d: cfg.d.unwrap_or(25),
            k: cfg.k.unwrap_or(4),
            sigma_r: cfg.sigma_r.unwrap_or(0.7),
            m: cfg.m.unwrap_or(800),
            n_train: cfg.n_train.unwrap_or(8_000),
            n_test: cfg.n_test.unwrap_or(2_000),
            lr: cfg.lr.unwrap_or(0.05),
            momentum: cfg.momentum.unwrap_or(0.95),
            epochs: cfg.epochs.unwrap_or(50),
            batch_size: cfg.batch_size.unwrap_or(100),
            init_scale: cfg.init_scale.unwrap_or(0.05),
            base_seed: cfg.base_seed.unwrap_or(17),
        }),
        ExperimentKind::GradientOracle => ResolvedPlan::GradientOracle(oracle_settings(cfg)),
        ExperimentKind::SqCheck => ResolvedPlan::SqCheck {
            num_patterns: cfg.num_patterns.unwrap_or(6),
            k: cfg.k.unwrap_or(3),
        },
        ExperimentKind::ReferenceCheck => ResolvedPlan::ReferenceCheck(oracle_settings(cfg)),
    };
    match &plan {
        ResolvedPlan::Table { settings, .. } => settings.validate()?,
        ResolvedPlan::Sweep { variants, .. } => {
            for (_, s) in variants {
                s.validate()?;
            }
        }
        ResolvedPlan::Mixture(s) => {
            if s.d == 0 || s.k == 0 || s.k > s.d || s.m == 0 {
                return Err(FeatError::Config("mixture needs 0 < k <= d and m > 0".into()));
            }
            if s.epochs == 0 || s.batch_size == 0 {
                return Err(FeatError::Config("epochs and batch_size must be positive".into()));
            }
        }
        ResolvedPlan::GradientOracle(s) | ResolvedPlan::ReferenceCheck(s) => {
            if s.k > s.num_patterns || s.num_patterns > s.d {
                return Err(FeatError::Config(
                    "oracle settings need k <= num_patterns <= d".into(),
                ));
            }
        }
        ResolvedPlan::SqCheck { num_patterns, k } => {
            if *k == 0 || k > num_patterns {
                return Err(FeatError::Config("sq_check needs 0 < k <= num_patterns".into()));
            }
        }
    }
    Ok(plan)
}

fn oracle_settings(cfg: &ExperimentConfig) -> OracleSettings {
    OracleSettings {
        d: cfg.d.unwrap_or(500),
        num_patterns: cfg.num_patterns.unwrap_or(100),
        k: cfg.k.unwrap_or(5),
        p0: cfg.p0.unwrap_or(0.5),
        n_calib: cfg.n_calib.unwrap_or(100_000),
        n_mc: cfg.n_mc.unwrap_or(200_000),
        n_check: cfg.n_check.unwrap_or(10_000),
        m: cfg.m.unwrap_or(300),
        base_seed: cfg.base_seed.unwrap_or(17),
    }
}

/// Output root precedence: CLI flag, then config field, then FEATLEARN_OUT,
/// then ./featlearn_out.
pub fn resolve_out_dir(cli: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.out_dir {
        return p.clone();
    }
    if let Some(p) = std::env::var_os("FEATLEARN_OUT") {
        return PathBuf::from(p);
    }
    PathBuf::from("featlearn_out")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_experiment_is_config_error() {
        let cfg = ExperimentConfig { experiment: "parit".into(), ..Default::default() };
        assert!(matches!(resolve(&cfg), Err(FeatError::Config(_))));
    }

    #[test]
    fn parity_defaults_match_published_settings() {
        let cfg = ExperimentConfig::named(ExperimentKind::Parity);
        match resolve(&cfg).unwrap() {
            ResolvedPlan::Table { settings: s, .. } => {
                assert_eq!(
                    (s.d, s.num_patterns, s.k, s.m, s.t_steps),
                    (500, 100, 5, 300, 600)
                );
                assert_eq!((s.n_train, s.full_batch, s.minibatch), (50_000, 50_000, 1000));
                assert_eq!(s.p0, 0.5);
                assert_eq!(s.repeats, 5);
            }
            other => panic!("wrong plan {other:?}"),
        }
    }

    #[test]
    fn interval_defaults_shrink_network() {
        let cfg = ExperimentConfig::named(ExperimentKind::Interval);
        match resolve(&cfg).unwrap() {
            ResolvedPlan::Table { settings: s, .. } => {
                assert_eq!((s.k, s.m, s.t_steps), (30, 100, 200));
                assert!(s.lambda_late.is_some(), "interval pins a stable decay");
            }
            other => panic!("wrong plan {other:?}"),
        }
    }

    #[test]
    fn overrides_flow_through() {
        let mut cfg = ExperimentConfig::named(ExperimentKind::Parity);
        cfg.d = Some(64);
        cfg.repeats = Some(2);
        match resolve(&cfg).unwrap() {
            ResolvedPlan::Table { settings: s, .. } => {
                assert_eq!(s.d, 64);
                assert_eq!(s.repeats, 2);
            }
            other => panic!("wrong plan {other:?}"),
        }
    }

    #[test]
    fn bad_knobs_are_rejected() {
        let mut cfg = ExperimentConfig::named(ExperimentKind::Parity);
        cfg.k = Some(0);
        assert!(matches!(resolve(&cfg), Err(FeatError::Config(_))));
        let mut cfg = ExperimentConfig::named(ExperimentKind::Parity);
        cfg.k = Some(101);
        assert!(matches!(resolve(&cfg), Err(FeatError::Config(_))));
    }

    #[test]
    fn unknown_json_key_is_rejected() {
        let text = r#"{"experiment": "parity", "dd": 3}"#;
        let parsed: Result<ExperimentConfig, _> = serde_json::from_str(text);
        assert!(parsed.is_err());
    }

    #[test]
    fn sample_sweep_caps_full_batch() {
        let cfg = ExperimentConfig::named(ExperimentKind::SampleSweep);
        match resolve(&cfg).unwrap() {
            ResolvedPlan::Sweep { variants, .. } => {
                assert_eq!(variants.len(), 2);
                assert_eq!(variants[1].1.n_train, 10_000);
                assert_eq!(variants[1].1.full_batch, 10_000);
                assert_eq!(variants[1].1.m, 50);
            }
            other => panic!("wrong plan {other:?}"),
        }
    }
}
