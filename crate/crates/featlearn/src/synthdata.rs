//! Dictionaries, hidden-vector families, labels, and normalized datasets.
//!
//! An input is x̃ = M·φ̃ + ζ: a binary hidden vector φ̃ picks dictionary
//! columns, optional per-coordinate Gaussian noise ζ is added, and the
//! result is normalized with empirically fitted stats. The label depends
//! only on how many of the `support` patterns are present.
//!
//! Sampling is keyed per (stream, sample index), so datasets are
//! bit-identical for a given seed regardless of thread count or how many
//! passes regenerate the same index.

use crate::numeric::{chunk_ranges, tree_combine};
use crate::rng::{mix, Stream, StreamSeeds};
use crate::{FeatError, FeatResult};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Dictionary
// ---------------------------------------------------------------------------

/// d×D matrix of unit-norm pattern directions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dictionary {
    /// Shape d × D; column j is pattern direction j.
    pub columns: Array2<f64>,
    /// Coherence bound μ: pairwise |⟨col_i, col_j⟩| ≤ μ/√d. 0 means orthonormal.
    pub coherence: f64,
}

impl Dictionary {
    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn num_patterns(&self) -> usize {
        self.columns.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.columns.column(j)
    }

    /// Unit norms, coherence bound, and (for μ=0) Gram = identity.
    pub fn validate(&self) -> FeatResult<()> {
        let d = self.dim();
        let cap_d = self.num_patterns();
        for j in 0..cap_d {
            let n = self.column(j).dot(&self.column(j)).sqrt();
            if (n - 1.0).abs() > 1e-10 {
                return Err(FeatError::Param(format!("column {j} norm {n} != 1")));
            }
        }
        let bound = if self.coherence == 0.0 { 0.0 } else { self.coherence / (d as f64).sqrt() };
        for i in 0..cap_d {
            for j in (i + 1)..cap_d {
                let dot = self.column(i).dot(&self.column(j)).abs();
                if dot > bound + 1e-10 {
                    return Err(FeatError::Param(format!(
                        "columns {i},{j} inner product {dot} exceeds bound {bound}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Orthonormal columns from a seeded Gaussian matrix (modified Gram-Schmidt
/// with one reorthogonalization pass). Requires D ≤ d.
pub fn make_orthonormal_dictionary(d: usize, cap_d: usize, seed: u64) -> FeatResult<Dictionary> {
    if cap_d > d {
        return Err(FeatError::Dimension(format!(
            "orthonormal dictionary needs D <= d, got D={cap_d} d={d}"
        )));
    }
    if d == 0 || cap_d == 0 {
        return Err(FeatError::Param("d and D must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed));
    let mut cols: Vec<Array1<f64>> = Vec::with_capacity(cap_d);
    for j in 0..cap_d {
        let mut col = Array1::zeros(d);
        // resample in the (measure-zero) event the draw degenerates
        for attempt in 0..64 {
            for v in col.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for _pass in 0..2 {
                for u in &cols {
                    let proj = col.dot(u);
                    col.scaled_add(-proj, u);
                }
            }
            let norm = col.dot(&col).sqrt();
            if norm > 1e-8 {
                col /= norm;
                break;
            }
            if attempt == 63 {
                return Err(FeatError::Feasibility(format!(
                    "could not orthogonalize column {j}"
                )));
            }
        }
        cols.push(col);
    }
    let mut columns = Array2::zeros((d, cap_d));
    for (j, c) in cols.iter().enumerate() {
        columns.column_mut(j).assign(c);
    }
    let dict = Dictionary { columns, coherence: 0.0 };
    dict.validate()?;
    Ok(dict)
}

/// Unit columns with pairwise |⟨col_i, col_j⟩| ≤ μ/√d, built by rejection:
/// each column is a normalized Gaussian draw, resampled while it violates
/// the bound against the columns accepted so far.
pub fn make_incoherent_dictionary(
    d: usize,
    cap_d: usize,
    mu: f64,
    seed: u64,
    max_attempts: usize,
) -> FeatResult<Dictionary> {
    if mu <= 0.0 {
        return Err(FeatError::Param(format!("mu must be > 0, got {mu}")));
    }
    if d == 0 || cap_d == 0 {
        return Err(FeatError::Param("d and D must be positive".into()));
    }
    let bound = mu / (d as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed));
    let mut cols: Vec<Array1<f64>> = Vec::with_capacity(cap_d);
    for j in 0..cap_d {
        let mut accepted = false;
        for _attempt in 0..max_attempts {
            let mut col = Array1::<f64>::zeros(d);
            for v in col.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = col.dot(&col).sqrt();
            if norm < 1e-12 {
                continue;
            }
            col /= norm;
            if cols.iter().all(|u| col.dot(u).abs() <= bound) {
                cols.push(col);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(FeatError::Feasibility(format!(
                "no column {j} satisfying coherence {mu} within {max_attempts} attempts"
            )));
        }
    }
    let mut columns = Array2::zeros((d, cap_d));
    for (j, c) in cols.iter().enumerate() {
        columns.column_mut(j).assign(c);
    }
    let dict = Dictionary { columns, coherence: mu };
    dict.validate()?;
    Ok(dict)
}

// ---------------------------------------------------------------------------
// Hidden distributions and labels
// ---------------------------------------------------------------------------

/// Distribution family of the hidden indicator vector φ̃ ∈ {0,1}^D.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HiddenDistribution {
    /// Independent coordinates with per-coordinate success probabilities.
    ProductBernoulli { q: Vec<f64> },
    /// With weight p0 all coordinates are i.i.d. Bernoulli(1/2); with weight
    /// 1−p0 the support is all-ones or all-zeros (probability 1/2 each) and
    /// the off-support coordinates are i.i.d. Bernoulli(p0/(2−2p0)).
    ParityMixture { p0: f64, support: Vec<usize> },
    /// All coordinates i.i.d. Bernoulli(1/2); labels carry no usable
    /// single-coordinate correlation.
    UniformNoStructure,
    /// Inputs on the support are codewords drawn uniformly from the class
    /// lists (class itself uniform ±1); off-support coordinates are i.i.d.
    /// Bernoulli(background). Labels come from the drawn codeword's class.
    Codebook {
        support: Vec<usize>,
        plus_words: Vec<Vec<u8>>,
        minus_words: Vec<Vec<u8>>,
        background: f64,
    },
}

impl HiddenDistribution {
    /// Check parameters against the ambient dimension and label rule.
    pub fn validate(&self, cap_d: usize, rule: &LabelRule) -> FeatResult<()> {
        match self {
            HiddenDistribution::ProductBernoulli { q } => {
                if q.len() != cap_d {
                    return Err(FeatError::Dimension(format!(
                        "q has {} entries, expected D={cap_d}",
                        q.len()
                    )));
                }
                if q.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(FeatError::Param("q entries must lie in [0,1]".into()));
                }
            }
            HiddenDistribution::ParityMixture { p0, support } => {
                if !(*p0 > 0.0 && *p0 <= 1.0) {
                    return Err(FeatError::Param(format!("p0 must be in (0,1], got {p0}")));
                }
                if *p0 < 1.0 && p0 / (2.0 - 2.0 * p0) > 1.0 {
                    return Err(FeatError::Param(format!(
                        "p0={p0} makes the off-support probability exceed 1"
                    )));
                }
                if support != &rule.support {
                    return Err(FeatError::Param(
                        "ParityMixture support must equal the label rule support".into(),
                    ));
                }
            }
            HiddenDistribution::UniformNoStructure => {}
            HiddenDistribution::Codebook { support, plus_words, minus_words, background } => {
                if support != &rule.support {
                    return Err(FeatError::Param(
                        "Codebook support must equal the label rule support".into(),
                    ));
                }
                if !(0.0..=1.0).contains(background) {
                    return Err(FeatError::Param("background probability must be in [0,1]".into()));
                }
                let k = support.len();
                let mut seen = std::collections::HashSet::new();
                for w in plus_words.iter().chain(minus_words) {
                    if w.len() != k {
                        return Err(FeatError::Dimension(format!(
                            "codeword length {} != k={k}",
                            w.len()
                        )));
                    }
                    if w.iter().any(|&b| b > 1) {
                        return Err(FeatError::Param("codewords must be binary".into()));
                    }
                    if !seen.insert(w.clone()) {
                        return Err(FeatError::Param("codewords must be distinct".into()));
                    }
                }
                if plus_words.is_empty() || minus_words.is_empty() {
                    return Err(FeatError::Param("both codeword classes must be nonempty".into()));
                }
            }
        }
        if let Some(&max) = rule.support.iter().max() {
            if max >= cap_d {
                return Err(FeatError::Dimension(format!(
                    "support index {max} out of range for D={cap_d}"
                )));
            }
        }
        Ok(())
    }

    /// E[Σ_{j∈support} φ̃_j], analytic for every family.
    pub fn mean_support_sum(&self, rule: &LabelRule) -> f64 {
        let k = rule.support.len() as f64;
        match self {
            HiddenDistribution::ProductBernoulli { q } => {
                rule.support.iter().map(|&j| q[j]).sum()
            }
            // both mixture components have mean k/2 on the support
            HiddenDistribution::ParityMixture { .. } => k / 2.0,
            HiddenDistribution::UniformNoStructure => k / 2.0,
            HiddenDistribution::Codebook { plus_words, minus_words, .. } => {
                let mean_pop = |ws: &Vec<Vec<u8>>| {
                    ws.iter().map(|w| w.iter().map(|&b| b as f64).sum::<f64>()).sum::<f64>()
                        / ws.len() as f64
                };
                0.5 * mean_pop(plus_words) + 0.5 * mean_pop(minus_words)
            }
        }
    }
}

/// One draw of φ̃ from the family. Draw order is fixed per family so results
/// are reproducible from the rng alone.
pub fn sample_hidden(dist: &HiddenDistribution, cap_d: usize, rng: &mut impl Rng) -> Vec<u8> {
    let mut phi = vec![0u8; cap_d];
    match dist {
        HiddenDistribution::ProductBernoulli { q } => {
            for (j, slot) in phi.iter_mut().enumerate() {
                *slot = u8::from(rng.gen::<f64>() < q[j]);
            }
        }
        HiddenDistribution::ParityMixture { p0, support } => {
            let uniform_component = rng.gen::<f64>() < *p0;
            if uniform_component {
                for slot in phi.iter_mut() {
                    *slot = u8::from(rng.gen::<f64>() < 0.5);
                }
            } else {
                let ones = rng.gen::<f64>() < 0.5;
                for &j in support {
                    phi[j] = u8::from(ones);
                }
                let q_off = p0 / (2.0 - 2.0 * p0);
                let mut in_support = vec![false; cap_d];
                for &j in support {
                    in_support[j] = true;
                }
                for (j, slot) in phi.iter_mut().enumerate() {
                    if !in_support[j] {
                        *slot = u8::from(rng.gen::<f64>() < q_off);
                    }
                }
            }
        }
        HiddenDistribution::UniformNoStructure => {
            for slot in phi.iter_mut() {
                *slot = u8::from(rng.gen::<f64>() < 0.5);
            }
        }
        HiddenDistribution::Codebook { support, plus_words, minus_words, background } => {
            let plus = rng.gen::<f64>() < 0.5;
            let words = if plus { plus_words } else { minus_words };
            let w = &words[rng.gen_range(0..words.len())];
            for (&j, &bit) in support.iter().zip(w) {
                phi[j] = bit;
            }
            let mut in_support = vec![false; cap_d];
            for &j in support {
                in_support[j] = true;
            }
            for (j, slot) in phi.iter_mut().enumerate() {
                if !in_support[j] {
                    *slot = u8::from(rng.gen::<f64>() < *background);
                }
            }
        }
    }
    phi
}

/// Relevant index set plus the membership set over presence counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRule {
    /// Sorted relevant indices, |support| = k.
    pub support: Vec<usize>,
    /// Counts mapped to label +1; subset of {0, …, k}.
    pub positive_counts: Vec<usize>,
}

impl LabelRule {
    pub fn new(mut support: Vec<usize>, mut positive_counts: Vec<usize>) -> FeatResult<Self> {
        support.sort_unstable();
        support.dedup();
        positive_counts.sort_unstable();
        positive_counts.dedup();
        let rule = Self { support, positive_counts };
        rule.validate()?;
        Ok(rule)
    }

    /// Odd presence counts map to +1.
    pub fn parity(support: Vec<usize>) -> FeatResult<Self> {
        let k = support.len();
        Self::new(support, (1..=k).step_by(2).collect())
    }

    /// Counts in [lo, hi] map to +1.
    pub fn interval(support: Vec<usize>, lo: usize, hi: usize) -> FeatResult<Self> {
        Self::new(support, (lo..=hi).collect())
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn validate(&self) -> FeatResult<()> {
        if self.support.is_empty() {
            return Err(FeatError::Param("support must be nonempty".into()));
        }
        let k = self.k();
        if self.positive_counts.iter().any(|&c| c > k) {
            return Err(FeatError::Param(format!("positive counts must lie in 0..={k}")));
        }
        Ok(())
    }

    fn contains_count(&self, count: usize) -> bool {
        self.positive_counts.binary_search(&count).is_ok()
    }
}

/// +1 iff the number of present support patterns is in the membership set.
pub fn label(phi: &[u8], rule: &LabelRule) -> f64 {
    let count = rule.support.iter().filter(|&&j| phi[j] == 1).count();
    if rule.contains_count(count) {
        1.0
    } else {
        -1.0
    }
}

/// Prepared labeler: count rule for most families, codeword-class lookup for
/// codebooks (whose class assignments a count rule cannot express).
pub enum Labeler {
    Rule(LabelRule),
    Codebook { support: Vec<usize>, classes: HashMap<Vec<u8>, f64> },
}

impl Labeler {
    pub fn label(&self, phi: &[u8]) -> f64 {
        match self {
            Labeler::Rule(rule) => label(phi, rule),
            Labeler::Codebook { support, classes } => {
                let word: Vec<u8> = support.iter().map(|&j| phi[j]).collect();
                *classes.get(&word).expect("sampled codeword must be in the codebook")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// DataSpec
// ---------------------------------------------------------------------------

/// Everything needed to sample, before normalization stats exist.
#[derive(Debug, Clone)]
pub struct DataSpecDraft {
    pub dictionary: Dictionary,
    pub hidden: HiddenDistribution,
    pub rule: LabelRule,
    /// Ambient per-coordinate Gaussian noise std.
    pub sigma_zeta: f64,
    /// Use this label-correlation value instead of the calibration estimate.
    /// Needed for families whose single-coordinate correlation vanishes
    /// (no-structure ablations) or can be nonpositive (random codebooks).
    pub p_override: Option<f64>,
}

/// Finalized sampling spec with fitted normalization stats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSpec {
    pub dictionary: Dictionary,
    pub hidden: HiddenDistribution,
    pub rule: LabelRule,
    pub sigma_zeta: f64,
    /// Fitted E[x̃].
    pub mu_x: Array1<f64>,
    /// Fitted scale: σ_x² = E Σ_i (x̃_i − E x̃_i)².
    pub sigma_x: f64,
    /// Label correlation p = mean over support of E[yφ̃_i] − E[y]E[φ̃_i].
    pub p: f64,
}

impl DataSpec {
    pub fn dim(&self) -> usize {
        self.dictionary.dim()
    }

    pub fn num_patterns(&self) -> usize {
        self.dictionary.num_patterns()
    }

    pub fn labeler(&self) -> Labeler {
        match &self.hidden {
            HiddenDistribution::Codebook { support, plus_words, minus_words, .. } => {
                let mut classes = HashMap::new();
                for w in plus_words {
                    classes.insert(w.clone(), 1.0);
                }
                for w in minus_words {
                    classes.insert(w.clone(), -1.0);
                }
                Labeler::Codebook { support: support.clone(), classes }
            }
            _ => Labeler::Rule(self.rule.clone()),
        }
    }

    /// Σ_{j∈support} col_j, the direction feature learning should find.
    pub fn target_direction(&self) -> Array1<f64> {
        let mut t = Array1::zeros(self.dim());
        for &j in &self.rule.support {
            t += &self.dictionary.column(j);
        }
        t
    }

    /// ⟨target, μ_x⟩: the support-count mean implied by the fitted stats.
    /// This is what exact constructions must subtract, rather than the
    /// analytic E[Σφ̃_A], so they invert the normalization actually applied.
    pub fn effective_support_mean(&self) -> f64 {
        self.target_direction().dot(&self.mu_x)
    }

    /// M·φ̃: sum of the active dictionary columns.
    pub fn assemble(&self, phi: &[u8]) -> Array1<f64> {
        let mut x = Array1::zeros(self.dim());
        for (j, &bit) in phi.iter().enumerate() {
            if bit == 1 {
                x += &self.dictionary.column(j);
            }
        }
        x
    }

    /// Add ζ ~ N(0, σ_ζ²·I) in place.
    pub fn add_noise(&self, x: &mut Array1<f64>, rng: &mut impl Rng) {
        if self.sigma_zeta > 0.0 {
            for v in x.iter_mut() {
                *v += self.sigma_zeta * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }

    /// (x̃ − μ_x)/σ_x in place.
    pub fn normalize(&self, x: &mut Array1<f64>) {
        *x -= &self.mu_x;
        *x /= self.sigma_x;
    }

    /// One normalized sample (x, y, φ̃), with φ̃ and ζ from separate rngs.
    pub fn sample_one(
        &self,
        labeler: &Labeler,
        hidden_rng: &mut impl Rng,
        noise_rng: &mut impl Rng,
    ) -> (Array1<f64>, f64, Vec<u8>) {
        let phi = sample_hidden(&self.hidden, self.num_patterns(), hidden_rng);
        let mut x = self.assemble(&phi);
        self.add_noise(&mut x, noise_rng);
        self.normalize(&mut x);
        let y = labeler.label(&phi);
        (x, y, phi)
    }

    pub fn to_json(&self, path: &Path) -> FeatResult<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn from_json(path: &Path) -> FeatResult<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

#[derive(Clone)]
struct CalibAccum {
    sum_x: Array1<f64>,
    sum_xsq: Array1<f64>,
    sum_y: f64,
    sum_phi: Vec<f64>,
    sum_yphi: Vec<f64>,
    n: usize,
}

impl CalibAccum {
    fn new(d: usize, k: usize) -> Self {
        Self {
            sum_x: Array1::zeros(d),
            sum_xsq: Array1::zeros(d),
            sum_y: 0.0,
            sum_phi: vec![0.0; k],
            sum_yphi: vec![0.0; k],
            n: 0,
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.sum_x += &other.sum_x;
        self.sum_xsq += &other.sum_xsq;
        self.sum_y += other.sum_y;
        for (a, b) in self.sum_phi.iter_mut().zip(&other.sum_phi) {
            *a += b;
        }
        for (a, b) in self.sum_yphi.iter_mut().zip(&other.sum_yphi) {
            *a += b;
        }
        self.n += other.n;
        self
    }
}

/// Estimate normalization stats and the label correlation p from `n_calib`
/// raw draws (noise included), producing a finalized [`DataSpec`].
///
/// Errors when the estimated σ_x is nonpositive, or when the estimated p is
/// nonpositive and the draft carries no override.
pub fn fit_normalization(
    draft: &DataSpecDraft,
    n_calib: usize,
    seeds: &StreamSeeds,
) -> FeatResult<DataSpec> {
    if n_calib < 1000 {
        return Err(FeatError::Param(format!("n_calib must be >= 1000, got {n_calib}")));
    }
    draft.dictionary.validate()?;
    draft.rule.validate()?;
    draft.hidden.validate(draft.dictionary.num_patterns(), &draft.rule)?;
    if draft.sigma_zeta < 0.0 {
        return Err(FeatError::Param("sigma_zeta must be >= 0".into()));
    }

    let d = draft.dictionary.dim();
    let k = draft.rule.k();
    // pre-normalization spec for raw draws: identity stats
    let probe = DataSpec {
        dictionary: draft.dictionary.clone(),
        hidden: draft.hidden.clone(),
        rule: draft.rule.clone(),
        sigma_zeta: draft.sigma_zeta,
        mu_x: Array1::zeros(d),
        sigma_x: 1.0,
        p: 1.0,
    };
    let labeler = probe.labeler();

    let parts: Vec<CalibAccum> = chunk_ranges(n_calib)
        .into_par_iter()
        .map(|(start, end)| {
            let mut acc = CalibAccum::new(d, k);
            for i in start..end {
                // φ̃ then ζ, both from the same per-index generator
                let mut rng = seeds.indexed_rng(Stream::Calibration, i as u64);
                let phi = sample_hidden(&probe.hidden, probe.num_patterns(), &mut rng);
                let mut x = probe.assemble(&phi);
                probe.add_noise(&mut x, &mut rng);
                let y = labeler.label(&phi);
                acc.sum_x += &x;
                acc.sum_xsq += &x.mapv(|v| v * v);
                acc.sum_y += y;
                for (slot, (&j, yslot)) in
                    acc.sum_phi.iter_mut().zip(draft.rule.support.iter().zip(acc.sum_yphi.iter_mut()))
                {
                    let bit = phi[j] as f64;
                    *slot += bit;
                    *yslot += y * bit;
                }
                acc.n += 1;
            }
            acc
        })
        .collect();
    let acc = tree_combine(parts, CalibAccum::merge).expect("n_calib > 0");

    let nf = acc.n as f64;
    let mu_x = acc.sum_x / nf;
    let mut total_var = 0.0;
    for i in 0..d {
        total_var += (acc.sum_xsq[i] / nf - mu_x[i] * mu_x[i]).max(0.0);
    }
    let sigma_x = total_var.sqrt();
    if sigma_x <= 0.0 {
        return Err(FeatError::DegenerateSpec(format!(
            "estimated sigma_x = {sigma_x}; inputs carry no variance"
        )));
    }

    let mean_y = acc.sum_y / nf;
    let mut p_est = 0.0;
    for i in 0..k {
        p_est += acc.sum_yphi[i] / nf - mean_y * (acc.sum_phi[i] / nf);
    }
    p_est /= k as f64;
    let p = match draft.p_override {
        Some(p_over) => {
            if p_over <= 0.0 {
                return Err(FeatError::Param(format!("p_override must be > 0, got {p_over}")));
            }
            p_over
        }
        None => {
            if p_est <= 0.0 {
                return Err(FeatError::DegenerateSpec(format!(
                    "estimated label correlation p = {p_est} <= 0"
                )));
            }
            p_est
        }
    };

    Ok(DataSpec {
        dictionary: draft.dictionary.clone(),
        hidden: draft.hidden.clone(),
        rule: draft.rule.clone(),
        sigma_zeta: draft.sigma_zeta,
        mu_x,
        sigma_x,
        p,
    })
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Normalized samples with labels; hidden vectors optionally retained.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// n × d normalized inputs.
    pub inputs: Array2<f64>,
    /// n labels in {−1, +1}.
    pub labels: Array1<f64>,
    /// n × D hidden vectors, when retained.
    pub hidden: Option<Array2<u8>>,
    pub spec: Arc<DataSpec>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Measured Pr[y = +1].
    pub fn balance(&self) -> f64 {
        self.labels.iter().filter(|&&y| y > 0.0).count() as f64 / self.len() as f64
    }

    /// CSV export: columns x_0..x_{d−1}, y.
    pub fn to_csv(&self, path: &Path) -> FeatResult<()> {
        let f = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(f);
        let d = self.inputs.ncols();
        let header: Vec<String> =
            (0..d).map(|i| format!("x_{i}")).chain(std::iter::once("y".into())).collect();
        writeln!(out, "{}", header.join(","))?;
        for (row, &y) in self.inputs.outer_iter().zip(self.labels.iter()) {
            let mut line = String::with_capacity(d * 12);
            for v in row.iter() {
                line.push_str(&v.to_string());
                line.push(',');
            }
            line.push_str(&y.to_string());
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// n i.i.d. samples x = (M·φ̃ + ζ − μ_x)/σ_x. Per-sample generators are keyed
/// by index, so output is identical under any thread count.
pub fn gen_dataset(
    spec: &Arc<DataSpec>,
    n: usize,
    seeds: &StreamSeeds,
    keep_hidden: bool,
) -> FeatResult<Dataset> {
    gen_dataset_inner(spec, n, seeds, keep_hidden, None)
}

/// Like [`gen_dataset`], but forces a target fraction of −1 labels via
/// per-index rejection against a deterministic quota interleave.
pub fn gen_dataset_with_ratio(
    spec: &Arc<DataSpec>,
    n: usize,
    neg_fraction: f64,
    seeds: &StreamSeeds,
    keep_hidden: bool,
) -> FeatResult<Dataset> {
    if !(0.0..=1.0).contains(&neg_fraction) {
        return Err(FeatError::Param(format!(
            "neg_fraction must be in [0,1], got {neg_fraction}"
        )));
    }
    gen_dataset_inner(spec, n, seeds, keep_hidden, Some(neg_fraction))
}

fn gen_dataset_inner(
    spec: &Arc<DataSpec>,
    n: usize,
    seeds: &StreamSeeds,
    keep_hidden: bool,
    neg_fraction: Option<f64>,
) -> FeatResult<Dataset> {
    if n == 0 {
        return Err(FeatError::Empty);
    }
    spec.hidden.validate(spec.num_patterns(), &spec.rule)?;
    if spec.sigma_x <= 0.0 {
        return Err(FeatError::DegenerateSpec("sigma_x must be > 0".into()));
    }
    let d = spec.dim();
    let cap_d = spec.num_patterns();
    let labeler = spec.labeler();

    // deterministic quota interleave: sample i must be negative iff the
    // running count floor((i+1)f) increments at i
    let wants_negative = |i: usize| -> Option<bool> {
        neg_fraction.map(|f| ((i + 1) as f64 * f).floor() > (i as f64 * f).floor())
    };

    let sample_at = |i: usize| -> FeatResult<(Array1<f64>, f64, Vec<u8>)> {
        let mut hidden_rng = seeds.indexed_rng(Stream::Hidden, i as u64);
        let mut noise_rng = seeds.indexed_rng(Stream::Noise, i as u64);
        match wants_negative(i) {
            None => Ok(spec.sample_one(&labeler, &mut hidden_rng, &mut noise_rng)),
            Some(neg) => {
                let want = if neg { -1.0 } else { 1.0 };
                for _attempt in 0..100_000 {
                    let phi = sample_hidden(&spec.hidden, cap_d, &mut hidden_rng);
                    if labeler.label(&phi) == want {
                        let mut x = spec.assemble(&phi);
                        spec.add_noise(&mut x, &mut noise_rng);
                        spec.normalize(&mut x);
                        return Ok((x, want, phi));
                    }
                }
                Err(FeatError::Feasibility(format!(
                    "could not draw a label-{want} sample in 100000 attempts"
                )))
            }
        }
    };

    let chunks: Vec<FeatResult<Vec<(Array1<f64>, f64, Vec<u8>)>>> = chunk_ranges(n)
        .into_par_iter()
        .map(|(start, end)| (start..end).map(sample_at).collect())
        .collect();

    let mut inputs = Array2::zeros((n, d));
    let mut labels = Array1::zeros(n);
    let mut hidden = if keep_hidden { Some(Array2::zeros((n, cap_d))) } else { None };
    let mut i = 0;
    for chunk in chunks {
        for (x, y, phi) in chunk? {
            inputs.row_mut(i).assign(&x);
            labels[i] = y;
            if let Some(h) = hidden.as_mut() {
                for (j, &bit) in phi.iter().enumerate() {
                    h[(i, j)] = bit;
                }
            }
            i += 1;
        }
    }

    Ok(Dataset { inputs, labels, hidden, spec: Arc::clone(spec) })
}

// ---------------------------------------------------------------------------
// Gaussian cluster mixture (practical-mode data)
// ---------------------------------------------------------------------------

/// One draw of the Gaussian cluster mixture: ε uniform on {−1,+1}^k,
/// x = Σ_i ε_i·col_i + g with g ~ N(0, σ_r²·(k/d)·I), y = Π_i ε_i.
pub fn sample_gaussian_mixture(
    dict: &Dictionary,
    sigma_r: f64,
    rng: &mut impl Rng,
) -> FeatResult<(Array1<f64>, f64)> {
    if dict.coherence != 0.0 {
        return Err(FeatError::Param("gaussian mixture needs an orthonormal dictionary".into()));
    }
    let d = dict.dim();
    let k = dict.num_patterns();
    let mut x = Array1::zeros(d);
    let mut y = 1.0;
    for j in 0..k {
        let eps = if rng.gen::<f64>() < 0.5 { 1.0 } else { -1.0 };
        y *= eps;
        x.scaled_add(eps, &dict.column(j));
    }
    let noise_std = sigma_r * (k as f64 / d as f64).sqrt();
    if noise_std > 0.0 {
        for v in x.iter_mut() {
            *v += noise_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok((x, y))
}
