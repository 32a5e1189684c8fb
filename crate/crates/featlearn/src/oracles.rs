//! Independent checks the experiments lean on: an explicit network that
//! labels in-model inputs exactly, a Monte Carlo estimate of the
//! first-step gradient components along dictionary directions, the exact
//! label correlation for small supports, and an orthogonality count for
//! the parity function family.

use crate::activation::SmoothingConfig;
use crate::network::NetworkParams;
use crate::numeric::{chunk_ranges, tree_combine};
use crate::rng::{Stream, StreamSeeds};
use crate::synthdata::{sample_hidden, DataSpec, HiddenDistribution, LabelRule};
use crate::{FeatError, FeatResult};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Exact reference network
// ---------------------------------------------------------------------------

/// Triangular bump from three ReLU pieces: height amp·width at `center`,
/// support (center − width, center + width).
pub fn peak(z: f64, center: f64, amp: f64, width: f64) -> f64 {
    let relu = |v: f64| v.max(0.0);
    amp * relu(z - center + width) - 2.0 * amp * relu(z - center) + amp * relu(z - center - width)
}

/// Which bump arrangement the construction picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceVariant {
    /// Bumps of height 1 centered on the support counts.
    Centered,
    /// Bumps of height 2 shifted by 1/4, read off-center; used when a
    /// centered bias would fall too close to zero.
    Shifted,
}

#[derive(Debug, Clone)]
pub struct ReferenceNetwork {
    pub params: NetworkParams,
    pub variant: ReferenceVariant,
}

const BUMP_HALF_WIDTH: f64 = 0.5;
const MIN_BIAS_MAGNITUDE: f64 = 0.125;

fn variant_settings(v: ReferenceVariant) -> (f64, f64) {
    match v {
        ReferenceVariant::Centered => (0.0, 2.0),
        ReferenceVariant::Shifted => (0.25, 4.0),
    }
}

/// All candidate pre-rescale bias magnitudes stay clear of zero.
fn variant_feasible(mu_a: f64, k: usize, v: ReferenceVariant) -> bool {
    let (delta, _) = variant_settings(v);
    (0..=k).all(|c| {
        let s_c = c as f64 - mu_a + delta;
        [s_c - BUMP_HALF_WIDTH, s_c, s_c + BUMP_HALF_WIDTH]
            .iter()
            .all(|t| t.abs() >= MIN_BIAS_MAGNITUDE)
    })
}

/// Build a network that labels every noiseless in-model input exactly.
///
/// The scalar u(x) = σ_x·⟨Σ_{j∈A} col_j, x⟩ recovers the support count
/// minus its fitted mean, so one triangular bump per count value, signed by
/// that count's label, reproduces the labeling rule. Every neuron shares the
/// weight direction; the 1/(4k) rescale keeps all pre-activations inside the
/// linear region of the truncated ReLU. Requires an orthonormal dictionary.
pub fn build_reference_network(spec: &DataSpec) -> FeatResult<ReferenceNetwork> {
    if spec.dictionary.coherence != 0.0 {
        return Err(FeatError::Param(
            "exact construction needs an orthonormal dictionary".into(),
        ));
    }
    if spec.sigma_x <= 0.0 {
        return Err(FeatError::DegenerateSpec("sigma_x must be > 0".into()));
    }
    let k = spec.rule.k();
    let d = spec.dim();
    let mu_a = spec.effective_support_mean();

    let variant = if variant_feasible(mu_a, k, ReferenceVariant::Centered) {
        ReferenceVariant::Centered
    } else if variant_feasible(mu_a, k, ReferenceVariant::Shifted) {
        ReferenceVariant::Shifted
    } else {
        return Err(FeatError::Feasibility(format!(
            "no bump arrangement keeps biases off zero for support mean {mu_a}"
        )));
    };
    let (delta, amp) = variant_settings(variant);

    let scale = 4.0 * k as f64;
    let target = spec.target_direction();
    let w_row = target.mapv(|t| spec.sigma_x * t / scale);

    let rows = 3 * (k + 1);
    let mut w = Array2::zeros((rows, d));
    let mut b = Array1::zeros(rows);
    let mut a = Array1::zeros(rows);
    for c in 0..=k {
        let y_c = if spec.rule.positive_counts.binary_search(&c).is_ok() { 1.0 } else { -1.0 };
        let s_c = c as f64 - mu_a + delta;
        let pieces = [
            (s_c - BUMP_HALF_WIDTH, amp),
            (s_c, -2.0 * amp),
            (s_c + BUMP_HALF_WIDTH, amp),
        ];
        for (idx, (theta, coef)) in pieces.iter().enumerate() {
            let r = 3 * c + idx;
            w.row_mut(r).assign(&w_row);
            b[r] = -theta / scale;
            a[r] = scale * coef * y_c;
        }
    }
    let params = NetworkParams { w, b, a };
    params.validate()?;
    Ok(ReferenceNetwork { params, variant })
}

// ---------------------------------------------------------------------------
// Gradient component estimator
// ---------------------------------------------------------------------------

/// Monte Carlo estimates of T_{i,j} = E[weight(y)·y·act'(⟨w_i,x⟩+b_i)·⟨col_j,x⟩],
/// the statistic a first gradient step writes into neuron i along dictionary
/// direction j (the hinge is taken as active, which holds at the mirrored
/// initialization where the network output is zero).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientComponentReport {
    /// neurons × D component estimates.
    pub per_neuron: Array2<f64>,
    /// Matching standard errors.
    pub per_neuron_se: Array2<f64>,
    /// Per-pattern mean over neurons, with its standard error from the same
    /// draws (the per-sample statistic is averaged over neurons first).
    pub aggregate: Array1<f64>,
    pub aggregate_se: Array1<f64>,
    /// Neurons with a_i = 0 receive no first-layer update regardless of
    /// their components; listed so readers do not over-interpret their rows.
    pub zero_coefficient_neurons: Vec<usize>,
    pub n_samples: usize,
    /// Mean |aggregate| on and off the support, and their ratio.
    pub mean_abs_support: f64,
    pub mean_abs_off_support: f64,
    pub snr: f64,
}

struct ComponentAccum {
    sum: Array2<f64>,
    sumsq: Array2<f64>,
    agg_sum: Array1<f64>,
    agg_sumsq: Array1<f64>,
}

impl ComponentAccum {
    fn merge(mut self, o: Self) -> Self {
        self.sum += &o.sum;
        self.sumsq += &o.sumsq;
        self.agg_sum += &o.agg_sum;
        self.agg_sumsq += &o.agg_sumsq;
        self
    }
}

/// Public entry point: labels come from the spec's rule.
pub fn estimate_gradient_components(
    spec: &DataSpec,
    params: &NetworkParams,
    sigma_xi: f64,
    weights: &crate::network::ClassWeights,
    n_mc: usize,
    seeds: &StreamSeeds,
) -> FeatResult<GradientComponentReport> {
    estimate_components_impl(spec, params, sigma_xi, weights, n_mc, seeds, false)
}

/// `random_labels` replaces y with an independent fair coin, once per draw;
/// every component is then an estimate of zero.
fn estimate_components_impl(
    spec: &DataSpec,
    params: &NetworkParams,
    sigma_xi: f64,
    weights: &crate::network::ClassWeights,
    n_mc: usize,
    seeds: &StreamSeeds,
    random_labels: bool,
) -> FeatResult<GradientComponentReport> {
    if n_mc < 10_000 {
        return Err(FeatError::Param(format!(
            "component estimation needs at least 10000 draws, got {n_mc}"
        )));
    }
    params.validate()?;
    if params.dim() != spec.dim() {
        return Err(FeatError::Dimension(format!(
            "network dim {} vs data dim {}",
            params.dim(),
            spec.dim()
        )));
    }
    let smoothing = SmoothingConfig::closed_form(sigma_xi);
    smoothing.validate()?;
    let rows = params.neurons();
    let cap_d = spec.num_patterns();
    let labeler = spec.labeler();

    let parts: Vec<ComponentAccum> = chunk_ranges(n_mc)
        .into_par_iter()
        .map(|(start, end)| {
            let bsz = end - start;
            let mut x = Array2::zeros((bsz, spec.dim()));
            let mut cy = Array1::zeros(bsz);
            for (r, i) in (start..end).enumerate() {
                // φ̃, ζ, and (if requested) the coin, all from one keyed rng
                let mut rng = seeds.indexed_rng(Stream::MonteCarlo, i as u64);
                let phi = sample_hidden(&spec.hidden, cap_d, &mut rng);
                let mut xi = spec.assemble(&phi);
                spec.add_noise(&mut xi, &mut rng);
                spec.normalize(&mut xi);
                let y = if random_labels {
                    if rng.gen::<f64>() < 0.5 {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    labeler.label(&phi)
                };
                x.row_mut(r).assign(&xi);
                cy[r] = weights.weight(y) * y;
            }
            let mut pre = x.dot(&params.w.t());
            pre += &params.b;
            let mut der = pre.mapv(|z| smoothing.deriv(z));
            // fold the weighted label into the derivative table
            der *= &cy.view().insert_axis(Axis(1));
            let proj = x.dot(&spec.dictionary.columns);

            let sum = der.t().dot(&proj);
            let der_sq = der.mapv(|v| v * v);
            let proj_sq = proj.mapv(|v| v * v);
            let sumsq = der_sq.t().dot(&proj_sq);
            // per-sample aggregate: mean over neurons of c·der, times proj
            let der_mean = der.mean_axis(Axis(1)).expect("rows > 0");
            let agg_sum = proj.t().dot(&der_mean);
            let agg_sumsq = proj_sq.t().dot(&der_mean.mapv(|v| v * v));
            ComponentAccum { sum, sumsq, agg_sum, agg_sumsq }
        })
        .collect();
    let acc = tree_combine(parts, ComponentAccum::merge).expect("n_mc > 0");

    let nf = n_mc as f64;
    let per_neuron = acc.sum.mapv(|s| s / nf);
    let per_neuron_se = Array2::from_shape_fn((rows, cap_d), |(i, j)| {
        let mean = per_neuron[(i, j)];
        let var = (acc.sumsq[(i, j)] / nf - mean * mean).max(0.0);
        (var / nf).sqrt()
    });
    let aggregate = acc.agg_sum.mapv(|s| s / nf);
    let aggregate_se = Array1::from_shape_fn(cap_d, |j| {
        let mean = aggregate[j];
        let var = (acc.agg_sumsq[j] / nf - mean * mean).max(0.0);
        (var / nf).sqrt()
    });

    let in_support = |j: usize| spec.rule.support.binary_search(&j).is_ok();
    let (mut s_on, mut n_on, mut s_off, mut n_off) = (0.0, 0usize, 0.0, 0usize);
    for j in 0..cap_d {
        if in_support(j) {
            s_on += aggregate[j].abs();
            n_on += 1;
        } else {
            s_off += aggregate[j].abs();
            n_off += 1;
        }
    }
    let mean_abs_support = if n_on > 0 { s_on / n_on as f64 } else { 0.0 };
    let mean_abs_off_support = if n_off > 0 { s_off / n_off as f64 } else { 0.0 };
    let snr = if mean_abs_off_support > 0.0 {
        mean_abs_support / mean_abs_off_support
    } else {
        f64::INFINITY
    };

    let zero_coefficient_neurons =
        params.a.iter().enumerate().filter(|(_, &a)| a == 0.0).map(|(i, _)| i).collect();

    Ok(GradientComponentReport {
        per_neuron,
        per_neuron_se,
        aggregate,
        aggregate_se,
        zero_coefficient_neurons,
        n_samples: n_mc,
        mean_abs_support,
        mean_abs_off_support,
        snr,
    })
}

#[cfg(test)]
pub(crate) fn estimate_components_random_labels(
    spec: &DataSpec,
    params: &NetworkParams,
    sigma_xi: f64,
    weights: &crate::network::ClassWeights,
    n_mc: usize,
    seeds: &StreamSeeds,
) -> FeatResult<GradientComponentReport> {
    estimate_components_impl(spec, params, sigma_xi, weights, n_mc, seeds, true)
}

// ---------------------------------------------------------------------------
// Exact label correlation
// ---------------------------------------------------------------------------

/// Distribution of the support restriction φ̃_A as explicit (pattern, prob)
/// pairs. Off-support coordinates never affect the label.
fn support_patterns(
    dist: &HiddenDistribution,
    rule: &LabelRule,
) -> FeatResult<Vec<(Vec<u8>, f64)>> {
    let k = rule.k();
    if k > 20 {
        return Err(FeatError::Param(format!(
            "exact enumeration supports k <= 20, got {k}"
        )));
    }
    let masks = 0u32..(1u32 << k);
    match dist {
        HiddenDistribution::ProductBernoulli { q } => Ok(masks
            .map(|m| {
                let bits: Vec<u8> = (0..k).map(|j| ((m >> j) & 1) as u8).collect();
                let mut prob = 1.0;
                for (j, &bit) in rule.support.iter().zip(&bits) {
                    prob *= if bit == 1 { q[*j] } else { 1.0 - q[*j] };
                }
                (bits, prob)
            })
            .collect()),
        HiddenDistribution::ParityMixture { p0, .. } => Ok(masks
            .map(|m| {
                let bits: Vec<u8> = (0..k).map(|j| ((m >> j) & 1) as u8).collect();
                let uniform = p0 / 2f64.powi(k as i32);
                let structured = if bits.iter().all(|&b| b == 1) || bits.iter().all(|&b| b == 0) {
                    (1.0 - p0) / 2.0
                } else {
                    0.0
                };
                (bits, uniform + structured)
            })
            .collect()),
        HiddenDistribution::UniformNoStructure => Ok(masks
            .map(|m| {
                let bits: Vec<u8> = (0..k).map(|j| ((m >> j) & 1) as u8).collect();
                (bits, 1.0 / 2f64.powi(k as i32))
            })
            .collect()),
        HiddenDistribution::Codebook { plus_words, minus_words, .. } => {
            let mut out = Vec::new();
            for w in plus_words {
                out.push((w.clone(), 0.5 / plus_words.len() as f64));
            }
            for w in minus_words {
                out.push((w.clone(), 0.5 / minus_words.len() as f64));
            }
            Ok(out)
        }
    }
}

fn pattern_label(dist: &HiddenDistribution, rule: &LabelRule, bits: &[u8]) -> f64 {
    if let HiddenDistribution::Codebook { plus_words, .. } = dist {
        if plus_words.iter().any(|w| w == bits) {
            return 1.0;
        }
        return -1.0;
    }
    let count = bits.iter().filter(|&&b| b == 1).count();
    if rule.positive_counts.binary_search(&count).is_ok() {
        1.0
    } else {
        -1.0
    }
}

/// Exact p = mean over the support of E[yφ̃_i] − E[y]E[φ̃_i], by enumerating
/// the support restriction. Limited to k ≤ 20.
pub fn exact_label_correlation(
    dist: &HiddenDistribution,
    rule: &LabelRule,
) -> FeatResult<f64> {
    rule.validate()?;
    let patterns = support_patterns(dist, rule)?;
    let k = rule.k();
    let total: f64 = patterns.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(FeatError::Param(format!(
            "pattern probabilities sum to {total}, not 1"
        )));
    }
    let mut e_y = 0.0;
    let mut e_phi = vec![0.0; k];
    let mut e_yphi = vec![0.0; k];
    for (bits, prob) in &patterns {
        let y = pattern_label(dist, rule, bits);
        e_y += prob * y;
        for i in 0..k {
            let bit = bits[i] as f64;
            e_phi[i] += prob * bit;
            e_yphi[i] += prob * y * bit;
        }
    }
    let mut p = 0.0;
    for i in 0..k {
        p += e_yphi[i] - e_y * e_phi[i];
    }
    Ok(p / k as f64)
}

// ---------------------------------------------------------------------------
// Parity family orthogonality count
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    /// Number of size-k parity functions over D patterns.
    pub family_size: usize,
    /// Largest |E[f_S·f_T]| over distinct pairs under the uniform hidden
    /// distribution; 0 means the family is exactly pairwise uncorrelated.
    pub max_cross_correlation: f64,
}

/// Count the size-k parity family over D patterns and verify its pairwise
/// correlations under uniform inputs by exhaustive enumeration. A large
/// family of uncorrelated labelings is what makes coordinate-blind methods
/// slow on this data. Guards: C(D,k) ≤ 1000 and D ≤ 12.
pub fn parity_family_orthogonality(cap_d: usize, k: usize) -> FeatResult<OrthogonalityReport> {
    if k == 0 || k > cap_d {
        return Err(FeatError::Param(format!("need 1 <= k <= D, got k={k} D={cap_d}")));
    }
    if cap_d > 12 {
        return Err(FeatError::Param(format!("enumeration needs D <= 12, got {cap_d}")));
    }
    let choose = |n: usize, r: usize| -> usize {
        let mut out = 1usize;
        for i in 0..r {
            out = out * (n - i) / (i + 1);
        }
        out
    };
    let family_size = choose(cap_d, k);
    if family_size > 1000 {
        return Err(FeatError::Param(format!(
            "family of {family_size} functions exceeds the 1000 enumeration guard"
        )));
    }

    // all size-k index sets as bitmasks
    let mut supports = Vec::with_capacity(family_size);
    let mut mask = (1u32 << k) - 1;
    let limit = 1u32 << cap_d;
    while mask < limit {
        supports.push(mask);
        // Gosper's hack: next bitmask with the same popcount
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        if r >= limit || c == 0 {
            break;
        }
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    debug_assert_eq!(supports.len(), family_size);

    let n_points = 1u32 << cap_d;
    let mut max_cross: f64 = 0.0;
    for i in 0..supports.len() {
        for j in (i + 1)..supports.len() {
            let mut corr = 0i64;
            for v in 0..n_points {
                let fi = if (v & supports[i]).count_ones() % 2 == 1 { 1 } else { -1 };
                let fj = if (v & supports[j]).count_ones() % 2 == 1 { 1 } else { -1 };
                corr += (fi * fj) as i64;
            }
            max_cross = max_cross.max((corr as f64 / n_points as f64).abs());
        }
    }
    Ok(OrthogonalityReport { family_size, max_cross_correlation: max_cross })
}
