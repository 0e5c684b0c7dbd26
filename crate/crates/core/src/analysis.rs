//! Trajectory diagnostics: skeleton adherence, extrema, sections, PCA, spectra.

use std::fmt::Write as _;

use faer::Side;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::Skeleton;
use crate::training::RunTrace;

/// `|x⁴ - x² + y²/4|`, which vanishes on the figure-eight skeleton.
pub fn q_index(x: f64, y: f64) -> f64 {
    (x.powi(4) - x * x + 0.25 * y * y).abs()
}

/// Mean of [`q_index`] over the last `window` outputs.
pub fn mean_q(trace: &RunTrace, window: usize) -> Result<f64> {
    if trace.dim() != 2 {
        return Err(Error::NotApplicable(
            "figure-eight index",
            format!("needs a two-dimensional output, got {}", trace.dim()),
        ));
    }
    if window == 0 || window > trace.len() {
        return Err(Error::Input(format!(
            "averaging window {window} does not fit a trace of {} steps",
            trace.len()
        )));
    }
    let tail = &trace.outputs[trace.len() - window..];
    Ok(tail.iter().map(|z| q_index(z[0], z[1])).sum::<f64>() / window as f64)
}

/// Root-mean-square error of output component `component` against the
/// aligned skeleton over the first `t_eval` steps of `trace`.
pub fn rmse(trace: &RunTrace, sk: &Skeleton, component: usize, t_eval: usize) -> Result<f64> {
    if component >= sk.dim() || component >= trace.dim() {
        return Err(Error::Input(format!("component {component} out of range")));
    }
    if t_eval == 0 || t_eval > trace.len() {
        return Err(Error::Input(format!(
            "evaluation length {t_eval} does not fit a trace of {} steps",
            trace.len()
        )));
    }
    let sum: f64 = (0..t_eval)
        .map(|k| {
            let e = trace.outputs[k][component] - sk.at(trace.start_index + k)[component];
            e * e
        })
        .sum();
    Ok((sum / t_eval as f64).sqrt())
}

/// Root-mean-square difference of two equal-length series.
pub fn rmse_series(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimension {
            context: "rmse series",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok((a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt())
}

/// Mean over `points` of the Euclidean distance to the nearest skeleton sample
/// of one period.
pub fn shape_deviation(points: &[Vec<f64>], sk: &Skeleton) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Input("shape deviation of an empty trajectory".into()));
    }
    let reference = sk.one_period();
    let mut total = 0.0;
    for p in points {
        if p.len() != sk.dim() {
            return Err(Error::Dimension {
                context: "shape deviation point",
                expected: sk.dim(),
                got: p.len(),
            });
        }
        let best = reference
            .iter()
            .map(|s| s.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        total += best.sqrt();
    }
    Ok(total / points.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtremumKind {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub index: usize,
    pub value: f64,
    pub kind: ExtremumKind,
}

/// Strict interior local extrema of `series`, in time order. Plateaus are skipped.
pub fn local_extrema(series: &[f64]) -> Vec<Extremum> {
    let mut out = Vec::new();
    for k in 1..series.len().saturating_sub(1) {
        let (p, c, n) = (series[k - 1], series[k], series[k + 1]);
        let kind = if c > p && c > n {
            ExtremumKind::Max
        } else if c < p && c < n {
            ExtremumKind::Min
        } else {
            continue;
        };
        out.push(Extremum { index: k, value: c, kind });
    }
    out
}

/// Extrema of the node-averaged state `(1/N) sum_i x_k^i`.
pub fn node_average_extrema(trace: &RunTrace) -> Vec<Extremum> {
    local_extrema(&trace.node_means)
}

/// Positions `k + f` (`0 <= f < 1`) at which `signal - level` passes from
/// negative to nonnegative between samples `k` and `k + 1`.
pub fn upward_crossings(signal: &[f64], level: f64) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for k in 0..signal.len().saturating_sub(1) {
        let (a, b) = (signal[k] - level, signal[k + 1] - level);
        if a < 0.0 && b >= 0.0 {
            out.push((k, a / (a - b)));
        }
    }
    out
}

fn lerp(s: &[f64], k: usize, f: f64) -> f64 {
    s[k] + f * (s[k + 1] - s[k])
}

/// Values of the monitored nodes at each upward crossing of output
/// component `axis` through `level`, linearly interpolated. One row per
/// crossing, one column per entry of `nodes`.
pub fn poincare_section(trace: &RunTrace, axis: usize, level: f64, nodes: &[usize]) -> Result<Vec<Vec<f64>>> {
    if axis >= trace.dim() {
        return Err(Error::Input(format!("section axis {axis} out of range")));
    }
    let series: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&i| trace.node(i).ok_or_else(|| Error::Input(format!("node {i} was not recorded"))))
        .collect::<Result<_>>()?;
    let signal = trace.output_component(axis);
    Ok(upward_crossings(&signal, level)
        .into_iter()
        .map(|(k, f)| series.iter().map(|s| lerp(s, k, f)).collect())
        .collect())
}

/// Number of groups in `values` when neighbours closer than `tol` are merged.
pub fn count_branches(values: &[f64], tol: f64) -> usize {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return 0;
    }
    v.sort_by(f64::total_cmp);
    1 + v.windows(2).filter(|w| w[1] - w[0] > tol).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    /// `T x k` projected coordinates.
    pub coordinates: Vec<Vec<f64>>,
    /// Variance along each retained component.
    pub variances: Vec<f64>,
    /// Share of total variance along each retained component.
    pub explained_ratio: Vec<f64>,
    pub total_variance: f64,
    /// True when the data has (numerically) no variance at all.
    pub degenerate: bool,
}

/// Principal-component projection of row vectors onto their top `k` axes.
pub fn pca_projection<R: AsRef<[f64]>>(rows: &[R], k: usize) -> Result<PcaProjection> {
    let t = rows.len();
    if t < 2 {
        return Err(Error::Input("principal components need at least two samples".into()));
    }
    let n = rows[0].as_ref().len();
    if k == 0 || k > n {
        return Err(Error::Input(format!("cannot keep {k} components of {n}-dimensional data")));
    }
    if rows.iter().any(|r| r.as_ref().len() != n) {
        return Err(Error::Input("samples have different lengths".into()));
    }
    let mut mean = vec![0.0; n];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t as f64);
    let centered = faer::Mat::<f64>::from_fn(t, n, |i, j| rows[i].as_ref()[j] - mean[j]);
    let cov = (centered.transpose() * &centered) * faer::Scale(1.0 / (t - 1) as f64);
    let eig = cov
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Solver(format!("covariance eigendecomposition failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    // Eigenvalues come in ascending order.
    let order: Vec<usize> = (0..n).rev().collect();
    let total: f64 = (0..n).map(|i| s[i].max(0.0)).sum();
    let degenerate = total <= f64::EPSILON * n as f64;
    let variances: Vec<f64> = order[..k].iter().map(|&i| s[i].max(0.0)).collect();
    let explained_ratio = variances
        .iter()
        .map(|v| if degenerate { 0.0 } else { v / total })
        .collect();
    let coordinates = (0..t)
        .map(|r| {
            order[..k]
                .iter()
                .map(|&c| {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += centered[(r, j)] * u[(j, c)];
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(PcaProjection {
        coordinates,
        variances,
        explained_ratio,
        total_variance: total,
        degenerate,
    })
}

/// Minimum series length accepted by [`power_spectrum`].
pub const MIN_SPECTRUM_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    /// Frequencies in cycles per step, `0 ..= 1/2`.
    pub frequency: Vec<f64>,
    /// One-sided power; sums to the (biased) variance of the series.
    pub power: Vec<f64>,
}

impl PowerSpectrum {
    /// Frequency of the largest non-DC peak.
    pub fn dominant_frequency(&self) -> f64 {
        let mut best = (0.0, f64::NEG_INFINITY);
        for (f, p) in self.frequency.iter().zip(&self.power).skip(1) {
            if *p > best.1 {
                best = (*f, *p);
            }
        }
        best.0
    }
}

/// One-sided periodogram of the mean-removed series.
pub fn power_spectrum(series: &[f64]) -> Result<PowerSpectrum> {
    let n = series.len();
    if n < MIN_SPECTRUM_LEN {
        return Err(Error::Input(format!(
            "power spectrum needs at least {MIN_SPECTRUM_LEN} samples, got {n}"
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("power spectrum of non-finite series".into()));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let norm = 1.0 / (n as f64 * n as f64);
    let mut frequency = Vec::with_capacity(half + 1);
    let mut power = Vec::with_capacity(half + 1);
    for (j, c) in buf.iter().take(half + 1).enumerate() {
        let mirrored = j != 0 && !(n.is_multiple_of(2) && j == half);
        let factor = if mirrored { 2.0 } else { 1.0 };
        frequency.push(j as f64 / n as f64);
        power.push(factor * c.norm_sqr() * norm);
    }
    Ok(PowerSpectrum { frequency, power })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagramSource {
    NodeAverageExtrema,
    OutputExtrema,
    PoincareSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Transient,
    Settled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub param: f64,
    pub value: f64,
    pub phase: Phase,
}

/// Points of a bifurcation diagram, any number per parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub source: DiagramSource,
    pub param_name: String,
    pub points: Vec<BifurcationPoint>,
}

impl BifurcationDiagram {
    pub fn new(source: DiagramSource, param_name: impl Into<String>) -> Self {
        Self {
            source,
            param_name: param_name.into(),
            points: Vec::new(),
        }
    }

    /// Adds `(index, value)` samples at `param`: indices below `transient_end`
    /// are transient, those at or after `settle_from` settled, the rest dropped.
    pub fn push_indexed(&mut self, param: f64, samples: impl IntoIterator<Item = (f64, f64)>, transient_end: f64, settle_from: f64) {
        for (index, value) in samples {
            let phase = if index < transient_end {
                Phase::Transient
            } else if index >= settle_from {
                Phase::Settled
            } else {
                continue;
            };
            self.points.push(BifurcationPoint { param, value, phase });
        }
    }

    /// Settled values at `param`.
    pub fn settled_at(&self, param: f64) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.phase == Phase::Settled && p.param == param)
            .map(|p| p.value)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{},value,phase\n", self.param_name);
        for p in &self.points {
            let phase = match p.phase {
                Phase::Transient => "transient",
                Phase::Settled => "settled",
            };
            let _ = writeln!(s, "{},{},{}", p.param, p.value, phase);
        }
        s
    }
}

/// Extremum samples of the node average, keyed by step index.
pub fn node_average_samples(trace: &RunTrace) -> Vec<(f64, f64)> {
    node_average_extrema(trace).iter().map(|e| (e.index as f64, e.value)).collect()
}

/// Maxima of output component `c`, keyed by step index.
pub fn output_maxima_samples(trace: &RunTrace, c: usize) -> Vec<(f64, f64)> {
    local_extrema(&trace.output_component(c))
        .into_iter()
        .filter(|e| e.kind == ExtremumKind::Max)
        .map(|e| (e.index as f64, e.value))
        .collect()
}

/// Section values of one node, keyed by the fractional crossing time.
pub fn section_samples(trace: &RunTrace, axis: usize, level: f64, node: usize) -> Result<Vec<(f64, f64)>> {
    if axis >= trace.dim() {
        return Err(Error::Input(format!("section axis {axis} out of range")));
    }
    let s = trace.node(node).ok_or_else(|| Error::Input(format!("node {node} was not recorded")))?;
    let signal = trace.output_component(axis);
    Ok(upward_crossings(&signal, level)
        .into_iter()
        .map(|(k, f)| (k as f64 + f, lerp(&s, k, f)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    SupervisedPeriodic,
    SemiSupervisedChaos,
    CollapsedChaos,
    UntrainedOther,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::SupervisedPeriodic => "supervised-periodic",
            Classification::SemiSupervisedChaos => "semi-supervised-chaos",
            Classification::CollapsedChaos => "collapsed-chaos",
            Classification::UntrainedOther => "untrained-other",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which adherence measure drove a classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeMetric {
    /// Mean figure-eight index.
    MeanQ,
    /// Mean distance to the nearest skeleton sample.
    NearestSampleDistance,
}

/// Everything measured at one `(seed, rho)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub seed: u64,
    pub rho: f64,
    /// Conditional exponent of the driven reservoir, nats per step.
    pub cle: f64,
    /// Maximal exponent of the closed loop, nats per step.
    pub mle: f64,
    /// All computed closed-loop exponents.
    pub spectrum: Vec<f64>,
    pub steps_used: usize,
    /// Open-loop prediction error per output component.
    #[serde(rename = "rmse_per_component")]
    pub rmse: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_q: Option<f64>,
    #[serde(rename = "shape_dev")]
    pub shape_distance: f64,
    pub shape_metric: ShapeMetric,
    pub shape_threshold: f64,
    pub classification: Classification,
    #[serde(rename = "eff_radius_pre")]
    pub effective_radius_pre: f64,
    #[serde(rename = "eff_radius_post", default, skip_serializing_if = "Option::is_none")]
    pub effective_radius_post: Option<f64>,
    pub t_init: usize,
}

impl AnalysisReport {
    /// The adherence value compared against `shape_threshold`.
    pub fn shape_value(&self) -> f64 {
        match self.shape_metric {
            ShapeMetric::MeanQ => self.mean_q.unwrap_or(f64::INFINITY),
            ShapeMetric::NearestSampleDistance => self.shape_distance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::lissajous;
    use crate::training::RunMode;

    fn trace_of(outputs: Vec<Vec<f64>>, node_means: Vec<f64>) -> RunTrace {
        RunTrace {
            mode: RunMode::ClosedLoop,
            start_index: 0,
            outputs,
            node_means,
            states: Vec::new(),
            node_series: Vec::new(),
        }
    }

    #[test]
    fn q_vanishes_on_figure_eight() {
        let sk = lissajous(400);
        for s in sk.samples() {
            assert!(q_index(s[0], s[1]) < 1e-12);
        }
        assert!((q_index(0.5, 0.0) - 0.1875).abs() < 1e-15);
        assert_eq!(q_index(1.0, 0.0), 0.0);
    }

    #[test]
    fn mean_q_window_and_dimension() {
        let tr = trace_of(vec![vec![0.5, 0.0]; 10], vec![0.0; 10]);
        assert!((mean_q(&tr, 4).unwrap() - 0.1875).abs() < 1e-15);
        assert!(mean_q(&tr, 11).is_err());
        let tr3 = trace_of(vec![vec![0.0; 3]; 10], vec![0.0; 10]);
        assert!(matches!(mean_q(&tr3, 5), Err(Error::NotApplicable(..))));
    }

    #[test]
    fn rmse_of_skeleton_is_zero_and_offset_is_exact() {
        let sk = lissajous(100);
        let outputs: Vec<Vec<f64>> = (0..300).map(|k| sk.at(k).to_vec()).collect();
        let tr = trace_of(outputs.clone(), vec![0.0; 300]);
        assert_eq!(rmse(&tr, &sk, 0, 300).unwrap(), 0.0);
        let shifted: Vec<Vec<f64>> = outputs.iter().map(|z| vec![z[0] + 0.25, z[1]]).collect();
        let tr = trace_of(shifted, vec![0.0; 300]);
        assert!((rmse(&tr, &sk, 0, 300).unwrap() - 0.25).abs() < 1e-12);
        assert!(rmse(&tr, &sk, 0, 301).is_err());
    }

    #[test]
    fn extrema_of_sine_and_plateau() {
        let s: Vec<f64> = (0..200).map(|k| (std::f64::consts::TAU * k as f64 / 50.0 + 0.1).sin()).collect();
        let ex = local_extrema(&s);
        assert_eq!(ex.len(), 8);
        assert!(ex.iter().all(|e| (e.value.abs() - 1.0).abs() < 1e-2));
        assert!(local_extrema(&[0.0, 1.0, 1.0, 0.0]).is_empty());
        assert!(local_extrema(&[1.0, 2.0]).is_empty());
    }

    #[test]
    fn crossings_interpolate() {
        let c = upward_crossings(&[-1.0, 1.0, -3.0, 1.0], 0.0);
        assert_eq!(c, vec![(0, 0.5), (2, 0.75)]);
    }

    #[test]
    fn pca_on_a_line() {
        let rows: Vec<Vec<f64>> = (0..50).map(|k| vec![k as f64, 2.0 * k as f64, 0.0]).collect();
        let p = pca_projection(&rows, 2).unwrap();
        assert!((p.explained_ratio[0] - 1.0).abs() < 1e-12);
        assert!(p.variances[1].abs() < 1e-9);
        let constant = vec![vec![1.0, 1.0]; 5];
        assert!(pca_projection(&constant, 1).unwrap().degenerate);
    }

    #[test]
    fn spectrum_of_pure_tone() {
        let n = 256;
        let s: Vec<f64> = (0..n).map(|k| (std::f64::consts::TAU * 16.0 * k as f64 / n as f64).cos()).collect();
        let ps = power_spectrum(&s).unwrap();
        assert_eq!(ps.frequency.len(), n / 2 + 1);
        assert!((ps.dominant_frequency() - 16.0 / 256.0).abs() < 1e-15);
        assert!((ps.power.iter().sum::<f64>() - 0.5).abs() < 1e-12);
        assert!(power_spectrum(&s[..63]).is_err());
    }

    #[test]
    fn branches_merge_within_tolerance() {
        assert_eq!(count_branches(&[0.1, 0.1000001, 0.5, 0.5, 0.9], 1e-3), 3);
        assert_eq!(count_branches(&[], 1e-3), 0);
    }

    #[test]
    fn diagram_csv_and_phases() {
        let mut d = BifurcationDiagram::new(DiagramSource::NodeAverageExtrema, "rho");
        d.push_indexed(1.2, [(10.0, 0.1), (5000.0, 0.2), (9000.0, 0.3)], 2000.0, 8000.0);
        assert_eq!(d.points.len(), 2);
        assert_eq!(d.settled_at(1.2), vec![0.3]);
        assert_eq!(d.to_csv(), "rho,value,phase\n1.2,0.1,transient\n1.2,0.3,settled\n");
    }

    #[test]
    fn shape_deviation_is_zero_on_skeleton() {
        let sk = lissajous(100);
        let pts: Vec<Vec<f64>> = sk.samples().to_vec();
        assert!(shape_deviation(&pts, &sk).unwrap() < 1e-15);
        let far = vec![vec![5.0, 0.0]];
        assert!((shape_deviation(&far, &sk).unwrap() - 4.0).abs() < 1e-9);
    }
}
