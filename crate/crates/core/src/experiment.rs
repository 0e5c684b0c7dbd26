//! Train-and-analyze at single parameter values and along sweeps.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, mean_q, node_average_samples, output_maxima_samples, rmse, section_samples, shape_deviation, AnalysisReport,
    BifurcationDiagram, DiagramSource, ShapeMetric,
};
use crate::error::{Error, Result};
use crate::lyapunov::{autonomous_spectrum_from, conditional_spectrum_from, TangentSettings};
use crate::reservoir::Reservoir;
use crate::search::{classify_values, parallel_map, PointOutcome, Thresholds};
use crate::skeleton::Skeleton;
use crate::training::{train, RecordOptions, RunMode, RunTrace, TraceRecorder, TrainedModel, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Open-loop pass: the conditional exponent is measured on the same run
    /// that supplies the prediction error.
    pub open_loop: TangentSettings,
    /// Steps over which the open-loop error is averaged.
    pub rmse_steps: usize,
    /// Closed-loop pass for the maximal exponent and the trajectory.
    pub closed_loop: TangentSettings,
    /// Final closed-loop steps used for shape measures.
    pub shape_window: usize,
    /// Leading closed-loop steps drawn as transient in diagrams.
    pub transient_steps: usize,
    pub thresholds: Thresholds,
    /// Nodes whose individual series are kept.
    pub monitor_nodes: Vec<usize>,
    /// Also compute the effective radius of the composed matrix (one dense eigensolve).
    pub post_radius: bool,
    /// Keep full closed-loop states (needed for PCA).
    pub record_states: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            open_loop: TangentSettings::default(),
            rmse_steps: 10_000,
            closed_loop: TangentSettings::default(),
            shape_window: 2_000,
            transient_steps: 2_000,
            thresholds: Thresholds::default(),
            monitor_nodes: vec![0],
            post_radius: false,
            record_states: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rmse_steps == 0 || self.rmse_steps > self.open_loop.steps {
            return Err(Error::Input(format!(
                "rmse_steps ({}) must lie in 1..={}",
                self.rmse_steps, self.open_loop.steps
            )));
        }
        if self.shape_window == 0 || self.shape_window > self.closed_loop.steps {
            return Err(Error::Input(format!(
                "shape window ({}) must lie in 1..={}",
                self.shape_window, self.closed_loop.steps
            )));
        }
        self.thresholds.validate()
    }
}

/// A fully evaluated parameter point.
#[derive(Debug, Clone)]
pub struct PointEvaluation {
    pub report: AnalysisReport,
    pub model: TrainedModel,
    pub open_trace: RunTrace,
    pub closed_trace: RunTrace,
}

/// Trains at the reservoir's own `rho`, then measures the open loop
/// (prediction error, conditional exponent) and the closed loop (maximal
/// exponent, shape adherence) and classifies the point.
pub fn evaluate_point(res: &Reservoir, sk: &Skeleton, train_cfg: &TrainingConfig, eval: &EvalConfig) -> Result<PointEvaluation> {
    eval.validate()?;
    let model = train(res, sk, train_cfg)?;
    evaluate_model(model, sk, eval)
}

/// As [`evaluate_point`] for an already trained model.
pub fn evaluate_model(model: TrainedModel, sk: &Skeleton, eval: &EvalConfig) -> Result<PointEvaluation> {
    eval.validate()?;
    let res = &model.reservoir;
    if let Some(&bad) = eval.monitor_nodes.iter().find(|&&i| i >= res.n()) {
        return Err(Error::Input(format!("monitored node {bad} out of range for N = {}", res.n())));
    }

    let start = model.config.handoff_index();
    let mut open_rec = TraceRecorder::new(&model.w_out, RunMode::OpenLoop, start, RecordOptions::default(), eval.open_loop.steps);
    let (cle, _) = {
        let mut obs = |_k: usize, x: &[f64]| open_rec.observe(x);
        conditional_spectrum_from(res, sk, &model.x_start, start, &eval.open_loop, Some(&mut obs))?
    };
    let open_trace = open_rec.finish();
    let rmse_per_component = (0..sk.dim())
        .map(|c| rmse(&open_trace, sk, c, eval.rmse_steps))
        .collect::<Result<Vec<_>>>()?;

    let options = RecordOptions {
        states: eval.record_states,
        nodes: eval.monitor_nodes.clone(),
    };
    let mut closed_rec = TraceRecorder::new(&model.w_out, RunMode::ClosedLoop, 0, options, eval.closed_loop.steps);
    let (mle, _) = {
        let mut obs = |_k: usize, x: &[f64]| closed_rec.observe(x);
        autonomous_spectrum_from(&model, &model.x_start, &eval.closed_loop, Some(&mut obs))?
    };
    let closed_trace = closed_rec.finish();

    let window_start = closed_trace.len() - eval.shape_window;
    let shape_distance = shape_deviation(&closed_trace.outputs[window_start..], sk)?;
    let (q, metric, threshold) = if sk.has_q_form() {
        (Some(mean_q(&closed_trace, eval.shape_window)?), ShapeMetric::MeanQ, eval.thresholds.q_threshold)
    } else {
        (None, ShapeMetric::NearestSampleDistance, eval.thresholds.shape_threshold)
    };
    let shape_value = q.unwrap_or(shape_distance);
    let classification = classify_values(mle.max(), shape_value, threshold, eval.thresholds.mle_periodic_tol);

    let report = AnalysisReport {
        seed: res.spec().seed,
        rho: res.rho(),
        cle: cle.max(),
        mle: mle.max(),
        spectrum: mle.exponents.clone(),
        steps_used: mle.steps_used,
        rmse: rmse_per_component,
        mean_q: q,
        shape_distance,
        shape_metric: metric,
        shape_threshold: threshold,
        classification,
        effective_radius_pre: res.effective_radius_pre()?,
        effective_radius_post: if eval.post_radius {
            Some(model.effective_radius_post()?)
        } else {
            None
        },
        t_init: model.config.t_init,
    };
    Ok(PointEvaluation {
        report,
        model,
        open_trace,
        closed_trace,
    })
}

/// Where diagram values are read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagramConfig {
    pub sources: Vec<DiagramSource>,
    /// Output component whose upward zero crossings define the section.
    pub section_axis: usize,
    pub section_level: f64,
    /// Output component whose maxima are used.
    pub extrema_component: usize,
}

impl Default for DiagramConfig {
    fn default() -> Self {
        Self {
            sources: vec![DiagramSource::NodeAverageExtrema, DiagramSource::PoincareSection],
            section_axis: 1,
            section_level: 0.0,
            extrema_component: 0,
        }
    }
}

/// Diagram samples `(time, value)` of one closed-loop trace.
pub fn diagram_samples(trace: &RunTrace, source: DiagramSource, cfg: &DiagramConfig, node: usize) -> Result<Vec<(f64, f64)>> {
    match source {
        DiagramSource::NodeAverageExtrema => Ok(node_average_samples(trace)),
        DiagramSource::OutputExtrema => Ok(output_maxima_samples(trace, cfg.extrema_component)),
        DiagramSource::PoincareSection => section_samples(trace, cfg.section_axis, cfg.section_level, node),
    }
}

/// Reports and diagrams along a parameter sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sweep {
    pub param_name: String,
    pub points: Vec<PointOutcome>,
    pub diagrams: Vec<BifurcationDiagram>,
}

impl Sweep {
    pub fn success_fraction(&self) -> f64 {
        if self.points.is_empty() {
            return 1.0;
        }
        self.points.iter().filter(|p| p.report.is_some()).count() as f64 / self.points.len() as f64
    }
}

fn run_sweep(
    param_name: &str,
    params: &[f64],
    eval: &EvalConfig,
    diagrams: &DiagramConfig,
    point: impl Fn(f64) -> Result<PointEvaluation> + Sync,
) -> Sweep {
    let node = eval.monitor_nodes.first().copied().unwrap_or(0);
    let steps = eval.closed_loop.steps as f64;
    let transient_end = eval.transient_steps as f64;
    let settle_from = steps - eval.shape_window as f64;
    let results = parallel_map(params, |&p| {
        let r = point(p).and_then(|ev| {
            let samples = diagrams
                .sources
                .iter()
                .map(|&s| diagram_samples(&ev.closed_trace, s, diagrams, node))
                .collect::<Result<Vec<_>>>()?;
            Ok((ev.report, samples))
        });
        match &r {
            Ok((rep, _)) => log::info!("{param_name} = {p}: MLE = {:.5}, {}", rep.mle, rep.classification),
            Err(e) => log::warn!("{param_name} = {p}: {e}"),
        }
        (p, r)
    });
    let mut out_diagrams: Vec<BifurcationDiagram> = diagrams
        .sources
        .iter()
        .map(|&s| BifurcationDiagram::new(s, param_name))
        .collect();
    let mut points = Vec::with_capacity(results.len());
    for (p, r) in results {
        match r {
            Ok((report, samples)) => {
                for (d, s) in out_diagrams.iter_mut().zip(samples) {
                    d.push_indexed(p, s, transient_end, settle_from);
                }
                points.push(PointOutcome::from_result(p, Ok(report)));
            }
            Err(e) => points.push(PointOutcome::from_result(p, Err(e))),
        }
    }
    Sweep {
        param_name: param_name.into(),
        points,
        diagrams: out_diagrams,
    }
}

/// Retrains and evaluates at every `rho` in `rhos`.
pub fn sweep_rho(base: &Reservoir, sk: &Skeleton, train_cfg: &TrainingConfig, eval: &EvalConfig, diagrams: &DiagramConfig, rhos: &[f64]) -> Sweep {
    run_sweep("rho", rhos, eval, diagrams, |rho| {
        evaluate_point(&base.with_rho(rho)?, sk, train_cfg, eval)
    })
}

/// Retrains and evaluates at every washout length in `t_inits`.
pub fn sweep_washout(res: &Reservoir, sk: &Skeleton, train_cfg: &TrainingConfig, eval: &EvalConfig, diagrams: &DiagramConfig, t_inits: &[usize]) -> Sweep {
    let params: Vec<f64> = t_inits.iter().map(|&t| t as f64).collect();
    run_sweep("t_init", &params, eval, diagrams, |t| {
        let cfg = TrainingConfig {
            t_init: t as usize,
            ..train_cfg.clone()
        };
        evaluate_point(res, sk, &cfg, eval)
    })
}

/// Iteration lengths for [`scalar_map_diagram`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapRun {
    pub x0: f64,
    pub steps: usize,
    /// Iterates before this index are marked transient.
    pub transient_end: usize,
    /// Iterates from this index on are settled; those in between are dropped.
    pub settle_from: usize,
}

/// Bifurcation diagram of a one-dimensional map `x -> f(param, x)`.
///
/// For a map every iterate already lies on the section, so the
/// `PoincareSection` source records all iterates. The extrema sources record
/// strict local extrema of the iterate series, as for node averages.
pub fn scalar_map_diagram(
    source: DiagramSource,
    param_name: &str,
    params: &[f64],
    run: MapRun,
    f: impl Fn(f64, f64) -> f64,
) -> Result<BifurcationDiagram> {
    let mut diagram = BifurcationDiagram::new(source, param_name);
    for &p in params {
        let mut series = Vec::with_capacity(run.steps);
        let mut x = run.x0;
        for _ in 0..run.steps {
            series.push(x);
            x = f(p, x);
        }
        if let Some(k) = series.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{param_name} = {p}: map diverged at step {k}")));
        }
        let samples: Vec<(f64, f64)> = match source {
            DiagramSource::PoincareSection => series.iter().enumerate().map(|(k, &v)| (k as f64, v)).collect(),
            DiagramSource::NodeAverageExtrema => analysis::local_extrema(&series)
                .into_iter()
                .map(|e| (e.index as f64, e.value))
                .collect(),
            DiagramSource::OutputExtrema => analysis::local_extrema(&series)
                .into_iter()
                .filter(|e| e.kind == analysis::ExtremumKind::Max)
                .map(|e| (e.index as f64, e.value))
                .collect(),
        };
        diagram.push_indexed(p, samples, run.transient_end as f64, run.settle_from as f64);
    }
    Ok(diagram)
}

/// Uniform grid `start, start + step, ...` up to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && start <= stop && start.is_finite() && stop.is_finite()) {
        return Err(Error::Input(format!("invalid grid {start}..{stop} step {step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|j| crate::search::round_grid(start + step * j as f64)).collect())
}

/// Settled closed-loop projection on the top two principal axes.
pub fn settled_pca(trace: &RunTrace, window: usize) -> Result<analysis::PcaProjection> {
    if trace.states.is_empty() {
        return Err(Error::Input("principal components need recorded states".into()));
    }
    let from = trace.states.len().saturating_sub(window);
    analysis::pca_projection(&trace.states[from..], 2)
}
