//! Teacher forcing, ridge readout, and the autonomous closed loop.

use faer::linalg::solvers::Solve;
use faer::Side;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::reservoir::{Reservoir, State};
use crate::skeleton::Skeleton;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Washout steps discarded before collecting regression rows.
    pub t_init: usize,
    /// Number of regression rows.
    pub t_train: usize,
    /// Ridge regularizer.
    pub beta: f64,
    /// Initial teacher-forcing state; zero when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<State>,
    /// Use a pseudo-inverse when the unregularized normal matrix is singular.
    pub pinv_fallback: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            t_init: 1000,
            t_train: 2000,
            beta: 1e-3,
            x0: None,
            pinv_fallback: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.t_train < dim {
            return Err(Error::Input(format!(
                "t_train = {} is smaller than the skeleton dimension {dim}",
                self.t_train
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Input(format!("beta must be nonnegative, got {}", self.beta)));
        }
        Ok(())
    }

    /// Skeleton index at which the closed loop (or open-loop evaluation) begins.
    pub fn handoff_index(&self) -> usize {
        self.t_init + self.t_train
    }
}

/// Regression data collected under teacher forcing.
#[derive(Debug, Clone)]
pub struct TeacherData {
    /// `t_train x N`, row `j` is the state at step `t_init + j`.
    pub x: Matrix,
    /// `t_train x D`, row `j` is the input at step `t_init + j`.
    pub y: Matrix,
    /// State after the last teacher-forced step.
    pub x_end: State,
}

/// Drives the reservoir with the skeleton and collects `(x_k, u_k)` pairs
/// for `k` in `t_init .. t_init + t_train`.
pub fn teacher_force(res: &Reservoir, sk: &Skeleton, cfg: &TrainingConfig) -> Result<TeacherData> {
    cfg.validate(sk.dim())?;
    if sk.dim() != res.dim() {
        return Err(Error::Dimension {
            context: "skeleton vs reservoir input",
            expected: res.dim(),
            got: sk.dim(),
        });
    }
    let n = res.n();
    let mut x = match &cfg.x0 {
        Some(x0) if x0.len() != n => {
            return Err(Error::Dimension {
                context: "initial state",
                expected: n,
                got: x0.len(),
            })
        }
        Some(x0) => x0.clone(),
        None => State::zeros(n),
    };
    let mut xs = Matrix::zeros(cfg.t_train, n);
    let mut ys = Matrix::zeros(cfg.t_train, sk.dim());
    let mut pre = vec![0.0; n];
    let mut next = State::zeros(n);
    for k in 0..cfg.t_init + cfg.t_train {
        let u = sk.at(k);
        if k >= cfg.t_init {
            let row = k - cfg.t_init;
            xs.row_mut(row).copy_from_slice(&x);
            ys.row_mut(row).copy_from_slice(u);
        }
        res.step_into(&x, u, &mut pre, &mut next);
        std::mem::swap(&mut x, &mut next);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite reservoir state at teacher step {k}")));
        }
    }
    Ok(TeacherData { x: xs, y: ys, x_end: x })
}

/// Ridge readout `W_out = (XᵀX + beta I)⁻¹ XᵀY` via Cholesky.
///
/// A singular normal matrix (possible only at `beta = 0`) is a solver error.
pub fn ridge_readout(x: &Matrix, y: &Matrix, beta: f64) -> Result<Matrix> {
    ridge_readout_with(x, y, beta, false)
}

/// As [`ridge_readout`], optionally falling back to the minimum-norm
/// pseudo-inverse solution when Cholesky fails.
pub fn ridge_readout_with(x: &Matrix, y: &Matrix, beta: f64, pinv_fallback: bool) -> Result<Matrix> {
    if x.rows() != y.rows() {
        return Err(Error::Dimension {
            context: "ridge rows",
            expected: x.rows(),
            got: y.rows(),
        });
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Input(format!("beta must be nonnegative, got {beta}")));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::Numeric("regression data contains non-finite values".into()));
    }
    let n = x.cols();
    let xf = x.to_faer();
    let mut gram = xf.transpose() * &xf;
    for i in 0..n {
        gram[(i, i)] += beta;
    }
    let rhs = xf.transpose() * y.to_faer();

    if let Ok(llt) = gram.llt(Side::Lower) {
        let sol = llt.solve(&rhs);
        let out = Matrix::from_faer(sol.as_ref());
        if out.is_finite() {
            return Ok(out);
        }
    }
    if !pinv_fallback {
        return Err(Error::Solver(format!(
            "normal matrix is not positive definite (beta = {beta}); regression data is rank deficient"
        )));
    }
    log::warn!("ridge system singular at beta = {beta}; using pseudo-inverse");
    let eig = gram
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Solver(format!("eigendecomposition of normal matrix failed: {e:?}")))?;
    let (u, s) = (eig.U(), eig.S());
    let s = s.column_vector();
    let smax = (0..n).map(|i| s[i].abs()).fold(0.0, f64::max);
    let cutoff = smax * n as f64 * f64::EPSILON;
    if smax == 0.0 {
        return Ok(Matrix::zeros(n, y.cols()));
    }
    // W = U diag(1/s) Uᵀ rhs over the retained eigenpairs.
    let proj = u.transpose() * &rhs;
    let mut scaled = proj.clone();
    for i in 0..n {
        let inv = if s[i] > cutoff { 1.0 / s[i] } else { 0.0 };
        for j in 0..rhs.ncols() {
            scaled[(i, j)] = proj[(i, j)] * inv;
        }
    }
    let sol = u * scaled;
    Ok(Matrix::from_faer(sol.as_ref()))
}

/// A trained, autonomous reservoir.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub reservoir: Reservoir,
    /// `N x D` readout.
    pub w_out: Matrix,
    /// Composed closed-loop matrix `rho W + sigma W_in W_outᵀ`.
    pub w_hat: Matrix,
    /// Closed-loop initial state: the final teacher-forced state.
    pub x_start: State,
    pub config: TrainingConfig,
}

/// Builds `W_hat = rho W + sigma W_in W_outᵀ` and packages the closed loop.
pub fn compose_closed_loop(res: &Reservoir, w_out: Matrix, x_start: State, config: TrainingConfig) -> Result<TrainedModel> {
    let (n, d) = (res.n(), res.dim());
    if w_out.rows() != n || w_out.cols() != d {
        return Err(Error::Dimension {
            context: "readout matrix",
            expected: n * d,
            got: w_out.rows() * w_out.cols(),
        });
    }
    if x_start.len() != n {
        return Err(Error::Dimension {
            context: "closed-loop start state",
            expected: n,
            got: x_start.len(),
        });
    }
    let (rho, sigma) = (res.rho(), res.sigma());
    let (w, w_in) = (res.w(), res.w_in());
    let mut w_hat = Matrix::zeros(n, n);
    for i in 0..n {
        let w_row = w.row(i);
        let in_row = w_in.row(i);
        let out_row = w_hat.row_mut(i);
        for j in 0..n {
            let mut feedback = 0.0;
            for (c, &wic) in in_row.iter().enumerate() {
                feedback += wic * w_out.get(j, c);
            }
            out_row[j] = rho * w_row[j] + sigma * feedback;
        }
    }
    Ok(TrainedModel {
        reservoir: res.clone(),
        w_out,
        w_hat,
        x_start,
        config,
    })
}

/// Teacher forcing, ridge fit, and closed-loop composition in one call.
pub fn train(res: &Reservoir, sk: &Skeleton, cfg: &TrainingConfig) -> Result<TrainedModel> {
    let data = teacher_force(res, sk, cfg)?;
    let w_out = ridge_readout_with(&data.x, &data.y, cfg.beta, cfg.pinv_fallback)?;
    compose_closed_loop(res, w_out, data.x_end, cfg.clone())
}

impl TrainedModel {
    /// The input-free network (`W_out = 0`) started from `x_start`.
    pub fn without_readout(res: &Reservoir, x_start: State) -> Result<TrainedModel> {
        let cfg = TrainingConfig {
            t_init: 0,
            t_train: 0,
            ..TrainingConfig::default()
        };
        compose_closed_loop(res, Matrix::zeros(res.n(), res.dim()), x_start, cfg)
    }

    pub fn n(&self) -> usize {
        self.reservoir.n()
    }

    pub fn dim(&self) -> usize {
        self.reservoir.dim()
    }

    /// `z = W_outᵀ x`.
    pub fn readout(&self, x: &[f64]) -> Vec<f64> {
        self.w_out.tr_matvec(x)
    }

    /// One closed-loop step `x' = (1 - a) x + a tanh(W_hat x)`.
    pub fn closed_step(&self, x: &State) -> Result<State> {
        if x.len() != self.n() {
            return Err(Error::Dimension {
                context: "closed-loop state",
                expected: self.n(),
                got: x.len(),
            });
        }
        let mut pre = vec![0.0; self.n()];
        let mut out = State::zeros(self.n());
        self.closed_step_into(x, &mut pre, &mut out);
        Ok(out)
    }

    #[inline]
    pub fn closed_step_into(&self, x: &[f64], pre: &mut [f64], out: &mut [f64]) {
        self.w_hat.matvec_into(x, pre);
        let a = self.reservoir.leak();
        for i in 0..out.len() {
            out[i] = (1.0 - a) * x[i] + a * pre[i].tanh();
        }
    }

    pub fn effective_radius_post(&self) -> Result<f64> {
        self.reservoir.effective_radius_post(&self.w_hat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    OpenLoop,
    ClosedLoop,
}

/// What a run keeps besides outputs and node averages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordOptions {
    /// Keep every full state (memory `steps x N`).
    pub states: bool,
    /// Individual nodes whose time series are kept.
    pub nodes: Vec<usize>,
}

impl RecordOptions {
    pub fn full() -> Self {
        Self {
            states: true,
            nodes: Vec::new(),
        }
    }

    pub fn nodes(nodes: Vec<usize>) -> Self {
        Self { states: false, nodes }
    }
}

/// A simulated trajectory. Entry `k` of every series refers to the same step.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub mode: RunMode,
    /// Skeleton index aligned with step 0 (open loop only).
    pub start_index: usize,
    /// `z_k = W_outᵀ x_k`.
    pub outputs: Vec<Vec<f64>>,
    /// `(1/N) sum_i x_k^i`.
    pub node_means: Vec<f64>,
    /// Full states, when recorded.
    pub states: Vec<State>,
    /// `(node index, series)` for each monitored node.
    pub node_series: Vec<(usize, Vec<f64>)>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.outputs.first().map_or(0, Vec::len)
    }

    /// Time series of output component `c`.
    pub fn output_component(&self, c: usize) -> Vec<f64> {
        self.outputs.iter().map(|z| z[c]).collect()
    }

    /// Time series of node `i`, from the monitored series or the full states.
    pub fn node(&self, i: usize) -> Option<Vec<f64>> {
        if let Some((_, s)) = self.node_series.iter().find(|(j, _)| *j == i) {
            return Some(s.clone());
        }
        if !self.states.is_empty() && i < self.states[0].len() {
            return Some(self.states.iter().map(|x| x[i]).collect());
        }
        None
    }

    /// Copy restricted to steps `from..`.
    pub fn tail(&self, from: usize) -> RunTrace {
        let from = from.min(self.len());
        RunTrace {
            mode: self.mode,
            start_index: self.start_index + from,
            outputs: self.outputs[from..].to_vec(),
            node_means: self.node_means[from..].to_vec(),
            states: if self.states.is_empty() {
                Vec::new()
            } else {
                self.states[from..].to_vec()
            },
            node_series: self.node_series.iter().map(|(i, s)| (*i, s[from..].to_vec())).collect(),
        }
    }
}

/// Accumulates a [`RunTrace`] one state at a time.
#[derive(Debug)]
pub struct TraceRecorder<'a> {
    w_out: &'a Matrix,
    options: RecordOptions,
    trace: RunTrace,
}

impl<'a> TraceRecorder<'a> {
    pub fn new(w_out: &'a Matrix, mode: RunMode, start_index: usize, options: RecordOptions, capacity: usize) -> Self {
        let node_series = options.nodes.iter().map(|&i| (i, Vec::with_capacity(capacity))).collect();
        Self {
            w_out,
            trace: RunTrace {
                mode,
                start_index,
                outputs: Vec::with_capacity(capacity),
                node_means: Vec::with_capacity(capacity),
                states: Vec::new(),
                node_series,
            },
            options,
        }
    }

    pub fn observe(&mut self, x: &[f64]) {
        self.trace.outputs.push(self.w_out.tr_matvec(x));
        self.trace.node_means.push(x.iter().sum::<f64>() / x.len() as f64);
        if self.options.states {
            self.trace.states.push(State::from_vec(x.to_vec()));
        }
        for (i, s) in &mut self.trace.node_series {
            s.push(x[*i]);
        }
    }

    pub fn finish(self) -> RunTrace {
        self.trace
    }
}

fn check_nodes(options: &RecordOptions, n: usize) -> Result<()> {
    if let Some(&bad) = options.nodes.iter().find(|&&i| i >= n) {
        return Err(Error::Input(format!("monitored node {bad} out of range for N = {n}")));
    }
    Ok(())
}

/// Drives the trained reservoir with the true skeleton from `x_start`,
/// recording the readout for `steps` steps. Step 0 is aligned with skeleton
/// index `t_init + t_train`.
pub fn run_open_loop(model: &TrainedModel, sk: &Skeleton, steps: usize, options: RecordOptions) -> Result<RunTrace> {
    if steps == 0 {
        return Err(Error::Input("run needs at least one step".into()));
    }
    check_nodes(&options, model.n())?;
    let res = &model.reservoir;
    let start = model.config.handoff_index();
    let mut rec = TraceRecorder::new(&model.w_out, RunMode::OpenLoop, start, options, steps);
    let mut x = model.x_start.clone();
    let mut pre = vec![0.0; model.n()];
    let mut next = State::zeros(model.n());
    for k in 0..steps {
        rec.observe(&x);
        res.step_into(&x, sk.at(start + k), &mut pre, &mut next);
        std::mem::swap(&mut x, &mut next);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite state at open-loop step {k}")));
        }
    }
    Ok(rec.finish())
}

/// Iterates the autonomous closed loop from `x_start` for `steps` steps.
pub fn run_closed_loop(model: &TrainedModel, steps: usize, options: RecordOptions) -> Result<RunTrace> {
    run_closed_loop_from(model, &model.x_start, steps, options)
}

pub fn run_closed_loop_from(model: &TrainedModel, x0: &State, steps: usize, options: RecordOptions) -> Result<RunTrace> {
    if steps == 0 {
        return Err(Error::Input("run needs at least one step".into()));
    }
    check_nodes(&options, model.n())?;
    let mut rec = TraceRecorder::new(&model.w_out, RunMode::ClosedLoop, 0, options, steps);
    let mut x = x0.clone();
    let mut pre = vec![0.0; model.n()];
    let mut next = State::zeros(model.n());
    for k in 0..steps {
        rec.observe(&x);
        model.closed_step_into(&x, &mut pre, &mut next);
        std::mem::swap(&mut x, &mut next);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite state at closed-loop step {k}")));
        }
    }
    Ok(rec.finish())
}
