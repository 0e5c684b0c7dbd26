//! Lyapunov exponents of the driven and autonomous reservoir.
//!
//! Tangent vectors are pushed through Jacobian-vector products that share a
//! single pass over the recurrent matrix with the state update, then
//! re-orthonormalized with modified Gram–Schmidt. Exponents are natural
//! logarithms per step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::reservoir::{Reservoir, State};
use crate::rng::{SeededRng, STREAM_AUX};
use crate::skeleton::Skeleton;
use crate::training::TrainedModel;

/// Largest tolerated deviation of the renormalized tangent basis from orthonormality.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

/// Callback receiving each step index and the state before it is advanced.
pub type Observer<'a> = &'a mut dyn FnMut(usize, &[f64]);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TangentSettings {
    /// Total iterations, transient included.
    pub steps: usize,
    /// Iterations whose stretching is not averaged.
    pub transient: usize,
    /// Iterations between renormalizations.
    pub renorm_every: usize,
    /// Number of exponents estimated (1 for the maximal one).
    pub n_exponents: usize,
    /// Seed of the initial tangent directions.
    pub tangent_seed: u64,
}

impl Default for TangentSettings {
    fn default() -> Self {
        Self {
            steps: 10_000,
            transient: 2_000,
            renorm_every: 1,
            n_exponents: 1,
            tangent_seed: 0x5eed,
        }
    }
}

impl TangentSettings {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.renorm_every == 0 {
            return Err(Error::Input("renorm_every must be at least 1".into()));
        }
        if self.transient >= self.steps {
            return Err(Error::Input(format!(
                "transient ({}) must be shorter than the run ({})",
                self.transient, self.steps
            )));
        }
        if self.n_exponents == 0 || self.n_exponents > dim {
            return Err(Error::Input(format!(
                "cannot estimate {} exponents of a {dim}-dimensional system",
                self.n_exponents
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovResult {
    /// Exponents in descending order of the initial basis, nats per step.
    pub exponents: Vec<f64>,
    /// Steps whose stretching entered the average.
    pub steps_used: usize,
}

impl LyapunovResult {
    /// The largest exponent.
    pub fn max(&self) -> f64 {
        self.exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A map together with its Jacobian action.
pub trait TangentMap {
    fn dim(&self) -> usize;

    /// Advances `x` by one step (the `k`-th) and replaces each tangent `v`
    /// by `J(x_k) v`, with the Jacobian taken at the pre-step state.
    fn advance(&mut self, k: usize, x: &mut [f64], tangents: &mut [Vec<f64>]);
}

/// Adapter for maps given as closures.
pub struct FnMap<F, G> {
    dim: usize,
    step: F,
    jvp: G,
}

impl<F, G> FnMap<F, G>
where
    F: FnMut(usize, &[f64]) -> Vec<f64>,
    G: FnMut(usize, &[f64], &[f64]) -> Vec<f64>,
{
    /// `step(k, x)` returns the next state; `jvp(k, x, v)` returns `J(x) v`.
    pub fn new(dim: usize, step: F, jvp: G) -> Self {
        Self { dim, step, jvp }
    }
}

impl<F, G> TangentMap for FnMap<F, G>
where
    F: FnMut(usize, &[f64]) -> Vec<f64>,
    G: FnMut(usize, &[f64], &[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn advance(&mut self, k: usize, x: &mut [f64], tangents: &mut [Vec<f64>]) {
        for v in tangents.iter_mut() {
            *v = (self.jvp)(k, x, v);
        }
        let next = (self.step)(k, x);
        x.copy_from_slice(&next);
    }
}

/// The reservoir driven by the skeleton; step `k` consumes `u_{offset + k}`.
pub struct DrivenMap<'a> {
    res: &'a Reservoir,
    skeleton: &'a Skeleton,
    offset: usize,
    products: Vec<Vec<f64>>,
    next: Vec<f64>,
}

impl<'a> DrivenMap<'a> {
    pub fn new(res: &'a Reservoir, skeleton: &'a Skeleton, offset: usize) -> Self {
        Self {
            res,
            skeleton,
            offset,
            products: Vec::new(),
            next: vec![0.0; res.n()],
        }
    }
}

impl TangentMap for DrivenMap<'_> {
    fn dim(&self) -> usize {
        self.res.n()
    }

    fn advance(&mut self, k: usize, x: &mut [f64], tangents: &mut [Vec<f64>]) {
        let n = self.res.n();
        self.products.resize_with(tangents.len() + 1, || vec![0.0; n]);
        {
            let mut inputs: Vec<&[f64]> = Vec::with_capacity(tangents.len() + 1);
            inputs.push(x);
            inputs.extend(tangents.iter().map(Vec::as_slice));
            self.res.w().matvec_many(&inputs, &mut self.products);
        }
        let (a, rho) = (self.res.leak(), self.res.rho());
        let (pre_buf, tangent_products) = self.products.split_at_mut(1);
        let pre = &mut pre_buf[0];
        self.res
            .finish_step_activated(x, self.skeleton.at(self.offset + k), pre, &mut self.next);
        for (v, wv) in tangents.iter_mut().zip(tangent_products.iter()) {
            for i in 0..n {
                let t = pre[i];
                v[i] = (1.0 - a) * v[i] + a * (1.0 - t * t) * rho * wv[i];
            }
        }
        x.copy_from_slice(&self.next);
    }
}

/// The autonomous closed loop `x' = (1 - a) x + a tanh(W_hat x)`.
pub struct ClosedLoopMap<'a> {
    model: &'a TrainedModel,
    products: Vec<Vec<f64>>,
}

impl<'a> ClosedLoopMap<'a> {
    pub fn new(model: &'a TrainedModel) -> Self {
        Self {
            model,
            products: Vec::new(),
        }
    }
}

impl TangentMap for ClosedLoopMap<'_> {
    fn dim(&self) -> usize {
        self.model.n()
    }

    fn advance(&mut self, _k: usize, x: &mut [f64], tangents: &mut [Vec<f64>]) {
        let n = self.model.n();
        self.products.resize_with(tangents.len() + 1, || vec![0.0; n]);
        {
            let mut inputs: Vec<&[f64]> = Vec::with_capacity(tangents.len() + 1);
            inputs.push(x);
            inputs.extend(tangents.iter().map(Vec::as_slice));
            self.model.w_hat.matvec_many(&inputs, &mut self.products);
        }
        let a = self.model.reservoir.leak();
        let (act, tangent_products) = self.products.split_at_mut(1);
        let act = &mut act[0];
        for i in 0..n {
            act[i] = act[i].tanh();
            x[i] = (1.0 - a) * x[i] + a * act[i];
        }
        for (v, wv) in tangents.iter_mut().zip(tangent_products.iter()) {
            for i in 0..n {
                let t = act[i];
                v[i] = (1.0 - a) * v[i] + a * (1.0 - t * t) * wv[i];
            }
        }
    }
}

/// Orthonormalizes `vs` in place (modified Gram–Schmidt, two passes) and
/// returns the diagonal of the triangular factor.
pub fn orthonormalize(vs: &mut [Vec<f64>]) -> Result<Vec<f64>> {
    let mut diag = Vec::with_capacity(vs.len());
    for j in 0..vs.len() {
        let (done, rest) = vs.split_at_mut(j);
        let v = &mut rest[0];
        for _pass in 0..2 {
            for q in done.iter() {
                let c = dot(q, v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let r = norm2(v);
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Numeric(format!(
                "tangent vector {j} has norm {r} after orthogonalization; increase renormalization frequency"
            )));
        }
        v.iter_mut().for_each(|vi| *vi /= r);
        diag.push(r);
    }
    Ok(diag)
}

/// Largest deviation of `vs` from an orthonormal set.
pub fn orthonormality_error(vs: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..vs.len() {
        for j in 0..=i {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(&vs[i], &vs[j]) - target).abs());
        }
    }
    worst
}

fn initial_tangents(dim: usize, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = SeededRng::new(seed, STREAM_AUX);
    let mut vs: Vec<Vec<f64>> = (0..m).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect();
    orthonormalize(&mut vs)?;
    Ok(vs)
}

/// Benettin iteration of `map` from `x0`.
///
/// `observe(k, x_k)` sees every state before it is advanced, so a single
/// pass can record a trajectory and its exponents together. Returns the
/// exponents and the final state.
pub fn propagate<M: TangentMap + ?Sized>(
    map: &mut M,
    x0: &[f64],
    settings: &TangentSettings,
    mut observe: Option<Observer<'_>>,
) -> Result<(LyapunovResult, Vec<f64>)> {
    let dim = map.dim();
    settings.validate(dim)?;
    if x0.len() != dim {
        return Err(Error::Dimension {
            context: "tangent propagation initial state",
            expected: dim,
            got: x0.len(),
        });
    }
    let m = settings.n_exponents;
    let mut x = x0.to_vec();
    let mut tangents = initial_tangents(dim, m, settings.tangent_seed)?;
    let mut sums = vec![0.0; m];
    let mut counted = 0usize;
    let mut block_start = 0usize;
    let r = settings.renorm_every;

    for k in 0..settings.steps {
        if let Some(obs) = observe.as_mut() {
            obs(k, &x);
        }
        map.advance(k, &mut x, &mut tangents);
        let done = k + 1;
        if done % r == 0 || done == settings.steps {
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite state at step {k}")));
            }
            let diag = orthonormalize(&mut tangents)?;
            let err = orthonormality_error(&tangents);
            if err > ORTHONORMALITY_TOL {
                return Err(Error::Numeric(format!(
                    "tangent basis lost orthonormality ({err:.2e}) at step {k}"
                )));
            }
            if block_start >= settings.transient {
                for (s, d) in sums.iter_mut().zip(&diag) {
                    *s += d.ln();
                }
                counted += done - block_start;
            }
            block_start = done;
        }
    }
    if counted == 0 {
        return Err(Error::Input(
            "no renormalization block falls after the transient; lower renorm_every or the transient".into(),
        ));
    }
    let exponents = sums.iter().map(|s| s / counted as f64).collect();
    Ok((
        LyapunovResult {
            exponents,
            steps_used: counted,
        },
        x,
    ))
}

/// Exponents of an arbitrary map from `x0`.
pub fn map_spectrum<M: TangentMap + ?Sized>(map: &mut M, x0: &[f64], settings: &TangentSettings) -> Result<LyapunovResult> {
    propagate(map, x0, settings, None).map(|(r, _)| r)
}

/// Conditional exponents of the reservoir driven by the skeleton from the
/// zero state, skeleton index 0.
pub fn conditional_mle(res: &Reservoir, sk: &Skeleton, settings: &TangentSettings) -> Result<LyapunovResult> {
    conditional_spectrum_from(res, sk, &State::zeros(res.n()), 0, settings, None).map(|(r, _)| r)
}

/// Conditional exponents from `x0`, with step `k` driven by `u_{offset + k}`.
pub fn conditional_spectrum_from(
    res: &Reservoir,
    sk: &Skeleton,
    x0: &[f64],
    offset: usize,
    settings: &TangentSettings,
    observe: Option<Observer<'_>>,
) -> Result<(LyapunovResult, Vec<f64>)> {
    if sk.dim() != res.dim() {
        return Err(Error::Dimension {
            context: "skeleton vs reservoir input",
            expected: res.dim(),
            got: sk.dim(),
        });
    }
    let mut map = DrivenMap::new(res, sk, offset);
    propagate(&mut map, x0, settings, observe)
}

/// Exponents of the closed loop started at `x_start`.
pub fn autonomous_spectrum(model: &TrainedModel, settings: &TangentSettings) -> Result<LyapunovResult> {
    autonomous_spectrum_from(model, &model.x_start, settings, None).map(|(r, _)| r)
}

pub fn autonomous_spectrum_from(
    model: &TrainedModel,
    x0: &[f64],
    settings: &TangentSettings,
    observe: Option<Observer<'_>>,
) -> Result<(LyapunovResult, Vec<f64>)> {
    let mut map = ClosedLoopMap::new(model);
    propagate(&mut map, x0, settings, observe)
}

/// Maximal exponent of the reservoir with no input and no feedback,
/// started from a random state drawn with `init_seed`.
pub fn input_free_mle(res: &Reservoir, settings: &TangentSettings, init_seed: u64) -> Result<LyapunovResult> {
    let model = TrainedModel::without_readout(res, State::random(res.n(), init_seed))?;
    autonomous_spectrum(&model, settings)
}

/// Dense Jacobian of the driven update at `(x, u)`.
pub fn driven_jacobian(res: &Reservoir, x: &[f64], u: &[f64]) -> Result<Matrix> {
    let n = res.n();
    if x.len() != n || u.len() != res.dim() {
        return Err(Error::Dimension {
            context: "driven Jacobian",
            expected: n,
            got: x.len(),
        });
    }
    let mut pre = vec![0.0; n];
    let mut out = vec![0.0; n];
    res.step_into(x, u, &mut pre, &mut out);
    let (a, rho) = (res.leak(), res.rho());
    let w = res.w();
    Ok(Matrix::from_fn(n, n, |i, j| {
        let t = pre[i].tanh();
        let diag = if i == j { 1.0 - a } else { 0.0 };
        diag + a * (1.0 - t * t) * rho * w.get(i, j)
    }))
}

/// Dense Jacobian of the closed loop at `x`.
pub fn autonomous_jacobian(model: &TrainedModel, x: &[f64]) -> Result<Matrix> {
    let n = model.n();
    if x.len() != n {
        return Err(Error::Dimension {
            context: "autonomous Jacobian",
            expected: n,
            got: x.len(),
        });
    }
    let pre = model.w_hat.matvec(x);
    let a = model.reservoir.leak();
    Ok(Matrix::from_fn(n, n, |i, j| {
        let t = pre[i].tanh();
        let diag = if i == j { 1.0 - a } else { 0.0 };
        diag + a * (1.0 - t * t) * model.w_hat.get(i, j)
    }))
}
