//! Leaky-integrator echo state network.
//!
//! The state update is
//! `x' = (1 - a) x + a tanh(rho W x + sigma W_in u)`
//! with `W` a dense standard-normal matrix rescaled to unit spectral radius
//! and `W_in` uniform on `[-1, 1]`.

use std::ops::{Deref, DerefMut};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{SeededRng, STREAM_AUX, STREAM_INPUT, STREAM_RECURRENT};

/// Hyper-parameters that fully determine a reservoir.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirSpec {
    /// Number of nodes `N`.
    pub n_nodes: usize,
    /// Leak rate `a` in `(0, 1]`.
    pub leak_rate: f64,
    /// Spectral scale `rho` applied to the unit-radius recurrent matrix.
    pub spectral_scale: f64,
    /// Input intensity `sigma`.
    pub input_scale: f64,
    pub seed: u64,
    /// Input dimension `D`.
    pub input_dim: usize,
}

impl ReservoirSpec {
    pub fn new(n_nodes: usize, input_dim: usize, leak_rate: f64, spectral_scale: f64, input_scale: f64, seed: u64) -> Self {
        Self {
            n_nodes,
            leak_rate,
            spectral_scale,
            input_scale,
            seed,
            input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.leak_rate > 0.0 && self.leak_rate <= 1.0) {
            return Err(Error::Input(format!("leak rate must lie in (0, 1], got {}", self.leak_rate)));
        }
        if !(self.spectral_scale > 0.0 && self.spectral_scale.is_finite()) {
            return Err(Error::Input(format!(
                "spectral scale must be positive, got {}",
                self.spectral_scale
            )));
        }
        if !(self.input_scale >= 0.0 && self.input_scale.is_finite()) {
            return Err(Error::Input(format!(
                "input scale must be nonnegative, got {}",
                self.input_scale
            )));
        }
        if self.input_dim == 0 || self.n_nodes < self.input_dim {
            return Err(Error::Input(format!(
                "need N >= D >= 1, got N = {}, D = {}",
                self.n_nodes, self.input_dim
            )));
        }
        Ok(())
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.spectral_scale = rho;
        self
    }
}

/// Reservoir state vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State(Vec<f64>);

impl State {
    pub fn zeros(n: usize) -> Self {
        State(vec![0.0; n])
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        State(v)
    }

    /// Uniform random state on `[-1, 1]^n`.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed, STREAM_AUX);
        State((0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_bounded(&self) -> bool {
        self.0.iter().all(|v| (-1.0..=1.0).contains(v))
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            self.0.iter().sum::<f64>() / self.0.len() as f64
        }
    }
}

impl AsRef<[f64]> for State {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for State {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for State {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// A constructed reservoir. Cloning is cheap: the matrices are shared.
#[derive(Debug, Clone)]
pub struct Reservoir {
    spec: ReservoirSpec,
    w: Arc<Matrix>,
    w_in: Arc<Matrix>,
    /// Eigenvalues of `w`, filled at construction or on first use.
    w_spectrum: Arc<OnceLock<Vec<(f64, f64)>>>,
}

/// Draws `W` and `W_in` for `spec` and rescales `W` to unit spectral radius.
pub fn build_reservoir(spec: ReservoirSpec) -> Result<Reservoir> {
    spec.validate()?;
    let n = spec.n_nodes;
    let mut rng = SeededRng::new(spec.seed, STREAM_RECURRENT);
    let raw = Matrix::from_fn(n, n, |_, _| rng.normal());
    let raw_spectrum = linalg::eigenvalues(&raw)?;
    let radius = raw_spectrum.iter().map(|(re, im)| re.hypot(*im)).fold(0.0, f64::max);
    if !(radius > 1e-12) {
        return Err(Error::Numeric(format!(
            "degenerate recurrent draw: spectral radius {radius:e}"
        )));
    }
    let w = raw.scaled(1.0 / radius);
    let spectrum: Vec<(f64, f64)> = raw_spectrum.iter().map(|(re, im)| (re / radius, im / radius)).collect();

    let mut rng = SeededRng::new(spec.seed, STREAM_INPUT);
    let w_in = Matrix::from_fn(n, spec.input_dim, |_, _| rng.uniform_in(-1.0, 1.0));

    let cell = OnceLock::new();
    let _ = cell.set(spectrum);
    Ok(Reservoir {
        spec,
        w: Arc::new(w),
        w_in: Arc::new(w_in),
        w_spectrum: Arc::new(cell),
    })
}

impl Reservoir {
    /// Assembles a reservoir from explicit matrices (e.g. a dump being replayed).
    pub fn from_parts(spec: ReservoirSpec, w: Matrix, w_in: Matrix) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_nodes;
        if w.rows() != n || w.cols() != n {
            return Err(Error::Dimension {
                context: "recurrent matrix",
                expected: n,
                got: if w.rows() != n { w.rows() } else { w.cols() },
            });
        }
        if w_in.rows() != n || w_in.cols() != spec.input_dim {
            return Err(Error::Dimension {
                context: "input matrix",
                expected: n * spec.input_dim,
                got: w_in.rows() * w_in.cols(),
            });
        }
        Ok(Self {
            spec,
            w: Arc::new(w),
            w_in: Arc::new(w_in),
            w_spectrum: Arc::new(OnceLock::new()),
        })
    }

    pub fn spec(&self) -> &ReservoirSpec {
        &self.spec
    }

    /// Recurrent matrix with unit spectral radius.
    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn w_in(&self) -> &Matrix {
        &self.w_in
    }

    pub fn n(&self) -> usize {
        self.spec.n_nodes
    }

    pub fn dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn rho(&self) -> f64 {
        self.spec.spectral_scale
    }

    pub fn leak(&self) -> f64 {
        self.spec.leak_rate
    }

    pub fn sigma(&self) -> f64 {
        self.spec.input_scale
    }

    /// Same matrices, different spectral scale.
    pub fn with_rho(&self, rho: f64) -> Result<Reservoir> {
        let spec = self.spec.with_rho(rho);
        spec.validate()?;
        Ok(Reservoir {
            spec,
            w: Arc::clone(&self.w),
            w_in: Arc::clone(&self.w_in),
            w_spectrum: Arc::clone(&self.w_spectrum),
        })
    }

    /// Same recurrent matrix and input matrix, different leak rate.
    pub fn with_leak(&self, leak: f64) -> Result<Reservoir> {
        let mut spec = self.spec;
        spec.leak_rate = leak;
        spec.validate()?;
        Ok(Reservoir {
            spec,
            w: Arc::clone(&self.w),
            w_in: Arc::clone(&self.w_in),
            w_spectrum: Arc::clone(&self.w_spectrum),
        })
    }

    /// Eigenvalues of the unit-radius recurrent matrix.
    pub fn w_spectrum(&self) -> Result<&[(f64, f64)]> {
        if let Some(s) = self.w_spectrum.get() {
            return Ok(s);
        }
        let s = linalg::eigenvalues(&self.w)?;
        Ok(self.w_spectrum.get_or_init(|| s))
    }

    /// One update step. Checks dimensions.
    pub fn step(&self, x: &State, u: &[f64]) -> Result<State> {
        if x.len() != self.n() {
            return Err(Error::Dimension {
                context: "reservoir state",
                expected: self.n(),
                got: x.len(),
            });
        }
        if u.len() != self.dim() {
            return Err(Error::Dimension {
                context: "reservoir input",
                expected: self.dim(),
                got: u.len(),
            });
        }
        let mut pre = vec![0.0; self.n()];
        let mut out = State::zeros(self.n());
        self.step_into(x, u, &mut pre, &mut out);
        Ok(out)
    }

    /// Unchecked update into caller-provided buffers.
    ///
    /// On return `pre` holds the tanh argument `rho W x + sigma W_in u`,
    /// which tangent propagation reuses for the Jacobian.
    #[inline]
    pub fn step_into(&self, x: &[f64], u: &[f64], pre: &mut [f64], out: &mut [f64]) {
        self.w.matvec_into(x, pre);
        self.finish_step(x, u, pre, out);
    }

    /// Completes a step given `pre = W x`, leaving `tanh` of the argument in `pre`.
    #[inline]
    pub(crate) fn finish_step_activated(&self, x: &[f64], u: &[f64], pre: &mut [f64], out: &mut [f64]) {
        let (a, rho, sigma) = (self.leak(), self.rho(), self.sigma());
        let d = self.dim();
        let w_in = self.w_in.as_slice();
        for i in 0..pre.len() {
            let row = &w_in[i * d..(i + 1) * d];
            let mut drive = 0.0;
            for (wij, uj) in row.iter().zip(u) {
                drive += wij * uj;
            }
            let t = (rho * pre[i] + sigma * drive).tanh();
            pre[i] = t;
            out[i] = (1.0 - a) * x[i] + a * t;
        }
    }

    /// Completes a step given `pre = W x` already computed.
    #[inline]
    pub(crate) fn finish_step(&self, x: &[f64], u: &[f64], pre: &mut [f64], out: &mut [f64]) {
        let (a, rho, sigma) = (self.leak(), self.rho(), self.sigma());
        let d = self.dim();
        let w_in = self.w_in.as_slice();
        for i in 0..pre.len() {
            let row = &w_in[i * d..(i + 1) * d];
            let mut drive = 0.0;
            for (wij, uj) in row.iter().zip(u) {
                drive += wij * uj;
            }
            pre[i] = rho * pre[i] + sigma * drive;
            out[i] = (1.0 - a) * x[i] + a * pre[i].tanh();
        }
    }

    /// Effective spectral radius before training: `|lambda|max(a rho W + (1 - a) I)`.
    ///
    /// Evaluated from the cached spectrum of `W`, since the eigenvalues of
    /// `a rho W + (1 - a) I` are `a rho mu + (1 - a)` for eigenvalues `mu` of `W`.
    pub fn effective_radius_pre(&self) -> Result<f64> {
        let (a, rho) = (self.leak(), self.rho());
        Ok(self
            .w_spectrum()?
            .iter()
            .map(|&(re, im)| (a * rho * re + 1.0 - a).hypot(a * rho * im))
            .fold(0.0, f64::max))
    }

    /// Effective spectral radius of a composed closed-loop matrix:
    /// `|lambda|max(a W_hat + (1 - a) I)`.
    pub fn effective_radius_post(&self, w_hat: &Matrix) -> Result<f64> {
        if w_hat.rows() != self.n() || !w_hat.is_square() {
            return Err(Error::Dimension {
                context: "composed matrix",
                expected: self.n(),
                got: w_hat.rows(),
            });
        }
        let a = self.leak();
        linalg::spectral_radius(&w_hat.scaled_plus_identity(a, 1.0 - a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, d: usize, a: f64, rho: f64, seed: u64) -> ReservoirSpec {
        ReservoirSpec::new(n, d, a, rho, 0.2, seed)
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(build_reservoir(spec(10, 2, 0.0, 1.0, 1)).is_err());
        assert!(build_reservoir(spec(10, 2, 1.5, 1.0, 1)).is_err());
        assert!(build_reservoir(spec(10, 2, 0.5, 0.0, 1)).is_err());
        assert!(build_reservoir(spec(1, 2, 0.5, 1.0, 1)).is_err());
        let mut s = spec(10, 2, 0.5, 1.0, 1);
        s.input_scale = -0.1;
        assert!(build_reservoir(s).is_err());
    }

    #[test]
    fn unit_spectral_radius_after_scaling() {
        for (n, seed) in [(2, 1), (2, 99), (7, 3), (50, 4)] {
            let r = build_reservoir(spec(n, 1, 0.5, 1.0, seed)).unwrap();
            let rad = linalg::spectral_radius(r.w()).unwrap();
            assert!((rad - 1.0).abs() < 1e-9, "n={n} seed={seed} radius={rad}");
        }
    }

    #[test]
    fn input_weights_in_unit_interval() {
        let r = build_reservoir(spec(40, 3, 0.5, 1.0, 5)).unwrap();
        assert!(r.w_in().as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn seeded_construction_is_bit_identical() {
        let a = build_reservoir(spec(30, 2, 0.5, 1.1, 11)).unwrap();
        let b = build_reservoir(spec(30, 2, 0.5, 1.1, 11)).unwrap();
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.w()), bits(b.w()));
        assert_eq!(bits(a.w_in()), bits(b.w_in()));
        let c = build_reservoir(spec(30, 2, 0.5, 1.1, 12)).unwrap();
        assert_ne!(bits(a.w()), bits(c.w()));
    }

    #[test]
    fn recurrent_matrix_does_not_depend_on_input_dim() {
        let a = build_reservoir(spec(20, 2, 0.5, 1.0, 8)).unwrap();
        let b = build_reservoir(spec(20, 3, 0.5, 1.0, 8)).unwrap();
        assert_eq!(a.w(), b.w());
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let r = build_reservoir(spec(12, 2, 0.5, 1.3, 2)).unwrap();
        let x = r.step(&State::zeros(12), &[0.0, 0.0]).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_leak_is_plain_tanh() {
        let r = build_reservoir(spec(9, 2, 1.0, 0.9, 3)).unwrap();
        let x0 = State::random(9, 4);
        let u = [0.3, -0.7];
        let x1 = r.step(&x0, &u).unwrap();
        let wx = r.w().matvec(&x0);
        let win_u = r.w_in().matvec(&u);
        for i in 0..9 {
            let want = (0.9 * wx[i] + 0.2 * win_u[i]).tanh();
            assert_eq!(x1[i], want);
        }
    }

    #[test]
    fn step_rejects_wrong_dimensions() {
        let r = build_reservoir(spec(6, 2, 0.5, 1.0, 1)).unwrap();
        assert!(matches!(r.step(&State::zeros(5), &[0.0, 0.0]), Err(Error::Dimension { .. })));
        assert!(matches!(r.step(&State::zeros(6), &[0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn effective_radius_pre_full_leak_is_rho() {
        let r = build_reservoir(spec(25, 1, 1.0, 1.37, 6)).unwrap();
        assert!((r.effective_radius_pre().unwrap() - 1.37).abs() < 1e-9);
    }

    #[test]
    fn cached_spectrum_matches_direct_solve() {
        let r = build_reservoir(spec(40, 2, 0.5, 1.2, 7)).unwrap();
        let direct = linalg::spectral_radius(&r.w().scaled_plus_identity(0.5 * 1.2, 0.5)).unwrap();
        assert!((r.effective_radius_pre().unwrap() - direct).abs() < 1e-10);
        let replay = Reservoir::from_parts(*r.spec(), r.w().clone(), r.w_in().clone()).unwrap();
        assert!((replay.effective_radius_pre().unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn post_radius_with_untrained_matrix_equals_pre() {
        let r = build_reservoir(spec(30, 2, 0.5, 1.1, 9)).unwrap();
        let w_hat = r.w().scaled(r.rho());
        let post = r.effective_radius_post(&w_hat).unwrap();
        assert!((post - r.effective_radius_pre().unwrap()).abs() < 1e-10);
    }
}
