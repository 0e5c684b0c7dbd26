//! Locating the edge of chaos, the supervised point, and the chaotic
//! attractors that still follow the skeleton.

use serde::{Deserialize, Serialize};

use crate::analysis::{AnalysisReport, Classification};
use crate::error::{Error, Result};
use crate::experiment::{evaluate_point, EvalConfig};
use crate::lyapunov::{conditional_mle, TangentSettings};
use crate::reservoir::Reservoir;
use crate::skeleton::Skeleton;
use crate::training::TrainingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// `|MLE|` at or below this counts as periodic; above it as chaotic.
    pub mle_periodic_tol: f64,
    /// Upper bound on the mean figure-eight index.
    pub q_threshold: f64,
    /// Upper bound on the mean nearest-sample distance, for skeletons
    /// without a closed-form index.
    pub shape_threshold: f64,
    /// Upper bound on open-loop prediction error for a supervised point.
    pub rmse_threshold: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            mle_periodic_tol: 1e-3,
            q_threshold: 1e-2,
            shape_threshold: 2e-2,
            rmse_threshold: 1e-2,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mle_periodic_tol, self.q_threshold, self.shape_threshold, self.rmse_threshold];
        if all.iter().all(|t| *t > 0.0 && t.is_finite()) {
            Ok(())
        } else {
            Err(Error::Input("thresholds must be positive and finite".into()))
        }
    }
}

/// Classification rule on a maximal exponent and a shape value.
pub fn classify_values(mle: f64, shape: f64, shape_threshold: f64, mle_tol: f64) -> Classification {
    let along = shape < shape_threshold;
    if mle.abs() <= mle_tol && along {
        Classification::SupervisedPeriodic
    } else if mle > mle_tol && along {
        Classification::SemiSupervisedChaos
    } else if mle > mle_tol {
        Classification::CollapsedChaos
    } else {
        Classification::UntrainedOther
    }
}

/// Classifies a report with the shape metric and threshold it records.
pub fn classify(report: &AnalysisReport, thresholds: &Thresholds) -> Classification {
    classify_values(report.mle, report.shape_value(), report.shape_threshold, thresholds.mle_periodic_tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub rho_lo: f64,
    pub rho_hi: f64,
    /// Points of the uniform pre-scan of the bracket.
    pub coarse_points: usize,
    pub grid_step: f64,
    pub max_bisections: usize,
    /// Pre-scan exponents within this distance below zero are not trusted
    /// as negative when choosing the bracket to bisect.
    pub edge_zero_band: f64,
    /// Spacing of the downward ladder for the supervised point.
    pub ladder_step: f64,
    /// Lowest value the ladder may reach.
    pub ladder_floor: f64,
    /// Bracket width at which the supervised refinement stops.
    pub supervised_resolution: f64,
    /// Grid steps scanned past the edge.
    pub extend_steps: usize,
    /// End the interval scan once this many candidates are found; the full
    /// interval is scanned when absent.
    pub stop_after_candidates: Option<usize>,
    /// Visit the scan grid from its top end (past the edge) downward.
    pub scan_descending: bool,
    /// Evaluate at most this many scan points, in visiting order.
    pub max_scan_points: Option<usize>,
    /// Output component gated by the RMSE criterion; all components when absent.
    pub rmse_component: Option<usize>,
    pub thresholds: Thresholds,
    /// Settings for the conditional exponent during the edge search.
    pub edge_tangent: TangentSettings,
    pub seeds: Vec<u64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            rho_lo: 0.8,
            rho_hi: 1.6,
            coarse_points: 16,
            grid_step: 5e-4,
            max_bisections: 20,
            edge_zero_band: 1e-3,
            ladder_step: 0.05,
            ladder_floor: 0.5,
            supervised_resolution: 4e-3,
            extend_steps: 10,
            stop_after_candidates: None,
            scan_descending: false,
            max_scan_points: None,
            rmse_component: Some(0),
            thresholds: Thresholds::default(),
            edge_tangent: TangentSettings::default(),
            seeds: vec![1, 2, 3],
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_lo < self.rho_hi && self.rho_lo > 0.0 && self.rho_hi.is_finite()) {
            return Err(Error::Input(format!(
                "edge bracket must satisfy 0 < rho_lo < rho_hi, got [{}, {}]",
                self.rho_lo, self.rho_hi
            )));
        }
        if self.coarse_points < 2 {
            return Err(Error::Input("the pre-scan needs at least two points".into()));
        }
        if !(self.edge_zero_band >= 0.0 && self.edge_zero_band.is_finite()) {
            return Err(Error::Input(format!("edge_zero_band must be nonnegative, got {}", self.edge_zero_band)));
        }
        for (name, v) in [
            ("grid_step", self.grid_step),
            ("ladder_step", self.ladder_step),
            ("supervised_resolution", self.supervised_resolution),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Input(format!("{name} must be positive, got {v}")));
            }
        }
        self.thresholds.validate()
    }
}

/// Outcome of the edge search, with every conditional exponent evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSearch {
    pub rho_edge: f64,
    /// `(rho, CLE)` in evaluation order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Edge search on an arbitrary exponent function.
///
/// Pre-scans `coarse_points` uniform values of the bracket and bisects
/// the last transition from negative to nonnegative down to `grid_step`.
/// The transition starts at the last pre-scan value clearly below zero
/// (under `-edge_zero_band`) and ends at the next nonnegative one, so a
/// stretch of near-zero estimates past the real crossing is skipped.
/// Returns the largest evaluated value with a negative exponent inside the
/// final bracket.
pub fn locate_edge(mut cle: impl FnMut(f64) -> Result<f64>, cfg: &SearchConfig) -> Result<EdgeSearch> {
    cfg.validate()?;
    let (lo, hi, m) = (cfg.rho_lo, cfg.rho_hi, cfg.coarse_points);
    let mut evaluations = Vec::new();
    let mut grid = Vec::with_capacity(m);
    for i in 0..m {
        let rho = if i + 1 == m { hi } else { lo + (hi - lo) * i as f64 / (m - 1) as f64 };
        let c = cle(rho)?;
        log::debug!("edge pre-scan rho = {rho:.6}: CLE = {c:.6}");
        evaluations.push((rho, c));
        grid.push((rho, c));
    }
    let (cle_lo, cle_hi) = (grid[0].1, grid[m - 1].1);
    if !(cle_lo < 0.0 && cle_hi >= 0.0) {
        return Err(Error::Bracket {
            rho_lo: lo,
            rho_hi: hi,
            cle_lo,
            cle_hi,
        });
    }
    let i = (0..m - 1).rev().find(|&i| grid[i].1 < -cfg.edge_zero_band).unwrap_or(0);
    let j = (i + 1..m).find(|&j| grid[j].1 >= 0.0).expect("the upper endpoint is nonnegative");
    let (mut a, mut b) = (grid[i].0, grid[j].0);
    let mut bisections = 0;
    while b - a > cfg.grid_step && bisections < cfg.max_bisections {
        let mid = 0.5 * (a + b);
        let c = cle(mid)?;
        log::debug!("edge bisection rho = {mid:.6}: CLE = {c:.6}");
        evaluations.push((mid, c));
        if c < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        bisections += 1;
    }
    Ok(EdgeSearch { rho_edge: a, evaluations })
}

/// Edge of chaos of the reservoir family `base.with_rho(rho)` driven by `sk`.
pub fn find_edge(base: &Reservoir, sk: &Skeleton, cfg: &SearchConfig) -> Result<EdgeSearch> {
    locate_edge(
        |rho| Ok(conditional_mle(&base.with_rho(rho)?, sk, &cfg.edge_tangent)?.max()),
        cfg,
    )
}

/// Whether a report meets every supervised-point criterion.
pub fn is_supervised(report: &AnalysisReport, cfg: &SearchConfig) -> bool {
    let rmse_ok = match cfg.rmse_component {
        Some(c) => report.rmse.get(c).is_some_and(|&e| e < cfg.thresholds.rmse_threshold),
        None => report.rmse.iter().all(|&e| e < cfg.thresholds.rmse_threshold),
    };
    rmse_ok && classify(report, &cfg.thresholds) == Classification::SupervisedPeriodic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedSearch {
    pub rho_supervised: Option<f64>,
    pub evaluated: Vec<PointOutcome>,
}

/// Largest supervised value below the edge found by a downward ladder and
/// a bisection between the accepted rung and the one above it.
pub fn locate_supervised(
    mut evaluate: impl FnMut(f64) -> PointOutcome,
    accept: impl Fn(&AnalysisReport) -> bool,
    rho_edge: f64,
    cfg: &SearchConfig,
) -> Result<SupervisedSearch> {
    cfg.validate()?;
    let mut evaluated = Vec::new();
    let mut check = |rho: f64, evaluated: &mut Vec<PointOutcome>| {
        let out = evaluate(rho);
        let ok = out.report.as_ref().is_some_and(&accept);
        evaluated.push(out);
        ok
    };
    let mut above = rho_edge;
    let mut good = None;
    let mut j = 1;
    loop {
        let rho = rho_edge - cfg.ladder_step * j as f64;
        if rho < cfg.ladder_floor {
            break;
        }
        if check(rho, &mut evaluated) {
            good = Some(rho);
            break;
        }
        above = rho;
        j += 1;
    }
    let Some(mut g) = good else {
        return Ok(SupervisedSearch {
            rho_supervised: None,
            evaluated,
        });
    };
    let mut b = above;
    let mut steps = 0;
    while b - g > cfg.supervised_resolution && steps < cfg.max_bisections {
        let mid = 0.5 * (g + b);
        if check(mid, &mut evaluated) {
            g = mid;
        } else {
            b = mid;
        }
        steps += 1;
    }
    Ok(SupervisedSearch {
        rho_supervised: Some(g),
        evaluated,
    })
}

/// Result of evaluating one grid point; failures are kept, not raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointOutcome {
    /// The swept value: rho, or the washout length in a washout sweep.
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<AnalysisReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PointOutcome {
    pub fn from_result(rho: f64, r: Result<AnalysisReport>) -> Self {
        match r {
            Ok(report) => Self {
                rho,
                report: Some(report),
                error: None,
            },
            Err(e) => {
                log::warn!("evaluation at rho = {rho} failed: {e}");
                Self {
                    rho,
                    report: None,
                    error: Some(e.to_string()),
                }
            }
        }
    }
}

fn evaluator<'a>(
    base: &'a Reservoir,
    sk: &'a Skeleton,
    train: &'a TrainingConfig,
    eval: &'a EvalConfig,
) -> impl Fn(f64) -> PointOutcome + Sync + 'a {
    move |rho| {
        let r = base
            .with_rho(rho)
            .and_then(|res| evaluate_point(&res, sk, train, eval))
            .map(|p| p.report);
        if let Ok(rep) = &r {
            log::info!(
                "seed {} rho = {rho:.5}: CLE = {:.5}, MLE = {:.5}, shape = {:.3e}, {}",
                rep.seed,
                rep.cle,
                rep.mle,
                rep.shape_value(),
                rep.classification
            );
        }
        PointOutcome::from_result(rho, r)
    }
}

pub fn find_supervised(
    base: &Reservoir,
    sk: &Skeleton,
    train: &TrainingConfig,
    eval: &EvalConfig,
    cfg: &SearchConfig,
    rho_edge: f64,
) -> Result<SupervisedSearch> {
    let f = evaluator(base, sk, train, eval);
    locate_supervised(f, |r| is_supervised(r, cfg), rho_edge, cfg)
}

/// Grid `rho_supervised, rho_supervised + step, ...` through `rho_edge`
/// plus `extend_steps` further steps. Empty when the interval is empty.
pub fn scan_grid(rho_supervised: f64, rho_edge: f64, cfg: &SearchConfig) -> Vec<f64> {
    if rho_supervised >= rho_edge {
        return Vec::new();
    }
    let inner = ((rho_edge - rho_supervised) / cfg.grid_step + 1e-9).floor() as usize;
    (0..=inner + cfg.extend_steps)
        .map(|j| round_grid(rho_supervised + cfg.grid_step * j as f64))
        .collect()
}

/// Drops floating-point noise from accumulated grid values.
pub fn round_grid(rho: f64) -> f64 {
    (rho * 1e10).round() / 1e10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub seed: u64,
    pub rho_edge: f64,
    pub rho_supervised: Option<f64>,
    /// Reports classified as chaotic yet along the skeleton.
    pub candidates: Vec<AnalysisReport>,
    pub full_scan: Vec<PointOutcome>,
    pub edge_evaluations: Vec<(f64, f64)>,
    pub supervised_evaluations: Vec<PointOutcome>,
}

impl SearchResult {
    pub fn failures(&self) -> usize {
        self.full_scan.iter().filter(|p| p.report.is_none()).count()
    }

    /// CSV rows `rho,cle,mle,mean_q,shape_dev,classification` over the scan.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("seed,rho,cle,mle,mean_q,shape_dev,classification\n");
        for p in &self.full_scan {
            match &p.report {
                Some(r) => {
                    let q = r.mean_q.map(|q| q.to_string()).unwrap_or_default();
                    s.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        self.seed, p.rho, r.cle, r.mle, q, r.shape_distance, r.classification
                    ));
                }
                None => s.push_str(&format!("{},{},,,,,failed\n", self.seed, p.rho)),
            }
        }
        s
    }
}

/// Evaluates every grid point between the supervised point and the edge.
pub fn scan_interval(
    base: &Reservoir,
    sk: &Skeleton,
    train: &TrainingConfig,
    eval: &EvalConfig,
    cfg: &SearchConfig,
    rho_supervised: f64,
    rho_edge: f64,
) -> Result<Vec<PointOutcome>> {
    cfg.validate()?;
    let mut grid = scan_grid(rho_supervised, rho_edge, cfg);
    if cfg.scan_descending {
        grid.reverse();
    }
    if let Some(k) = cfg.max_scan_points {
        grid.truncate(k);
    }
    let f = evaluator(base, sk, train, eval);
    let Some(limit) = cfg.stop_after_candidates else {
        return Ok(parallel_map(&grid, |&rho| f(rho)));
    };
    // In grid order, truncated right after the `limit`-th candidate so the
    // result does not depend on how many workers ran.
    let mut out = Vec::new();
    let mut found = 0;
    for chunk in grid.chunks(worker_count()) {
        for p in parallel_map(chunk, |&rho| f(rho)) {
            if found >= limit {
                break;
            }
            if p.report.as_ref().is_some_and(|r| classify(r, &cfg.thresholds) == Classification::SemiSupervisedChaos) {
                found += 1;
            }
            out.push(p);
        }
        if found >= limit {
            break;
        }
    }
    Ok(out)
}

/// Semi-supervised candidates among scan outcomes.
pub fn candidates(scan: &[PointOutcome], thresholds: &Thresholds) -> Vec<AnalysisReport> {
    scan.iter()
        .filter_map(|p| p.report.as_ref())
        .filter(|r| classify(r, thresholds) == Classification::SemiSupervisedChaos)
        .cloned()
        .collect()
}

/// Edge, supervised point, and interval scan for one reservoir realization.
/// A missing supervised point yields an empty scan rather than an error.
pub fn search(base: &Reservoir, sk: &Skeleton, train: &TrainingConfig, eval: &EvalConfig, cfg: &SearchConfig) -> Result<SearchResult> {
    let seed = base.spec().seed;
    log::info!("seed {seed}: locating edge in [{}, {}]", cfg.rho_lo, cfg.rho_hi);
    let edge = find_edge(base, sk, cfg)?;
    log::info!("seed {seed}: edge at rho = {:.5}", edge.rho_edge);
    let sup = find_supervised(base, sk, train, eval, cfg, edge.rho_edge)?;
    let full_scan = match sup.rho_supervised {
        Some(p) => {
            log::info!("seed {seed}: supervised point rho = {p:.5}");
            scan_interval(base, sk, train, eval, cfg, p, edge.rho_edge)?
        }
        None => {
            log::warn!("seed {seed}: no supervised point below the edge; adjust the fixed settings");
            Vec::new()
        }
    };
    let candidates = candidates(&full_scan, &cfg.thresholds);
    Ok(SearchResult {
        seed,
        rho_edge: edge.rho_edge,
        rho_supervised: sup.rho_supervised,
        candidates,
        full_scan,
        edge_evaluations: edge.evaluations,
        supervised_evaluations: sup.evaluated,
    })
}

/// Per-seed search; each seed's outcome is independent of the others.
pub fn search_seeds(
    base_spec: &crate::reservoir::ReservoirSpec,
    sk: &Skeleton,
    train: &TrainingConfig,
    eval: &EvalConfig,
    cfg: &SearchConfig,
) -> Vec<(u64, Result<SearchResult>)> {
    cfg.seeds
        .iter()
        .map(|&seed| {
            let spec = crate::reservoir::ReservoirSpec {
                seed,
                ..*base_spec
            };
            let r = crate::reservoir::build_reservoir(spec).and_then(|res| search(&res, sk, train, eval, cfg));
            (seed, r)
        })
        .collect()
}

fn worker_count() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Maps `f` over `items` on up to `available_parallelism` threads, keeping
/// the input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = worker_count().min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
