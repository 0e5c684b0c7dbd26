//! Periodic teacher signals ("skeletons").
//!
//! A skeleton is a sampled closed curve in `R^D`; consumers index it with
//! [`Skeleton::at`], which tiles the samples periodically.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label of the Lissajous generator; skeletons carrying it get the Q index.
pub const LISSAJOUS_LABEL: &str = "lissajous";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    samples: Vec<Vec<f64>>,
    dim: usize,
    /// Discrete period in steps, when it is an integer and known.
    period_steps: Option<usize>,
    label: String,
}

impl Skeleton {
    pub fn new(samples: Vec<Vec<f64>>, period_steps: Option<usize>, label: impl Into<String>) -> Result<Self> {
        let dim = samples
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Input("skeleton has no samples".into()))?;
        if dim == 0 {
            return Err(Error::Input("skeleton samples are zero-dimensional".into()));
        }
        for (k, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::Input(format!(
                    "skeleton sample {k} has {} components, expected {dim}",
                    s.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("skeleton sample {k} is not finite")));
            }
        }
        if period_steps == Some(0) {
            return Err(Error::Input("skeleton period must be positive".into()));
        }
        Ok(Self {
            samples,
            dim,
            period_steps,
            label: label.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn period_steps(&self) -> Option<usize> {
        self.period_steps
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// Sample `k`, tiling the stored samples periodically.
    #[inline]
    pub fn at(&self, k: usize) -> &[f64] {
        &self.samples[k % self.samples.len()]
    }

    /// Whether the closed-form Q index applies to this skeleton.
    pub fn has_q_form(&self) -> bool {
        self.label == LISSAJOUS_LABEL && self.dim == 2
    }

    /// Component `c` of samples `start..start + len` (tiled).
    pub fn component(&self, c: usize, start: usize, len: usize) -> Vec<f64> {
        (start..start + len).map(|k| self.at(k)[c]).collect()
    }

    /// Shifts every component to zero mean and scales it to max-abs 1.
    pub fn normalized(&self) -> Skeleton {
        let n = self.samples.len() as f64;
        let mut out = self.samples.clone();
        for c in 0..self.dim {
            let mean = self.samples.iter().map(|s| s[c]).sum::<f64>() / n;
            let max_abs = self.samples.iter().map(|s| (s[c] - mean).abs()).fold(0.0, f64::max);
            let scale = if max_abs > 0.0 { 1.0 / max_abs } else { 1.0 };
            for s in &mut out {
                s[c] = (s[c] - mean) * scale;
            }
        }
        Skeleton {
            samples: out,
            dim: self.dim,
            period_steps: self.period_steps,
            label: self.label.clone(),
        }
    }

    /// Copy holding at least `len` samples, tiling periodically.
    pub fn tiled(&self, len: usize) -> Skeleton {
        let total = len.max(self.samples.len());
        Skeleton {
            samples: (0..total).map(|k| self.at(k).to_vec()).collect(),
            dim: self.dim,
            period_steps: self.period_steps,
            label: self.label.clone(),
        }
    }

    /// One period worth of samples, or everything when the period is unknown.
    pub fn one_period(&self) -> &[Vec<f64>] {
        match self.period_steps {
            Some(p) if p <= self.samples.len() => &self.samples[..p],
            _ => &self.samples,
        }
    }
}

/// `u_k = [cos(pi k / 50), sin(pi k / 25)]`, period 100.
pub fn lissajous(steps: usize) -> Skeleton {
    use std::f64::consts::PI;
    let samples = (0..steps.max(1))
        .map(|k| {
            let k = k as f64;
            vec![(PI * k / 50.0).cos(), (PI * k / 25.0).sin()]
        })
        .collect();
    Skeleton {
        samples,
        dim: 2,
        period_steps: Some(100),
        label: LISSAJOUS_LABEL.into(),
    }
}

/// `u_k = [cos(2 pi k / period), sin(2 pi k / period)]`.
pub fn unit_circle(steps: usize, period: usize) -> Result<Skeleton> {
    if period < 2 {
        return Err(Error::Input(format!("circle period must be at least 2, got {period}")));
    }
    let samples = (0..steps.max(1))
        .map(|k| {
            let phase = std::f64::consts::TAU * (k % period) as f64 / period as f64;
            vec![phase.cos(), phase.sin()]
        })
        .collect();
    Ok(Skeleton {
        samples,
        dim: 2,
        period_steps: Some(period),
        label: "unit-circle".into(),
    })
}

/// Classical fourth-order Runge–Kutta step.
pub fn rk4_step<const D: usize>(f: impl Fn(&[f64; D]) -> [f64; D], y: &[f64; D], h: f64) -> [f64; D] {
    let add = |a: &[f64; D], b: &[f64; D], s: f64| -> [f64; D] {
        let mut out = *a;
        for i in 0..D {
            out[i] += s * b[i];
        }
        out
    };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, h / 2.0));
    let k3 = f(&add(y, &k2, h / 2.0));
    let k4 = f(&add(y, &k3, h));
    let mut out = *y;
    for i in 0..D {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrates `f` from `y0`, discarding `transient_steps` samples and
/// returning `steps` samples spaced `dt` apart. Each sample interval is
/// split into `substeps` Runge–Kutta steps.
fn integrate<const D: usize>(
    f: impl Fn(&[f64; D]) -> [f64; D],
    y0: [f64; D],
    dt: f64,
    substeps: usize,
    transient_steps: usize,
    steps: usize,
    what: &str,
) -> Result<Vec<Vec<f64>>> {
    let h = dt / substeps as f64;
    let mut y = y0;
    let mut out = Vec::with_capacity(steps);
    for k in 0..transient_steps + steps {
        if k >= transient_steps {
            out.push(y.to_vec());
        }
        for _ in 0..substeps {
            y = rk4_step(&f, &y, h);
        }
        if y.iter().any(|v| !v.is_finite() || v.abs() > 1e12) {
            return Err(Error::Numeric(format!("{what} integration diverged at sample {k}")));
        }
    }
    Ok(out)
}

/// Settings for the Van der Pol skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanDerPol {
    pub mu: f64,
    /// Time between samples.
    pub dt: f64,
    pub substeps: usize,
    /// Time discarded before sampling.
    pub transient_time: f64,
    pub initial: [f64; 2],
}

impl Default for VanDerPol {
    fn default() -> Self {
        Self {
            mu: 1.0,
            dt: 0.1,
            substeps: 10,
            transient_time: 100.0,
            initial: [2.0, 0.0],
        }
    }
}

impl VanDerPol {
    pub fn generate(&self, steps: usize) -> Result<Skeleton> {
        if !(self.mu >= 0.0) || !(self.dt > 0.0) || self.substeps == 0 {
            return Err(Error::Input(format!(
                "van der Pol needs mu >= 0, dt > 0 (got mu = {}, dt = {})",
                self.mu, self.dt
            )));
        }
        let mu = self.mu;
        let rhs = move |s: &[f64; 2]| [s[1], mu * (1.0 - s[0] * s[0]) * s[1] - s[0]];
        let transient = (self.transient_time / self.dt).round() as usize;
        let samples = integrate(rhs, self.initial, self.dt, self.substeps, transient, steps.max(1), "van der Pol")?;
        Skeleton::new(samples, None, "van-der-pol")
    }
}

/// `x'' - mu (1 - x^2) x' + x = 0` sampled every `dt` after a 100 time-unit transient.
pub fn van_der_pol(mu: f64, dt: f64, steps: usize) -> Result<Skeleton> {
    VanDerPol {
        mu,
        dt,
        ..VanDerPol::default()
    }
    .generate(steps)
}

/// Which third equation the Rössler skeleton integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RosslerForm {
    /// `z' = 0.2 + x z - c z`.
    #[default]
    Standard,
    /// `z' = 0.2 + x y - c z`.
    CrossXy,
}

/// Settings for the Rössler skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rossler {
    pub c: f64,
    pub dt: f64,
    pub substeps: usize,
    pub transient_time: f64,
    pub form: RosslerForm,
    pub initial: [f64; 3],
}

impl Default for Rossler {
    fn default() -> Self {
        Self {
            c: 3.0,
            dt: 0.2,
            substeps: 20,
            transient_time: 500.0,
            form: RosslerForm::Standard,
            initial: [1.0, 1.0, 0.0],
        }
    }
}

impl Rossler {
    pub fn vector_field(&self, s: &[f64; 3]) -> [f64; 3] {
        let [x, y, z] = *s;
        let coupling = match self.form {
            RosslerForm::Standard => x * z,
            RosslerForm::CrossXy => x * y,
        };
        [-y - z, x + 0.2 * y, 0.2 + coupling - self.c * z]
    }

    /// Equilibria of the flow.
    ///
    /// Setting `x' = y' = 0` gives `z = -y`, `x = -0.2 y`; the third equation
    /// then reduces to a quadratic in `y`.
    pub fn fixed_points(&self) -> Vec<[f64; 3]> {
        // Standard: 0.2 y^2 + c y + 0.2 = 0.  Cross-xy: -0.2 y^2 + c y + 0.2 = 0.
        let (qa, qb, qc) = match self.form {
            RosslerForm::Standard => (0.2, self.c, 0.2),
            RosslerForm::CrossXy => (-0.2, self.c, 0.2),
        };
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return Vec::new();
        }
        let sq = disc.sqrt();
        // Numerically stable pair of roots.
        let q = -0.5 * (qb + qb.signum() * sq);
        let mut roots = vec![q / qa, qc / q];
        roots.sort_by(f64::total_cmp);
        roots.into_iter().map(|y| [-0.2 * y, y, -y]).collect()
    }

    pub fn generate(&self, steps: usize) -> Result<Skeleton> {
        if !(self.dt > 0.0) || self.substeps == 0 {
            return Err(Error::Input(format!("Rössler needs dt > 0, got {}", self.dt)));
        }
        let this = *self;
        let transient = (self.transient_time / self.dt).round() as usize;
        let samples = integrate(
            move |s| this.vector_field(s),
            self.initial,
            self.dt,
            self.substeps,
            transient,
            steps.max(1),
            "Rössler",
        )?;
        Skeleton::new(samples, None, "rossler")
    }
}

/// Periodic orbit of the Rössler flow (standard form) at parameter `c`.
pub fn rossler_cycle(c: f64, dt: f64, steps: usize) -> Result<Skeleton> {
    Rossler {
        c,
        dt,
        ..Rossler::default()
    }
    .generate(steps)
}

/// Parses numeric CSV rows. A first row that does not parse is taken as a header.
pub fn parse_csv_points(text: &str, source_name: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            source_name: source_name.into(),
            row: idx + 1,
            column: 0,
            message: e.to_string(),
        })?;
        let row = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        if points.is_empty() && width.is_none() && parsed.iter().any(|p| p.is_err()) {
            // header row
            width = Some(record.len());
            continue;
        }
        let mut values = Vec::with_capacity(parsed.len());
        for (col, p) in parsed.into_iter().enumerate() {
            match p {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::Parse {
                        source_name: source_name.into(),
                        row,
                        column: col + 1,
                        message: format!("not a finite number: {:?}", &record[col]),
                    })
                }
            }
        }
        match width {
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    source_name: source_name.into(),
                    row,
                    column: values.len().min(w) + 1,
                    message: format!("expected {w} columns, found {}", values.len()),
                })
            }
            _ => width = Some(values.len()),
        }
        points.push(values);
    }
    Ok(points)
}

/// Resamples a polyline to `count` points equally spaced in arc length.
///
/// A closed curve includes the segment from the last point back to the
/// first, and the returned points exclude the duplicate endpoint so the
/// result tiles seamlessly. An open curve keeps both endpoints.
pub fn resample_arc_length(points: &[Vec<f64>], count: usize, closed: bool) -> Result<Vec<Vec<f64>>> {
    if points.len() < 2 || count == 0 {
        return Err(Error::Input("resampling needs at least two points and a positive count".into()));
    }
    let mut path: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
    if closed {
        path.push(&points[0]);
    }
    let seg_len: Vec<f64> = path
        .windows(2)
        .map(|w| w[0].iter().zip(w[1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect();
    let total: f64 = seg_len.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Input("curve has zero length".into()));
    }
    let spacing = if closed {
        total / count as f64
    } else if count == 1 {
        0.0
    } else {
        total / (count - 1) as f64
    };
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for j in 0..count {
        let s = (j as f64 * spacing).min(total);
        while seg + 1 < seg_len.len() && seg_start + seg_len[seg] < s {
            seg_start += seg_len[seg];
            seg += 1;
        }
        let t = if seg_len[seg] > 0.0 {
            ((s - seg_start) / seg_len[seg]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (p, q) = (path[seg], path[seg + 1]);
        out.push(p.iter().zip(q).map(|(a, b)| a + t * (b - a)).collect());
    }
    Ok(out)
}

/// Loads a hand-drawn curve: one row per point, D numeric columns.
///
/// The points are resampled uniformly in arc length to `resample_to`
/// samples. With `close_curve` the curve is treated as closed and its period
/// is the sample count.
pub fn load_csv(path: &Path, resample_to: usize, close_curve: bool) -> Result<Skeleton> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    skeleton_from_csv_text(&text, &path.display().to_string(), resample_to, close_curve)
}

pub fn skeleton_from_csv_text(text: &str, source_name: &str, resample_to: usize, close_curve: bool) -> Result<Skeleton> {
    let points = parse_csv_points(text, source_name)?;
    if points.len() < 3 {
        return Err(Error::Parse {
            source_name: source_name.into(),
            row: points.len(),
            column: 0,
            message: format!("need at least 3 points, found {}", points.len()),
        });
    }
    let samples = resample_arc_length(&points, resample_to, close_curve)?;
    let period = close_curve.then_some(resample_to);
    let label = Path::new(source_name)
        .file_stem()
        .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    Skeleton::new(samples, period, label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lissajous_values() {
        let s = lissajous(200);
        assert_eq!(s.at(0), &[1.0, 0.0]);
        let u25 = s.at(25);
        assert!(u25[0].abs() < 1e-15 && u25[1].abs() < 1e-15);
        for k in 0..100 {
            for c in 0..2 {
                assert!((s.at(k)[c] - s.at(k + 100)[c]).abs() < 1e-9);
            }
        }
        assert!(s.has_q_form());
    }

    #[test]
    fn circle_values() {
        let s = unit_circle(50, 4).unwrap();
        assert_eq!(s.at(0), &[1.0, 0.0]);
        assert!(s.at(1)[0].abs() < 1e-15 && (s.at(1)[1] - 1.0).abs() < 1e-15);
        let s = unit_circle(360, 36).unwrap();
        for u in s.samples() {
            assert!((u[0].hypot(u[1]) - 1.0).abs() < 1e-12);
        }
        for c in 0..2 {
            let max = s.samples().iter().map(|u| u[c]).fold(f64::MIN, f64::max);
            let min = s.samples().iter().map(|u| u[c]).fold(f64::MAX, f64::min);
            assert!((max - 1.0).abs() < 1e-9 && (min + 1.0).abs() < 1e-9);
        }
        assert!(unit_circle(10, 1).is_err());
    }

    #[test]
    fn harmonic_limit_conserves_radius() {
        let s = van_der_pol(0.0, 0.1, 70).unwrap();
        let r0 = s.at(0)[0].hypot(s.at(0)[1]);
        for u in s.samples() {
            assert!((u[0].hypot(u[1]) - r0).abs() < 1e-6);
        }
    }

    #[test]
    fn van_der_pol_rejects_bad_step() {
        assert!(van_der_pol(1.0, 0.0, 10).is_err());
        assert!(van_der_pol(-1.0, 0.1, 10).is_err());
    }

    #[test]
    fn rossler_fixed_points_have_zero_residual() {
        for form in [RosslerForm::Standard, RosslerForm::CrossXy] {
            let r = Rossler {
                form,
                ..Rossler::default()
            };
            let fps = r.fixed_points();
            assert_eq!(fps.len(), 2);
            for fp in fps {
                let v = r.vector_field(&fp);
                assert!(v.iter().all(|c| c.abs() < 1e-9), "{form:?} {fp:?} {v:?}");
            }
        }
    }

    #[test]
    fn square_resampled_uniformly() {
        let text = "0,0\n1,0\n1,1\n0,1\n";
        let s = skeleton_from_csv_text(text, "square.csv", 8, true).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s.period_steps(), Some(8));
        for k in 0..8 {
            let (p, q) = (s.at(k), s.at(k + 1));
            let d = (p[0] - q[0]).hypot(p[1] - q[1]);
            assert!((d - 0.5).abs() < 1e-12, "segment {k}: {d}");
        }
    }

    #[test]
    fn uniform_circle_is_fixed_by_resampling() {
        let n = 24;
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let out = resample_arc_length(&pts, n, true).unwrap();
        for (a, b) in pts.iter().zip(&out) {
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn open_curve_keeps_endpoints() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let out = resample_arc_length(&pts, 5, false).unwrap();
        assert_eq!(out[0], vec![0.0, 0.0]);
        assert!((out[4][0] - 1.0).abs() < 1e-12 && (out[4][1] - 1.0).abs() < 1e-12);
        assert!((out[2][0] - 1.0).abs() < 1e-12 && out[2][1].abs() < 1e-12);
    }

    #[test]
    fn csv_header_is_skipped() {
        let pts = parse_csv_points("x, y\n1, 2\n3, 4\n", "t.csv").unwrap();
        assert_eq!(pts, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn csv_non_numeric_cell_names_row_and_column() {
        let err = parse_csv_points("1,2\n3,abc\n5,6\n", "bad.csv").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_inconsistent_columns() {
        let err = parse_csv_points("1,2\n3,4,5\n", "bad.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }));
    }

    #[test]
    fn csv_needs_three_points() {
        assert!(matches!(
            skeleton_from_csv_text("0,0\n1,1\n", "two.csv", 10, true),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn normalization_centers_and_scales() {
        let s = Skeleton::new(vec![vec![2.0, 10.0], vec![4.0, 10.0], vec![6.0, 13.0]], None, "t").unwrap();
        let n = s.normalized();
        for c in 0..2 {
            let mean: f64 = n.samples().iter().map(|u| u[c]).sum::<f64>() / 3.0;
            let max = n.samples().iter().map(|u| u[c].abs()).fold(0.0, f64::max);
            assert!(mean.abs() < 1e-12);
            assert!((max - 1.0).abs() < 1e-12);
        }
    }
}
