//! Independent reference computations shared by the integration tests and
//! the acceptance runner. Nothing here calls into the solver paths under test.

#![allow(dead_code)]

use chaosdesign::lyapunov::{autonomous_jacobian, driven_jacobian};
use chaosdesign::training::compose_closed_loop;
use chaosdesign::{build_reservoir, Matrix, ReservoirSpec, State, TrainingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let (fp, fm) = (f(&xp), f(&xm));
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    // cols[j][i] = dF_i/dx_j; return row-major.
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// max |A - B| / max |A| over entries.
pub fn relative_gap(analytic: &Matrix, reference: &[Vec<f64>]) -> f64 {
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (i, row) in reference.iter().enumerate() {
        for (j, r) in row.iter().enumerate() {
            diff = diff.max((analytic.get(i, j) - r).abs());
            scale = scale.max(analytic.get(i, j).abs());
        }
    }
    diff / scale.max(f64::MIN_POSITIVE)
}

/// Worst relative finite-difference gap of the driven and autonomous
/// Jacobians over `instances` random reservoirs with `N <= 10`.
pub fn jacobian_gate(instances: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut g = rng(1000 + seed);
        let n = g.random_range(2..=10);
        let d = g.random_range(1..=n.min(3));
        let leak = g.random_range(0.1..=1.0);
        let rho = g.random_range(0.2..1.8);
        let sigma = g.random_range(0.0..1.0);
        let res = build_reservoir(ReservoirSpec::new(n, d, leak, rho, sigma, seed)).unwrap();
        let x: Vec<f64> = (0..n).map(|_| g.random_range(-0.9..0.9)).collect();
        let u: Vec<f64> = (0..d).map(|_| g.random_range(-1.0..1.0)).collect();

        let jd = driven_jacobian(&res, &x, &u).unwrap();
        let fd = fd_jacobian(|y| res.step(&State::from_vec(y.to_vec()), &u).unwrap().into_inner(), &x, 1e-5);
        worst = worst.max(relative_gap(&jd, &fd));

        let w_out = Matrix::from_fn(n, d, |_, _| g.random_range(-1.0..1.0));
        let model = compose_closed_loop(&res, w_out, State::zeros(n), TrainingConfig::default()).unwrap();
        let ja = autonomous_jacobian(&model, &x).unwrap();
        let fa = fd_jacobian(|y| model.closed_step(&State::from_vec(y.to_vec())).unwrap().into_inner(), &x, 1e-5);
        worst = worst.max(relative_gap(&ja, &fa));
    }
    worst
}

/// Solves `A z = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut z = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * z[k]).sum();
        z[r] = (b[r] - s) / a[r][r];
    }
    z
}

/// `(X^T X + beta I)^{-1} X^T Y`, column by column, from plain loops.
pub fn normal_equation_readout(x: &Matrix, y: &Matrix, beta: f64) -> Vec<Vec<f64>> {
    let (t, n, d) = (x.rows(), x.cols(), y.cols());
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = (0..t).map(|k| x.get(k, i) * x.get(k, j)).sum::<f64>();
        }
        a[i][i] += beta;
    }
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|c| {
            let b: Vec<f64> = (0..n).map(|i| (0..t).map(|k| x.get(k, i) * y.get(k, c)).sum()).collect();
            gauss_solve(a.clone(), b)
        })
        .collect();
    (0..n).map(|i| (0..d).map(|c| cols[c][i]).collect()).collect()
}

/// Eigenvalue magnitudes of a 2x2 or 3x3 matrix from its characteristic
/// polynomial, via Durand-Kerner iteration.
pub fn char_poly_radius(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    // Monic coefficients c[0] + c[1] z + ... + z^n.
    let coeffs: Vec<f64> = match n {
        2 => {
            let tr = m[0][0] + m[1][1];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            vec![det, -tr, 1.0]
        }
        3 => {
            let tr = m[0][0] + m[1][1] + m[2][2];
            let minors = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0]
                + m[1][1] * m[2][2]
                - m[1][2] * m[2][1];
            let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            vec![-det, minors, -tr, 1.0]
        }
        _ => panic!("only 2x2 and 3x3"),
    };
    let eval = |z: (f64, f64)| {
        let mut acc = (0.0, 0.0);
        for &c in coeffs.iter().rev() {
            acc = (acc.0 * z.0 - acc.1 * z.1 + c, acc.0 * z.1 + acc.1 * z.0);
        }
        acc
    };
    let scale = 1.0 + m.iter().flatten().map(|v| v.abs()).sum::<f64>();
    let mut roots: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let t = 0.4 + 0.9 * k as f64;
            (scale * 0.5 * t.cos(), scale * 0.5 * t.sin())
        })
        .collect();
    for _ in 0..2000 {
        let prev = roots.clone();
        for i in 0..n {
            let num = eval(roots[i]);
            let mut den = (1.0, 0.0);
            for (j, r) in roots.iter().enumerate() {
                if j != i {
                    let d = (roots[i].0 - r.0, roots[i].1 - r.1);
                    den = (den.0 * d.0 - den.1 * d.1, den.0 * d.1 + den.1 * d.0);
                }
            }
            let q = den.0 * den.0 + den.1 * den.1;
            if q == 0.0 {
                continue;
            }
            let step = ((num.0 * den.0 + num.1 * den.1) / q, (num.1 * den.0 - num.0 * den.1) / q);
            roots[i] = (roots[i].0 - step.0, roots[i].1 - step.1);
        }
        let moved = roots.iter().zip(&prev).map(|(a, b)| (a.0 - b.0).hypot(a.1 - b.1)).fold(0.0, f64::max);
        if moved < 1e-15 * scale {
            break;
        }
    }
    roots.iter().map(|r| r.0.hypot(r.1)).fold(0.0, f64::max)
}

pub fn logistic(r: f64, x: f64) -> f64 {
    r * x * (1.0 - x)
}

/// Smallest period `p <= max_period` of the settled logistic orbit at `r`,
/// found by brute-force iteration; `None` when no period is detected.
pub fn logistic_period(r: f64, max_period: usize) -> Option<usize> {
    let mut x = 0.3;
    for _ in 0..200_000 {
        x = logistic(r, x);
    }
    let mut orbit = vec![x];
    for _ in 0..max_period {
        x = logistic(r, x);
        orbit.push(x);
    }
    (1..=max_period).find(|&p| (orbit[p] - orbit[0]).abs() < 1e-9)
}

/// Midpoints of the parameter windows where the brute-force period is 1, 2
/// and 4, located on a uniform scan of `[2.5, 3.56]`.
pub fn logistic_window_midpoints() -> [f64; 3] {
    let mut bounds = [(f64::INFINITY, f64::NEG_INFINITY); 3];
    let steps = 1060;
    for j in 0..=steps {
        let r = 2.5 + 1.06 * j as f64 / steps as f64;
        let slot = match logistic_period(r, 8) {
            Some(1) => 0,
            Some(2) => 1,
            Some(4) => 2,
            _ => continue,
        };
        bounds[slot].0 = bounds[slot].0.min(r);
        bounds[slot].1 = bounds[slot].1.max(r);
    }
    bounds.map(|(lo, hi)| 0.5 * (lo + hi))
}

/// Largest Lyapunov exponent of the Henon map from the separation of two
/// nearby trajectories, renormalized every step.
pub fn henon_two_trajectory(a: f64, b: f64, steps: usize, transient: usize) -> f64 {
    let f = |p: (f64, f64)| (1.0 - a * p.0 * p.0 + p.1, b * p.0);
    let mut p = (0.1, 0.1);
    for _ in 0..transient {
        p = f(p);
    }
    let d0 = 1e-9;
    let mut q = (p.0 + d0, p.1);
    let mut sum = 0.0;
    for _ in 0..steps {
        p = f(p);
        q = f(q);
        let d = (q.0 - p.0).hypot(q.1 - p.1);
        sum += (d / d0).ln();
        q = (p.0 + (q.0 - p.0) * d0 / d, p.1 + (q.1 - p.1) * d0 / d);
    }
    sum / steps as f64
}
