//! Small local optimizers: Nelder-Mead simplex and finite-difference
//! quasi-Newton ascent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadConfig {
    pub max_evals: usize,
    /// Stop when the simplex diameter falls below this.
    pub xtol: f64,
    /// Relative size of the initial simplex edges.
    pub initial_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self { max_evals: 500, xtol: 1e-9, initial_step: 0.1 }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
}

/// Minimize `f` from `x0`; initial edges are `step * max(|x0_i|, 1e-3)`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], cfg: &NelderMeadConfig) -> Minimum {
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += cfg.initial_step * x0[i].abs().max(1e-3);
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let diam = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diam < cfg.xtol || evals >= cfg.max_evals {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (pts[n][j] - centroid[j])).collect() };
        let xr = along(-alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-gamma);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-rho);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(rho);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    for j in 0..n {
                        pts[i][j] = pts[0][j] + sigma * (pts[i][j] - pts[0][j]);
                    }
                    vals[i] = f(&pts[i]);
                }
                evals += n;
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    Minimum { x: pts[best].clone(), f: vals[best], evals }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    /// Central-difference step.
    pub fd_step: f64,
    /// Converged when the gradient norm falls below this.
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self { fd_step: 1e-3, grad_tol: 1e-5, max_iters: 400 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AscentResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Central finite-difference gradient, components evaluated in parallel.
pub fn fd_gradient<F: Fn(&[f64]) -> f64 + Sync>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximize `f` by gradient ascent with BFGS-preconditioned directions and
/// backtracking line search; gradients by central differences.
pub fn gradient_ascent<F: Fn(&[f64]) -> f64 + Sync>(f: &F, x0: &[f64], cfg: &AscentConfig) -> AscentResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = fd_gradient(f, &x, cfg.fd_step);
    // Inverse Hessian approximation of -f.
    let mut hinv: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
    let mut iters = 0;
    while iters < cfg.max_iters {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < cfg.grad_tol {
            return AscentResult { x, f: fx, grad_norm: gnorm, iters, converged: true };
        }
        iters += 1;
        let mut d: Vec<f64> = (0..n).map(|i| dot(&hinv[i * n..(i + 1) * n], &g)).collect();
        if dot(&d, &g) <= 0.0 {
            hinv.iter_mut().enumerate().for_each(|(k, v)| *v = if k / n == k % n { 1.0 } else { 0.0 });
            d = g.clone();
        }
        let slope = dot(&d, &g);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let fnew = f(&xn);
            if fnew >= fx + 1e-4 * t * slope {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            break;
        };
        let gn = fd_gradient(f, &xn, cfg.fd_step);
        // BFGS update on the minimization problem of -f.
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 {
            let hy: Vec<f64> = (0..n).map(|i| dot(&hinv[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        x = xn;
        fx = fnew;
        g = gn;
    }
    let gnorm = dot(&g, &g).sqrt();
    AscentResult { converged: gnorm < cfg.grad_tol, x, f: fx, grad_norm: gnorm, iters }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let cfg = NelderMeadConfig { max_evals: 5000, xtol: 1e-10, initial_step: 0.5 };
        let m = nelder_mead(f, &[-1.2, 1.0], &cfg);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn nelder_mead_respects_budget() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let cfg = NelderMeadConfig { max_evals: 30, ..Default::default() };
        let m = nelder_mead(f, &[1.0, 2.0, 3.0], &cfg);
        assert!(m.evals <= 30 + 3);
    }

    #[test]
    fn ascent_on_concave_quadratic() {
        let f = |x: &[f64]| -(x[0] - 0.3).powi(2) - 2.0 * (x[1] + 0.1).powi(2) - 0.5 * x[0] * x[1];
        let r = gradient_ascent(&f, &[1.0, 1.0], &AscentConfig::default());
        assert!(r.converged);
        let fd = fd_gradient(&f, &r.x, 1e-4);
        assert!(fd.iter().all(|g| g.abs() < 1e-5));
    }
}
