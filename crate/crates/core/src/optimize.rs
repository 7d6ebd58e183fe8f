//! Small numerical optimizers: Brent's bounded scalar minimizer and a
//! Levenberg-Marquardt solver for low-dimensional least squares.

use nalgebra::{SMatrix, SVector};

/// Result of a bounded scalar minimization.
#[derive(Debug, Clone, Copy)]
pub struct ScalarMinimum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Brent's method (golden section with parabolic interpolation) on `[lo, hi]`.
///
/// Terminates when the bracket around the current best point is narrower than
/// `2 * xtol` (plus a relative term of `sqrt(ε)·|x|`).
pub fn brent_minimize<F>(mut f: F, lo: f64, hi: f64, xtol: f64) -> ScalarMinimum
where
    F: FnMut(f64) -> f64,
{
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    const MAX_ITER: usize = 500;
    let sqrt_eps = f64::EPSILON.sqrt();

    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let mid = 0.5 * (a + b);
        let tol1 = sqrt_eps * x.abs() + xtol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }

        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < mid { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < mid { b - x } else { a - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);

        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }

    ScalarMinimum {
        x,
        value: fx,
        iterations,
    }
}

/// Stopping rules for [`levenberg_marquardt`].
#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    /// Stop once an accepted step improves the residual sum of squares by
    /// less than this fraction.
    pub rel_rss_tol: f64,
    /// Scaled gradient bound required to report convergence.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            rel_rss_tol: 1e-10,
            grad_tol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmOutcome<const N: usize> {
    pub params: [f64; N],
    pub rss: f64,
    /// `max_i |J_iᵀ r| / (‖J_i‖ ‖y‖)`, zero at an exact stationary point.
    pub scaled_gradient: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Least-squares problem with `N` parameters.
pub trait LeastSquares<const N: usize> {
    /// Residuals `model - data` and their Jacobian rows at `params`.
    fn evaluate(&self, params: &[f64; N], residuals: &mut Vec<f64>, jacobian: &mut Vec<[f64; N]>);

    /// Map a trial point back into the feasible set.
    fn project(&self, params: &mut [f64; N]) {
        let _ = params;
    }

    /// `‖y‖`, used to scale the gradient test.
    fn data_norm(&self) -> f64;
}

/// Marquardt-damped Gauss-Newton with projection onto box constraints.
pub fn levenberg_marquardt<P, const N: usize>(problem: &P, start: [f64; N], opts: LmOptions) -> LmOutcome<N>
where
    P: LeastSquares<N>,
{
    let mut params = start;
    problem.project(&mut params);

    let mut r = Vec::new();
    let mut jac = Vec::new();
    problem.evaluate(&params, &mut r, &mut jac);
    let mut rss = sum_sq(&r);

    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut stalled = false;
    let mut trial_r = Vec::new();
    let mut trial_jac = Vec::new();
    let data_norm = problem.data_norm().max(f64::MIN_POSITIVE);

    while iterations < opts.max_iter {
        iterations += 1;
        if rss <= f64::MIN_POSITIVE {
            break;
        }
        let (jtj, jtr) = normal_equations(&r, &jac);

        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj;
            for i in 0..N {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = params;
            for i in 0..N {
                trial[i] += step[i];
            }
            problem.project(&mut trial);
            problem.evaluate(&trial, &mut trial_r, &mut trial_jac);
            let trial_rss = sum_sq(&trial_r);
            if trial_rss.is_finite() && trial_rss < rss {
                let improvement = (rss - trial_rss) / rss;
                params = trial;
                std::mem::swap(&mut r, &mut trial_r);
                std::mem::swap(&mut jac, &mut trial_jac);
                rss = trial_rss;
                lambda = (lambda * 0.1).max(1e-15);
                accepted = true;
                if improvement < opts.rel_rss_tol {
                    stalled = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || stalled {
            break;
        }
    }

    let scaled_gradient = scaled_gradient(&r, &jac, data_norm);
    LmOutcome {
        params,
        rss,
        scaled_gradient,
        iterations,
        converged: scaled_gradient < opts.grad_tol,
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn normal_equations<const N: usize>(r: &[f64], jac: &[[f64; N]]) -> (SMatrix<f64, N, N>, SVector<f64, N>) {
    let mut jtj = SMatrix::<f64, N, N>::zeros();
    let mut jtr = SVector::<f64, N>::zeros();
    for (row, &ri) in jac.iter().zip(r) {
        for a in 0..N {
            jtr[a] += row[a] * ri;
            for b in 0..N {
                jtj[(a, b)] += row[a] * row[b];
            }
        }
    }
    (jtj, jtr)
}

fn scaled_gradient<const N: usize>(r: &[f64], jac: &[[f64; N]], data_norm: f64) -> f64 {
    (0..N)
        .map(|a| {
            let g: f64 = jac.iter().zip(r).map(|(row, ri)| row[a] * ri).sum();
            let col: f64 = jac.iter().map(|row| row[a] * row[a]).sum::<f64>().sqrt();
            if col == 0.0 {
                0.0
            } else {
                g.abs() / (col * data_norm)
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_parabola_vertex() {
        let m = brent_minimize(|x| (x - 1.234).powi(2) + 3.0, -10.0, 10.0, 1e-10);
        assert!((m.x - 1.234).abs() < 1e-8);
        assert!((m.value - 3.0).abs() < 1e-14);
    }

    #[test]
    fn brent_respects_bounds() {
        let m = brent_minimize(|x| x, 2.0, 5.0, 1e-9);
        assert!(m.x >= 2.0 && m.x - 2.0 < 1e-6);
    }

    #[test]
    fn brent_non_smooth() {
        let m = brent_minimize(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-9);
        assert!((m.x - 0.3).abs() < 1e-7);
    }

    struct Exponential {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares<2> for Exponential {
        fn evaluate(&self, p: &[f64; 2], r: &mut Vec<f64>, j: &mut Vec<[f64; 2]>) {
            r.clear();
            j.clear();
            for (&t, &y) in self.t.iter().zip(&self.y) {
                let e = (-p[1] * t).exp();
                r.push(p[0] * e - y);
                j.push([e, -p[0] * t * e]);
            }
        }
        fn data_norm(&self) -> f64 {
            self.y.iter().map(|y| y * y).sum::<f64>().sqrt()
        }
    }

    #[test]
    fn lm_recovers_exponential_decay() {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|t| 2.5 * (-0.7 * t).exp()).collect();
        let out = levenberg_marquardt(&Exponential { t, y }, [1.0, 2.0], LmOptions::default());
        assert!(out.converged);
        assert!((out.params[0] - 2.5).abs() < 1e-8);
        assert!((out.params[1] - 0.7).abs() < 1e-8);
    }
}
