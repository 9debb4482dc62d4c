//! BFGS minimizer with backtracking line search, plus a Newton polish step
//! and a numerical Hessian built from an analytic gradient.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Convergence requires the gradient max-norm below this value...
    pub grad_tol: f64,
    /// ...and a relative objective change below this one.
    pub rel_f_tol: f64,
    /// Largest max-norm step tried by the line search.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iterations: 500, grad_tol: 1e-6, rel_f_tol: 1e-9, max_step: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Objective returning `None` where the function is undefined (treated as +∞).
pub trait Objective {
    fn value(&self, x: &DVector<f64>) -> Option<f64>;
    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>>;
}

fn converged(g: &DVector<f64>, f_old: f64, f_new: f64, o: &BfgsOptions) -> bool {
    g.amax() < o.grad_tol && (f_old - f_new).abs() < o.rel_f_tol * f_new.abs().max(1.0)
}

pub fn bfgs(obj: &impl Objective, x0: DVector<f64>, o: &BfgsOptions) -> Option<Minimum> {
    let n = x0.len();
    let mut x = x0;
    let mut f = obj.value(&x)?;
    let mut g = obj.gradient(&x)?;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    let mut iterations = 0;
    let mut done = g.amax() < o.grad_tol;
    while !done && iterations < o.max_iterations {
        iterations += 1;
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            first = true;
            d = -g.clone();
            slope = g.dot(&d);
        }
        let dmax = d.amax();
        let mut t = if dmax > o.max_step { o.max_step / dmax } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xt = &x + &d * t;
            if let Some(ft) = obj.value(&xt) {
                if ft <= f + 1e-4 * t * slope {
                    accepted = Some((xt, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if first {
                break;
            }
            // stale curvature: restart from steepest descent
            h = DMatrix::identity(n, n);
            first = true;
            continue;
        };
        let Some(g_new) = obj.gradient(&x_new) else { break };
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first {
                h *= sy / y.dot(&y);
                first = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ, expanded
            h += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        done = converged(&g_new, f, f_new, o);
        x = x_new;
        f = f_new;
        g = g_new;
    }
    Some(Minimum { x, f, grad: g, iterations, converged: done })
}

/// Central-difference Jacobian of the gradient, symmetrized.
pub fn numerical_hessian(obj: &impl Objective, x: &DVector<f64>, step: f64) -> Option<DMatrix<f64>> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let hj = step * x[j].abs().max(1.0);
        let mut xp = x.clone();
        xp[j] += hj;
        let mut xm = x.clone();
        xm[j] -= hj;
        let gp = obj.gradient(&xp)?;
        let gm = obj.gradient(&xm)?;
        h.set_column(j, &((gp - gm) / (2.0 * hj)));
    }
    let ht = h.transpose();
    Some((h + ht) * 0.5)
}

/// A few damped Newton steps from a BFGS solution; each step is kept only if
/// it does not increase the objective. Returns the polished point and the
/// Hessian at it.
pub fn newton_polish(obj: &impl Objective, m: &mut Minimum, steps: usize, o: &BfgsOptions) -> Option<DMatrix<f64>> {
    let mut hess = numerical_hessian(obj, &m.x, 1e-5)?;
    for _ in 0..steps {
        if m.grad.amax() < 1e-11 {
            break;
        }
        let Some(chol) = hess.clone().cholesky() else { break };
        let d = -chol.solve(&m.grad);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let xt = &m.x + &d * t;
            if let (Some(ft), Some(gt)) = (obj.value(&xt), obj.gradient(&xt)) {
                if ft <= m.f + 1e-12 * m.f.abs().max(1.0) && gt.amax() < m.grad.amax() {
                    let f_old = m.f;
                    m.x = xt;
                    m.f = ft;
                    m.grad = gt;
                    m.converged = m.converged || converged(&m.grad, f_old, m.f, o);
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
        hess = numerical_hessian(obj, &m.x, 1e-5)?;
    }
    Some(hess)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn value(&self, x: &DVector<f64>) -> Option<f64> {
            Some((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
        }
        fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
            Some(DVector::from_vec(vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ]))
        }
    }

    /// Quadratic defined only for x[0] > 0.
    struct Fenced;

    impl Objective for Fenced {
        fn value(&self, x: &DVector<f64>) -> Option<f64> {
            (x[0] > 0.0).then(|| (x[0] - 0.1).powi(2) + x[1] * x[1])
        }
        fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
            (x[0] > 0.0).then(|| DVector::from_vec(vec![2.0 * (x[0] - 0.1), 2.0 * x[1]]))
        }
    }

    #[test]
    fn rosenbrock_minimum() {
        let m = bfgs(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &BfgsOptions::default()).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn undefined_region_is_avoided() {
        let m = bfgs(&Fenced, DVector::from_vec(vec![5.0, 3.0]), &BfgsOptions::default()).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn hessian_of_quadratic() {
        let h = numerical_hessian(&Fenced, &DVector::from_vec(vec![1.0, 1.0]), 1e-5).unwrap();
        assert!((h - DMatrix::identity(2, 2) * 2.0).amax() < 1e-8);
    }

    #[test]
    fn polish_reaches_tight_gradient() {
        let o = BfgsOptions { grad_tol: 1e-3, ..Default::default() };
        let mut m = bfgs(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &o).unwrap();
        newton_polish(&Rosenbrock, &mut m, 10, &o).unwrap();
        assert!(m.grad.amax() < 1e-9);
    }
}
