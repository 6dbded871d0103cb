//! Built-in constraint functions.
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::ConstraintFn;

/// `f(x) = A x - c`
#[derive(Debug, Clone)]
pub struct Affine {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl Affine {
    pub fn new(a: DMatrix<f64>, c: DVector<f64>) -> Self {
        assert_eq!(a.nrows(), c.len(), "affine block: A and c disagree");
        Self { a, c }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n), DVector::zeros(n))
    }

    /// `scale * (x - target)`
    pub fn scaled_offset(scale: f64, target: DVector<f64>) -> Self {
        let n = target.len();
        Self::new(DMatrix::identity(n, n) * scale, target * scale)
    }
}

impl ConstraintFn for Affine {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn accepts(&self, n: usize) -> bool {
        self.a.ncols() == n
    }

    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        (&self.a * x - &self.c, self.a.clone())
    }

    fn weighted_hessian(&self, x: &DVector<f64>, _weights: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(x.len(), x.len()))
    }
}

/// `f_k(x) = sum_{i in indices} x_i^2 - offsets[k]`, one row per offset.
#[derive(Debug, Clone)]
pub struct Disk {
    pub indices: Vec<usize>,
    pub offsets: Vec<f64>,
}

impl Disk {
    pub fn new(indices: Vec<usize>, offsets: Vec<f64>) -> Self {
        Self { indices, offsets }
    }
}

impl ConstraintFn for Disk {
    fn accepts(&self, n: usize) -> bool {
        self.indices.iter().all(|&i| i < n)
    }

    fn dim(&self) -> usize {
        self.offsets.len()
    }

    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let sq: f64 = self.indices.iter().map(|&i| x[i] * x[i]).sum();
        let f = DVector::from_iterator(self.dim(), self.offsets.iter().map(|c| sq - c));
        let mut j = DMatrix::zeros(self.dim(), x.len());
        for k in 0..self.dim() {
            for &i in &self.indices {
                j[(k, i)] = 2.0 * x[i];
            }
        }
        (f, j)
    }

    fn weighted_hessian(&self, x: &DVector<f64>, weights: &DVector<f64>) -> Option<DMatrix<f64>> {
        let w = weights.sum();
        let mut h = DMatrix::zeros(x.len(), x.len());
        for &i in &self.indices {
            h[(i, i)] = 2.0 * w;
        }
        Some(h)
    }
}

/// `f_k(x) = (1 - x_a)^2 + 100 (x_b - x_a^2)^2 + offsets[k]`
#[derive(Debug, Clone)]
pub struct Rosenbrock {
    pub a: usize,
    pub b: usize,
    pub offsets: Vec<f64>,
}

impl Rosenbrock {
    pub fn new(a: usize, b: usize, offsets: Vec<f64>) -> Self {
        Self { a, b, offsets }
    }
}

impl ConstraintFn for Rosenbrock {
    fn accepts(&self, n: usize) -> bool {
        self.a < n && self.b < n
    }

    fn dim(&self) -> usize {
        self.offsets.len()
    }

    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (xa, xb) = (x[self.a], x[self.b]);
        let base = (1.0 - xa).powi(2) + 100.0 * (xb - xa * xa).powi(2);
        let ga = -2.0 * (1.0 - xa) - 400.0 * xa * (xb - xa * xa);
        let gb = 200.0 * (xb - xa * xa);
        let f = DVector::from_iterator(self.dim(), self.offsets.iter().map(|o| base + o));
        let mut j = DMatrix::zeros(self.dim(), x.len());
        for k in 0..self.dim() {
            j[(k, self.a)] += ga;
            j[(k, self.b)] += gb;
        }
        (f, j)
    }

    fn weighted_hessian(&self, x: &DVector<f64>, weights: &DVector<f64>) -> Option<DMatrix<f64>> {
        let w = weights.sum();
        let (xa, xb) = (x[self.a], x[self.b]);
        let mut h = DMatrix::zeros(x.len(), x.len());
        h[(self.a, self.a)] += w * (2.0 - 400.0 * (xb - xa * xa) + 800.0 * xa * xa);
        h[(self.a, self.b)] += w * (-400.0 * xa);
        h[(self.b, self.a)] += w * (-400.0 * xa);
        h[(self.b, self.b)] += w * 200.0;
        Some(h)
    }
}

/// `f_k(x) = sin(x_a + x_b) + (x_a - x_b)^2 - 1.5 x_a + 2.5 x_b + 1 + offsets[k]`
#[derive(Debug, Clone)]
pub struct McCormick {
    pub a: usize,
    pub b: usize,
    pub offsets: Vec<f64>,
}

impl McCormick {
    pub fn new(a: usize, b: usize, offsets: Vec<f64>) -> Self {
        Self { a, b, offsets }
    }
}

impl ConstraintFn for McCormick {
    fn accepts(&self, n: usize) -> bool {
        self.a < n && self.b < n
    }

    fn dim(&self) -> usize {
        self.offsets.len()
    }

    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (xa, xb) = (x[self.a], x[self.b]);
        let base = (xa + xb).sin() + (xa - xb).powi(2) - 1.5 * xa + 2.5 * xb + 1.0;
        let c = (xa + xb).cos();
        let ga = c + 2.0 * (xa - xb) - 1.5;
        let gb = c - 2.0 * (xa - xb) + 2.5;
        let f = DVector::from_iterator(self.dim(), self.offsets.iter().map(|o| base + o));
        let mut j = DMatrix::zeros(self.dim(), x.len());
        for k in 0..self.dim() {
            j[(k, self.a)] += ga;
            j[(k, self.b)] += gb;
        }
        (f, j)
    }

    fn weighted_hessian(&self, x: &DVector<f64>, weights: &DVector<f64>) -> Option<DMatrix<f64>> {
        let w = weights.sum();
        let s = -(x[self.a] + x[self.b]).sin();
        let mut h = DMatrix::zeros(x.len(), x.len());
        h[(self.a, self.a)] += w * (s + 2.0);
        h[(self.a, self.b)] += w * (s - 2.0);
        h[(self.b, self.a)] += w * (s - 2.0);
        h[(self.b, self.b)] += w * (s + 2.0);
        Some(h)
    }
}

/// A task-space map `g(x)` such as a forward-kinematics position.
pub trait TaskMap: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    /// Whether `x` of length `n` is a valid input.
    fn accepts(&self, _n: usize) -> bool {
        true
    }
    /// `g(x)` and its Jacobian `G`.
    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
    /// `sum_j weights[j] * hess g_j(x)`.
    fn weighted_hessian(&self, _x: &DVector<f64>, _weights: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// `f_k(x) = ||g(x) - targets[k]||^2`, one row per target.
#[derive(Debug, Clone)]
pub struct SquaredDistance {
    pub task: Arc<dyn TaskMap>,
    pub targets: Vec<DVector<f64>>,
}

impl SquaredDistance {
    pub fn new(task: Arc<dyn TaskMap>, targets: Vec<DVector<f64>>) -> Self {
        Self { task, targets }
    }
}

impl ConstraintFn for SquaredDistance {
    fn accepts(&self, n: usize) -> bool {
        self.task.accepts(n) && self.targets.iter().all(|t| t.len() == self.task.dim())
    }

    fn dim(&self) -> usize {
        self.targets.len()
    }

    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (g, gj) = self.task.eval(x);
        let mut f = DVector::zeros(self.dim());
        let mut j = DMatrix::zeros(self.dim(), x.len());
        for (k, target) in self.targets.iter().enumerate() {
            let d = &g - target;
            f[k] = d.norm_squared();
            j.row_mut(k).copy_from(&((d.transpose() * &gj) * 2.0));
        }
        (f, j)
    }

    fn weighted_hessian(&self, x: &DVector<f64>, weights: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (g, gj) = self.task.eval(x);
        let total: f64 = weights.sum();
        let mut h = gj.transpose() * &gj * (2.0 * total);
        let mut inner = DVector::zeros(g.len());
        for (k, target) in self.targets.iter().enumerate() {
            inner += (&g - target) * (2.0 * weights[k]);
        }
        if inner.iter().any(|v| *v != 0.0) {
            h += self.task.weighted_hessian(x, &inner)?;
        }
        Some(h)
    }
}

/// `f(x) = g(x) - target`, one row per task coordinate.
#[derive(Debug, Clone)]
pub struct TaskOffset {
    pub task: Arc<dyn TaskMap>,
    pub target: DVector<f64>,
}

impl TaskOffset {
    pub fn new(task: Arc<dyn TaskMap>, target: DVector<f64>) -> Self {
        Self { task, target }
    }
}

impl ConstraintFn for TaskOffset {
    fn accepts(&self, n: usize) -> bool {
        self.task.accepts(n) && self.target.len() == self.task.dim()
    }

    fn dim(&self) -> usize {
        self.task.dim()
    }

    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (g, gj) = self.task.eval(x);
        (g - &self.target, gj)
    }

    fn weighted_hessian(&self, x: &DVector<f64>, weights: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.task.weighted_hessian(x, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn central_difference(f: &dyn ConstraintFn, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(f.dim(), x.len());
        for c in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let d = (f.eval(&xp).0 - f.eval(&xm).0) / (2.0 * h);
            j.column_mut(c).copy_from(&d);
        }
        j
    }

    fn hessian_difference(f: &dyn ConstraintFn, x: &DVector<f64>, w: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let n = x.len();
        let mut hm = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let d = (f.eval(&xp).1.transpose() * w - f.eval(&xm).1.transpose() * w) / (2.0 * h);
            hm.column_mut(c).copy_from(&d);
        }
        hm
    }

    fn check(f: &dyn ConstraintFn, n: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let (_, j) = f.eval(&x);
            let fd = central_difference(f, &x, 1e-6);
            let err = (&j - &fd).norm();
            assert!(err <= 1e-5 * j.norm().max(1.0), "jacobian error {err}");
            let w = DVector::from_fn(f.dim(), |_, _| rng.random_range(-1.0..1.0));
            if let Some(h) = f.weighted_hessian(&x, &w) {
                let hd = hessian_difference(f, &x, &w, 1e-5);
                assert!((&h - &hd).norm() <= 1e-4 * h.norm().max(1.0));
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        check(&Disk::new(vec![0, 2], vec![1.0, 1.1]), 3);
        check(&Rosenbrock::new(1, 2, vec![0.0, 5.0]), 3);
        check(&McCormick::new(0, 1, vec![20.0]), 2);
        check(
            &Affine::new(DMatrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]), DVector::from_vec(vec![1., -1.])),
            3,
        );
    }

    #[test]
    fn mccormick_gradient_relative_accuracy() {
        let f = McCormick::new(0, 1, vec![0.0]);
        let x = DVector::from_vec(vec![0.37, -1.21]);
        let (_, j) = f.eval(&x);
        let fd = central_difference(&f, &x, 1e-6);
        for c in 0..2 {
            assert!((j[(0, c)] - fd[(0, c)]).abs() <= 1e-6 * j[(0, c)].abs());
        }
    }

    #[derive(Debug)]
    struct Ident;
    impl TaskMap for Ident {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
            (x.clone(), DMatrix::identity(2, 2))
        }
        fn weighted_hessian(&self, _x: &DVector<f64>, _w: &DVector<f64>) -> Option<DMatrix<f64>> {
            Some(DMatrix::zeros(2, 2))
        }
    }

    #[test]
    fn squared_distance_to_identity_map() {
        let f = SquaredDistance::new(Arc::new(Ident), vec![DVector::zeros(2), DVector::from_vec(vec![1.0, 0.0])]);
        let x = DVector::from_vec(vec![0.3, -0.4]);
        let (v, j) = f.eval(&x);
        assert!((v[0] - 0.25).abs() < 1e-15);
        assert!((j[(0, 0)] - 0.6).abs() < 1e-15 && (j[(0, 1)] + 0.8).abs() < 1e-15);
        check(&f, 2);
    }

    #[test]
    fn task_offset_subtracts_the_target() {
        let f = TaskOffset::new(Arc::new(Ident), DVector::from_vec(vec![1.0, 2.0]));
        let (v, j) = f.eval(&DVector::from_vec(vec![0.5, 0.5]));
        assert_eq!(v.as_slice(), &[-0.5, -1.5]);
        assert_eq!(j, DMatrix::identity(2, 2));
    }
}
