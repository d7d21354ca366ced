//! Univariate basis families applied channel-wise: the Gaussian RBF grid
//! used by the KAC head and a B-spline basis for the spline ablation head.

use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::numerics::Matrix;

/// `N` equally spaced points on `[lo, hi]`, both endpoints included.
/// A single center sits at the midpoint. Centers are computed as
/// `(lo (N-1-i) + hi i) / (N-1)`, so a grid with `lo = -hi` is exactly
/// mirror-symmetric.
pub fn make_centers(n: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(KacError::param("number of centers must be at least 1"));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(KacError::param(format!("center interval [{lo}, {hi}] is empty")));
    }
    if n == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    let last = (n - 1) as f64;
    let mut centers: Vec<f64> = (0..n)
        .map(|i| (lo * (last - i as f64) + hi * i as f64) / last)
        .collect();
    centers[0] = lo;
    centers[n - 1] = hi;
    Ok(centers)
}

/// Gaussian RBF grid: `phi_i(x) = exp(-(x - c_i)^2 / (2 sigma_i^2))`.
///
/// Centers and widths are fixed; nothing here is trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfGrid {
    lo: f64,
    hi: f64,
    centers: Vec<f64>,
    sigmas: Vec<f64>,
}

impl RbfGrid {
    /// `n` centers from [`make_centers`] sharing one width `sigma`.
    pub fn new(n: usize, lo: f64, hi: f64, sigma: f64) -> Result<Self> {
        let centers = make_centers(n, lo, hi)?;
        RbfGrid::with_sigmas(lo, hi, centers, vec![sigma; n])
    }

    pub fn with_sigmas(lo: f64, hi: f64, centers: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        let grid = RbfGrid {
            lo,
            hi,
            centers,
            sigmas,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.centers.len();
        if n == 0 {
            return Err(KacError::param("RBF grid needs at least one center"));
        }
        if self.sigmas.len() != n {
            return Err(KacError::dim(
                "RbfGrid",
                format!("{n} centers"),
                format!("{} sigmas", self.sigmas.len()),
            ));
        }
        if !(self.lo < self.hi) {
            return Err(KacError::param(format!(
                "RBF interval [{}, {}] is empty",
                self.lo, self.hi
            )));
        }
        if self.centers.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(KacError::param("RBF centers must be strictly increasing"));
        }
        if n >= 2 && (self.centers[0] != self.lo || self.centers[n - 1] != self.hi) {
            return Err(KacError::param("RBF centers must span the interval endpoints"));
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(KacError::param("RBF widths must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        for ((o, c), s) in out.iter_mut().zip(&self.centers).zip(&self.sigmas) {
            let d = x - c;
            *o = (-(d * d) / (2.0 * s * s)).exp();
        }
    }

    /// `d phi_i / dx = -(x - c_i) / sigma_i^2 * phi_i(x)`.
    pub fn grad(&self, x: f64) -> Vec<f64> {
        self.centers
            .iter()
            .zip(&self.sigmas)
            .map(|(c, s)| {
                let d = x - c;
                -d / (s * s) * (-(d * d) / (2.0 * s * s)).exp()
            })
            .collect()
    }

    /// Stacks `eval(x_p)` into an `n x N` matrix, one row per input entry.
    pub fn eval_matrix(&self, xs: &[f64]) -> Matrix {
        let n = self.len();
        let mut m = Matrix::zeros(xs.len(), n);
        for (p, &x) in xs.iter().enumerate() {
            self.eval_into(x, m.row_mut(p));
        }
        m
    }
}

pub fn rbf_eval(grid: &RbfGrid, x: f64) -> Vec<f64> {
    grid.eval(x)
}

pub fn rbf_eval_matrix(grid: &RbfGrid, xs: &[f64]) -> Matrix {
    grid.eval_matrix(xs)
}

pub fn rbf_grad(grid: &RbfGrid, x: f64) -> Vec<f64> {
    grid.grad(x)
}

/// B-spline basis of a given degree over an explicit knot vector.
///
/// With `k` knots and degree `p` there are `G = k - p - 1` basis
/// functions. They sum to one on `[knots[p], knots[k - p - 1]]`; inputs
/// outside that interval are clamped onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsplineBasis {
    degree: usize,
    knots: Vec<f64>,
}

impl BsplineBasis {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        let basis = BsplineBasis { degree, knots };
        basis.validate()?;
        Ok(basis)
    }

    /// `intervals` equal spans on `[lo, hi]`, extended by `degree` knots of
    /// the same spacing on each side, giving `intervals + degree` functions.
    pub fn uniform(degree: usize, intervals: usize, lo: f64, hi: f64) -> Result<Self> {
        if intervals == 0 {
            return Err(KacError::param("B-spline grid needs at least one interval"));
        }
        if !(lo < hi) {
            return Err(KacError::param(format!("B-spline interval [{lo}, {hi}] is empty")));
        }
        let h = (hi - lo) / intervals as f64;
        let total = intervals + 2 * degree + 1;
        let mut knots: Vec<f64> = (0..total)
            .map(|j| lo + (j as f64 - degree as f64) * h)
            .collect();
        knots[degree] = lo;
        knots[degree + intervals] = hi;
        BsplineBasis::new(degree, knots)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.knots.len();
        if k < self.degree + 2 {
            return Err(KacError::param(format!(
                "degree {} needs at least {} knots, got {k}",
                self.degree,
                self.degree + 2
            )));
        }
        if self.knots.iter().any(|t| !t.is_finite()) {
            return Err(KacError::NonFinite("BsplineBasis knots"));
        }
        if self.knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(KacError::param("B-spline knots must be nondecreasing"));
        }
        let (lo, hi) = self.interval();
        if !(lo < hi) {
            return Err(KacError::param("B-spline interior support is empty"));
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions `G`.
    pub fn len(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Interior support `[knots[p], knots[G]]`.
    pub fn interval(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.knots.len() - self.degree - 1])
    }

    fn clamp(&self, x: f64) -> f64 {
        let (lo, hi) = self.interval();
        x.clamp(lo, hi)
    }

    /// Knot span `mu` with `knots[mu] <= x < knots[mu + 1]`, restricted to
    /// spans inside the interior support. At the right end the last
    /// non-empty span is used.
    fn span(&self, x: f64) -> usize {
        let p = self.degree;
        let last = self.len() - 1;
        if x >= self.knots[last + 1] {
            let mut mu = last;
            while mu > p && self.knots[mu] == self.knots[mu + 1] {
                mu -= 1;
            }
            return mu;
        }
        // Largest mu in [p, last] with knots[mu] <= x.
        let mut mu = p;
        for j in p..=last {
            if self.knots[j] <= x {
                mu = j;
            } else {
                break;
            }
        }
        while mu > p && self.knots[mu] == self.knots[mu + 1] {
            mu -= 1;
        }
        mu
    }

    /// Nonzero degree-`d` values `B_{mu-d..=mu, d}(x)` on span `mu`.
    fn span_values(&self, mu: usize, d: usize, x: f64) -> Vec<f64> {
        let t = &self.knots;
        let mut n = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        n[0] = 1.0;
        for j in 1..=d {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let x = self.clamp(x);
        let p = self.degree;
        let mu = self.span(x);
        let mut out = vec![0.0; self.len()];
        for (r, v) in self.span_values(mu, p, x).into_iter().enumerate() {
            out[mu - p + r] = v;
        }
        out
    }

    /// Derivative of every basis function. Zero outside the interior
    /// support, where the clamped evaluation is constant.
    pub fn grad(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let p = self.degree;
        let (lo, hi) = self.interval();
        if p == 0 || x < lo || x > hi {
            return out;
        }
        let t = &self.knots;
        let mu = self.span(x);
        // lower[r] = B_{mu-p+1+r, p-1}(x), r = 0..p
        let lower = self.span_values(mu, p - 1, x);
        let lower_at = |i: usize| -> f64 {
            // Index i of a degree p-1 function; nonzero only for mu-p+1..=mu.
            if i + p < mu + 1 || i > mu {
                0.0
            } else {
                lower[i + p - 1 - mu]
            }
        };
        let pf = p as f64;
        for i in (mu - p)..=mu {
            let a = t[i + p] - t[i];
            let b = t[i + p + 1] - t[i + 1];
            let mut g = 0.0;
            if a > 0.0 {
                g += pf / a * lower_at(i);
            }
            if b > 0.0 {
                g -= pf / b * lower_at(i + 1);
            }
            out[i] = g;
        }
        out
    }
}

pub fn bspline_eval(basis: &BsplineBasis, x: f64) -> Vec<f64> {
    basis.eval(x)
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Textbook Cox-de Boor recursion, independent of the span algorithm.
    fn cox_de_boor(knots: &[f64], i: usize, p: usize, x: f64) -> f64 {
        if p == 0 {
            return if knots[i] <= x && x < knots[i + 1] { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let a = knots[i + p] - knots[i];
        if a > 0.0 {
            v += (x - knots[i]) / a * cox_de_boor(knots, i, p - 1, x);
        }
        let b = knots[i + p + 1] - knots[i + 1];
        if b > 0.0 {
            v += (knots[i + p + 1] - x) / b * cox_de_boor(knots, i + 1, p - 1, x);
        }
        v
    }

    #[test]
    fn centers_examples() {
        assert_eq!(make_centers(2, -2.0, 2.0).unwrap(), vec![-2.0, 2.0]);
        assert_eq!(make_centers(1, -2.0, 2.0).unwrap(), vec![0.0]);
        let c = make_centers(4, -2.0, 2.0).unwrap();
        let spacing = 4.0 / 3.0;
        for (i, v) in c.iter().enumerate() {
            assert!(close(*v, -2.0 + spacing * i as f64, 1e-15));
        }
        assert!(close(c[1], -2.0 / 3.0, 1e-15) && close(c[2], 2.0 / 3.0, 1e-15));
        assert!(make_centers(0, -2.0, 2.0).is_err());
    }

    #[test]
    fn rbf_examples() {
        let grid = RbfGrid::new(4, -2.0, 2.0, 1.0).unwrap();
        for (i, c) in grid.centers().iter().enumerate() {
            assert_eq!(grid.eval(*c)[i], 1.0);
            assert!(close(grid.eval(c + 1.0)[i], 0.606_530_659_7, 1e-10));
        }
        let at_zero = grid.eval(0.0);
        let expected = [(-2.0f64).exp(), (-2.0f64 / 9.0).exp(), (-2.0f64 / 9.0).exp(), (-2.0f64).exp()];
        for (a, b) in at_zero.iter().zip(expected) {
            assert!(close(*a, b, 1e-15));
        }
    }

    #[test]
    fn rbf_matrix_matches_scalar_loop() {
        let grid = RbfGrid::new(4, -2.0, 2.0, 1.0).unwrap();
        let mut rng = Rng::new(11);
        let xs: Vec<f64> = (0..5).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let m = grid.eval_matrix(&xs);
        assert_eq!(m.shape(), (5, 4));
        for (p, x) in xs.iter().enumerate() {
            for (i, c) in grid.centers().iter().enumerate() {
                let direct = (-(x - c) * (x - c) / 2.0).exp();
                assert!(close(m.get(p, i), direct, 1e-15));
            }
        }
        let dup = grid.eval_matrix(&[0.3, 0.3]);
        assert_eq!(dup.row(0), dup.row(1));
    }

    #[test]
    fn rbf_grad_examples() {
        let grid = RbfGrid::new(4, -2.0, 2.0, 1.0).unwrap();
        for (i, c) in grid.centers().iter().enumerate() {
            assert_eq!(grid.grad(*c)[i], 0.0);
            assert!(grid.grad(c + 0.1)[i] < 0.0);
        }
        let mut rng = Rng::new(5);
        let h = 1e-6;
        for _ in 0..50 {
            let x = rng.uniform(-10.0, 10.0);
            let g = grid.grad(x);
            let (up, down) = (grid.eval(x + h), grid.eval(x - h));
            for i in 0..4 {
                assert!(close(g[i], (up[i] - down[i]) / (2.0 * h), 1e-6));
            }
        }
    }

    #[test]
    fn grid_rejects_bad_widths() {
        assert!(RbfGrid::new(4, -2.0, 2.0, 0.0).is_err());
        assert!(RbfGrid::with_sigmas(-2.0, 2.0, vec![-2.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn bspline_degree_zero_indicator() {
        let b = BsplineBasis::new(0, vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(b.eval(0.5), vec![1.0, 0.0]);
        assert_eq!(b.eval(2.0), vec![0.0, 1.0]);
    }

    #[test]
    fn bspline_matches_recursion_oracle() {
        let b = BsplineBasis::uniform(3, 5, -2.0, 2.0).unwrap();
        assert_eq!(b.len(), 8);
        let mut rng = Rng::new(2);
        let mut xs = vec![0.0];
        xs.extend((0..200).map(|_| rng.uniform(-2.0, 2.0)));
        for x in xs {
            let fast = b.eval(x);
            for (i, v) in fast.iter().enumerate() {
                let slow = cox_de_boor(b.knots(), i, 3, x);
                assert!(close(*v, slow, 1e-14), "x={x} i={i}: {v} vs {slow}");
            }
            assert!(close(fast.iter().sum::<f64>(), 1.0, 1e-12));
        }
    }

    #[test]
    fn bspline_clamps_outside_support() {
        let b = BsplineBasis::uniform(3, 4, -2.0, 2.0).unwrap();
        assert_eq!(b.eval(-7.0), b.eval(-2.0));
        assert_eq!(b.eval(9.0), b.eval(2.0));
        assert!(close(b.eval(2.0).iter().sum::<f64>(), 1.0, 1e-12));
        assert!(b.grad(5.0).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn bspline_grad_matches_finite_difference() {
        for degree in 1..=4 {
            let b = BsplineBasis::uniform(degree, 5, -2.0, 2.0).unwrap();
            let mut rng = Rng::new(degree as u64);
            let h = 1e-6;
            for _ in 0..100 {
                let x = rng.uniform(-1.99, 1.99);
                // Skip points within the FD stencil of a knot for degree 1.
                if degree == 1 && b.knots().iter().any(|t| (t - x).abs() < 1e-5) {
                    continue;
                }
                let g = b.grad(x);
                let (up, down) = (b.eval(x + h), b.eval(x - h));
                for i in 0..b.len() {
                    let fd = (up[i] - down[i]) / (2.0 * h);
                    assert!(close(g[i], fd, 1e-6), "p={degree} x={x} i={i}: {} vs {fd}", g[i]);
                }
            }
        }
    }

    #[test]
    fn silu_examples() {
        assert_eq!(silu(0.0), 0.0);
        assert!(close(silu(20.0), 20.0, 1e-6));
        assert!(close(silu(1.0), 1.0 / (1.0 + (-1.0f64).exp()), 1e-15));
        assert!(close(silu(1.0), 0.731_058_578_6, 1e-10));
        let h = 1e-6;
        for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!(close(silu_grad(x), fd, 1e-8));
        }
    }
}
