//! B-spline basis systems on a closed interval.
//!
//! A basis is defined by its degree, its dimension and a clamped knot vector
//! with equally spaced interior knots. Evaluation uses the Cox–de Boor
//! recursion; the Gram matrix of pairwise L² inner products is assembled by
//! Gauss–Legendre quadrature per knot span, which is exact for the
//! piecewise-polynomial integrand.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Matrix of L² inner products between basis functions.
pub type GramMatrix = DMatrix<f64>;

/// Difference penalty matrix P = D'D used by penalized fits.
pub type PenaltyMatrix = DMatrix<f64>;

/// A clamped B-spline basis of a given degree and dimension on `[a, b]`.
///
/// The knot vector has boundary knots of multiplicity `degree + 1` and
/// `dimension - degree - 1` equally spaced interior knots, so endpoint values
/// of a spline equal its first and last coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    degree: usize,
    dimension: usize,
    domain: (f64, f64),
    knots: Vec<f64>,
}

impl BSplineBasis {
    /// Builds the basis. `dimension` must be at least `degree + 1` and the
    /// domain nonempty.
    pub fn new(degree: usize, dimension: usize, domain: (f64, f64)) -> Result<Self> {
        let (a, b) = domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidBasis(format!(
                "domain [{a}, {b}] is empty or not finite"
            )));
        }
        if dimension < degree + 1 {
            return Err(Error::InvalidBasis(format!(
                "dimension {dimension} too small for degree {degree} (need at least {})",
                degree + 1
            )));
        }
        let interior = dimension - degree - 1;
        let mut knots = Vec::with_capacity(dimension + degree + 1);
        knots.extend(std::iter::repeat_n(a, degree + 1));
        for k in 1..=interior {
            knots.push(a + (b - a) * k as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(b, degree + 1));
        debug_assert_eq!(knots.len(), dimension + degree + 1);
        Ok(Self {
            degree,
            dimension,
            domain,
            knots,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions p.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Index of the knot span containing `t`, in `degree ..= dimension - 1`.
    /// The right endpoint maps to the last span (left-limit continuity).
    fn span_of(&self, t: f64) -> usize {
        let last = self.dimension - 1;
        if t >= self.knots[last] {
            return last;
        }
        // knots[degree] = a <= t < knots[last], binary search over spans
        let mut lo = self.degree;
        let mut hi = last;
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if self.knots[mid] <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    /// Values of the `degree + 1` basis functions that may be nonzero at `t`,
    /// returned with the index of the first one.
    fn nonzero_at(&self, t: f64) -> (usize, Vec<f64>) {
        let d = self.degree;
        let span = self.span_of(t);
        let mut values = vec![0.0; d + 1];
        values[0] = 1.0;
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        for j in 1..=d {
            left[j] = t - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        (span - d, values)
    }

    /// Evaluates every basis function at `t`.
    pub fn eval_at(&self, t: f64) -> Result<DVector<f64>> {
        let (a, b) = self.domain;
        if !(t >= a && t <= b) {
            return Err(Error::DomainError { point: t, a, b });
        }
        let mut row = DVector::zeros(self.dimension);
        let (first, values) = self.nonzero_at(t);
        for (offset, v) in values.iter().enumerate() {
            row[first + offset] = *v;
        }
        Ok(row)
    }

    /// Design matrix with one row per grid point and one column per basis
    /// function. The grid must be strictly increasing and inside the domain.
    pub fn eval_matrix(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        if grid.is_empty() {
            return Err(Error::InvalidArgument("empty evaluation grid".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "evaluation grid must be strictly increasing".into(),
            ));
        }
        let mut design = DMatrix::zeros(grid.len(), self.dimension);
        for (s, &t) in grid.iter().enumerate() {
            let (a, b) = self.domain;
            if !(t >= a && t <= b) {
                return Err(Error::DomainError { point: t, a, b });
            }
            let (first, values) = self.nonzero_at(t);
            for (offset, v) in values.iter().enumerate() {
                design[(s, first + offset)] = *v;
            }
        }
        Ok(design)
    }

    /// Gram matrix Ψ of pairwise L² inner products, assembled span by span
    /// with `degree + 1` Gauss–Legendre nodes (exact for the degree-2d
    /// product integrand).
    pub fn gram(&self) -> GramMatrix {
        let d = self.degree;
        let (nodes, weights) = gauss_legendre(d + 1);
        let mut psi = DMatrix::zeros(self.dimension, self.dimension);
        for span in d..self.dimension {
            let (lo, hi) = (self.knots[span], self.knots[span + 1]);
            if hi <= lo {
                continue;
            }
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (&x, &w) in nodes.iter().zip(weights.iter()) {
                let t = mid + half * x;
                let (first, values) = self.nonzero_at(t);
                let scaled = w * half;
                for i in 0..values.len() {
                    for j in 0..values.len() {
                        psi[(first + i, first + j)] += scaled * values[i] * values[j];
                    }
                }
            }
        }
        // exact symmetry despite accumulation order
        for i in 0..self.dimension {
            for j in 0..i {
                let avg = 0.5 * (psi[(i, j)] + psi[(j, i)]);
                psi[(i, j)] = avg;
                psi[(j, i)] = avg;
            }
        }
        psi
    }
}

/// Difference penalty P = D'D where D is the `order`-th difference matrix of
/// shape `(dimension - order) × dimension`.
pub fn difference_penalty(dimension: usize, order: usize) -> Result<PenaltyMatrix> {
    let d = difference_matrix(dimension, order)?;
    Ok(d.transpose() * d)
}

/// The `order`-th forward-difference matrix.
pub fn difference_matrix(dimension: usize, order: usize) -> Result<DMatrix<f64>> {
    if order >= dimension {
        return Err(Error::InvalidArgument(format!(
            "difference order {order} must be smaller than dimension {dimension}"
        )));
    }
    // row coefficients are (-1)^(order-k) * C(order, k)
    let mut coeff = vec![0.0; order + 1];
    for (k, c) in coeff.iter_mut().enumerate() {
        let sign = if (order - k).is_multiple_of(2) { 1.0 } else { -1.0 };
        *c = sign * binomial(order, k);
    }
    let rows = dimension - order;
    let mut d = DMatrix::zeros(rows, dimension);
    for i in 0..rows {
        for (k, &c) in coeff.iter().enumerate() {
            d[(i, i + k)] = c;
        }
    }
    Ok(d)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
