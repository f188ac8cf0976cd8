//! B-spline and natural cubic spline bases.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Type-7 (linear interpolation) sample quantile of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Index `s` of the knot span with `knots[s] <= x < knots[s+1]`, clamped to the
/// valid range so that the right boundary belongs to the last nonempty span.
fn find_span(knots: &[f64], degree: usize, x: f64) -> usize {
    let n_basis = knots.len() - degree - 1;
    let lo = degree;
    let mut hi = n_basis; // knots[hi] is the right boundary
    if x >= knots[hi] {
        // last span with positive length
        let mut s = hi - 1;
        while s > lo && knots[s] >= knots[hi] {
            s -= 1;
        }
        return s;
    }
    if x <= knots[lo] {
        return lo;
    }
    let mut low = lo;
    while hi - low > 1 {
        let mid = (low + hi) / 2;
        if x < knots[mid] {
            hi = mid;
        } else {
            low = mid;
        }
    }
    low
}

/// Values and derivatives up to `n_deriv` of all B-spline basis functions at `x`.
///
/// Returns a `(n_deriv + 1) x n_basis` table; row `k` holds the k-th derivative.
/// `x` is clamped into the knot range (no extrapolation).
pub fn bspline_derivs(knots: &[f64], degree: usize, x: f64, n_deriv: usize) -> Vec<Vec<f64>> {
    let p = degree;
    let n_basis = knots.len() - p - 1;
    let x = x.clamp(knots[p], knots[n_basis]);
    let span = find_span(knots, p, x);

    // ndu holds basis functions (upper triangle) and knot differences (lower)
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = if ndu[j][r] != 0.0 { ndu[r][j - 1] / ndu[j][r] } else { 0.0 };
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    let mut ders = vec![vec![0.0; p + 1]; n_deriv + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let mut a = vec![vec![0.0; p + 1]; 2];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=n_deriv.min(p) {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                let rk = rk as usize;
                a[s2][0] = if ndu[pk + 1][rk] != 0.0 { a[s1][0] / ndu[pk + 1][rk] } else { 0.0 };
                d = a[s2][0] * ndu[rk][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = if ndu[pk + 1][idx] != 0.0 {
                    (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx]
                } else {
                    0.0
                };
                d += a[s2][j] * ndu[idx][pk];
            }
            if r as isize <= pk as isize {
                a[s2][k] = if ndu[pk + 1][r] != 0.0 { -a[s1][k - 1] / ndu[pk + 1][r] } else { 0.0 };
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = p as f64;
    for k in 1..=n_deriv.min(p) {
        for j in 0..=p {
            ders[k][j] *= factor;
        }
        factor *= (p - k) as f64;
    }

    let mut out = vec![vec![0.0; n_basis]; n_deriv + 1];
    for k in 0..=n_deriv {
        for j in 0..=p {
            out[k][span - p + j] = ders[k][j];
        }
    }
    out
}

/// A clamped B-spline basis of arbitrary degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    pub knots: Vec<f64>,
    pub degree: usize,
}

impl BSplineBasis {
    /// Basis with `n_basis` functions on `[lo, hi]`, interior knots given.
    pub fn new(interior: &[f64], lo: f64, hi: f64, degree: usize) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Spline(format!("boundary knots {lo} >= {hi}")));
        }
        if interior.iter().any(|&k| !(k > lo && k < hi)) {
            return Err(Error::Spline("interior knots must lie strictly inside the boundary".into()));
        }
        if interior.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Spline("interior knots must be sorted".into()));
        }
        let mut knots = vec![lo; degree + 1];
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(Self { knots, degree })
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn lower(&self) -> f64 {
        self.knots[0]
    }

    pub fn upper(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        bspline_derivs(&self.knots, self.degree, x, 0).swap_remove(0)
    }

    pub fn eval_derivs(&self, x: f64, n_deriv: usize) -> Vec<Vec<f64>> {
        bspline_derivs(&self.knots, self.degree, x, n_deriv)
    }
}

/// Natural cubic spline basis in the style of R's `ns()` without intercept:
/// cubic between knots, linear beyond the boundary knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalSpline {
    pub interior_knots: Vec<f64>,
    pub boundary_knots: (f64, f64),
    cubic: BSplineBasis,
    /// Maps the cubic B-spline columns (first dropped) onto the natural basis.
    projection: Vec<Vec<f64>>,
}

impl NaturalSpline {
    pub fn with_knots(interior: Vec<f64>, boundary: (f64, f64)) -> Result<Self> {
        let cubic = BSplineBasis::new(&interior, boundary.0, boundary.1, 3)?;
        let m = cubic.n_basis() - 1;
        // second derivatives at both boundaries, first column dropped
        let mut constraint = DMatrix::<f64>::zeros(m, 2);
        for (c, &x) in [boundary.0, boundary.1].iter().enumerate() {
            let d = cubic.eval_derivs(x, 2);
            for j in 0..m {
                constraint[(j, c)] = d[2][j + 1];
            }
        }
        let q = householder_q(&constraint);
        let df = m - 2;
        let projection = (0..m)
            .map(|j| (0..df).map(|k| q[(j, k + 2)]).collect())
            .collect();
        Ok(Self {
            interior_knots: interior,
            boundary_knots: boundary,
            cubic,
            projection,
        })
    }

    pub fn df(&self) -> usize {
        self.projection.first().map_or(0, Vec::len)
    }

    fn project(&self, raw: &[f64]) -> Vec<f64> {
        let df = self.df();
        let mut out = vec![0.0; df];
        for (j, row) in self.projection.iter().enumerate() {
            let v = raw[j + 1];
            if v != 0.0 {
                for k in 0..df {
                    out[k] += v * row[k];
                }
            }
        }
        out
    }

    /// Basis values (`order = 0`) or derivatives of the given order at `x`.
    pub fn eval_deriv(&self, x: f64, order: usize) -> Vec<f64> {
        let (lo, hi) = self.boundary_knots;
        if x < lo || x > hi {
            let b = if x < lo { lo } else { hi };
            let d = self.cubic.eval_derivs(b, 1);
            let raw: Vec<f64> = match order {
                0 => d[0].iter().zip(&d[1]).map(|(v, s)| v + (x - b) * s).collect(),
                1 => d[1].clone(),
                _ => vec![0.0; d[0].len()],
            };
            return self.project(&raw);
        }
        if order > 3 {
            return vec![0.0; self.df()];
        }
        let d = self.cubic.eval_derivs(x, order);
        self.project(&d[order])
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.eval_deriv(x, 0)
    }
}

/// Full orthogonal factor of a Householder QR of `a` (m x n, m > n).
fn householder_q(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut q = DMatrix::<f64>::identity(m, m);
    for k in 0..n {
        let x: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let mut v = x.clone();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // R <- H R
        for j in 0..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                r[(i, j)] -= f * v[i - k];
            }
        }
        // Q <- Q H
        for i in 0..m {
            let dot: f64 = (k..m).map(|l| q[(i, l)] * v[l - k]).sum();
            let f = 2.0 * dot / vnorm2;
            for l in k..m {
                q[(i, l)] -= f * v[l - k];
            }
        }
    }
    q
}

/// Natural spline basis for `x` with `df` columns. Interior knots sit at the
/// equally spaced type-7 quantiles of `x`; boundary knots default to the range.
pub fn ns_basis(x: &[f64], df: usize, boundary: Option<(f64, f64)>) -> Result<(NaturalSpline, DMatrix<f64>)> {
    let spline = ns_knots(x, df, boundary)?;
    let mut m = DMatrix::zeros(x.len(), df);
    for (i, &xi) in x.iter().enumerate() {
        for (j, v) in spline.eval(xi).into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok((spline, m))
}

/// Knot placement for [`ns_basis`] without evaluating the matrix.
pub fn ns_knots(x: &[f64], df: usize, boundary: Option<(f64, f64)>) -> Result<NaturalSpline> {
    if df < 1 {
        return Err(Error::Spline("df must be at least 1".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Spline("non-finite input".into()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < df + 1 {
        return Err(Error::Spline(format!(
            "df = {df} requires at least {} distinct values, found {}",
            df + 1,
            distinct.len()
        )));
    }
    let boundary = boundary.unwrap_or((sorted[0], sorted[sorted.len() - 1]));
    let inside: Vec<f64> = sorted
        .iter()
        .copied()
        .filter(|&v| v >= boundary.0 && v <= boundary.1)
        .collect();
    if inside.is_empty() {
        return Err(Error::Spline("no data inside the boundary knots".into()));
    }
    let interior: Vec<f64> = (1..df)
        .map(|j| quantile_sorted(&inside, j as f64 / df as f64))
        .collect();
    NaturalSpline::with_knots(interior, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        let b = BSplineBasis::new(&[1.0, 2.5, 3.0], 0.0, 5.0, 3).unwrap();
        for &x in &[0.0, 0.3, 1.0, 2.7, 4.99, 5.0] {
            let s: f64 = b.eval(x).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "x={x} sum={s}");
        }
        let d = b.eval_derivs(2.2, 2);
        assert!(d[1].iter().sum::<f64>().abs() < 1e-12);
        assert!(d[2].iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn bspline_derivative_matches_difference() {
        let b = BSplineBasis::new(&[0.7, 1.9, 3.3], 0.0, 5.0, 3).unwrap();
        let h = 1e-6;
        for &x in &[0.2, 1.1, 2.5, 4.4] {
            let d = b.eval_derivs(x, 2);
            let (p, m) = (b.eval(x + h), b.eval(x - h));
            for j in 0..b.n_basis() {
                let fd = (p[j] - m[j]) / (2.0 * h);
                assert!((fd - d[1][j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn df_one_is_linear() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let (s, m) = ns_basis(&x, 1, None).unwrap();
        assert_eq!(m.ncols(), 1);
        assert!(s.interior_knots.is_empty());
        for &t in &[0.0, 0.3, 0.9, 1.0, 1.7, -2.0] {
            assert!(s.eval_deriv(t, 2)[0].abs() < 1e-12);
        }
        // affine in x
        let v: Vec<f64> = x.iter().map(|&t| s.eval(t)[0]).collect();
        let slope = v[1] - v[0];
        for k in 1..v.len() {
            assert!((v[k] - v[k - 1] - slope).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_beyond_boundary() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (s, _) = ns_basis(&x, 4, None).unwrap();
        for &t in &[-10.0, -0.5, 99.5, 150.0] {
            assert!(s.eval_deriv(t, 2).iter().all(|v| v.abs() < 1e-12));
        }
        // second derivative vanishes at the boundary from the inside
        for &t in &[0.0, 99.0] {
            assert!(s.eval_deriv(t, 2).iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn continuity_at_knots() {
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 99.0 * 10.0).collect();
        let (s, _) = ns_basis(&x, 3, None).unwrap();
        assert_eq!(s.interior_knots.len(), 2);
        let h = 1e-7;
        for &k in &s.interior_knots {
            for order in 0..=2 {
                let l = s.eval_deriv(k - h, order);
                let r = s.eval_deriv(k + h, order);
                for j in 0..3 {
                    assert!((l[j] - r[j]).abs() < 1e-6, "order {order} col {j}");
                }
            }
        }
        // first derivative from finite differences of values, two-sided
        let h = 1e-5;
        for &k in &s.interior_knots {
            let d = s.eval_deriv(k, 1);
            let (p, m) = (s.eval(k + h), s.eval(k - h));
            for j in 0..3 {
                assert!(((p[j] - m[j]) / (2.0 * h) - d[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn too_few_distinct_values() {
        assert!(ns_basis(&[1.0, 1.0, 2.0], 2, None).is_err());
        assert!(ns_basis(&[1.0, 2.0], 0, None).is_err());
    }

    #[test]
    fn quantiles_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert!((quantile_sorted(&v, 1.0 / 3.0) - 2.0).abs() < 1e-12);
    }
}
