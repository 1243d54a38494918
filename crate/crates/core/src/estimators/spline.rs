use alloc::vec::Vec;

/// Natural cubic spline basis in truncated-power form, without the constant.
///
/// Uses `df + 1` knots spread evenly over `[lo, hi]`. The columns are `x`
/// followed by `d_k(x) - d_{K-1}(x)` for `k = 1..K-2`, where
/// `d_k(x) = ((x - xi_k)_+^3 - (x - xi_K)_+^3) / (xi_K - xi_k)`. This gives `df`
/// columns that are cubic between knots and linear beyond the boundary knots.
pub fn natural_spline_basis(x: f64, df: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(df);
    if df == 0 {
        return out;
    }
    out.push(x);
    if df == 1 || hi <= lo {
        out.resize(df, 0.0);
        return out;
    }
    let k = df + 1;
    let knot = |j: usize| lo + (hi - lo) * j as f64 / (k - 1) as f64;
    let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
    let last = knot(k - 1);
    let d = |j: usize| (cube(x - knot(j)) - cube(x - last)) / (last - knot(j));
    let d_pen = d(k - 2);
    for j in 0..k - 2 {
        out.push(d(j) - d_pen);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_count() {
        for df in 1..6 {
            assert_eq!(natural_spline_basis(2.0, df, 1.0, 6.0).len(), df);
        }
    }

    #[test]
    fn linear_beyond_boundary() {
        // second differences vanish to the right of the last knot
        let f = |x: f64| natural_spline_basis(x, 4, 1.0, 6.0);
        let (a, b, c) = (f(7.0), f(8.0), f(9.0));
        for j in 0..4 {
            assert!((a[j] - 2.0 * b[j] + c[j]).abs() < 1e-9, "column {j}");
        }
    }

    #[test]
    fn zero_left_of_first_knot() {
        let v = natural_spline_basis(0.5, 4, 1.0, 6.0);
        assert_eq!(&v[1..], &[0.0, 0.0, 0.0]);
    }
}
