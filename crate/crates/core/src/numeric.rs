//! Small numerical helpers: exactly rounded summation, Gamma values at
//! half integers and the Gaussian moment tail used by the window bound.

use std::f64::consts::PI;

/// Accumulator that keeps the running sum as a list of non-overlapping
/// partials and rounds only once, at the end.
///
/// The result of [`ExactSum::value`] is the correctly rounded value of the
/// exact sum, so it does not depend on the order in which terms were added.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self {
            partials: Vec::with_capacity(4),
        }
    }

    pub fn add(&mut self, value: f64) {
        let mut x = value;
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    /// Adds another exact sum given by its partials.
    pub fn add_partials(&mut self, partials: &[f64]) {
        for &p in partials {
            self.add(p);
        }
    }

    pub fn partials(&self) -> &[f64] {
        &self.partials
    }

    /// Correctly rounded value of the accumulated sum.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Round half to even across the remaining partials.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = ExactSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<ExactSum>().value()
}

/// Γ(n/2 + 1) by the half-integer recursion Γ(a + 1) = a Γ(a), starting
/// from Γ(1) = 1 or Γ(3/2) = √π / 2.
pub fn gamma_half_plus_one(n: usize) -> f64 {
    let (mut a, mut g) = if n % 2 == 0 {
        (1.0, 1.0)
    } else {
        (1.5, PI.sqrt() / 2.0)
    };
    let target = n as f64 / 2.0 + 1.0;
    while a < target {
        g *= a;
        a += 1.0;
    }
    g
}

/// ∫_λ^∞ 2 t^{n+1} e^{-t²} dt, i.e. the upper incomplete Gamma function
/// Γ(n/2 + 1, λ²).
pub fn gaussian_moment_tail(n: usize, lambda: f64) -> f64 {
    let a = n as f64 / 2.0 + 1.0;
    if lambda <= 0.0 {
        return gamma_half_plus_one(n);
    }
    statrs::function::gamma::gamma_ur(a, lambda * lambda) * gamma_half_plus_one(n)
}

/// Median of a slice (mean of the two middle values for even lengths).
/// Returns `None` for an empty slice or when NaN is present.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Formats a float with 17 significant digits, the serialization used by
/// every CSV and JSON artifact.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_sum_is_order_independent() {
        let vals = [1e16, 1.0, -1e16, 3.0, 1e-3, 2.5e15, -2.5e15];
        let fwd = exact_sum(vals);
        let rev = exact_sum(vals.iter().rev().copied());
        assert_eq!(fwd.to_bits(), rev.to_bits());
        assert_eq!(fwd, 4.001);
    }

    #[test]
    fn exact_sum_of_repeated_tenth() {
        assert_eq!(exact_sum(std::iter::repeat_n(0.1, 10)), 1.0);
        assert_eq!(exact_sum(std::iter::repeat_n(1e-4, 10_000)), 1.0);
    }

    #[test]
    fn exact_sum_handles_half_even_ties() {
        // 1 + 2^-53 + 2^-106: exact value is just above the midpoint.
        let v = exact_sum([1.0, 2f64.powi(-53), 2f64.powi(-106)]);
        assert_eq!(v, 1.0 + f64::EPSILON);
        let v = exact_sum([1.0, 2f64.powi(-53)]);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_half_plus_one(0), 1.0);
        assert!((gamma_half_plus_one(1) - 0.886_226_925_452_758).abs() < 1e-15);
        assert_eq!(gamma_half_plus_one(2), 1.0);
        assert!((gamma_half_plus_one(3) - 1.329_340_388_179_137).abs() < 1e-14);
        assert_eq!(gamma_half_plus_one(4), 2.0);
        assert_eq!(gamma_half_plus_one(6), 6.0);
    }

    #[test]
    fn tail_matches_incomplete_gamma() {
        // Γ(3/2, 100) from an mpmath reference.
        let t = gaussian_moment_tail(1, 10.0);
        assert!((t / 3.738_584_715_322_877e-43 - 1.0).abs() < 1e-9, "{t:e}");
        // λ = 1, n = 2: Γ(2, 1) = 2/e.
        let t = gaussian_moment_tail(2, 1.0);
        assert!((t - 2.0 / std::f64::consts::E).abs() < 1e-13);
    }

    #[test]
    fn median_and_slope() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        let s = ls_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-15);
    }
}
