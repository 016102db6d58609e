//! Two-point Gauss rules, used for every time integral in the crate.

use nalgebra::DVector;

const GAUSS2: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

/// Gauss-Legendre nodes of the two-point rule on `[a, b]`; each carries weight `(b - a) / 2`.
pub fn gauss2_nodes(a: f64, b: f64) -> [f64; 2] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    [mid - half * GAUSS2, mid + half * GAUSS2]
}

/// `int_a^b f(s) ds`, exact for cubics.
pub fn gauss2(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let [s0, s1] = gauss2_nodes(a, b);
    0.5 * (b - a) * (f(s0) + f(s1))
}

/// Composite two-point Gauss rule with `pieces` equal subintervals.
pub fn gauss2_composite(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
    let pieces = pieces.max(1);
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let lo = a + i as f64 * h;
            gauss2(&f, lo, lo + h)
        })
        .sum()
}

/// Mean value `(1/(b-a)) int_a^b f(s) ds` of a vector-valued function.
pub fn gauss2_mean_vec(f: impl Fn(f64) -> DVector<f64>, a: f64, b: f64) -> DVector<f64> {
    let [s0, s1] = gauss2_nodes(a, b);
    (f(s0) + f(s1)) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_cubics() {
        let f = |s: f64| 1.0 - 2.0 * s + 3.0 * s * s - 4.0 * s * s * s;
        let exact = |s: f64| s - s * s + s.powi(3) - s.powi(4);
        let (a, b) = (-0.3, 1.7);
        assert!((gauss2(f, a, b) - (exact(b) - exact(a))).abs() < 1e-13);
    }

    #[test]
    fn composite_converges() {
        let v = gauss2_composite(f64::exp, 0.0, 1.0, 256);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
    }
}
