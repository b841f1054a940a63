//! Reference quadrature rules in barycentric coordinates.
//!
//! Both volume rules integrate polynomials of degree 5 exactly. Weights are
//! normalized to sum to one, so a physical integral over a simplex is the
//! measure times the weighted sum.

use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    /// Barycentric coordinates; unused trailing entries are zero.
    pub points: Vec<[T; 3]>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Three-point Gauss–Legendre rule on a segment.
    pub fn gauss_segment() -> Self {
        let s = (0.6f64).sqrt() / 2.0;
        let xs = [0.5 - s, 0.5, 0.5 + s];
        let ws = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        Self {
            points: xs.iter().map(|&x| [T::c(1.0 - x), T::c(x), T::zero()]).collect(),
            weights: ws.iter().map(|&w| T::c(w)).collect(),
        }
    }

    /// Seven-point degree-5 rule on a triangle.
    pub fn dunavant_triangle() -> Self {
        let r15 = 15f64.sqrt();
        let a1 = (9.0 - 2.0 * r15) / 21.0;
        let b1 = (6.0 + r15) / 21.0;
        let a2 = (9.0 + 2.0 * r15) / 21.0;
        let b2 = (6.0 - r15) / 21.0;
        let w1 = (155.0 + r15) / 1200.0;
        let w2 = (155.0 - r15) / 1200.0;
        let third = 1.0 / 3.0;
        let raw: [([f64; 3], f64); 7] = [
            ([third, third, third], 0.225),
            ([a1, b1, b1], w1),
            ([b1, a1, b1], w1),
            ([b1, b1, a1], w1),
            ([a2, b2, b2], w2),
            ([b2, a2, b2], w2),
            ([b2, b2, a2], w2),
        ];
        Self {
            points: raw.iter().map(|(p, _)| [T::c(p[0]), T::c(p[1]), T::c(p[2])]).collect(),
            weights: raw.iter().map(|(_, w)| T::c(*w)).collect(),
        }
    }

    /// Point evaluation, the boundary rule of a one-dimensional domain.
    pub fn point() -> Self {
        Self {
            points: vec![[T::one(), T::zero(), T::zero()]],
            weights: vec![T::one()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_segment(rule: &QuadratureRule<f64>, k: i32) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * p[1].powi(k))
            .sum()
    }

    #[test]
    fn segment_rule_exact_to_degree_five() {
        let rule = QuadratureRule::<f64>::gauss_segment();
        for k in 0..=5 {
            let exact = 1.0 / (k as f64 + 1.0);
            assert!((monomial_segment(&rule, k) - exact).abs() < 1e-15, "degree {k}");
        }
        let exact6 = 1.0 / 7.0;
        assert!((monomial_segment(&rule, 6) - exact6).abs() > 1e-6);
    }

    #[test]
    fn triangle_rule_exact_to_degree_five() {
        // int over reference triangle of x^i y^j = i! j! / (i+j+2)!, area 1/2
        fn fact(n: u32) -> f64 {
            (1..=n).map(f64::from).product()
        }
        let rule = QuadratureRule::<f64>::dunavant_triangle();
        for i in 0..=5u32 {
            for j in 0..=(5 - i) {
                let approx: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| 0.5 * w * p[1].powi(i as i32) * p[2].powi(j as i32))
                    .sum();
                let exact = fact(i) * fact(j) / fact(i + j + 2);
                assert!((approx - exact).abs() < 1e-15, "x^{i} y^{j}: {approx} vs {exact}");
            }
        }
    }
}
