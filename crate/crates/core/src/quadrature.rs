//! Symmetric quadrature rules on the reference triangle.

/// Quadrature rule on the reference triangle in barycentric coordinates.
///
/// Weights are scaled to the reference measure (they sum to 1/2); multiply
/// by `2 * area` to integrate over a physical triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl Quadrature {
    /// Three-point edge-midpoint rule, exact for degree 2.
    pub fn degree2() -> Self {
        let w = 1.0 / 6.0;
        Quadrature {
            points: vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
            weights: vec![w; 3],
            degree: 2,
        }
    }

    /// Seven-point Radon rule, exact for degree 5. This is the assembly rule:
    /// P2 x P2 mass products are degree 4.
    pub fn degree5() -> Self {
        let s = 15f64.sqrt();
        let a1 = (6.0 - s) / 21.0;
        let a2 = (6.0 + s) / 21.0;
        let w0 = 9.0 / 40.0;
        let w1 = (155.0 - s) / 1200.0;
        let w2 = (155.0 + s) / 1200.0;
        let mut points = vec![[1.0 / 3.0; 3]];
        let mut weights = vec![w0];
        for (a, w) in [(a1, w1), (a2, w2)] {
            let b = 1.0 - 2.0 * a;
            points.extend([[b, a, a], [a, b, a], [a, a, b]]);
            weights.extend([w; 3]);
        }
        weights.iter_mut().for_each(|w| *w *= 0.5);
        Quadrature {
            points,
            weights,
            degree: 5,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl Default for Quadrature {
    fn default() -> Self {
        Self::degree5()
    }
}

/// Three-point Gauss-Lobatto (Simpson) weights on [0, 1] for the endpoint,
/// midpoint, endpoint ordering; exact for cubics along a facet.
pub const SIMPSON: [f64; 3] = [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0];

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_integral(p: u32, q: u32) -> f64 {
        // int_T x^p y^q over the reference triangle = p! q! / (p + q + 2)!
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(p) * fact(q) / fact(p + q + 2)
    }

    #[test]
    fn weights_sum_to_reference_area() {
        for rule in [Quadrature::degree2(), Quadrature::degree5()] {
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 0.5).abs() < 1e-15);
            for p in &rule.points {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn exact_up_to_declared_degree() {
        for rule in [Quadrature::degree2(), Quadrature::degree5()] {
            for p in 0..=rule.degree as u32 {
                for q in 0..=(rule.degree as u32 - p) {
                    let approx: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(l, w)| w * l[1].powi(p as i32) * l[2].powi(q as i32))
                        .sum();
                    let exact = monomial_integral(p, q);
                    assert!(
                        (approx - exact).abs() < 1e-15,
                        "degree {} rule fails on x^{p} y^{q}",
                        rule.degree
                    );
                }
            }
        }
    }
}
