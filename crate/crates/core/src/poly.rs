//! Dense real polynomials and Sturm-sequence root counting.
//!
//! Used as an independent certificate for the grid-based root isolation in
//! [`crate::inflow`]: the inflow accuracy function is a polynomial of degree
//! at most `K` in the viral accuracy.

/// Coefficients in increasing degree order.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Polynomial { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(vec![c])
    }

    /// `a + b·x`
    pub fn linear(a: f64, b: f64) -> Self {
        Polynomial::new(vec![a, b])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::constant(0.0);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| i as f64 * c)
                .collect(),
        )
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let get = |p: &Polynomial, i: usize| p.coeffs.get(i).copied().unwrap_or(0.0);
        Polynomial::new((0..n).map(|i| get(self, i) + get(other, i)).collect())
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }

    pub fn powi(&self, e: usize) -> Polynomial {
        (0..e).fold(Polynomial::constant(1.0), |acc, _| acc.mul(self))
    }

    /// Remainder of Euclidean division by `divisor`.
    pub fn rem(&self, divisor: &Polynomial) -> Polynomial {
        assert!(!divisor.is_zero(), "division by the zero polynomial");
        let mut r = self.coeffs.clone();
        let d = &divisor.coeffs;
        let lead = *d.last().unwrap();
        while r.len() >= d.len() {
            let factor = r.last().unwrap() / lead;
            let shift = r.len() - d.len();
            for (i, &c) in d.iter().enumerate() {
                r[shift + i] -= factor * c;
            }
            r.pop();
        }
        Polynomial::new(r)
    }

    fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Drops leading coefficients that are pure rounding noise relative to `scale`.
    fn trimmed(mut self, scale: f64) -> Polynomial {
        let cutoff = scale * 1e-11;
        while self.coeffs.len() > 1 && self.coeffs.last().unwrap().abs() <= cutoff {
            self.coeffs.pop();
        }
        if self.coeffs.len() == 1 && self.coeffs[0].abs() <= cutoff {
            self.coeffs[0] = 0.0;
        }
        self
    }

    /// The Sturm chain `p, p', −rem(p, p'), …`.
    pub fn sturm_sequence(&self) -> Vec<Polynomial> {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut seq = vec![self.clone(), self.derivative()];
        loop {
            let n = seq.len();
            if seq[n - 1].is_zero() {
                seq.pop();
                break;
            }
            if seq[n - 1].degree() == 0 {
                break;
            }
            let r = seq[n - 2].rem(&seq[n - 1]).scale(-1.0).trimmed(scale);
            if r.is_zero() {
                break;
            }
            seq.push(r);
        }
        seq
    }

    /// Number of distinct real roots in the half-open interval `(a, b]`,
    /// counted with a Sturm sequence. Neither endpoint should be a root.
    pub fn count_roots(&self, a: f64, b: f64) -> usize {
        let seq = self.sturm_sequence();
        let changes = |x: f64| {
            let mut count: usize = 0;
            let mut prev = 0.0_f64;
            for p in &seq {
                let v = p.eval(x);
                if v == 0.0 {
                    continue;
                }
                if prev != 0.0 && (v > 0.0) != (prev > 0.0) {
                    count += 1;
                }
                prev = v;
            }
            count
        };
        changes(a).saturating_sub(changes(b))
    }
}

/// `C(n, k)` as a float.
pub fn binomial_coefficient(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_derivative() {
        let p = Polynomial::new(vec![1.0, -3.0, 2.0]); // (2x-1)(x-1)
        assert_eq!(p.eval(0.5), 0.0);
        assert_eq!(p.eval(1.0), 0.0);
        assert_eq!(p.derivative(), Polynomial::new(vec![-3.0, 4.0]));
        assert_eq!(p.degree(), 2);
    }

    #[test]
    fn remainder() {
        let p = Polynomial::new(vec![-1.0, 0.0, 1.0]);
        let d = Polynomial::linear(-1.0, 1.0);
        assert!(p.rem(&d).is_zero());
        let r = Polynomial::new(vec![2.0, 0.0, 1.0]).rem(&d);
        assert_eq!(r, Polynomial::constant(3.0));
    }

    #[test]
    fn sturm_counts_roots() {
        // (x - 0.2)(x - 0.5)(x - 0.9)
        let p = Polynomial::linear(-0.2, 1.0)
            .mul(&Polynomial::linear(-0.5, 1.0))
            .mul(&Polynomial::linear(-0.9, 1.0));
        assert_eq!(p.count_roots(0.0, 1.0), 3);
        assert_eq!(p.count_roots(0.0, 0.6), 2);
        assert_eq!(p.count_roots(0.3, 0.4), 0);
        // x^2 + 1 has none
        assert_eq!(
            Polynomial::new(vec![1.0, 0.0, 1.0]).count_roots(-5.0, 5.0),
            0
        );
        // a double root counts once
        let d = Polynomial::linear(-0.3, 1.0)
            .powi(2)
            .mul(&Polynomial::linear(-0.7, 1.0));
        assert_eq!(d.count_roots(0.0, 1.0), 2);
    }

    #[test]
    fn binomial_coefficients() {
        assert_eq!(binomial_coefficient(7, 3), 35.0);
        assert_eq!(binomial_coefficient(6, 0), 1.0);
        assert_eq!(binomial_coefficient(3, 4), 0.0);
        assert_eq!(binomial_coefficient(20, 10), 184756.0);
    }
}
