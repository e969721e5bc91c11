//! Finite 1-Lipschitz data and its McShane extensions.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LipschitzError {
    #[error("data is not 1-Lipschitz: pair ({i}, {j}) violates by {margin:e}")]
    NotLipschitz { i: usize, j: usize, margin: f64 },
    #[error("domain and values differ in length ({points} vs {values})")]
    LengthMismatch { points: usize, values: usize },
    #[error("empty domain")]
    EmptyDomain,
}

/// Values on a finite point set together with the ambient metric.
#[derive(Clone)]
pub struct PartialLipschitzFunction<P, T, M> {
    points: Vec<P>,
    values: Vec<T>,
    metric: M,
}

/// Outcome of the exhaustive pair scan. `worst` is the pair maximizing
/// `f(i) - f(j) - d(i, j)` and `margin` that maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzCheck<T> {
    pub valid: bool,
    pub margin: T,
    pub worst: Option<(usize, usize)>,
}

impl<P, T: Real, M: Fn(&P, &P) -> T> PartialLipschitzFunction<P, T, M> {
    pub fn new(points: Vec<P>, values: Vec<T>, metric: M) -> Result<Self, LipschitzError> {
        if points.len() != values.len() {
            return Err(LipschitzError::LengthMismatch { points: points.len(), values: values.len() });
        }
        if points.is_empty() {
            return Err(LipschitzError::EmptyDomain);
        }
        Ok(Self { points, values, metric })
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn distance(&self, a: &P, b: &P) -> T {
        (self.metric)(a, b)
    }

    /// Exhaustive scan with tolerance `tol` on the margin.
    pub fn check_with_tol(&self, tol: T) -> LipschitzCheck<T> {
        let mut margin = T::neg_infinity();
        let mut worst = None;
        let n = self.points.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (self.metric)(&self.points[i], &self.points[j]);
                let diff = self.values[i] - self.values[j];
                let (m, pair) = if diff >= T::zero() { (diff - d, (i, j)) } else { (-diff - d, (j, i)) };
                if m > margin {
                    margin = m;
                    worst = Some(pair);
                }
            }
        }
        if n == 1 {
            margin = T::zero();
        }
        let valid = margin <= tol;
        LipschitzCheck { valid, margin, worst: if valid { None } else { worst } }
    }

    pub fn check_lipschitz(&self) -> LipschitzCheck<T> {
        self.check_with_tol(T::dedup_tol())
    }

    /// Greatest 1-Lipschitz extension, `min_z f(z) + d(z, q)`, without the
    /// validity check.
    pub fn upper_value(&self, q: &P) -> T {
        self.points.iter().zip(&self.values).map(|(p, &v)| v + (self.metric)(p, q)).fold(T::infinity(), T::min)
    }

    /// Least 1-Lipschitz extension, `max_z f(z) - d(z, q)`.
    pub fn lower_value(&self, q: &P) -> T {
        self.points.iter().zip(&self.values).map(|(p, &v)| v - (self.metric)(p, q)).fold(T::neg_infinity(), T::max)
    }

    pub fn mcshane_extend(&self, queries: &[P]) -> Result<Vec<T>, LipschitzError> {
        let check = self.check_lipschitz();
        if !check.valid {
            let (i, j) = check.worst.unwrap_or((0, 0));
            return Err(LipschitzError::NotLipschitz { i, j, margin: check.margin.as_f64() });
        }
        Ok(queries.iter().map(|q| self.upper_value(q)).collect())
    }

    pub fn lower_extend(&self, queries: &[P]) -> Result<Vec<T>, LipschitzError> {
        let check = self.check_lipschitz();
        if !check.valid {
            let (i, j) = check.worst.unwrap_or((0, 0));
            return Err(LipschitzError::NotLipschitz { i, j, margin: check.margin.as_f64() });
        }
        Ok(queries.iter().map(|q| self.lower_value(q)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(a: &f64, b: &f64) -> f64 {
        (a - b).abs()
    }

    #[test]
    fn check_examples() {
        let f = PartialLipschitzFunction::new(vec![0.0, 10.0], vec![0.0, 3.0], line).unwrap();
        assert!(f.check_lipschitz().valid);
        let f = PartialLipschitzFunction::new(vec![0.0, 2.0], vec![0.0, 3.0], line).unwrap();
        let c = f.check_lipschitz();
        assert!(!c.valid);
        assert_eq!(c.worst, Some((1, 0)));
        assert!((c.margin - 1.0).abs() < 1e-15);
        let f = PartialLipschitzFunction::new(vec![4.0], vec![7.0], line).unwrap();
        assert!(f.check_lipschitz().valid);
    }

    #[test]
    fn two_term_minimum() {
        // p0 = 0, p1 = 10 on the line; q = 5 is at distance 5 from both
        let f = PartialLipschitzFunction::new(vec![0.0, 10.0], vec![0.0, 3.0], line).unwrap();
        assert_eq!(f.mcshane_extend(&[5.0]).unwrap(), vec![5.0]);
        assert_eq!(f.mcshane_extend(&[0.0, 10.0]).unwrap(), vec![0.0, 3.0]);
    }

    #[test]
    fn rejects_violating_data() {
        let f = PartialLipschitzFunction::new(vec![0.0, 2.0], vec![0.0, 3.0], line).unwrap();
        assert!(matches!(f.mcshane_extend(&[1.0]), Err(LipschitzError::NotLipschitz { .. })));
    }
}
