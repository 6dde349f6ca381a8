//! State vectors.

use crate::error::SolverError;

/// A state vector in `R^d`, `d >= 1`, with all components finite.
///
/// The dimension is fixed for the lifetime of a problem; the solver only
/// ever mixes states of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    components: Vec<f64>,
}

impl State {
    /// Builds a state, rejecting empty vectors and non-finite components.
    pub fn new(components: Vec<f64>) -> Result<Self, SolverError> {
        if components.is_empty() {
            return Err(SolverError::InvalidInput(
                "state dimension must be at least 1".into(),
            ));
        }
        for (index, &value) in components.iter().enumerate() {
            if !value.is_finite() {
                return Err(SolverError::NonFiniteState { index, value });
            }
        }
        Ok(State { components })
    }

    /// A scalar state.
    pub fn scalar(value: f64) -> Result<Self, SolverError> {
        State::new(vec![value])
    }

    /// A `dim`-vector with every component equal to `value`.
    pub fn uniform(dim: usize, value: f64) -> Result<Self, SolverError> {
        State::new(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.components
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.components
    }
}

impl std::ops::Index<usize> for State {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.components[i]
    }
}

impl AsRef<[f64]> for State {
    fn as_ref(&self) -> &[f64] {
        &self.components
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(State::new(vec![]).is_err());
        assert!(State::new(vec![1.0, f64::NAN]).is_err());
        assert!(State::new(vec![f64::INFINITY]).is_err());
        assert!(State::new(vec![0.0, -3.5]).is_ok());
    }

    #[test]
    fn uniform_fills_components() {
        let s = State::uniform(4, 0.5).unwrap();
        assert_eq!(s.dim(), 4);
        assert!(s.as_slice().iter().all(|&v| v == 0.5));
    }
}
