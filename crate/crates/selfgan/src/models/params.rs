//! Flat parameter storage with matching gradient buffer.

use super::ModelError;

#[derive(Debug, Clone)]
pub struct ParameterVector {
    values: Vec<f64>,
    grads: Vec<f64>,
    fresh: bool,
}

impl ParameterVector {
    pub fn zeros(len: usize) -> ParameterVector {
        ParameterVector { values: vec![0.0; len], grads: vec![0.0; len], fresh: false }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Direct mutable access, for initialization, checkpoint restore, and
    /// finite-difference probing.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub(crate) fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    /// Zeroing marks the gradient stale until the next backward pass.
    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        self.fresh = false;
    }

    pub(crate) fn mark_fresh(&mut self) {
        self.fresh = true;
    }

    pub fn grads_are_fresh(&self) -> bool {
        self.fresh
    }

    /// Copy of the gradient as filled by the most recent backward pass.
    pub fn gradient_snapshot(&self) -> Result<Vec<f64>, ModelError> {
        if !self.fresh {
            return Err(ModelError::StaleGradient);
        }
        Ok(self.grads.clone())
    }

    /// One plain gradient-descent step. Gradients are left in place so they
    /// can still be snapshotted; the next backward pass zeroes them first.
    pub fn apply_step(&mut self, lr: f64) {
        for (v, g) in self.values.iter_mut().zip(&self.grads) {
            *v -= lr * g;
        }
    }

    pub fn grad_l2_norm(&self) -> f64 {
        self.grads.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

}
