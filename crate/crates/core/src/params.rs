//! Flat views over a model's parameter tensors.
//!
//! Every trainable structure lists its tensors in one fixed order. The
//! optimizer, the checkpoint writer and the finite-difference checks all walk
//! that order, so gradient structs reuse the parameter struct type.

pub trait ParamSet {
    /// `(rows, cols)` of each tensor. Vectors report `(len, 1)`.
    fn shapes(&self) -> Vec<(usize, usize)>;
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn parameter_count(&self) -> usize {
        self.shapes().iter().map(|(r, c)| r * c).sum()
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}
