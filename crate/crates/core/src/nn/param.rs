use rand::Rng;

use crate::scalar::Scalar;

/// A named parameter tensor, row-major. Entries outside `mask` are held at
/// exactly zero by every operation that writes parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub mask: Option<Vec<bool>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
            mask: None,
        }
    }

    pub fn masked(mut self, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), self.data.len(), "mask length");
        self.mask = Some(mask);
        self.apply_mask();
        self
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn on_support(&self, i: usize) -> bool {
        self.mask.as_ref().map_or(true, |m| m[i])
    }

    /// Entries the mask lets through.
    pub fn support_size(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(self.data.len(), |m| m.iter().filter(|&&b| b).count())
    }

    pub fn apply_mask(&mut self) {
        if let Some(mask) = &self.mask {
            for (v, &keep) in self.data.iter_mut().zip(mask) {
                if !keep {
                    *v = T::zero();
                }
            }
        }
    }

    /// Uniform in `±√(6 / (fan_in + fan_out))`.
    pub fn glorot(&mut self, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in &mut self.data {
            *v = T::of(rng.gen_range(-limit..=limit));
        }
        self.apply_mask();
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
        self.apply_mask();
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
