use crate::error::{invalid, Result};

/// Dense `(batch, channels, length)` array in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 3],
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return invalid(format!(
                "tensor shape {shape:?} needs {} values, got {}",
                shape.iter().product::<usize>(),
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 3]) -> Self {
        Self { shape, data: vec![0.0; shape.iter().product()] }
    }

    /// Stacks single-channel waveforms of equal length into `(n, 1, len)`.
    pub fn from_waveforms<W: AsRef<[f64]>>(waveforms: &[W]) -> Result<Self> {
        let len = waveforms.first().map(|w| w.as_ref().len()).unwrap_or(0);
        if waveforms.iter().any(|w| w.as_ref().len() != len) {
            return invalid("waveforms differ in length");
        }
        let data = waveforms.iter().flat_map(|w| w.as_ref().iter().copied()).collect();
        Self::new([waveforms.len(), 1, len], data)
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn length(&self) -> usize {
        self.shape[2]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The `(channels, length)` slab of one batch element.
    pub fn sample(&self, b: usize) -> &[f64] {
        let n = self.shape[1] * self.shape[2];
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.shape[1] * self.shape[2];
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
