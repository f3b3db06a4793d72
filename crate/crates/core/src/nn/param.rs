use sha2::{Digest, Sha256};

/// A trainable parameter array with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let grad = vec![0.0; value.len()];
        Param { value, grad }
    }

    pub fn zeros(len: usize) -> Self {
        Param::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Anything that owns named parameters and (optionally) non-trainable buffers.
pub trait Parameterized {
    /// Trainable parameters in a fixed order, with stable names.
    fn named_params(&self) -> Vec<(String, &Param)>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    /// Non-trainable state such as normalization running statistics.
    fn named_buffers(&self) -> Vec<(String, &Vec<f64>)> {
        Vec::new()
    }
    fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        Vec::new()
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    /// SHA-256 over the little-endian bytes of every trainable value.
    fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, p) in self.named_params() {
            h.update(name.as_bytes());
            for v in &p.value {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// SHA-256 over the buffers only.
    fn buffer_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, b) in self.named_buffers() {
            h.update(name.as_bytes());
            for v in b {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}
