use crate::error::{GradError, Result};

/// Dense row-major tensor of 64-bit floats.
///
/// External data is validated at construction: the shape must account for
/// every element and NaN/Inf entries are rejected. Values produced inside
/// the engine skip the finiteness scan.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(GradError::ShapeDataMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(GradError::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    /// Construction for values computed internally; skips the finiteness scan.
    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// 1-D tensor from a plain vector (validated).
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let shape = vec![data.len()];
        Self::new(shape, data)
    }

    /// 2-D tensor from rows (validated).
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar(), "item() on non-scalar {:?}", self.shape);
        self.data[0]
    }

    /// (rows, cols) view: 2-D as-is, 1-D as a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.len() {
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => panic!("dims2 on tensor of rank {}", self.shape.len()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Replicate a 1-D tensor (or single row) into `rows` identical rows.
    pub fn tile_rows(&self, rows: usize) -> Tensor {
        let (r, cols) = self.dims2();
        assert_eq!(r, 1, "tile_rows expects a single row, got {r} rows");
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend_from_slice(&self.data);
        }
        Tensor::from_op(vec![rows, cols], data)
    }

    /// One row of a 2-D tensor as a 1-D tensor.
    pub fn row(&self, i: usize) -> Tensor {
        let (rows, cols) = self.dims2();
        assert!(i < rows);
        Tensor::from_op(vec![cols], self.data[i * cols..(i + 1) * cols].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_shape_data_mismatch() {
        let err = Tensor::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, GradError::ShapeDataMismatch { .. }));
    }

    #[test]
    fn rejects_non_finite() {
        let err = Tensor::new(vec![2], vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, GradError::NonFinite { index: 1 }));
        let err = Tensor::new(vec![1], vec![f64::INFINITY]).unwrap_err();
        assert!(matches!(err, GradError::NonFinite { index: 0 }));
    }

    #[test]
    fn tile_rows_replicates() {
        let t = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let tiled = t.tile_rows(3);
        assert_eq!(tiled.shape(), &[3, 2]);
        assert_eq!(tiled.data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
    }
}
