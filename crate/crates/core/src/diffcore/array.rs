use crate::error::{Error, Result};

/// Shape-tagged, row-major array of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    extents: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    pub fn new(extents: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = extents.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "extents {:?} need {} values, got {}",
                extents,
                expected,
                data.len()
            )));
        }
        Ok(Array { extents, data })
    }

    pub fn zeros(extents: &[usize]) -> Self {
        Self::full(extents, 0.0)
    }

    pub fn full(extents: &[usize], value: f64) -> Self {
        let n = extents.iter().product();
        Array {
            extents: extents.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Array {
            extents: Vec::new(),
            data: vec![value],
        }
    }

    /// One-dimensional array.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Array {
            extents: vec![data.len()],
            data,
        }
    }

    /// Builds a 2-D array from rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Array::new(vec![rows.len(), cols], data)
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn ndim(&self) -> usize {
        self.extents.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a single-element array.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn reshape(self, extents: Vec<usize>) -> Result<Self> {
        Array::new(extents, self.data)
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.extents.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.extents)
            .fold(0, |acc, (&i, &e)| {
                assert!(i < e, "index {i} out of bounds for extent {e}");
                acc * e + i
            })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    /// Contiguous slice of the `i`-th entry along the leading axis.
    pub fn row(&self, i: usize) -> &[f64] {
        let stride = self.row_len();
        &self.data[i * stride..(i + 1) * stride]
    }

    /// Number of values per entry of the leading axis.
    pub fn row_len(&self) -> usize {
        self.extents.iter().skip(1).product()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Array {
            extents: self.extents.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Array, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.extents != other.extents {
            return Err(Error::shape(format!(
                "elementwise operands differ: {:?} vs {:?}",
                self.extents, other.extents
            )));
        }
        Ok(Array {
            extents: self.extents.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::numeric(format!(
                "{what} holds non-finite value {} at flat index {i}",
                self.data[i]
            ))),
        }
    }

    /// Gathers entries of the leading axis into a new array.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let stride = self.row_len();
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let mut extents = self.extents.clone();
        extents[0] = indices.len();
        Array { extents, data }
    }

    pub(crate) fn add_assign(&mut self, other: &Array) {
        debug_assert_eq!(self.extents, other.extents);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
