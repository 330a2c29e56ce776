use crate::diffcore::Array;
use crate::error::{Error, Result};

/// Images `[n,h,w,1]` in `[-1, 1]` with one-hot labels `[n,N]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Array,
    labels: Array,
}

impl Dataset {
    pub fn new(images: Array, labels: Array) -> Result<Self> {
        if images.ndim() != 4 || labels.ndim() != 2 || images.extents()[0] != labels.extents()[0] {
            return Err(Error::shape(format!(
                "images {:?} and labels {:?} must be [n,h,w,c] and [n,N]",
                images.extents(),
                labels.extents()
            )));
        }
        if let Some(bad) = images.data().iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::contract(format!("pixel value {bad} outside [-1, 1]")));
        }
        let cols = labels.extents()[1];
        for (i, row) in labels.data().chunks_exact(cols.max(1)).enumerate() {
            let ones = row.iter().filter(|&&y| y == 1.0).count();
            let zeros = row.iter().filter(|&&y| y == 0.0).count();
            if ones != 1 || zeros != cols - 1 {
                return Err(Error::contract(format!("label row {i} is not one-hot")));
            }
        }
        Ok(Dataset { images, labels })
    }

    pub fn from_classes(images: Array, classes: &[usize], n_classes: usize) -> Result<Self> {
        let mut labels = Array::zeros(&[classes.len(), n_classes]);
        for (i, &c) in classes.iter().enumerate() {
            if c >= n_classes {
                return Err(Error::contract(format!(
                    "class {c} out of range for {n_classes} classes"
                )));
            }
            labels.set(&[i, c], 1.0);
        }
        Dataset::new(images, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.extents()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_classes(&self) -> usize {
        self.labels.extents()[1]
    }

    pub fn images(&self) -> &Array {
        &self.images
    }

    pub fn labels(&self) -> &Array {
        &self.labels
    }

    pub fn classes(&self) -> Vec<usize> {
        (0..self.len())
            .map(|i| {
                self.labels
                    .row(i)
                    .iter()
                    .position(|&y| y == 1.0)
                    .expect("validated one-hot")
            })
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select_rows(indices),
            labels: self.labels.select_rows(indices),
        }
    }
}
