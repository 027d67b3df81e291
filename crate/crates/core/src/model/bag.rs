use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A labeled bag of instance embeddings, stored as a `D x n` matrix whose
/// columns are instances.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceBag {
    pub id: u32,
    pub label: u8,
    pub instances: Matrix,
    /// Per-instance ground truth. Only synthetic data carries it and
    /// training never reads it.
    pub instance_labels: Option<Vec<u8>>,
}

impl InstanceBag {
    pub fn new(
        id: u32,
        label: u8,
        instances: Matrix,
        instance_labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let bag = InstanceBag { id, label, instances, instance_labels };
        bag.validate()?;
        Ok(bag)
    }

    pub fn validate(&self) -> Result<()> {
        if self.label > 1 {
            return Err(Error::Format(format!("bag {} has label {}", self.id, self.label)));
        }
        if self.is_empty() {
            return Err(Error::Empty("bag has no instances"));
        }
        if let Some(labels) = &self.instance_labels {
            if labels.len() != self.len() {
                return Err(Error::Shape(format!(
                    "bag {} has {} instances but {} instance labels",
                    self.id,
                    self.len(),
                    labels.len()
                )));
            }
            if labels.iter().any(|&l| l > 1) {
                return Err(Error::Format(format!("bag {} has a non-binary instance label", self.id)));
            }
            let any_positive = labels.contains(&1);
            if any_positive != (self.label == 1) {
                return Err(Error::Format(format!(
                    "bag {} label {} disagrees with its instance labels",
                    self.id, self.label
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.instances.rows()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.instances.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }

    /// Fraction of instances labeled positive, if instance labels exist.
    pub fn witness_rate(&self) -> Option<f64> {
        self.instance_labels
            .as_ref()
            .map(|l| l.iter().filter(|&&x| x == 1).count() as f64 / l.len() as f64)
    }

    /// Copy of the bag with instances reordered so that new instance `i` is
    /// old instance `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> InstanceBag {
        InstanceBag {
            id: self.id,
            label: self.label,
            instances: self.instances.select_columns(perm),
            instance_labels: self
                .instance_labels
                .as_ref()
                .map(|l| perm.iter().map(|&i| l[i]).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_must_match_instances() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(InstanceBag::new(0, 1, m.clone(), Some(vec![0, 1])).is_ok());
        assert!(InstanceBag::new(0, 1, m.clone(), Some(vec![0, 0])).is_err());
        assert!(InstanceBag::new(0, 0, m.clone(), Some(vec![1, 0])).is_err());
        assert!(InstanceBag::new(0, 0, m, Some(vec![0])).is_err());
        assert!(InstanceBag::new(0, 0, Matrix::zeros(2, 0), None).is_err());
    }
}
