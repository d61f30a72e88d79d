use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    User,
    Item,
    Tag,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Item => "item",
            Role::Tag => "tag",
        }
    }
}

/// Row-major table of tangent-space ID embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    role: Role,
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(role: Role, rows: usize, dim: usize) -> Self {
        Self { role, rows, dim, values: vec![0.0; rows * dim] }
    }

    /// i.i.d. `N(0, std^2)` entries.
    pub fn gaussian<R: Rng + ?Sized>(role: Role, rows: usize, dim: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("std must be finite and nonnegative");
        let values = (0..rows * dim).map(|_| normal.sample(rng)).collect();
        Self { role, rows, dim, values }
    }

    pub fn from_values(role: Role, rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * dim {
            return Err(Error::Shape(format!(
                "{} table: {} values for {rows}x{dim}",
                role.as_str(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("{} table has non-finite entries", role.as_str())));
        }
        Ok(Self { role, rows, dim, values })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = EmbeddingTable::gaussian(Role::Tag, 400, 50, 0.1, &mut rng);
        let n = t.values().len() as f64;
        let mean = t.values().iter().sum::<f64>() / n;
        let var = t.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * 0.1 / n.sqrt());
        assert!((var.sqrt() - 0.1).abs() < 0.005);
    }

    #[test]
    fn shape_is_checked() {
        assert!(EmbeddingTable::from_values(Role::User, 2, 3, vec![0.0; 5]).is_err());
        assert!(EmbeddingTable::from_values(Role::User, 1, 2, vec![0.0, f64::NAN]).is_err());
        let t = EmbeddingTable::from_values(Role::Item, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.row(1), &[3.0, 4.0]);
    }
}
