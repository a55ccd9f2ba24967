use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::tree::TreeTopology;

/// Largest tolerated entry of `|D^T D - I|`.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// An `n x p` matrix with orthonormal columns; atom `i` sits at tree node `i`.
#[derive(Debug, Clone)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    tree: TreeTopology,
}

impl Dictionary {
    pub fn new(atoms: DMatrix<f64>, tree: TreeTopology) -> Result<Self> {
        if atoms.ncols() != tree.len() {
            return Err(Error::DimensionMismatch {
                expected: tree.len(),
                found: atoms.ncols(),
            });
        }
        if atoms.ncols() > atoms.nrows() {
            return Err(Error::arg(format!(
                "{} orthonormal atoms cannot live in dimension {}",
                atoms.ncols(),
                atoms.nrows()
            )));
        }
        let err = orthonormality_error(&atoms);
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::NotOrthonormal(err));
        }
        Ok(Self { atoms, tree })
    }

    /// The `p x p` identity dictionary: coefficients are observed directly.
    pub fn identity(tree: TreeTopology) -> Self {
        let p = tree.len();
        Self {
            atoms: DMatrix::identity(p, p),
            tree,
        }
    }

    /// Signal dimension.
    pub fn n(&self) -> usize {
        self.atoms.nrows()
    }

    /// Atom count.
    pub fn p(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn tree(&self) -> &TreeTopology {
        &self.tree
    }

    pub fn atom(&self, j: usize) -> DVectorView<'_, f64> {
        self.atoms.column(j)
    }

    /// `d_j^T x`.
    pub fn project(&self, j: usize, x: &[f64]) -> f64 {
        self.atoms.column(j).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `D^T x`.
    pub fn analyze(&self, x: &[f64]) -> Vec<f64> {
        (0..self.p()).map(|j| self.project(j, x)).collect()
    }

    /// `D a`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let a = DVector::from_column_slice(coeffs);
        (&self.atoms * a).as_slice().to_vec()
    }

    pub fn into_parts(self) -> (DMatrix<f64>, TreeTopology) {
        (self.atoms, self.tree)
    }
}

/// `max |D^T D - I|`.
pub fn orthonormality_error(atoms: &DMatrix<f64>) -> f64 {
    let gram = atoms.tr_mul(atoms);
    let mut worst = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}
