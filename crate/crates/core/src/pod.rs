//! Proper orthogonal decomposition of snapshot data.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix};

/// Orthonormality tolerance enforced by [`BasisMatrix::new`].
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Snapshots stored column-wise, `N x K`.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub snapshots: DenseMatrix,
    pub meta: String,
}

impl SnapshotSet {
    pub fn new(snapshots: DenseMatrix, meta: impl Into<String>) -> Result<Self> {
        if snapshots.rows() == 0 || snapshots.cols() == 0 {
            return Err(Error::Input(format!(
                "snapshot set must be non-empty, got {}x{}",
                snapshots.rows(),
                snapshots.cols()
            )));
        }
        Ok(SnapshotSet {
            snapshots,
            meta: meta.into(),
        })
    }

    /// One column per state vector.
    pub fn from_states(states: &[DVector<f64>], meta: impl Into<String>) -> Result<Self> {
        let n = states.first().map_or(0, |s| s.len());
        if let Some(bad) = states.iter().position(|s| s.len() != n) {
            return Err(Error::dim(format!(
                "snapshot {bad} has length {}, expected {n}",
                states[bad].len()
            )));
        }
        let m = DMatrix::from_fn(n, states.len(), |i, j| states[j][i]);
        Self::new(DenseMatrix::new(m)?, meta)
    }

    pub fn dim(&self) -> usize {
        self.snapshots.rows()
    }

    pub fn count(&self) -> usize {
        self.snapshots.cols()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.snapshots.column_mean()
    }
}

/// Whether the snapshot mean is removed before the SVD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    /// Raw snapshots; range(Phi) is a linear subspace.
    #[default]
    None,
    /// Subtract the snapshot mean; reconstructions become affine,
    /// `u ~ mean + Phi c`.
    SnapshotMean,
}

/// Orthonormal `N x m` basis with the full singular spectrum of the data it
/// was extracted from.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    phi: DenseMatrix,
    singular_values: Vec<f64>,
    offset: Option<DVector<f64>>,
}

impl BasisMatrix {
    /// Wraps a user-supplied basis; fails unless `Phi^T Phi = I` to
    /// [`ORTHONORMAL_TOL`].
    pub fn new(phi: DenseMatrix, singular_values: Vec<f64>) -> Result<Self> {
        let defect = matrix::orthonormality_defect(phi.inner());
        if defect > ORTHONORMAL_TOL {
            return Err(Error::Contract(format!(
                "basis columns are not orthonormal (|Phi^T Phi - I|_F = {defect:.3e})"
            )));
        }
        Ok(BasisMatrix {
            phi,
            singular_values,
            offset: None,
        })
    }

    /// Skips the orthonormality check. Only for fault injection and
    /// diagnostics; reconstruction guarantees do not hold for such bases.
    pub fn new_unchecked(phi: DenseMatrix, singular_values: Vec<f64>) -> Self {
        BasisMatrix {
            phi,
            singular_values,
            offset: None,
        }
    }

    pub fn with_offset(mut self, offset: DVector<f64>) -> Result<Self> {
        if offset.len() != self.dim() {
            return Err(Error::dim(format!(
                "offset of length {} for a basis of dimension {}",
                offset.len(),
                self.dim()
            )));
        }
        self.offset = Some(offset);
        Ok(self)
    }

    pub fn phi(&self) -> &DenseMatrix {
        &self.phi
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Affine offset (snapshot mean) for centered bases.
    pub fn offset(&self) -> Option<&DVector<f64>> {
        self.offset.as_ref()
    }

    pub fn offset_or_zero(&self) -> DVector<f64> {
        self.offset
            .clone()
            .unwrap_or_else(|| DVector::zeros(self.dim()))
    }

    pub fn dim(&self) -> usize {
        self.phi.rows()
    }

    pub fn modes(&self) -> usize {
        self.phi.cols()
    }

    /// The leading `m` modes; offset and spectrum are kept.
    pub fn truncated(&self, m: usize) -> Result<BasisMatrix> {
        if m == 0 || m > self.modes() {
            return Err(Error::Input(format!(
                "cannot truncate a {}-mode basis to {m} modes",
                self.modes()
            )));
        }
        Ok(BasisMatrix {
            phi: self.phi.leading_columns(m)?,
            singular_values: self.singular_values.clone(),
            offset: self.offset.clone(),
        })
    }

    pub fn orthonormality_defect(&self) -> f64 {
        matrix::orthonormality_defect(self.phi.inner())
    }

    /// `u - offset`.
    pub(crate) fn centered(&self, u: &DVector<f64>) -> DVector<f64> {
        match &self.offset {
            Some(o) => u - o,
            None => u.clone(),
        }
    }

    /// Orthogonal reconstruction `offset + Phi Phi^T (u - offset)`.
    pub fn project(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(u)?;
        let w = self.centered(u);
        let c = self.phi.tr_mul(&w);
        let mut out = self.phi.inner() * c;
        if let Some(o) = &self.offset {
            out += o;
        }
        Ok(out)
    }

    pub(crate) fn check_len(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::dim(format!(
                "state of length {} for a basis of dimension {}",
                u.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// POD basis from raw snapshots: the first `m` left singular vectors of the
/// snapshot matrix, no mean subtraction.
pub fn compute_pod(snap: &SnapshotSet, m: usize) -> Result<BasisMatrix> {
    compute_pod_with(snap, m, Centering::None)
}

pub fn compute_pod_with(snap: &SnapshotSet, m: usize, centering: Centering) -> Result<BasisMatrix> {
    let (n, k) = (snap.dim(), snap.count());
    let (data, offset) = match centering {
        Centering::None => (snap.snapshots.clone(), None),
        Centering::SnapshotMean => {
            let mean = snap.mean();
            let mut x = snap.snapshots.inner().clone();
            for mut col in x.column_iter_mut() {
                col -= &mean;
            }
            (DenseMatrix::new(x)?, Some(mean))
        }
    };
    let (u, s) = matrix::left_singular(&data)?;
    let rank = matrix::numerical_rank(&s, n, k, None);
    if m == 0 || m > rank {
        return Err(Error::Rank { requested: m, rank });
    }
    let phi = u.leading_columns(m)?;
    let basis = BasisMatrix::new(phi, s)?;
    match offset {
        Some(o) => basis.with_offset(o),
        None => Ok(basis),
    }
}

/// `E_m(u) = |u - hat u|`, the distance from `u` to the (affine) range of the
/// basis.
pub fn truncation_error(u: &DVector<f64>, basis: &BasisMatrix) -> Result<f64> {
    Ok((u - basis.project(u)?).norm())
}
