//! Sensor placement, pointwise observation, measurement noise, and the cached
//! per-(basis, sensors) operators every reconstruction uses.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assimilation::ObservationSeries;
use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix};
use crate::pod::BasisMatrix;

/// Ordered set of distinct state indices; row `k` of `S^T` picks `indices[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorSelection {
    dim: usize,
    indices: Vec<usize>,
}

impl SensorSelection {
    pub fn new(dim: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Input("a sensor selection needs at least one index".into()));
        }
        if indices.len() > dim {
            return Err(Error::Input(format!(
                "{} sensors for a state of dimension {dim}",
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(Error::Input(format!("sensor index {bad} >= dimension {dim}")));
        }
        let mut seen = HashSet::with_capacity(indices.len());
        if let Some(&dup) = indices.iter().find(|&&i| !seen.insert(i)) {
            return Err(Error::Input(format!("sensor index {dup} repeated")));
        }
        Ok(SensorSelection { dim, indices })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Concatenation `[S1 S2]`; fails if the two share an index.
    pub fn concat(&self, other: &SensorSelection) -> Result<SensorSelection> {
        if self.dim != other.dim {
            return Err(Error::dim(format!(
                "selections over dimensions {} and {}",
                self.dim, other.dim
            )));
        }
        let mut all = self.indices.clone();
        all.extend_from_slice(&other.indices);
        SensorSelection::new(self.dim, all)
    }

    /// The `N x n` selection matrix `S`.
    pub fn matrix(&self) -> DenseMatrix {
        let mut s = DMatrix::zeros(self.dim, self.len());
        for (k, &i) in self.indices.iter().enumerate() {
            s[(i, k)] = 1.0;
        }
        DenseMatrix::new(s).expect("0/1 entries are finite")
    }

    /// `S y`: places measurements back at their sensor locations, zero
    /// elsewhere.
    pub fn scatter(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.len() {
            return Err(Error::dim(format!(
                "{} measurements for {} sensors",
                y.len(),
                self.len()
            )));
        }
        let mut u = DVector::zeros(self.dim);
        for (k, &i) in self.indices.iter().enumerate() {
            u[i] = y[k];
        }
        Ok(u)
    }
}

/// Q-DEIM placement: the first `n` pivots of the column-pivoted QR of
/// `Phi^T`.
pub fn qdeim_place(basis: &BasisMatrix, n: usize) -> Result<SensorSelection> {
    let dim = basis.dim();
    if n == 0 || n > dim {
        return Err(Error::Input(format!(
            "cannot place {n} sensors in a state of dimension {dim}"
        )));
    }
    let qr = matrix::qr_column_pivot(&basis.phi().transpose())?;
    SensorSelection::new(dim, qr.perm[..n].to_vec())
}

/// `y = S^T u`.
pub fn observe(u: &DVector<f64>, sel: &SensorSelection) -> Result<DVector<f64>> {
    if u.len() != sel.dim() {
        return Err(Error::dim(format!(
            "state of length {} observed by a selection over dimension {}",
            u.len(),
            sel.dim()
        )));
    }
    Ok(DVector::from_iterator(
        sel.len(),
        sel.indices().iter().map(|&i| u[i]),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub std_dev: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(std_dev: f64, seed: u64) -> Result<Self> {
        if !std_dev.is_finite() || std_dev < 0.0 {
            return Err(Error::Input(format!("noise std {std_dev} must be finite and >= 0")));
        }
        Ok(NoiseSpec { std_dev, seed })
    }
}

/// Standard normal draw number `index` of the stream keyed by `seed`.
///
/// Box-Muller on two 53-bit uniforms taken from a fixed position of the
/// ChaCha8 keystream; the value depends only on `(seed, index)`.
pub fn gaussian_at(seed: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(u128::from(index) * 4);
    let scale = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * scale;
    let u2 = (rng.next_u64() >> 11) as f64 * scale;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Adds independent `N(0, std^2)` noise to every sample entry.
pub fn add_noise(series: &ObservationSeries, spec: &NoiseSpec) -> ObservationSeries {
    if spec.std_dev == 0.0 {
        return series.clone();
    }
    let n = series.width();
    let samples = series
        .samples()
        .iter()
        .enumerate()
        .map(|(k, y)| {
            DVector::from_fn(n, |i, _| {
                y[i] + spec.std_dev * gaussian_at(spec.seed, (k * n + i) as u64)
            })
        })
        .collect();
    series.with_samples(samples, series.noise_std().hypot(spec.std_dev))
}

/// Operators cached for a fixed `(Phi, S)` pair.
#[derive(Debug, Clone)]
pub struct DeimCore {
    basis: BasisMatrix,
    selection: SensorSelection,
    st_phi: DenseMatrix,
    st_phi_pinv: DenseMatrix,
    kernel: DenseMatrix,
    prefactor: f64,
    phi_pinv: DMatrix<f64>,
    phi_kernel: DMatrix<f64>,
    base_offset: DVector<f64>,
}

/// Checks the full-rank assumption `rank(S^T Phi) = min(n, m)` and caches
/// `S^T Phi`, its pseudo-inverse, the kernel matrix `Z`, and
/// `|(S^T Phi)^+|_2`.
pub fn build_deim_core(basis: &BasisMatrix, sel: &SensorSelection) -> Result<DeimCore> {
    if sel.dim() != basis.dim() {
        return Err(Error::dim(format!(
            "sensors over dimension {} for a basis of dimension {}",
            sel.dim(),
            basis.dim()
        )));
    }
    let (n, m) = (sel.len(), basis.modes());
    let st_phi = basis.phi().select_rows(sel.indices())?;
    let s = matrix::singular_values(&st_phi)?;
    let rank = matrix::numerical_rank(&s, n, m, None);
    let expected = n.min(m);
    if rank != expected {
        return Err(Error::RankDeficient { rank, expected });
    }
    let st_phi_pinv = matrix::pinv(&st_phi, None)?;
    let kernel = nullspace_with_rank(&st_phi, m - rank)?;
    let prefactor = 1.0 / s[expected - 1];

    let phi = basis.phi().inner();
    let phi_pinv = phi * st_phi_pinv.inner();
    let phi_kernel = phi * kernel.inner();
    let base_offset = match basis.offset() {
        Some(o) => o - &phi_pinv * observe(o, sel)?,
        None => DVector::zeros(basis.dim()),
    };
    Ok(DeimCore {
        basis: basis.clone(),
        selection: sel.clone(),
        st_phi,
        st_phi_pinv,
        kernel,
        prefactor,
        phi_pinv,
        phi_kernel,
        base_offset,
    })
}

fn nullspace_with_rank(st_phi: &DenseMatrix, dim: usize) -> Result<DenseMatrix> {
    let z = matrix::nullspace_orthonormal(st_phi, None)?;
    if z.cols() != dim {
        return Err(Error::Contract(format!(
            "kernel matrix has {} columns, expected {dim}",
            z.cols()
        )));
    }
    Ok(z)
}

impl DeimCore {
    pub fn basis(&self) -> &BasisMatrix {
        &self.basis
    }

    pub fn selection(&self) -> &SensorSelection {
        &self.selection
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn modes(&self) -> usize {
        self.basis.modes()
    }

    pub fn sensors(&self) -> usize {
        self.selection.len()
    }

    /// Dimension of `N[S^T Phi]`, i.e. `m - n` when `n <= m`.
    pub fn kernel_dim(&self) -> usize {
        self.kernel.cols()
    }

    pub fn st_phi(&self) -> &DenseMatrix {
        &self.st_phi
    }

    pub fn st_phi_pinv(&self) -> &DenseMatrix {
        &self.st_phi_pinv
    }

    /// Kernel matrix `Z`, orthonormal columns spanning `N[S^T Phi]`.
    pub fn kernel(&self) -> &DenseMatrix {
        &self.kernel
    }

    /// `|(S^T Phi)^+|_2`.
    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    /// `Phi (S^T Phi)^+`.
    pub fn phi_pinv(&self) -> &DMatrix<f64> {
        &self.phi_pinv
    }

    /// `Phi Z`.
    pub fn phi_kernel(&self) -> &DMatrix<f64> {
        &self.phi_kernel
    }

    /// The minimum-norm part of every reconstruction from measurements `y`:
    /// `offset + Phi (S^T Phi)^+ (y - S^T offset)`.
    pub fn base_reconstruction(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_measurements(y)?;
        Ok(&self.base_offset + &self.phi_pinv * y)
    }

    pub(crate) fn base_offset(&self) -> &DVector<f64> {
        &self.base_offset
    }

    pub(crate) fn check_measurements(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.sensors() {
            return Err(Error::dim(format!(
                "{} measurements for {} sensors",
                y.len(),
                self.sensors()
            )));
        }
        Ok(())
    }

    /// DEIM operator `D = Phi (S^T Phi)^+ S^T` (`N x N`).
    pub fn deim_operator(&self) -> DenseMatrix {
        let s = self.selection.matrix();
        DenseMatrix::new(&self.phi_pinv * s.transpose().inner())
            .expect("products of finite matrices are finite")
    }
}
