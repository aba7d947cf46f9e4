//! Vanilla DEIM, S-DEIM with a kernel vector, error decomposition, and the
//! two-stage variant.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix};
use crate::pod::BasisMatrix;
use crate::sensing::{self, build_deim_core, qdeim_place, DeimCore, SensorSelection};

/// Membership tolerance for `z` in `N[S^T Phi]`, relative to `1 + |z|`.
pub const KERNEL_MEMBERSHIP_TOL: f64 = 1e-10;

/// Kernel vector in `xi` coordinates; `z = Z xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelVector {
    xi: DVector<f64>,
}

impl KernelVector {
    pub fn zero(core: &DeimCore) -> Self {
        KernelVector {
            xi: DVector::zeros(core.kernel_dim()),
        }
    }

    pub fn from_xi(core: &DeimCore, xi: DVector<f64>) -> Result<Self> {
        if xi.len() != core.kernel_dim() {
            return Err(Error::dim(format!(
                "xi of length {} for a kernel of dimension {}",
                xi.len(),
                core.kernel_dim()
            )));
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel coordinates".into()));
        }
        Ok(KernelVector { xi })
    }

    /// Accepts a coefficient-space `z` (length `m`) after checking
    /// `|S^T Phi z| < tol (1 + |z|)`.
    pub fn from_z(core: &DeimCore, z: &DVector<f64>) -> Result<Self> {
        if z.len() != core.modes() {
            return Err(Error::dim(format!(
                "z of length {} for {} modes",
                z.len(),
                core.modes()
            )));
        }
        let residual = (core.st_phi().inner() * z).norm();
        if residual >= KERNEL_MEMBERSHIP_TOL * (1.0 + z.norm()) {
            return Err(Error::Contract(format!(
                "z is not in N[S^T Phi]: |S^T Phi z| = {residual:e}"
            )));
        }
        Ok(KernelVector {
            xi: core.kernel().inner().tr_mul(z),
        })
    }

    pub fn xi(&self) -> &DVector<f64> {
        &self.xi
    }

    pub fn z(&self, core: &DeimCore) -> DVector<f64> {
        core.kernel().inner() * &self.xi
    }
}

/// `Phi (S^T Phi)^+ y`, shifted by the basis offset when there is one.
pub fn vanilla_deim(core: &DeimCore, y: &DVector<f64>) -> Result<DVector<f64>> {
    core.base_reconstruction(y)
}

/// `Phi (S^T Phi)^+ y + Phi z`.
pub fn sdeim(core: &DeimCore, y: &DVector<f64>, kernel: &KernelVector) -> Result<DVector<f64>> {
    if kernel.xi.len() != core.kernel_dim() {
        return Err(Error::Contract(format!(
            "kernel vector built for a kernel of dimension {}, core has {}",
            kernel.xi.len(),
            core.kernel_dim()
        )));
    }
    let mut u = core.base_reconstruction(y)?;
    u.gemv(1.0, core.phi_kernel(), &kernel.xi, 1.0);
    Ok(u)
}

/// The best kernel vector for a known state: `z = Z Z^T Phi^T u`.
pub fn optimal_kernel(core: &DeimCore, u: &DVector<f64>) -> Result<KernelVector> {
    core.basis().check_len(u)?;
    let w = core.basis().centered(u);
    Ok(KernelVector {
        xi: core.phi_kernel().tr_mul(&w),
    })
}

/// Squared-error decomposition of one S-DEIM reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    pub total_sq: f64,
    pub trunc_sq: f64,
    pub oblique_sq: f64,
    pub kernel_sq: f64,
    pub upper_bound: f64,
}

impl ErrorReport {
    /// `total,trunc,oblique,kernel,bound`.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.total_sq, self.trunc_sq, self.oblique_sq, self.kernel_sq, self.upper_bound
        )
    }

    /// `total - (trunc + oblique + kernel)` relative to `total` (or to 1 when
    /// the total is tiny).
    pub fn identity_defect(&self) -> f64 {
        let parts = self.trunc_sq + self.oblique_sq + self.kernel_sq;
        (self.total_sq - parts).abs() / self.total_sq.max(parts).max(1e-300)
    }
}

/// Reconstructs from the exact measurements `S^T u` with the given kernel and
/// splits the error into its truncation, oblique and kernel parts.
pub fn error_report(core: &DeimCore, u: &DVector<f64>, kernel: &KernelVector) -> Result<ErrorReport> {
    let y = sensing::observe(u, core.selection())?;
    let rec = sdeim(core, &y, kernel)?;
    let u_hat = core.basis().project(u)?;
    let resid = u - &u_hat;
    let oblique = core.phi_pinv() * sensing::observe(&resid, core.selection())?;
    let z_hat = optimal_kernel(core, u)?.z(core);
    let kernel_err = (&z_hat - kernel.z(core)).norm();
    let trunc = resid.norm();
    Ok(ErrorReport {
        total_sq: (u - rec).norm_squared(),
        trunc_sq: trunc * trunc,
        oblique_sq: oblique.norm_squared(),
        kernel_sq: kernel_err * kernel_err,
        upper_bound: core.prefactor() * trunc + kernel_err,
    })
}

/// Everything one reconstruction produces: the state, the kernel vector used,
/// and, when the truth is known, the error decomposition.
#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub state: DVector<f64>,
    pub kernel: KernelVector,
    pub errors: Option<ErrorReport>,
}

pub fn reconstruct(
    core: &DeimCore,
    y: &DVector<f64>,
    kernel: KernelVector,
    truth: Option<&DVector<f64>>,
) -> Result<ReconstructionReport> {
    let state = sdeim(core, y, &kernel)?;
    let errors = truth.map(|u| error_report(core, u, &kernel)).transpose()?;
    Ok(ReconstructionReport {
        state,
        kernel,
        errors,
    })
}

/// DEIM operator `Phi (S^T Phi)^+ S^T`.
pub fn deim_operator(core: &DeimCore) -> DenseMatrix {
    core.deim_operator()
}

fn check_m_range(basis_full: &BasisMatrix, n: usize, m_range: &[usize]) -> Result<()> {
    if m_range.is_empty() {
        return Err(Error::Input("empty mode range".into()));
    }
    if let Some(&m) = m_range.iter().find(|&&m| m < n || m > basis_full.modes()) {
        return Err(Error::Input(format!(
            "m = {m} outside [{n}, {}]",
            basis_full.modes()
        )));
    }
    Ok(())
}

/// `(m, |(S_n^T Phi_m)^+|_2)` with the `n` sensors placed once from the
/// basis truncated at the smallest `m` and held fixed.
pub fn prefactor_curve(
    basis_full: &BasisMatrix,
    n: usize,
    m_range: &[usize],
) -> Result<Vec<(usize, f64)>> {
    check_m_range(basis_full, n, m_range)?;
    let m0 = *m_range.iter().min().expect("nonempty");
    let sel = qdeim_place(&basis_full.truncated(m0)?, n)?;
    m_range
        .iter()
        .map(|&m| Ok((m, build_deim_core(&basis_full.truncated(m)?, &sel)?.prefactor())))
        .collect()
}

/// Same curve with the sensors re-placed from each truncated basis.
pub fn prefactor_curve_replaced(
    basis_full: &BasisMatrix,
    n: usize,
    m_range: &[usize],
) -> Result<Vec<(usize, f64)>> {
    check_m_range(basis_full, n, m_range)?;
    m_range
        .iter()
        .map(|&m| {
            let basis = basis_full.truncated(m)?;
            let sel = qdeim_place(&basis, n)?;
            Ok((m, build_deim_core(&basis, &sel)?.prefactor()))
        })
        .collect()
}

/// Two-stage S-DEIM: reconstruct from `y1`, then pick the minimum-norm kernel
/// vector in `N[S1^T Phi]` that best fits the second batch `y2`.
pub fn two_stage_sdeim(
    basis: &BasisMatrix,
    sel1: &SensorSelection,
    sel2: Option<&SensorSelection>,
    y1: &DVector<f64>,
    y2: &DVector<f64>,
) -> Result<DVector<f64>> {
    let core1 = build_deim_core(basis, sel1)?;
    let base = core1.base_reconstruction(y1)?;
    let Some(sel2) = sel2 else {
        if !y2.is_empty() {
            return Err(Error::dim("second-batch data without second-batch sensors"));
        }
        return Ok(base);
    };
    // validates disjointness
    sel1.concat(sel2)?;
    if y2.len() != sel2.len() {
        return Err(Error::dim(format!(
            "{} second-batch measurements for {} sensors",
            y2.len(),
            sel2.len()
        )));
    }
    if core1.kernel_dim() == 0 {
        return Ok(base);
    }
    let s2_phi_z = DenseMatrix::new(core1.phi_kernel().select_rows(sel2.indices()))?;
    let residual = y2 - sensing::observe(&base, sel2)?;
    let xi = matrix::pinv(&s2_phi_z, None)?.inner() * residual;
    let mut u = base;
    u.gemv(1.0, core1.phi_kernel(), &xi, 1.0);
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_basis(rng: &mut ChaCha8Rng, n_dim: usize, m: usize) -> BasisMatrix {
        let g = DMatrix::from_fn(n_dim, m, |_, _| rng.random_range(-1.0..1.0));
        BasisMatrix::new(DenseMatrix::new(g.qr().q()).unwrap(), vec![]).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn square_case_reproduces_in_range_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let basis = random_basis(&mut rng, 9, 4);
        let core = build_deim_core(&basis, &qdeim_place(&basis, 4).unwrap()).unwrap();
        let u = basis.phi().inner() * random_vec(&mut rng, 4);
        let y = sensing::observe(&u, core.selection()).unwrap();
        let rec = vanilla_deim(&core, &y).unwrap();
        assert!((rec - &u).norm() < 1e-10 * u.norm());
    }

    #[test]
    fn zero_kernel_equals_vanilla_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let basis = random_basis(&mut rng, 9, 4);
        let core = build_deim_core(&basis, &qdeim_place(&basis, 2).unwrap()).unwrap();
        let y = random_vec(&mut rng, 2);
        assert_eq!(
            sdeim(&core, &y, &KernelVector::zero(&core)).unwrap(),
            vanilla_deim(&core, &y).unwrap()
        );
    }

    #[test]
    fn optimal_kernel_makes_in_range_states_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let basis = random_basis(&mut rng, 10, 5);
        let core = build_deim_core(&basis, &qdeim_place(&basis, 2).unwrap()).unwrap();
        let u = basis.phi().inner() * random_vec(&mut rng, 5);
        let k = optimal_kernel(&core, &u).unwrap();
        let y = sensing::observe(&u, core.selection()).unwrap();
        assert!((sdeim(&core, &y, &k).unwrap() - &u).norm() < 1e-8 * u.norm());
        let rep = error_report(&core, &u, &k).unwrap();
        assert!(rep.total_sq < 1e-16 * u.norm_squared());
    }

    #[test]
    fn optimal_kernel_orthogonal_state_is_zero() {
        let phi = DenseMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
        ])
        .unwrap();
        let basis = BasisMatrix::new(phi, vec![]).unwrap();
        let core = build_deim_core(&basis, &SensorSelection::new(3, vec![0]).unwrap()).unwrap();
        let u = DVector::from_vec(vec![0.0, 0.0, 5.0]);
        assert_eq!(optimal_kernel(&core, &u).unwrap().z(&core).norm(), 0.0);
    }

    #[test]
    fn optimal_kernel_matches_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let basis = random_basis(&mut rng, 8, 5);
            let core = build_deim_core(&basis, &qdeim_place(&basis, 2).unwrap()).unwrap();
            let u = random_vec(&mut rng, 8);
            let y = sensing::observe(&u, core.selection()).unwrap();
            // min over xi of |base + Phi Z xi - u|, solved by normal equations
            let a = core.phi_kernel();
            let b = &u - vanilla_deim(&core, &y).unwrap();
            let xi_ls = (a.transpose() * a).lu().solve(&(a.transpose() * b)).unwrap();
            let xi = optimal_kernel(&core, &u).unwrap().xi().clone();
            assert!((xi - xi_ls).norm() < 1e-10);
        }
    }

    #[test]
    fn square_core_has_trivial_optimal_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = random_basis(&mut rng, 6, 3);
        let core = build_deim_core(&basis, &qdeim_place(&basis, 3).unwrap()).unwrap();
        let k = optimal_kernel(&core, &random_vec(&mut rng, 6)).unwrap();
        assert!(k.xi().is_empty());
        assert_eq!(k.z(&core), DVector::zeros(3));
    }

    #[test]
    fn from_z_rejects_vectors_outside_the_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let basis = random_basis(&mut rng, 8, 4);
        let core = build_deim_core(&basis, &qdeim_place(&basis, 2).unwrap()).unwrap();
        let inside = core.kernel().inner() * random_vec(&mut rng, 2);
        let k = KernelVector::from_z(&core, &inside).unwrap();
        assert!((k.z(&core) - &inside).norm() < 1e-12);
        let outside = DVector::from_element(4, 1.0);
        assert!(matches!(
            KernelVector::from_z(&core, &outside),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn square_bound_is_prefactor_times_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let basis = random_basis(&mut rng, 8, 3);
        let core = build_deim_core(&basis, &qdeim_place(&basis, 3).unwrap()).unwrap();
        let u = random_vec(&mut rng, 8);
        let rep = error_report(&core, &u, &KernelVector::zero(&core)).unwrap();
        let inv = core.st_phi().inner().clone().try_inverse().unwrap();
        let inv_norm = matrix::spectral_norm(&DenseMatrix::new(inv).unwrap()).unwrap();
        let trunc = crate::pod::truncation_error(&u, &basis).unwrap();
        assert!((rep.upper_bound - inv_norm * trunc).abs() < 1e-10 * rep.upper_bound);
        assert!(rep.total_sq.sqrt() <= rep.upper_bound * (1.0 + 1e-8) + 1e-8);
    }

    #[test]
    fn error_report_csv_row() {
        let r = ErrorReport {
            total_sq: 1.5,
            trunc_sq: 0.5,
            oblique_sq: 0.25,
            kernel_sq: 0.75,
            upper_bound: 2.0,
        };
        assert_eq!(r.csv_row(), "1.5,0.5,0.25,0.75,2");
        assert_eq!(r.identity_defect(), 0.0);
    }

    #[test]
    fn centered_reconstruction_keeps_the_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let offset = random_vec(&mut rng, 9);
        let basis = random_basis(&mut rng, 9, 4).with_offset(offset.clone()).unwrap();
        let core = build_deim_core(&basis, &qdeim_place(&basis, 2).unwrap()).unwrap();
        let u = &offset + basis.phi().inner() * random_vec(&mut rng, 4) + 0.1 * random_vec(&mut rng, 9);
        let k = KernelVector::from_xi(&core, random_vec(&mut rng, 2)).unwrap();
        let rep = error_report(&core, &u, &k).unwrap();
        assert!(rep.identity_defect() < 1e-8);
        let y = sensing::observe(&u, core.selection()).unwrap();
        let rec = sdeim(&core, &y, &k).unwrap();
        assert!((sensing::observe(&rec, core.selection()).unwrap() - y).norm() < 1e-10);
    }

    #[test]
    fn prefactor_curve_square_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let basis = random_basis(&mut rng, 12, 6);
        let curve = prefactor_curve(&basis, 2, &[2, 3, 4, 5, 6]).unwrap();
        let sel = qdeim_place(&basis.truncated(2).unwrap(), 2).unwrap();
        let st = basis.truncated(2).unwrap().phi().select_rows(sel.indices()).unwrap();
        let inv = DenseMatrix::new(st.inner().clone().try_inverse().unwrap()).unwrap();
        assert!((curve[0].1 - matrix::spectral_norm(&inv).unwrap()).abs() < 1e-10 * curve[0].1);
        for w in curve.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-9);
        }
        assert!(prefactor_curve(&basis, 3, &[2, 3]).is_err());
        assert_eq!(prefactor_curve_replaced(&basis, 2, &[2, 4]).unwrap().len(), 2);
    }

    #[test]
    fn two_stage_without_second_batch_is_vanilla() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let basis = random_basis(&mut rng, 10, 6);
        let sel1 = qdeim_place(&basis, 2).unwrap();
        let y1 = random_vec(&mut rng, 2);
        let core = build_deim_core(&basis, &sel1).unwrap();
        assert_eq!(
            two_stage_sdeim(&basis, &sel1, None, &y1, &DVector::zeros(0)).unwrap(),
            vanilla_deim(&core, &y1).unwrap()
        );
    }

    #[test]
    fn two_stage_rejects_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let basis = random_basis(&mut rng, 10, 6);
        let sel1 = SensorSelection::new(10, vec![0, 1]).unwrap();
        let sel2 = SensorSelection::new(10, vec![1, 2]).unwrap();
        let y = random_vec(&mut rng, 2);
        assert!(matches!(
            two_stage_sdeim(&basis, &sel1, Some(&sel2), &y, &y),
            Err(Error::Input(_))
        ));
    }
}
