//! Runtime invariant suites, one per module, for the `properties` command and
//! the acceptance tests. Every check is a counted case with a limit; suites
//! never panic on a failed check.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assimilation::{das_deim, interpolate_obs, kernel_rhs, one_sided_lipschitz_linear, one_sided_lipschitz_on_range, ObservationSeries};
use crate::dynamics::{integrate, linear_field, lorenz96, Lorenz63, VectorField};
use crate::error::Result;
use crate::experiment::{self, ExperimentConfig};
use crate::matrix::{self, DenseMatrix, PIVOT_TIE_RTOL};
use crate::pod::{compute_pod, truncation_error, BasisMatrix, SnapshotSet, ORTHONORMAL_TOL};
use crate::reconstruction::{error_report, sdeim, two_stage_sdeim, vanilla_deim, KernelVector};
use crate::sensing::{self, build_deim_core, qdeim_place, DeimCore, SensorSelection};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    pub passed: bool,
    /// Largest `value / limit` over all limit checks.
    pub worst_ratio: f64,
    /// First few failure descriptions.
    pub messages: Vec<String>,
}

const MAX_MESSAGES: usize = 8;

impl SuiteReport {
    fn new(name: impl Into<String>) -> Self {
        SuiteReport {
            name: name.into(),
            cases: 0,
            failures: 0,
            passed: true,
            worst_ratio: 0.0,
            messages: Vec::new(),
        }
    }

    fn fail(&mut self, msg: String) {
        self.failures += 1;
        self.passed = false;
        if self.messages.len() < MAX_MESSAGES {
            self.messages.push(msg);
        }
    }

    /// One case: `value <= limit`.
    fn within(&mut self, label: &str, value: f64, limit: f64) {
        self.cases += 1;
        let ratio = if limit > 0.0 { value / limit } else if value <= 0.0 { 0.0 } else { f64::INFINITY };
        if ratio.is_nan() {
            self.worst_ratio = f64::INFINITY;
        } else {
            self.worst_ratio = self.worst_ratio.max(ratio);
        }
        if !(value <= limit) {
            self.fail(format!("{label}: {value:e} > {limit:e}"));
        }
    }

    fn holds(&mut self, label: &str, ok: bool) {
        self.cases += 1;
        if !ok {
            self.fail(format!("{label} does not hold"));
        }
    }

    /// A setup step; errors count as a failed case.
    fn setup<T>(&mut self, label: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.cases += 1;
                self.fail(format!("{label}: {e}"));
                None
            }
        }
    }

    fn absorb(&mut self, other: SuiteReport) {
        self.cases += other.cases;
        self.failures += other.failures;
        self.passed &= other.passed;
        self.worst_ratio = self.worst_ratio.max(other.worst_ratio);
        for m in other.messages {
            if self.messages.len() < MAX_MESSAGES {
                self.messages.push(format!("{}: {m}", other.name));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PropertyOptions {
    pub seed: u64,
    /// Replace every generated basis by a non-orthonormal one (negative
    /// control for the orthonormality checks).
    pub corrupt_basis: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertiesReport {
    pub seed: u64,
    pub corrupt_basis: bool,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn random_basis(rng: &mut ChaCha8Rng, n_dim: usize, m: usize) -> BasisMatrix {
    let q = random_matrix(rng, n_dim, m).qr().q();
    BasisMatrix::new(DenseMatrix::new(q).expect("finite"), Vec::new()).expect("orthonormal")
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Random `(Phi, S)` with `n <= m < N`.
fn random_core(rng: &mut ChaCha8Rng, n_dim: usize, m: usize, n: usize) -> Result<DeimCore> {
    let basis = random_basis(rng, n_dim, m);
    let sel = qdeim_place(&basis, n)?;
    build_deim_core(&basis, &sel)
}

fn random_shape(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    let n_dim = rng.random_range(6..=12);
    let m = rng.random_range(2..n_dim);
    let n = rng.random_range(1..=m);
    (n_dim, m, n)
}

pub fn matrix_suite(seed: u64) -> SuiteReport {
    let mut s = SuiteReport::new("matrix-core");
    let mut rng = rng(seed, 1);
    for _ in 0..20 {
        let a = DenseMatrix::new(random_matrix(&mut rng, 8, 8)).expect("finite");
        let Some(qr) = s.setup("qr", matrix::qr_column_pivot(&a)) else { continue };
        let ap = a.inner() * qr.permutation_matrix().inner();
        s.within("A P = Q R", rel(&(qr.q.inner() * qr.r.inner()), &ap), 1e-10);
        s.within("Q^T Q = I", matrix::orthonormality_defect(qr.q.inner()), 1e-10);
        let r = qr.r.inner();
        for k in 0..r.nrows() {
            if k + 1 < r.nrows() {
                s.holds("|R_kk| nonincreasing", r[(k, k)].abs() >= r[(k + 1, k + 1)].abs() * (1.0 - 1e-12));
            }
            // greedy: the chosen column dominates every remaining trailing column
            let chosen = r[(k, k)] * r[(k, k)];
            for j in k + 1..r.ncols() {
                let rest = r.view((k, j), (r.nrows() - k, 1)).norm_squared();
                s.holds("greedy pivot", chosen >= rest * (1.0 - PIVOT_TIE_RTOL) - 1e-24);
            }
        }
    }
    for _ in 0..20 {
        let (rows, cols) = (rng.random_range(1..9), rng.random_range(1..9));
        let rank = rng.random_range(1..=rows.min(cols));
        let a = DenseMatrix::new(random_matrix(&mut rng, rows, rank) * random_matrix(&mut rng, rank, cols)).expect("finite");
        let Some(svd) = s.setup("svd", matrix::svd_thin(&a)) else { continue };
        let sig = DMatrix::from_diagonal(&DVector::from_column_slice(&svd.s));
        s.within("U S V^T = A", rel(&(svd.u.inner() * sig * svd.v.inner().transpose()), a.inner()), 1e-10);
        s.within("U^T U = I", matrix::orthonormality_defect(svd.u.inner()), 1e-10);
        s.within("V^T V = I", matrix::orthonormality_defect(svd.v.inner()), 1e-10);
        let Some(p) = s.setup("pinv", matrix::pinv(&a, None)) else { continue };
        let (a_, p_) = (a.inner(), p.inner());
        s.within("A A+ A = A", rel(&(a_ * p_ * a_), a_), 1e-10);
        s.within("A+ A A+ = A+", rel(&(p_ * a_ * p_), p_), 1e-10);
        let ap = a_ * p_;
        let pa = p_ * a_;
        s.within("(A A+)^T = A A+", (&ap - ap.transpose()).norm() / ap.norm().max(1.0), 1e-10);
        s.within("(A+ A)^T = A+ A", (&pa - pa.transpose()).norm() / pa.norm().max(1.0), 1e-10);
        if let Some(z) = s.setup("nullspace", matrix::nullspace_orthonormal(&a, None)) {
            s.holds("dim N[A] = cols - rank", z.cols() == cols - rank);
            if z.cols() > 0 {
                s.within("A Z = 0", (a_ * z.inner()).norm(), 1e-10 * (1.0 + a.frobenius_norm()));
                s.within("Z^T Z = I", matrix::orthonormality_defect(z.inner()), 1e-10);
            }
        }
    }
    for _ in 0..20 {
        let a = DenseMatrix::new(random_matrix(&mut rng, 5, 5)).expect("finite");
        let (Some(p), true) = (matrix::pinv(&a, None).ok(), true) else { continue };
        if let Ok(pp) = matrix::pinv(&p, None) {
            s.within("pinv(pinv(A)) = A", rel(pp.inner(), a.inner()), 1e-8);
        }
    }
    s
}

pub fn pod_suite(seed: u64, corrupt: bool) -> SuiteReport {
    let mut s = SuiteReport::new("pod-basis");
    let mut rng = rng(seed, 2);
    for _ in 0..20 {
        let (n_dim, k) = (rng.random_range(4..10), rng.random_range(4..30));
        let snaps = DenseMatrix::new(random_matrix(&mut rng, n_dim, k)).expect("finite");
        let snap = SnapshotSet::new(snaps, "random").expect("valid snapshots");
        let m = rng.random_range(1..=n_dim.min(k));
        let Some(mut basis) = s.setup("compute_pod", compute_pod(&snap, m)) else { continue };
        if corrupt {
            let mut phi = basis.phi().inner().clone();
            phi.column_mut(0).scale_mut(1.1);
            basis = BasisMatrix::new_unchecked(DenseMatrix::new(phi).expect("finite"), basis.singular_values().to_vec());
        }
        s.within("Phi^T Phi = I", basis.orthonormality_defect(), ORTHONORMAL_TOL);
        s.holds("singular values descending", basis.singular_values().windows(2).all(|w| w[0] >= w[1]));
        let u = random_vector(&mut rng, n_dim);
        let c = random_vector(&mut rng, m);
        let phi = basis.phi().inner();
        let resid = &u - phi * phi.tr_mul(&u);
        s.within("<u - u_hat, Phi c> = 0", resid.dot(&(phi * &c)).abs(), 1e-10 * u.norm() * c.norm());
        if m > 1 {
            let (Some(e_big), Some(e_small)) = (
                truncation_error(&u, &basis).ok(),
                basis.truncated(m - 1).ok().and_then(|b| truncation_error(&u, &b).ok()),
            ) else {
                continue;
            };
            s.within("E_m nonincreasing in m", e_big - e_small, 1e-12);
        }
    }
    // optimality against random bases on rank-3 data
    for _ in 0..3 {
        let n_dim = 8;
        let data = random_matrix(&mut rng, n_dim, 3) * random_matrix(&mut rng, 3, 25);
        let snap = SnapshotSet::new(DenseMatrix::new(data.clone()).expect("finite"), "rank-3").expect("valid");
        let m = 2;
        let Some(basis) = s.setup("compute_pod", compute_pod(&snap, m)) else { continue };
        let energy = |b: &BasisMatrix| -> f64 {
            data.column_iter()
                .map(|col| truncation_error(&col.into_owned(), b).unwrap_or(f64::INFINITY).powi(2))
                .sum()
        };
        let best = energy(&basis);
        let worst_gap = (0..100)
            .map(|_| best - energy(&random_basis(&mut rng, n_dim, m)))
            .fold(f64::NEG_INFINITY, f64::max);
        s.within("POD beats random bases", worst_gap, 1e-9 * best.max(1.0));
    }
    s
}

pub fn sensing_suite(seed: u64) -> SuiteReport {
    let mut s = SuiteReport::new("sensing");
    let mut rng = rng(seed, 3);
    for _ in 0..30 {
        let (n_dim, m, n) = random_shape(&mut rng);
        let basis = random_basis(&mut rng, n_dim, m);
        let (Some(a), Some(b)) = (s.setup("place", qdeim_place(&basis, n)), qdeim_place(&basis, n).ok()) else { continue };
        s.holds("placement deterministic", a == b);
        let Some(core) = s.setup("core", build_deim_core(&basis, &a)) else { continue };
        let st = core.st_phi().inner();
        let pinv = core.st_phi_pinv().inner();
        s.within("(S^T Phi)(S^T Phi)+ = I_n", (st * pinv - DMatrix::<f64>::identity(n, n)).norm(), 1e-10);
        if core.kernel_dim() > 0 {
            s.within("Z^T (S^T Phi)+ = 0", (core.kernel().inner().tr_mul(pinv)).norm(), 1e-10);
            s.within("S^T Phi Z = 0", (st * core.kernel().inner()).norm(), 1e-10);
        }
        s.holds("kernel dimension m - n", core.kernel_dim() == m - n);
    }
    s
}

/// Pythagorean identity on `cases` random instances with random valid `z`.
pub fn pythagorean_identity(seed: u64, cases: usize) -> SuiteReport {
    let mut s = SuiteReport::new("error identity");
    let mut rng = rng(seed, 10);
    for _ in 0..cases {
        let (n_dim, m, n) = random_shape(&mut rng);
        let Some(core) = s.setup("core", random_core(&mut rng, n_dim, m, n)) else { continue };
        let u = random_vector(&mut rng, n_dim);
        let k = KernelVector::from_xi(&core, random_vector(&mut rng, core.kernel_dim())).expect("sized");
        let Some(rep) = s.setup("error_report", error_report(&core, &u, &k)) else { continue };
        s.within("total = trunc + oblique + kernel", rep.identity_defect(), 1e-8);
    }
    s
}

/// `S^T u~(z) = y` for random `(Phi, S, z)` with `n <= m`.
pub fn interpolation_property(seed: u64, cases: usize) -> SuiteReport {
    let mut s = SuiteReport::new("interpolation property");
    let mut rng = rng(seed, 11);
    for _ in 0..cases {
        let (n_dim, m, n) = random_shape(&mut rng);
        let Some(core) = s.setup("core", random_core(&mut rng, n_dim, m, n)) else { continue };
        let y = random_vector(&mut rng, n);
        let k = KernelVector::from_xi(&core, random_vector(&mut rng, core.kernel_dim())).expect("sized");
        let Some(rec) = s.setup("sdeim", sdeim(&core, &y, &k)) else { continue };
        let back = sensing::observe(&rec, core.selection()).expect("sized");
        s.within("S^T u~ = y", (back - &y).norm(), 1e-10);
    }
    s
}

/// `|u - u~(z)| <= |(S^T Phi)^+| E_m(u) + |z - z_hat|`.
pub fn error_bound(seed: u64, cases: usize) -> SuiteReport {
    let mut s = SuiteReport::new("error bound");
    let mut rng = rng(seed, 12);
    for _ in 0..cases {
        let (n_dim, m, n) = random_shape(&mut rng);
        let Some(core) = s.setup("core", random_core(&mut rng, n_dim, m, n)) else { continue };
        let u = random_vector(&mut rng, n_dim);
        let k = KernelVector::from_xi(&core, random_vector(&mut rng, core.kernel_dim())).expect("sized");
        let Some(rep) = s.setup("error_report", error_report(&core, &u, &k)) else { continue };
        s.within(
            "error <= bound",
            rep.total_sq.sqrt() - rep.upper_bound,
            1e-8 * (1.0 + rep.upper_bound),
        );
    }
    s
}

/// Two-stage reconstruction against vanilla DEIM with the combined sensors
/// (`N = 10`, `m = 6`, `n1 = n2 = 2`).
pub fn two_stage_equivalence(seed: u64, cases: usize) -> SuiteReport {
    let mut s = SuiteReport::new("two-stage equivalence");
    let mut rng = rng(seed, 13);
    for _ in 0..cases {
        let basis = random_basis(&mut rng, 10, 6);
        let mut idx: Vec<usize> = (0..10).collect();
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let sel1 = SensorSelection::new(10, idx[..2].to_vec()).expect("distinct");
        let sel2 = SensorSelection::new(10, idx[2..4].to_vec()).expect("distinct");
        let (y1, y2) = (random_vector(&mut rng, 2), random_vector(&mut rng, 2));
        let Some(two) = s.setup("two-stage", two_stage_sdeim(&basis, &sel1, Some(&sel2), &y1, &y2)) else { continue };
        let both = sel1.concat(&sel2).expect("disjoint");
        let Some(core) = s.setup("combined core", build_deim_core(&basis, &both)) else { continue };
        let y = DVector::from_iterator(4, y1.iter().chain(y2.iter()).copied());
        let vanilla = vanilla_deim(&core, &y).expect("sized");
        s.within("two-stage = vanilla(S1 S2)", (&two - &vanilla).norm() / vanilla.norm().max(1e-300), 1e-8);
        let back = sensing::observe(&two, &sel1).expect("sized");
        s.within("S1^T u = y1", (back - &y1).norm(), 1e-10);
    }
    s
}

pub fn reconstruction_suite(seed: u64) -> SuiteReport {
    let mut s = SuiteReport::new("reconstruction");
    s.absorb(pythagorean_identity(seed, 100));
    s.absorb(interpolation_property(seed, 100));
    s.absorb(error_bound(seed, 100));
    s.absorb(two_stage_equivalence(seed, 50));
    let mut rng = rng(seed, 14);
    for _ in 0..30 {
        let (n_dim, m, n) = random_shape(&mut rng);
        let Some(core) = s.setup("core", random_core(&mut rng, n_dim, m, n)) else { continue };
        let d = core.deim_operator();
        let phi = core.basis().phi().inner();
        let pp = phi * phi.transpose();
        let dpp = d.inner() * &pp;
        if n < m {
            s.holds("projection fails for n < m", (&dpp - &pp).norm() > 1e-6);
            s.within("(D Phi Phi^T)^2 = D Phi Phi^T", (&dpp * &dpp - &dpp).norm(), 1e-9);
            s.within("D Phi Phi^T symmetric", (&dpp - dpp.transpose()).norm(), 1e-9);
        } else {
            s.within("D Phi Phi^T = Phi Phi^T", (&dpp - &pp).norm(), 1e-9);
        }
        let eye = DMatrix::<f64>::identity(n_dim, n_dim);
        let (dn, idn) = (
            matrix::spectral_norm(&d).unwrap_or(f64::NAN),
            matrix::spectral_norm(&DenseMatrix::new(&eye - d.inner()).expect("finite")).unwrap_or(f64::NAN),
        );
        s.within("|D| = |I - D|", (dn - idn).abs() / dn, 1e-8);
    }
    // projection property with more sensors than modes
    for _ in 0..20 {
        let n_dim = rng.random_range(6..=12);
        let m = rng.random_range(1..n_dim - 1);
        let n = rng.random_range(m..n_dim);
        let Some(core) = s.setup("core", random_core(&mut rng, n_dim, m, n)) else { continue };
        let phi = core.basis().phi().inner();
        let pp = phi * phi.transpose();
        s.within("D Phi Phi^T = Phi Phi^T (n >= m)", (core.deim_operator().inner() * &pp - &pp).norm(), 1e-9);
    }
    s
}

pub fn dynamics_suite(_seed: u64) -> SuiteReport {
    let mut s = SuiteReport::new("dynamics");
    // order-4 convergence on a damped oscillator
    let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, -0.1]]).expect("finite");
    let f = linear_field(&a).expect("square");
    let u0 = DVector::from_vec(vec![1.0, 0.0]);
    let ref_end = integrate(&f, &u0, 2.0, 1e-4, usize::MAX).map(|t| t.last_state().clone());
    let end = |dt: f64| integrate(&f, &u0, 2.0, dt, usize::MAX).map(|t| t.last_state().clone());
    if let (Some(r), Some(a), Some(b)) = (
        s.setup("reference", ref_end),
        s.setup("dt", end(0.1)),
        s.setup("dt/2", end(0.05)),
    ) {
        let ratio = (a - &r).norm() / (b - &r).norm();
        s.holds("RK4 error ratio in [12, 20]", (12.0..=20.0).contains(&ratio));
    }
    // Lorenz96 with F = 2 stays bounded from the standard initial condition
    let l96 = lorenz96(40, 2.0).expect("N >= 4");
    let mut u0 = DVector::from_element(40, 2.0);
    u0[0] += 0.01;
    if let Some(traj) = s.setup("lorenz96", integrate(&l96, &u0, 500.0, 1e-3, 100)) {
        let sup = traj.states.iter().map(|u| u.amax()).fold(0.0, f64::max);
        s.within("sup |u|_inf over [0, 500]", sup, 10.0);
    }
    s
}

/// `kernel_rhs` against the brute-force instantaneous least-squares
/// minimizer, with an explicit finite-difference `ydot`.
pub fn kernel_rhs_oracle(seed: u64, cases: usize) -> SuiteReport {
    let mut s = SuiteReport::new("kernel rhs oracle");
    let mut rng = rng(seed, 20);
    for _ in 0..cases {
        let Some(core) = s.setup("core", random_core(&mut rng, 6, 4, 2)) else { continue };
        let a = DenseMatrix::new(random_matrix(&mut rng, 6, 6)).expect("finite");
        let offset_field = OffsetQuadratic { a: a.inner().clone() };
        let samples: Vec<_> = (0..4).map(|_| random_vector(&mut rng, 2)).collect();
        let series = ObservationSeries::uniform(0.0, 0.1, samples).expect("uniform");
        let t = rng.random_range(0.01..0.29);
        let xi = random_vector(&mut rng, 2);
        let Some(rhs) = s.setup("kernel_rhs", kernel_rhs(&core, &offset_field, &series, t, &xi)) else { continue };
        let h = 1e-6;
        let (Ok(yp), Ok(ym), Ok(y)) = (
            interpolate_obs(&series, t + h),
            interpolate_obs(&series, t - h),
            interpolate_obs(&series, t),
        ) else {
            continue;
        };
        let ydot = (yp - ym) / (2.0 * h);
        let u = core.base_reconstruction(&y).expect("sized") + core.phi_kernel() * &xi;
        let target = offset_field.eval(&u) - core.phi_pinv() * ydot;
        let phi_z = DenseMatrix::new(core.phi_kernel().clone()).expect("finite");
        let w = matrix::pinv(&phi_z, None).expect("pinv").inner() * target;
        s.within("xi' = argmin", (rhs - &w).norm() / (1.0 + w.norm()), 1e-8);
    }
    s
}

/// `u' = A u + 0.1 (u . u) 1`, a nonlinear field for the oracle check.
struct OffsetQuadratic {
    a: DMatrix<f64>,
}

impl VectorField for OffsetQuadratic {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        let q: f64 = 0.1 * u.iter().map(|v| v * v).sum::<f64>();
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..u.len()).map(|j| self.a[(i, j)] * u[j]).sum::<f64>() + q;
        }
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        Vec::new()
    }

    fn name(&self) -> &'static str {
        "offset-quadratic"
    }
}

/// Linear testbed with an invariant range: `N = 8`, `m = 5`, `n = 2`,
/// `A = Phi B Phi^T - 2 (I - Phi Phi^T)` with `B = -(0.5 I + C^T C / 5) + K`,
/// `K` skew. The reconstruction error lives in `R[Phi Z]`, where the
/// one-sided Lipschitz constant `rho` of `P A` is negative, so
/// `|u~(t) - u(t)| <= |u~(0) - u(0)| e^{rho t}`. Observations are spaced
/// 0.005 apart so interpolation error stays far below the `1e-3` slack.
pub fn linear_convergence_testbed(seed: u64, cases: usize) -> SuiteReport {
    let mut s = SuiteReport::new("linear convergence testbed");
    let mut rng = rng(seed, 21);
    let (n_dim, m, n) = (8, 5, 2);
    let (obs_dt, horizon) = (0.005, 4.0);
    for _ in 0..cases {
        let basis = random_basis(&mut rng, n_dim, m);
        let Some(sel) = s.setup("place", qdeim_place(&basis, n)) else { continue };
        let Some(core) = s.setup("core", build_deim_core(&basis, &sel)) else { continue };
        let c = random_matrix(&mut rng, m, m);
        let k = random_matrix(&mut rng, m, m);
        let b = -(DMatrix::<f64>::identity(m, m) * 0.5 + c.tr_mul(&c) / 5.0) + (&k - k.transpose());
        let phi = basis.phi().inner();
        let eye = DMatrix::<f64>::identity(n_dim, n_dim);
        let a = DenseMatrix::new(phi * &b * phi.transpose() - (&eye - phi * phi.transpose()) * 2.0).expect("finite");
        let phi_z = core.phi_kernel();
        let p = DenseMatrix::new(phi_z * phi_z.transpose()).expect("finite");
        let (Some(rho), Some(rho_full)) = (
            s.setup("rho", one_sided_lipschitz_on_range(&a, &p)),
            s.setup("rho", one_sided_lipschitz_linear(&a, &p)),
        ) else {
            continue;
        };
        s.holds("rho < 0 on R[P]", rho < 0.0);
        // any d in N[P] gives <d, P A d> = 0, so the unrestricted value cannot be negative
        s.holds("unrestricted rho >= 0", rho_full >= -1e-12);

        let f = linear_field(&a).expect("square");
        let u0 = phi * random_vector(&mut rng, m);
        let stride = (obs_dt / 1e-3_f64).round() as usize;
        let Some(truth) = s.setup("truth", integrate(&f, &u0, horizon, 1e-3, stride)) else { continue };
        let Some(series) = s.setup("observe", ObservationSeries::from_trajectory(&truth, &sel)) else { continue };
        let Some(run) = s.setup(
            "das_deim",
            das_deim(&core, &f, &series, &DVector::zeros(core.kernel_dim()), obs_dt / 5.0),
        ) else {
            continue;
        };
        let e0 = (&run.reconstruction.states[0] - &truth.states[0]).norm();
        for ((t, rec), u) in run.reconstruction.times.iter().zip(&run.reconstruction.states).zip(&truth.states) {
            let envelope = e0 * (rho * t).exp() * (1.0 + 1e-3);
            s.within("|u~ - u| <= e0 exp(rho t)", (rec - u).norm(), envelope);
        }
    }
    s
}

pub fn assimilation_suite(seed: u64) -> SuiteReport {
    let mut s = SuiteReport::new("assimilation");
    s.absorb(kernel_rhs_oracle(seed, 20));
    s.absorb(linear_convergence_testbed(seed, 5));
    let mut rng = rng(seed, 22);

    // RHS at sample times ignores the slopes between samples
    if let Some(core) = s.setup("core", random_core(&mut rng, 7, 5, 2)) {
        let f = OffsetQuadratic { a: random_matrix(&mut rng, 7, 7) };
        let coarse: Vec<_> = (0..3).map(|_| random_vector(&mut rng, 2)).collect();
        let fine: Vec<_> = (0..=20)
            .map(|k| if k % 10 == 0 { coarse[k / 10].clone() } else { random_vector(&mut rng, 2) * 50.0 })
            .collect();
        let a = ObservationSeries::uniform(0.0, 0.5, coarse);
        let b = ObservationSeries::uniform(0.0, 0.05, fine);
        if let (Some(a), Some(b)) = (s.setup("series", a), s.setup("series", b)) {
            let xi = random_vector(&mut rng, 3);
            for &t in &[0.0, 0.5, 1.0] {
                match (kernel_rhs(&core, &f, &a, t, &xi), kernel_rhs(&core, &f, &b, t, &xi)) {
                    (Ok(x), Ok(y)) => s.holds("rhs independent of slopes", x == y),
                    _ => s.holds("rhs evaluates", false),
                }
            }
        }
    }

    // interpolation property along a clean Lorenz63 run
    let l63 = Lorenz63::default();
    if let Some(traj) = s.setup("truth", integrate(&l63, &DVector::from_vec(vec![1.0, 1.0, 1.0]), 20.0, 1e-3, 200)) {
        let snap = SnapshotSet::from_states(&traj.states, "lorenz63").expect("valid");
        if let Some(basis) = s.setup("pod", compute_pod(&snap, 3)) {
            let sel = SensorSelection::new(3, vec![1]).expect("valid");
            if let (Some(core), Some(series)) = (
                s.setup("core", build_deim_core(&basis, &sel)),
                s.setup("series", ObservationSeries::from_trajectory(&traj, &sel)),
            ) {
                if let Some(run) = s.setup("das_deim", das_deim(&core, &l63, &series, &DVector::zeros(2), 0.01)) {
                    let worst = run
                        .reconstruction
                        .states
                        .iter()
                        .zip(series.samples())
                        .map(|(u, y)| (sensing::observe(u, &sel).expect("sized") - y).norm())
                        .fold(0.0, f64::max);
                    s.within("S^T u~(t_k) = y(t_k)", worst, 1e-8);
                }
            }
        }
    }
    s
}

pub fn experiment_suite(_seed: u64) -> SuiteReport {
    let mut s = SuiteReport::new("cli-experiments");
    for (name, _) in experiment::PRESETS {
        let Some(cfg) = s.setup("preset", experiment::preset(name)) else { continue };
        s.holds("obs_dt = 0.2", cfg.obs_dt == 0.2);
        s.holds("n = 1", cfg.n == 1);
        let expected_noise = if name.contains("noisy") || *name == "lorenz96" { 0.1 } else { 0.0 };
        s.holds("noise std", cfg.noise_std == expected_noise);
        let params = cfg.vector_field().map(|f| f.params()).unwrap_or_default();
        let expected: Vec<(&str, f64)> = if name.starts_with("lorenz63") {
            vec![("sigma", 10.0), ("rho", 28.0), ("beta", 8.0 / 3.0)]
        } else {
            vec![("N", 40.0), ("F", 2.0)]
        };
        s.holds("system parameters", params == expected);
    }
    let small = ExperimentConfig::from_json(
        r#"{"system": "lorenz63", "m": 3, "n": 1, "train_horizon": 10, "test_horizon": 4,
            "spinup": 5, "noise_std": 0.1, "seed": 3, "center": true, "placement_modes": 1}"#,
    );
    if let Some(cfg) = s.setup("config", small) {
        if let (Some(a), Some(b)) = (
            s.setup("run", experiment::run_experiment(&cfg)),
            s.setup("run", experiment::run_experiment(&cfg)),
        ) {
            let ja = serde_json::to_string(&a.summary).unwrap_or_default();
            let jb = serde_json::to_string(&b.summary).unwrap_or_default();
            s.holds("identical summaries", !ja.is_empty() && ja == jb);
        }
    }
    s
}

pub fn run_all(opts: &PropertyOptions) -> PropertiesReport {
    let seed = opts.seed;
    let suites = vec![
        matrix_suite(seed),
        pod_suite(seed, opts.corrupt_basis),
        sensing_suite(seed),
        reconstruction_suite(seed),
        dynamics_suite(seed),
        assimilation_suite(seed),
        experiment_suite(seed),
    ];
    PropertiesReport {
        seed,
        corrupt_basis: opts.corrupt_basis,
        passed: suites.iter().all(|s| s.passed),
        suites,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_a_fresh_seed() {
        for s in [matrix_suite(5), pod_suite(5, false), sensing_suite(5), reconstruction_suite(5)] {
            assert!(s.passed, "{}: {:?}", s.name, s.messages);
            assert!(s.cases > 0);
        }
    }

    #[test]
    fn corrupted_basis_fails_orthonormality() {
        let s = pod_suite(0, true);
        assert!(!s.passed);
        assert!(s.messages.iter().any(|m| m.contains("Phi^T Phi = I")));
    }

    #[test]
    fn report_bookkeeping() {
        let mut s = SuiteReport::new("x");
        s.within("a", 1.0, 2.0);
        s.within("b", 3.0, 2.0);
        s.holds("c", true);
        s.within("d", f64::NAN, 1.0);
        assert_eq!((s.cases, s.failures, s.passed), (4, 2, false));
        assert_eq!(s.worst_ratio, f64::INFINITY);
        let mut t = SuiteReport::new("y");
        t.absorb(s);
        assert_eq!(t.failures, 2);
        assert!(t.messages[0].starts_with("x: "));
    }
}
