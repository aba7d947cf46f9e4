//! Kernel ODE driven by an observation time series, error series, and the
//! one-sided Lipschitz constant of linear fields.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{step_count, Rk4, Trajectory, VectorField};
use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix};
use crate::sensing::{self, DeimCore, SensorSelection};

/// Relative tolerance on the spacing of observation times.
pub const SPACING_TOL: f64 = 1e-12;

/// Uniformly spaced measurement vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    times: Vec<f64>,
    samples: Vec<DVector<f64>>,
    dt: f64,
    noise_std: f64,
}

impl ObservationSeries {
    pub fn new(times: Vec<f64>, samples: Vec<DVector<f64>>, noise_std: f64) -> Result<Self> {
        if times.is_empty() || times.len() != samples.len() {
            return Err(Error::dim(format!(
                "{} times for {} samples",
                times.len(),
                samples.len()
            )));
        }
        let width = samples[0].len();
        if width == 0 || samples.iter().any(|y| y.len() != width) {
            return Err(Error::dim("observation samples must share a nonzero width"));
        }
        if times.iter().any(|t| !t.is_finite())
            || samples.iter().any(|y| y.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("observation series".into()));
        }
        let dt = if times.len() > 1 {
            (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
        } else {
            0.0
        };
        if times.len() > 1 && !(dt > 0.0) {
            return Err(Error::Input("observation times must increase".into()));
        }
        for w in times.windows(2) {
            let gap = w[1] - w[0];
            if (gap - dt).abs() > SPACING_TOL * (1.0 + w[1].abs()) {
                return Err(Error::Input(format!(
                    "non-uniform observation spacing {gap} (nominal {dt}) at t = {}",
                    w[0]
                )));
            }
        }
        Ok(ObservationSeries {
            times,
            samples,
            dt,
            noise_std,
        })
    }

    /// `samples[k]` observed at `t0 + k dt`.
    pub fn uniform(t0: f64, dt: f64, samples: Vec<DVector<f64>>) -> Result<Self> {
        let times = (0..samples.len()).map(|k| t0 + k as f64 * dt).collect();
        Self::new(times, samples, 0.0)
    }

    /// Clean measurements `S^T u(t_k)` of every trajectory sample.
    pub fn from_trajectory(traj: &Trajectory, sel: &SensorSelection) -> Result<Self> {
        let samples = traj
            .states
            .iter()
            .map(|u| sensing::observe(u, sel))
            .collect::<Result<Vec<_>>>()?;
        Self::new(traj.times.clone(), samples, 0.0)
    }

    pub(crate) fn with_samples(&self, samples: Vec<DVector<f64>>, noise_std: f64) -> Self {
        ObservationSeries {
            times: self.times.clone(),
            samples,
            dt: self.dt,
            noise_std,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Standard deviation of the noise that has been added, 0 for clean data.
    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn width(&self) -> usize {
        self.samples[0].len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn t_first(&self) -> f64 {
        self.times[0]
    }

    fn t_last(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// `y_k + s (y_{k+1} - y_k)`.
    fn lerp(&self, k: usize, s: f64) -> DVector<f64> {
        if s == 0.0 || k + 1 == self.len() {
            return self.samples[k].clone();
        }
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        a + (b - a) * s
    }
}

/// Piecewise-linear interpolation; no extrapolation.
pub fn interpolate_obs(series: &ObservationSeries, t: f64) -> Result<DVector<f64>> {
    let (lo, hi) = (series.t_first(), series.t_last());
    let slack = SPACING_TOL * (1.0 + t.abs());
    if !(t >= lo - slack && t <= hi + slack) {
        return Err(Error::OutOfRange { value: t, lo, hi });
    }
    let last = series.len() - 1;
    if last == 0 || t >= hi {
        return Ok(series.samples[last].clone());
    }
    if t <= lo {
        return Ok(series.samples[0].clone());
    }
    let times = &series.times;
    let mut k = (((t - lo) / series.dt).floor() as usize).min(last);
    while k > 0 && times[k] > t {
        k -= 1;
    }
    while k < last && times[k + 1] <= t {
        k += 1;
    }
    let s = if k == last {
        0.0
    } else {
        (t - times[k]) / (times[k + 1] - times[k])
    };
    Ok(series.lerp(k, s))
}

fn check_kernel_inputs(core: &DeimCore, f: &dyn VectorField, series: &ObservationSeries) -> Result<()> {
    if f.dim() != core.dim() {
        return Err(Error::dim(format!(
            "vector field of dimension {} for a basis of dimension {}",
            f.dim(),
            core.dim()
        )));
    }
    if series.width() != core.sensors() {
        return Err(Error::dim(format!(
            "observations of width {} for {} sensors",
            series.width(),
            core.sensors()
        )));
    }
    Ok(())
}

/// Buffers for evaluating `Z^T Phi^T f(u~(xi))` without allocation.
struct KernelEval<'a> {
    core: &'a DeimCore,
    f: &'a dyn VectorField,
    u: DVector<f64>,
    fu: DVector<f64>,
}

impl<'a> KernelEval<'a> {
    fn new(core: &'a DeimCore, f: &'a dyn VectorField) -> Self {
        KernelEval {
            core,
            f,
            u: DVector::zeros(core.dim()),
            fu: DVector::zeros(core.dim()),
        }
    }

    /// Writes `u~ = base(y) + Phi Z xi` into `self.u`.
    fn reconstruct(&mut self, y: &DVector<f64>, xi: &[f64]) {
        self.u.copy_from(self.core.base_offset());
        self.u.gemv(1.0, self.core.phi_pinv(), y, 1.0);
        let phi_z = self.core.phi_kernel();
        for (j, &x) in xi.iter().enumerate() {
            self.u.axpy(x, &phi_z.column(j), 1.0);
        }
    }

    fn rhs(&mut self, y: &DVector<f64>, xi: &[f64], out: &mut [f64]) {
        self.reconstruct(y, xi);
        self.f.eval_into(self.u.as_slice(), self.fu.as_mut_slice());
        let phi_z = self.core.phi_kernel();
        for (j, o) in out.iter_mut().enumerate() {
            *o = phi_z.column(j).dot(&self.fu);
        }
    }
}

/// `xi' = Z^T Phi^T f(Phi (S^T Phi)^+ y(t) + Phi Z xi)`.
pub fn kernel_rhs(
    core: &DeimCore,
    f: &dyn VectorField,
    series: &ObservationSeries,
    t: f64,
    xi: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_kernel_inputs(core, f, series)?;
    if core.kernel_dim() == 0 {
        return Err(Error::Input("kernel ODE needs m > n".into()));
    }
    if xi.len() != core.kernel_dim() {
        return Err(Error::dim(format!(
            "xi of length {} for a kernel of dimension {}",
            xi.len(),
            core.kernel_dim()
        )));
    }
    let y = interpolate_obs(series, t)?;
    let mut eval = KernelEval::new(core, f);
    let mut out = DVector::zeros(core.kernel_dim());
    eval.rhs(&y, xi.as_slice(), out.as_mut_slice());
    Ok(out)
}

/// `(time, value)` samples where `None` marks an undefined relative error.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub values: Vec<Option<f64>>,
}

impl ErrorSeries {
    fn defined(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times
            .iter()
            .zip(&self.values)
            .filter_map(|(&t, v)| v.map(|v| (t, v)))
    }

    fn after(&self, fraction: f64) -> impl Iterator<Item = f64> + '_ {
        let (t0, t1) = match (self.times.first(), self.times.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        };
        let cutoff = t0 + fraction * (t1 - t0);
        self.defined().filter(move |&(t, _)| t >= cutoff).map(|(_, v)| v)
    }

    pub fn mean(&self) -> Option<f64> {
        mean(self.defined().map(|(_, v)| v))
    }

    /// Mean over samples at or after `t0 + fraction (t_end - t0)`.
    pub fn post_transient_mean(&self, fraction: f64) -> Option<f64> {
        mean(self.after(fraction))
    }

    pub fn post_transient_min(&self, fraction: f64) -> Option<f64> {
        self.after(fraction).reduce(f64::min)
    }

    pub fn post_transient_max(&self, fraction: f64) -> Option<f64> {
        self.after(fraction).reduce(f64::max)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// `|u~(t_k) - u(t_k)| / |u(t_k)|`; samples with `u(t_k) = 0` are `None`.
pub fn relative_error_series(reconstruction: &Trajectory, truth: &Trajectory) -> Result<ErrorSeries> {
    if reconstruction.len() != truth.len() || reconstruction.dim() != truth.dim() {
        return Err(Error::dim(format!(
            "reconstruction {}x{} against truth {}x{}",
            reconstruction.len(),
            reconstruction.dim(),
            truth.len(),
            truth.dim()
        )));
    }
    for (a, b) in reconstruction.times.iter().zip(&truth.times) {
        if (a - b).abs() > 1e-9 * (1.0 + b.abs()) {
            return Err(Error::Input(format!("time grids differ at {b}")));
        }
    }
    let values = reconstruction
        .states
        .iter()
        .zip(&truth.states)
        .map(|(r, u)| {
            let norm = u.norm();
            (norm > 0.0).then(|| (r - u).norm() / norm)
        })
        .collect();
    Ok(ErrorSeries {
        times: truth.times.clone(),
        values,
    })
}

#[derive(Debug, Clone)]
pub struct AssimilationRun {
    pub times: Vec<f64>,
    pub xi_path: Vec<DVector<f64>>,
    pub reconstruction: Trajectory,
    pub error_series: Option<ErrorSeries>,
}

impl AssimilationRun {
    pub fn with_truth(mut self, truth: &Trajectory) -> Result<Self> {
        self.error_series = Some(relative_error_series(&self.reconstruction, truth)?);
        Ok(self)
    }
}

/// Vanilla DEIM applied at every observation time.
pub fn vanilla_trajectory(core: &DeimCore, series: &ObservationSeries) -> Result<Trajectory> {
    let states = series
        .samples()
        .iter()
        .map(|y| core.base_reconstruction(y))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(series.times().to_vec(), states)
}

/// Integrates the kernel ODE over the observation window with fixed-step RK4
/// of size `dt` (a divisor of the observation spacing) and records
/// `u~(t_k) = Phi (S^T Phi)^+ y(t_k) + Phi Z xi(t_k)` at every observation time.
pub fn das_deim(
    core: &DeimCore,
    f: &dyn VectorField,
    series: &ObservationSeries,
    xi0: &DVector<f64>,
    dt: f64,
) -> Result<AssimilationRun> {
    check_kernel_inputs(core, f, series)?;
    let kdim = core.kernel_dim();
    if xi0.len() != kdim {
        return Err(Error::dim(format!(
            "xi0 of length {} for a kernel of dimension {kdim}",
            xi0.len()
        )));
    }
    let substeps = if series.len() > 1 {
        step_count(series.dt(), dt)?
    } else {
        1
    };
    let h = series.dt() / substeps as f64;

    let mut eval = KernelEval::new(core, f);
    let mut rk = Rk4::new(kdim);
    let mut xi = xi0.as_slice().to_vec();
    let mut xi_path = Vec::with_capacity(series.len());
    let mut states = Vec::with_capacity(series.len());

    let mut record = |xi: &[f64], eval: &mut KernelEval, k: usize| {
        eval.reconstruct(&series.samples()[k], xi);
        xi_path.push(DVector::from_column_slice(xi));
        states.push(eval.u.clone());
    };
    record(&xi, &mut eval, 0);

    for k in 0..series.len() - 1 {
        if kdim > 0 {
            for j in 0..substeps {
                let start = j as f64 * h;
                rk.step(&mut xi, h, |s, x, out| {
                    let y = series.lerp(k, (start + s) / series.dt());
                    eval.rhs(&y, x, out);
                    Ok(())
                })?;
                if xi.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence {
                        last_time: series.times()[k] + start,
                    });
                }
            }
        }
        record(&xi, &mut eval, k + 1);
    }

    Ok(AssimilationRun {
        times: series.times().to_vec(),
        xi_path,
        reconstruction: Trajectory::new(series.times().to_vec(), states)?,
        error_series: None,
    })
}

/// Tolerance for `P^2 = P = P^T`.
pub const PROJECTION_TOL: f64 = 1e-10;

fn check_projection(a: &DenseMatrix, p: &DenseMatrix) -> Result<()> {
    if a.rows() != a.cols() || a.is_empty() {
        return Err(Error::dim("field matrix must be square and nonempty"));
    }
    if p.rows() != a.rows() || p.cols() != a.cols() {
        return Err(Error::dim(format!(
            "projection {}x{} for a {}x{} field",
            p.rows(),
            p.cols(),
            a.rows(),
            a.cols()
        )));
    }
    let p = p.inner();
    let scale = 1.0 + p.norm();
    let idem = (p * p - p).norm();
    let sym = (p - p.transpose()).norm();
    if idem > PROJECTION_TOL * scale || sym > PROJECTION_TOL * scale {
        return Err(Error::Contract(format!(
            "not an orthogonal projection: |P^2 - P| = {idem:e}, |P - P^T| = {sym:e}"
        )));
    }
    Ok(())
}

/// Tight one-sided Lipschitz constant of `g(u) = P A u` on all of `R^N`:
/// the largest eigenvalue of `(P A + A^T P) / 2`.
pub fn one_sided_lipschitz_linear(a: &DenseMatrix, p: &DenseMatrix) -> Result<f64> {
    check_projection(a, p)?;
    let pa = DenseMatrix::new(p.inner() * a.inner())?;
    Ok(matrix::symmetric_eigenvalues(&pa)?[0])
}

/// The same constant restricted to differences in `R[P]`:
/// `max <d, P A d> / |d|^2` over `d in R[P]`. Returns `-inf` for `P = 0`.
///
/// When `P` has a nontrivial null space the unrestricted constant is never
/// negative (any `d` in `N[P]` gives `<d, P A d> = 0`), so a contraction rate
/// can only be read off on the subspace the error actually lives in.
pub fn one_sided_lipschitz_on_range(a: &DenseMatrix, p: &DenseMatrix) -> Result<f64> {
    check_projection(a, p)?;
    let svd = matrix::svd_thin(p)?;
    let rank = svd.s.iter().filter(|&&s| s > 0.5).count();
    if rank == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let q: DMatrix<f64> = svd.u.inner().columns(0, rank).into_owned();
    let restricted = DenseMatrix::new(q.transpose() * a.inner() * &q)?;
    Ok(matrix::symmetric_eigenvalues(&restricted)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{linear_field, Lorenz63};
    use crate::pod::BasisMatrix;
    use crate::sensing::{build_deim_core, qdeim_place};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_basis(rng: &mut ChaCha8Rng, n_dim: usize, m: usize) -> BasisMatrix {
        let g = DMatrix::from_fn(n_dim, m, |_, _| rng.random_range(-1.0..1.0));
        BasisMatrix::new(DenseMatrix::new(g.qr().q()).unwrap(), vec![]).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn scalar_series(values: &[f64], dt: f64) -> ObservationSeries {
        ObservationSeries::uniform(
            0.0,
            dt,
            values.iter().map(|&v| DVector::from_element(1, v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn interpolation_cases() {
        let s = scalar_series(&[0.0, 2.0, 2.0, -1.0], 0.2);
        for (k, &t) in s.times().iter().enumerate() {
            assert_eq!(interpolate_obs(&s, t).unwrap(), s.samples()[k]);
        }
        assert_eq!(interpolate_obs(&s, 0.1).unwrap()[0], 1.0);
        assert_eq!(interpolate_obs(&s, 0.3).unwrap()[0], 2.0);
        assert!(matches!(interpolate_obs(&s, -0.01), Err(Error::OutOfRange { .. })));
        assert!(matches!(interpolate_obs(&s, 0.7), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn series_validation() {
        let y = vec![DVector::zeros(1); 3];
        assert!(ObservationSeries::new(vec![0.0, 0.2, 0.5], y.clone(), 0.0).is_err());
        assert!(ObservationSeries::new(vec![0.0, 0.2], y.clone(), 0.0).is_err());
        assert!(ObservationSeries::new(vec![0.0, 0.2, 0.4], y, 0.0).is_ok());
    }

    fn instance(seed: u64, n_dim: usize, m: usize, n: usize) -> (DeimCore, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = random_basis(&mut rng, n_dim, m);
        let core = build_deim_core(&basis, &qdeim_place(&basis, n).unwrap()).unwrap();
        (core, rng)
    }

    #[test]
    fn zero_field_gives_zero_rhs() {
        let (core, mut rng) = instance(1, 6, 4, 2);
        let f = linear_field(&DenseMatrix::zeros(6, 6)).unwrap();
        let series = ObservationSeries::uniform(0.0, 0.1, vec![random_vec(&mut rng, 2); 3]).unwrap();
        let rhs = kernel_rhs(&core, &f, &series, 0.05, &random_vec(&mut rng, 2)).unwrap();
        assert_eq!(rhs, DVector::zeros(2));
    }

    #[test]
    fn rhs_is_the_instantaneous_least_squares_minimizer() {
        for seed in 0..10 {
            let (core, mut rng) = instance(seed, 6, 4, 2);
            let a = DenseMatrix::new(DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0))).unwrap();
            let f = linear_field(&a).unwrap();
            let samples: Vec<_> = (0..3).map(|_| random_vec(&mut rng, 2)).collect();
            let series = ObservationSeries::uniform(0.0, 0.1, samples).unwrap();
            let (t, xi) = (0.13, random_vec(&mut rng, 2));
            let rhs = kernel_rhs(&core, &f, &series, t, &xi).unwrap();

            // brute force: minimize |Phi (S^T Phi)^+ ydot + Phi Z w - f(u~)| over w
            let ydot = (interpolate_obs(&series, t + 1e-6).unwrap()
                - interpolate_obs(&series, t - 1e-6).unwrap())
                / 2e-6;
            let y = interpolate_obs(&series, t).unwrap();
            let u = core.base_reconstruction(&y).unwrap() + core.phi_kernel() * &xi;
            let target = f.eval(&u) - core.phi_pinv() * ydot;
            let m = core.phi_kernel();
            let w = (m.transpose() * m).lu().solve(&(m.transpose() * target)).unwrap();
            assert!((rhs - w).norm() < 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn rhs_is_affine_for_linear_fields() {
        let (core, mut rng) = instance(3, 7, 5, 2);
        let a = DenseMatrix::new(DMatrix::from_fn(7, 7, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let f = linear_field(&a).unwrap();
        let series = ObservationSeries::uniform(0.0, 0.1, vec![random_vec(&mut rng, 2); 2]).unwrap();
        let (x1, x2) = (random_vec(&mut rng, 3), random_vec(&mut rng, 3));
        let g = |x: &DVector<f64>| kernel_rhs(&core, &f, &series, 0.05, x).unwrap();
        let lam = 0.3;
        let lhs = g(&(&x1 * lam + &x2 * (1.0 - lam)));
        let rhs = g(&x1) * lam + g(&x2) * (1.0 - lam);
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn rhs_ignores_slopes_between_samples() {
        let (core, mut rng) = instance(4, 3, 3, 1);
        let f = Lorenz63::default();
        let a = scalar_series(&[1.0, 2.0, 3.0], 0.5);
        let fine: Vec<f64> = (0..=20).map(|k| if k % 10 == 0 { 1.0 + (k / 10) as f64 } else { 40.0 * (k as f64).sin() }).collect();
        let b = scalar_series(&fine, 0.05);
        let xi = random_vec(&mut rng, 2);
        for &t in &[0.0, 0.5, 1.0] {
            assert_eq!(
                kernel_rhs(&core, &f, &a, t, &xi).unwrap(),
                kernel_rhs(&core, &f, &b, t, &xi).unwrap()
            );
        }
    }

    #[test]
    fn square_case_is_vanilla_at_every_time() {
        let (core, mut rng) = instance(5, 3, 3, 3);
        let samples: Vec<_> = (0..5).map(|_| random_vec(&mut rng, 3)).collect();
        let series = ObservationSeries::uniform(0.0, 0.2, samples).unwrap();
        let run = das_deim(&core, &Lorenz63::default(), &series, &DVector::zeros(0), 0.01).unwrap();
        assert_eq!(run.reconstruction, vanilla_trajectory(&core, &series).unwrap());
    }

    #[test]
    fn das_deim_step_must_divide_spacing() {
        let (core, mut rng) = instance(6, 3, 3, 1);
        let series = ObservationSeries::uniform(0.0, 0.2, vec![random_vec(&mut rng, 1); 4]).unwrap();
        assert!(das_deim(&core, &Lorenz63::default(), &series, &DVector::zeros(2), 0.03).is_err());
        assert!(das_deim(&core, &Lorenz63::default(), &series, &DVector::zeros(1), 0.01).is_err());
    }

    #[test]
    fn relative_error_cases() {
        let u = Trajectory::new(
            vec![0.0, 1.0, 2.0],
            vec![DVector::from_vec(vec![1.0, 2.0]), DVector::zeros(2), DVector::from_vec(vec![-3.0, 0.5])],
        )
        .unwrap();
        let same = relative_error_series(&u, &u).unwrap();
        assert_eq!(same.values, vec![Some(0.0), None, Some(0.0)]);
        let double = Trajectory::new(u.times.clone(), u.states.iter().map(|s| s * 2.0).collect()).unwrap();
        let zero = Trajectory::new(u.times.clone(), vec![DVector::zeros(2); 3]).unwrap();
        for rec in [double, zero] {
            let e = relative_error_series(&rec, &u).unwrap();
            assert_eq!(e.values, vec![Some(1.0), None, Some(1.0)]);
            assert_eq!(e.mean(), Some(1.0));
        }
    }

    #[test]
    fn post_transient_statistics() {
        let e = ErrorSeries {
            times: (0..5).map(f64::from).collect(),
            values: vec![Some(10.0), Some(5.0), Some(1.0), None, Some(3.0)],
        };
        assert_eq!(e.post_transient_mean(0.25), Some(3.0));
        assert_eq!(e.post_transient_min(0.25), Some(1.0));
        assert_eq!(e.post_transient_max(0.25), Some(5.0));
        assert_eq!(e.mean(), Some(4.75));
    }

    #[test]
    fn lipschitz_examples() {
        let i3 = DenseMatrix::identity(3);
        let neg = DenseMatrix::new(-DMatrix::<f64>::identity(3, 3)).unwrap();
        assert!((one_sided_lipschitz_linear(&neg, &i3).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(one_sided_lipschitz_linear(&i3, &DenseMatrix::zeros(3, 3)).unwrap(), 0.0);
        assert_eq!(one_sided_lipschitz_on_range(&i3, &DenseMatrix::zeros(3, 3)).unwrap(), f64::NEG_INFINITY);
        let not_proj = DenseMatrix::from_diagonal(&[1.0, 0.5, 0.0]).unwrap();
        assert!(matches!(one_sided_lipschitz_linear(&i3, &not_proj), Err(Error::Contract(_))));
    }

    #[test]
    fn lipschitz_bounds_sampled_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let a = DenseMatrix::new(DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0))).unwrap();
            let q = random_basis(&mut rng, 6, 3);
            let p = DenseMatrix::new(q.phi().inner() * q.phi().inner().transpose()).unwrap();
            let rho = one_sided_lipschitz_linear(&a, &p).unwrap();
            let rho_range = one_sided_lipschitz_on_range(&a, &p).unwrap();
            assert!(rho >= 0.0);
            assert!(rho_range <= rho + 1e-12);
            let pa = p.inner() * a.inner();
            for _ in 0..1000 {
                let d = random_vec(&mut rng, 6) - random_vec(&mut rng, 6);
                assert!(d.dot(&(&pa * &d)) <= (rho + 1e-9) * d.norm_squared());
                let dr = p.inner() * &d;
                assert!(dr.dot(&(&pa * &dr)) <= (rho_range + 1e-9) * dr.norm_squared());
            }
        }
    }
}
