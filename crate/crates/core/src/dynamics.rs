//! Vector fields and fixed-step classical RK4.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Autonomous right-hand side `du/dt = f(u)`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, u: &[f64], out: &mut [f64]);
    fn params(&self) -> Vec<(&'static str, f64)>;
    fn name(&self) -> &'static str;

    fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.eval_into(u.as_slice(), out.as_mut_slice());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz63 {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for Lorenz63 {
    fn default() -> Self {
        Lorenz63 {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

pub fn lorenz63(sigma: f64, rho: f64, beta: f64) -> Lorenz63 {
    Lorenz63 { sigma, rho, beta }
}

impl VectorField for Lorenz63 {
    fn dim(&self) -> usize {
        3
    }

    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * (u[1] - u[0]);
        out[1] = u[0] * (self.rho - u[2]) - u[1];
        out[2] = u[0] * u[1] - self.beta * u[2];
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![("sigma", self.sigma), ("rho", self.rho), ("beta", self.beta)]
    }

    fn name(&self) -> &'static str {
        "lorenz63"
    }
}

/// Periodic Lorenz96 ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz96 {
    n: usize,
    pub forcing: f64,
}

pub fn lorenz96(n: usize, forcing: f64) -> Result<Lorenz96> {
    if n < 4 {
        return Err(Error::Input(format!("Lorenz96 needs N >= 4, got {n}")));
    }
    Ok(Lorenz96 { n, forcing })
}

impl Default for Lorenz96 {
    fn default() -> Self {
        Lorenz96 { n: 40, forcing: 2.0 }
    }
}

impl VectorField for Lorenz96 {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let next = u[(i + 1) % n];
            let prev = u[(i + n - 1) % n];
            let prev2 = u[(i + n - 2) % n];
            out[i] = (next - prev2) * prev - u[i] + self.forcing;
        }
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![("N", self.n as f64), ("F", self.forcing)]
    }

    fn name(&self) -> &'static str {
        "lorenz96"
    }
}

/// `f(u) = A u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearField {
    a: DMatrix<f64>,
}

pub fn linear_field(a: &DenseMatrix) -> Result<LinearField> {
    if a.rows() != a.cols() || a.is_empty() {
        return Err(Error::dim(format!(
            "linear field needs a nonempty square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(LinearField {
        a: a.inner().clone(),
    })
}

impl LinearField {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.a.nrows();
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..n).map(|j| self.a[(i, j)] * u[j]).sum();
        }
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        Vec::new()
    }

    fn name(&self) -> &'static str {
        "linear"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<DVector<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::dim(format!(
                "{} times for {} states",
                times.len(),
                states.len()
            )));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Input(format!(
                "times not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        let n = states[0].len();
        for (t, s) in times.iter().zip(&states) {
            if s.len() != n {
                return Err(Error::dim(format!("state at t = {t} has length {}", s.len())));
            }
            if !t.is_finite() || s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("trajectory sample at t = {t}")));
            }
        }
        Ok(Trajectory { times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectories are nonempty")
    }
}

/// Scratch space for classical RK4 on `y' = g(t, y)`.
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(n: usize) -> Self {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// One step; `rhs(s, y, out)` receives the stage offset `s` in `[0, h]`.
    pub(crate) fn step<G>(&mut self, y: &mut [f64], h: f64, mut rhs: G) -> Result<()>
    where
        G: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let half = 0.5 * h;
        rhs(0.0, y, &mut self.k1)?;
        for i in 0..y.len() {
            self.tmp[i] = y[i] + half * self.k1[i];
        }
        rhs(half, &self.tmp, &mut self.k2)?;
        for i in 0..y.len() {
            self.tmp[i] = y[i] + half * self.k2[i];
        }
        rhs(half, &self.tmp, &mut self.k3)?;
        for i in 0..y.len() {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        rhs(h, &self.tmp, &mut self.k4)?;
        let sixth = h / 6.0;
        for i in 0..y.len() {
            y[i] += sixth * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        Ok(())
    }
}

/// Number of steps of size `dt` in `span`; `span` must be a whole multiple of
/// `dt` up to rounding.
pub(crate) fn step_count(span: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) || !(span > 0.0 && span.is_finite()) {
        return Err(Error::Input(format!("need span > 0 and dt > 0, got {span} and {dt}")));
    }
    let steps = (span / dt).round();
    if (steps * dt - span).abs() > 1e-9 * span.max(dt) || steps < 1.0 {
        return Err(Error::Input(format!("step {dt} does not divide {span}")));
    }
    Ok(steps as usize)
}

/// Fixed-step RK4 from `t = 0`; records `t = 0`, every `record_every` steps,
/// and `t_end`.
pub fn integrate(
    f: &dyn VectorField,
    u0: &DVector<f64>,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<Trajectory> {
    if u0.len() != f.dim() {
        return Err(Error::dim(format!(
            "initial state of length {} for a field of dimension {}",
            u0.len(),
            f.dim()
        )));
    }
    if record_every == 0 {
        return Err(Error::Input("record_every must be >= 1".into()));
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    let steps = step_count(t_end, dt)?;
    let mut rk = Rk4::new(f.dim());
    let mut y = u0.as_slice().to_vec();
    let mut times = vec![0.0];
    let mut states = vec![u0.clone()];
    for k in 1..=steps {
        rk.step(&mut y, dt, |_, u, out| {
            f.eval_into(u, out);
            Ok(())
        })?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                last_time: (k - 1) as f64 * dt,
            });
        }
        if k % record_every == 0 || k == steps {
            times.push(if k == steps { t_end } else { k as f64 * dt });
            states.push(DVector::from_column_slice(&y));
        }
    }
    Ok(Trajectory { times, states })
}
