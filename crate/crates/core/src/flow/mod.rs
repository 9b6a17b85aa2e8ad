//! Holomorphic flows in complex time: paths, imaginary rays, sampled Riemann surfaces and
//! the first variational equation.

mod dopri;

use rayon::prelude::*;

pub use dopri::StepStats;
use dopri::{integrate_line, FailureKind, LineFailure};

use crate::error::{Error, Result};
use crate::linalg::{expm, CMatrix};
use crate::models::{HolomorphicField, ModelSpec};
use crate::scalar::{Real, C};

/// A point `t = re + i im` of the complex time plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplexTimePoint<T> {
    pub re: T,
    pub im: T,
}

impl<T: Real> ComplexTimePoint<T> {
    pub fn new(re: T, im: T) -> Self {
        Self { re, im }
    }

    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn imaginary(im: T) -> Self {
        Self::new(T::zero(), im)
    }

    pub fn real(re: T) -> Self {
        Self::new(re, T::zero())
    }

    pub fn to_complex(self) -> C<T> {
        C::new(self.re, self.im)
    }

    pub fn from_complex(z: C<T>) -> Self {
        Self::new(z.re, z.im)
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Integrator settings. `h_min` is the step size below which a singularity is declared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    pub rtol: T,
    pub atol: T,
    pub h_min: T,
    pub max_steps: usize,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        // rtol 1e-9 / atol 1e-12 in double precision, a few ulps above epsilon otherwise
        let eps = T::epsilon();
        Self {
            rtol: T::lit(1e-9).max(eps * T::lit(64.0)),
            atol: T::lit(1e-12).max(eps * T::lit(1e-2)),
            h_min: T::lit(1e-12),
            max_steps: 2_000_000,
        }
    }
}

impl<T: Real> Tolerances<T> {
    pub fn with_rtol(mut self, rtol: T) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn with_atol(mut self, atol: T) -> Self {
        self.atol = atol;
        self
    }

    /// Tighter settings for the real-time leg of a surface row. Backward real time
    /// amplifies local errors by up to `exp(|Re λ_fast| |τ₁|)`, which the imaginary legs
    /// then carry unchanged.
    fn for_real_leg(&self) -> Self {
        let eps = T::epsilon();
        Self {
            rtol: (self.rtol * T::lit(1e-3)).max(eps * T::lit(64.0)),
            atol: (self.atol * T::lit(1e-3)).max(T::min_positive_value()),
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rtol > T::zero() && self.atol > T::zero() && self.h_min > T::zero()) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Piecewise-linear path through complex time starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePath<T> {
    vertices: Vec<ComplexTimePoint<T>>,
    samples_per_segment: usize,
}

impl<T: Real> TimePath<T> {
    pub fn new(vertices: Vec<ComplexTimePoint<T>>, samples_per_segment: usize) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::InvalidInput("path needs at least one vertex".into()));
        };
        if *first != ComplexTimePoint::origin() {
            return Err(Error::InvalidInput("path must start at t = 0".into()));
        }
        if samples_per_segment == 0 {
            return Err(Error::InvalidInput("samples_per_segment must be positive".into()));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("path vertices must be finite".into()));
        }
        if vertices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("consecutive path vertices must differ".into()));
        }
        Ok(Self {
            vertices,
            samples_per_segment,
        })
    }

    /// Straight path `0 -> end`.
    pub fn line(end: ComplexTimePoint<T>, samples: usize) -> Result<Self> {
        if end == ComplexTimePoint::origin() {
            return Self::new(vec![end], samples.max(1));
        }
        Self::new(vec![ComplexTimePoint::origin(), end], samples)
    }

    pub fn vertices(&self) -> &[ComplexTimePoint<T>] {
        &self.vertices
    }

    pub fn samples_per_segment(&self) -> usize {
        self.samples_per_segment
    }
}

/// Solution samples along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<ComplexTimePoint<T>>,
    pub states: Vec<Vec<C<T>>>,
    pub step_stats: StepStats<T>,
}

impl<T: Real> Trajectory<T> {
    /// Wraps externally generated samples, e.g. synthetic test signals.
    pub fn from_samples(times: Vec<ComplexTimePoint<T>>, states: Vec<Vec<C<T>>>) -> Result<Self> {
        if times.len() != states.len() || times.is_empty() {
            return Err(Error::InvalidInput("times and states must be nonempty and of equal length".into()));
        }
        let n = states[0].len();
        if states.iter().any(|s| s.len() != n) {
            return Err(Error::InvalidInput("states must share one dimension".into()));
        }
        Ok(Self {
            times,
            states,
            step_stats: StepStats::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn component(&self, j: usize) -> Vec<C<T>> {
        self.states.iter().map(|s| s[j]).collect()
    }

    pub fn last_state(&self) -> &[C<T>] {
        self.states.last().expect("trajectory is nonempty")
    }
}

fn failure_to_error<T: Real>(origin: C<T>, dir: C<T>, f: &LineFailure<T>) -> Error {
    let t = origin + dir * f.furthest;
    let (re, im) = (t.re.to_f64_lossy(), t.im.to_f64_lossy());
    match f.kind {
        FailureKind::Singularity => Error::SingularityEncountered { re, im },
        FailureKind::StepBudget => Error::ToleranceNotMet { re, im },
    }
}

fn check_initial<T: Real>(model: &ModelSpec<T>, z0: &[C<T>]) -> Result<()> {
    if z0.len() != model.dim() {
        return Err(Error::InvalidInput(format!(
            "initial state has {} components, model needs {}",
            z0.len(),
            model.dim()
        )));
    }
    if model.singular_locus_test(z0) {
        return Err(Error::SingularState {
            model: model.name().to_string(),
        });
    }
    Ok(())
}

/// Integrates along every segment of `path`, sampling each at equally spaced arc lengths.
pub fn integrate_path<T: Real>(
    model: &ModelSpec<T>,
    z0: &[C<T>],
    path: &TimePath<T>,
    tol: &Tolerances<T>,
) -> Result<Trajectory<T>> {
    check_initial(model, z0)?;
    tol.validate()?;
    integrate_path_field(model, z0, path, tol)
}

fn integrate_path_field<T: Real, F: HolomorphicField<T> + ?Sized>(
    field: &F,
    z0: &[C<T>],
    path: &TimePath<T>,
    tol: &Tolerances<T>,
) -> Result<Trajectory<T>> {
    let m = path.samples_per_segment;
    let mut times = vec![path.vertices[0]];
    let mut states = vec![z0.to_vec()];
    let mut stats = StepStats::default();
    let mut z = z0.to_vec();
    for w in path.vertices.windows(2) {
        let (a, b) = (w[0].to_complex(), w[1].to_complex());
        let delta = b - a;
        let len = delta.norm();
        let dir = delta / len;
        let outputs: Vec<T> = (1..=m)
            .map(|j| len * T::from_usize_lossy(j) / T::from_usize_lossy(m))
            .collect();
        let sol = integrate_line(field, &z, dir, &outputs, tol).map_err(|f| failure_to_error(a, dir, &f))?;
        stats.merge(&sol.stats);
        for (j, s) in (1..=m).zip(sol.states) {
            let frac = T::from_usize_lossy(j) / T::from_usize_lossy(m);
            times.push(ComplexTimePoint::from_complex(a + delta * frac));
            states.push(s);
        }
        z.clone_from(states.last().expect("segment produced samples"));
    }
    Ok(Trajectory {
        times,
        states,
        step_stats: stats,
    })
}

/// Samples `z(i tau)` at `n_samples` equally spaced `tau` in `[0, tau_max]`.
pub fn integrate_imaginary_ray<T: Real>(
    model: &ModelSpec<T>,
    z0: &[C<T>],
    tau_max: T,
    n_samples: usize,
    tol: &Tolerances<T>,
) -> Result<Trajectory<T>> {
    if !(tau_max > T::zero() && tau_max.is_finite()) {
        return Err(Error::InvalidInput("tau_max must be positive and finite".into()));
    }
    if n_samples < 2 {
        return Err(Error::InvalidInput("an imaginary ray needs at least two samples".into()));
    }
    let path = TimePath::line(ComplexTimePoint::imaginary(tau_max), n_samples - 1)?;
    integrate_path(model, z0, &path, tol)
}

/// Trajectory samples over the rectangle `re_range x im_range` of complex time.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid<T> {
    pub re_range: (T, T),
    pub im_range: (T, T),
    /// `(n_re, n_im)`
    pub shape: (usize, usize),
    pub dim: usize,
    /// `n_re * n_im * dim` values, row-major over `(re, im)`; NaN where masked.
    pub values: Vec<C<T>>,
    pub mask: Vec<bool>,
}

fn grid_coord<T: Real>(range: (T, T), n: usize, i: usize) -> T {
    if n == 1 {
        return range.0;
    }
    if i + 1 == n {
        return range.1;
    }
    range.0 + (range.1 - range.0) * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1)
}

impl<T: Real> SurfaceGrid<T> {
    pub fn re_coord(&self, i: usize) -> T {
        grid_coord(self.re_range, self.shape.0, i)
    }

    pub fn im_coord(&self, j: usize) -> T {
        grid_coord(self.im_range, self.shape.1, j)
    }

    pub fn time(&self, i: usize, j: usize) -> ComplexTimePoint<T> {
        ComplexTimePoint::new(self.re_coord(i), self.im_coord(j))
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.shape.1 + j]
    }

    pub fn value(&self, i: usize, j: usize) -> &[C<T>] {
        let k = (i * self.shape.1 + j) * self.dim;
        &self.values[k..k + self.dim]
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Samples the Riemann surface over a rectangle containing `t = 0`.
///
/// Each row integrates `0 -> re` along the real axis, then up and down the imaginary
/// direction through the grid. A singularity masks the rest of the affected ray only.
pub fn sample_surface<T: Real>(
    model: &ModelSpec<T>,
    z0: &[C<T>],
    re_range: (T, T),
    im_range: (T, T),
    shape: (usize, usize),
    tol: &Tolerances<T>,
) -> Result<SurfaceGrid<T>> {
    check_initial(model, z0)?;
    tol.validate()?;
    let finite = [re_range.0, re_range.1, im_range.0, im_range.1]
        .iter()
        .all(|x| x.is_finite());
    if !finite || re_range.0 > re_range.1 || im_range.0 > im_range.1 {
        return Err(Error::InvalidInput("grid ranges must be finite and ordered".into()));
    }
    let (n_re, n_im) = shape;
    if n_re == 0 || n_im == 0 {
        return Err(Error::InvalidInput("grid shape must be positive".into()));
    }
    if (n_re == 1 && re_range.0 != re_range.1) || (n_im == 1 && im_range.0 != im_range.1) {
        return Err(Error::InvalidInput("a single grid line needs a degenerate range".into()));
    }
    let zero = T::zero();
    if re_range.0 > zero || re_range.1 < zero || im_range.0 > zero || im_range.1 < zero {
        return Err(Error::AnchorOutsideGrid);
    }
    let n = model.dim();
    let rows: Vec<(Vec<C<T>>, Vec<bool>)> = (0..n_re)
        .into_par_iter()
        .map(|i| surface_row(model, z0, grid_coord(re_range, n_re, i), im_range, n_im, tol))
        .collect();
    let mut values = Vec::with_capacity(n_re * n_im * n);
    let mut mask = Vec::with_capacity(n_re * n_im);
    for (v, m) in rows {
        values.extend(v);
        mask.extend(m);
    }
    Ok(SurfaceGrid {
        re_range,
        im_range,
        shape,
        dim: n,
        values,
        mask,
    })
}

fn surface_row<T: Real>(
    model: &ModelSpec<T>,
    z0: &[C<T>],
    re: T,
    im_range: (T, T),
    n_im: usize,
    tol: &Tolerances<T>,
) -> (Vec<C<T>>, Vec<bool>) {
    let n = model.dim();
    let nan = C::new(T::nan(), T::nan());
    let mut values = vec![nan; n_im * n];
    let mut mask = vec![false; n_im];

    let anchor = if re == T::zero() {
        Some(z0.to_vec())
    } else {
        let dir = C::new(re.signum(), T::zero());
        integrate_line(model, z0, dir, &[re.abs()], &tol.for_real_leg())
            .ok()
            .and_then(|s| s.states.into_iter().next())
    };
    let Some(anchor) = anchor else {
        return (values, mask);
    };

    let ims: Vec<T> = (0..n_im).map(|j| grid_coord(im_range, n_im, j)).collect();
    let up: Vec<usize> = (0..n_im).filter(|&j| ims[j] >= T::zero()).collect();
    let down: Vec<usize> = (0..n_im).rev().filter(|&j| ims[j] < T::zero()).collect();
    for (idx, sign) in [(up, T::one()), (down, -T::one())] {
        if idx.is_empty() {
            continue;
        }
        let outputs: Vec<T> = idx.iter().map(|&j| ims[j].abs()).collect();
        let states = match integrate_line(model, &anchor, C::new(T::zero(), sign), &outputs, tol) {
            Ok(sol) => sol.states,
            Err(fail) => fail.states,
        };
        for (&j, s) in idx.iter().zip(states) {
            values[j * n..(j + 1) * n].copy_from_slice(&s);
            mask[j] = true;
        }
    }
    (values, mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState<T> {
    pub w: Vec<C<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariationalMethod {
    /// Frozen Jacobian: `w(i tau) = exp(i tau J(z0)) w0`.
    Linearized,
    /// Co-integrates `(z, w)` with `dw/dtau = i J(z(i tau)) w`.
    Integrated,
}

struct VariationalSystem<'a, T> {
    model: &'a ModelSpec<T>,
}

impl<T: Real> HolomorphicField<T> for VariationalSystem<'_, T> {
    fn dim(&self) -> usize {
        2 * self.model.dim()
    }

    fn eval_into(&self, zw: &[C<T>], out: &mut [C<T>]) {
        let n = self.model.dim();
        let (z, w) = zw.split_at(n);
        let (fz, fw) = out.split_at_mut(n);
        self.model.eval_into(z, fz);
        let j = self.model.jacobian_unchecked(z);
        fw.copy_from_slice(&j.mul_vec(w));
    }

    fn is_singular(&self, zw: &[C<T>]) -> bool {
        self.model.singular_locus_test(&zw[..self.model.dim()])
    }
}

/// Propagates a tangent vector along the imaginary ray `0 -> i tau`.
pub fn propagate_variational<T: Real>(
    model: &ModelSpec<T>,
    z0: &[C<T>],
    tau: T,
    w0: &VariationalState<T>,
    method: VariationalMethod,
    tol: &Tolerances<T>,
) -> Result<VariationalState<T>> {
    check_initial(model, z0)?;
    if w0.w.len() != model.dim() {
        return Err(Error::InvalidInput("tangent vector dimension mismatch".into()));
    }
    if !tau.is_finite() {
        return Err(Error::InvalidInput("tau must be finite".into()));
    }
    if tau == T::zero() {
        return Ok(w0.clone());
    }
    match method {
        VariationalMethod::Linearized => {
            let j = model.eval_jacobian(z0)?;
            let prop = expm(&j.scale(C::new(T::zero(), tau)))?;
            Ok(VariationalState { w: prop.mul_vec(&w0.w) })
        }
        VariationalMethod::Integrated => {
            tol.validate()?;
            let n = model.dim();
            let mut zw = z0.to_vec();
            zw.extend_from_slice(&w0.w);
            let sys = VariationalSystem { model };
            let path = TimePath::line(ComplexTimePoint::imaginary(tau), 1)?;
            let traj = integrate_path_field(&sys, &zw, &path, tol)?;
            Ok(VariationalState {
                w: traj.last_state()[n..].to_vec(),
            })
        }
    }
}

/// Frozen-Jacobian propagator `exp(i tau J)` as a matrix.
pub fn linearized_propagator<T: Real>(model: &ModelSpec<T>, z0: &[C<T>], tau: T) -> Result<CMatrix<T>> {
    let j = model.eval_jacobian(z0)?;
    expm(&j.scale(C::new(T::zero(), tau)))
}

/// Componentwise maximum modulus of the difference of two states.
pub fn max_abs_diff<T: Real>(a: &[C<T>], b: &[C<T>]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).norm()))
}

#[cfg(test)]
mod tests;
