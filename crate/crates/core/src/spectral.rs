//! Imaginary-time spectra.
//!
//! Convention: `F[f](ξ) = (1/√(2π)) ∫ f(τ) e^{-iξτ} dτ`, approximated by a windowed DFT over
//! `[0, T)` and calibrated per line: a sampled tone `a e^{iλτ}` with `λ` on the grid gives a
//! single bin of amplitude `a` at `ξ = λ`. The `√(2π)` of a continuous Dirac comb is absorbed
//! into that calibration.

use num_traits::Zero;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::scalar::{Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Rectangular,
    /// Periodic Hann, `w_k = (1 - cos(2πk/N)) / 2`.
    Hann,
}

impl Window {
    pub fn weights<T: Real>(self, n: usize) -> Vec<T> {
        match self {
            Window::Rectangular => vec![T::one(); n],
            Window::Hann => (0..n)
                .map(|k| {
                    let x = T::TAU() * T::from_usize_lossy(k) / T::from_usize_lossy(n);
                    T::lit(0.5) - T::lit(0.5) * x.cos()
                })
                .collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Rectangular => "rectangular",
            Window::Hann => "hann",
        }
    }
}

/// Offset removed from the samples before the transform.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Detrend<T> {
    #[default]
    None,
    /// Window-weighted mean, so the `ξ = 0` bin vanishes.
    Mean,
    /// Full fixed-point state; the selected component is subtracted.
    FixedPoint(Vec<C<T>>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralLine<T> {
    pub xi: T,
    pub amplitude: C<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate<T> {
    pub component: usize,
    /// `ξ_m = m Δξ` for `m = -N/2 .. N/2 - 1`.
    pub frequencies: Vec<T>,
    pub amplitudes: Vec<C<T>>,
    pub window: Window,
    /// Sample span `T = N Δτ`.
    pub span: T,
    pub delta_xi: T,
    pub detrend_offset: C<T>,
}

impl<T: Real> SpectrumEstimate<T> {
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Index of the bin at `ξ = 0`.
    pub fn zero_bin(&self) -> usize {
        self.len() / 2
    }

    /// Bin nearest to `xi`, if it lies on the grid.
    pub fn bin_of(&self, xi: T) -> Option<usize> {
        let m = (xi / self.delta_xi).round().to_f64_lossy() as i64 + self.zero_bin() as i64;
        (m >= 0 && (m as usize) < self.len()).then_some(m as usize)
    }

    pub fn amplitude_at(&self, xi: T) -> Option<C<T>> {
        self.bin_of(xi).map(|m| self.amplitudes[m])
    }

    pub fn total_energy(&self) -> T {
        self.amplitudes
            .iter()
            .fold(T::zero(), |acc, a| acc + a.norm_sqr())
            * self.delta_xi
    }
}

/// Spectrum of one component of a trajectory sampled uniformly along an imaginary ray.
pub fn dft_spectrum<T: Real>(
    trajectory: &Trajectory<T>,
    component: usize,
    window: Window,
    detrend: &Detrend<T>,
) -> Result<SpectrumEstimate<T>> {
    let n = trajectory.len();
    if component >= trajectory.dim() {
        return Err(Error::InvalidInput(format!("component {component} out of range")));
    }
    if n < 2 {
        return Err(Error::NonUniformSampling);
    }
    let t0 = trajectory.times[0];
    let dt = trajectory.times[1].im - t0.im;
    let tol = T::lit(1e-12);
    if !(dt > T::zero()) {
        return Err(Error::NonUniformSampling);
    }
    for (k, t) in trajectory.times.iter().enumerate() {
        let expected = t0.im + dt * T::from_usize_lossy(k);
        let scale = expected.abs().max(dt);
        if t.re != t0.re || (t.im - expected).abs() > tol * scale {
            return Err(Error::NonUniformSampling);
        }
    }
    let samples = trajectory.component(component);
    let offset = match detrend {
        Detrend::FixedPoint(fp) => Some(
            *fp.get(component)
                .ok_or_else(|| Error::InvalidInput("fixed point has the wrong dimension".into()))?,
        ),
        _ => None,
    };
    let mut spec = dft_samples(&samples, dt, window, detrend, offset)?;
    spec.component = component;
    Ok(spec)
}

/// Spectrum of raw samples `f(k Δτ)`, `k = 0..N`. `offset` is only read for
/// [`Detrend::FixedPoint`].
pub fn dft_samples<T: Real>(
    samples: &[C<T>],
    delta_tau: T,
    window: Window,
    detrend: &Detrend<T>,
    offset: Option<C<T>>,
) -> Result<SpectrumEstimate<T>> {
    let n = samples.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::LengthNotPowerOfTwo(n));
    }
    if !(delta_tau > T::zero() && delta_tau.is_finite()) {
        return Err(Error::NonUniformSampling);
    }
    let w: Vec<T> = window.weights(n);
    let wsum = w.iter().fold(T::zero(), |a, &b| a + b);
    let detrend_offset = match detrend {
        Detrend::None => C::zero(),
        Detrend::Mean => samples
            .iter()
            .zip(&w)
            .fold(C::zero(), |acc, (&f, &wk)| acc + f * wk)
            / wsum,
        Detrend::FixedPoint(_) => offset.unwrap_or_else(C::zero),
    };
    let mut buf: Vec<C<T>> = samples
        .iter()
        .zip(&w)
        .map(|(&f, &wk)| (f - detrend_offset) * wk)
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let span = delta_tau * T::from_usize_lossy(n);
    let delta_xi = T::TAU() / span;
    let half = n / 2;
    let mut frequencies = Vec::with_capacity(n);
    let mut amplitudes = Vec::with_capacity(n);
    for idx in 0..n {
        // idx 0 holds m = -N/2
        let m = idx as i64 - half as i64;
        let bin = m.rem_euclid(n as i64) as usize;
        frequencies.push(delta_xi * T::lit(m as f64));
        amplitudes.push(buf[bin] / wsum);
    }
    Ok(SpectrumEstimate {
        component: 0,
        frequencies,
        amplitudes,
        window,
        span,
        delta_xi,
        detrend_offset,
    })
}

/// Local maxima of `|a|` above `rel_threshold * max |a|`, with quadratic refinement over
/// three bins. Sorted by magnitude, then by `|ξ|`.
pub fn detect_peaks<T: Real>(spectrum: &SpectrumEstimate<T>, rel_threshold: T) -> Vec<SpectralLine<T>> {
    let n = spectrum.len();
    if n == 0 {
        return Vec::new();
    }
    let mag: Vec<T> = spectrum.amplitudes.iter().map(|a| a.norm()).collect();
    let max = mag.iter().fold(T::zero(), |a, &b| a.max(b));
    if max == T::zero() {
        return Vec::new();
    }
    let floor = rel_threshold * max;
    let mut peaks = Vec::new();
    for m in 0..n {
        let y0 = mag[m];
        if y0 <= floor {
            continue;
        }
        let (ym, yp) = if n == 1 {
            (T::zero(), T::zero())
        } else {
            (mag[(m + n - 1) % n], mag[(m + 1) % n])
        };
        if !(y0 > ym && y0 >= yp) {
            continue;
        }
        let denom = ym - T::lit(2.0) * y0 + yp;
        let delta = if denom < T::zero() {
            (T::lit(0.5) * (ym - yp) / denom).max(T::lit(-0.5)).min(T::lit(0.5))
        } else {
            T::zero()
        };
        let height = y0 - T::lit(0.25) * (ym - yp) * delta;
        let phase = spectrum.amplitudes[m] / y0;
        peaks.push(SpectralLine {
            xi: spectrum.frequencies[m] + delta * spectrum.delta_xi,
            amplitude: phase * height,
        });
    }
    // magnitudes equal to 12 digits count as ties
    let key = |l: &SpectralLine<T>| (l.amplitude.norm() / max * T::lit(1e12)).round().to_f64_lossy() as i64;
    peaks.sort_by(|a, b| {
        key(b)
            .cmp(&key(a))
            .then(a.xi.abs().partial_cmp(&b.xi.abs()).unwrap_or(std::cmp::Ordering::Equal))
    });
    peaks
}

/// `Σ |a_m|² Δξ` over bins with `ξ_lo ≤ |ξ_m| ≤ ξ_hi`.
pub fn band_energy<T: Real>(spectrum: &SpectrumEstimate<T>, xi_lo: T, xi_hi: T) -> T {
    energy_where(spectrum, |x| x >= xi_lo && x <= xi_hi)
}

pub(crate) fn energy_where<T: Real>(spectrum: &SpectrumEstimate<T>, keep: impl Fn(T) -> bool) -> T {
    spectrum
        .frequencies
        .iter()
        .zip(&spectrum.amplitudes)
        .filter(|(xi, _)| keep(xi.abs()))
        .fold(T::zero(), |acc, (_, a)| acc + a.norm_sqr())
        * spectrum.delta_xi
}

/// Smallest grid radius `λ` with at most `tail_fraction` of the energy outside `[-λ, λ]`.
pub fn estimate_support<T: Real>(spectrum: &SpectrumEstimate<T>, tail_fraction: T) -> Result<T> {
    estimate_support_union(std::slice::from_ref(spectrum), tail_fraction)
}

/// Support of the full-state spectrum: the per-bin energy is summed over components, which
/// must share one frequency grid.
pub fn estimate_support_union<T: Real>(spectra: &[SpectrumEstimate<T>], tail_fraction: T) -> Result<T> {
    let first = spectra.first().ok_or(Error::ZeroSignal)?;
    let n = first.len();
    if spectra.iter().any(|s| s.len() != n || s.delta_xi != first.delta_xi) {
        return Err(Error::InvalidInput("spectra must share a frequency grid".into()));
    }
    let half = n / 2;
    // energy by |m|, m = 0..=N/2
    let mut radial = vec![T::zero(); half + 1];
    for s in spectra {
        for (idx, a) in s.amplitudes.iter().enumerate() {
            let r = (idx as i64 - half as i64).unsigned_abs() as usize;
            radial[r] = radial[r] + a.norm_sqr();
        }
    }
    let total = radial.iter().fold(T::zero(), |a, &b| a + b);
    if !(total > T::zero()) {
        return Err(Error::ZeroSignal);
    }
    let budget = tail_fraction * total;
    let mut outside = total;
    for (r, e) in radial.iter().enumerate() {
        outside = outside - *e;
        if outside <= budget {
            return Ok(first.delta_xi * T::from_usize_lossy(r));
        }
    }
    Ok(first.delta_xi * T::from_usize_lossy(half))
}
