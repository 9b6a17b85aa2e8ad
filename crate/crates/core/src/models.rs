//! Holomorphic vector fields: the model interface and the builtin systems.
//!
//! Three builtins are provided, each addressable by a string id:
//!
//! * `linear`: `z' = A z` for a real diagonalizable `A` given through its eigenpairs,
//! * `davis-skodje`: the two-scale benchmark with an explicit general solution,
//! * `michaelis-menten`: the singularly perturbed enzyme kinetics model.
//!
//! User fields enter through [`CustomField`]; no symbolic continuation is performed, the
//! caller supplies holomorphic formulas directly.

use std::fmt;
use std::sync::Arc;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::{Real, C};

/// Closed-form evaluations closer than this to a pole raise [`Error::SolutionPole`].
pub const DEFAULT_POLE_TOL: f64 = 1e-8;
/// Analytic comb lines below this modulus are dropped.
pub const DEFAULT_AMP_FLOOR: f64 = 1e-12;
/// Hard cap on the number of comb lines returned per component.
pub const DEFAULT_MAX_LINES: usize = 4096;
/// Eigenvector matrices with a larger 1-norm condition number are rejected.
pub const DEFAULT_EIGVEC_COND_BOUND: f64 = 1e12;
/// `|c1|` values within this distance of 1 leave the comb branch undetermined.
pub const BRANCH_TOL: f64 = 1e-9;

/// Anything that can be integrated in complex time.
pub trait HolomorphicField<T: Real>: Send + Sync {
    fn dim(&self) -> usize;
    /// Writes `F(z)` into `out`.
    fn eval_into(&self, z: &[C<T>], out: &mut [C<T>]);
    fn is_singular(&self, z: &[C<T>]) -> bool;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams<T> {
    n: usize,
    matrix: Vec<T>,
    eigenvalues: Vec<T>,
    /// Eigenvectors stored as columns, row-major `n x n`.
    eigenvectors: Vec<T>,
}

impl<T: Real> LinearParams<T> {
    /// Validates `A v^k = lambda_k v^k` and the conditioning of the eigenbasis.
    pub fn new(matrix: Vec<T>, eigenvalues: Vec<T>, eigenvectors: Vec<Vec<T>>) -> Result<Self> {
        Self::with_cond_bound(
            matrix,
            eigenvalues,
            eigenvectors,
            T::lit(DEFAULT_EIGVEC_COND_BOUND),
        )
    }

    pub fn with_cond_bound(
        matrix: Vec<T>,
        eigenvalues: Vec<T>,
        eigenvectors: Vec<Vec<T>>,
        cond_bound: T,
    ) -> Result<Self> {
        let n = eigenvalues.len();
        if n == 0 {
            return Err(Error::InvalidInput("linear model needs at least one eigenvalue".into()));
        }
        if matrix.len() != n * n || eigenvectors.len() != n || eigenvectors.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidInput("linear model dimensions disagree".into()));
        }
        if matrix.iter().chain(&eigenvalues).chain(eigenvectors.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("linear model entries must be finite".into()));
        }
        let mut cols = vec![T::zero(); n * n];
        for (k, v) in eigenvectors.iter().enumerate() {
            for i in 0..n {
                cols[i * n + k] = v[i];
            }
        }
        let a_norm = matrix.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        for (k, v) in eigenvectors.iter().enumerate() {
            let v_norm = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
            if v_norm == T::zero() {
                return Err(Error::InvalidInput(format!("eigenvector {k} is zero")));
            }
            let scale = (a_norm.max(eigenvalues[k].abs()) * v_norm).max(T::min_positive_value());
            for i in 0..n {
                let av = (0..n).fold(T::zero(), |acc, j| acc + matrix[i * n + j] * v[j]);
                let resid = (av - eigenvalues[k] * v[i]).abs();
                if resid > T::lit(1e-10).max(T::epsilon() * T::lit(64.0)) * scale {
                    return Err(Error::InvalidInput(format!(
                        "eigenpair {k} does not satisfy A v = lambda v"
                    )));
                }
            }
        }
        let cond = CMatrix::from_real_rows(n, &cols).cond1();
        if !(cond < cond_bound) {
            return Err(Error::InvalidInput(format!(
                "eigenvector matrix condition number {cond} exceeds bound"
            )));
        }
        Ok(Self {
            n,
            matrix,
            eigenvalues,
            eigenvectors: cols,
        })
    }

    /// `A = diag(eigenvalues)` with the standard basis as eigenvectors.
    pub fn diagonal(eigenvalues: &[T]) -> Result<Self> {
        let n = eigenvalues.len();
        let mut matrix = vec![T::zero(); n * n];
        let mut vecs = vec![vec![T::zero(); n]; n];
        for (i, &l) in eigenvalues.iter().enumerate() {
            matrix[i * n + i] = l;
            vecs[i][i] = T::one();
        }
        Self::new(matrix, eigenvalues.to_vec(), vecs)
    }

    /// Builds `A = V diag(lambda) V^-1` from eigenpairs.
    pub fn from_eigenpairs(eigenvalues: &[T], eigenvectors: Vec<Vec<T>>) -> Result<Self> {
        let n = eigenvalues.len();
        if eigenvectors.len() != n || eigenvectors.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidInput("linear model dimensions disagree".into()));
        }
        let mut cols = vec![T::zero(); n * n];
        for (k, v) in eigenvectors.iter().enumerate() {
            for i in 0..n {
                cols[i * n + k] = v[i];
            }
        }
        let v = CMatrix::from_real_rows(n, &cols);
        let v_inv = v.inverse()?;
        let lam = CMatrix::from_diagonal(
            &eigenvalues.iter().map(|&l| C::new(l, T::zero())).collect::<Vec<_>>(),
        );
        let a = &(&v * &lam) * &v_inv;
        let matrix = a.as_slice().iter().map(|z| z.re).collect();
        Self::new(matrix, eigenvalues.to_vec(), eigenvectors)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &[T] {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// Component `i` of eigenvector `k`.
    pub fn eigenvector_entry(&self, i: usize, k: usize) -> T {
        self.eigenvectors[i * self.n + k]
    }

    pub fn eigenvector(&self, k: usize) -> Vec<T> {
        (0..self.n).map(|i| self.eigenvector_entry(i, k)).collect()
    }

    /// Eigenvectors of the `j` slowest modes (smallest `|lambda|`), the basis of the
    /// `j`-dimensional slow subspace.
    pub fn slow_subspace(&self, j: usize) -> Vec<Vec<T>> {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| {
            self.eigenvalues[a]
                .abs()
                .partial_cmp(&self.eigenvalues[b].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        order.into_iter().take(j).map(|k| self.eigenvector(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DavisSkodjeParams<T> {
    gamma: T,
}

impl<T: Real> DavisSkodjeParams<T> {
    pub fn new(gamma: T) -> Result<Self> {
        if !(gamma > T::one()) || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!("Davis-Skodje needs gamma > 1, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }
}

/// Sign of the linear `z2` term in the second Michaelis-Menten equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FastSign {
    /// `z2' = z1 - z1 z2 + z2`; its critical manifold `z2 = z1/(z1 - 1)` is singular at `z1 = 1`.
    PlusZ2,
    /// `z2' = z1 - z1 z2 - z2`; the critical manifold is then `z2 = z1/(1+z1)`.
    #[default]
    CriticalManifoldConsistent,
}

/// Reading of the denominator of the second-order slow-manifold term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SecondOrderDenominator {
    /// `(2(1+z1))^7`
    #[default]
    Grouped,
    /// `2(1+z1)^7`
    Ungrouped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MichaelisMentenParams<T> {
    gamma: T,
    epsilon: T,
    fast_sign: FastSign,
    denominator: SecondOrderDenominator,
}

impl<T: Real> MichaelisMentenParams<T> {
    pub fn new(gamma: T) -> Result<Self> {
        Self::with_options(gamma, FastSign::default(), SecondOrderDenominator::default())
    }

    pub fn with_options(gamma: T, fast_sign: FastSign, denominator: SecondOrderDenominator) -> Result<Self> {
        if !(gamma > T::one()) || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!("Michaelis-Menten needs gamma > 1, got {gamma}")));
        }
        Ok(Self {
            gamma,
            epsilon: gamma.recip(),
            fast_sign,
            denominator,
        })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn fast_sign(&self) -> FastSign {
        self.fast_sign
    }

    pub fn denominator(&self) -> SecondOrderDenominator {
        self.denominator
    }
}

pub type FieldFn<T> = Arc<dyn Fn(&[C<T>], &mut [C<T>]) + Send + Sync>;
pub type JacobianFn<T> = Arc<dyn Fn(&[C<T>]) -> CMatrix<T> + Send + Sync>;
pub type SingularFn<T> = Arc<dyn Fn(&[C<T>]) -> bool + Send + Sync>;

/// A user supplied holomorphic field and its Jacobian.
#[derive(Clone)]
pub struct CustomField<T> {
    pub dim: usize,
    pub field: FieldFn<T>,
    pub jacobian: JacobianFn<T>,
    pub singular: Option<SingularFn<T>>,
    pub params: Vec<(String, T)>,
}

impl<T> fmt::Debug for CustomField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomField").field("dim", &self.dim).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind<T> {
    Linear(LinearParams<T>),
    DavisSkodje(DavisSkodjeParams<T>),
    MichaelisMenten(MichaelisMentenParams<T>),
    Custom(CustomField<T>),
}

/// Integration constants of a closed-form solution: `(c1, c2)` for Davis-Skodje, the
/// eigenbasis coordinates `alpha_k` for the linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowCoefficients<T> {
    pub c: Vec<C<T>>,
}

/// One Dirac line of an analytic imaginary-time spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticLine<T> {
    pub component: usize,
    pub xi: T,
    pub amplitude: C<T>,
}

/// An immutable model: a holomorphic field with Jacobian and optional closed form.
#[derive(Debug, Clone)]
pub struct ModelSpec<T> {
    name: String,
    kind: ModelKind<T>,
    pole_tol: T,
}

impl<T: Real> ModelSpec<T> {
    pub fn linear(params: LinearParams<T>) -> Self {
        Self::from_kind("linear", ModelKind::Linear(params))
    }

    pub fn davis_skodje(gamma: T) -> Result<Self> {
        Ok(Self::from_kind(
            "davis-skodje",
            ModelKind::DavisSkodje(DavisSkodjeParams::new(gamma)?),
        ))
    }

    pub fn michaelis_menten(params: MichaelisMentenParams<T>) -> Self {
        Self::from_kind("michaelis-menten", ModelKind::MichaelisMenten(params))
    }

    pub fn custom(name: impl Into<String>, field: CustomField<T>) -> Self {
        Self::from_kind(name, ModelKind::Custom(field))
    }

    fn from_kind(name: impl Into<String>, kind: ModelKind<T>) -> Self {
        Self {
            name: name.into(),
            kind,
            pole_tol: T::lit(DEFAULT_POLE_TOL),
        }
    }

    pub fn with_pole_tol(mut self, pole_tol: T) -> Self {
        self.pole_tol = pole_tol;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ModelKind<T> {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ModelKind::Linear(p) => p.dim(),
            ModelKind::DavisSkodje(_) | ModelKind::MichaelisMenten(_) => 2,
            ModelKind::Custom(c) => c.dim,
        }
    }

    /// Named real parameters.
    pub fn params(&self) -> Vec<(String, T)> {
        match &self.kind {
            ModelKind::Linear(p) => p
                .eigenvalues()
                .iter()
                .enumerate()
                .map(|(k, &l)| (format!("lambda{}", k + 1), l))
                .collect(),
            ModelKind::DavisSkodje(p) => vec![("gamma".into(), p.gamma)],
            ModelKind::MichaelisMenten(p) => {
                vec![("gamma".into(), p.gamma), ("epsilon".into(), p.epsilon)]
            }
            ModelKind::Custom(c) => c.params.clone(),
        }
    }

    pub fn has_closed_form(&self) -> bool {
        matches!(self.kind, ModelKind::Linear(_) | ModelKind::DavisSkodje(_))
    }

    pub fn has_sim_graph(&self) -> bool {
        matches!(self.kind, ModelKind::DavisSkodje(_) | ModelKind::MichaelisMenten(_))
    }

    /// Whether the field is undefined at `z` (Davis-Skodje: `z1 = -1`).
    pub fn singular_locus_test(&self, z: &[C<T>]) -> bool {
        match &self.kind {
            ModelKind::DavisSkodje(_) => (z[0] + C::one()).norm() <= T::epsilon() * T::lit(64.0),
            ModelKind::Custom(c) => c.singular.as_ref().is_some_and(|f| f(z)),
            _ => false,
        }
    }

    fn check_state(&self, z: &[C<T>]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "state has {} components, model `{}` needs {}",
                z.len(),
                self.name,
                self.dim()
            )));
        }
        if self.singular_locus_test(z) {
            return Err(Error::SingularState { model: self.name.clone() });
        }
        Ok(())
    }

    pub fn eval_field(&self, z: &[C<T>]) -> Result<Vec<C<T>>> {
        self.check_state(z)?;
        let mut out = vec![C::zero(); self.dim()];
        self.field_unchecked(z, &mut out);
        Ok(out)
    }

    fn field_unchecked(&self, z: &[C<T>], out: &mut [C<T>]) {
        match &self.kind {
            ModelKind::Linear(p) => {
                let n = p.n;
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..n).fold(C::zero(), |acc, j| acc + z[j] * p.matrix[i * n + j]);
                }
            }
            ModelKind::DavisSkodje(p) => {
                let g = p.gamma;
                let (z1, z2) = (z[0], z[1]);
                let den = C::<T>::one() + z1;
                out[0] = -z1;
                out[1] = z2 * (-g) + (z1 * (g - T::one()) + z1 * z1 * g) / (den * den);
            }
            ModelKind::MichaelisMenten(p) => {
                let (z1, z2) = (z[0], z[1]);
                let half = T::lit(0.5);
                out[0] = (-z1 + z1 * z2 + z2 * half) * p.epsilon;
                out[1] = match p.fast_sign {
                    FastSign::PlusZ2 => z1 - z1 * z2 + z2,
                    FastSign::CriticalManifoldConsistent => z1 - z1 * z2 - z2,
                };
            }
            ModelKind::Custom(c) => (c.field)(z, out),
        }
    }

    pub fn eval_jacobian(&self, z: &[C<T>]) -> Result<CMatrix<T>> {
        self.check_state(z)?;
        Ok(self.jacobian_unchecked(z))
    }

    pub(crate) fn jacobian_unchecked(&self, z: &[C<T>]) -> CMatrix<T> {
        match &self.kind {
            ModelKind::Linear(p) => CMatrix::from_real_rows(p.n, &p.matrix),
            ModelKind::DavisSkodje(p) => {
                let g = p.gamma;
                let den = C::<T>::one() + z[0];
                // d/dz1 of ((g-1) z1 + g z1^2) / (1+z1)^2
                let d21 = (z[0] * (g + T::one()) + (g - T::one())) / (den * den * den);
                CMatrix::from_rows(
                    2,
                    vec![-C::one(), C::zero(), d21, C::new(-g, T::zero())],
                )
            }
            ModelKind::MichaelisMenten(p) => {
                let (z1, z2) = (z[0], z[1]);
                let e = p.epsilon;
                let half = T::lit(0.5);
                let d22 = match p.fast_sign {
                    FastSign::PlusZ2 => -z1 + T::one(),
                    FastSign::CriticalManifoldConsistent => -z1 - T::one(),
                };
                CMatrix::from_rows(
                    2,
                    vec![(z2 - T::one()) * e, (z1 + half) * e, -z2 + T::one(), d22],
                )
            }
            ModelKind::Custom(c) => (c.jacobian)(z),
        }
    }

    /// Evaluates the closed-form solution through `coeffs` at complex time `t`.
    pub fn closed_form_solution(&self, coeffs: &FlowCoefficients<T>, t: C<T>) -> Result<Vec<C<T>>> {
        match &self.kind {
            ModelKind::Linear(p) => {
                check_coeffs(coeffs, p.n)?;
                let mut out = vec![C::zero(); p.n];
                for k in 0..p.n {
                    let w = coeffs.c[k] * (t * p.eigenvalues[k]).exp();
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = *o + w * p.eigenvector_entry(i, k);
                    }
                }
                Ok(out)
            }
            ModelKind::DavisSkodje(p) => {
                check_coeffs(coeffs, 2)?;
                let (c1, c2) = (coeffs.c[0], coeffs.c[1]);
                let x = c1 * (-t).exp();
                let den = x + T::one();
                if den.norm() < self.pole_tol {
                    return Err(Error::SolutionPole {
                        re: t.re.to_f64_lossy(),
                        im: t.im.to_f64_lossy(),
                    });
                }
                Ok(vec![x, x / den + c2 * (-t * p.gamma).exp()])
            }
            _ => Err(Error::NoClosedForm(self.name.clone())),
        }
    }

    /// Inverts the closed form at `t = 0`.
    pub fn fit_coefficients(&self, z0: &[C<T>]) -> Result<FlowCoefficients<T>> {
        match &self.kind {
            ModelKind::Linear(p) => {
                self.check_state(z0)?;
                let v = CMatrix::from_real_rows(p.n, &p.eigenvectors);
                Ok(FlowCoefficients { c: v.solve(z0)? })
            }
            ModelKind::DavisSkodje(_) => {
                self.check_state(z0)?;
                let c1 = z0[0];
                let c2 = z0[1] - c1 / (c1 + T::one());
                Ok(FlowCoefficients { c: vec![c1, c2] })
            }
            _ => Err(Error::NoClosedForm(self.name.clone())),
        }
    }

    /// Slow-manifold ordinate `z2 = h(z1)` truncated at `order` in `epsilon = 1/gamma`.
    ///
    /// Davis-Skodje ignores `order`, its graph is exact.
    pub fn sim_graph(&self, z1: T, order: u32) -> Result<T> {
        if !self.has_sim_graph() {
            return Err(Error::NoSimGraph(self.name.clone()));
        }
        if order > 2 {
            return Err(Error::DomainError(format!("slow-manifold order {order} > 2")));
        }
        if !(z1 > -T::one()) {
            return Err(Error::DomainError(format!("z1 = {z1} must exceed -1")));
        }
        let one = T::one();
        let base = z1 / (one + z1);
        match &self.kind {
            ModelKind::DavisSkodje(_) => Ok(base),
            ModelKind::MichaelisMenten(p) => {
                let e = p.epsilon;
                let mut v = base;
                if order >= 1 {
                    v = v + e * z1 / (T::lit(2.0) * (one + z1));
                }
                if order >= 2 {
                    let den = match p.denominator {
                        SecondOrderDenominator::Grouped => (T::lit(2.0) * (one + z1)).powi(7),
                        SecondOrderDenominator::Ungrouped => T::lit(2.0) * (one + z1).powi(7),
                    };
                    v = v + e * e * z1 * (one - T::lit(2.5) * z1) / den;
                }
                Ok(v)
            }
            _ => unreachable!("guarded by has_sim_graph"),
        }
    }

    pub fn analytic_spectrum(&self, coeffs: &FlowCoefficients<T>) -> Result<Vec<AnalyticLine<T>>> {
        self.analytic_spectrum_with(coeffs, T::lit(DEFAULT_AMP_FLOOR), DEFAULT_MAX_LINES)
    }

    /// Dirac-comb lines of `z(i tau)` under the kernel `exp(-i xi tau)`, calibrated so a
    /// tone `a exp(i lambda tau)` is the line `(lambda, a)`.
    ///
    /// For Davis-Skodje the slow part `x/(1+x)`, `x = c1 exp(-i tau)`, is expanded as a
    /// geometric series in `1/x` when `|c1| > 1` (lines at `xi = +k`) and in `x` when
    /// `|c1| < 1` (lines at `xi = -k`).
    pub fn analytic_spectrum_with(
        &self,
        coeffs: &FlowCoefficients<T>,
        amp_floor: T,
        max_lines: usize,
    ) -> Result<Vec<AnalyticLine<T>>> {
        let mut lines: Vec<AnalyticLine<T>> = Vec::new();
        let mut push = |component: usize, xi: T, amplitude: C<T>| {
            if let Some(l) = lines.iter_mut().find(|l| l.component == component && l.xi == xi) {
                l.amplitude = l.amplitude + amplitude;
            } else {
                lines.push(AnalyticLine { component, xi, amplitude });
            }
        };
        match &self.kind {
            ModelKind::Linear(p) => {
                check_coeffs(coeffs, p.n)?;
                for j in 0..p.n {
                    for k in 0..p.n {
                        push(j, p.eigenvalues[k], coeffs.c[k] * p.eigenvector_entry(j, k));
                    }
                }
            }
            ModelKind::DavisSkodje(p) => {
                check_coeffs(coeffs, 2)?;
                let (c1, c2) = (coeffs.c[0], coeffs.c[1]);
                let r = c1.norm();
                if (r - T::one()).abs() < T::lit(BRANCH_TOL) {
                    return Err(Error::BranchAmbiguity(r.to_f64_lossy()));
                }
                push(0, -T::one(), c1);
                push(1, -p.gamma, c2);
                if r > T::one() {
                    // 1/(1 + 1/x) = sum_k (-1)^k c1^-k e^{ik tau}
                    let q = -c1.inv();
                    let mut a = C::<T>::one();
                    for k in 0..max_lines {
                        if a.norm() < amp_floor {
                            break;
                        }
                        push(1, T::from_usize_lossy(k), a);
                        a = a * q;
                    }
                } else if r > T::zero() {
                    // x/(1+x) = sum_{k>=1} (-1)^{k+1} c1^k e^{-ik tau}
                    let mut a = c1;
                    for k in 1..=max_lines {
                        if a.norm() < amp_floor {
                            break;
                        }
                        push(1, -T::from_usize_lossy(k), a);
                        a = -a * c1;
                    }
                }
            }
            _ => return Err(Error::NoClosedForm(self.name.clone())),
        }
        lines.retain(|l| l.amplitude.norm() >= amp_floor);
        lines.sort_by(|a, b| {
            a.component
                .cmp(&b.component)
                .then(a.xi.partial_cmp(&b.xi).unwrap_or(std::cmp::Ordering::Equal))
        });
        Ok(lines)
    }
}

fn check_coeffs<T>(coeffs: &FlowCoefficients<T>, n: usize) -> Result<()> {
    if coeffs.c.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} coefficients, got {}",
            coeffs.c.len()
        )));
    }
    Ok(())
}

impl<T: Real> HolomorphicField<T> for ModelSpec<T> {
    fn dim(&self) -> usize {
        ModelSpec::dim(self)
    }

    fn eval_into(&self, z: &[C<T>], out: &mut [C<T>]) {
        self.field_unchecked(z, out);
    }

    fn is_singular(&self, z: &[C<T>]) -> bool {
        self.singular_locus_test(z)
    }
}

/// Converts a real state into a complex one.
pub fn complexify<T: Real>(z: &[T]) -> Vec<C<T>> {
    z.iter().map(|&x| C::new(x, T::zero())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    fn ds(g: f64) -> ModelSpec<f64> {
        ModelSpec::davis_skodje(g).unwrap()
    }

    fn mm(g: f64) -> ModelSpec<f64> {
        ModelSpec::michaelis_menten(MichaelisMentenParams::new(g).unwrap())
    }

    fn lin(eigs: &[f64]) -> ModelSpec<f64> {
        ModelSpec::linear(LinearParams::diagonal(eigs).unwrap())
    }

    fn assert_close(a: &[C<f64>], b: &[C<f64>], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).norm() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn field_examples() {
        assert_close(&ds(3.0).eval_field(&[c(0.0, 0.0), c(0.0, 0.0)]).unwrap(), &[c(0.0, 0.0); 2], 0.0);
        assert_close(
            &ds(3.0).eval_field(&complexify(&[1.0, 0.0])).unwrap(),
            &[c(-1.0, 0.0), c(1.25, 0.0)],
            1e-15,
        );
        assert_close(
            &lin(&[-1.0, -2.0]).eval_field(&complexify(&[1.0, 1.0])).unwrap(),
            &[c(-1.0, 0.0), c(-2.0, 0.0)],
            0.0,
        );
    }

    #[test]
    fn singular_state_is_reported() {
        let m = ds(3.0);
        let z = complexify(&[-1.0, 0.3]);
        assert!(matches!(m.eval_field(&z), Err(Error::SingularState { .. })));
        assert!(matches!(m.eval_jacobian(&z), Err(Error::SingularState { .. })));
        assert!(matches!(m.fit_coefficients(&z), Err(Error::SingularState { .. })));
    }

    #[test]
    fn jacobian_examples() {
        let j = ds(3.0).eval_jacobian(&complexify(&[0.0, 0.0])).unwrap();
        assert_eq!(j, CMatrix::from_real_rows(2, &[-1.0, 0.0, 2.0, -3.0]));
        let j = mm(10.0).eval_jacobian(&complexify(&[0.0, 0.0])).unwrap();
        let want = CMatrix::from_real_rows(2, &[-0.1, 0.05, 1.0, -1.0]);
        assert!((&j - &want).max_abs() < 1e-16);
        let j = lin(&[-1.0, -2.0]).eval_jacobian(&[c(0.3, 2.0), c(-5.0, 1.0)]).unwrap();
        assert_eq!(j, CMatrix::from_real_rows(2, &[-1.0, 0.0, 0.0, -2.0]));
    }

    fn fd_jacobian(m: &ModelSpec<f64>, z: &[C<f64>], h: f64) -> CMatrix<f64> {
        let n = z.len();
        let mut out = CMatrix::zeros(n);
        for k in 0..n {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[k] += h;
            zm[k] -= h;
            let fp = m.eval_field(&zp).unwrap();
            let fm = m.eval_field(&zm).unwrap();
            for j in 0..n {
                out[(j, k)] = (fp[j] - fm[j]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn jacobian_matches_finite_differences_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let models = [
            ds(3.0),
            ds(25.0),
            mm(10.0),
            ModelSpec::michaelis_menten(
                MichaelisMentenParams::with_options(4.0, FastSign::PlusZ2, SecondOrderDenominator::Grouped)
                    .unwrap(),
            ),
            ModelSpec::linear(
                LinearParams::from_eigenpairs(&[-1.0, -3.0], vec![vec![1.0, 0.5], vec![-0.2, 1.0]]).unwrap(),
            ),
        ];
        for m in &models {
            let mut checked = 0;
            while checked < 100 {
                let z: Vec<C<f64>> =
                    (0..m.dim()).map(|_| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect();
                if m.name() == "davis-skodje" && (z[0] + 1.0).norm() < 0.2 {
                    continue;
                }
                let j = m.eval_jacobian(&z).unwrap();
                let fd = fd_jacobian(m, &z, 1e-6);
                let rel = (&j - &fd).max_abs() / j.max_abs();
                assert!(rel <= 1e-6, "{}: rel err {rel}", m.name());
                checked += 1;
            }
        }
    }

    #[test]
    fn real_states_give_exactly_real_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [ds(3.0), mm(10.0), lin(&[-1.0, -2.0])] {
            for _ in 0..100 {
                let z = complexify(&[rng.random_range(-0.9..3.0), rng.random_range(-3.0..3.0)]);
                for v in m.eval_field(&z).unwrap() {
                    assert_eq!(v.im, 0.0);
                }
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let m = ds(3.0);
        let co = FlowCoefficients { c: vec![c(0.5, 0.0), c(0.25, 0.0)] };
        assert_close(
            &m.closed_form_solution(&co, c(0.0, 0.0)).unwrap(),
            &[c(0.5, 0.0), c(0.5 / 1.5 + 0.25, 0.0)],
            1e-15,
        );
        let co = FlowCoefficients { c: vec![c(0.5, 0.0), c(0.0, 0.0)] };
        assert_close(
            &m.closed_form_solution(&co, c(0.0, std::f64::consts::PI)).unwrap(),
            &[c(-0.5, 0.0), c(-1.0, 0.0)],
            1e-14,
        );
        let co = FlowCoefficients { c: vec![c(1.0, 0.0), c(0.0, 0.0)] };
        assert!(matches!(
            m.closed_form_solution(&co, c(0.0, std::f64::consts::PI)),
            Err(Error::SolutionPole { .. })
        ));
        assert!(matches!(
            mm(10.0).closed_form_solution(&co, c(0.0, 0.0)),
            Err(Error::NoClosedForm(_))
        ));
    }

    #[test]
    fn fit_coefficient_examples() {
        let m = ds(3.0);
        let f = m.fit_coefficients(&complexify(&[1.0, 0.5])).unwrap();
        assert_close(&f.c, &[c(1.0, 0.0), c(0.0, 0.0)], 0.0);
        let f = m.fit_coefficients(&complexify(&[1.0, 0.9])).unwrap();
        assert_close(&f.c, &[c(1.0, 0.0), c(0.4, 0.0)], 1e-15);
        let f = lin(&[-1.0, -2.0]).fit_coefficients(&complexify(&[3.0, 4.0])).unwrap();
        assert_close(&f.c, &[c(3.0, 0.0), c(4.0, 0.0)], 0.0);
        assert!(matches!(
            mm(10.0).fit_coefficients(&complexify(&[1.0, 0.5])),
            Err(Error::NoClosedForm(_))
        ));
    }

    #[test]
    fn sim_graph_examples() {
        assert_eq!(ds(3.0).sim_graph(1.0, 0).unwrap(), 0.5);
        for order in 0..=2 {
            assert_eq!(mm(10.0).sim_graph(0.0, order).unwrap(), 0.0);
        }
        assert!((mm(10.0).sim_graph(1.0, 1).unwrap() - 0.525).abs() < 1e-15);
        assert!(matches!(lin(&[-1.0]).sim_graph(1.0, 0), Err(Error::NoSimGraph(_))));
        assert!(matches!(ds(3.0).sim_graph(-1.0, 0), Err(Error::DomainError(_))));
        assert!(matches!(mm(10.0).sim_graph(1.0, 3), Err(Error::DomainError(_))));
    }

    #[test]
    fn second_order_denominator_readings() {
        let e = 0.1;
        let grouped = mm(10.0).sim_graph(1.0, 2).unwrap() - mm(10.0).sim_graph(1.0, 1).unwrap();
        assert!((grouped - e * e * (1.0 - 2.5) / 16384.0).abs() < 1e-14);
        let ungrouped = ModelSpec::michaelis_menten(
            MichaelisMentenParams::with_options(10.0, FastSign::default(), SecondOrderDenominator::Ungrouped)
                .unwrap(),
        );
        let d = ungrouped.sim_graph(1.0, 2).unwrap() - ungrouped.sim_graph(1.0, 1).unwrap();
        assert!((d - e * e * (1.0 - 2.5) / 256.0).abs() < 1e-14);
    }

    #[test]
    fn sim_graph_series_is_asymptotically_ordered() {
        for g in [10.0, 20.0, 50.0] {
            let m = mm(g);
            let eps = 1.0 / g;
            for i in 0..=50 {
                let z1 = i as f64 * 0.1;
                let o0 = m.sim_graph(z1, 0).unwrap();
                let o1 = m.sim_graph(z1, 1).unwrap();
                let o2 = m.sim_graph(z1, 2).unwrap();
                assert!((o2 - o1).abs() <= eps * (o1 - o0).abs() * 5.0 + 1e-18, "g={g} z1={z1}");
            }
        }
    }

    #[test]
    fn ds_critical_manifold_is_invariant_for_real_time() {
        let m = ds(7.0);
        for c1 in [0.3, 1.0, 2.5] {
            let co = FlowCoefficients { c: vec![c(c1, 0.0), c(0.0, 0.0)] };
            for i in 0..=40 {
                let t = -2.0 + 0.15 * i as f64;
                let z = m.closed_form_solution(&co, c(t, 0.0)).unwrap();
                let h = z[0] / (z[0] + 1.0);
                assert!((z[1] - h).norm() <= 1e-12 * z[1].norm().max(1.0));
            }
        }
    }

    #[test]
    fn closed_forms_satisfy_the_ode() {
        // five-point stencil, truncation O(h^4)
        let h = 1e-3;
        let cases: Vec<(ModelSpec<f64>, Vec<C<f64>>)> = vec![
            (ds(3.0), complexify(&[0.5, 0.2])),
            (ds(10.0), complexify(&[2.0, 1.0])),
            (
                ModelSpec::linear(
                    LinearParams::from_eigenpairs(&[-1.0, -2.5], vec![vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap(),
                ),
                complexify(&[1.0, -0.5]),
            ),
        ];
        for (m, z0) in cases {
            let co = m.fit_coefficients(&z0).unwrap();
            for t in [c(0.0, 0.0), c(0.3, 1.1), c(-0.4, 2.0), c(0.1, -0.7)] {
                let at = |s: f64| m.closed_form_solution(&co, t + s * h).unwrap();
                let (p2, p1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
                let z = m.closed_form_solution(&co, t).unwrap();
                let f = m.eval_field(&z).unwrap();
                for k in 0..z.len() {
                    let d = (m2[k] - p2[k] + 8.0 * (p1[k] - m1[k])) / (12.0 * h);
                    let err = (d - f[k]).norm();
                    assert!(err <= 1e-7 * (1.0 + f[k].norm()), "{} at {t}: {err}", m.name());
                }
            }
        }
    }

    #[test]
    fn linear_eigenpairs_are_validated() {
        let bad = LinearParams::new(vec![-1.0, 0.0, 0.0, -2.0], vec![-1.0, -2.0], vec![vec![1.0, 1.0], vec![0.0, 1.0]]);
        assert!(bad.is_err());
        let degenerate = LinearParams::<f64>::from_eigenpairs(&[-1.0, -2.0], vec![vec![1.0, 0.0], vec![1.0, 1e-14]]);
        assert!(degenerate.is_err());
        let p = LinearParams::from_eigenpairs(&[-1.0, -4.0, -9.0], vec![
            vec![1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.5, 0.2, 1.0],
        ])
        .unwrap();
        assert_eq!(p.slow_subspace(2), vec![vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]]);
    }

    #[test]
    fn analytic_spectrum_linear_comb() {
        let m = lin(&[-1.0, -2.0]);
        let lines = m.analytic_spectrum(&FlowCoefficients { c: vec![c(1.0, 0.0), c(1.0, 0.0)] }).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!((lines[0].component, lines[0].xi, lines[0].amplitude), (0, -1.0, c(1.0, 0.0)));
        assert_eq!((lines[1].component, lines[1].xi, lines[1].amplitude), (1, -2.0, c(1.0, 0.0)));
    }

    #[test]
    fn analytic_spectrum_ds_slow_comb_and_fast_line() {
        let m = ds(5.0);
        let on = m.analytic_spectrum(&FlowCoefficients { c: vec![c(2.0, 0.0), c(0.0, 0.0)] }).unwrap();
        let comp2: Vec<_> = on.iter().filter(|l| l.component == 1).collect();
        assert!(comp2.iter().all(|l| l.xi >= 0.0 && l.xi.fract() == 0.0));
        for l in &comp2 {
            let k = l.xi as i32;
            assert!((l.amplitude - c((-0.5f64).powi(k), 0.0)).norm() < 1e-15);
        }
        assert!(!comp2.iter().any(|l| l.xi == -5.0));

        let off = m.analytic_spectrum(&FlowCoefficients { c: vec![c(2.0, 0.0), c(0.3, 0.0)] }).unwrap();
        let fast = off.iter().find(|l| l.component == 1 && l.xi.abs() == 5.0 && l.xi < 0.0).unwrap();
        assert_eq!(fast.amplitude, c(0.3, 0.0));
    }

    #[test]
    fn analytic_spectrum_ds_amplitude_ratio_is_inverse_c1() {
        let m = ds(5.0);
        for c1 in [2.0, -3.0, 0.5, -0.25] {
            let lines = m.analytic_spectrum(&FlowCoefficients { c: vec![c(c1, 0.0), c(0.0, 0.0)] }).unwrap();
            let mut comp2: Vec<_> = lines.iter().filter(|l| l.component == 1).collect();
            comp2.sort_by(|a, b| a.xi.abs().partial_cmp(&b.xi.abs()).unwrap());
            let expect = if f64::abs(c1) > 1.0 { 1.0 / c1.abs() } else { c1.abs() };
            for w in comp2.windows(2) {
                let ratio = w[1].amplitude.norm() / w[0].amplitude.norm();
                assert!((ratio - expect).abs() < 1e-12, "c1={c1}: {ratio}");
            }
        }
    }

    #[test]
    fn analytic_spectrum_rejects_unit_c1_and_missing_closed_form() {
        let co = FlowCoefficients { c: vec![c(1.0 + 1e-12, 0.0), c(0.0, 0.0)] };
        assert!(matches!(ds(5.0).analytic_spectrum(&co), Err(Error::BranchAmbiguity(_))));
        assert!(matches!(mm(5.0).analytic_spectrum(&co), Err(Error::NoClosedForm(_))));
    }

    #[test]
    fn michaelis_menten_epsilon_is_reciprocal() {
        let p = MichaelisMentenParams::new(7.0).unwrap();
        assert_eq!(p.epsilon(), 1.0 / 7.0);
        assert!(MichaelisMentenParams::new(1.0).is_err());
        assert!(DavisSkodjeParams::new(0.5).is_err());
    }

    #[test]
    fn plus_sign_changes_critical_manifold() {
        let plus = ModelSpec::michaelis_menten(
            MichaelisMentenParams::with_options(10.0, FastSign::PlusZ2, SecondOrderDenominator::Grouped)
                .unwrap(),
        );
        // zero of the second equation with +z2 is z2 = z1/(z1-1)
        let z1 = 3.0;
        let f = plus.eval_field(&complexify(&[z1, z1 / (z1 - 1.0)])).unwrap();
        assert!(f[1].norm() < 1e-15);
        let f = mm(10.0).eval_field(&complexify(&[z1, z1 / (z1 + 1.0)])).unwrap();
        assert!(f[1].norm() < 1e-15);
    }
}
