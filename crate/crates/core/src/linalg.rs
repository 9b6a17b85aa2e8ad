//! Small dense complex linear algebra: LU solves and the matrix exponential.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{Real, C};

/// Square complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    n: usize,
    data: Vec<C<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![C::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = C::one();
        }
        m
    }

    /// Builds from row-major complex entries. Panics if `data.len() != n * n`.
    pub fn from_rows(n: usize, data: Vec<C<T>>) -> Self {
        assert_eq!(data.len(), n * n, "matrix data length");
        Self { n, data }
    }

    pub fn from_real_rows(n: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), n * n, "matrix data length");
        Self {
            n,
            data: data.iter().map(|&x| C::new(x, T::zero())).collect(),
        }
    }

    pub fn from_diagonal(diag: &[C<T>]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[C<T>] {
        &self.data
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                let row = &self.data[i * self.n..(i + 1) * self.n];
                row.iter().zip(v).fold(C::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// Induced 1-norm (max column sum of moduli).
    pub fn norm1(&self) -> T {
        (0..self.n)
            .map(|j| (0..self.n).fold(T::zero(), |acc, i| acc + self[(i, j)].norm()))
            .fold(T::zero(), T::max)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, v| acc.max(v.norm()))
    }

    pub fn lu(&self) -> Result<Lu<T>> {
        Lu::factor(self.clone())
    }

    pub fn solve(&self, b: &[C<T>]) -> Result<Vec<C<T>>> {
        Ok(self.lu()?.solve(b))
    }

    pub fn inverse(&self) -> Result<Self> {
        let lu = self.lu()?;
        let n = self.n;
        let mut inv = Self::zeros(n);
        let mut e = vec![C::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = C::zero());
            e[j] = C::one();
            let col = lu.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }

    /// 1-norm condition number computed from the explicit inverse.
    pub fn cond1(&self) -> T {
        match self.inverse() {
            Ok(inv) => self.norm1() * inv.norm1(),
            Err(_) => T::infinity(),
        }
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = C<T>;
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.data[i * self.n + j]
    }
}

impl<T: Real> Add for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn add(self, rhs: &CMatrix<T>) -> CMatrix<T> {
        assert_eq!(self.n, rhs.n);
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn sub(self, rhs: &CMatrix<T>) -> CMatrix<T> {
        assert_eq!(self.n, rhs.n);
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T: Real> Mul for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn mul(self, rhs: &CMatrix<T>) -> CMatrix<T> {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j] + a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: CMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    fn factor(mut a: CMatrix<T>) -> Result<Self> {
        let n = a.n;
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1));
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, a[(i, k)].norm()))
                .fold((k, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pmax > tiny) {
                return Err(Error::InvalidInput("matrix is singular".into()));
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    a.data.swap(p * n + j, k * n + j);
                }
            }
            let pivot = a[(k, k)];
            for i in (k + 1)..n {
                let f = a[(i, k)] / pivot;
                a[(i, k)] = f;
                if f.is_zero() {
                    continue;
                }
                for j in (k + 1)..n {
                    let akj = a[(k, j)];
                    a[(i, j)] = a[(i, j)] - f * akj;
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn solve(&self, b: &[C<T>]) -> Vec<C<T>> {
        let n = self.lu.n;
        let mut x: Vec<C<T>> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] = x[i] - self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] = x[i] - self.lu[(i, k)] * x[k];
            }
            x[i] = x[i] / self.lu[(i, i)];
        }
        x
    }

    fn solve_matrix(&self, b: &CMatrix<T>) -> CMatrix<T> {
        let n = self.lu.n;
        let mut out = CMatrix::zeros(n);
        let mut col = vec![C::zero(); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            let x = self.solve(&col);
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        out
    }
}

// Higham (2005) scaling-and-squaring thresholds for the diagonal Padé degrees.
const PADE_THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

fn pade_coefficients(m: usize) -> &'static [f64] {
    match m {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        13 => &[
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
        _ => unreachable!("unsupported Padé degree"),
    }
}

fn lin_comb<T: Real>(terms: &[(f64, &CMatrix<T>)]) -> CMatrix<T> {
    let n = terms[0].1.n;
    let mut out = CMatrix::zeros(n);
    for &(c, m) in terms {
        let c = C::new(T::lit(c), T::zero());
        for (o, &v) in out.data.iter_mut().zip(&m.data) {
            *o = *o + c * v;
        }
    }
    out
}

/// Matrix exponential by scaling and squaring with a diagonal Padé approximant.
pub fn expm<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    let n = a.n;
    if n == 0 {
        return Ok(a.clone());
    }
    if a.data.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::InvalidInput("matrix exponential of non-finite matrix".into()));
    }
    let ident = CMatrix::identity(n);
    let norm = a.norm1().to_f64_lossy();

    for &(m, theta) in &PADE_THETA[..4] {
        if norm <= theta {
            let (u, v) = pade_uv(a, &ident, m);
            return solve_pade(&u, &v);
        }
    }

    let theta13 = PADE_THETA[4].1;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a.scale(C::new(T::lit(0.5f64.powi(s)), T::zero()));
    let (u, v) = pade_uv(&scaled, &ident, 13);
    let mut r = solve_pade(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_uv<T: Real>(a: &CMatrix<T>, ident: &CMatrix<T>, m: usize) -> (CMatrix<T>, CMatrix<T>) {
    let b = pade_coefficients(m);
    let a2 = a * a;
    if m == 13 {
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let inner_u = &a6 * &lin_comb(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)]);
        let u_poly = &inner_u + &lin_comb(&[(b[7], &a6), (b[5], &a4), (b[3], &a2), (b[1], ident)]);
        let u = a * &u_poly;
        let inner_v = &a6 * &lin_comb(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)]);
        let v = &inner_v + &lin_comb(&[(b[6], &a6), (b[4], &a4), (b[2], &a2), (b[0], ident)]);
        return (u, v);
    }
    // even powers I, A^2, A^4, ...
    let mut powers = vec![ident.clone(), a2.clone()];
    while powers.len() < m.div_ceil(2) {
        let next = powers.last().expect("nonempty") * &a2;
        powers.push(next);
    }
    let odd: Vec<(f64, &CMatrix<T>)> = (0..=m / 2).map(|k| (b[2 * k + 1], &powers[k])).collect();
    let even: Vec<(f64, &CMatrix<T>)> = (0..=m / 2).map(|k| (b[2 * k], &powers[k])).collect();
    let u = a * &lin_comb(&odd);
    let v = lin_comb(&even);
    (u, v)
}

fn solve_pade<T: Real>(u: &CMatrix<T>, v: &CMatrix<T>) -> Result<CMatrix<T>> {
    let p = v + u;
    let q = v - u;
    Ok(q.lu()?.solve_matrix(&p))
}
