//! Symmetric second-order tensors in three dimensions.
//!
//! Components are stored in the order `11, 22, 33, 12, 13, 23`. Off-diagonal
//! slots hold tensor components (ε₁₂, not the engineering shear 2ε₁₂), so the
//! full double contraction counts each of them twice.

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub, SubAssign};

use crate::scalar::Real;

/// Voigt-style slot of each `(i, j)` pair.
const SLOT: [[usize; 3]; 3] = [[0, 3, 4], [3, 1, 5], [4, 5, 2]];

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SymTensor2<T> {
    c: [T; 6],
}

impl<T: Real> SymTensor2<T> {
    /// Builds a tensor from `[a11, a22, a33, a12, a13, a23]`.
    #[inline]
    pub fn new(c: [T; 6]) -> Self {
        Self { c }
    }

    #[inline]
    pub fn zero() -> Self {
        Self { c: [T::zero(); 6] }
    }

    #[inline]
    pub fn identity() -> Self {
        Self::diag(T::one(), T::one(), T::one())
    }

    #[inline]
    pub fn diag(a11: T, a22: T, a33: T) -> Self {
        let z = T::zero();
        Self { c: [a11, a22, a33, z, z, z] }
    }

    /// Pure shear tensor with only the 12 component set.
    #[inline]
    pub fn shear12(a12: T) -> Self {
        let z = T::zero();
        Self { c: [z, z, z, a12, z, z] }
    }

    /// Symmetric part ½(G + Gᵀ) of a full 3×3 matrix given as `g[i][j]`.
    pub fn sym_part(g: &[[T; 3]; 3]) -> Self {
        let h = T::lit(0.5);
        Self {
            c: [
                g[0][0],
                g[1][1],
                g[2][2],
                h * (g[0][1] + g[1][0]),
                h * (g[0][2] + g[2][0]),
                h * (g[1][2] + g[2][1]),
            ],
        }
    }

    #[inline]
    pub fn components(&self) -> [T; 6] {
        self.c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.c[SLOT[i][j]]
    }

    /// Expands to a full 3×3 matrix.
    pub fn to_matrix(&self) -> [[T; 3]; 3] {
        let mut m = [[T::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.get(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn trace(&self) -> T {
        self.c[0] + self.c[1] + self.c[2]
    }

    /// Deviatoric part `a − tr(a)/3 · I`.
    #[inline]
    pub fn deviator(&self) -> Self {
        let m = self.trace() / T::lit(3.0);
        let mut c = self.c;
        c[0] = c[0] - m;
        c[1] = c[1] - m;
        c[2] = c[2] - m;
        Self { c }
    }

    /// Full double contraction `a : b`.
    #[inline]
    pub fn contract(&self, other: &Self) -> T {
        let a = &self.c;
        let b = &other.c;
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + T::lit(2.0) * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5])
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.contract(self).sqrt()
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> T {
        self.c.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `self + alpha * x`.
    #[inline]
    pub fn axpy(&self, alpha: T, x: &Self) -> Self {
        let mut c = self.c;
        for (ci, xi) in c.iter_mut().zip(x.c.iter()) {
            *ci = *ci + alpha * *xi;
        }
        Self { c }
    }

    #[inline]
    pub fn scale(&self, s: T) -> Self {
        let mut c = self.c;
        for v in c.iter_mut() {
            *v = *v * s;
        }
        Self { c }
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }

    /// Converts the scalar type.
    pub fn cast<U: Real>(&self) -> SymTensor2<U> {
        SymTensor2 { c: self.c.map(|v| U::lit(v.as_f64())) }
    }
}

impl<T> Index<usize> for SymTensor2<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.c[i]
    }
}

impl<T: Real> Add for SymTensor2<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        self.axpy(T::one(), &rhs)
    }
}

impl<T: Real> Sub for SymTensor2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut c = self.c;
        for (ci, ri) in c.iter_mut().zip(rhs.c.iter()) {
            *ci = *ci - *ri;
        }
        Self { c }
    }
}

impl<T: Real> AddAssign for SymTensor2<T> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Real> SubAssign for SymTensor2<T> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Real> Mul<T> for SymTensor2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

impl<T: Real> Neg for SymTensor2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}
