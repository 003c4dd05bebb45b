//! Dense 2x2 complex matrices.
//!
//! Everything downstream of the momentum-mode decomposition lives in 2x2
//! blocks, so a tiny stack-allocated matrix type beats a general linear
//! algebra crate here.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as C64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub m00: C64,
    pub m01: C64,
    pub m10: C64,
    pub m11: C64,
}

impl Mat2 {
    pub const fn new(m00: C64, m01: C64, m10: C64, m11: C64) -> Self {
        Mat2 { m00, m01, m10, m11 }
    }

    pub fn zero() -> Self {
        let z = C64::new(0.0, 0.0);
        Mat2::new(z, z, z, z)
    }

    pub fn identity() -> Self {
        Mat2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0))
    }

    pub fn diag(a: C64, b: C64) -> Self {
        Mat2::new(a, C64::new(0.0, 0.0), C64::new(0.0, 0.0), b)
    }

    /// |ket><bra| outer product, components ordered as the spinor.
    pub fn outer(ket: [C64; 2], bra: [C64; 2]) -> Self {
        Mat2::new(
            ket[0] * bra[0].conj(),
            ket[0] * bra[1].conj(),
            ket[1] * bra[0].conj(),
            ket[1] * bra[1].conj(),
        )
    }

    pub fn trace(&self) -> C64 {
        self.m00 + self.m11
    }

    pub fn adjoint(&self) -> Self {
        Mat2::new(self.m00.conj(), self.m10.conj(), self.m01.conj(), self.m11.conj())
    }

    pub fn scale(&self, s: f64) -> Self {
        Mat2::new(self.m00 * s, self.m01 * s, self.m10 * s, self.m11 * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.m00
            .norm()
            .max(self.m01.norm())
            .max(self.m10.norm())
            .max(self.m11.norm())
    }

    /// Largest absolute deviation from Hermiticity.
    pub fn herm_defect(&self) -> f64 {
        (*self - self.adjoint()).max_abs()
    }

    /// Eigenvalues of a Hermitian matrix, returned as (low, high).
    ///
    /// Only the Hermitian part of the input enters the formula; callers are
    /// expected to hold `herm_defect` small.
    pub fn herm_eigenvalues(&self) -> (f64, f64) {
        let a = self.m00.re;
        let d = self.m11.re;
        let off = 0.5 * (self.m01 + self.m10.conj());
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + off.norm_sqr()).sqrt();
        (mid - rad, mid + rad)
    }

    /// Spectral norm (largest singular value).
    pub fn spectral_norm(&self) -> f64 {
        let g = self.adjoint() * *self;
        let (_, hi) = g.herm_eigenvalues();
        hi.max(0.0).sqrt()
    }
}

pub fn commutator(a: &Mat2, b: &Mat2) -> Mat2 {
    *a * *b - *b * *a
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.m00 + o.m00, self.m01 + o.m01, self.m10 + o.m10, self.m11 + o.m11)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(self.m00 - o.m00, self.m01 - o.m01, self.m10 - o.m10, self.m11 - o.m11)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        Mat2::new(-self.m00, -self.m01, -self.m10, -self.m11)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.m00 * o.m00 + self.m01 * o.m10,
            self.m00 * o.m01 + self.m01 * o.m11,
            self.m10 * o.m00 + self.m11 * o.m10,
            self.m10 * o.m01 + self.m11 * o.m11,
        )
    }
}

impl Mul<C64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: C64) -> Mat2 {
        Mat2::new(self.m00 * s, self.m01 * s, self.m10 * s, self.m11 * s)
    }
}
