//! Banded complex linear algebra for the per-mode vertical systems.
//!
//! LAPACK-style band storage with `kl` extra fill rows for partial pivoting:
//! entry `(i, j)` of an `n x n` matrix with `kl` sub- and `ku` superdiagonals
//! lives at `ab[j * ldab + (kl + ku + i - j)]`, `ldab = 2 kl + ku + 1`.

use num_complex::Complex;

use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct BandedMatrix<T> {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    ldab: usize,
    ab: Vec<Complex<T>>,
}

impl<T: Real> BandedMatrix<T> {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandedMatrix {
            n,
            kl,
            ku,
            ldab,
            ab: vec![Complex::new(T::zero(), T::zero()); ldab * n],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(
            i + self.ku >= j && j + self.kl >= i,
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    pub fn add(&mut self, i: usize, j: usize, v: Complex<T>) {
        let s = self.slot(i, j);
        self.ab[s] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex<T>) {
        let s = self.slot(i, j);
        self.ab[s] = v;
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        if i + self.ku < j || j + self.kl < i {
            Complex::new(T::zero(), T::zero())
        } else {
            self.ab[self.slot(i, j)]
        }
    }

    pub fn matvec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![Complex::new(T::zero(), T::zero()); self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = Complex::new(T::zero(), T::zero());
            for j in lo..=hi {
                acc += self.get(i, j) * x[j];
            }
            *yi = acc;
        }
        y
    }

    /// LU factorization with partial pivoting. Returns the pivot column on
    /// exact singularity.
    pub fn factor(&self) -> std::result::Result<BandedLu<T>, usize> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        let ldab = self.ldab;
        let mut ab = self.ab.clone();
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // Pivot search down column j.
            let mut jp = 0usize;
            let mut best = ab[j * ldab + kv].norm_sqr();
            for i in 1..=km {
                let cand = ab[j * ldab + kv + i].norm_sqr();
                if cand > best {
                    best = cand;
                    jp = i;
                }
            }
            ipiv[j] = j + jp;
            if ab[j * ldab + kv + jp].norm_sqr() == T::zero() {
                return Err(j);
            }
            let jmax = (j + kv).min(n - 1);
            if jp != 0 {
                for c in j..=jmax {
                    let a = c * ldab + kv + j - c;
                    let b = c * ldab + kv + j + jp - c;
                    ab.swap(a, b);
                }
            }
            let pivot = ab[j * ldab + kv];
            for i in 1..=km {
                let m = ab[j * ldab + kv + i] / pivot;
                ab[j * ldab + kv + i] = m;
                for c in (j + 1)..=jmax {
                    let u = ab[c * ldab + kv + j - c];
                    let t = c * ldab + kv + i + j - c;
                    ab[t] = ab[t] - m * u;
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            kv,
            ldab,
            ab,
            ipiv,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    kv: usize,
    ldab: usize,
    ab: Vec<Complex<T>>,
    ipiv: Vec<usize>,
}

impl<T: Real> BandedLu<T> {
    pub fn solve_in_place(&self, rhs: &mut [Complex<T>]) {
        assert_eq!(rhs.len(), self.n);
        let (n, kl, kv, ldab) = (self.n, self.kl, self.kv, self.ldab);
        for j in 0..n {
            if self.ipiv[j] != j {
                rhs.swap(j, self.ipiv[j]);
            }
            let km = kl.min(n - 1 - j);
            let rj = rhs[j];
            for i in 1..=km {
                let m = self.ab[j * ldab + kv + i];
                rhs[j + i] -= m * rj;
            }
        }
        for j in (0..n).rev() {
            rhs[j] = rhs[j] / self.ab[j * ldab + kv];
            let lo = j.saturating_sub(kv);
            let rj = rhs[j];
            for i in lo..j {
                let u = self.ab[j * ldab + kv + i - j];
                rhs[i] -= u * rj;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    type C = Complex<f64>;

    fn dense_solve(a: &[Vec<C>], b: &[C]) -> Vec<C> {
        let n = b.len();
        let mut m: Vec<Vec<C>> = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| m[i][k].norm_sqr().total_cmp(&m[j][k].norm_sqr()))
                .unwrap();
            m.swap(k, p);
            x.swap(k, p);
            for i in (k + 1)..n {
                let f = m[i][k] / m[k][k];
                for j in k..n {
                    let u = m[k][j];
                    m[i][j] -= f * u;
                }
                let xk = x[k];
                x[i] -= f * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in (k + 1)..n {
                s -= m[k][j] * x[j];
            }
            x[k] = s / m[k][k];
        }
        x
    }

    #[test]
    fn banded_matches_dense_on_random_systems() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let n = 12 + trial % 7;
            let kl = 1 + trial % 4;
            let ku = 1 + (trial / 2) % 4;
            let mut banded = BandedMatrix::<f64>::new(n, kl, ku);
            let mut dense = vec![vec![C::new(0.0, 0.0); n]; n];
            for i in 0..n {
                for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                    let v = C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    let v = if i == j { v + C::new(4.0, 0.0) } else { v };
                    banded.set(i, j, v);
                    dense[i][j] = v;
                }
            }
            let b: Vec<C> = (0..n)
                .map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let lu = banded.factor().expect("nonsingular");
            let mut x = b.clone();
            lu.solve_in_place(&mut x);
            let xd = dense_solve(&dense, &b);
            for (a, b) in x.iter().zip(&xd) {
                assert!((a - b).norm() <= 1e-10, "banded/dense mismatch");
            }
            // residual check
            let r = banded.matvec(&x);
            for (ri, bi) in r.iter().zip(&b) {
                assert!((ri - bi).norm() <= 1e-11);
            }
        }
    }

    #[test]
    fn singular_matrix_reports_column() {
        let mut m = BandedMatrix::<f64>::new(4, 1, 1);
        m.set(0, 0, C::new(1.0, 0.0));
        m.set(1, 1, C::new(1.0, 0.0));
        // column 2 left entirely zero
        m.set(3, 3, C::new(1.0, 0.0));
        assert_eq!(m.factor().err(), Some(2));
    }
}
