//! Dense 3x3 algebra used nodewise by the kinematics and stress kernels.
//!
//! Convention: a gradient tensor `g` stores `g[i][j] = d_j f_i` (row = field
//! component, column = derivative direction). The affine entry points of the
//! kinematics module operate directly on these arrays, so every identity can
//! be tested without a grid.

use crate::scalar::Real;

pub type Mat3<T> = [[T; 3]; 3];
pub type Vec3<T> = [T; 3];

pub fn zero<T: Real>() -> Mat3<T> {
    [[T::zero(); 3]; 3]
}

pub fn identity<T: Real>() -> Mat3<T> {
    let mut m = zero();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

pub fn add<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][j] + b[i][j];
        }
    }
    out
}

pub fn sub<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][j] - b[i][j];
        }
    }
    out
}

pub fn scale<T: Real>(a: &Mat3<T>, s: T) -> Mat3<T> {
    let mut out = *a;
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v *= s;
        }
    }
    out
}

pub fn matmul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = zero();
    for i in 0..3 {
        for j in 0..3 {
            let mut s = T::zero();
            for (k, bk) in b.iter().enumerate() {
                s += a[i][k] * bk[j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    let mut out = zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn trace<T: Real>(a: &Mat3<T>) -> T {
    a[0][0] + a[1][1] + a[2][2]
}

pub fn det<T: Real>(m: &Mat3<T>) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Cofactor matrix `cof(m)[i][j]`: signed minor obtained by deleting row `i`
/// and column `j`. Equals the transposed adjugate, so `m^{-T} = cof(m)/det m`.
pub fn cofactor<T: Real>(m: &Mat3<T>) -> Mat3<T> {
    let mut c = zero();
    for i in 0..3 {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        for j in 0..3 {
            let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
            // Cyclic index choice keeps the sign pattern implicit.
            c[i][j] = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        }
    }
    c
}

pub fn max_abs_diff<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> T {
    let mut m = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

pub fn max_abs<T: Real>(a: &Mat3<T>) -> T {
    let mut m = T::zero();
    for row in a {
        for v in row {
            m = m.max(v.abs());
        }
    }
    m
}

/// Symmetrized gradient `g + g^T` (no 1/2 factor).
pub fn sym<T: Real>(g: &Mat3<T>) -> Mat3<T> {
    add(g, &transpose(g))
}

/// Splits the deviation of the cofactor matrix of `I + g` from the identity
/// into its part linear in `g` and its quadratic remainder, returned as
/// `(linear, quadratic)` with `cof(I + g) = I + linear + quadratic`.
pub fn cofactor_split<T: Real>(g: &Mat3<T>) -> (Mat3<T>, Mat3<T>) {
    let linear = [
        [g[1][1] + g[2][2], -(g[1][0]), -(g[2][0])],
        [-(g[0][1]), g[0][0] + g[2][2], -(g[2][1])],
        [-(g[0][2]), -(g[1][2]), g[0][0] + g[1][1]],
    ];
    let quad = [
        [
            g[1][1] * g[2][2] - g[2][1] * g[1][2],
            g[2][0] * g[1][2] - g[1][0] * g[2][2],
            g[1][0] * g[2][1] - g[2][0] * g[1][1],
        ],
        [
            g[2][1] * g[0][2] - g[0][1] * g[2][2],
            g[0][0] * g[2][2] - g[2][0] * g[0][2],
            g[2][0] * g[0][1] - g[0][0] * g[2][1],
        ],
        [
            g[0][1] * g[1][2] - g[1][1] * g[0][2],
            g[1][0] * g[0][2] - g[0][0] * g[1][2],
            g[0][0] * g[1][1] - g[1][0] * g[0][1],
        ],
    ];
    (linear, quad)
}

/// Determinant expansion of `det(I + g)` around the identity:
/// returns `(tr g, r2, r3)` with `det(I + g) = 1 + tr g + r2 + r3`,
/// `r2` collecting the quadratic minors and `r3 = det g`.
pub fn det_expansion<T: Real>(g: &Mat3<T>) -> (T, T, T) {
    let divg = trace(g);
    let r2 = g[0][0] * g[1][1] + g[0][0] * g[2][2] + g[1][1] * g[2][2]
        - g[0][1] * g[1][0]
        - g[1][2] * g[2][1]
        - g[0][2] * g[2][0];
    let r3 = det(g);
    (divg, r2, r3)
}

/// Matrix-vector product.
pub fn matvec<T: Real>(a: &Mat3<T>, x: &Vec3<T>) -> Vec3<T> {
    let mut out = [T::zero(); 3];
    for (i, row) in a.iter().enumerate() {
        out[i] = row[0] * x[0] + row[1] * x[1] + row[2] * x[2];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn cofactor_of_identity_is_identity() {
        let i = identity::<f64>();
        assert_eq!(cofactor(&i), i);
    }

    #[test]
    fn split_matches_displayed_diagonal_example() {
        let g = [
            [0.1, 0.0, 0.0],
            [0.0, 0.2, 0.0],
            [0.0, 0.0, 0.3],
        ];
        let (l, n) = cofactor_split(&g);
        assert!(approx(l[0][0], 0.5, 1e-15));
        assert!(approx(l[1][1], 0.4, 1e-15));
        assert!(approx(l[2][2], 0.3, 1e-15));
        assert!(approx(n[0][0], 0.06, 1e-15));
        assert!(approx(n[1][1], 0.03, 1e-15));
        assert!(approx(n[2][2], 0.02, 1e-15));
    }

    #[test]
    fn det_expansion_uniform_dilation() {
        let g = scale(&identity::<f64>(), 0.1);
        let (d, r2, r3) = det_expansion(&g);
        assert!(approx(d, 0.3, 1e-15));
        assert!(approx(r2, 0.03, 1e-15));
        assert!(approx(r3, 0.001, 1e-15));
        let zeta = add(&identity(), &g);
        assert!(approx(1.0 + d + r2 + r3, det(&zeta), 1e-15));
    }

    fn from_entries(entries: [f64; 9]) -> Mat3<f64> {
        let mut g = zero::<f64>();
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] = entries[3 * i + j];
            }
        }
        g
    }

    proptest! {
        #[test]
        fn split_reconstructs_cofactor(entries in prop::array::uniform9(-0.5f64..0.5)) {
            let g = from_entries(entries);
            let zeta = add(&identity(), &g);
            let cof = cofactor(&zeta);
            let (l, n) = cofactor_split(&g);
            let rebuilt = add(&identity(), &add(&l, &n));
            prop_assert!(max_abs_diff(&cof, &rebuilt) <= 1e-12);
        }

        #[test]
        fn det_expansion_reconstructs_det(entries in prop::array::uniform9(-0.5f64..0.5)) {
            let g = from_entries(entries);
            let (d, r2, r3) = det_expansion(&g);
            let zeta = add(&identity(), &g);
            prop_assert!((1.0 + d + r2 + r3 - det(&zeta)).abs() <= 1e-12);
        }
    }
}
