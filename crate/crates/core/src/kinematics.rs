//! Deformation-gradient algebra: Jacobian, cofactor matrix and its
//! linear/quadratic split, determinant expansion, the pressure Taylor split
//! and reconstruction of density and deformation tensor.
//!
//! All nodewise algebra is also exposed on raw 3x3 matrices (the `*_affine`
//! entry points) so the identities can be exercised without a grid.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{divergence_rows, gradient, Field, FieldTags, PlaneField, Rank};
use crate::grid::Side;
use crate::mat3::{self, Mat3};
use crate::scalar::Real;

/// Default Jacobian floor below which the deformation is treated as
/// numerically meaningless (blow-up signal).
pub const J_FLOOR_DEFAULT: f64 = 1e-6;

/// Monitored band `[1/2, 3/2]` for the Jacobian; leaving it is a warning (the
/// flow left the well-posedness class), not an error.
pub const J_MONITOR_BAND: (f64, f64) = (0.5, 1.5);

/// Power-law pressure `P(rho) = a rho^gamma` with `a > 0`, `gamma >= 1`.
#[derive(Debug, Clone, Copy)]
pub struct PressureLaw<T> {
    pub coeff: T,
    pub gamma: T,
}

impl<T: Real> PressureLaw<T> {
    pub fn new(coeff: T, gamma: T) -> Result<Self> {
        if coeff <= T::zero() {
            return Err(Error::Config("pressure coefficient must be positive".into()));
        }
        if gamma < T::one() {
            return Err(Error::Config("pressure exponent must be at least 1".into()));
        }
        Ok(PressureLaw { coeff, gamma })
    }

    pub fn p(&self, rho: T) -> T {
        self.coeff * rho.powf(self.gamma)
    }

    pub fn dp(&self, rho: T) -> T {
        self.coeff * self.gamma * rho.powf(self.gamma - T::one())
    }

    pub fn d2p(&self, rho: T) -> T {
        self.coeff * self.gamma * (self.gamma - T::one()) * rho.powf(self.gamma - T::lit(2.0))
    }

    fn is_gamma(&self, g: f64) -> bool {
        (self.gamma - T::lit(g)).abs() <= T::lit(1e-12)
    }

    /// Pressure potential `int_{rho_bar/4}^{rho} P(z)/z^2 dz` (closed form).
    pub fn potential(&self, rho_bar: T, rho: T) -> T {
        let lo = rho_bar * T::lit(0.25);
        if self.is_gamma(1.0) {
            self.coeff * (rho / lo).ln()
        } else {
            let e = self.gamma - T::one();
            self.coeff / e * (rho.powf(e) - lo.powf(e))
        }
    }

    /// Second-order Taylor remainder of `P` at `rho_bar` with increment `s`:
    /// `int_0^s (s - z) P''(rho_bar + z) dz`. Closed forms for gamma in
    /// {1, 2}, adaptive Gauss-Kronrod quadrature otherwise.
    pub fn taylor_remainder(&self, rho_bar: T, s: T) -> T {
        if s == T::zero() || self.is_gamma(1.0) {
            return T::zero();
        }
        if self.is_gamma(2.0) {
            return self.coeff * s * s;
        }
        adaptive_gk(
            |z| (s - z) * self.d2p(rho_bar + z),
            T::zero(),
            s,
            T::lit(1e-13),
            24,
        )
    }
}

/// Material description of the two fluids. `kappa` is uniform across the
/// interface; the rest-state pressure jump must vanish.
#[derive(Debug, Clone)]
pub struct MaterialParams<T> {
    rho_bar: [T; 2],
    mu: [T; 2],
    sigma: [T; 2],
    pub kappa: T,
    laws: [PressureLaw<T>; 2],
}

impl<T: Real> MaterialParams<T> {
    pub fn new(
        rho_bar: [T; 2],
        mu: [T; 2],
        sigma: [T; 2],
        kappa: T,
        laws: [PressureLaw<T>; 2],
    ) -> Result<Self> {
        for s in Side::BOTH {
            let k = s.index();
            if rho_bar[k] <= T::zero() {
                return Err(Error::Config("equilibrium densities must be positive".into()));
            }
            if mu[k] <= T::zero() {
                return Err(Error::Config("shear viscosities must be positive".into()));
            }
            if sigma[k] < T::zero() {
                return Err(Error::Config("bulk viscosities must be nonnegative".into()));
            }
        }
        if kappa <= T::zero() {
            return Err(Error::Config("elasticity coefficient must be positive".into()));
        }
        let p_plus = laws[Side::Plus.index()].p(rho_bar[Side::Plus.index()]);
        let p_minus = laws[Side::Minus.index()].p(rho_bar[Side::Minus.index()]);
        let scale = T::one().max(p_plus.abs()).max(p_minus.abs());
        if (p_plus - p_minus).abs() > T::lit(1e-12) * scale {
            return Err(Error::Config(format!(
                "rest-state pressure jump violated: P+(rho+) = {:.16e}, P-(rho-) = {:.16e}",
                p_plus.as_f64(),
                p_minus.as_f64()
            )));
        }
        Ok(MaterialParams {
            rho_bar,
            mu,
            sigma,
            kappa,
            laws,
        })
    }

    /// Convenience constructor that balances the plus-side pressure
    /// coefficient so the rest-state jump condition holds exactly.
    pub fn balanced(
        rho_bar: [T; 2],
        mu: [T; 2],
        sigma: [T; 2],
        kappa: T,
        gamma: [T; 2],
        a_minus: T,
    ) -> Result<Self> {
        let law_minus = PressureLaw::new(a_minus, gamma[Side::Minus.index()])?;
        let p_rest = law_minus.p(rho_bar[Side::Minus.index()]);
        let a_plus = p_rest / rho_bar[Side::Plus.index()].powf(gamma[Side::Plus.index()]);
        let law_plus = PressureLaw::new(a_plus, gamma[Side::Plus.index()])?;
        Self::new(rho_bar, mu, sigma, kappa, [law_minus, law_plus])
    }

    pub fn rho_bar(&self, side: Side) -> T {
        self.rho_bar[side.index()]
    }

    pub fn mu(&self, side: Side) -> T {
        self.mu[side.index()]
    }

    pub fn sigma(&self, side: Side) -> T {
        self.sigma[side.index()]
    }

    /// `lambda = sigma - 2 mu / 3`.
    pub fn lambda(&self, side: Side) -> T {
        self.sigma[side.index()] - T::lit(2.0 / 3.0) * self.mu[side.index()]
    }

    pub fn law(&self, side: Side) -> &PressureLaw<T> {
        &self.laws[side.index()]
    }

    /// Linearized pressure stiffness `P'(rho_bar) rho_bar`.
    pub fn p_prime_rho(&self, side: Side) -> T {
        self.law(side).dp(self.rho_bar(side)) * self.rho_bar(side)
    }
}

/// Nodewise kinematic tensors derived from one displacement field.
#[derive(Clone)]
pub struct KinematicState<T> {
    pub eta: Field<T>,
    pub grad_eta: Field<T>,
    pub j: Field<T>,
    pub jinv: Field<T>,
    pub a: Field<T>,
    pub b: Field<T>,
    pub btilde_l: Field<T>,
    pub btilde_n: Field<T>,
    pub min_j: T,
    pub max_j: T,
}

impl<T: Real> KinematicState<T> {
    /// True while the Jacobian stayed inside the monitored `[1/2, 3/2]` band.
    pub fn within_monitor_band(&self) -> bool {
        self.min_j >= T::lit(J_MONITOR_BAND.0) && self.max_j <= T::lit(J_MONITOR_BAND.1)
    }
}

/// Pure-matrix kinematics for affine (grid-free) tests.
#[derive(Debug, Clone)]
pub struct AffineKinematics<T> {
    pub j: T,
    pub jinv: T,
    pub a: Mat3<T>,
    pub b: Mat3<T>,
    pub btilde_l: Mat3<T>,
    pub btilde_n: Mat3<T>,
}

pub fn deformation_affine<T: Real>(grad_eta: &Mat3<T>) -> Result<AffineKinematics<T>> {
    let zeta = mat3::add(&mat3::identity(), grad_eta);
    let j = mat3::det(&zeta);
    if j <= T::lit(J_FLOOR_DEFAULT) {
        return Err(Error::Degeneracy {
            side: "affine",
            i1: 0,
            i2: 0,
            i3: 0,
            j: j.as_f64(),
        });
    }
    let b = mat3::cofactor(&zeta);
    let a = mat3::scale(&b, T::one() / j);
    let (btilde_l, btilde_n) = mat3::cofactor_split(grad_eta);
    Ok(AffineKinematics {
        j,
        jinv: T::one() / j,
        a,
        b,
        btilde_l,
        btilde_n,
    })
}

/// Builds the full kinematic cache from a displacement field.
pub fn deformation<T: Real>(eta: &Field<T>) -> Result<KinematicState<T>> {
    deformation_with_floor(eta, T::lit(J_FLOOR_DEFAULT))
}

pub fn deformation_with_floor<T: Real>(eta: &Field<T>, j_floor: T) -> Result<KinematicState<T>> {
    assert_eq!(eta.rank(), Rank::Vector, "displacement must be a vector field");
    let grid = Arc::clone(eta.grid());
    let grad_eta = gradient(eta)?;
    let mut j = Field::zeros(&grid, Rank::Scalar, FieldTags::default());
    let mut jinv = Field::zeros(&grid, Rank::Scalar, FieldTags::default());
    let mut a = Field::zeros(&grid, Rank::Tensor, FieldTags::default());
    let mut b = Field::zeros(&grid, Rank::Tensor, FieldTags::default());
    let mut btilde_l = Field::zeros(&grid, Rank::Tensor, FieldTags::default());
    let mut btilde_n = Field::zeros(&grid, Rank::Tensor, FieldTags::default());
    let mut min_j = T::infinity();
    let mut max_j = T::neg_infinity();
    for side in Side::BOTH {
        let nodes = grad_eta.nodes_on(side);
        for p in 0..nodes {
            let g = grad_eta.tensor_at(side, p);
            let zeta = mat3::add(&mat3::identity(), &g);
            let jv = mat3::det(&zeta);
            if jv <= j_floor {
                let (i3, off) = grad_eta.split_node(p);
                let n1 = grid.n1;
                return Err(Error::Degeneracy {
                    side: side.name(),
                    i1: off % n1,
                    i2: off / n1,
                    i3,
                    j: jv.as_f64(),
                });
            }
            min_j = min_j.min(jv);
            max_j = max_j.max(jv);
            let bv = mat3::cofactor(&zeta);
            let av = mat3::scale(&bv, T::one() / jv);
            let (bl, bn) = mat3::cofactor_split(&g);
            j.comp_mut(side, 0)[p] = jv;
            jinv.comp_mut(side, 0)[p] = T::one() / jv;
            a.set_tensor_at(side, p, &av);
            b.set_tensor_at(side, p, &bv);
            btilde_l.set_tensor_at(side, p, &bl);
            btilde_n.set_tensor_at(side, p, &bn);
        }
    }
    Ok(KinematicState {
        eta: eta.clone(),
        grad_eta,
        j,
        jinv,
        a,
        b,
        btilde_l,
        btilde_n,
        min_j,
        max_j,
    })
}

/// Field-level cofactor split of `cof(I + grad_eta) - I`.
pub fn cofactor_split_field<T: Real>(grad_eta: &Field<T>) -> (Field<T>, Field<T>) {
    assert_eq!(grad_eta.rank(), Rank::Tensor);
    let grid = Arc::clone(grad_eta.grid());
    let mut linear = Field::zeros(&grid, Rank::Tensor, FieldTags::default());
    let mut quad = Field::zeros(&grid, Rank::Tensor, FieldTags::default());
    for side in Side::BOTH {
        for p in 0..grad_eta.nodes_on(side) {
            let g = grad_eta.tensor_at(side, p);
            let (l, n) = mat3::cofactor_split(&g);
            linear.set_tensor_at(side, p, &l);
            quad.set_tensor_at(side, p, &n);
        }
    }
    (linear, quad)
}

/// Field-level determinant expansion `det(I + grad_eta) = 1 + div eta + r2 + r3`.
pub fn determinant_expansion_field<T: Real>(
    grad_eta: &Field<T>,
) -> (Field<T>, Field<T>, Field<T>) {
    assert_eq!(grad_eta.rank(), Rank::Tensor);
    let grid = Arc::clone(grad_eta.grid());
    let mut div = Field::zeros(&grid, Rank::Scalar, FieldTags::default());
    let mut r2 = Field::zeros(&grid, Rank::Scalar, FieldTags::default());
    let mut r3 = Field::zeros(&grid, Rank::Scalar, FieldTags::default());
    for side in Side::BOTH {
        for p in 0..grad_eta.nodes_on(side) {
            let g = grad_eta.tensor_at(side, p);
            let (d, q, c) = mat3::det_expansion(&g);
            div.comp_mut(side, 0)[p] = d;
            r2.comp_mut(side, 0)[p] = q;
            r3.comp_mut(side, 0)[p] = c;
        }
    }
    (div, r2, r3)
}

/// Maximum discrete residual of the geometric identity `d_l B_{kl} = 0`.
pub fn piola_residual<T: Real>(state: &KinematicState<T>) -> Result<T> {
    let div_b = divergence_rows(&state.b)?;
    Ok(div_b.linf())
}

/// Output of the pressure Taylor split.
pub struct PressureSplit<T> {
    /// `P(rho_bar) - P'(rho_bar) rho_bar div eta`.
    pub lin: Field<T>,
    /// Nonlinear part: `lin + nonlinear = P(rho_bar J^{-1})` exactly.
    pub nonlinear: Field<T>,
    /// Integral Taylor remainder.
    pub remainder: Field<T>,
    /// Nodes whose density left the soft band `(rho_bar/4, 4 rho_bar)`.
    pub soft_range_violations: usize,
}

/// Taylor split of the pressure on one side; the fields of the other side are
/// left zero. See [`pressure_split_both`] for the two-sided version.
pub fn pressure_split<T: Real>(
    jinv: &Field<T>,
    div_eta: &Field<T>,
    params: &MaterialParams<T>,
    side: Side,
) -> Result<PressureSplit<T>> {
    let grid = Arc::clone(jinv.grid());
    let mut out = PressureSplit {
        lin: Field::zeros(&grid, Rank::Scalar, FieldTags::default()),
        nonlinear: Field::zeros(&grid, Rank::Scalar, FieldTags::default()),
        remainder: Field::zeros(&grid, Rank::Scalar, FieldTags::default()),
        soft_range_violations: 0,
    };
    pressure_split_into(jinv, div_eta, params, side, &mut out)?;
    Ok(out)
}

/// Two-sided pressure split.
pub fn pressure_split_both<T: Real>(
    jinv: &Field<T>,
    div_eta: &Field<T>,
    params: &MaterialParams<T>,
) -> Result<PressureSplit<T>> {
    let grid = Arc::clone(jinv.grid());
    let mut out = PressureSplit {
        lin: Field::zeros(&grid, Rank::Scalar, FieldTags::default()),
        nonlinear: Field::zeros(&grid, Rank::Scalar, FieldTags::default()),
        remainder: Field::zeros(&grid, Rank::Scalar, FieldTags::default()),
        soft_range_violations: 0,
    };
    for side in Side::BOTH {
        pressure_split_into(jinv, div_eta, params, side, &mut out)?;
    }
    Ok(out)
}

fn pressure_split_into<T: Real>(
    jinv: &Field<T>,
    div_eta: &Field<T>,
    params: &MaterialParams<T>,
    side: Side,
    out: &mut PressureSplit<T>,
) -> Result<()> {
    let law = *params.law(side);
    let rho_bar = params.rho_bar(side);
    let p_rest = law.p(rho_bar);
    let stiff = params.p_prime_rho(side);
    for p in 0..jinv.nodes_on(side) {
        let ji = jinv.comp(side, 0)[p];
        let de = div_eta.comp(side, 0)[p];
        let (lin, n3, rem, soft) = pressure_split_point(&law, rho_bar, p_rest, stiff, ji, de)?;
        out.lin.comp_mut(side, 0)[p] = lin;
        out.nonlinear.comp_mut(side, 0)[p] = n3;
        out.remainder.comp_mut(side, 0)[p] = rem;
        if soft {
            out.soft_range_violations += 1;
        }
    }
    Ok(())
}

/// Nodewise pressure split; returns `(lin, nonlinear, remainder, soft_warn)`.
pub fn pressure_split_point<T: Real>(
    law: &PressureLaw<T>,
    rho_bar: T,
    p_rest: T,
    stiffness: T,
    jinv: T,
    div_eta: T,
) -> Result<(T, T, T, bool)> {
    let rho = rho_bar * jinv;
    let hard_lo = rho_bar * T::lit(0.125);
    let hard_hi = rho_bar * T::lit(8.0);
    if rho <= hard_lo || rho >= hard_hi {
        return Err(Error::DensityRange {
            rho: rho.as_f64(),
            lo: hard_lo.as_f64(),
            hi: hard_hi.as_f64(),
        });
    }
    let soft = rho <= rho_bar * T::lit(0.25) || rho >= rho_bar * T::lit(4.0);
    let s = rho_bar * (jinv - T::one());
    let remainder = law.taylor_remainder(rho_bar, s);
    let nonlinear = stiffness * (jinv - T::one() + div_eta) + remainder;
    let lin = p_rest - stiffness * div_eta;
    Ok((lin, nonlinear, remainder, soft))
}

/// Reconstructed physical fields: density, deformation tensor and the
/// interface height in Lagrangian parametrization.
pub struct Reconstruction<T> {
    pub varrho: Field<T>,
    pub deformation_tensor: Field<T>,
    pub interface_height: PlaneField<T>,
}

pub fn reconstruct<T: Real>(
    state: &KinematicState<T>,
    params: &MaterialParams<T>,
) -> Reconstruction<T> {
    let grid = Arc::clone(state.j.grid());
    let mut varrho = Field::zeros(&grid, Rank::Scalar, FieldTags::default());
    for side in Side::BOTH {
        let rb = params.rho_bar(side);
        let jinv = state.jinv.comp(side, 0).to_vec();
        for (o, ji) in varrho.comp_mut(side, 0).iter_mut().zip(&jinv) {
            *o = rb * *ji;
        }
    }
    let mut u = state.grad_eta.clone();
    for side in Side::BOTH {
        for p in 0..u.nodes_on(side) {
            let mut m = u.tensor_at(side, p);
            for (i, row) in m.iter_mut().enumerate() {
                row[i] += T::one();
            }
            u.set_tensor_at(side, p, &m);
        }
    }
    // d = eta_3 restricted to the interface (both traces agree for tagged
    // displacement fields; the minus trace is reported).
    let trace = state.eta.interface_trace(Side::Minus);
    let mut d = PlaneField::zeros(trace.n1, trace.n2, 1);
    for i2 in 0..trace.n2 {
        for i1 in 0..trace.n1 {
            d.set(0, i2, i1, trace.get(2, i2, i1));
        }
    }
    Reconstruction {
        varrho,
        deformation_tensor: u,
        interface_height: d,
    }
}

/// Adaptive Gauss-Kronrod (G7, K15) quadrature with bisection refinement.
fn adaptive_gk<T: Real>(f: impl Fn(T) -> T + Copy, a: T, b: T, tol: T, depth: usize) -> T {
    let (g, k) = gk15(f, a, b);
    if (g - k).abs() <= tol * T::one().max(k.abs()) || depth == 0 {
        return k;
    }
    let mid = (a + b) * T::lit(0.5);
    adaptive_gk(f, a, mid, tol * T::lit(0.5), depth - 1)
        + adaptive_gk(f, mid, b, tol * T::lit(0.5), depth - 1)
}

fn gk15<T: Real>(f: impl Fn(T) -> T, a: T, b: T) -> (T, T) {
    const XK: [f64; 8] = [
        0.991455371120813,
        0.949107912342759,
        0.864864423359769,
        0.741531185599394,
        0.586087235467691,
        0.405845151377397,
        0.207784955007898,
        0.0,
    ];
    const WK: [f64; 8] = [
        0.022935322010529,
        0.063092092629979,
        0.104790010322250,
        0.140653259715525,
        0.169004726639267,
        0.190350578064785,
        0.204432940075298,
        0.209482141084728,
    ];
    const WG: [f64; 4] = [
        0.129484966168870,
        0.279705391489277,
        0.381830050505119,
        0.417959183673469,
    ];
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    let mut kronrod = T::zero();
    let mut gauss = T::zero();
    for (idx, (&x, &w)) in XK.iter().zip(WK.iter()).enumerate() {
        let xs = T::lit(x) * half;
        let val = if x == 0.0 {
            f(mid)
        } else {
            f(mid - xs) + f(mid + xs)
        };
        kronrod += T::lit(w) * val;
        // Odd Kronrod indices are the embedded Gauss-7 nodes.
        if idx % 2 == 1 {
            gauss += T::lit(WG[idx / 2]) * val;
        }
    }
    (gauss * half, kronrod * half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DimMode, GridSpec, SlabGrid};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::TAU;

    fn small_grid() -> Arc<SlabGrid<f64>> {
        SlabGrid::build(&GridSpec {
            h_minus: -1.0,
            h_plus: 1.0,
            l1: TAU,
            l2: TAU,
            n1: 8,
            n2: 1,
            n3m: 8,
            n3p: 8,
            dim: DimMode::Two,
        })
        .unwrap()
    }

    fn params() -> MaterialParams<f64> {
        MaterialParams::balanced(
            [1.0, 1.5],
            [1.0, 1.0],
            [1.0, 1.0],
            100.0,
            [2.0, 2.0],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn rest_state_kinematics_are_trivial() {
        let g = small_grid();
        let eta = Field::zeros(&g, Rank::Vector, FieldTags::displacement());
        let st = deformation(&eta).unwrap();
        assert!((st.min_j - 1.0).abs() < 1e-15);
        assert!((st.max_j - 1.0).abs() < 1e-15);
        assert!(st.btilde_l.linf() < 1e-15);
        assert!(st.btilde_n.linf() < 1e-15);
        assert_eq!(piola_residual(&st).unwrap(), 0.0);
    }

    #[test]
    fn affine_dilation_matches_oracle() {
        let g = mat3::scale(&mat3::identity::<f64>(), 0.1);
        let k = deformation_affine(&g).unwrap();
        assert!((k.j - 1.331).abs() <= 1e-14);
        assert!((k.b[0][0] - 1.21).abs() <= 1e-14);
        assert!((k.b[1][1] - 1.21).abs() <= 1e-14);
        assert!((k.b[2][2] - 1.21).abs() <= 1e-14);
    }

    #[test]
    fn singular_affine_deformation_is_degenerate() {
        let mut g = mat3::zero::<f64>();
        g[0][0] = -1.0; // det(I + g) = 0
        assert!(matches!(
            deformation_affine(&g),
            Err(Error::Degeneracy { .. })
        ));
    }

    #[test]
    fn inverse_consistency_on_random_matrices() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut g = mat3::zero::<f64>();
            for row in g.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.gen_range(-0.3..0.3);
                }
            }
            let Ok(k) = deformation_affine(&g) else {
                continue;
            };
            if k.j < 1e-3 {
                continue;
            }
            let zeta = mat3::add(&mat3::identity(), &g);
            // A_{ik} d_k zeta_j = delta_ij, i.e. A zeta^T = I.
            let prod = mat3::matmul(&k.a, &mat3::transpose(&zeta));
            assert!(mat3::max_abs_diff(&prod, &mat3::identity()) <= 1e-10);
        }
    }

    #[test]
    fn pressure_split_quadratic_example() {
        let law = PressureLaw::<f64>::new(1.0, 2.0).unwrap();
        // rho_bar = 1, J^{-1} - 1 = 0.1, div eta = -0.1.
        let (lin, n3, rem, _) =
            pressure_split_point(&law, 1.0, law.p(1.0), law.dp(1.0) * 1.0, 1.1, -0.1).unwrap();
        assert!((rem - 0.01).abs() <= 1e-14);
        assert!((n3 - 0.01).abs() <= 1e-14, "n3 = {n3}");
        // Exactness: lin + n3 = P(1.1).
        assert!((lin + n3 - law.p(1.1)).abs() <= 1e-14);
    }

    #[test]
    fn pressure_split_rest_state() {
        let law = PressureLaw::<f64>::new(1.0, 2.0).unwrap();
        let (lin, n3, rem, soft) =
            pressure_split_point(&law, 1.0, law.p(1.0), law.dp(1.0), 1.0, 0.0).unwrap();
        assert_eq!(n3, 0.0);
        assert_eq!(rem, 0.0);
        assert!(!soft);
        assert_eq!(lin, law.p(1.0));
    }

    #[test]
    fn pressure_split_exactness_with_quadrature() {
        let law = PressureLaw::<f64>::new(0.7, 1.4).unwrap();
        let rho_bar = 1.3;
        let stiff = law.dp(rho_bar) * rho_bar;
        let p_rest = law.p(rho_bar);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let jinv = rng.gen_range(0.6..1.6);
            let de = rng.gen_range(-0.4..0.4);
            let (lin, n3, _, _) =
                pressure_split_point(&law, rho_bar, p_rest, stiff, jinv, de).unwrap();
            let direct = law.p(rho_bar * jinv);
            assert!(
                (lin + n3 - direct).abs() <= 1e-8 * (1.0 + direct.abs()),
                "exactness violated: {} vs {}",
                lin + n3,
                direct
            );
        }
    }

    #[test]
    fn pressure_split_range_errors() {
        let law = PressureLaw::<f64>::new(1.0, 2.0).unwrap();
        let err = pressure_split_point(&law, 1.0, 1.0, 2.0, 0.05, 0.0);
        assert!(matches!(err, Err(Error::DensityRange { .. })));
    }

    #[test]
    fn reconstruct_examples() {
        let g = small_grid();
        let p = params();
        let eta = Field::zeros(&g, Rank::Vector, FieldTags::displacement());
        let st = deformation(&eta).unwrap();
        let rec = reconstruct(&st, &p);
        assert!((rec.varrho.comp(Side::Minus, 0)[0] - 1.0).abs() < 1e-15);
        assert!((rec.varrho.comp(Side::Plus, 0)[0] - 1.5).abs() < 1e-15);
        assert_eq!(rec.interface_height.linf(), 0.0);

        // eta_3 = 0.01 sin(y1) vertical-profile-free trace check.
        let eta2 = Field::from_fn(&g, Rank::Vector, FieldTags::displacement(), |_, c, y1, _, y3| {
            if c == 2 {
                0.01 * y1.sin() * (1.0 - y3 * y3).max(0.0)
            } else {
                0.0
            }
        });
        let st2 = deformation(&eta2).unwrap();
        let rec2 = reconstruct(&st2, &p);
        let expect = 0.01f64;
        assert!((rec2.interface_height.linf() - expect).abs() <= 1e-12);
    }

    #[test]
    fn uniform_compression_density() {
        // J = 0.8 everywhere: varrho = rho_bar / 0.8.
        let g = small_grid();
        let p = params();
        // Affine-like check through the field path is awkward under Dirichlet
        // constraints, so verify the formula nodewise via the affine API.
        let mut m = mat3::zero::<f64>();
        m[0][0] = 0.8f64.cbrt() - 1.0;
        m[1][1] = m[0][0];
        m[2][2] = m[0][0];
        let k = deformation_affine(&m).unwrap();
        assert!((k.j - 0.8).abs() <= 1e-12);
        let rho = p.rho_bar(Side::Minus) * k.jinv;
        assert!((rho - 1.25).abs() <= 1e-12);
        let _ = g;
    }

    #[test]
    fn material_rest_jump_enforced() {
        let bad = MaterialParams::new(
            [1.0, 1.0],
            [1.0, 1.0],
            [1.0, 1.0],
            10.0,
            [
                PressureLaw::new(1.0, 2.0).unwrap(),
                PressureLaw::new(1.5, 2.0).unwrap(),
            ],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn potential_closed_form_reference() {
        let law = PressureLaw::<f64>::new(1.0, 2.0).unwrap();
        // P = z^2, rho_bar = 1: int_{1/4}^{1} dz = 0.75.
        assert!((law.potential(1.0, 1.0) - 0.75).abs() <= 1e-14);
    }
}
