//! Structured grid over the horizontally periodic two-fluid slab.
//!
//! The domain is `[0, L1) x [0, L2) x (h-, h+)` with the internal interface
//! pinned at `y3 = 0`. Both subdomains carry uniform vertical spacings of
//! their own; the interface plane exists in both. Horizontal derivatives are
//! spectral (exact on resolved Fourier modes), vertical derivatives use
//! second-order stencils that never cross the interface.

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Highest vertical derivative order the stencil tables carry.
pub const MAX_VERTICAL_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DimMode {
    /// One horizontal dimension (`n2 = 1`, all `d/dy2` identically zero).
    Two,
    /// Full slab with two periodic horizontal directions.
    Three,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Minus, Side::Plus];

    pub fn index(self) -> usize {
        match self {
            Side::Minus => 0,
            Side::Plus => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Minus => "minus",
            Side::Plus => "plus",
        }
    }
}

/// Plain-data grid descriptor (serializable; also embedded in snapshots).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub h_minus: f64,
    pub h_plus: f64,
    pub l1: f64,
    pub l2: f64,
    pub n1: usize,
    pub n2: usize,
    pub n3m: usize,
    pub n3p: usize,
    pub dim: DimMode,
}

/// One-dimensional derivative stencil: weights applied to nodes
/// `first..first + weights.len()` of a vertical column.
#[derive(Debug, Clone)]
pub struct Stencil<T> {
    pub first: usize,
    pub weights: Vec<T>,
}

/// Per-side stencil tables: `rows[order - 1][node]` differentiates a column in
/// that subdomain at `node` with second-order accuracy, one-sided at both the
/// interface and the outer wall.
#[derive(Debug, Clone)]
pub struct StencilTable<T> {
    rows: Vec<Vec<Stencil<T>>>,
}

impl<T: Real> StencilTable<T> {
    fn build(n_nodes: usize, dz: T) -> Self {
        let mut rows = Vec::with_capacity(MAX_VERTICAL_ORDER);
        for order in 1..=MAX_VERTICAL_ORDER {
            let mut per_node = Vec::with_capacity(n_nodes);
            for node in 0..n_nodes {
                // Centered stencils in the interior; edge nodes of even orders
                // need one extra point to stay second-order one-sided.
                let width = match order {
                    1 => 3,
                    2 if node == 0 || node == n_nodes - 1 => 4,
                    2 => 3,
                    _ => 5,
                };
                let width = width.min(n_nodes);
                let half = (width - 1) / 2;
                let first = node
                    .saturating_sub(half)
                    .min(n_nodes - width);
                let offsets: Vec<T> = (0..width)
                    .map(|k| T::from_usize(first + k).unwrap() - T::from_usize(node).unwrap())
                    .collect();
                let mut weights = fornberg_weights(order, &offsets);
                let scale = dz.powi(-(order as i32));
                for w in weights.iter_mut() {
                    *w *= scale;
                }
                per_node.push(Stencil { first, weights });
            }
            rows.push(per_node);
        }
        StencilTable { rows }
    }

    pub fn row(&self, order: usize, node: usize) -> &Stencil<T> {
        &self.rows[order - 1][node]
    }
}

/// Fornberg's finite-difference weights for the `order`-th derivative at
/// offset 0 given node offsets `x` (in units of the spacing).
pub fn fornberg_weights<T: Real>(order: usize, x: &[T]) -> Vec<T> {
    let n = x.len();
    assert!(n > order, "stencil too narrow for requested order");
    let mut c = vec![vec![T::zero(); order + 1]; n];
    let mut c1 = T::one();
    let mut c4 = x[0];
    c[0][0] = T::one();
    for i in 1..n {
        let mut c2 = T::one();
        let c5 = c4;
        c4 = x[i];
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=order.min(i)).rev() {
                    let kk = T::from_usize(k).unwrap();
                    c[i][k] = c1 * (kk * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=order.min(i)).rev() {
                let kk = T::from_usize(k).unwrap();
                c[j][k] = (c4 * c[j][k] - kk * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// FFT plans for one horizontal axis.
#[derive(Clone)]
struct AxisFft<T> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

/// Structured grid over the periodic slab.
///
/// Immutable once built; field operations share it through an `Arc`.
pub struct SlabGrid<T> {
    pub h_minus: T,
    pub h_plus: T,
    pub l1: T,
    pub l2: T,
    pub n1: usize,
    pub n2: usize,
    pub n3m: usize,
    pub n3p: usize,
    pub dim: DimMode,
    pub dz_minus: T,
    pub dz_plus: T,
    stencils_minus: StencilTable<T>,
    stencils_plus: StencilTable<T>,
    fft1: AxisFft<T>,
    fft2: Option<AxisFft<T>>,
    spec: GridSpec,
}

impl<T> fmt::Debug for SlabGrid<T>
where
    T: fmt::Debug,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SlabGrid")
            .field("h_minus", &self.h_minus)
            .field("h_plus", &self.h_plus)
            .field("l1", &self.l1)
            .field("l2", &self.l2)
            .field("n1", &self.n1)
            .field("n2", &self.n2)
            .field("n3m", &self.n3m)
            .field("n3p", &self.n3p)
            .field("dim", &self.dim)
            .finish()
    }
}

impl<T: Real> SlabGrid<T> {
    pub fn build(spec: &GridSpec) -> Result<Arc<Self>> {
        if !(spec.h_minus < 0.0 && spec.h_plus > 0.0) {
            return Err(Error::Config(format!(
                "interface must lie strictly between the walls: h- = {}, h+ = {}",
                spec.h_minus, spec.h_plus
            )));
        }
        if spec.l1 <= 0.0 || spec.l2 <= 0.0 {
            return Err(Error::Config("horizontal periods must be positive".into()));
        }
        match spec.dim {
            DimMode::Two => {
                if spec.n2 != 1 {
                    return Err(Error::Config(
                        "2D mode collapses y2: set n2 = 1".into(),
                    ));
                }
            }
            DimMode::Three => {
                if spec.n2 < 4 {
                    return Err(Error::Resolution(format!(
                        "n2 = {} below the minimum of 4 in 3D mode",
                        spec.n2
                    )));
                }
            }
        }
        if spec.n1 < 4 {
            return Err(Error::Resolution(format!(
                "n1 = {} below the minimum of 4",
                spec.n1
            )));
        }
        if spec.n3m < 4 || spec.n3p < 4 {
            return Err(Error::Resolution(format!(
                "vertical cell counts (n3m = {}, n3p = {}) must be at least 4",
                spec.n3m, spec.n3p
            )));
        }

        let h_minus = T::lit(spec.h_minus);
        let h_plus = T::lit(spec.h_plus);
        let dz_minus = -h_minus / T::from_usize(spec.n3m).unwrap();
        let dz_plus = h_plus / T::from_usize(spec.n3p).unwrap();

        let mut planner = FftPlanner::new();
        let fft1 = AxisFft {
            forward: planner.plan_fft_forward(spec.n1),
            inverse: planner.plan_fft_inverse(spec.n1),
        };
        let fft2 = (spec.n2 > 1).then(|| AxisFft {
            forward: planner.plan_fft_forward(spec.n2),
            inverse: planner.plan_fft_inverse(spec.n2),
        });

        Ok(Arc::new(SlabGrid {
            h_minus,
            h_plus,
            l1: T::lit(spec.l1),
            l2: T::lit(spec.l2),
            n1: spec.n1,
            n2: spec.n2,
            n3m: spec.n3m,
            n3p: spec.n3p,
            dim: spec.dim,
            dz_minus,
            dz_plus,
            stencils_minus: StencilTable::build(spec.n3m + 1, dz_minus),
            stencils_plus: StencilTable::build(spec.n3p + 1, dz_plus),
            fft1,
            fft2,
            spec: spec.clone(),
        }))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Vertical cell count of one subdomain (nodes are `0..=n3`).
    pub fn n3(&self, side: Side) -> usize {
        match side {
            Side::Minus => self.n3m,
            Side::Plus => self.n3p,
        }
    }

    pub fn dz(&self, side: Side) -> T {
        match side {
            Side::Minus => self.dz_minus,
            Side::Plus => self.dz_plus,
        }
    }

    /// Index of the interface node within a subdomain column.
    pub fn interface_node(&self, side: Side) -> usize {
        match side {
            Side::Minus => self.n3m,
            Side::Plus => 0,
        }
    }

    /// Index of the outer-wall node within a subdomain column.
    pub fn wall_node(&self, side: Side) -> usize {
        match side {
            Side::Minus => 0,
            Side::Plus => self.n3p,
        }
    }

    pub fn stencil(&self, side: Side, order: usize, node: usize) -> &Stencil<T> {
        match side {
            Side::Minus => self.stencils_minus.row(order, node),
            Side::Plus => self.stencils_plus.row(order, node),
        }
    }

    pub fn y3(&self, side: Side, i3: usize) -> T {
        match side {
            Side::Minus => self.h_minus + self.dz_minus * T::from_usize(i3).unwrap(),
            Side::Plus => self.dz_plus * T::from_usize(i3).unwrap(),
        }
    }

    pub fn y1(&self, i1: usize) -> T {
        self.l1 * T::from_usize(i1).unwrap() / T::from_usize(self.n1).unwrap()
    }

    pub fn y2(&self, i2: usize) -> T {
        self.l2 * T::from_usize(i2).unwrap() / T::from_usize(self.n2).unwrap()
    }

    /// Nodes per horizontal plane.
    pub fn plane_len(&self) -> usize {
        self.n1 * self.n2
    }

    /// Quadrature weight of one horizontal node (exact mean times area).
    pub fn horizontal_weight(&self) -> T {
        self.l1 * self.l2 / T::from_usize(self.plane_len()).unwrap()
    }

    /// Trapezoidal weight of vertical node `i3` in one subdomain.
    pub fn vertical_weight(&self, side: Side, i3: usize) -> T {
        let dz = self.dz(side);
        let n3 = self.n3(side);
        if i3 == 0 || i3 == n3 {
            dz * T::lit(0.5)
        } else {
            dz
        }
    }

    /// Signed wavenumber of horizontal index `m` along axis 1 or 2. With
    /// `odd_order = true` the Nyquist mode is mapped to zero, which is the
    /// convention used for odd derivatives of real data.
    pub fn wavenumber(&self, axis: usize, m: usize, odd_order: bool) -> T {
        let (n, l) = match axis {
            1 => (self.n1, self.l1),
            2 => (self.n2, self.l2),
            _ => unreachable!("horizontal axis index"),
        };
        if n == 1 {
            return T::zero();
        }
        let half = n / 2;
        if odd_order && n % 2 == 0 && m == half {
            return T::zero();
        }
        let freq = if m <= half {
            m as isize
        } else {
            m as isize - n as isize
        };
        T::lit(2.0) * T::PI() * T::from_isize(freq).unwrap() / l
    }

    pub(crate) fn fft_axis(&self, axis: usize) -> Option<(&Arc<dyn Fft<T>>, &Arc<dyn Fft<T>>)> {
        match axis {
            1 => Some((&self.fft1.forward, &self.fft1.inverse)),
            2 => self.fft2.as_ref().map(|a| (&a.forward, &a.inverse)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_spec() -> GridSpec {
        GridSpec {
            h_minus: -1.0,
            h_plus: 1.0,
            l1: std::f64::consts::TAU,
            l2: std::f64::consts::TAU,
            n1: 16,
            n2: 16,
            n3m: 8,
            n3p: 8,
            dim: DimMode::Three,
        }
    }

    #[test]
    fn builds_symmetric_slab() {
        let g = SlabGrid::<f64>::build(&grid_spec()).unwrap();
        assert!((g.dz_minus - 0.125).abs() < 1e-15);
        assert!((g.dz_plus - 0.125).abs() < 1e-15);
        assert!((g.y3(Side::Minus, 0) + 1.0).abs() < 1e-15);
        assert!(g.y3(Side::Minus, 8).abs() < 1e-15);
        assert!(g.y3(Side::Plus, 0).abs() < 1e-15);
        assert!((g.y3(Side::Plus, 8) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unequal_subdomain_spacings() {
        let mut spec = grid_spec();
        spec.h_plus = 2.0;
        let g = SlabGrid::<f64>::build(&spec).unwrap();
        assert!((g.dz_minus - 1.0 / 8.0).abs() < 1e-15);
        assert!((g.dz_plus - 2.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_separated_heights() {
        let mut spec = grid_spec();
        spec.h_minus = 1.0;
        spec.h_plus = 2.0;
        assert!(matches!(
            SlabGrid::<f64>::build(&spec),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rejects_low_resolution() {
        let mut spec = grid_spec();
        spec.n3m = 3;
        assert!(matches!(
            SlabGrid::<f64>::build(&spec),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn stencils_differentiate_quadratics_exactly() {
        let g = SlabGrid::<f64>::build(&grid_spec()).unwrap();
        // p(y) = y^2 on the minus column; p' = 2y, p'' = 2, p''' = 0.
        let n3 = g.n3(Side::Minus);
        let column: Vec<f64> = (0..=n3).map(|i| g.y3(Side::Minus, i).powi(2)).collect();
        for node in 0..=n3 {
            let y = g.y3(Side::Minus, node);
            for (order, expect) in [(1, 2.0 * y), (2, 2.0), (3, 0.0)] {
                let st = g.stencil(Side::Minus, order, node);
                let val: f64 = st
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * column[st.first + k])
                    .sum();
                assert!(
                    (val - expect).abs() <= 1e-10 * (1.0 + expect.abs()),
                    "order {order} node {node}: {val} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn fornberg_matches_centered_first_derivative() {
        let w = fornberg_weights::<f64>(1, &[-1.0, 0.0, 1.0]);
        assert!((w[0] + 0.5).abs() < 1e-14);
        assert!(w[1].abs() < 1e-14);
        assert!((w[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn fornberg_matches_one_sided_first_derivative() {
        let w = fornberg_weights::<f64>(1, &[0.0, 1.0, 2.0]);
        assert!((w[0] + 1.5).abs() < 1e-14);
        assert!((w[1] - 2.0).abs() < 1e-14);
        assert!((w[2] + 0.5).abs() < 1e-14);
    }
}
