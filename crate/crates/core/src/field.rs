//! Fields over the slab grid and the discrete derivative/norm machinery.
//!
//! A [`Field`] stores one value array per subdomain with the interface plane
//! duplicated in both, so one-sided stencils and jump evaluation always have
//! their own-side trace available. Layout per side is
//! `((c * (n3 + 1) + i3) * n2 + i2) * n1 + i1` (y1 fastest), which is also the
//! snapshot export order.

use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::{DimMode, Side, SlabGrid, MAX_VERTICAL_ORDER};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Scalar,
    Vector,
    Tensor,
}

impl Rank {
    pub fn ncomp(self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => 3,
            Rank::Tensor => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rank::Scalar => "scalar",
            Rank::Vector => "vector",
            Rank::Tensor => "tensor",
        }
    }
}

/// Tensor component index for entry `(i, j)` (row = field component,
/// column = derivative direction).
pub fn tensor_comp(i: usize, j: usize) -> usize {
    3 * i + j
}

/// Continuity/boundary tags a field may carry (`eta`, `u` and `zeta` carry
/// both; derived quantities carry none).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FieldTags {
    pub interface_continuous: bool,
    pub dirichlet_walls: bool,
}

impl FieldTags {
    pub fn displacement() -> Self {
        FieldTags {
            interface_continuous: true,
            dirichlet_walls: true,
        }
    }
}

#[derive(Clone)]
pub struct Field<T> {
    grid: Arc<SlabGrid<T>>,
    rank: Rank,
    pub tags: FieldTags,
    minus: Vec<T>,
    plus: Vec<T>,
}

/// Values on the interface plane (or any single horizontal plane).
#[derive(Debug, Clone)]
pub struct PlaneField<T> {
    pub n1: usize,
    pub n2: usize,
    pub ncomp: usize,
    pub values: Vec<T>,
}

impl<T: Real> PlaneField<T> {
    pub fn zeros(n1: usize, n2: usize, ncomp: usize) -> Self {
        PlaneField {
            n1,
            n2,
            ncomp,
            values: vec![T::zero(); n1 * n2 * ncomp],
        }
    }

    pub fn idx(&self, c: usize, i2: usize, i1: usize) -> usize {
        (c * self.n2 + i2) * self.n1 + i1
    }

    pub fn get(&self, c: usize, i2: usize, i1: usize) -> T {
        self.values[self.idx(c, i2, i1)]
    }

    pub fn set(&mut self, c: usize, i2: usize, i1: usize, v: T) {
        let k = self.idx(c, i2, i1);
        self.values[k] = v;
    }

    pub fn linf(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.values.len(), other.values.len());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a - b)
            .collect();
        PlaneField {
            values,
            ..*self
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        PlaneField {
            values: self.values.iter().map(|&v| v * s).collect(),
            ..*self
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.values.len(), other.values.len());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a + b)
            .collect();
        PlaneField {
            values,
            ..*self
        }
    }
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: &Arc<SlabGrid<T>>, rank: Rank, tags: FieldTags) -> Self {
        let len = |n3: usize| rank.ncomp() * (n3 + 1) * grid.plane_len();
        Field {
            grid: Arc::clone(grid),
            rank,
            tags,
            minus: vec![T::zero(); len(grid.n3m)],
            plus: vec![T::zero(); len(grid.n3p)],
        }
    }

    /// Builds a field from a nodewise function of `(side, component, y1, y2, y3)`.
    pub fn from_fn(
        grid: &Arc<SlabGrid<T>>,
        rank: Rank,
        tags: FieldTags,
        f: impl Fn(Side, usize, T, T, T) -> T,
    ) -> Self {
        let mut out = Self::zeros(grid, rank, tags);
        for side in Side::BOTH {
            let n3 = grid.n3(side);
            for c in 0..rank.ncomp() {
                for i3 in 0..=n3 {
                    let y3 = grid.y3(side, i3);
                    for i2 in 0..grid.n2 {
                        let y2 = grid.y2(i2);
                        for i1 in 0..grid.n1 {
                            let y1 = grid.y1(i1);
                            let v = f(side, c, y1, y2, y3);
                            out.set(side, c, i1, i2, i3, v);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn grid(&self) -> &Arc<SlabGrid<T>> {
        &self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn values(&self, side: Side) -> &[T] {
        match side {
            Side::Minus => &self.minus,
            Side::Plus => &self.plus,
        }
    }

    pub fn values_mut(&mut self, side: Side) -> &mut [T] {
        match side {
            Side::Minus => &mut self.minus,
            Side::Plus => &mut self.plus,
        }
    }

    pub fn side_idx(&self, side: Side, c: usize, i1: usize, i2: usize, i3: usize) -> usize {
        let n3 = self.grid.n3(side);
        ((c * (n3 + 1) + i3) * self.grid.n2 + i2) * self.grid.n1 + i1
    }

    pub fn get(&self, side: Side, c: usize, i1: usize, i2: usize, i3: usize) -> T {
        self.values(side)[self.side_idx(side, c, i1, i2, i3)]
    }

    pub fn set(&mut self, side: Side, c: usize, i1: usize, i2: usize, i3: usize, v: T) {
        let k = self.side_idx(side, c, i1, i2, i3);
        self.values_mut(side)[k] = v;
    }

    /// Contiguous slice of one component on one side (levels x plane).
    pub fn comp(&self, side: Side, c: usize) -> &[T] {
        let n3 = self.grid.n3(side);
        let len = (n3 + 1) * self.grid.plane_len();
        &self.values(side)[c * len..(c + 1) * len]
    }

    pub fn comp_mut(&mut self, side: Side, c: usize) -> &mut [T] {
        let n3 = self.grid.n3(side);
        let len = (n3 + 1) * self.grid.plane_len();
        &mut self.values_mut(side)[c * len..(c + 1) * len]
    }

    pub fn map_in_place(&mut self, mut f: impl FnMut(T) -> T) {
        for v in self.minus.iter_mut().chain(self.plus.iter_mut()) {
            *v = f(*v);
        }
    }

    pub fn scale_in_place(&mut self, s: T) {
        self.map_in_place(|v| v * s);
    }

    pub fn axpy(&mut self, a: T, x: &Field<T>) {
        assert_eq!(self.rank, x.rank, "axpy rank mismatch");
        for (v, w) in self.minus.iter_mut().zip(&x.minus) {
            *v += a * *w;
        }
        for (v, w) in self.plus.iter_mut().zip(&x.plus) {
            *v += a * *w;
        }
    }

    pub fn added(&self, other: &Field<T>) -> Field<T> {
        let mut out = self.clone();
        out.axpy(T::one(), other);
        out
    }

    pub fn subbed(&self, other: &Field<T>) -> Field<T> {
        let mut out = self.clone();
        out.axpy(-T::one(), other);
        out
    }

    pub fn scaled(&self, s: T) -> Field<T> {
        let mut out = self.clone();
        out.scale_in_place(s);
        out
    }

    pub fn linf(&self) -> T {
        self.minus
            .iter()
            .chain(self.plus.iter())
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Pointwise trace on the interface plane of one side.
    pub fn interface_trace(&self, side: Side) -> PlaneField<T> {
        let g = &self.grid;
        let i3 = g.interface_node(side);
        let mut out = PlaneField::zeros(g.n1, g.n2, self.rank.ncomp());
        for c in 0..self.rank.ncomp() {
            for i2 in 0..g.n2 {
                for i1 in 0..g.n1 {
                    out.set(c, i2, i1, self.get(side, c, i1, i2, i3));
                }
            }
        }
        out
    }

    /// Interfacial jump `f_+ - f_-` on the plane `y3 = 0`.
    pub fn interface_jump(&self) -> PlaneField<T> {
        self.interface_trace(Side::Plus)
            .sub(&self.interface_trace(Side::Minus))
    }

    /// Hard-zeroes the outer-wall planes (used after implicit solves to keep
    /// Dirichlet data exact).
    pub fn zero_walls(&mut self) {
        for side in Side::BOTH {
            let i3 = self.grid.wall_node(side);
            for c in 0..self.rank.ncomp() {
                for i2 in 0..self.grid.n2 {
                    for i1 in 0..self.grid.n1 {
                        self.set(side, c, i1, i2, i3, T::zero());
                    }
                }
            }
        }
    }

    /// Copies the minus-side interface plane onto the plus side so both stored
    /// traces agree bitwise.
    pub fn sync_interface_from(&mut self, source: Side) {
        let trace = self.interface_trace(source);
        let dst = match source {
            Side::Minus => Side::Plus,
            Side::Plus => Side::Minus,
        };
        let i3 = self.grid.interface_node(dst);
        for c in 0..self.rank.ncomp() {
            for i2 in 0..self.grid.n2 {
                for i1 in 0..self.grid.n1 {
                    self.set(dst, c, i1, i2, i3, trace.get(c, i2, i1));
                }
            }
        }
    }

    /// Checks the declared tags: interface traces agree and wall planes vanish.
    pub fn validate_tags(&self, tol: T) -> Result<()> {
        if self.tags.interface_continuous {
            let jump = self.interface_jump().linf();
            if jump > tol {
                return Err(Error::ShapeMismatch(format!(
                    "interface jump {:.3e} exceeds continuity tolerance {:.3e}",
                    jump.as_f64(),
                    tol.as_f64()
                )));
            }
        }
        if self.tags.dirichlet_walls {
            for side in Side::BOTH {
                let i3 = self.grid.wall_node(side);
                for c in 0..self.rank.ncomp() {
                    for i2 in 0..self.grid.n2 {
                        for i1 in 0..self.grid.n1 {
                            let v = self.get(side, c, i1, i2, i3).abs();
                            if v > tol {
                                return Err(Error::ShapeMismatch(format!(
                                    "wall value {:.3e} on side {} violates the Dirichlet tag",
                                    v.as_f64(),
                                    side.name()
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Mixed derivative `d1^a1 d2^a2 d3^k3` (horizontal spectral, vertical
    /// second-order stencils, per subdomain).
    pub fn derivative(&self, a1: usize, a2: usize, k3: usize) -> Result<Field<T>> {
        if k3 > MAX_VERTICAL_ORDER {
            return Err(Error::Capability {
                requested: k3,
                supported: MAX_VERTICAL_ORDER,
            });
        }
        let mut out = Field {
            grid: Arc::clone(&self.grid),
            rank: self.rank,
            tags: FieldTags::default(),
            minus: self.minus.clone(),
            plus: self.plus.clone(),
        };
        if self.grid.dim == DimMode::Two && a2 > 0 {
            out.minus.iter_mut().for_each(|v| *v = T::zero());
            out.plus.iter_mut().for_each(|v| *v = T::zero());
            return Ok(out);
        }
        if a1 > 0 || a2 > 0 {
            out.apply_horizontal(a1, a2);
        }
        if k3 > 0 {
            out.apply_vertical(k3);
        }
        Ok(out)
    }

    fn apply_horizontal(&mut self, a1: usize, a2: usize) {
        let g = Arc::clone(&self.grid);
        let pl = g.plane_len();
        let factor1 = spectral_factors(&g, 1, a1);
        let factor2 = spectral_factors(&g, 2, a2);
        let mut buf: Vec<Complex<T>> = vec![Complex::new(T::zero(), T::zero()); pl];
        let mut scratch: Vec<Complex<T>> = vec![Complex::new(T::zero(), T::zero()); pl];
        for side in Side::BOTH {
            let n3 = g.n3(side);
            for c in 0..self.rank.ncomp() {
                for i3 in 0..=n3 {
                    let base = self.side_idx(side, c, 0, 0, i3);
                    let vals = self.values_mut(side);
                    for (k, b) in buf.iter_mut().enumerate() {
                        *b = Complex::new(vals[base + k], T::zero());
                    }
                    plane_fft(&g, &mut buf, &mut scratch, true);
                    for m2 in 0..g.n2 {
                        for m1 in 0..g.n1 {
                            buf[m2 * g.n1 + m1] =
                                buf[m2 * g.n1 + m1] * factor1[m1] * factor2[m2];
                        }
                    }
                    plane_fft(&g, &mut buf, &mut scratch, false);
                    let norm = T::one() / T::from_usize(pl).unwrap();
                    for (k, b) in buf.iter().enumerate() {
                        vals[base + k] = b.re * norm;
                    }
                }
            }
        }
    }

    fn apply_vertical(&mut self, k3: usize) {
        let g = Arc::clone(&self.grid);
        let pl = g.plane_len();
        for side in Side::BOTH {
            let n3 = g.n3(side);
            let mut column = vec![T::zero(); n3 + 1];
            for c in 0..self.rank.ncomp() {
                let base_c = self.side_idx(side, c, 0, 0, 0);
                let vals = self.values_mut(side);
                for p in 0..pl {
                    for (i3, col) in column.iter_mut().enumerate() {
                        *col = vals[base_c + i3 * pl + p];
                    }
                    for i3 in 0..=n3 {
                        let st = g.stencil(side, k3, i3);
                        let mut acc = T::zero();
                        for (k, w) in st.weights.iter().enumerate() {
                            acc += *w * column[st.first + k];
                        }
                        vals[base_c + i3 * pl + p] = acc;
                    }
                }
            }
        }
    }

    /// Squared L2 norm over the slab (trapezoidal vertical x exact-mean
    /// horizontal quadrature, all components summed).
    pub fn l2_sq(&self) -> T {
        let g = &self.grid;
        let wh = g.horizontal_weight();
        let mut total = T::zero();
        for side in Side::BOTH {
            let n3 = g.n3(side);
            let pl = g.plane_len();
            for c in 0..self.rank.ncomp() {
                let data = self.comp(side, c);
                for i3 in 0..=n3 {
                    let w3 = g.vertical_weight(side, i3);
                    let mut s = T::zero();
                    for v in &data[i3 * pl..(i3 + 1) * pl] {
                        s += *v * *v;
                    }
                    total += w3 * wh * s;
                }
            }
        }
        total
    }

    /// Weighted integral of a nodewise function of the field values at one
    /// node (all components exposed), used by the energy functionals.
    pub fn integrate_nodes(&self, f: impl Fn(Side, &[T]) -> T) -> T {
        let g = &self.grid;
        let wh = g.horizontal_weight();
        let nc = self.rank.ncomp();
        let mut vals = vec![T::zero(); nc];
        let mut total = T::zero();
        for side in Side::BOTH {
            let n3 = g.n3(side);
            let pl = g.plane_len();
            for i3 in 0..=n3 {
                let w3 = g.vertical_weight(side, i3) * wh;
                for p in 0..pl {
                    for (c, slot) in vals.iter_mut().enumerate() {
                        *slot = self.values(side)[(c * (n3 + 1) + i3) * pl + p];
                    }
                    total += w3 * f(side, &vals);
                }
            }
        }
        total
    }
}

impl<T: Real> Field<T> {
    /// Number of nodes in one subdomain (levels x plane).
    pub fn nodes_on(&self, side: Side) -> usize {
        (self.grid.n3(side) + 1) * self.grid.plane_len()
    }

    /// Gathers the 3x3 tensor at linear node index `p` (within one side).
    pub fn tensor_at(&self, side: Side, p: usize) -> crate::mat3::Mat3<T> {
        debug_assert_eq!(self.rank, Rank::Tensor);
        let mut m = crate::mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = self.comp(side, tensor_comp(i, j))[p];
            }
        }
        m
    }

    pub fn set_tensor_at(&mut self, side: Side, p: usize, m: &crate::mat3::Mat3<T>) {
        debug_assert_eq!(self.rank, Rank::Tensor);
        for i in 0..3 {
            for j in 0..3 {
                self.comp_mut(side, tensor_comp(i, j))[p] = m[i][j];
            }
        }
    }

    pub fn vec3_at(&self, side: Side, p: usize) -> crate::mat3::Vec3<T> {
        debug_assert_eq!(self.rank, Rank::Vector);
        [
            self.comp(side, 0)[p],
            self.comp(side, 1)[p],
            self.comp(side, 2)[p],
        ]
    }

    pub fn set_vec3_at(&mut self, side: Side, p: usize, v: &crate::mat3::Vec3<T>) {
        debug_assert_eq!(self.rank, Rank::Vector);
        for c in 0..3 {
            self.comp_mut(side, c)[p] = v[c];
        }
    }

    /// Decomposes a linear node index into `(i3, plane_offset)`.
    pub fn split_node(&self, p: usize) -> (usize, usize) {
        (p / self.grid.plane_len(), p % self.grid.plane_len())
    }
}

/// `(i k)^a` multipliers for one horizontal axis, Nyquist zeroed on odd
/// orders.
fn spectral_factors<T: Real>(grid: &SlabGrid<T>, axis: usize, a: usize) -> Vec<Complex<T>> {
    let n = match axis {
        1 => grid.n1,
        _ => grid.n2,
    };
    (0..n)
        .map(|m| {
            if a == 0 {
                Complex::new(T::one(), T::zero())
            } else {
                let k = grid.wavenumber(axis, m, a % 2 == 1);
                Complex::new(T::zero(), k).powu(a as u32)
            }
        })
        .collect()
}

/// In-place 2D FFT of one horizontal plane (row-major, y1 fastest). Forward
/// transforms are unnormalized; callers divide by `n1 * n2` after a round
/// trip.
pub(crate) fn plane_fft<T: Real>(
    grid: &SlabGrid<T>,
    buf: &mut [Complex<T>],
    scratch: &mut [Complex<T>],
    forward: bool,
) {
    let (f1, i1) = grid.fft_axis(1).expect("axis 1 plan");
    let plan1 = if forward { f1 } else { i1 };
    plan1.process(buf);
    if grid.n2 > 1 {
        let (f2, i2) = grid.fft_axis(2).expect("axis 2 plan");
        let plan2 = if forward { f2 } else { i2 };
        // Transpose, batch-FFT the columns, transpose back.
        for i2x in 0..grid.n2 {
            for i1x in 0..grid.n1 {
                scratch[i1x * grid.n2 + i2x] = buf[i2x * grid.n1 + i1x];
            }
        }
        plan2.process(scratch);
        for i1x in 0..grid.n1 {
            for i2x in 0..grid.n2 {
                buf[i2x * grid.n1 + i1x] = scratch[i1x * grid.n2 + i2x];
            }
        }
    }
}

/// Anisotropic Sobolev norm selector: `i` horizontal derivative order, `j`
/// full Sobolev order, `underline` sums all horizontal orders `k <= i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormSpec {
    pub i: usize,
    pub j: usize,
    pub underline: bool,
}

impl NormSpec {
    pub fn new(i: usize, j: usize, underline: bool) -> Self {
        assert!(i <= 3 && j <= 3, "norm orders limited to 3");
        NormSpec { i, j, underline }
    }

    pub fn fixed(i: usize, j: usize) -> Self {
        Self::new(i, j, false)
    }

    pub fn underlined(i: usize, j: usize) -> Self {
        Self::new(i, j, true)
    }
}

/// Squared norm `|f|_{i,j}^2` (or the underlined variant).
pub fn norm_sq<T: Real>(f: &Field<T>, spec: NormSpec) -> Result<T> {
    let mut total = T::zero();
    let lo = if spec.underline { 0 } else { spec.i };
    for k in lo..=spec.i {
        for a1 in 0..=k {
            let a2 = k - a1;
            total += sobolev_sq(f, a1, a2, spec.j)?;
        }
    }
    Ok(total)
}

/// Norm value (square root of [`norm_sq`]).
pub fn norm<T: Real>(f: &Field<T>, spec: NormSpec) -> Result<T> {
    Ok(norm_sq(f, spec)?.sqrt())
}

/// Squared `H^j` norm of a fixed horizontal derivative `d_h^(a1,a2) f`.
fn sobolev_sq<T: Real>(f: &Field<T>, a1: usize, a2: usize, j: usize) -> Result<T> {
    let two_d = f.grid().dim == DimMode::Two;
    if two_d && a2 > 0 {
        return Ok(T::zero());
    }
    let mut total = T::zero();
    for b3 in 0..=j {
        for b2 in 0..=(j - b3) {
            if two_d && b2 > 0 {
                continue;
            }
            for b1 in 0..=(j - b3 - b2) {
                let d = f.derivative(a1 + b1, a2 + b2, b3)?;
                total += d.l2_sq();
            }
        }
    }
    Ok(total)
}

/// Jacobian of a vector field: tensor with entry `(i, j) = d_j f_i`.
pub fn gradient<T: Real>(f: &Field<T>) -> Result<Field<T>> {
    assert_eq!(f.rank(), Rank::Vector, "gradient expects a vector field");
    let grid = Arc::clone(f.grid());
    let mut out = Field::zeros(&grid, Rank::Tensor, FieldTags::default());
    for i in 0..3 {
        for j in 0..3 {
            let (a1, a2, k3) = match j {
                0 => (1, 0, 0),
                1 => (0, 1, 0),
                _ => (0, 0, 1),
            };
            let d = f.derivative(a1, a2, k3)?;
            let c_src = i;
            let c_dst = tensor_comp(i, j);
            for side in Side::BOTH {
                let src = d.comp(side, c_src).to_vec();
                out.comp_mut(side, c_dst).copy_from_slice(&src);
            }
        }
    }
    Ok(out)
}

/// Divergence of a vector field.
pub fn divergence<T: Real>(f: &Field<T>) -> Result<Field<T>> {
    assert_eq!(f.rank(), Rank::Vector, "divergence expects a vector field");
    let grid = Arc::clone(f.grid());
    let mut out = Field::zeros(&grid, Rank::Scalar, FieldTags::default());
    for i in 0..3 {
        let (a1, a2, k3) = match i {
            0 => (1, 0, 0),
            1 => (0, 1, 0),
            _ => (0, 0, 1),
        };
        let d = f.derivative(a1, a2, k3)?;
        for side in Side::BOTH {
            let src = d.comp(side, i).to_vec();
            for (o, s) in out.comp_mut(side, 0).iter_mut().zip(&src) {
                *o += *s;
            }
        }
    }
    Ok(out)
}

/// Row-wise divergence of a tensor field: `(div S)_i = sum_l d_l S_{il}`.
pub fn divergence_rows<T: Real>(s: &Field<T>) -> Result<Field<T>> {
    assert_eq!(s.rank(), Rank::Tensor, "divergence_rows expects a tensor");
    let grid = Arc::clone(s.grid());
    let mut out = Field::zeros(&grid, Rank::Vector, FieldTags::default());
    for l in 0..3 {
        let (a1, a2, k3) = match l {
            0 => (1, 0, 0),
            1 => (0, 1, 0),
            _ => (0, 0, 1),
        };
        let d = s.derivative(a1, a2, k3)?;
        for i in 0..3 {
            let c_src = tensor_comp(i, l);
            for side in Side::BOTH {
                let src = d.comp(side, c_src).to_vec();
                for (o, v) in out.comp_mut(side, i).iter_mut().zip(&src) {
                    *o += *v;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use std::f64::consts::TAU;

    fn grid3(n1: usize, n3: usize) -> Arc<SlabGrid<f64>> {
        SlabGrid::build(&GridSpec {
            h_minus: -1.0,
            h_plus: 1.0,
            l1: TAU,
            l2: TAU,
            n1,
            n2: n1,
            n3m: n3,
            n3p: n3,
            dim: DimMode::Three,
        })
        .unwrap()
    }

    fn sin_y1(grid: &Arc<SlabGrid<f64>>) -> Field<f64> {
        Field::from_fn(grid, Rank::Scalar, FieldTags::default(), |_, _, y1, _, _| {
            y1.sin()
        })
    }

    #[test]
    fn spectral_derivative_of_resolved_mode() {
        let g = grid3(16, 8);
        let f = sin_y1(&g);
        let d = f.derivative(1, 0, 0).unwrap();
        let exact = Field::from_fn(&g, Rank::Scalar, FieldTags::default(), |_, _, y1, _, _| {
            y1.cos()
        });
        let err = d.subbed(&exact).linf();
        assert!(err <= 1e-12, "spectral error {err}");
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = grid3(8, 8);
        let f = Field::from_fn(&g, Rank::Scalar, FieldTags::default(), |_, _, _, _, _| 2.5);
        for (a1, a2, k3) in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (2, 1, 0), (0, 0, 3)] {
            let d = f.derivative(a1, a2, k3).unwrap();
            assert!(d.linf() <= 1e-12);
        }
    }

    #[test]
    fn zero_order_derivative_is_identity() {
        let g = grid3(8, 8);
        let f = sin_y1(&g);
        let d = f.derivative(0, 0, 0).unwrap();
        assert!(f.subbed(&d).linf() <= 1e-14);
    }

    #[test]
    fn vertical_order_beyond_capability_errors() {
        let g = grid3(8, 8);
        let f = sin_y1(&g);
        assert!(matches!(
            f.derivative(0, 0, 4),
            Err(Error::Capability { .. })
        ));
    }

    #[test]
    fn l2_norm_of_sine_is_two_pi() {
        let g = grid3(16, 8);
        let f = sin_y1(&g);
        let n = norm(&f, NormSpec::fixed(0, 0)).unwrap();
        assert!((n - TAU).abs() <= 1e-10, "norm {n}");
        let n10 = norm(&f, NormSpec::fixed(1, 0)).unwrap();
        assert!((n10 - TAU).abs() <= 1e-10, "norm {n10}");
    }

    #[test]
    fn zero_field_norm_is_zero() {
        let g = grid3(8, 8);
        let f = Field::zeros(&g, Rank::Vector, FieldTags::default());
        for i in 0..=3 {
            for j in 0..=3 {
                assert_eq!(norm(&f, NormSpec::underlined(i, j)).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn underline_norm_is_sum_of_fixed_orders() {
        let g = grid3(8, 8);
        let f = Field::from_fn(&g, Rank::Scalar, FieldTags::default(), |_, _, y1, y2, y3| {
            (y1.sin() + (2.0 * y2).cos()) * (1.0 + y3) + 0.3 * (y1 - y2).cos()
        });
        let i = 2;
        let j = 1;
        let under = norm_sq(&f, NormSpec::underlined(i, j)).unwrap();
        let mut sum = 0.0;
        for k in 0..=i {
            sum += norm_sq(&f, NormSpec::fixed(k, j)).unwrap();
        }
        assert!((under - sum).abs() <= 1e-12 * (1.0 + sum.abs()));
    }

    #[test]
    fn interface_jump_examples() {
        let g = grid3(8, 8);
        // Continuous field -> zero jump.
        let cont = Field::from_fn(&g, Rank::Scalar, FieldTags::default(), |_, _, y1, _, y3| {
            (y1 + y3).sin()
        });
        assert!(cont.interface_jump().linf() <= 1e-15);
        // One-sided constants -> plane of ones.
        let step = Field::from_fn(&g, Rank::Scalar, FieldTags::default(), |s, _, _, _, _| {
            match s {
                Side::Plus => 1.0,
                Side::Minus => 0.0,
            }
        });
        let j = step.interface_jump();
        assert!((j.linf() - 1.0).abs() <= 1e-15);
        // y3 * chi(y3 > 0): both traces vanish at the interface.
        let kinked = Field::from_fn(&g, Rank::Scalar, FieldTags::default(), |s, _, _, _, y3| {
            match s {
                Side::Plus => y3,
                Side::Minus => 0.0,
            }
        });
        assert!(kinked.interface_jump().linf() <= 1e-15);
    }

    #[test]
    fn norm_triangle_and_homogeneity() {
        use rand::{Rng, SeedableRng};
        let g = grid3(8, 4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let mut a = Field::zeros(&g, Rank::Scalar, FieldTags::default());
            let mut b = Field::zeros(&g, Rank::Scalar, FieldTags::default());
            a.map_in_place(|_| rng.gen_range(-1.0..1.0));
            b.map_in_place(|_| rng.gen_range(-1.0..1.0));
            let spec = NormSpec::underlined(1, 1);
            let na = norm(&a, spec).unwrap();
            let nb = norm(&b, spec).unwrap();
            let nab = norm(&a.added(&b), spec).unwrap();
            assert!(nab <= na + nb + 1e-10);
            let ns = norm(&a.scaled(-2.5), spec).unwrap();
            assert!((ns - 2.5 * na).abs() <= 1e-10 * (1.0 + na));
        }
    }
}
