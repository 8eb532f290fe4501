//! Direct solver for the stratified Lame problem with interface jump data.
//!
//! Canonical form solved here (piecewise-constant coefficients per side):
//!
//! ```text
//! c0 w - div sigma(w) = F      in each subdomain,
//! [[w]] = 0,  [[sigma(w)]] e3 = G   on y3 = 0,
//! w = 0                        on the outer walls,
//! sigma(w) = alpha D w + beta div w I + gamma grad w,  D w = grad w + grad w^T.
//! ```
//!
//! Horizontal Fourier diagonalization turns this into one banded complex
//! system per wavevector over the shared vertical node set (the interface node
//! is a single unknown; continuity is structural). The same assembly serves
//! the compatibility correction (`c0 = 0`, pure viscous stress) and the
//! implicit time step (`c0 = rho_bar`, kappa/pressure terms folded into the
//! coefficients).

use std::sync::Arc;

use num_complex::Complex;

use crate::banded::{BandedLu, BandedMatrix};
use crate::error::{Error, Result};
use crate::field::{divergence, gradient, plane_fft, tensor_comp, Field, FieldTags, PlaneField, Rank};
use crate::grid::{Side, SlabGrid};
use crate::kinematics::{deformation, MaterialParams};
use crate::scalar::Real;
use crate::stress::{assemble_stress, interface_rhs};

/// Stress-form coefficients per side: `sigma(w) = alpha D w + beta div w I
/// + gamma grad w`. The induced volume operator is
/// `div sigma(w) = (alpha + gamma) Lap w + (alpha + beta) grad div w`.
#[derive(Debug, Clone, Copy)]
pub struct SigmaCoeffs<T> {
    pub alpha: [T; 2],
    pub beta: [T; 2],
    pub gamma: [T; 2],
}

impl<T: Real> SigmaCoeffs<T> {
    /// Plain viscous stress `mu D w + lambda div w I`.
    pub fn viscous(params: &MaterialParams<T>) -> Self {
        SigmaCoeffs {
            alpha: [params.mu(Side::Minus), params.mu(Side::Plus)],
            beta: [params.lambda(Side::Minus), params.lambda(Side::Plus)],
            gamma: [T::zero(); 2],
        }
    }

    /// Stress of the elastic/pressure block: `P'(rho) rho div w I + kappa grad w`.
    pub fn elastic_pressure(params: &MaterialParams<T>) -> Self {
        SigmaCoeffs {
            alpha: [T::zero(); 2],
            beta: [
                params.p_prime_rho(Side::Minus),
                params.p_prime_rho(Side::Plus),
            ],
            gamma: [params.kappa, params.kappa],
        }
    }

    pub fn side(&self, side: Side) -> (T, T, T) {
        let k = side.index();
        (self.alpha[k], self.beta[k], self.gamma[k])
    }

    pub fn scaled(&self, s: T) -> Self {
        let mul = |a: [T; 2]| [a[0] * s, a[1] * s];
        SigmaCoeffs {
            alpha: mul(self.alpha),
            beta: mul(self.beta),
            gamma: mul(self.gamma),
        }
    }

    pub fn added(&self, other: &Self) -> Self {
        let add = |a: [T; 2], b: [T; 2]| [a[0] + b[0], a[1] + b[1]];
        SigmaCoeffs {
            alpha: add(self.alpha, other.alpha),
            beta: add(self.beta, other.beta),
            gamma: add(self.gamma, other.gamma),
        }
    }
}

/// Stratified Lame problem in the layout of the appendix lemma plus the
/// optional zero-order/kappa/pressure extensions used by the implicit step.
pub struct LameProblem<T> {
    pub f: Field<T>,
    pub g: PlaneField<T>,
    pub mu: [T; 2],
    pub lambda: [T; 2],
    pub extra_zero_order: [T; 2],
    pub extra_grad_div: [T; 2],
    pub extra_laplacian: [T; 2],
}

impl<T: Real> LameProblem<T> {
    pub fn new(f: Field<T>, g: PlaneField<T>, mu: [T; 2], lambda: [T; 2]) -> Self {
        LameProblem {
            f,
            g,
            mu,
            lambda,
            extra_zero_order: [T::zero(); 2],
            extra_grad_div: [T::zero(); 2],
            extra_laplacian: [T::zero(); 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for side in Side::BOTH {
            let k = side.index();
            if self.mu[k] <= T::zero() || self.mu[k] + self.lambda[k] <= T::zero() {
                return Err(Error::Config(format!(
                    "Lame coefficients ill-posed on side {}: mu = {:.3e}, mu + lambda = {:.3e}",
                    side.name(),
                    self.mu[k].as_f64(),
                    (self.mu[k] + self.lambda[k]).as_f64()
                )));
            }
            if self.extra_zero_order[k] < T::zero()
                || self.extra_grad_div[k] < T::zero()
                || self.extra_laplacian[k] < T::zero()
            {
                return Err(Error::Config(
                    "optional zero-order/grad-div/Laplacian coefficients must be nonnegative"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    pub fn sigma(&self) -> SigmaCoeffs<T> {
        SigmaCoeffs {
            alpha: self.mu,
            beta: [
                self.lambda[0] + self.extra_grad_div[0],
                self.lambda[1] + self.extra_grad_div[1],
            ],
            gamma: self.extra_laplacian,
        }
    }
}

/// Spectral data of a vector field: one complex column of `3 N` unknowns per
/// horizontal mode, `N = n3m + n3p + 1` shared vertical nodes.
pub struct ModeStack<T> {
    pub n_modes: usize,
    pub nvert: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ModeStack<T> {
    pub fn zeros(n_modes: usize, nvert: usize) -> Self {
        ModeStack {
            n_modes,
            nvert,
            data: vec![Complex::new(T::zero(), T::zero()); n_modes * 3 * nvert],
        }
    }

    pub fn mode(&self, m: usize) -> &[Complex<T>] {
        &self.data[m * 3 * self.nvert..(m + 1) * 3 * self.nvert]
    }

    pub fn mode_mut(&mut self, m: usize) -> &mut [Complex<T>] {
        &mut self.data[m * 3 * self.nvert..(m + 1) * 3 * self.nvert]
    }
}

/// Number of shared vertical nodes.
pub fn nvert<T: Real>(grid: &SlabGrid<T>) -> usize {
    grid.n3m + grid.n3p + 1
}

/// Global vertical index of a subdomain-local node.
pub fn global_node<T: Real>(grid: &SlabGrid<T>, side: Side, i3: usize) -> usize {
    match side {
        Side::Minus => i3,
        Side::Plus => grid.n3m + i3,
    }
}

/// Forward transform of a vector field into per-mode vertical columns.
pub fn field_to_modes<T: Real>(f: &Field<T>) -> ModeStack<T> {
    assert_eq!(f.rank(), Rank::Vector);
    let grid = f.grid();
    let pl = grid.plane_len();
    let nv = nvert(grid);
    let mut stack = ModeStack::zeros(pl, nv);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); pl];
    let mut scratch = buf.clone();
    for side in Side::BOTH {
        let n3 = grid.n3(side);
        for c in 0..3 {
            let data = f.comp(side, c);
            for i3 in 0..=n3 {
                if side == Side::Plus && i3 == 0 {
                    continue; // interface already written from the minus side
                }
                let g = global_node(grid.as_ref(), side, i3);
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = Complex::new(data[i3 * pl + k], T::zero());
                }
                plane_fft(grid, &mut buf, &mut scratch, true);
                for (m, v) in buf.iter().enumerate() {
                    stack.mode_mut(m)[3 * g + c] = *v;
                }
            }
        }
    }
    stack
}

/// Inverse transform back to a vector field; the interface value is written to
/// both subdomain planes and the walls are left exactly as solved.
pub fn modes_to_field<T: Real>(
    stack: &ModeStack<T>,
    grid: &Arc<SlabGrid<T>>,
    tags: FieldTags,
) -> Field<T> {
    let pl = grid.plane_len();
    let nv = stack.nvert;
    let mut out = Field::zeros(grid, Rank::Vector, tags);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); pl];
    let mut scratch = buf.clone();
    let norm = T::one() / T::from_usize(pl).unwrap();
    for c in 0..3 {
        for g in 0..nv {
            for (m, b) in buf.iter_mut().enumerate() {
                *b = stack.mode(m)[3 * g + c];
            }
            plane_fft(grid, &mut buf, &mut scratch, false);
            let write = |field: &mut Field<T>, side: Side, i3: usize| {
                let base = field.side_idx(side, c, 0, 0, i3);
                for k in 0..pl {
                    field.values_mut(side)[base + k] = buf[k].re * norm;
                }
            };
            if g < grid.n3m {
                write(&mut out, Side::Minus, g);
            } else if g == grid.n3m {
                write(&mut out, Side::Minus, grid.n3m);
                write(&mut out, Side::Plus, 0);
            } else {
                write(&mut out, Side::Plus, g - grid.n3m);
            }
        }
    }
    out
}

/// Spectral data of an interface-plane vector (3 components per mode).
pub fn plane_to_modes<T: Real>(g: &PlaneField<T>, grid: &SlabGrid<T>) -> Vec<Complex<T>> {
    assert_eq!(g.ncomp, 3);
    let pl = grid.plane_len();
    let mut out = vec![Complex::new(T::zero(), T::zero()); pl * 3];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); pl];
    let mut scratch = buf.clone();
    for c in 0..3 {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(g.values[c * pl + k], T::zero());
        }
        plane_fft(grid, &mut buf, &mut scratch, true);
        for (m, v) in buf.iter().enumerate() {
            out[m * 3 + c] = *v;
        }
    }
    out
}

/// Wavevector of horizontal mode index `m` (odd-derivative convention:
/// Nyquist mapped to zero, matching the spectral derivative operators).
pub fn mode_wavevector<T: Real>(grid: &SlabGrid<T>, m: usize) -> (T, T) {
    let m1 = m % grid.n1;
    let m2 = m / grid.n1;
    (grid.wavenumber(1, m1, true), grid.wavenumber(2, m2, true))
}

/// Scalar band widths of the per-mode systems (block bandwidth two).
const KL: usize = 8;
const KU: usize = 8;

/// Emits the matrix entries of `(div sigma(w))_p` at one interior node as
/// `(global_column_node, component, coefficient)` triples.
fn emit_operator_row<T: Real>(
    grid: &SlabGrid<T>,
    side: Side,
    i3: usize,
    p: usize,
    xi: (T, T),
    sigma: &SigmaCoeffs<T>,
    mut emit: impl FnMut(usize, usize, Complex<T>),
) {
    let (alpha, beta, gamma) = sigma.side(side);
    let a = alpha + gamma;
    let b = alpha + beta;
    let (xi1, xi2) = xi;
    let xi_sq = xi1 * xi1 + xi2 * xi2;
    let d1 = grid.stencil(side, 1, i3);
    let d2 = grid.stencil(side, 2, i3);
    let me = global_node(grid, side, i3);
    let zero = T::zero();

    // a * Lap w_p = a (D2 - |xi|^2) w_p
    for (k, w) in d2.weights.iter().enumerate() {
        let gcol = global_node(grid, side, d2.first + k);
        emit(gcol, p, Complex::new(a * *w, zero));
    }
    emit(me, p, Complex::new(-a * xi_sq, zero));

    // b * (grad div w)_p
    match p {
        0 => {
            emit(me, 0, Complex::new(-b * xi1 * xi1, zero));
            emit(me, 1, Complex::new(-b * xi1 * xi2, zero));
            for (k, w) in d1.weights.iter().enumerate() {
                let gcol = global_node(grid, side, d1.first + k);
                emit(gcol, 2, Complex::new(zero, b * xi1 * *w));
            }
        }
        1 => {
            emit(me, 0, Complex::new(-b * xi1 * xi2, zero));
            emit(me, 1, Complex::new(-b * xi2 * xi2, zero));
            for (k, w) in d1.weights.iter().enumerate() {
                let gcol = global_node(grid, side, d1.first + k);
                emit(gcol, 2, Complex::new(zero, b * xi2 * *w));
            }
        }
        _ => {
            for (k, w) in d1.weights.iter().enumerate() {
                let gcol = global_node(grid, side, d1.first + k);
                emit(gcol, 0, Complex::new(zero, b * xi1 * *w));
                emit(gcol, 1, Complex::new(zero, b * xi2 * *w));
            }
            for (k, w) in d2.weights.iter().enumerate() {
                let gcol = global_node(grid, side, d2.first + k);
                emit(gcol, 2, Complex::new(b * *w, zero));
            }
        }
    }
}

/// Emits the entries of `(sigma(w) e3)_p` evaluated one-sidedly at the
/// interface from `side`.
fn emit_sigma_trace_row<T: Real>(
    grid: &SlabGrid<T>,
    side: Side,
    p: usize,
    xi: (T, T),
    sigma: &SigmaCoeffs<T>,
    mut emit: impl FnMut(usize, usize, Complex<T>),
) {
    let (alpha, beta, gamma) = sigma.side(side);
    let (xi1, xi2) = xi;
    let i3 = grid.interface_node(side);
    let d1 = grid.stencil(side, 1, i3);
    let me = global_node(grid, side, i3);
    let zero = T::zero();
    match p {
        0 => {
            for (k, w) in d1.weights.iter().enumerate() {
                let gcol = global_node(grid, side, d1.first + k);
                emit(gcol, 0, Complex::new((alpha + gamma) * *w, zero));
            }
            emit(me, 2, Complex::new(zero, alpha * xi1));
        }
        1 => {
            for (k, w) in d1.weights.iter().enumerate() {
                let gcol = global_node(grid, side, d1.first + k);
                emit(gcol, 1, Complex::new((alpha + gamma) * *w, zero));
            }
            emit(me, 2, Complex::new(zero, alpha * xi2));
        }
        _ => {
            for (k, w) in d1.weights.iter().enumerate() {
                let gcol = global_node(grid, side, d1.first + k);
                emit(
                    gcol,
                    2,
                    Complex::new((T::lit(2.0) * alpha + gamma + beta) * *w, zero),
                );
            }
            emit(me, 0, Complex::new(zero, beta * xi1));
            emit(me, 1, Complex::new(zero, beta * xi2));
        }
    }
}

/// Assembles the full per-mode matrix: `c0 w - div sigma(w)` at interior
/// nodes, Dirichlet rows at the walls, stress-jump rows at the interface.
pub fn assemble_mode_matrix<T: Real>(
    grid: &SlabGrid<T>,
    sigma: &SigmaCoeffs<T>,
    c0: [T; 2],
    xi: (T, T),
) -> BandedMatrix<T> {
    let nv = nvert(grid);
    let n = 3 * nv;
    let mut m = BandedMatrix::new(n, KL, KU);
    let one = Complex::new(T::one(), T::zero());

    // Walls: Dirichlet.
    for p in 0..3 {
        m.set(p, p, one);
        m.set(3 * (nv - 1) + p, 3 * (nv - 1) + p, one);
    }

    // Interior momentum rows.
    for side in Side::BOTH {
        let n3 = grid.n3(side);
        for i3 in 1..n3 {
            // The interface node (minus: i3 = n3m, plus: i3 = 0) and walls are
            // excluded by the 1..n3 range and the side-specific mapping below.
            if side == Side::Plus && i3 == 0 {
                continue;
            }
            let g = global_node(grid, side, i3);
            if g == grid.n3m {
                continue;
            }
            let row_c0 = c0[side.index()];
            for p in 0..3 {
                let row = 3 * g + p;
                m.add(row, row, Complex::new(row_c0, T::zero()));
                emit_operator_row(grid, side, i3, p, xi, sigma, |gcol, comp, v| {
                    m.add(row, 3 * gcol + comp, -v);
                });
            }
        }
    }

    // Interface: jump of the stress trace.
    let gi = grid.n3m;
    for p in 0..3 {
        let row = 3 * gi + p;
        emit_sigma_trace_row(grid, Side::Plus, p, xi, sigma, |gcol, comp, v| {
            m.add(row, 3 * gcol + comp, v);
        });
        emit_sigma_trace_row(grid, Side::Minus, p, xi, sigma, |gcol, comp, v| {
            m.add(row, 3 * gcol + comp, -v);
        });
    }
    m
}

/// Applies the interior operator `div sigma(w)` to one mode column (constraint
/// rows produce zeros). Used for the explicit part of the time step and for
/// the velocity-derivative recovery.
pub fn apply_interior_operator<T: Real>(
    grid: &SlabGrid<T>,
    sigma: &SigmaCoeffs<T>,
    xi: (T, T),
    col: &[Complex<T>],
    out: &mut [Complex<T>],
) {
    let nv = nvert(grid);
    debug_assert_eq!(col.len(), 3 * nv);
    for v in out.iter_mut() {
        *v = Complex::new(T::zero(), T::zero());
    }
    for side in Side::BOTH {
        let n3 = grid.n3(side);
        for i3 in 1..n3 {
            if side == Side::Plus && i3 == 0 {
                continue;
            }
            let g = global_node(grid, side, i3);
            if g == grid.n3m {
                continue;
            }
            for p in 0..3 {
                let row = 3 * g + p;
                let mut acc = Complex::new(T::zero(), T::zero());
                emit_operator_row(grid, side, i3, p, xi, sigma, |gcol, comp, v| {
                    acc += v * col[3 * gcol + comp];
                });
                out[row] = acc;
            }
        }
    }
}

/// Accumulates `(div sigma(w))_p` at one node of one side into `acc`, using
/// that side's stencils (one-sided at the interface and walls). Used for the
/// interface trace of the recovered velocity derivative.
pub fn accumulate_operator_row<T: Real>(
    grid: &SlabGrid<T>,
    side: Side,
    i3: usize,
    p: usize,
    xi: (T, T),
    sigma: &SigmaCoeffs<T>,
    col: &[Complex<T>],
    acc: &mut Complex<T>,
) {
    emit_operator_row(grid, side, i3, p, xi, sigma, |gcol, comp, v| {
        *acc += v * col[3 * gcol + comp];
    });
}

/// Evaluates the jump `[[sigma(w)]] e3` of one mode column at the interface.
pub fn jump_expression_mode<T: Real>(
    grid: &SlabGrid<T>,
    sigma: &SigmaCoeffs<T>,
    xi: (T, T),
    col: &[Complex<T>],
) -> [Complex<T>; 3] {
    let mut out = [Complex::new(T::zero(), T::zero()); 3];
    for (p, slot) in out.iter_mut().enumerate() {
        let mut acc = Complex::new(T::zero(), T::zero());
        emit_sigma_trace_row(grid, Side::Plus, p, xi, sigma, |gcol, comp, v| {
            acc += v * col[3 * gcol + comp];
        });
        emit_sigma_trace_row(grid, Side::Minus, p, xi, sigma, |gcol, comp, v| {
            acc -= v * col[3 * gcol + comp];
        });
        *slot = acc;
    }
    out
}

/// Factorized per-mode systems for one coefficient set; reusable across
/// arbitrarily many solves (every implicit step of a run shares one of these).
pub struct StratifiedSolver<T> {
    grid: Arc<SlabGrid<T>>,
    pub sigma: SigmaCoeffs<T>,
    pub c0: [T; 2],
    mats: Vec<BandedMatrix<T>>,
    lus: Vec<BandedLu<T>>,
}

impl<T: Real> StratifiedSolver<T> {
    pub fn new(grid: &Arc<SlabGrid<T>>, sigma: SigmaCoeffs<T>, c0: [T; 2]) -> Result<Self> {
        let n_modes = grid.plane_len();
        let mut mats = Vec::with_capacity(n_modes);
        let mut lus = Vec::with_capacity(n_modes);
        for m in 0..n_modes {
            let xi = mode_wavevector(grid.as_ref(), m);
            let mat = assemble_mode_matrix(grid.as_ref(), &sigma, c0, xi);
            let lu = mat.factor().map_err(|col| Error::IllPosedMode {
                xi1: xi.0.as_f64(),
                xi2: xi.1.as_f64(),
                reason: format!("singular pivot at unknown {col}"),
            })?;
            mats.push(mat);
            lus.push(lu);
        }
        Ok(StratifiedSolver {
            grid: Arc::clone(grid),
            sigma,
            c0,
            mats,
            lus,
        })
    }

    pub fn grid(&self) -> &Arc<SlabGrid<T>> {
        &self.grid
    }

    /// Solves all modes in place; returns the maximum scaled residual.
    pub fn solve_stack(&self, rhs: &mut ModeStack<T>) -> T {
        let mut worst = T::zero();
        for m in 0..rhs.n_modes {
            let col = rhs.mode_mut(m);
            let b: Vec<Complex<T>> = col.to_vec();
            self.lus[m].solve_in_place(col);
            let ax = self.mats[m].matvec(col);
            let mut num = T::zero();
            let mut xn = T::zero();
            let mut bn = T::zero();
            for ((axi, bi), xi) in ax.iter().zip(&b).zip(col.iter()) {
                num = num.max((axi - bi).norm());
                bn = bn.max(bi.norm());
                xn = xn.max(xi.norm());
            }
            let denom = bn.max(self.mat_inf_norm(m) * xn);
            if denom > T::zero() {
                worst = worst.max(num / denom);
            }
        }
        worst
    }

    fn mat_inf_norm(&self, m: usize) -> T {
        let mat = &self.mats[m];
        let n = mat.n;
        let mut worst = T::zero();
        for i in 0..n {
            let mut row = T::zero();
            for j in i.saturating_sub(mat.kl)..=(i + mat.ku).min(n - 1) {
                row += mat.get(i, j).norm();
            }
            worst = worst.max(row);
        }
        worst
    }

    /// Full solve from physical-space data. Constraint rows of the right-hand
    /// side are populated from `g`; walls are homogeneous.
    pub fn solve(&self, f: &Field<T>, g: &PlaneField<T>) -> Result<(Field<T>, T)> {
        let grid = &self.grid;
        let mut rhs = field_to_modes(f);
        let ghat = plane_to_modes(g, grid.as_ref());
        let nv = rhs.nvert;
        for m in 0..rhs.n_modes {
            let col = rhs.mode_mut(m);
            for p in 0..3 {
                col[p] = Complex::new(T::zero(), T::zero());
                col[3 * (nv - 1) + p] = Complex::new(T::zero(), T::zero());
                col[3 * grid.n3m + p] = ghat[m * 3 + p];
            }
        }
        let residual = self.solve_stack(&mut rhs);
        let mut w = modes_to_field(&rhs, grid, FieldTags::displacement());
        w.zero_walls();
        Ok((w, residual))
    }
}

/// Solves a [`LameProblem`] with freshly factorized mode systems.
pub fn solve<T: Real>(problem: &LameProblem<T>) -> Result<(Field<T>, T)> {
    problem.validate()?;
    let grid = Arc::clone(problem.f.grid());
    let solver = StratifiedSolver::new(&grid, problem.sigma(), problem.extra_zero_order)?;
    solver.solve(&problem.f, &problem.g)
}

/// Jump of the linearized stress expression
/// `[[P' rho div eta I + mu D u + lambda div u I + kappa grad eta]] e3`
/// evaluated with one-sided field stencils (the compatibility checker).
pub fn linear_jump_expression<T: Real>(
    eta: &Field<T>,
    u: &Field<T>,
    params: &MaterialParams<T>,
) -> Result<PlaneField<T>> {
    let grid = eta.grid();
    let grad_u = gradient(u)?;
    let div_u = divergence(u)?;
    let grad_eta = gradient(eta)?;
    let div_eta = divergence(eta)?;
    let mut traces: [PlaneField<T>; 2] = [
        PlaneField::zeros(grid.n1, grid.n2, 3),
        PlaneField::zeros(grid.n1, grid.n2, 3),
    ];
    for side in Side::BOTH {
        let mu = params.mu(side);
        let lambda = params.lambda(side);
        let kappa = params.kappa;
        let stiff = params.p_prime_rho(side);
        let gu = grad_u.interface_trace(side);
        let du = div_u.interface_trace(side);
        let ge = grad_eta.interface_trace(side);
        let de = div_eta.interface_trace(side);
        let out = &mut traces[side.index()];
        for i2 in 0..grid.n2 {
            for i1 in 0..grid.n1 {
                for i in 0..3 {
                    // (D u e3)_i = d3 u_i + d_i u_3
                    let dui = gu.get(tensor_comp(i, 2), i2, i1) + gu.get(tensor_comp(2, i), i2, i1);
                    let mut v = mu * dui + kappa * ge.get(tensor_comp(i, 2), i2, i1);
                    if i == 2 {
                        v += lambda * du.get(0, i2, i1) + stiff * de.get(0, i2, i1);
                    }
                    out.set(i, i2, i1, v);
                }
            }
        }
    }
    Ok(traces[Side::Plus.index()].sub(&traces[Side::Minus.index()]))
}

/// Residual of the nonlinear compatibility condition on initial data:
/// linear jump expression minus the nonlinear interface data.
pub fn compatibility_residual<T: Real>(
    eta: &Field<T>,
    u: &Field<T>,
    params: &MaterialParams<T>,
) -> Result<PlaneField<T>> {
    let lin = linear_jump_expression(eta, u, params)?;
    let state = deformation(eta)?;
    let nl = assemble_stress(&state, u, params)?;
    Ok(lin.sub(&interface_rhs(&nl)))
}

/// Compatibility correction for the companion linear problem: solves the
/// homogeneous stratified Lame problem whose stress jump cancels the
/// nonlinear interface data of `(eta0, u0)`.
pub fn initial_correction<T: Real>(
    eta0: &Field<T>,
    u0: &Field<T>,
    params: &MaterialParams<T>,
) -> Result<Field<T>> {
    let grid = Arc::clone(eta0.grid());
    let state = deformation(eta0)?;
    let nl = assemble_stress(&state, u0, params)?;
    let g = interface_rhs(&nl).scaled(-T::one());
    let problem = LameProblem::new(
        Field::zeros(&grid, Rank::Vector, FieldTags::default()),
        g,
        [params.mu(Side::Minus), params.mu(Side::Plus)],
        [params.lambda(Side::Minus), params.lambda(Side::Plus)],
    );
    let (w, _residual) = solve(&problem)?;
    Ok(w)
}

/// Iterative projection of `u0` onto the nonlinear compatibility manifold
/// (fixed-point of Lame corrections; converges geometrically for small
/// deformations). Returns the projected velocity and the final residual.
pub fn project_compatible<T: Real>(
    eta0: &Field<T>,
    u0: &Field<T>,
    params: &MaterialParams<T>,
    tol: T,
    max_iter: usize,
) -> Result<(Field<T>, T)> {
    let mut u = u0.clone();
    let mut res = compatibility_residual(eta0, &u, params)?.linf();
    for _ in 0..max_iter {
        if res <= tol {
            break;
        }
        let r = compatibility_residual(eta0, &u, params)?;
        let problem = LameProblem::new(
            Field::zeros(eta0.grid(), Rank::Vector, FieldTags::default()),
            r.scaled(-T::one()),
            [params.mu(Side::Minus), params.mu(Side::Plus)],
            [params.lambda(Side::Minus), params.lambda(Side::Plus)],
        );
        let (v, _) = solve(&problem)?;
        u.axpy(T::one(), &v);
        res = compatibility_residual(eta0, &u, params)?.linf();
    }
    Ok((u, res))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DimMode, GridSpec};
    use std::f64::consts::{PI, TAU};

    fn grid2d(n1: usize, n3: usize) -> Arc<SlabGrid<f64>> {
        SlabGrid::build(&GridSpec {
            h_minus: -1.0,
            h_plus: 1.0,
            l1: TAU,
            l2: TAU,
            n1,
            n2: 1,
            n3m: n3,
            n3p: n3,
            dim: DimMode::Two,
        })
        .unwrap()
    }

    fn params_equal() -> MaterialParams<f64> {
        MaterialParams::balanced([1.0, 1.0], [1.0, 1.0], [1.0, 1.0], 50.0, [2.0, 2.0], 1.0)
            .unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let g = grid2d(8, 8);
        let problem = LameProblem::new(
            Field::zeros(&g, Rank::Vector, FieldTags::default()),
            PlaneField::zeros(g.n1, g.n2, 3),
            [1.0, 2.0],
            [0.5, 0.3],
        );
        let (w, res) = solve(&problem).unwrap();
        assert_eq!(w.linf(), 0.0);
        assert!(res <= 1e-12);
    }

    #[test]
    fn ill_posed_coefficients_rejected() {
        let g = grid2d(8, 8);
        let problem = LameProblem::new(
            Field::zeros(&g, Rank::Vector, FieldTags::default()),
            PlaneField::zeros(g.n1, g.n2, 3),
            [1.0, -1.0],
            [0.5, 0.3],
        );
        assert!(matches!(solve(&problem), Err(Error::Config(_))));
    }

    /// Manufactured solution with equal coefficients:
    /// w = (0, 0, sin y1 sin(pi (y3 + 1) / 2)).
    fn manufactured_error(n3: usize) -> f64 {
        let g = grid2d(16, n3);
        let (mu, lambda) = (1.0, 0.5);
        let (a, b) = (mu, mu + lambda);
        let k = PI / 2.0;
        let w3 = |y1: f64, y3: f64| y1.sin() * (k * (y3 + 1.0)).sin();
        let exact = Field::from_fn(&g, Rank::Vector, FieldTags::displacement(), |_, c, y1, _, y3| {
            if c == 2 {
                w3(y1, y3)
            } else {
                0.0
            }
        });
        // f = -div sigma(w): f1 = -b d1 d3 w3, f3 = a (1 + k^2) w3 + b k^2 w3.
        let f = Field::from_fn(&g, Rank::Vector, FieldTags::default(), |_, c, y1, _, y3| {
            match c {
                0 => -b * y1.cos() * k * (k * (y3 + 1.0)).cos(),
                2 => (a * (1.0 + k * k) + b * k * k) * w3(y1, y3),
                _ => 0.0,
            }
        });
        let problem = LameProblem::new(f, PlaneField::zeros(g.n1, g.n2, 3), [mu, mu], [lambda, lambda]);
        let (w, res) = solve(&problem).unwrap();
        assert!(res <= 1e-10, "mode residual {res}");
        w.subbed(&exact).linf()
    }

    #[test]
    fn manufactured_solution_second_order() {
        let e1 = manufactured_error(8);
        let e2 = manufactured_error(16);
        let e3 = manufactured_error(32);
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!(o1 >= 1.9 && o2 >= 1.9, "orders {o1} {o2} (errors {e1} {e2} {e3})");
    }

    #[test]
    fn solver_is_linear() {
        use rand::{Rng, SeedableRng};
        let g = grid2d(8, 8);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut rand_field = || {
            let mut f = Field::zeros(&g, Rank::Vector, FieldTags::default());
            f.map_in_place(|_| rng.gen_range(-1.0..1.0));
            f
        };
        let f1 = rand_field();
        let f2 = rand_field();
        let mut g1 = PlaneField::zeros(g.n1, g.n2, 3);
        let mut g2 = PlaneField::zeros(g.n1, g.n2, 3);
        let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        g1.values.iter_mut().for_each(|v| *v = rng2.gen_range(-1.0..1.0));
        g2.values.iter_mut().for_each(|v| *v = rng2.gen_range(-1.0..1.0));
        let coeffs = ([1.0, 2.0], [0.4, 0.1]);
        let solve1 = |f: Field<f64>, gg: PlaneField<f64>| {
            let p = LameProblem::new(f, gg, coeffs.0, coeffs.1);
            solve(&p).unwrap().0
        };
        let (aa, bb) = (0.7, -1.3);
        let combined = solve1(
            f1.scaled(aa).added(&f2.scaled(bb)),
            g1.scaled(aa).add(&g2.scaled(bb)),
        );
        let separate = solve1(f1, g1).scaled(aa).added(&solve1(f2, g2).scaled(bb));
        let err = combined.subbed(&separate).linf();
        let scale = combined.linf().max(1.0);
        assert!(err <= 1e-10 * scale, "linearity violation {err}");
    }

    #[test]
    fn initial_correction_vanishes_for_zero_eta() {
        let g = grid2d(8, 8);
        let p = params_equal();
        let eta0 = Field::zeros(&g, Rank::Vector, FieldTags::displacement());
        // u0 = 0
        let u0 = Field::zeros(&g, Rank::Vector, FieldTags::displacement());
        let ur = initial_correction(&eta0, &u0, &p).unwrap();
        assert_eq!(ur.linf(), 0.0);
        // u0 != 0: nonlinear data still vanishes at zero deformation.
        let u0 = Field::from_fn(&g, Rank::Vector, FieldTags::displacement(), |_, c, y1, _, y3| {
            if c == 0 {
                0.3 * y1.sin() * (PI * (y3 + 1.0) / 2.0).sin()
            } else {
                0.0
            }
        });
        let ur = initial_correction(&eta0, &u0, &p).unwrap();
        assert_eq!(ur.linf(), 0.0);
    }

    #[test]
    fn initial_correction_quadratic_in_eta() {
        let g = grid2d(16, 8);
        let p = params_equal();
        let u0 = Field::zeros(&g, Rank::Vector, FieldTags::displacement());
        let profile = |y3: f64| (PI * (y3 + 1.0) / 2.0).sin();
        let mut norms = Vec::new();
        for &eps in &[2e-2, 1e-2] {
            let eta0 = Field::from_fn(&g, Rank::Vector, FieldTags::displacement(), |_, c, y1, _, y3| {
                if c == 2 {
                    eps * y1.sin() * profile(y3)
                } else {
                    0.0
                }
            });
            let ur = initial_correction(&eta0, &u0, &p).unwrap();
            norms.push(crate::field::norm(&ur, crate::field::NormSpec::fixed(0, 0)).unwrap());
        }
        let exponent = (norms[0] / norms[1]).ln() / 2.0f64.ln();
        assert!(
            (1.9..=2.1).contains(&exponent),
            "fitted exponent {exponent} (norms {norms:?})"
        );
    }
}

#[cfg(test)]
mod truncation_probe {
    use super::*;
    use crate::grid::{DimMode, GridSpec};
    use std::f64::consts::{PI, TAU};

    #[test]
    fn probe_truncation() {
        for n3 in [8usize, 16] {
            let g = SlabGrid::<f64>::build(&GridSpec {
                h_minus: -1.0, h_plus: 1.0, l1: TAU, l2: TAU,
                n1: 16, n2: 1, n3m: n3, n3p: n3, dim: DimMode::Two,
            }).unwrap();
            let (mu, lambda) = (1.0, 0.5);
            let (a, b) = (mu, mu + lambda);
            let k = PI / 2.0;
            let w3 = |y1: f64, y3: f64| y1.sin() * (k * (y3 + 1.0)).sin();
            let exact = Field::from_fn(&g, Rank::Vector, FieldTags::displacement(), |_, c, y1, _, y3| {
                if c == 2 { w3(y1, y3) } else { 0.0 }
            });
            let f = Field::from_fn(&g, Rank::Vector, FieldTags::default(), |_, c, y1, _, y3| {
                match c {
                    0 => -b * y1.cos() * k * (k * (y3 + 1.0)).cos(),
                    2 => (a * (1.0 + k * k) + b * k * k) * w3(y1, y3),
                    _ => 0.0,
                }
            });
            let sigma = SigmaCoeffs { alpha: [mu, mu], beta: [lambda, lambda], gamma: [0.0, 0.0] };
            let what = field_to_modes(&exact);
            let fhat = field_to_modes(&f);
            let nv = nvert(g.as_ref());
            // active mode m1 = 1
            let m = 1usize;
            let xi = mode_wavevector(g.as_ref(), m);
            let mat = assemble_mode_matrix(g.as_ref(), &sigma, [0.0, 0.0], xi);
            let ax = mat.matvec(what.mode(m));
            let mut worst = (0usize, 0.0f64);
            for gn in 0..nv {
                for p in 0..3 {
                    let q = 3 * gn + p;
                    let rhs = if gn == 0 || gn == nv - 1 {
                        Complex::new(0.0, 0.0)
                    } else if gn == g.n3m {
                        Complex::new(0.0, 0.0) // G = 0
                    } else {
                        fhat.mode(m)[q]
                    };
                    let r = (ax[q] - rhs).norm();
                    if r > worst.1 { worst = (q, r); }
                    if gn == g.n3m || gn == g.n3m -1 || gn == g.n3m + 1 || gn==1 || gn==nv-2 {
                        println!("n3={n3} g={gn} p={p}: resid {r:.3e}");
                    }
                }
            }
            println!("n3={n3} worst at q={} ({:.3e})", worst.0, worst.1);
        }
    }
}
