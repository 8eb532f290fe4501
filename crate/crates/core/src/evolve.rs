//! Time integration of the Lagrangian system and its linear companion.
//!
//! One step of the theta-scheme treats the full linear block (viscous stress,
//! pressure grad-div and the kappa Laplacian on the displacement) implicitly
//! through the stratified per-mode solver, while the nonlinear volume and
//! interface data are lagged explicitly. Substituting
//! `eta^{n+1} = eta^n + dt ((1-theta) u^n + theta u^{n+1})` into the momentum
//! equation leaves a single stratified Lame solve per step for `u^{n+1}`, with
//! coefficients fixed for the whole run, so every mode factorization is reused.

use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::field::{gradient, Field, FieldTags, Rank};
use crate::grid::{Side, SlabGrid};
use crate::kinematics::{
    deformation_with_floor, KinematicState, MaterialParams, J_FLOOR_DEFAULT,
};
use crate::lame::{
    apply_interior_operator, field_to_modes, jump_expression_mode, mode_wavevector,
    modes_to_field, nvert, plane_to_modes, ModeStack, SigmaCoeffs, StratifiedSolver,
};
use crate::mat3;
use crate::scalar::Real;
use crate::stress::{assemble_stress, interface_rhs, volume_rhs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearMode {
    Full,
    Linearized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagMode {
    /// Nonlinear data frozen at the previous time level.
    Explicit1,
    /// Two-level extrapolation of the nonlinear data to the implicit target
    /// times (volume data to `t_{n+theta}`, jump data to `t_{n+1}`).
    AdamsBashforth2,
}

#[derive(Debug, Clone)]
pub struct SchemeConfig<T> {
    pub dt: T,
    pub theta: T,
    pub t_end: T,
    pub nonlinear: NonlinearMode,
    pub lag: LagMode,
    pub j_floor: T,
    pub norm_ceiling: T,
    pub diagnostics_every: usize,
    pub snapshot_every: Option<usize>,
}

impl<T: Real> SchemeConfig<T> {
    /// Defaults for a given elasticity coefficient; the step size keeps the
    /// lagged kappa-scaled jump data O(dt)-accurate, not a stability bound.
    pub fn default_for(kappa: T) -> Self {
        SchemeConfig {
            dt: T::lit(0.1).min(T::lit(0.5) / kappa.sqrt()),
            theta: T::lit(0.5),
            t_end: T::one(),
            nonlinear: NonlinearMode::Full,
            lag: LagMode::AdamsBashforth2,
            j_floor: T::lit(J_FLOOR_DEFAULT),
            norm_ceiling: T::lit(1e8),
            diagnostics_every: 1,
            snapshot_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt <= T::zero() {
            return Err(Error::Config("time step must be positive".into()));
        }
        if self.theta < T::lit(0.5) || self.theta > T::one() {
            return Err(Error::Config(
                "implicitness parameter must lie in [1/2, 1]".into(),
            ));
        }
        if self.diagnostics_every == 0 {
            return Err(Error::Config("diagnostics cadence must be positive".into()));
        }
        Ok(())
    }
}

/// One time level of the simulation.
#[derive(Clone)]
pub struct SimState<T> {
    pub t: T,
    pub eta: Field<T>,
    pub u: Field<T>,
    pub kin: KinematicState<T>,
}

impl<T: Real> SimState<T> {
    pub fn new(eta: Field<T>, u: Field<T>) -> Result<Self> {
        Self::at_time(T::zero(), eta, u, T::lit(J_FLOOR_DEFAULT))
    }

    pub fn at_time(t: T, eta: Field<T>, u: Field<T>, j_floor: T) -> Result<Self> {
        let kin = deformation_with_floor(&eta, j_floor)?;
        Ok(SimState { t, eta, u, kin })
    }

    pub fn rest(grid: &Arc<SlabGrid<T>>) -> Self {
        let eta = Field::zeros(grid, Rank::Vector, FieldTags::displacement());
        let u = Field::zeros(grid, Rank::Vector, FieldTags::displacement());
        let kin = deformation_with_floor(&eta, T::lit(J_FLOOR_DEFAULT)).expect("rest state");
        SimState {
            t: T::zero(),
            eta,
            u,
            kin,
        }
    }
}

struct NlModes<T> {
    volume: ModeStack<T>,
    jump: Vec<Complex<T>>,
}

/// Reusable stepper: owns the factorized implicit operator.
pub struct Stepper<T> {
    grid: Arc<SlabGrid<T>>,
    pub params: MaterialParams<T>,
    pub scheme: SchemeConfig<T>,
    solver: StratifiedSolver<T>,
    sigma_visc: SigmaCoeffs<T>,
    sigma_ep: SigmaCoeffs<T>,
    rho: [T; 2],
    prev_nl: Option<NlModes<T>>,
}

impl<T: Real> Stepper<T> {
    pub fn new(
        grid: &Arc<SlabGrid<T>>,
        params: &MaterialParams<T>,
        scheme: &SchemeConfig<T>,
    ) -> Result<Self> {
        scheme.validate()?;
        let dt_theta = scheme.dt * scheme.theta;
        let sigma_visc = SigmaCoeffs::viscous(params);
        let sigma_ep = SigmaCoeffs::elastic_pressure(params);
        let sigma_imp = sigma_visc
            .scaled(dt_theta)
            .added(&sigma_ep.scaled(dt_theta * dt_theta));
        let rho = [params.rho_bar(Side::Minus), params.rho_bar(Side::Plus)];
        let solver = StratifiedSolver::new(grid, sigma_imp, rho)?;
        Ok(Stepper {
            grid: Arc::clone(grid),
            params: params.clone(),
            scheme: scheme.clone(),
            solver,
            sigma_visc,
            sigma_ep,
            rho,
            prev_nl: None,
        })
    }

    pub fn grid(&self) -> &Arc<SlabGrid<T>> {
        &self.grid
    }

    /// Advances one step according to the configured nonlinear mode.
    pub fn step(&mut self, state: &SimState<T>) -> Result<SimState<T>> {
        self.step_impl(state, self.scheme.nonlinear == NonlinearMode::Full)
    }

    /// Advances one step of the companion linear problem (all nonlinear data
    /// identically zero; shares the code path of [`Stepper::step`]).
    pub fn step_linear(&mut self, state: &SimState<T>) -> Result<SimState<T>> {
        self.step_impl(state, false)
    }

    fn step_impl(&mut self, state: &SimState<T>, with_nl: bool) -> Result<SimState<T>> {
        let dt = self.scheme.dt;
        let theta = self.scheme.theta;
        let one_m_theta = T::one() - theta;
        let grid = &self.grid;
        let nv = nvert(grid.as_ref());
        let n_modes = grid.plane_len();

        let u_hat = field_to_modes(&state.u);
        let eta_hat = field_to_modes(&state.eta);

        // Lagged nonlinear data in mode space.
        let nl_now = if with_nl {
            let nl = assemble_stress(&state.kin, &state.u, &self.params)?;
            let vol = volume_rhs(&nl)?;
            Some(NlModes {
                volume: field_to_modes(&vol),
                jump: plane_to_modes(&interface_rhs(&nl), grid.as_ref()),
            })
        } else {
            None
        };

        let mut rhs = ModeStack::zeros(n_modes, nv);
        let mut eta_tilde = vec![Complex::new(T::zero(), T::zero()); 3 * nv];
        let mut op_a = eta_tilde.clone();
        let mut op_b = eta_tilde.clone();
        let mut op_c = eta_tilde.clone();

        for m in 0..n_modes {
            let xi = mode_wavevector(grid.as_ref(), m);
            let uh = u_hat.mode(m);
            let eh = eta_hat.mode(m);
            for (k, et) in eta_tilde.iter_mut().enumerate() {
                *et = eh[k] + uh[k] * Complex::new(dt * one_m_theta, T::zero());
            }
            apply_interior_operator(grid.as_ref(), &self.sigma_ep, xi, &eta_tilde, &mut op_a);
            apply_interior_operator(grid.as_ref(), &self.sigma_ep, xi, eh, &mut op_b);
            apply_interior_operator(grid.as_ref(), &self.sigma_visc, xi, uh, &mut op_c);

            let col = rhs.mode_mut(m);
            for g in 1..nv - 1 {
                if g == grid.n3m {
                    continue;
                }
                let side = if g < grid.n3m { Side::Minus } else { Side::Plus };
                let rho = self.rho[side.index()];
                for p in 0..3 {
                    let q = 3 * g + p;
                    col[q] = uh[q] * Complex::new(rho, T::zero())
                        + op_a[q] * Complex::new(dt * theta, T::zero())
                        + (op_b[q] + op_c[q]) * Complex::new(dt * one_m_theta, T::zero());
                }
            }

            // Interface rows: dt*theta * (lagged jump data - eta-stress jump).
            let eta_jump = jump_expression_mode(grid.as_ref(), &self.sigma_ep, xi, &eta_tilde);
            for p in 0..3 {
                col[3 * grid.n3m + p] = -eta_jump[p] * Complex::new(dt * theta, T::zero());
            }
        }

        // Nonlinear contributions (volume: target t_{n+theta}; jump: t_{n+1}).
        if let Some(now) = &nl_now {
            let (cv_now, cv_prev, cj_now, cj_prev) = match (&self.scheme.lag, &self.prev_nl) {
                (LagMode::AdamsBashforth2, Some(_)) => (
                    T::one() + theta,
                    -theta,
                    T::lit(2.0),
                    -T::one(),
                ),
                _ => (T::one(), T::zero(), T::one(), T::zero()),
            };
            for m in 0..n_modes {
                let col = rhs.mode_mut(m);
                let vol_now = now.volume.mode(m);
                for g in 1..nv - 1 {
                    if g == grid.n3m {
                        continue;
                    }
                    for p in 0..3 {
                        let q = 3 * g + p;
                        let mut v = vol_now[q] * Complex::new(cv_now, T::zero());
                        if let Some(prev) = &self.prev_nl {
                            v += prev.volume.mode(m)[q] * Complex::new(cv_prev, T::zero());
                        }
                        col[q] += v * Complex::new(dt, T::zero());
                    }
                }
                for p in 0..3 {
                    let mut j = now.jump[3 * m + p] * Complex::new(cj_now, T::zero());
                    if let Some(prev) = &self.prev_nl {
                        j += prev.jump[3 * m + p] * Complex::new(cj_prev, T::zero());
                    }
                    col[3 * grid.n3m + p] += j * Complex::new(dt * theta, T::zero());
                }
            }
        }

        self.solver.solve_stack(&mut rhs);
        let mut u_next = modes_to_field(&rhs, grid, FieldTags::displacement());
        u_next.zero_walls();

        // eta update in physical space preserves wall/interface exactness.
        let mut eta_next = state.eta.clone();
        eta_next.axpy(dt * one_m_theta, &state.u);
        eta_next.axpy(dt * theta, &u_next);

        let floor = if with_nl {
            self.scheme.j_floor
        } else {
            T::neg_infinity()
        };
        let kin = deformation_with_floor(&eta_next, floor)?;
        let linf = u_next.linf().max(eta_next.linf());
        if linf > self.scheme.norm_ceiling {
            return Err(Error::Divergence {
                linf: linf.as_f64(),
                ceiling: self.scheme.norm_ceiling.as_f64(),
            });
        }

        self.prev_nl = nl_now;
        Ok(SimState {
            t: state.t + dt,
            eta: eta_next,
            u: u_next,
            kin,
        })
    }
}

/// Recovers `u_t` from the momentum equation (spatial evaluation, no time
/// differencing): `rho u_t = div(linear stress) + div(N_mu + N_lambda - N_P)`.
///
/// Interior nodes use exactly the per-mode operator rows of the stepper; the
/// walls carry `u_t = 0` (Dirichlet); the interface carries the average of the
/// two one-sided momentum evaluations.
pub fn compute_ut<T: Real>(
    state: &SimState<T>,
    params: &MaterialParams<T>,
    nonlinear: NonlinearMode,
) -> Result<Field<T>> {
    let grid = state.u.grid();
    let nv = nvert(grid.as_ref());
    let n_modes = grid.plane_len();
    let sigma_visc = SigmaCoeffs::viscous(params);
    let sigma_ep = SigmaCoeffs::elastic_pressure(params);

    let u_hat = field_to_modes(&state.u);
    let eta_hat = field_to_modes(&state.eta);

    let nl_vol = if nonlinear == NonlinearMode::Full {
        let nl = assemble_stress(&state.kin, &state.u, params)?;
        Some(volume_rhs(&nl)?)
    } else {
        None
    };
    let vol_hat = nl_vol.as_ref().map(field_to_modes);

    let mut out = ModeStack::zeros(n_modes, nv);
    let mut op_u = vec![Complex::new(T::zero(), T::zero()); 3 * nv];
    let mut op_e = op_u.clone();
    for m in 0..n_modes {
        let xi = mode_wavevector(grid.as_ref(), m);
        apply_interior_operator(grid.as_ref(), &sigma_visc, xi, u_hat.mode(m), &mut op_u);
        apply_interior_operator(grid.as_ref(), &sigma_ep, xi, eta_hat.mode(m), &mut op_e);
        let col = out.mode_mut(m);
        for g in 1..nv - 1 {
            if g == grid.n3m {
                continue;
            }
            let side = if g < grid.n3m { Side::Minus } else { Side::Plus };
            let rho_inv = T::one() / params.rho_bar(side);
            for p in 0..3 {
                let q = 3 * g + p;
                let mut v = op_u[q] + op_e[q];
                if let Some(vh) = &vol_hat {
                    v += vh.mode(m)[q];
                }
                col[q] = v * Complex::new(rho_inv, T::zero());
            }
        }
        // Interface: average of the one-sided evaluations from both sides.
        let gi = grid.n3m;
        for p in 0..3 {
            let mut acc = Complex::new(T::zero(), T::zero());
            for side in Side::BOTH {
                let i3 = grid.interface_node(side);
                let mut v = Complex::new(T::zero(), T::zero());
                let emit_from = |sig: &SigmaCoeffs<T>, data: &[Complex<T>]| {
                    let mut a = Complex::new(T::zero(), T::zero());
                    crate::lame::accumulate_operator_row(
                        grid.as_ref(),
                        side,
                        i3,
                        p,
                        xi,
                        sig,
                        data,
                        &mut a,
                    );
                    a
                };
                v += emit_from(&sigma_visc, u_hat.mode(m));
                v += emit_from(&sigma_ep, eta_hat.mode(m));
                acc += v * Complex::new(T::lit(0.5) / params.rho_bar(side), T::zero());
            }
            col[3 * gi + p] = acc;
        }
    }
    let mut ut = modes_to_field(&out, grid, FieldTags::default());
    // Nonlinear volume data at the interface (side-dependent trace): add the
    // averaged physical-space value.
    if let Some(vol) = &nl_vol {
        let tm = vol.interface_trace(Side::Minus);
        let tp = vol.interface_trace(Side::Plus);
        for side in Side::BOTH {
            let i3 = grid.interface_node(side);
            for p in 0..3 {
                for i2 in 0..grid.n2 {
                    for i1 in 0..grid.n1 {
                        let add = T::lit(0.5)
                            * (tm.get(p, i2, i1) / params.rho_bar(Side::Minus)
                                + tp.get(p, i2, i1) / params.rho_bar(Side::Plus));
                        let cur = ut.get(side, p, i1, i2, i3);
                        ut.set(side, p, i1, i2, i3, cur + add);
                    }
                }
            }
        }
    }
    ut.zero_walls();
    Ok(ut)
}

/// Kinetic + pressure-potential + elastic energy of a state; equals the
/// initial mechanical energy when evaluated on the initial data.
pub fn mechanical_energy<T: Real>(state: &SimState<T>, params: &MaterialParams<T>) -> T {
    energy_parts(state, params).total()
}

#[derive(Debug, Clone, Copy)]
pub struct EnergyParts<T> {
    pub kinetic: T,
    pub potential: T,
    pub elastic: T,
}

impl<T: Real> EnergyParts<T> {
    pub fn total(&self) -> T {
        self.kinetic + self.potential + self.elastic
    }
}

pub fn energy_parts<T: Real>(state: &SimState<T>, params: &MaterialParams<T>) -> EnergyParts<T> {
    let kinetic = T::lit(0.5)
        * state.u.integrate_nodes(|side, v| {
            params.rho_bar(side) * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
        });
    let potential = state.kin.jinv.integrate_nodes(|side, v| {
        let rb = params.rho_bar(side);
        rb * params.law(side).potential(rb, rb * v[0])
    });
    let elastic = T::lit(0.5) * params.kappa * state.kin.grad_eta.l2_sq();
    EnergyParts {
        kinetic,
        potential,
        elastic,
    }
}

/// Viscous dissipation functional
/// `1/2 ||sqrt(mu J) D_A u||^2 + ||sqrt(lambda J) div_A u||^2`.
pub fn dissipation<T: Real>(state: &SimState<T>, params: &MaterialParams<T>) -> Result<T> {
    let grid = state.u.grid();
    let grad_u = gradient(&state.u)?;
    let wh = grid.horizontal_weight();
    let mut total = T::zero();
    for side in Side::BOTH {
        let mu = params.mu(side);
        let lambda = params.lambda(side);
        let pl = grid.plane_len();
        for p in 0..grad_u.nodes_on(side) {
            let i3 = p / pl;
            let w = grid.vertical_weight(side, i3) * wh;
            let gu = grad_u.tensor_at(side, p);
            let a = state.kin.a.tensor_at(side, p);
            let j = state.kin.j.comp(side, 0)[p];
            let dau = mat3::sym(&mat3::matmul(&gu, &mat3::transpose(&a)));
            let mut frob = T::zero();
            let mut div_a = T::zero();
            for i in 0..3 {
                for k in 0..3 {
                    frob += dau[i][k] * dau[i][k];
                    div_a += a[i][k] * gu[i][k];
                }
            }
            total += w * j * (T::lit(0.5) * mu * frob + lambda * div_a * div_a);
        }
    }
    Ok(total)
}

/// One row of the per-step energy ledger.
#[derive(Debug, Clone, Copy)]
pub struct LedgerRow<T> {
    pub t: T,
    pub kinetic: T,
    pub potential: T,
    pub elastic: T,
    pub total: T,
    pub dissipation: T,
    /// `|Delta E / dt + D(midpoint)|` between this row and the previous one.
    pub residual: T,
    pub min_j: T,
    pub max_interface_jump: T,
}

pub type EnergyLedger<T> = Vec<LedgerRow<T>>;

/// Terminal condition of a run. Blow-up is a recorded outcome, not a panic.
#[derive(Debug, Clone)]
pub enum RunEvent {
    Completed,
    Degeneracy {
        t: f64,
        side: &'static str,
        i1: usize,
        i2: usize,
        i3: usize,
        j: f64,
    },
    Divergence {
        t: f64,
        detail: String,
    },
    SolverFailure {
        t: f64,
        detail: String,
    },
}

impl RunEvent {
    pub fn label(&self) -> &'static str {
        match self {
            RunEvent::Completed => "completed",
            RunEvent::Degeneracy { .. } => "degeneracy",
            RunEvent::Divergence { .. } => "divergence",
            RunEvent::SolverFailure { .. } => "solver_failure",
        }
    }
}

pub struct RunResult<T> {
    pub final_state: SimState<T>,
    pub event: RunEvent,
    pub ledger: EnergyLedger<T>,
    pub steps_taken: usize,
}

fn ledger_row<T: Real>(
    state: &SimState<T>,
    params: &MaterialParams<T>,
    prev: Option<(&SimState<T>, &LedgerRow<T>, T)>,
) -> Result<LedgerRow<T>> {
    let parts = energy_parts(state, params);
    let total = parts.total();
    let diss = dissipation(state, params)?;
    let residual = if let Some((prev_state, prev_row, dt)) = prev {
        // Midpoint dissipation for the identity residual.
        let mut eta_mid = prev_state.eta.clone();
        eta_mid.axpy(T::one(), &state.eta);
        eta_mid.scale_in_place(T::lit(0.5));
        let mut u_mid = prev_state.u.clone();
        u_mid.axpy(T::one(), &state.u);
        u_mid.scale_in_place(T::lit(0.5));
        let mid = SimState::at_time(state.t, eta_mid, u_mid, T::neg_infinity())?;
        let d_mid = dissipation(&mid, params)?;
        ((total - prev_row.total) / dt + d_mid).abs()
    } else {
        T::zero()
    };
    let jump = state
        .eta
        .interface_jump()
        .linf()
        .max(state.u.interface_jump().linf());
    Ok(LedgerRow {
        t: state.t,
        kinetic: parts.kinetic,
        potential: parts.potential,
        elastic: parts.elastic,
        total,
        dissipation: diss,
        residual,
        min_j: state.kin.min_j,
        max_interface_jump: jump,
    })
}

/// Runs until `t_end` or a terminal event. `on_sample` fires at the
/// diagnostics cadence (and on the initial and final states).
pub fn run<T: Real>(
    initial: SimState<T>,
    params: &MaterialParams<T>,
    scheme: &SchemeConfig<T>,
    mut on_sample: impl FnMut(&SimState<T>, &LedgerRow<T>),
) -> Result<RunResult<T>> {
    let grid = Arc::clone(initial.eta.grid());
    let mut stepper = Stepper::new(&grid, params, scheme)?;
    let mut ledger = Vec::new();
    let mut state = initial;
    let row = ledger_row(&state, params, None)?;
    on_sample(&state, &row);
    ledger.push(row);
    let mut steps = 0usize;
    let n_steps = (scheme.t_end / scheme.dt).round().as_f64() as usize;
    let mut event = RunEvent::Completed;
    while steps < n_steps {
        match stepper.step(&state) {
            Ok(next) => {
                let prev_row = *ledger.last().expect("ledger nonempty");
                let row = ledger_row(&next, params, Some((&state, &prev_row, scheme.dt)))?;
                state = next;
                steps += 1;
                if steps % scheme.diagnostics_every == 0 || steps == n_steps {
                    on_sample(&state, &row);
                }
                ledger.push(row);
            }
            Err(Error::Degeneracy {
                side,
                i1,
                i2,
                i3,
                j,
            }) => {
                event = RunEvent::Degeneracy {
                    t: state.t.as_f64(),
                    side,
                    i1,
                    i2,
                    i3,
                    j,
                };
                break;
            }
            Err(Error::Divergence { linf, ceiling }) => {
                event = RunEvent::Divergence {
                    t: state.t.as_f64(),
                    detail: format!("|state| = {linf:.3e} > ceiling {ceiling:.3e}"),
                };
                break;
            }
            Err(e) => {
                event = RunEvent::SolverFailure {
                    t: state.t.as_f64(),
                    detail: e.to_string(),
                };
                break;
            }
        }
    }
    Ok(RunResult {
        final_state: state,
        event,
        ledger,
        steps_taken: steps,
    })
}
