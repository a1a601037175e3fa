"""Outer time integration: per-step fixed point, continuation loop, diagnostics.

Each backward-Euler step freezes a guess of the new interface and velocity,
rebuilds the smoothed-height ALE map, solves the penalized implicit system,
advances the interface from the new normal velocity, and under-relaxes the
guess until the iterates stop moving.  Map and velocity time derivatives are
backward differences against the state at the start of the step, so a step
depends only on the current state and restart is lossless.
"""

from dataclasses import dataclass

import numpy as np

from .ale_map import DiskGrid, harmonic_extend, pullback_v
from .errors import FixedPointDivergence, SmallnessViolation
from .fields_ops import forcing
from .geometry import (ReferenceCurve, enclosed_area, interface_length,
                       regularized_curvature, require_admissible, sobolev_norm)
from .smoothing import double_mollify
from .stokes_core import (DivergenceNormalEquations, PenalizedStepSolver,
                          recover_pressure)


@dataclass
class SolverConfig:
    """Discretization sizes and scheme parameters for one run."""

    n_r: int = 32
    n_theta: int = 128
    dt: float = 1e-3
    t_end: float = 0.05
    epsilon: float = None      # default: 5 boundary cells (set in normalize)
    theta: float = 1e-6
    sigma: float = 1.0
    varsigma: float = 0.25
    fp_tol: float = 1e-9
    fp_max_iter: int = 50
    relax: float = 0.7
    output_dir: str = "runs/out"
    snapshot_every: int = 10
    seed_case: str = "equilibrium"
    perturbation_amplitude: float = 0.02
    perturbation_mode: int = 2

    def normalize(self):
        if self.epsilon is None:
            self.epsilon = 5.0 * 2.0 * np.pi / self.n_theta
        return self

    def validate(self):
        from .errors import ConfigValidationError
        self.normalize()
        checks = [
            (self.n_r >= 4, "n_r must be at least 4"),
            (self.n_theta >= 8 and self.n_theta % 2 == 0,
             "n_theta must be an even integer >= 8"),
            (self.dt > 0, "dt must be positive"),
            (self.t_end > 0, "t_end must be positive"),
            (self.epsilon > 0, "epsilon must be positive"),
            (self.theta > 0, "theta must be positive"),
            (self.sigma > 0, "sigma must be positive"),
            (self.varsigma > 0, "varsigma must be positive"),
            (self.fp_tol > 0, "fp_tol must be positive"),
            (self.fp_max_iter >= 1, "fp_max_iter must be at least 1"),
            (0.0 < self.relax <= 1.0, "relax must lie in (0, 1]"),
            (self.snapshot_every >= 1, "snapshot_every must be at least 1"),
            (self.seed_case in ("equilibrium", "mode_k_perturbation",
                                "custom_csv"),
             f"unknown seed_case {self.seed_case!r}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigValidationError(msg)
        return self


@dataclass
class DiagnosticsRecord:
    """Per-step energies, geometry integrals and solver counters."""

    t: float
    kinetic: float
    surface_energy: float
    total_energy: float
    area: float
    length: float
    div_norm: float
    h_h2: float
    v_h1: float
    v_h2_sq: float
    energy_sup: float       # running sup of v_h1^2 + h_h2^2
    energy_integral: float  # accumulated integral of the squared H2 norm of v
    fp_iterations: int = 0
    krylov_iterations: int = 0

    @property
    def energy_total(self):
        return self.energy_sup + self.energy_integral

    def as_row(self):
        return [self.t, self.kinetic, self.surface_energy, self.total_energy,
                self.area, self.length, self.div_norm, self.h_h2, self.v_h1,
                self.fp_iterations]


TIMESERIES_COLUMNS = ["t", "kinetic", "surface_energy", "total_energy",
                      "area", "length", "div_norm", "h_H2", "v_H1",
                      "fp_iters"]


@dataclass
class SimState:
    """Solver state at one time level (all fields immutable by convention)."""

    t: float
    h: np.ndarray
    w: np.ndarray
    q: np.ndarray
    m: object
    diagnostics: DiagnosticsRecord = None


@dataclass
class RunResult:
    states: list
    records: list
    status: str
    message: str = ""

    @property
    def final(self):
        return self.states[-1]


def validate_smallness(h, varsigma):
    """True when the interface H^1.7 norm is below the smallness gate."""
    return sobolev_norm(h, 1.7) < varsigma


class TimeStepper:
    """Owns the grid, curve and solver context for one configuration."""

    def __init__(self, cfg, curve=None):
        cfg.validate()
        self.cfg = cfg
        self.curve = curve if curve is not None else \
            ReferenceCurve.unit_circle(cfg.n_theta)
        self.grid = DiskGrid(cfg.n_r, cfg.n_theta)
        self.solver = PenalizedStepSolver(self.grid, self.curve,
                                          cfg.dt, cfg.theta, cfg.epsilon)
        self.normal_eq = DivergenceNormalEquations(self.grid)

    # -- state construction ---------------------------------------------------

    def build_map(self, h):
        h_ee = double_mollify(h, self.cfg.epsilon, self.curve)
        return harmonic_extend(h_ee, self.curve, self.grid)

    def initial_state(self, h0, w0):
        cfg, curve, grid = self.cfg, self.curve, self.grid
        h0 = np.asarray(h0, dtype=float)
        w0 = np.asarray(w0, dtype=float)
        require_admissible(h0, curve, what="initial height")
        if not validate_smallness(h0, cfg.varsigma):
            raise SmallnessViolation(
                f"initial height H^1.7 norm exceeds the gate {cfg.varsigma}")
        m = self.build_map(h0)
        div0 = grid.norm_l2(grid.divergence(w0))
        if div0 > 1e-10 * max(1.0, grid.norm_l2(w0[0]) + grid.norm_l2(w0[1])):
            w0 = self._project_divergence_free(w0)
        g_bnd = self._surface_traction(h0, m)
        f0 = self._forcing(m, m, w0, np.zeros_like(w0))
        q0 = recover_pressure(m, w0, np.zeros_like(w0), f0, g_bnd,
                              cfg.epsilon, normal_eq=self.normal_eq)
        state = SimState(t=0.0, h=h0, w=w0, q=q0, m=m)
        state.diagnostics = self.energy(state)
        return state

    def _project_divergence_free(self, w0):
        """One penalty solve pushing the initial velocity toward div-free."""
        op_solver = self.solver
        w, _ = op_solver.solve(op_solver._id_map,
                               f=np.zeros_like(w0) ,
                               g_bnd=None, w_prev=w0)
        return w

    def initial_w_from_eulerian(self, u0, h0):
        """Divergence-free variable seeded from an Eulerian velocity field.

        ``u0`` is a callable (x, y) -> (2, ...) evaluated on the deformed
        domain: the ALE velocity is its pull-back through the map of ``h0``
        and the returned w is its push-forward J A v.
        """
        from .ale_map import pushforward_w
        m0 = self.build_map(np.asarray(h0, dtype=float))
        v0 = np.asarray(u0(m0.psi[0], m0.psi[1]), dtype=float)
        return pushforward_w(v0, m0)

    def seed_fields(self, h_custom=None):
        cfg = self.cfg
        n = cfg.n_theta
        if cfg.seed_case == "equilibrium":
            h0 = np.zeros(n)
        elif cfg.seed_case == "mode_k_perturbation":
            h0 = cfg.perturbation_amplitude * np.cos(
                cfg.perturbation_mode * self.curve.s)
        elif cfg.seed_case == "custom_csv":
            if h_custom is None:
                raise ValueError("custom seed requires height samples")
            h0 = np.asarray(h_custom, dtype=float)
        else:  # pragma: no cover - guarded by validate()
            raise ValueError(cfg.seed_case)
        w0 = np.zeros((2, cfg.n_r, cfg.n_theta))
        return h0, w0

    # -- the per-step fixed point ----------------------------------------------

    def _surface_traction(self, h, m):
        curv = regularized_curvature(h, m.boundary_height, self.curve)
        return self.cfg.sigma * curv * self.curve.N

    def _forcing(self, m_bar, m_prev, w_bar, w_bar_t):
        dt = self.cfg.dt
        psi_t = (m_bar.psi - m_prev.psi) / dt
        rate = (m_bar.grad_psi / m_bar.jac - m_prev.grad_psi / m_prev.jac) / dt
        f = forcing(m_bar, psi_t, w_bar, jinv_grad_psi_rate=rate)
        # residual mass term of the linearization:
        # (Id - J^-1 grad(psi)^T grad(psi)) applied to the lagged w_t
        gp = m_bar.grad_psi
        gtg = np.einsum("isab,irab->srab", gp, gp) / m_bar.jac
        f += w_bar_t - np.einsum("srab,rab->sab", gtg, w_bar_t)
        return f

    def phi_step(self, state):
        """Advance one time step via the linearize-solve-update fixed point."""
        cfg, curve, grid = self.cfg, self.curve, self.grid
        if not validate_smallness(state.h, cfg.varsigma):
            raise SmallnessViolation(
                f"height H^1.7 norm reached the gate {cfg.varsigma} "
                f"at t = {state.t:g}")
        dt, relax = cfg.dt, cfg.relax
        w_bar = state.w.copy()
        h_bar = state.h.copy()
        m_prev = state.m
        b0 = curve.b0

        m_bar = None
        w_new = w_bar
        h_new = h_bar
        f_bar = None
        g_bnd = None
        krylov_total = 0
        converged = False
        for it in range(1, cfg.fp_max_iter + 1):
            h_ee = double_mollify(h_bar, cfg.epsilon, curve)
            m_bar = harmonic_extend(h_ee, curve, grid)
            g_bnd = self._surface_traction(h_bar, m_bar)
            w_bar_t = (w_bar - state.w) / dt
            f_bar = self._forcing(m_bar, m_prev, w_bar, w_bar_t)
            w_new, info = self.solver.solve(m_bar, f_bar, g_bnd, state.w)
            krylov_total += info["krylov_iterations"]

            wn_trace = np.einsum("ct,ct->t", grid.trace(w_new), curve.N)
            h_new = state.h + dt * wn_trace / (1.0 + b0 * h_ee)
            require_admissible(h_new, curve, what="updated height")

            dw = relax * (w_new - w_bar)
            dh = relax * (h_new - h_bar)
            w_bar = w_bar + dw
            h_bar = h_bar + dh
            dw_norm = np.sqrt(float(np.sum(dw * dw * grid.weights)))
            dh_norm = np.sqrt(float(np.mean(dh * dh)) * curve.length)
            if max(dw_norm, dh_norm) <= cfg.fp_tol:
                converged = True
                break
        if not converged:
            raise FixedPointDivergence(
                f"fixed point did not reach {cfg.fp_tol:g} within "
                f"{cfg.fp_max_iter} iterations at t = {state.t:g} "
                f"(last increment {max(dw_norm, dh_norm):.3e})")

        if not validate_smallness(h_bar, cfg.varsigma):
            raise SmallnessViolation(
                f"height H^1.7 norm reached the gate {cfg.varsigma} "
                f"at t = {state.t + dt:g}")

        w_t = (w_bar - state.w) / dt
        q = recover_pressure(m_bar, w_bar, w_t, f_bar, g_bnd, cfg.epsilon,
                             normal_eq=self.normal_eq)
        m_next = self.build_map(h_bar)
        new_state = SimState(t=state.t + dt, h=h_bar, w=w_bar, q=q, m=m_next)
        new_state.diagnostics = self.energy(
            new_state, prev=state.diagnostics,
            fp_iterations=it, krylov_iterations=krylov_total)
        return new_state

    # -- diagnostics ------------------------------------------------------------

    def energy(self, state, prev=None, fp_iterations=0, krylov_iterations=0):
        cfg, grid, curve = self.cfg, self.grid, self.curve
        v = pullback_v(state.w, state.m)
        kinetic = 0.5 * float(np.sum(state.m.jac * np.sum(v * v, axis=0)
                                     * grid.weights))
        length = interface_length(state.h, curve)
        surface = cfg.sigma * length
        area = enclosed_area(state.h, curve)
        div_norm = grid.norm_l2(grid.cell_divergence(state.w))
        h_h2 = sobolev_norm(state.h, 2.0)
        g1 = grid.grad_vector(v)
        v_h1_sq = grid.inner(v, v) + float(np.sum(g1 * g1 * grid.weights))
        g2 = np.stack([grid.grad_vector(g1[:, j]) for j in range(2)])
        v_h2_sq = v_h1_sq + float(np.sum(g2 * g2 * grid.weights))
        sup_part = v_h1_sq + h_h2**2
        if prev is not None:
            sup_part = max(sup_part, prev.energy_sup)
            integral = prev.energy_integral + cfg.dt * v_h2_sq
        else:
            integral = 0.0
        return DiagnosticsRecord(
            t=state.t, kinetic=kinetic, surface_energy=surface,
            total_energy=kinetic + surface, area=area, length=length,
            div_norm=div_norm, h_h2=h_h2, v_h1=np.sqrt(v_h1_sq),
            v_h2_sq=v_h2_sq, energy_sup=sup_part, energy_integral=integral,
            fp_iterations=fp_iterations, krylov_iterations=krylov_iterations)

    # -- the continuation loop ---------------------------------------------------

    def run(self, w0=None, h0=None, resume_from=None, on_step=None):
        """March to t_end; returns the trajectory with a terminal status.

        ``resume_from`` continues losslessly from a previous state (the step
        depends only on the state itself).  ``on_step`` is called with each
        new state as it is produced.
        """
        cfg = self.cfg
        if resume_from is not None:
            state = resume_from
            if state.diagnostics is None:
                state.diagnostics = self.energy(state)
        else:
            if h0 is None or w0 is None:
                h0_seed, w0_seed = self.seed_fields()
                h0 = h0 if h0 is not None else h0_seed
                w0 = w0 if w0 is not None else w0_seed
            state = self.initial_state(h0, w0)
        states = [state]
        records = [state.diagnostics]
        status, message = "completed", ""
        try:
            while state.t < cfg.t_end - 1e-12:
                state = self.phi_step(state)
                states.append(state)
                records.append(state.diagnostics)
                if on_step is not None:
                    on_step(state)
        except SmallnessViolation as exc:
            status, message = "smallness_violation", str(exc)
        except FixedPointDivergence as exc:
            status, message = "fixed_point_divergence", str(exc)
        except Exception as exc:
            from .errors import NotDiffeomorphism
            if isinstance(exc, NotDiffeomorphism):
                status, message = "not_diffeomorphism", str(exc)
            else:
                raise
        return RunResult(states=states, records=records,
                         status=status, message=message)


def run(cfg, w0=None, h0=None, **kwargs):
    """Convenience wrapper: build a stepper for cfg and march to t_end."""
    return TimeStepper(cfg).run(w0=w0, h0=h0, **kwargs)
