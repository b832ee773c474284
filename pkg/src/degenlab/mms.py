"""Manufactured solutions: given analytic u (with hand-written derivative
closures) and a coefficient field, synthesize sources (F, f) so u solves

    u_t + lambda c0 u - x_d D_i(a_ij D_j u - F_i) = sqrt(lambda) f

exactly.  Derivative closures are author-supplied and cross-validated against
finite differences at construction (step 1e-6, relative tolerance 1e-7), so a
wrong closure fails loudly instead of polluting a convergence study.
"""

import numpy as np

from .norms import NormSpec, error_norm
from .solver import TimeStepperConfig, march
from .coefficients import identity_coefficients
from .assembly import (LoadAssembler, assemble_stiffness,
                       assemble_weighted_mass)
from .fields import sample_nodes


class ClosureError(ValueError):
    pass


def _fd_partial(func, args, axis, step=1e-6):
    hi = list(args)
    lo = list(args)
    hi[axis] = args[axis] + step
    lo[axis] = args[axis] - step
    return (func(*hi) - func(*lo)) / (2 * step)


def _check_close(fd, closure_vals, what, tol=1e-7):
    fd = np.asarray(fd, float)
    cv = np.asarray(closure_vals, float)
    scale = max(np.max(np.abs(cv)), np.max(np.abs(fd)), 1e-8)
    worst = np.max(np.abs(fd - cv)) / scale
    if worst > tol:
        raise ClosureError("finite-difference cross-check failed for %s "
                           "(relative %.3e > %.3e)" % (what, worst, tol))


class ManufacturedCase:
    """Analytic solution with closures:

    u, u_t: (t, xp, xd) -> values
    du: tuple of dim first-partial closures, ordered (x', x_d) in dim 2
    d2u: dict {(i,j): closure} for i <= j (symmetric completion implied)
    F_d_antiderivative: optional closure with d/dx_d F_d = -residual/x_d
        (required by mode F_only/mixed)
    u_tt, du_t, d2u_t: optional time-derivative closures enabling f_t
    """

    MODES = ("f_only", "F_only", "mixed")

    def __init__(self, name, dim, coeffs, lam, u, u_t, du, d2u,
                 mode="f_only", mix_weight=0.5, F_d_antiderivative=None,
                 u_tt=None, du_t=None, d2u_t=None,
                 Ld=4.0, T=1.0, xp_length=2 * np.pi, check=True):
        if dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if mode not in self.MODES:
            raise ValueError("mode must be one of %s" % (self.MODES,))
        if lam < 0:
            raise ValueError("lambda must be >= 0")
        if mode == "f_only" and lam == 0:
            raise ValueError("f_only mode needs lambda > 0 (division by "
                             "sqrt(lambda))")
        if mode in ("F_only", "mixed") and F_d_antiderivative is None:
            raise ValueError("mode %s requires an F_d antiderivative closure"
                             % mode)
        if len(du) != dim:
            raise ValueError("du must supply %d components" % dim)
        need = {(i, j) for i in range(dim) for j in range(i, dim)}
        if set(d2u) != need:
            raise ValueError("d2u must supply exactly the pairs %s"
                             % sorted(need))
        if not 0.0 <= mix_weight <= 1.0:
            raise ValueError("mix_weight must lie in [0, 1]")
        self.name = name
        self.dim = dim
        self.coeffs = coeffs
        self.lam = float(lam)
        self.u = u
        self.u_t = u_t
        self.du = tuple(du)
        self.d2u = dict(d2u)
        self.mode = mode
        self.mix_weight = float(mix_weight)
        self.F_d_antiderivative = F_d_antiderivative
        self.u_tt = u_tt
        self.du_t = du_t
        self.d2u_t = d2u_t
        self.Ld = float(Ld)
        self.T = float(T)
        self.xp_length = float(xp_length)
        if check:
            self._validate()

    # -- residual of the strong form, with f = F = 0 --------------------------

    def residual(self, t, xp, xd):
        """u_t + lambda c0 u - x_d * div(a Du), vectorized."""
        c = self.coeffs
        acc = self.u_t(t, xp, xd) + self.lam * c.c0(t, xp, xd) \
            * self.u(t, xp, xd)
        dive = np.zeros(np.broadcast(np.asarray(t), np.asarray(xp),
                                     np.asarray(xd)).shape)
        diva = c.div_a(t, xp, xd) if c.div_a is not None else None
        for j in range(self.dim):
            if diva is not None:
                dive = dive + diva[j] * self.du[j](t, xp, xd)
            for i in range(self.dim):
                key = (min(i, j), max(i, j))
                dive = dive + c.a[i][j](t, xp, xd) * self.d2u[key](t, xp, xd)
        return acc - np.asarray(xd) * dive

    def residual_t(self, t, xp, xd):
        """Time derivative of the residual; needs the *_t closures and
        time-independent coefficients."""
        if self.u_tt is None or self.du_t is None or self.d2u_t is None:
            raise ClosureError("f_t needs u_tt, du_t and d2u_t closures")
        c = self.coeffs
        acc = self.u_tt(t, xp, xd) + self.lam * c.c0(t, xp, xd) \
            * self.u_t(t, xp, xd)
        dive = np.zeros(np.broadcast(np.asarray(t), np.asarray(xp),
                                     np.asarray(xd)).shape)
        diva = c.div_a(t, xp, xd) if c.div_a is not None else None
        for j in range(self.dim):
            if diva is not None:
                dive = dive + diva[j] * self.du_t[j](t, xp, xd)
            for i in range(self.dim):
                key = (min(i, j), max(i, j))
                dive = dive + c.a[i][j](t, xp, xd) \
                    * self.d2u_t[key](t, xp, xd)
        return acc - np.asarray(xd) * dive

    # -- construction checks ----------------------------------------------------

    def _sample_points(self, rng, n, xd_lo=0.02, xd_hi=None):
        xd_hi = 0.95 * self.Ld if xd_hi is None else xd_hi
        t = rng.uniform(0.05 * self.T, self.T, n)
        xp = rng.uniform(0, self.xp_length, n) if self.dim == 2 \
            else np.zeros(n)
        xd = rng.uniform(xd_lo, xd_hi, n)
        return t, xp, xd

    def _validate(self):
        rng = np.random.default_rng(190)
        # zero trace at x_d = 0, 100 points
        t, xp, _ = self._sample_points(rng, 100)
        tgrid = np.linspace(0, self.T, 9)[:, None]
        xgrid = np.linspace(0, self.xp_length, 11)[None, :]
        dense = np.linspace(0, self.Ld, 101)
        umax = max(np.max(np.abs(self.u(ti, xgrid, dense[:, None, None])))
                   for ti in tgrid.ravel())
        if np.max(np.abs(self.u(t, xp, np.zeros_like(t)))) > 1e-12 * max(
                umax, 1e-12):
            raise ClosureError("u does not vanish at x_d = 0")
        # truncation admissibility at x_d = Ld
        edge = max(np.max(np.abs(self.u(ti, xgrid.ravel(), self.Ld)))
                   for ti in tgrid.ravel())
        if edge > 1e-6 * max(umax, 1e-300):
            raise ClosureError(
                "u(., L_d) = %.3e exceeds 1e-6 of max |u| = %.3e: not "
                "admissible for a truncated strip" % (edge, umax))
        # finite-difference chain checks
        pts = self._sample_points(rng, 30)
        _check_close(_fd_partial(self.u, pts, 0), self.u_t(*pts), "u_t")
        axes = (2,) if self.dim == 1 else (1, 2)
        for comp, ax in enumerate(axes):
            _check_close(_fd_partial(self.u, pts, ax),
                         self.du[comp](*pts), "du[%d]" % comp)
            for comp2 in range(comp, self.dim):
                ax2 = axes[comp2]
                _check_close(_fd_partial(self.du[comp], pts, ax2),
                             self.d2u[(comp, comp2)](*pts),
                             "d2u[%d,%d]" % (comp, comp2))
        if self.F_d_antiderivative is not None:
            t, xp, xd = self._sample_points(rng, 30, xd_lo=0.1)
            fd = _fd_partial(self.F_d_antiderivative, (t, xp, xd), 2)
            target = -self.residual(t, xp, xd) / xd
            _check_close(fd, target, "F_d antiderivative", tol=3e-6)
        if self.u_tt is not None and self.du_t is not None:
            _check_close(_fd_partial(self.u_t, pts, 0), self.u_tt(*pts),
                         "u_tt")
            for comp, ax in enumerate(axes):
                _check_close(_fd_partial(self.du[comp], pts, 0),
                             self.du_t[comp](*pts), "du_t[%d]" % comp)
        if self.d2u_t is not None:
            for key, closure in self.d2u_t.items():
                _check_close(_fd_partial(self.d2u[key], pts, 0),
                             closure(*pts), "d2u_t[%d,%d]" % key)

    # -- sources -------------------------------------------------------------------

    def synthesize_sources(self):
        """(F, f) samplers such that u solves the equation exactly.  F is
        None or a tuple of dim closures; f is None or a closure."""
        lam = self.lam
        if self.mode == "f_only":
            scale = 1.0 / np.sqrt(lam)

            def f(t, xp, xd):
                return scale * self.residual(t, xp, xd)

            return None, f
        if self.mode == "F_only":
            F = [None] * self.dim
            F[self.dim - 1] = self.F_d_antiderivative
            return tuple(F), None
        w = self.mix_weight
        if lam == 0 and w > 0:
            raise ValueError("mixed mode with weight on f needs lambda > 0")

        def f_part(t, xp, xd):
            return w / np.sqrt(lam) * self.residual(t, xp, xd)

        def Fd_part(t, xp, xd):
            return (1.0 - w) * self.F_d_antiderivative(t, xp, xd)

        F = [None] * self.dim
        F[self.dim - 1] = Fd_part
        return tuple(F), (f_part if w > 0 else None)

    def synthesize_f_t(self):
        """Closure for the time derivative of the f_only source."""
        if self.mode != "f_only":
            raise ValueError("f_t is defined for f_only cases")
        scale = 1.0 / np.sqrt(self.lam)

        def f_t(t, xp, xd):
            return scale * self.residual_t(t, xp, xd)

        return f_t


# -- default family -------------------------------------------------------------

def default_case(dim, lam=1.0, Ld=4.0, T=1.0, mode="f_only", coeffs=None,
                 amplitude=1.0):
    """u = A sin(t) g(x_d) [cos(x')] with g = x e^{-x} - x^2 e^{-Ld}/Ld:
    vanishing linearly at x_d = 0, exactly zero at the truncation boundary,
    and with elementary antiderivatives for the F_only mode."""
    c = np.exp(-Ld) / Ld
    A = float(amplitude)

    def g(x):
        return x * np.exp(-x) - c * x ** 2

    def gp(x):
        return (1 - x) * np.exp(-x) - 2 * c * x

    def gpp(x):
        return (x - 2) * np.exp(-x) - 2 * c

    def g_over_x_anti(x):
        # antiderivative of g(x)/x = e^{-x} - c x
        return -np.exp(-x) - 0.5 * c * x ** 2

    def g_anti(x):
        return -(x + 1) * np.exp(-x) - c * x ** 3 / 3

    if coeffs is None:
        coeffs = identity_coefficients(dim)
    lamf = float(lam)

    if dim == 1:
        u = lambda t, xp, xd: A * np.sin(t) * g(xd)
        u_t = lambda t, xp, xd: A * np.cos(t) * g(xd)
        u_tt = lambda t, xp, xd: -A * np.sin(t) * g(xd)
        du = (lambda t, xp, xd: A * np.sin(t) * gp(xd),)
        du_t = (lambda t, xp, xd: A * np.cos(t) * gp(xd),)
        d2u = {(0, 0): lambda t, xp, xd: A * np.sin(t) * gpp(xd)}
        d2u_t = {(0, 0): lambda t, xp, xd: A * np.cos(t) * gpp(xd)}

        def Fd_anti(t, xp, xd):
            # d/dx Fd = -residual/x for a = I, c0 = 1
            return A * (-(np.cos(t) + lamf * np.sin(t)) * g_over_x_anti(xd)
                        + np.sin(t) * gp(xd))
    else:
        u = lambda t, xp, xd: A * np.sin(t) * np.cos(xp) * g(xd)
        u_t = lambda t, xp, xd: A * np.cos(t) * np.cos(xp) * g(xd)
        u_tt = lambda t, xp, xd: -A * np.sin(t) * np.cos(xp) * g(xd)
        du = (lambda t, xp, xd: -A * np.sin(t) * np.sin(xp) * g(xd),
              lambda t, xp, xd: A * np.sin(t) * np.cos(xp) * gp(xd))
        du_t = (lambda t, xp, xd: -A * np.cos(t) * np.sin(xp) * g(xd),
                lambda t, xp, xd: A * np.cos(t) * np.cos(xp) * gp(xd))
        d2u = {(0, 0): lambda t, xp, xd: -A * np.sin(t) * np.cos(xp) * g(xd),
               (0, 1): lambda t, xp, xd: -A * np.sin(t) * np.sin(xp) * gp(xd),
               (1, 1): lambda t, xp, xd: A * np.sin(t) * np.cos(xp) * gpp(xd)}
        d2u_t = {
            (0, 0): lambda t, xp, xd: -A * np.cos(t) * np.cos(xp) * g(xd),
            (0, 1): lambda t, xp, xd: -A * np.cos(t) * np.sin(xp) * gp(xd),
            (1, 1): lambda t, xp, xd: A * np.cos(t) * np.cos(xp) * gpp(xd)}

        def Fd_anti(t, xp, xd):
            # includes the tangential Laplacian contribution
            return A * np.cos(xp) * (
                -(np.cos(t) + lamf * np.sin(t)) * g_over_x_anti(xd)
                + np.sin(t) * (gp(xd) - g_anti(xd)))

    return ManufacturedCase(
        "default_d%d" % dim, dim, coeffs, lamf, u, u_t, du, d2u, mode=mode,
        F_d_antiderivative=Fd_anti, u_tt=u_tt, du_t=du_t, d2u_t=d2u_t,
        Ld=Ld, T=T)


# -- convergence machinery ---------------------------------------------------------

class StudyRow:
    def __init__(self, M, dt, e0, e1):
        self.M = M
        self.dt = dt
        self.e0 = e0
        self.e1 = e1


class StudyTable:
    def __init__(self, rows, p):
        self.rows = rows
        self.p = p
        self.rates0 = self._rates([r.e0 for r in rows])
        self.rates1 = self._rates([r.e1 for r in rows])

    def _rates(self, errs):
        out = [np.nan]
        for k in range(1, len(self.rows)):
            ratio = self.rows[k].M / self.rows[k - 1].M
            if errs[k] > 0 and errs[k - 1] > 0:
                out.append(np.log(errs[k - 1] / errs[k]) / np.log(ratio))
            else:
                out.append(np.nan)
        return out

    def fitted_rates(self):
        """Least-squares slopes of log e vs log(1/M) over all rungs."""
        Ms = np.array([r.M for r in self.rows], float)
        out = []
        for errs in ([r.e0 for r in self.rows], [r.e1 for r in self.rows]):
            errs = np.array(errs)
            good = errs > 0
            if good.sum() < 2:
                out.append(np.nan)
                continue
            out.append(-np.polyfit(np.log(Ms[good]), np.log(errs[good]),
                                   1)[0])
        return tuple(out)

    def csv(self):
        lines = ["M,dt,e0,e1,rate0,rate1"]
        for r, q0, q1 in zip(self.rows, self.rates0, self.rates1):
            lines.append("%d,%.10g,%.12g,%.12g,%.6g,%.6g"
                         % (r.M, r.dt, r.e0, r.e1, q0, q1))
        return "\n".join(lines) + "\n"


def convergence_study(case, meshes, p=2.0, theta=1.0, linear_tol=1e-11):
    """March the manufactured case on each mesh; e0 is the weighted solution
    error (weight x_d^{-p/2}), e1 the gradient error."""
    if len(meshes) < 3:
        raise ValueError("need a ladder of at least 3 meshes")
    F, f = case.synthesize_sources()
    exact = {"u": case.u, "du": case.du}
    rows = []
    for mesh in meshes:
        if abs(mesh.Ld - case.Ld) > 1e-12 or abs(mesh.total_time
                                                 - case.T) > 1e-12:
            raise ValueError("mesh window does not match the case")
        config = TimeStepperConfig(theta=theta, linear_tol=linear_tol)
        sol = march(mesh, case.coeffs, case.lam, F=F, f=f, config=config)
        e0 = error_norm(sol, exact, NormSpec(p, -p / 2.0, "0"))
        e1 = error_norm(sol, exact, NormSpec(p, 0.0, "1_full"))
        rows.append(StudyRow(mesh.M, sol.dt, e0, e1))
    return StudyTable(rows, p)


def nodal_residual(case, mesh, theta=1.0):
    """Truncation indicator: plug the analytic solution's nodal samples into
    the marched system and return max_n ||residual^n||_2 normalized by
    dt * max ||b||_2."""
    F, f = case.synthesize_sources()
    dt = mesh.total_time / mesh.time_count
    N = mesh.time_count
    mass = assemble_weighted_mass(mesh, case.coeffs.a0)
    K = assemble_stiffness(mesh, case.coeffs, case.lam, t=0.0,
                           _self_check=False).matrix
    loads = LoadAssembler(mesh)
    times = dt * np.arange(N + 1)

    def interior_samples(t):
        return sample_nodes(mesh, case.u, t)[1:-1, :].ravel()

    worst = 0.0
    bscale = 0.0
    uprev = interior_samples(0.0)
    bprev = loads.assemble(F, f, case.lam, t=0.0).values
    for n in range(N):
        unext = interior_samples(times[n + 1])
        bnext = loads.assemble(F, f, case.lam, t=times[n + 1]).values
        btheta = theta * bnext + (1 - theta) * bprev
        res = mass.matrix @ (unext - uprev) \
            + dt * theta * (K @ unext) \
            + dt * (1 - theta) * (K @ uprev) \
            - dt * btheta
        worst = max(worst, np.linalg.norm(res))
        bscale = max(bscale, np.linalg.norm(btheta))
        uprev, bprev = unext, bnext
    return worst / (dt * max(bscale, 1e-300))
