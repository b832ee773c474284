"""Weighted norms of discrete fields and the standalone inequality checks
(Hardy ratio, near-boundary trace decay, weighted second differences).

Space integrals run 8-point Gauss-Legendre per cell in each direction with
the x_d^alpha factor kept inside the integrand; the time integral is the
level-wise rectangle rule (right endpoint).  Derivative order 1 uses the
exact elementwise gradients of the bilinear field; order 2 uses nodal second
differences (the three-point formulas are exact on quadratics).
"""

import numpy as np

from .fields import DiscreteField, sample_nodes
from .mesh import cells_in_cylinder, Cylinder

_GLX, _GLW = np.polynomial.legendre.leggauss(8)
_ORDERS = ("0", "1_full", "1_xd", "2_full")


class NormSpec:
    """p in (1, inf); weight x_d^alpha; derivative order; optional Cylinder."""

    def __init__(self, p, weight_exponent=0.0, derivative_order="0",
                 region=None):
        order = str(derivative_order)
        if not p > 1:
            raise ValueError("p must exceed 1, got %r" % (p,))
        if order not in _ORDERS:
            raise ValueError("derivative_order must be one of %s" % (_ORDERS,))
        alpha = float(weight_exponent)
        if order == "0":
            if not alpha > -p - 1:
                raise ValueError(
                    "weight exponent %g not integrable against fields "
                    "vanishing linearly at x_d=0 (need alpha > -p-1)" % alpha)
        else:
            if not alpha > -1:
                raise ValueError(
                    "weight exponent %g not integrable against derivative "
                    "norms (need alpha > -1)" % alpha)
        if region is not None and not isinstance(region, Cylinder):
            raise ValueError("region must be a Cylinder or None")
        self.p = float(p)
        self.weight_exponent = alpha
        self.derivative_order = order
        self.region = region

    def summary(self):
        return {"p": self.p, "alpha": self.weight_exponent,
                "order": self.derivative_order,
                "region": None if self.region is None
                else self.region.summary()}


# -- elementwise evaluation -----------------------------------------------------

def _space_cell_split(mesh, space_cells):
    npc = mesh.xprime_count
    if space_cells is None:
        flat = np.arange(mesh.n_space_cells)
    else:
        flat = np.asarray(space_cells, int)
    return flat // npc, flat % npc


def _corner_values(values, j, m, npc):
    m1 = (m + 1) % npc
    return (values[j, m], values[j + 1, m], values[j, m1], values[j + 1, m1])


def _level_power(mesh, values, spec, space_cells=None):
    """integral over the selected space cells of |derivative expr|^p x_d^alpha
    for one nodal array (M+1, npc); returns the p-th power (not the norm)."""
    order = spec.derivative_order
    if order == "2_full":
        mag = second_difference_magnitude(mesh, values)
        inner = NormSpec(spec.p, spec.weight_exponent, "0")
        return _level_power(mesh, mag, inner, space_cells)

    p, alpha = spec.p, spec.weight_exponent
    j, m = _space_cell_split(mesh, space_cells)
    if j.size == 0:
        return 0.0
    npc = mesh.xprime_count
    xl = mesh.xd_nodes[j]
    h = mesh.xd_widths[j]
    delta = mesh.xprime_spacing if mesh.dim == 2 else 1.0

    s = 0.5 * (_GLX + 1.0)          # xd barycentric nodes
    ws = 0.5 * _GLW
    if mesh.dim == 2:
        q, wq = s, ws
    else:
        q, wq = np.array([0.5]), np.array([1.0])

    u00, u10, u01, u11 = _corner_values(values, j, m, npc)
    # shapes: cells x s-nodes x q-nodes
    S = s[None, :, None]
    Q = q[None, None, :]
    x = xl[:, None, None] + h[:, None, None] * S
    if order == "0":
        g = (u00[:, None, None] * (1 - S) * (1 - Q)
             + u10[:, None, None] * S * (1 - Q)
             + u01[:, None, None] * (1 - S) * Q
             + u11[:, None, None] * S * Q)
        core = np.abs(g) ** p
    else:
        dd = ((u10 - u00)[:, None, None] * (1 - Q)
              + (u11 - u01)[:, None, None] * Q) / h[:, None, None]
        if order == "1_xd":
            core = np.abs(dd) ** p
        else:
            dp = ((u01 - u00)[:, None, None] * (1 - S)
                  + (u11 - u10)[:, None, None] * S) / delta
            core = (dd * dd + dp * dp) ** (p / 2)
    w2 = ws[None, :, None] * wq[None, None, :]
    cellsize = (h * delta)[:, None, None]
    return float(np.sum(core * x ** alpha * w2 * cellsize))


def second_difference_fields(mesh, values):
    """Nodal second differences (d2_xd, d2_mixed, d2_xp); the latter two are
    None in dim=1.  Boundary rows copy their interior neighbour (constant
    extrapolation keeps quadratics exact)."""
    values = np.asarray(values, float)
    h = mesh.xd_widths
    hm, hp = h[:-1], h[1:]
    out = np.empty_like(values)
    num = values.shape[0] - 1
    wl = (2 / (hm * (hm + hp)))[:, None]
    wc = (-2 / (hm * hp))[:, None]
    wr = (2 / (hp * (hm + hp)))[:, None]
    out[1:num] = wl * values[:-2] + wc * values[1:-1] + wr * values[2:]
    out[0] = out[1]
    out[num] = out[num - 1]
    if mesh.dim == 1:
        return out, None, None
    delta = mesh.xprime_spacing
    dpp = (np.roll(values, 1, axis=1) - 2 * values
           + np.roll(values, -1, axis=1)) / delta ** 2
    dq = (np.roll(values, -1, axis=1) - np.roll(values, 1, axis=1)) \
        / (2 * delta)
    dl = (-hp / (hm * (hm + hp)))[:, None]
    dc = ((hp - hm) / (hm * hp))[:, None]
    dr = (hm / (hp * (hm + hp)))[:, None]
    dpd = np.empty_like(values)
    dpd[1:num] = dl * dq[:-2] + dc * dq[1:-1] + dr * dq[2:]
    dpd[0] = dpd[1]
    dpd[num] = dpd[num - 1]
    return out, dpd, dpp


def second_difference_magnitude(mesh, values):
    ddd, dpd, dpp = second_difference_fields(mesh, values)
    if mesh.dim == 1:
        return np.abs(ddd)
    return np.sqrt(ddd ** 2 + 2 * dpd ** 2 + dpp ** 2)


# -- public norms -----------------------------------------------------------------

def _check_boundary_integrability(values, spec):
    if spec.derivative_order == "0" and spec.weight_exponent <= -1:
        if np.max(np.abs(np.asarray(values)[..., 0, :])) > 0:
            raise ValueError(
                "weight x_d^%g requires a vanishing x_d=0 trace"
                % spec.weight_exponent)


def _region_cells(mesh, spec):
    if spec.region is None:
        return None, None
    cs = cells_in_cylinder(mesh, spec.region)
    return cs.time_cells, cs.space_cells


def weighted_norm(field, spec, skip_initial=0):
    """Weighted L_p (or derivative) norm of a DiscreteField (space only) or a
    SpaceTimeSolution (space-time, rectangle rule over levels)."""
    if isinstance(field, DiscreteField):
        _check_boundary_integrability(field.values, spec)
        _, space_cells = _region_cells(field.mesh, spec)
        return _level_power(field.mesh, field.values, spec,
                            space_cells) ** (1.0 / spec.p)
    mesh = field.mesh
    levels = field.levels
    if not np.all(np.isfinite(levels)):
        raise ValueError("non-finite values in solution")
    _check_boundary_integrability(levels, spec)
    time_cells, space_cells = _region_cells(mesh, spec)
    if time_cells is None:
        time_cells = np.arange(skip_initial, field.time_count)
    dt = field.dt
    total = 0.0
    for k in time_cells:
        total += dt * _level_power(mesh, levels[k + 1], spec, space_cells)
    return total ** (1.0 / spec.p)


def levels_norm(mesh, level_values, dt, spec, space_cells=None):
    """Rectangle-rule space-time norm of a raw stack of nodal arrays
    (n_levels, M+1, npc); every entry contributes dt."""
    total = 0.0
    for vals in np.asarray(level_values, float):
        total += dt * _level_power(mesh, vals, spec, space_cells)
    return total ** (1.0 / spec.p)


# -- inequality checks --------------------------------------------------------------

class RatioReport:
    def __init__(self, name, numerator, denominator, bound, p):
        self.name = name
        self.numerator = float(numerator)
        self.denominator = float(denominator)
        self.bound = float(bound)
        self.p = float(p)
        self.ratio = (0.0 if numerator == 0 else
                      float(numerator / denominator))
        self.passed = self.ratio <= self.bound

    def summary(self):
        return {"name": self.name, "ratio": self.ratio, "bound": self.bound,
                "numerator": self.numerator, "denominator": self.denominator,
                "p": self.p, "passed": bool(self.passed)}


def hardy_check(field, p):
    """r = ||u/x_d||_p / ||D_d u||_p against the sharp constant p/(p-1)."""
    num_spec = NormSpec(p, weight_exponent=-p, derivative_order="0")
    den_spec = NormSpec(p, weight_exponent=0.0, derivative_order="1_xd")
    num = weighted_norm(field, num_spec)
    den = weighted_norm(field, den_spec)
    if den == 0.0 and num > 0.0:
        raise ValueError("zero gradient with nonzero weighted norm: "
                         "the x_d=0 trace must be broken")
    return RatioReport("hardy", num, den, p / (p - 1) + 0.05, p)


class SlopeReport:
    def __init__(self, p, slope, constant, threshold, n_slices):
        self.p = p
        self.slope = float(slope)
        self.constant = float(constant)
        self.threshold = float(threshold)
        self.n_slices = int(n_slices)
        self.passed = np.isfinite(constant) and slope >= threshold

    def summary(self):
        return {"p": self.p, "slope": self.slope, "constant": self.constant,
                "threshold": self.threshold, "n_slices": self.n_slices,
                "passed": bool(self.passed)}


def _xp_lp_power(mesh, row, p):
    """integral over the periodic x' circle of |P1 row|^p (row: (npc,))."""
    if mesh.dim == 1:
        return float(np.abs(row[0]) ** p)
    delta = mesh.xprime_spacing
    a = row
    b = np.roll(row, -1)
    s = 0.5 * (_GLX + 1.0)
    g = a[:, None] * (1 - s[None, :]) + b[:, None] * s[None, :]
    return float(np.sum(np.abs(g) ** p * (0.5 * _GLW)[None, :]) * delta)


def slice_norms(field, p, skip_initial=0):
    """s(x_d) at every node: L_p over x' (and rectangle rule over time for
    solutions).  Returns (xd_nodes, s)."""
    mesh = field.mesh
    if isinstance(field, DiscreteField):
        stacked = field.values[None, :, :]
        dt = 1.0
        rows = range(1)
    else:
        stacked = field.levels
        dt = field.dt
        rows = range(skip_initial + 1, stacked.shape[0])
    s = np.zeros(mesh.M + 1)
    for jnode in range(mesh.M + 1):
        acc = 0.0
        for n in rows:
            acc += dt * _xp_lp_power(mesh, stacked[n, jnode, :], p)
        s[jnode] = acc ** (1.0 / p)
    return mesh.xd_nodes.copy(), s


def trace_decay_check(field, p, skip_initial=0):
    """Least-squares log-log slope of the slice norms over the near-boundary
    quartile; the expected decay exponent is 1/2 - 1/p."""
    if p < 2:
        raise ValueError("trace decay check needs p >= 2")
    xd, s = slice_norms(field, p, skip_initial=skip_initial)
    expo = 0.5 - 1.0 / p
    mesh = field.mesh
    quart = max(4, mesh.M // 4)
    js = np.arange(1, min(quart, mesh.M) + 1)
    usable = js[s[js] > 0]
    if usable.size < 4:
        raise ValueError("fewer than 4 usable near-boundary slices")
    slope = np.polyfit(np.log(xd[usable]), np.log(s[usable]), 1)[0]
    pos = np.arange(1, mesh.M + 1)
    constant = float(np.max(s[pos] / xd[pos] ** expo))
    return SlopeReport(p, slope, constant, expo - 0.05, usable.size)


def second_order_weighted_norm(field, p):
    """|| D2 u ||_{L_p, weight x_d^{p/2}} by nodal second differences."""
    mesh = field.mesh
    if mesh.M + 1 < 4:
        raise ValueError("second differences need at least 4 x_d nodes")
    spec = NormSpec(p, weight_exponent=p / 2.0, derivative_order="2_full")
    return weighted_norm(field, spec)


# -- error norms against analytic callables ------------------------------------------

def _level_error_power(mesh, values, exact, spec, t, space_cells=None):
    """Like _level_power but the integrand is |u_h - u| (order 0) or
    |grad u_h - grad u| (order 1_full / 1_xd); exact is a dict with callables
    'u' and 'du' (tuple ordered (x', x_d) in dim 2)."""
    p, alpha = spec.p, spec.weight_exponent
    order = spec.derivative_order
    j, m = _space_cell_split(mesh, space_cells)
    if j.size == 0:
        return 0.0
    npc = mesh.xprime_count
    xl = mesh.xd_nodes[j]
    h = mesh.xd_widths[j]
    delta = mesh.xprime_spacing if mesh.dim == 2 else 1.0
    s = 0.5 * (_GLX + 1.0)
    ws = 0.5 * _GLW
    if mesh.dim == 2:
        q, wq = s, ws
        xp0 = mesh.xprime_nodes[m]
    else:
        q, wq = np.array([0.5]), np.array([1.0])
        xp0 = np.zeros(j.size)
    S = s[None, :, None]
    Q = q[None, None, :]
    x = xl[:, None, None] + h[:, None, None] * S
    xp = xp0[:, None, None] + delta * Q if mesh.dim == 2 \
        else np.zeros_like(x)
    u00, u10, u01, u11 = _corner_values(values, j, m, npc)
    if order == "0":
        g = (u00[:, None, None] * (1 - S) * (1 - Q)
             + u10[:, None, None] * S * (1 - Q)
             + u01[:, None, None] * (1 - S) * Q
             + u11[:, None, None] * S * Q)
        core = np.abs(g - exact["u"](t, xp, x)) ** p
    else:
        dd = ((u10 - u00)[:, None, None] * (1 - Q)
              + (u11 - u01)[:, None, None] * Q) / h[:, None, None]
        du = exact["du"]
        if order == "1_xd":
            core = np.abs(dd - du[-1](t, xp, x)) ** p
        else:
            ed = dd - du[-1](t, xp, x)
            if mesh.dim == 2:
                dp = ((u01 - u00)[:, None, None] * (1 - S)
                      + (u11 - u10)[:, None, None] * S) / delta
                ep = dp - du[0](t, xp, x)
            else:
                ep = np.zeros_like(ed)
            core = (ed * ed + ep * ep) ** (p / 2)
    w2 = ws[None, :, None] * wq[None, None, :]
    cellsize = (h * delta)[:, None, None]
    return float(np.sum(core * x ** alpha * w2 * cellsize))


def error_norm(solution_or_field, exact, spec, t=0.0, skip_initial=0):
    """Weighted L_p distance between the discrete field and analytic
    callables; solutions integrate in time by the rectangle rule."""
    if isinstance(solution_or_field, DiscreteField):
        mesh = solution_or_field.mesh
        _, space_cells = _region_cells(mesh, spec)
        return _level_error_power(mesh, solution_or_field.values, exact,
                                  spec, t, space_cells) ** (1.0 / spec.p)
    sol = solution_or_field
    mesh = sol.mesh
    time_cells, space_cells = _region_cells(mesh, spec)
    if time_cells is None:
        time_cells = np.arange(skip_initial, sol.time_count)
    total = 0.0
    for k in time_cells:
        total += sol.dt * _level_error_power(
            mesh, sol.levels[k + 1], exact, spec, sol.times[k + 1],
            space_cells)
    return total ** (1.0 / spec.p)


def analytic_norm(mesh, func, spec, skip_initial=0):
    """Weighted space-time L_p norm of an analytic scalar callable
    (t, xp, xd) -> values over the mesh window (order 0 only); time uses the
    right-endpoint rectangle rule on the mesh's own grid."""
    if spec.derivative_order != "0":
        raise ValueError("analytic_norm supports derivative_order '0' only")
    time_cells, space_cells = _region_cells(mesh, spec)
    if time_cells is None:
        time_cells = range(skip_initial, mesh.time_count)
    zeros = np.zeros((mesh.M + 1, mesh.xprime_count))
    exact = {"u": lambda t, xp, x: -np.asarray(func(t, xp, x), float)}
    total = 0.0
    for k in time_cells:
        t = mesh.time_levels[k + 1]
        total += mesh.time_step * _level_error_power(mesh, zeros, exact,
                                                     spec, t, space_cells)
    return total ** (1.0 / spec.p)


def nodal_max_error(solution, exact_u, skip_initial=0):
    """sup over retained levels and nodes of |u_h - u|."""
    worst = 0.0
    for n in range(skip_initial + 1, solution.levels.shape[0]):
        ex = sample_nodes(solution.mesh, exact_u, solution.times[n])
        worst = max(worst, float(np.max(np.abs(solution.levels[n] - ex))))
    return worst


def norm_csv_row(field_id, spec, value):
    region = "whole" if spec.region is None else \
        "cyl(%g,%g,%g,r=%g)" % (spec.region.center_time,
                                spec.region.center_xprime,
                                spec.region.center_xd, spec.region.radius)
    return "%s,%g,%g,%s,%s,%.12g" % (field_id, spec.p, spec.weight_exponent,
                                     spec.derivative_order, region, value)


def cell_center_gradients(mesh, values):
    """Gradient of the bilinear field at cell centers, shape (Mc, npc, dim)
    with (x', x_d) ordering in dim 2."""
    values = np.asarray(values, float)
    h = mesh.xd_widths
    out = np.empty((mesh.M, mesh.xprime_count, mesh.dim))
    vr = np.roll(values, -1, axis=1) if mesh.dim == 2 else values
    dd = 0.5 * ((values[1:] - values[:-1]) + (vr[1:] - vr[:-1])) \
        / h[:, None]
    if mesh.dim == 1:
        out[:, :, 0] = dd
        return out
    delta = mesh.xprime_spacing
    dp = 0.5 * ((vr[:-1] - values[:-1]) + (vr[1:] - values[1:])) / delta
    out[:, :, 0] = dp
    out[:, :, 1] = dd
    return out
