"""Nodal fields over a TensorMesh and deterministic random field families."""

import numpy as np


class DiscreteField:
    """One time level of nodal values, shape (M+1, xprime_count).

    Solver-produced fields carry the zero trace at x_d = 0 and x_d = L_d;
    data fields (source samples) need not.
    """

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=float)
        expected = (mesh.M + 1, mesh.xprime_count)
        if values.shape != expected:
            raise ValueError("field shape %s, mesh wants %s"
                             % (values.shape, expected))
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite field values")
        self.mesh = mesh
        self.values = values

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros((mesh.M + 1, mesh.xprime_count)))

    @classmethod
    def from_interior(cls, mesh, vec):
        """Expand an interior DoF vector (rows j=1..M-1) to the full grid."""
        vals = np.zeros((mesh.M + 1, mesh.xprime_count))
        vals[1:mesh.M, :] = np.asarray(vec, float).reshape(
            mesh.M - 1, mesh.xprime_count)
        return cls(mesh, vals)

    @classmethod
    def sample(cls, mesh, func, t=0.0):
        """Nodal samples of func(t, xprime, xd); func must broadcast."""
        return cls(mesh, sample_nodes(mesh, func, t))

    def interior_vector(self):
        return self.values[1:self.mesh.M, :].ravel()

    def has_zero_trace(self, tol=0.0):
        m = self.mesh.M
        return (np.max(np.abs(self.values[0])) <= tol
                and np.max(np.abs(self.values[m])) <= tol)


def node_grid(mesh):
    """Meshgrid of nodal coordinates: (xprime, xd) arrays of shape (M+1, nprime)."""
    xd = mesh.xd_nodes[:, None]
    xp = mesh.xprime_nodes[None, :]
    return np.broadcast_to(xp, (mesh.M + 1, mesh.xprime_count)), \
        np.broadcast_to(xd, (mesh.M + 1, mesh.xprime_count))


def sample_nodes(mesh, func, t):
    """Evaluate func(t, xprime, xd) on the full node grid."""
    xp, xd = node_grid(mesh)
    out = np.asarray(func(t, xp, xd), dtype=float)
    out = np.broadcast_to(out, xd.shape).copy()
    if not np.all(np.isfinite(out)):
        raise ValueError("sampler returned non-finite values")
    return out


def smooth_random_closure(seed, dim, n_terms=4, t_scale=1.0, xp_length=1.0,
                          envelope=True):
    """Deterministic smooth random function of (t, x', x_d) built from a short
    trigonometric series.  With envelope=True the factor x_d*exp(-x_d) is
    applied, so the function vanishes linearly at x_d = 0 and decays in x_d.

    Returns a closure usable as a source/field sampler.
    """
    rng = np.random.default_rng(seed)
    amp = rng.uniform(-1.0, 1.0, size=n_terms)
    om_t = rng.uniform(0.5, 3.0, size=n_terms) / t_scale
    ph_t = rng.uniform(0, 2 * np.pi, size=n_terms)
    om_d = rng.uniform(0.5, 2.5, size=n_terms)
    ph_d = rng.uniform(0, 2 * np.pi, size=n_terms)
    k_p = rng.integers(1, 3, size=n_terms)       # periodic in x'
    ph_p = rng.uniform(0, 2 * np.pi, size=n_terms)
    two_pi_over_L = 2 * np.pi / xp_length

    def closure(t, xp, xd):
        t = np.asarray(t, float)
        xp = np.asarray(xp, float)
        xd = np.asarray(xd, float)
        acc = 0.0
        for k in range(n_terms):
            term = amp[k] * np.sin(om_t[k] * t + ph_t[k]) \
                * np.cos(om_d[k] * xd + ph_d[k])
            if dim == 2:
                term = term * np.cos(k_p[k] * two_pi_over_L * xp + ph_p[k])
            acc = acc + term
        if envelope:
            acc = acc * xd * np.exp(-xd)
        return acc

    return closure


def random_w1p_field(seed, mesh, time_dependent=False):
    """Random discrete field vanishing at x_d = 0 (and at L_d), for the Hardy
    and trace corpora.  The same seed on a refined mesh samples the same
    underlying smooth function.
    """
    g = smooth_random_closure(seed, mesh.dim, xp_length=mesh.xprime_length)
    f = DiscreteField.sample(mesh, g, t=0.3)
    f.values[-1, :] = 0.0   # keep the discrete zero trace at the truncation
    if not time_dependent:
        return f
    levels = [sample_nodes(mesh, g, t) for t in mesh.time_levels]
    arr = np.stack(levels)
    arr[:, -1, :] = 0.0
    return arr
