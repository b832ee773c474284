"""Graded tensor-product space-time grids on the truncated strip (0, L_d).

The x_d direction is graded toward the degenerate boundary x_d = 0 by the
power law  node_j = L_d * (j/M)**kappa.  In dim = 2 the lateral direction x'
is a uniform periodic interval of length L'; in dim = 1 it collapses to a
single phantom cell of length 1 so that all measures reduce to dx_d.
Time is a uniform grid t_n = n*dt, n = 0..time_count.
"""

import numpy as np


class TensorMesh:
    """Immutable tensor mesh.  Cells are indexed (j, m): j in 0..M-1 along x_d,
    m in 0..xprime_count-1 along periodic x' (m wraps)."""

    def __init__(self, dim, xd_nodes, xprime_count, xprime_length,
                 time_step, time_count, grading_exponent):
        if dim not in (1, 2):
            raise ValueError("dim must be 1 or 2, got %r" % (dim,))
        xd_nodes = np.asarray(xd_nodes, dtype=float)
        if xd_nodes.ndim != 1 or xd_nodes.size < 3:
            raise ValueError("need at least 3 x_d nodes (M >= 2)")
        if not np.all(np.isfinite(xd_nodes)):
            raise ValueError("non-finite x_d nodes")
        if xd_nodes[0] != 0.0:
            raise ValueError("first x_d node must be exactly 0")
        if np.any(np.diff(xd_nodes) <= 0):
            raise ValueError("x_d nodes must be strictly increasing")
        if dim == 1 and xprime_count != 1:
            raise ValueError("dim=1 requires xprime_count=1")
        if xprime_count < 1 or xprime_length <= 0:
            raise ValueError("bad x' parameters")
        if time_step <= 0 or time_count < 1:
            raise ValueError("bad time grid parameters")
        self.dim = dim
        self.xd_nodes = xd_nodes
        self.xprime_count = int(xprime_count)
        self.xprime_length = float(xprime_length)
        self.time_step = float(time_step)
        self.time_count = int(time_count)
        self.grading_exponent = float(grading_exponent)
        self.xd_nodes.setflags(write=False)

    # -- x_d direction -------------------------------------------------
    @property
    def M(self):
        return self.xd_nodes.size - 1

    @property
    def Ld(self):
        return float(self.xd_nodes[-1])

    @property
    def xd_widths(self):
        return np.diff(self.xd_nodes)

    @property
    def xd_centers(self):
        return 0.5 * (self.xd_nodes[:-1] + self.xd_nodes[1:])

    # -- x' direction (periodic) ----------------------------------------
    @property
    def xprime_spacing(self):
        return self.xprime_length / self.xprime_count

    @property
    def xprime_nodes(self):
        return self.xprime_spacing * np.arange(self.xprime_count)

    @property
    def xprime_centers(self):
        return self.xprime_nodes + 0.5 * self.xprime_spacing

    # -- time grid -------------------------------------------------------
    @property
    def total_time(self):
        return self.time_step * self.time_count

    @property
    def time_levels(self):
        return self.time_step * np.arange(self.time_count + 1)

    @property
    def time_centers(self):
        return self.time_step * (np.arange(self.time_count) + 0.5)

    # -- counts ------------------------------------------------------------
    @property
    def n_space_cells(self):
        return self.M * self.xprime_count

    @property
    def n_nodes(self):
        # full node grid including both Dirichlet rows
        return (self.M + 1) * self.xprime_count

    @property
    def n_interior(self):
        return (self.M - 1) * self.xprime_count

    def cell_area(self, j):
        """Spatial measure of cell column j (same for every m)."""
        w = self.xd_widths[j]
        return w if self.dim == 1 else w * self.xprime_spacing

    def xprime_distance(self, a, b):
        """Minimum-image distance on the periodic x' circle."""
        d = np.abs(np.asarray(a) - b) % self.xprime_length
        return np.minimum(d, self.xprime_length - d)

    def summary(self):
        return {
            "dim": self.dim,
            "M": self.M,
            "L_d": self.Ld,
            "grading_exponent": self.grading_exponent,
            "xprime_count": self.xprime_count,
            "xprime_length": self.xprime_length,
            "time_step": self.time_step,
            "time_count": self.time_count,
        }

    def refined(self, space=True, time=True):
        """One refinement: double M (and x' count for dim=2), halve dt."""
        M2 = 2 * self.M if space else self.M
        np2 = self.xprime_count
        if space and self.dim == 2:
            np2 = 2 * self.xprime_count
        dt2 = 0.5 * self.time_step if time else self.time_step
        nt2 = 2 * self.time_count if time else self.time_count
        return build_mesh(self.dim, self.Ld, M2, self.grading_exponent,
                          np2, self.xprime_length, dt2, nt2)

    def __repr__(self):
        return ("TensorMesh(dim=%d, M=%d, L_d=%g, kappa=%g, nprime=%d, "
                "dt=%g, nt=%d)" % (self.dim, self.M, self.Ld,
                                   self.grading_exponent, self.xprime_count,
                                   self.time_step, self.time_count))


def build_mesh(dim, L_d, M, grading_exponent, xprime_count=1,
               xprime_length=None, time_step=1.0, time_count=1):
    """Build the graded tensor mesh: xd_nodes[j] = L_d*(j/M)**grading_exponent."""
    if not np.isfinite([L_d, grading_exponent, time_step]).all():
        raise ValueError("non-finite mesh parameters")
    if M < 2:
        raise ValueError("M must be >= 2, got %r" % (M,))
    if grading_exponent < 1:
        raise ValueError("grading_exponent must be >= 1")
    if L_d <= 0:
        raise ValueError("L_d must be positive")
    if dim == 1:
        xprime_count, xprime_length = 1, 1.0
    elif xprime_length is None:
        raise ValueError("dim=2 requires xprime_length")
    nodes = L_d * (np.arange(M + 1) / M) ** float(grading_exponent)
    return TensorMesh(dim, nodes, xprime_count, xprime_length,
                      time_step, time_count, grading_exponent)


class Cylinder:
    """Q_r^+(z0) = (t0 - r, t0] x B_r^+(x0): a Euclidean half-ball in space
    crossed with a backward time interval (not a parabolic cylinder)."""

    def __init__(self, center_time, center_xd, radius, center_xprime=0.0):
        if radius <= 0:
            raise ValueError("radius must be positive")
        if center_xd < 0:
            raise ValueError("center_xd must be >= 0")
        self.center_time = float(center_time)
        self.center_xprime = float(center_xprime)
        self.center_xd = float(center_xd)
        self.radius = float(radius)

    @property
    def boundary_centered(self):
        return self.center_xd == 0.0

    def scaled(self, factor):
        """Concentric cylinder with radius*factor."""
        return Cylinder(self.center_time, self.center_xd,
                        self.radius * factor, self.center_xprime)

    def summary(self):
        return {"center_time": self.center_time,
                "center_xprime": self.center_xprime,
                "center_xd": self.center_xd,
                "radius": self.radius}

    def __repr__(self):
        return "Cylinder(t0=%g, x'0=%g, xd0=%g, r=%g)" % (
            self.center_time, self.center_xprime, self.center_xd, self.radius)


class CellSet:
    """Cells of a mesh inside a cylinder: the product of a time-cell index set
    and a spatial-cell index set (flat index j*xprime_count + m)."""

    def __init__(self, mesh, cylinder, time_cells, space_cells):
        self.mesh = mesh
        self.cylinder = cylinder
        self.time_cells = np.asarray(time_cells, dtype=int)
        self.space_cells = np.asarray(space_cells, dtype=int)

    @property
    def n_cells(self):
        return self.time_cells.size * self.space_cells.size

    @property
    def space_j(self):
        return self.space_cells // self.mesh.xprime_count

    @property
    def space_m(self):
        return self.space_cells % self.mesh.xprime_count

    def space_measures(self):
        w = self.mesh.xd_widths[self.space_j]
        if self.mesh.dim == 2:
            w = w * self.mesh.xprime_spacing
        return w

    def total_measure(self):
        """Space-time measure of the selected cells."""
        return self.time_cells.size * self.mesh.time_step * self.space_measures().sum()


def _space_cells_in_ball(mesh, cyl):
    xc = mesh.xd_centers
    if mesh.dim == 1:
        dist2 = (xc - cyl.center_xd) ** 2
        j = np.nonzero(dist2 < cyl.radius ** 2)[0]
        return j
    dxp = mesh.xprime_distance(mesh.xprime_centers, cyl.center_xprime)
    dist2 = (xc[:, None] - cyl.center_xd) ** 2 + dxp[None, :] ** 2
    j, m = np.nonzero(dist2 < cyl.radius ** 2)
    return j * mesh.xprime_count + m


def _time_cells_in_window(mesh, t0, radius):
    tc = mesh.time_centers
    return np.nonzero((tc > t0 - radius) & (tc <= t0))[0]


def cells_in_cylinder(mesh, cyl):
    """Cells whose centers lie in the cylinder.  Deterministic; may be empty."""
    space = _space_cells_in_ball(mesh, cyl)
    time = _time_cells_in_window(mesh, cyl.center_time, cyl.radius)
    return CellSet(mesh, cyl, time, space)


def prime_cells_in_cylinder(mesh, cyl):
    """(time, x') cells of Q'_rho(z0') -- the slice-average region used by the
    partial mean oscillation.  In dim=1 the x' set is the single phantom cell."""
    time = _time_cells_in_window(mesh, cyl.center_time, cyl.radius)
    if mesh.dim == 1:
        xp = np.array([0])
    else:
        dxp = mesh.xprime_distance(mesh.xprime_centers, cyl.center_xprime)
        xp = np.nonzero(dxp < cyl.radius)[0]
    return time, xp
