import numpy as np
import pytest

from degenlab import Cylinder, build_mesh, cells_in_cylinder


def test_graded_nodes_match_power_law():
    # node j sits at L * (j/M)^kappa -- direct formula check
    m = build_mesh(1, 4.0, 8, 2.0)
    expected = 4.0 * (np.arange(9) / 8.0) ** 2.0
    assert np.allclose(m.xd_nodes, expected, rtol=0, atol=1e-15)
    assert m.xd_nodes[0] == 0.0
    assert m.xd_nodes[-1] == 4.0


def test_widths_sum_to_length():
    for kappa in (1.0, 1.5, 2.0, 3.0):
        m = build_mesh(1, 4.0, 31, kappa)
        assert np.all(m.xd_widths > 0)
        assert abs(m.xd_widths.sum() - 4.0) < 1e-12


def test_uniform_when_grading_one():
    m = build_mesh(1, 2.0, 10, 1.0)
    assert np.allclose(m.xd_widths, 0.2, rtol=0, atol=1e-15)


def test_counts_1d():
    m = build_mesh(1, 4.0, 16, 2.0, time_step=0.5, time_count=4)
    assert m.n_nodes == 17
    assert m.n_interior == 15
    assert m.n_space_cells == 16
    assert m.total_time == 2.0
    assert len(m.time_levels) == 5


def test_counts_2d():
    m = build_mesh(2, 4.0, 8, 2.0, xprime_count=6, xprime_length=2 * np.pi)
    assert m.n_nodes == 9 * 6
    assert m.n_interior == 7 * 6
    assert m.n_space_cells == 8 * 6
    assert abs(m.xprime_spacing - 2 * np.pi / 6) < 1e-15


def test_refined_halves_widths_and_dt():
    m = build_mesh(1, 4.0, 8, 2.0, time_step=0.25, time_count=4)
    r = m.refined()
    assert r.M == 16
    assert abs(r.time_step - 0.125) < 1e-15
    assert r.time_count == 8
    assert abs(r.total_time - m.total_time) < 1e-14
    # graded refinement keeps the same node family: coarse nodes reappear
    assert np.allclose(r.xd_nodes[::2], m.xd_nodes, atol=1e-14)


def test_xprime_distance_wraps():
    m = build_mesh(2, 4.0, 4, 1.0, xprime_count=8, xprime_length=2 * np.pi)
    d = m.xprime_distance(np.array([0.1]), 2 * np.pi - 0.1)
    assert abs(d[0] - 0.2) < 1e-12


def test_bad_mesh_args_rejected():
    with pytest.raises(ValueError):
        build_mesh(1, 4.0, 1, 2.0)          # too few cells
    with pytest.raises(ValueError):
        build_mesh(1, -1.0, 8, 2.0)
    with pytest.raises(ValueError):
        build_mesh(1, 4.0, 8, 0.0)          # grading must be >= 1
    with pytest.raises(ValueError):
        build_mesh(3, 4.0, 8, 2.0)
    with pytest.raises(ValueError):
        build_mesh(2, 4.0, 8, 2.0, xprime_count=1)


def test_nodes_are_write_locked():
    m = build_mesh(1, 4.0, 8, 2.0)
    with pytest.raises((ValueError, RuntimeError)):
        m.xd_nodes[0] = 1.0


def test_cylinder_cells_boundary():
    m = build_mesh(1, 4.0, 32, 2.0, time_step=0.125, time_count=8)
    cyl = Cylinder(1.0, 0.0, 0.5)
    cs = cells_in_cylinder(m, cyl)
    # every selected cell center is inside the ball and the time window
    assert cs.n_cells > 0
    assert np.all(m.xd_centers[cs.space_j] < 0.5)
    tc = m.time_centers[cs.time_cells]
    assert np.all(tc <= 1.0) and np.all(tc > 0.5)
    # scaling the cylinder can only grow the selection
    big = cells_in_cylinder(m, cyl.scaled(1.5))
    assert set(cs.space_cells) <= set(big.space_cells)
    assert set(cs.time_cells) <= set(big.time_cells)


def test_cylinder_measure_adds_up():
    m = build_mesh(1, 4.0, 16, 1.0, time_step=0.25, time_count=8)
    cyl = Cylinder(2.0, 0.0, 1.0)
    cs = cells_in_cylinder(m, cyl)
    # uniform mesh: widths 0.25, centers 0.125..: centers < 1.0 -> 4 cells
    assert cs.space_j.size == 4
    expect = cs.time_cells.size * 0.25 * (4 * 0.25)
    assert abs(cs.total_measure() - expect) < 1e-14


def test_empty_cylinder():
    m = build_mesh(1, 4.0, 8, 1.0, time_step=0.5, time_count=2)
    tiny = Cylinder(1.0, 3.9, 1e-4)
    assert cells_in_cylinder(m, tiny).n_cells == 0


def test_boundary_centered_flag():
    assert Cylinder(1.0, 0.0, 0.5).boundary_centered
    assert not Cylinder(1.0, 0.7, 0.5).boundary_centered
