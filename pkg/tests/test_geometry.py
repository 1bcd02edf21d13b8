import numpy as np
import pytest

from stefanch.errors import DimensionMismatch
from stefanch.geometry import (MeshPair, PairedField, is_conforming, mean, project_zero_mean,
                               trace_conform)


@pytest.fixture(scope="module")
def mesh():
    return MeshPair.unit_square(9)


def test_unit_square_measures(mesh):
    assert mesh.area == pytest.approx(1.0, abs=1e-14)
    assert mesh.perimeter == pytest.approx(4.0, abs=1e-14)
    assert mesh.n_boundary == 4 * (9 - 1)
    assert mesh.bulk_weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert mesh.boundary_weights.sum() == pytest.approx(4.0, abs=1e-14)


def test_loop_is_the_triangulation_boundary(mesh):
    p = mesh.nodes[mesh.trace]
    on_edge = (np.isclose(p[:, 0], 0) | np.isclose(p[:, 0], 1) | np.isclose(p[:, 1], 0)
               | np.isclose(p[:, 1], 1))
    assert on_edge.all()
    assert np.allclose(mesh.edge_lengths, 1 / 8)
    assert mesh.arc_length[0] == 0.0 and mesh.arc_length[-1] == pytest.approx(4 - 1 / 8)


def test_validate_rejects_bad_loop():
    m = MeshPair.two_triangle()
    with pytest.raises(ValueError):
        MeshPair(m.nodes.copy(), m.triangles.copy(), np.array([0, 2, 1, 3]))
    with pytest.raises(ValueError):
        MeshPair(m.nodes.copy(), m.triangles[:, ::-1].copy(), m.trace.copy())


def test_mean_of_constant_is_constant(mesh):
    assert mean(mesh, PairedField.constant(mesh, 2.5)) == pytest.approx(2.5, abs=1e-15)


def test_mean_cancellation(mesh):
    # bulk integral 1, boundary integral -1
    z = PairedField(np.ones(mesh.n_bulk), -np.ones(mesh.n_boundary) / 4)
    assert abs(mean(mesh, z)) < 1e-15


def test_mean_matches_quadrature_at_double_resolution():
    coarse, fine = MeshPair.unit_square(9), MeshPair.unit_square(17)

    def field(m):
        x, y = m.nodes.T
        return trace_conform(m, x + 2 * y)   # linear: P1 is exact on both meshes

    # exact: int_Omega = 1.5, int_Gamma = 6 -> 7.5/5
    assert mean(coarse, field(coarse)) == pytest.approx(1.5, abs=1e-13)
    assert mean(fine, field(fine)) == pytest.approx(mean(coarse, field(coarse)), abs=1e-13)


def test_projection(mesh):
    rng = np.random.default_rng(3)
    z = PairedField(rng.standard_normal(mesh.n_bulk), rng.standard_normal(mesh.n_boundary))
    pz = project_zero_mean(mesh, z)
    assert abs(mean(mesh, pz)) <= 1e-12
    ppz = project_zero_mean(mesh, pz)
    assert np.allclose(ppz.bulk, pz.bulk, atol=1e-15)
    c = project_zero_mean(mesh, PairedField.constant(mesh, 3.0))
    assert np.allclose(c.bulk, 0) and np.allclose(c.boundary, 0)


def test_trace_conform(mesh):
    assert np.all(trace_conform(mesh, np.ones(mesh.n_bulk)).boundary == 1.0)
    v = np.random.default_rng(0).standard_normal(mesh.n_bulk)
    z = trace_conform(mesh, v)
    assert np.array_equal(z.boundary, v[mesh.trace]) and z.conforming
    assert is_conforming(mesh, z)
    inner = np.ones(mesh.n_bulk)
    inner[mesh.trace] = 0.0
    assert np.all(trace_conform(mesh, inner).boundary == 0.0)


def test_dimension_checks(mesh):
    with pytest.raises(DimensionMismatch):
        trace_conform(mesh, np.ones(3))
    with pytest.raises(DimensionMismatch):
        mean(mesh, PairedField(np.ones(3), np.ones(2)))


def test_paired_field_algebra(mesh):
    a = PairedField.constant(mesh, 1.0)
    b = PairedField(np.zeros(mesh.n_bulk), np.ones(mesh.n_boundary))
    assert (a + b).conforming is False
    assert (2 * a).conforming and np.all((a - a).bulk == 0)


def test_dump(tmp_path, mesh):
    p = tmp_path / "mesh.txt"
    mesh.dump(p)
    lines = p.read_text().splitlines()
    assert lines[0] == f"nodes {mesh.n_bulk}"
    assert f"boundary {mesh.n_boundary}" in lines
