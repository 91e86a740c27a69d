import numpy as np
import pytest

from mjnfet.materials import GateMaterial
from mjnfet.mesh import (RESOLUTIONS, Region, Resolution, build_mesh, graded_spacings)


def box_oracle(spec, px, py, poly_thickness=0.0):
    """Region from the device geometry alone, independent of the mesher."""
    tp, tox, H = poly_thickness, spec.dielectric_thickness, spec.channel_height
    Lx, L = spec.sd_extension_length, spec.channel_length
    in_si = (py > tp + tox) & (py < tp + tox + H)
    out = np.full(px.shape, int(Region.DIELECTRIC))
    out[in_si & ((px < Lx) | (px > Lx + L))] = Region.SD
    out[in_si & (px > Lx) & (px < Lx + L)] = Region.CHANNEL
    if tp:
        gate_x = (px > Lx) & (px < Lx + L)
        out[gate_x & ((py < tp) | (py > 2 * tp + 2 * tox + H - tp))] = Region.GATE
    return out


def test_preset_extents(paper_mesh):
    assert paper_mesh.extent == (42.0, 14.0)
    assert paper_mesh.x[0] == 0.0 and paper_mesh.y[0] == 0.0


def test_default_spacing_bounds(paper, paper_mesh):
    dx, dy = np.diff(paper_mesh.x), np.diff(paper_mesh.y)
    assert np.all(dx > 0) and np.all(dy > 0)
    yc = (paper_mesh.y[:-1] + paper_mesh.y[1:]) / 2
    ox = (yc < 2) | (yc > 12)
    assert dy[ox].max() <= 0.5 + 1e-12
    assert dy[~ox].max() <= 1.0 + 1e-12 and dx.max() <= 1.0 + 1e-12
    assert ox.sum() >= 8  # >= 4 cells in each dielectric layer


def test_grading_ratio(paper_mesh):
    for d in (np.diff(paper_mesh.x), np.diff(paper_mesh.y)):
        r = d[1:] / d[:-1]
        assert np.all(r <= 1.3 + 1e-9) and np.all(r >= 1 / 1.3 - 1e-9)


def test_cell_widths_sum_to_extent():
    for length in (3.7, 10.0, 22.0, 101.3):
        s = graded_spacings(length, 0.2, 0.3, 1.0, 1.25)
        assert abs(s.sum() - length) <= 1e-9 * length


@pytest.mark.parametrize("gate", [None, GateMaterial.poly(-1e20)])
def test_region_point_in_box_oracle(paper, rng, gate):
    spec = paper if gate is None else paper.replace(gate=gate)
    mesh = build_mesh(spec)
    tp = 0.0 if gate is None else (mesh.extent[1] - 14.0) / 2
    # sample away from the material faces, where "inside" is unambiguous
    px = rng.uniform(0, mesh.extent[0], 1000)
    py = rng.uniform(0, mesh.extent[1], 1000)
    faces_x = np.array([10.0, 32.0])
    faces_y = tp + np.array([2.0, 12.0]) if not tp else np.array([tp, tp + 2, tp + 12, tp + 14])
    keep = (np.abs(px[:, None] - faces_x).min(1) > 1e-6) & (np.abs(py[:, None] - faces_y).min(1) > 1e-6)
    got = mesh.region_at(px[keep], py[keep])
    want = box_oracle(spec, px[keep], py[keep], tp)
    assert keep.sum() > 990
    np.testing.assert_array_equal(got, want)


def test_every_cell_tagged_once(paper_mesh):
    assert paper_mesh.cell_region.shape == (paper_mesh.nx - 1, paper_mesh.ny - 1)
    assert set(np.unique(paper_mesh.cell_region)) <= {int(r) for r in Region}


def test_contacts_nonempty_disjoint(paper_mesh):
    sets = [set(v.tolist()) for v in paper_mesh.contacts.values()]
    assert set(paper_mesh.contacts) == {"source", "drain", "gate_top", "gate_bottom"}
    assert all(sets)
    for a in range(len(sets)):
        for b in range(a + 1, len(sets)):
            assert not sets[a] & sets[b]


def test_fine_doubles_node_counts(paper, paper_mesh):
    fine = build_mesh(paper, "fine")
    assert 1.6 < (fine.nx - 1) / (paper_mesh.nx - 1) < 2.4
    assert 1.6 < (fine.ny - 1) / (paper_mesh.ny - 1) < 2.4
    assert RESOLUTIONS["fine"] == RESOLUTIONS["default"].refined(2.0)


def test_coarse_spacing_rejected_in_thin_oxide(paper):
    with pytest.raises(ValueError, match="dielectric"):
        build_mesh(paper, {"dielectric": 5.0, "interface": 5.0, "silicon": 5.0})


def test_resolution_validation():
    with pytest.raises(ValueError):
        Resolution(0.4, 0.4, 1.0, ratio=1.5)
    with pytest.raises(ValueError):
        Resolution(0.0, 0.4, 1.0)


def test_invalid_spec_rejected(paper):
    with pytest.raises(ValueError):
        build_mesh(paper.replace(dielectric_thickness=0.0))


def test_mesh_csv_dump(paper_mesh, tmp_path):
    p = tmp_path / "mesh.csv"
    paper_mesh.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "x_nm,y_nm,region"
    assert len(lines) == paper_mesh.n_nodes + 1


def test_poly_gate_meshed_metal_not(paper, paper_mesh):
    assert not (paper_mesh.cell_region == Region.GATE).any()
    poly = build_mesh(paper.replace(gate=GateMaterial.poly(-1e20)))
    assert (poly.cell_region == Region.GATE).any()


def test_volumes_partition(paper_mesh):
    total, semi, poly = paper_mesh.node_volumes
    assert total.sum() == pytest.approx(42e-7 * 14e-7, rel=1e-12)
    assert semi.sum() == pytest.approx(42e-7 * 10e-7, rel=1e-12)
    assert poly.sum() == 0
