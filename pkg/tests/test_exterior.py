import numpy as np
import pytest

from sepapprox.errors import ParameterError
from sepapprox.exterior import (HAT_TAG, SectorMaterials, Variant, build_exterior_mesh,
                                gamma_hat, gamma_hat_columns, halfplane_for, lift_gamma,
                                polarization_hat, rotate_180)
from sepapprox.geometry import REFERENCE_TRIANGLES


@pytest.fixture(scope="module")
def ext1():
    return build_exterior_mesh(30.0, 1)


@pytest.fixture(scope="module")
def ext2():
    return build_exterior_mesh(30.0, 2)


def test_hat_is_the_single_reference_element(ext1, ext2):
    for ext, t in ((ext1, 1), (ext2, 2)):
        assert np.sum(ext.sector_tag == HAT_TAG) == 1
        assert ext.sector_tag[ext.hat_element] == HAT_TAG
        assert np.allclose(ext.vertices[ext.elements[ext.hat_element]], REFERENCE_TRIANGLES[t])


def test_mesh_size_and_area(ext1):
    assert 4000 < ext1.n_elements < 5000
    assert 2000 < ext1.n_vertices < 2600
    assert abs(ext1.domain_area / (np.pi * 30 ** 2) - 1) < 2e-3
    assert np.all(ext1.area > 0)


def test_all_sectors_present(ext1):
    assert set(np.unique(ext1.sector_tag)) == {HAT_TAG, 0, 1, 2}


def test_rim_is_dirichlet(ext1):
    r = np.linalg.norm(ext1.vertices, axis=1)
    assert np.all(ext1.dirichlet_vertex[r > 30 - 1e-9])
    assert not ext1.dirichlet_vertex[r < 29].any()


def test_hash_is_deterministic(ext1):
    assert build_exterior_mesh(30.0, 1).mesh_hash() == ext1.mesh_hash()
    assert build_exterior_mesh(20.0, 1).mesh_hash() != ext1.mesh_hash()


def test_gamma_hat_properties(ext1):
    G = gamma_hat(ext1, SectorMaterials.homogeneous(1.0))
    assert np.allclose(G, G.T)
    assert np.all(np.linalg.eigvalsh(G) < 0)
    assert np.allclose(gamma_hat_columns(ext1, SectorMaterials.homogeneous(1.0)), G, atol=1e-12)
    # homogeneous scaling: Gamma(lam) = Gamma(1) / lam
    assert np.allclose(gamma_hat(ext1, SectorMaterials.homogeneous(7.0)), G / 7.0, rtol=1e-10)


def test_lift_matches_direct(ext1):
    mats = SectorMaterials(1.0, (3.0, 40.0, 700.0))
    G1 = gamma_hat(ext1, mats)
    for x in (2.0, 145.0, 1000.0):
        direct = gamma_hat(ext1, mats.with_hat(x))
        assert np.allclose(lift_gamma(G1, x, 1.0), direct, rtol=1e-10, atol=1e-15)


def test_polarization_identity(ext2):
    mats = SectorMaterials(5.0, (1.0, 30.0, 300.0))
    G = gamma_hat(ext2, mats)
    for lam_in in (1.0, 80.0, 1000.0):
        d = lam_in - 5.0
        P = polarization_hat(ext2, mats, lam_in)
        inv = np.linalg.inv(np.eye(2) - d * G)
        assert np.abs(P - d * G @ inv).max() < 1e-9
        assert np.abs(np.eye(2) + P - inv).max() < 1e-9


@pytest.mark.parametrize("t", [1, 2])
def test_half_disk_lies_in_halfplane(t):
    v = Variant("top", "neumann")
    ext = build_exterior_mesh(30.0, t, v)
    n, s = halfplane_for(t, "top")
    assert np.all(ext.vertices @ n <= s + 1e-12)
    assert abs(ext.domain_area / (0.5 * np.pi * 900) - 1) < 0.1
    G = gamma_hat(ext, SectorMaterials.homogeneous(1.0))
    assert np.all(np.linalg.eigvalsh(G) < 0)


def test_dirichlet_cut_marks_straight_edge():
    ext = build_exterior_mesh(30.0, 2, Variant("top", "dirichlet"))
    n, s = halfplane_for(2, "top")
    on_cut = np.abs(ext.vertices @ n - s) < 1e-12
    assert np.all(ext.dirichlet_vertex[on_cut])
    # the hat's top edge lies on the cut, so one direction is clamped
    ev = np.linalg.eigvalsh(gamma_hat(ext, SectorMaterials.homogeneous(1.0)))
    assert ev.max() <= 1e-12 and ev.min() < 0


def test_variant_codes():
    for v in (Variant(), Variant("top", "neumann"), Variant("left", "dirichlet")):
        for t in (1, 2):
            assert Variant.from_code(v.code(t)) == v
            assert v.code(t) % 10 == t
        assert Variant.parse(str(v)) == v
    with pytest.raises(ParameterError):
        Variant("middle", "neumann")
    with pytest.raises(ParameterError):
        Variant.parse("bogus")
    with pytest.raises(ParameterError):
        SectorMaterials(1.0, (1.0, -2.0, 3.0))


def test_invalid_builder_args():
    with pytest.raises(ParameterError):
        build_exterior_mesh(5.0, 1)
    with pytest.raises(ParameterError):
        build_exterior_mesh(30.0, 3)


def test_rotate_180_is_identity_on_gamma():
    G = np.array([[-0.3, 0.1], [0.1, -0.2]])
    assert np.allclose(rotate_180(G), G)


def test_csv_export(ext1, tmp_path):
    ext1.to_csv(tmp_path / "v.csv", tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert len(lines) == ext1.n_elements + 1 and "hat" in "".join(lines)
