import struct
import warnings

import numpy as np
import pytest

from sepapprox.errors import (ParameterError, RangeError,
                              SingularSystemError, TableFormatError, TableHashError,
                              TableHashWarning, TableTruncatedError, TableVersionError)
from sepapprox.exterior import Variant, build_exterior_mesh
from sepapprox.tables import (GammaTable, chord_error, equilibrated_nodes,
                              interpolate_gamma, interpolate_gamma_batch, load_table,
                              precompute_table, save_table, table_filename)
from sepapprox.verification import REFERENCE_NODES


def test_reference_nodes(nodes16):
    for got, ref in zip(nodes16.nodes, REFERENCE_NODES):
        if ref < 10:
            assert abs(got - ref) <= 0.002
        else:
            assert abs(got - ref) <= 1e-3 * ref


@pytest.mark.parametrize("N,p", [(4, -0.5), (16, -0.5), (9, -1.0)])
def test_equilibrated(N, p):
    ns = equilibrated_nodes(N, 1.0, 1000.0, p)
    e = ns.interval_errors()
    assert np.ptp(e) / e.mean() < 1e-9
    assert ns.nodes[0] == 1.0 and ns.nodes[-1] == 1000.0
    assert np.all(np.diff(ns.nodes) > 0)


def test_chord_error_small_interval_estimate():
    a, d = 10.0, 1e-3
    est = 0.5 * 1.5 * a ** -2.5 * d ** 2 / 4
    assert np.isclose(chord_error(a, a + d, -0.5), est, rtol=1e-3)


def test_node_argument_errors():
    with pytest.raises(ParameterError):
        equilibrated_nodes(2)
    with pytest.raises(ParameterError):
        equilibrated_nodes(8, 10.0, 1.0)
    with pytest.raises(ParameterError):
        equilibrated_nodes(8, exponent=0.5)


def test_refined_grid(nodes16):
    g = nodes16.refined(4)
    assert len(g) == 61
    assert np.all(np.isin(nodes16.nodes, g))
    assert np.all(np.diff(g) > 0)


def _synthetic_table(nodes, f):
    v = nodes.nodes
    N = len(v)
    E = np.empty((N, N, N, N, 2, 2))
    for idx in np.ndindex(N, N, N, N):
        E[idx] = f(v[list(idx)])
    return GammaTable(nodes=nodes, elem_type=1, variant=Variant(), entries=E, R=30.0,
                      mesh_hash=123)


def _multilinear(q):
    a, b, c, d = q
    x = -1.0 - a - 0.5 * b * c + 1e-4 * a * b * c * d
    return np.array([[x, 0.1 * d], [0.1 * d, x - c]])


def test_interpolation_exact_for_multilinear(rng):
    ns = equilibrated_nodes(5)
    tab = _synthetic_table(ns, _multilinear)
    q = rng.uniform(1, 1000, (50, 4))
    got = interpolate_gamma_batch(tab, q)
    want = np.array([_multilinear(x) for x in q])
    assert np.allclose(got, want, rtol=1e-12)


def test_interpolation_at_nodes_is_exact(rng):
    ns = equilibrated_nodes(5)
    tab = _synthetic_table(ns, lambda q: -np.diag([1 / q[0], np.sqrt(q.sum())]))
    for idx in rng.integers(0, 5, (20, 4)):
        q = ns.nodes[idx]
        assert np.array_equal(interpolate_gamma(tab, q), tab.entries[tuple(idx)])


def test_range_error():
    ns = equilibrated_nodes(4)
    tab = _synthetic_table(ns, _multilinear)
    with pytest.raises(RangeError):
        interpolate_gamma(tab, [0.5, 1, 1, 1])
    with pytest.raises(RangeError):
        interpolate_gamma(tab, [1, 1, 1, 1001])


def test_check_rejects_bad_entries():
    ns = equilibrated_nodes(4)
    with pytest.raises(SingularSystemError):
        _synthetic_table(ns, lambda q: np.array([[-1.0, 0.5], [0.0, -1.0]])).check()
    with pytest.raises(SingularSystemError):
        _synthetic_table(ns, lambda q: np.eye(2)).check()


@pytest.fixture(scope="module")
def small_tables():
    ext = build_exterior_mesh(30.0, 1)
    ns = equilibrated_nodes(4)
    return ext, precompute_table(ext, ns, "lift"), precompute_table(ext, ns, "direct")


def test_lift_equals_direct(small_tables):
    _, lift, direct = small_tables
    assert np.allclose(lift.entries, direct.entries, rtol=1e-10, atol=1e-14)


def test_table_symmetry_and_definiteness(small_tables):
    _, lift, _ = small_tables
    lift.check()


def test_roundtrip_bit_exact(small_tables, tmp_path):
    ext, tab, _ = small_tables
    p = tmp_path / table_filename(1, Variant(), 4)
    save_table(tab, p)
    back = load_table(p, expected_hash=ext.mesh_hash(), strict=True)
    assert np.array_equal(back.entries, tab.entries)
    assert np.array_equal(back.nodes.nodes, tab.nodes.nodes)
    assert back.variant == tab.variant and back.elem_type == 1
    save_table(back, tmp_path / "again.gtbl")
    assert p.read_bytes() == (tmp_path / "again.gtbl").read_bytes()


def test_rerun_is_idempotent(small_tables, tmp_path):
    ext, tab, _ = small_tables
    again = precompute_table(ext, tab.nodes, "lift")
    save_table(tab, tmp_path / "a")
    save_table(again, tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_file_errors(small_tables, tmp_path):
    ext, tab, _ = small_tables
    p = tmp_path / "t.gtbl"
    save_table(tab, p)
    raw = p.read_bytes()
    cases = {
        "magic": (b"XXXX" + raw[4:], TableFormatError),
        "version": (raw[:4] + struct.pack("<I", 99) + raw[8:], TableVersionError),
        "short": (raw[:-10], TableTruncatedError),
        "header": (raw[:6], TableTruncatedError),
        "tail": (raw + b"\0", TableFormatError),
    }
    for name, (data, exc) in cases.items():
        q = tmp_path / f"{name}.gtbl"
        q.write_bytes(data)
        with pytest.raises(exc):
            load_table(q)
    with pytest.warns(TableHashWarning):
        load_table(p, expected_hash=ext.mesh_hash() ^ 1)
    with pytest.raises(TableHashError):
        load_table(p, expected_hash=ext.mesh_hash() ^ 1, strict=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        load_table(p, expected_hash=ext.mesh_hash())


def test_full_tables_are_valid(interior_tables, top_neumann_tables):
    for tab in list(interior_tables.values()) + list(top_neumann_tables.values()):
        assert tab.nodes.N == 16
        tab.check()
