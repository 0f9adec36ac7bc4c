"""Equilibrated interpolation nodes and precomputed Gamma-hat tables."""
import itertools
import logging
import os
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .errors import (ConvergenceError, ParameterError, RangeError, SingularSystemError,
                     TableFormatError, TableHashError, TableHashWarning,
                     TableTruncatedError, TableVersionError)
from .exterior import SectorMaterials, Variant, gamma_hat, lift_gamma

log = logging.getLogger(__name__)

MAGIC = b"GTBL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIdd")


# ------------------------------------------------------------------- nodes

def chord_error(a, b, p):
    """Max error of the chord of ``x**p`` (p < 0, convex) on ``[a, b]``."""
    fa, fb = a ** p, b ** p
    s = (fb - fa) / (b - a)
    xs = (s / p) ** (1.0 / (p - 1.0))
    return fa + s * (xs - a) - xs ** p


@dataclass(frozen=True)
class NodeSet:
    nodes: np.ndarray
    exponent: float = -0.5

    @property
    def N(self):
        return len(self.nodes)

    @property
    def lb(self):
        return float(self.nodes[0])

    @property
    def ub(self):
        return float(self.nodes[-1])

    def interval_errors(self):
        return np.array([chord_error(a, b, self.exponent)
                         for a, b in zip(self.nodes[:-1], self.nodes[1:])])

    def refined(self, k=4):
        """The nodes plus ``k - 1`` equispaced points inside every interval."""
        pts = [np.linspace(a, b, k + 1)[:-1] for a, b in zip(self.nodes[:-1], self.nodes[1:])]
        return np.append(np.concatenate(pts), self.nodes[-1])


def equilibrated_nodes(N=16, lb=1.0, ub=1000.0, exponent=-0.5, rtol=1e-12, maxiter=200):
    """Nodes on ``[lb, ub]`` for which the piecewise-linear interpolant of
    ``x**exponent`` has the same maximum error on every interval.

    Marching from ``lb`` with a prescribed error level fixes every node; the
    level is then found by root finding so the last node lands on ``ub``.
    """
    if not isinstance(N, (int, np.integer)) or N < 3:
        raise ParameterError("need N >= 3 nodes")
    if not 0 < lb < ub:
        raise ParameterError("need 0 < lb < ub")
    if not exponent < 0:
        raise ParameterError("exponent must be negative")
    big = ub * 1e6
    p = exponent

    def next_node(a, eps):
        # small-interval estimate E ~ f''(a) d^2 / 8 seeds the bracket
        d = np.sqrt(8.0 * eps / (p * (p - 1.0) * a ** (p - 2.0)))
        lo, hi = a + 0.25 * d, a + 2.0 * d
        while chord_error(a, lo, p) > eps:
            lo = a + 0.5 * (lo - a)
        while chord_error(a, hi, p) < eps:
            if hi > big:
                return None
            hi = a + 2.0 * (hi - a)
        return brentq(lambda b: chord_error(a, b, p) - eps, lo, hi,
                      xtol=1e-14, rtol=1e-15)

    def march(eps):
        nodes = [lb]
        for _ in range(N - 1):
            b = next_node(nodes[-1], eps)
            if b is None:
                return None
            nodes.append(b)
        return np.array(nodes)

    def overshoot(log_eps):
        nodes = march(np.exp(log_eps))
        return 1e3 if nodes is None else np.log(nodes[-1] / ub)

    hi = np.log(chord_error(lb, ub, p))
    lo = hi - 4.0 * np.log(N) - 10.0
    try:
        log_eps, res = brentq(overshoot, lo, hi, xtol=1e-14, maxiter=maxiter,
                              full_output=True)
    except (ValueError, RuntimeError) as exc:
        raise ConvergenceError(f"node equilibration failed: {exc}") from exc
    if not res.converged:
        raise ConvergenceError(f"node equilibration did not converge after {res.iterations} "
                               "iterations")
    nodes = march(np.exp(log_eps))
    if abs(nodes[-1] / ub - 1.0) > 1e-9:
        raise ConvergenceError(f"last node {nodes[-1]} misses upper bound {ub}")
    nodes[0], nodes[-1] = lb, ub
    return NodeSet(nodes=nodes, exponent=float(exponent))


# ------------------------------------------------------------------- tables

@dataclass(eq=False)
class GammaTable:
    nodes: NodeSet
    elem_type: int
    variant: Variant
    entries: np.ndarray            # (N, N, N, N, 2, 2), lam_hat slowest
    R: float
    mesh_hash: int
    version: int = FORMAT_VERSION
    _flat: np.ndarray = field(default=None, repr=False)

    @property
    def code(self):
        return self.variant.code(self.elem_type)

    @property
    def flat(self):
        if self._flat is None:
            N = self.nodes.N
            self._flat = np.ascontiguousarray(self.entries.reshape(N, N, N, N, 4))
        return self._flat

    def check(self, sym_tol=1e-8, semidefinite=False):
        E = self.entries
        asym = np.abs(E - E.swapaxes(-1, -2)).max()
        if asym > sym_tol:
            raise SingularSystemError(f"table entry asymmetry {asym:.2e}")
        ev = np.linalg.eigvalsh(0.5 * (E + E.swapaxes(-1, -2)))
        bound = 1e-12 if semidefinite else 0.0
        if ev.max() >= bound:
            raise SingularSystemError(f"table entry not negative definite "
                                      f"(max eigenvalue {ev.max():.3e})")


def _sector_tuples(N):
    return list(itertools.product(range(N), repeat=3))


def precompute_table(ext, nodes, method="lift", threads=1, progress=None):
    """Tabulate Gamma-hat over all node 4-tuples ``(lam_hat, lam_S1..3)``.

    ``method='direct'`` factorizes every tuple.  ``method='lift'`` factorizes
    only at ``lam_hat = lb`` for each sector triple and obtains the other hat
    values from ``G(x) = G(y) (I - (x - y) G(y))^{-1}``, which is exact for
    the discrete problem because the hat values enter through a rank-2 term.
    """
    if method not in ("lift", "direct"):
        raise ParameterError(f"unknown method {method!r}")
    v = nodes.nodes
    N = len(v)
    entries = np.empty((N, N, N, N, 2, 2))
    triples = _sector_tuples(N)

    def work(t):
        i1, i2, i3 = t
        lam_s = (v[i1], v[i2], v[i3])
        out = np.empty((N, 2, 2))
        hats = [0] if method == "lift" else range(N)
        for ih in hats:
            mats = SectorMaterials(v[ih], lam_s)
            try:
                out[ih] = gamma_hat(ext, mats)
            except SingularSystemError as exc:
                raise SingularSystemError(f"solve failed for tuple "
                                          f"{(v[ih],) + lam_s}: {exc}") from exc
        if method == "lift":
            out[1:] = lift_gamma(out[0], v[1:, None, None], v[0])
        return t, out

    done = 0
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = pool.map(work, triples)
            for t, out in results:
                entries[:, t[0], t[1], t[2]] = out
                done += 1
                if progress:
                    progress(done, len(triples))
    else:
        for t in triples:
            _, out = work(t)
            entries[:, t[0], t[1], t[2]] = out
            done += 1
            if progress:
                progress(done, len(triples))
    entries = 0.5 * (entries + entries.swapaxes(-1, -2))
    table = GammaTable(nodes=nodes, elem_type=ext.elem_type, variant=ext.variant,
                       entries=entries, R=ext.R, mesh_hash=ext.mesh_hash())
    table.check(semidefinite=ext.variant.bc == "dirichlet")
    return table


def _check_range(table, q):
    lb, ub = table.nodes.lb, table.nodes.ub
    tol = 1e-12 * ub
    if np.any(q < lb - tol) or np.any(q > ub + tol):
        bad = q[(q < lb - tol) | (q > ub + tol)]
        raise RangeError(f"query value(s) {bad[:4]} outside [{lb}, {ub}]")
    return np.clip(q, lb, ub)


def interpolate_gamma(table, query):
    """Multilinear interpolation of the 2x2 entries at one 4-tuple."""
    q = _check_range(table, np.asarray(query, dtype=float).reshape(1, 4))
    return kernels.interp_gamma(table.flat, table.nodes.nodes, q)[0].reshape(2, 2)


def interpolate_gamma_batch(table, queries):
    q = _check_range(table, np.ascontiguousarray(queries, dtype=float).reshape(-1, 4))
    return kernels.interp_gamma(table.flat, table.nodes.nodes, q).reshape(-1, 2, 2)


# ------------------------------------------------------------------- files

def save_table(table, path):
    N = table.nodes.N
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, table.code, N, table.R,
                              table.nodes.exponent))
        fh.write(np.asarray(table.nodes.nodes, dtype="<f8").tobytes())
        fh.write(struct.pack("<Q", table.mesh_hash))
        fh.write(np.ascontiguousarray(table.flat, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_table(path, expected_hash=None, strict=False):
    """Read a table file; ``expected_hash`` (e.g. ``ext.mesh_hash()``) is
    compared with the stored mesh hash, mismatches warn or, if ``strict``,
    raise."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        if raw[:4] != MAGIC[:len(raw[:4])]:
            raise TableFormatError(f"{path}: not a Gamma table (bad magic)")
        raise TableTruncatedError(f"{path}: truncated header")
    magic, version, code, N, R, exponent = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TableFormatError(f"{path}: not a Gamma table (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise TableVersionError(f"{path}: format version {version}, "
                                f"expected {FORMAT_VERSION}")
    if not 2 <= N <= 1024:
        raise TableFormatError(f"{path}: implausible node count {N}")
    need = _HEADER.size + 8 * N + 8 + 8 * 4 * N ** 4
    if len(raw) < need:
        raise TableTruncatedError(f"{path}: {len(raw)} bytes, expected {need}")
    if len(raw) > need:
        raise TableFormatError(f"{path}: {len(raw) - need} trailing bytes")
    off = _HEADER.size
    nodes = np.frombuffer(raw, dtype="<f8", count=N, offset=off).copy()
    off += 8 * N
    (mesh_hash,) = struct.unpack_from("<Q", raw, off)
    off += 8
    data = np.frombuffer(raw, dtype="<f8", count=4 * N ** 4, offset=off)
    entries = data.reshape(N, N, N, N, 2, 2).astype(float)
    if expected_hash is not None and expected_hash != mesh_hash:
        msg = (f"{path}: table built on a different exterior mesh "
               f"(stored hash {mesh_hash:016x}, expected {expected_hash:016x})")
        if strict:
            raise TableHashError(msg)
        warnings.warn(msg, TableHashWarning, stacklevel=2)
    variant = Variant.from_code(code)
    return GammaTable(nodes=NodeSet(nodes=nodes, exponent=exponent),
                      elem_type=code % 10, variant=variant, entries=entries, R=R,
                      mesh_hash=mesh_hash, version=version)


def table_filename(elem_type, variant, N):
    return f"gamma_t{elem_type}_{variant}_N{N}.gtbl"


def load_or_build(cache_dir, elem_type, variant=None, N=16, R=30.0, build=True,
                  method="lift", threads=1, progress=None):
    """Load a cached table whose mesh hash matches the current exterior mesh,
    building and saving it when absent (or raising if ``build`` is false)."""
    from .errors import ConfigurationError
    from .exterior import build_exterior_mesh

    variant = variant or Variant()
    ext = build_exterior_mesh(R=R, elem_type=elem_type, variant=variant)
    path = os.path.join(cache_dir, table_filename(elem_type, variant, N))
    if os.path.exists(path):
        table = load_table(path, expected_hash=None if build else ext.mesh_hash(),
                           strict=not build)
        if table.mesh_hash == ext.mesh_hash() and table.nodes.N == N:
            return table
        log.info("%s is stale, rebuilding", path)
    if not build:
        raise ConfigurationError(
            f"missing table {path}; create it with `sepapprox precompute --type {elem_type} "
            f"--variant {variant} --N {N} --out {cache_dir}`")
    os.makedirs(cache_dir, exist_ok=True)
    table = precompute_table(ext, equilibrated_nodes(N), method=method, threads=threads,
                             progress=progress)
    save_table(table, path)
    return table
