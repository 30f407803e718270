"""Dense real matrix kernel: pivoted-LU solves, spectral quantities, text I/O."""

from __future__ import annotations

import os
import tempfile
import warnings
from typing import NamedTuple

import numpy as np
from scipy import linalg as la

from .exceptions import ContractViolation, SingularOperator, ZeroGradient

# pivot magnitude below this fraction of max|entry| counts as singular
SINGULAR_PIVOT_RTOL = 1e-14


class SingularTriplet(NamedTuple):
    sigma: float
    left: np.ndarray
    right: np.ndarray


def as_operator(a, name="operator", square=False):
    """Validate ``a`` as a finite 2-D float array and return a read-only copy."""
    arr = np.array(a, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise ContractViolation(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains non-finite entries")
    if square and arr.shape[0] != arr.shape[1]:
        raise ContractViolation(f"{name} must be square, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def matmul(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractViolation(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


class LUFactor:
    """Pivoted LU factorization of a square matrix, gated for singularity.

    Holds one factorization so that ``A x = b`` and ``A^T x = b`` solves can
    be repeated for any number of right-hand sides.
    """

    def __init__(self, a):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ContractViolation(f"LU needs a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise SingularOperator("matrix contains non-finite entries")
        scale = np.max(np.abs(a)) if a.size else 0.0
        if scale == 0.0:
            raise SingularOperator("zero matrix")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", la.LinAlgWarning)
            self._lu, self._piv = la.lu_factor(a, check_finite=False)
        pivots = np.abs(np.diag(self._lu))
        smallest = pivots.min()
        if smallest < SINGULAR_PIVOT_RTOL * scale:
            raise SingularOperator(
                f"pivot {smallest:.3e} below {SINGULAR_PIVOT_RTOL:g} * max|entry| ({scale:.3e})"
            )
        self.n = a.shape[0]

    def solve(self, rhs, trans=False):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.n:
            raise ContractViolation(f"rhs has {rhs.shape[0]} rows, operator has {self.n}")
        return la.lu_solve((self._lu, self._piv), rhs, trans=1 if trans else 0, check_finite=False)

    def inverse(self):
        return self.solve(np.eye(self.n))


def solve(a, rhs):
    """Solve ``a @ X = rhs`` with a pivoted LU factorization.

    Raises
    ------
    SingularOperator
        If a pivot falls below ``1e-14 * max|a_ij|``.
    """
    a = np.asarray(a, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractViolation(f"solve needs a square matrix, got shape {a.shape}")
    if rhs.shape[0] != a.shape[0]:
        raise ContractViolation(f"rhs has {rhs.shape[0]} rows, matrix has {a.shape[0]}")
    return LUFactor(a).solve(rhs)


def singular_values(a):
    return la.svd(np.asarray(a, dtype=float), compute_uv=False, check_finite=False)


def condition_number(a):
    """Ratio of largest to smallest singular value of a square matrix."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractViolation(f"condition number needs a square matrix, got shape {a.shape}")
    s = singular_values(a)
    if s[-1] == 0.0:
        raise SingularOperator("smallest singular value is zero")
    return max(1.0, s[0] / s[-1])


def inv_frobenius_sq(a):
    """Squared Frobenius norm of ``a^{-1}``, computed by solving against I."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractViolation(f"inverse needs a square matrix, got shape {a.shape}")
    inv = LUFactor(a).inverse()
    return float(np.sum(inv * inv))


def nuclear_norm(a):
    a = np.asarray(a, dtype=float)
    if not np.any(a):
        return 0.0
    return float(np.sum(singular_values(a)))


def frobenius_norm(a):
    return float(np.linalg.norm(np.asarray(a, dtype=float)))


def _full_svd_triplet(a):
    u, s, vt = la.svd(a, full_matrices=False, check_finite=False)
    return SingularTriplet(float(s[0]), u[:, 0].copy(), vt[0].copy())


def top_singular_triplet(a, method="full_svd", tol=1e-12, max_iter=1000):
    """Leading singular value and unit singular vectors of ``a``.

    ``power_iteration`` iterates on ``a^T a`` from the normalized all-ones
    vector and falls back to a full SVD when it fails to reach ``tol``.

    Raises
    ------
    ZeroGradient
        If ``a`` is identically zero.
    """
    a = np.asarray(a, dtype=float)
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    if not np.any(a):
        raise ZeroGradient("top singular triplet of a zero matrix")
    if method == "full_svd":
        return _full_svd_triplet(a)
    if method != "power_iteration":
        raise ContractViolation(f"unknown method {method!r}")

    v = np.ones(a.shape[1]) / np.sqrt(a.shape[1])
    for _ in range(max_iter):
        av = a @ v
        sigma = np.linalg.norm(av)
        if sigma == 0.0:
            # start vector in the null space
            break
        u = av / sigma
        w = a.T @ u
        if np.linalg.norm(w - sigma * v) <= tol * sigma:
            return SingularTriplet(float(sigma), u, v)
        v = w / np.linalg.norm(w)
    return _full_svd_triplet(a)


def numerical_rank(a, rel_tol=1e-10):
    if not 0.0 < rel_tol < 1.0:
        raise ContractViolation("rel_tol must lie in (0, 1)")
    a = np.asarray(a, dtype=float)
    if not np.any(a):
        return 0
    s = singular_values(a)
    return int(np.sum(s > rel_tol * s[0]))


def frobenius_inner(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ContractViolation(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sum(a * b))


# -- text format: "rows cols" header then one row per line, 17 significant digits


def format_matrix(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    lines.extend(" ".join(f"{x:.17g}" for x in row) for row in a)
    return "\n".join(lines) + "\n"


def parse_matrix(text, source="<string>"):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ContractViolation(f"{source}: empty matrix file")
    try:
        rows, cols = (int(x) for x in lines[0].split())
    except ValueError:
        raise ContractViolation(f"{source}: bad header {lines[0]!r}") from None
    if len(lines) - 1 != rows:
        raise ContractViolation(f"{source}: header says {rows} rows, found {len(lines) - 1}")
    out = np.empty((rows, cols))
    for i, line in enumerate(lines[1:]):
        vals = line.split()
        if len(vals) != cols:
            raise ContractViolation(f"{source}: row {i} has {len(vals)} values, expected {cols}")
        out[i] = [float(v) for v in vals]
    return out


def atomic_write_text(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_matrix(path, a):
    atomic_write_text(path, format_matrix(a))


def load_matrix(path):
    with open(path) as fh:
        return parse_matrix(fh.read(), source=os.fspath(path))
