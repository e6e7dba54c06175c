"""Dense small-matrix helpers, seeded random streams, special functions.

Everything downstream (state-space simulation, filters, calibration) works
with plain ``numpy`` arrays; this module pins down the conventions: row
vectors are 1-d arrays, matrices are 2-d, covariances are symmetric within
``PSD_TOL`` relative tolerance and may be rank deficient.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
from scipy.special import gammaincinv

from .errors import DomainError, NonConformal, NotSPD

# Relative tolerance for symmetry / eigenvalue checks on covariance matrices;
# the filter recursions accumulate roundoff of roughly this size.
PSD_TOL = 1e-10


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Coerce to a 1-d float array, optionally enforcing its length."""
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise NonConformal(f"expected a vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise NonConformal(f"expected a vector of dim {dim}, got {v.shape[0]}")
    return v


def as_matrix(x, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce to a 2-d float array, optionally enforcing its shape."""
    m = np.atleast_2d(np.asarray(x, dtype=float))
    if m.ndim != 2:
        raise NonConformal(f"expected a matrix, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise NonConformal(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise NonConformal(f"expected {cols} cols, got {m.shape[1]}")
    return m


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def is_symmetric_psd(a: np.ndarray, rtol: float = PSD_TOL) -> bool:
    """Check symmetry (relative ``rtol``) and eigenvalues >= -rtol * trace."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > rtol * scale:
        return False
    w = np.linalg.eigvalsh(symmetrize(a))
    floor = -rtol * max(np.trace(a), scale)
    return bool(w.min() >= floor)


def is_symmetric_pd(a: np.ndarray, rtol: float = PSD_TOL) -> bool:
    a = np.asarray(a, dtype=float)
    if not is_symmetric_psd(a, rtol):
        return False
    try:
        np.linalg.cholesky(symmetrize(a))
    except np.linalg.LinAlgError:
        return False
    return True


def solve_spd(a, b) -> np.ndarray:
    """Solve A X = B for symmetric positive definite A via Cholesky."""
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise NonConformal(f"A must be square, got {a.shape}")
    b_arr = np.asarray(b, dtype=float)
    vector_rhs = b_arr.ndim == 1
    b2 = as_matrix(b_arr) if not vector_rhs else b_arr.reshape(-1, 1)
    if b2.shape[0] != a.shape[0]:
        raise NonConformal(f"B has {b2.shape[0]} rows, A is {a.shape[0]}x{a.shape[0]}")
    if a.shape[0] == 1:
        if a[0, 0] <= 0.0:
            raise NotSPD(f"1x1 pivot {a[0, 0]} <= 0")
        x = b2 / a[0, 0]
    else:
        try:
            cf = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
        except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
            raise NotSPD(str(exc)) from exc
        x = scipy.linalg.cho_solve(cf, b2, check_finite=False)
    return x[:, 0] if vector_rhs else x


def psd_sqrt(cov: np.ndarray, rtol: float = PSD_TOL) -> np.ndarray:
    """A (possibly rank-deficient) square root L with L L^T = cov.

    Uses a symmetric eigendecomposition; eigenvalues within the tolerance
    band below zero are clamped, anything lower raises :class:`NotSPD`.
    """
    cov = as_matrix(cov)
    if cov.shape[0] != cov.shape[1]:
        raise NonConformal(f"covariance must be square, got {cov.shape}")
    if cov.shape[0] == 1:
        v = cov[0, 0]
        if v < -rtol * max(abs(v), 1.0):
            raise NotSPD(f"negative 1x1 covariance {v}")
        return np.array([[np.sqrt(max(v, 0.0))]])
    w, u = np.linalg.eigh(symmetrize(cov))
    floor = -rtol * max(np.trace(cov), 1.0)
    if w.min() < floor:
        raise NotSPD(f"eigenvalue {w.min()} below tolerance {floor}")
    return u * np.sqrt(np.clip(w, 0.0, None))


class RngStream:
    """Reproducible random stream addressed by (seed, stream-id, path).

    Identical addresses replay identical draw sequences; distinct addresses
    give independent-quality streams (PCG64 seeded through ``SeedSequence``
    spawn keys). Use :meth:`child` to derive substreams so that consumers
    cannot perturb each other's draws.
    """

    __slots__ = ("seed", "stream_id", "path", "_gen")

    def __init__(self, seed: int, stream_id: int = 0, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.path = tuple(int(i) for i in path)
        self._gen: np.random.Generator | None = None

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(
                entropy=self.seed, spawn_key=(self.stream_id, *self.path)
            )
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + ids)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"


def gaussian_sample(mean, cov, stream: RngStream) -> np.ndarray:
    """One draw of N(mean, cov); rank-deficient cov allowed (cov = 0 is exact)."""
    mean = as_vector(mean)
    cov = as_matrix(cov)
    if cov.shape != (mean.shape[0], mean.shape[0]):
        raise NonConformal(f"cov shape {cov.shape} does not match mean dim {mean.shape[0]}")
    z = stream.gen.standard_normal(mean.shape[0])
    return mean + psd_sqrt(cov) @ z


def chi_square_quantile(dof: int, p: float) -> float:
    """Quantile of the chi-square law by inverting the regularized incomplete gamma."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must be in (0, 1), got {p}")
    if dof < 1:
        raise DomainError(f"dof must be >= 1, got {dof}")
    return float(2.0 * gammaincinv(dof / 2.0, p))
