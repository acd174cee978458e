"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time from the ``PLATOONLOC_BACKEND``
environment variable: ``numba`` (default when numba imports cleanly),
``numpy`` to force the fallback, or ``auto``. Both paths produce the same
values to floating-point roundoff; ``benchmarks/bench_kernels.py`` compares
their speed.
"""

import os

import numpy as np

_PI = np.pi

_requested = os.environ.get("PLATOONLOC_BACKEND", "auto").lower()
if _requested not in ("auto", "numba", "numpy"):
    raise ValueError(f"PLATOONLOC_BACKEND must be auto|numba|numpy, got {_requested!r}")

_HAVE_NUMBA = False
if _requested in ("auto", "numba"):
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:
        if _requested == "numba":
            raise


def backend_name() -> str:
    """Name of the active kernel backend."""
    return "numba" if _HAVE_NUMBA else "numpy"


def _ula_phase_matrix_np(xi, K):
    k = np.arange(K, dtype=np.float64)
    return np.exp(-1j * _PI * np.outer(k, np.asarray(xi, dtype=np.float64)))


def _upa_phase_matrix_np(xi_h, xi_v, n_h, n_v):
    ah = _ula_phase_matrix_np(xi_h, n_h)
    av = _ula_phase_matrix_np(xi_v, n_v)
    # column-wise Kronecker product: out[i*n_v + j, c] = ah[i, c] * av[j, c]
    return (ah[:, None, :] * av[None, :, :]).reshape(n_h * n_v, -1)


def _expected_quad_energy_np(A, Sigma):
    return float(np.sum((A @ Sigma) * A.conj()).real)


if _HAVE_NUMBA:
    # serial kernels: the call sites pass small batches where thread fan-out
    # costs more than the loop itself

    @njit(cache=True)
    def _ula_phase_matrix_nb(xi, K):  # pragma: no cover - measured via wrapper
        n = xi.shape[0]
        out = np.empty((K, n), dtype=np.complex128)
        for c in range(n):
            step = np.exp(-1j * _PI * xi[c])
            val = 1.0 + 0.0j
            for k in range(K):
                out[k, c] = val
                val *= step
        return out

    @njit(cache=True)
    def _upa_phase_matrix_nb(xi_h, xi_v, n_h, n_v):  # pragma: no cover
        n = xi_h.shape[0]
        out = np.empty((n_h * n_v, n), dtype=np.complex128)
        for c in range(n):
            step_h = np.exp(-1j * _PI * xi_h[c])
            step_v = np.exp(-1j * _PI * xi_v[c])
            ph = 1.0 + 0.0j
            for i in range(n_h):
                pv = ph
                for j in range(n_v):
                    out[i * n_v + j, c] = pv
                    pv *= step_v
                ph *= step_h
        return out

    @njit(cache=True)
    def _expected_quad_energy_nb(A, Sigma):  # pragma: no cover
        m, d = A.shape
        acc = 0.0
        for i in range(m):
            for k in range(d):
                s = 0.0 + 0.0j
                for j in range(d):
                    s += A[i, j] * Sigma[j, k]
                acc += (s * np.conj(A[i, k])).real
        return acc


def ula_phase_matrix(xi, K: int) -> np.ndarray:
    """Stacked linear-array responses e^{-j pi k xi} for spatial frequencies xi.

    Returns a (K, len(xi)) complex matrix; column c is the array response at
    directional cosine xi[c].
    """
    xi = np.ascontiguousarray(np.atleast_1d(xi), dtype=np.float64)
    if _HAVE_NUMBA:
        return _ula_phase_matrix_nb(xi, K)
    return _ula_phase_matrix_np(xi, K)


def upa_phase_matrix(xi_h, xi_v, n_h: int, n_v: int) -> np.ndarray:
    """Planar-array responses: Kronecker product of the two axis responses.

    Element (i, j) of the array maps to row i*n_v + j.
    """
    xi_h = np.ascontiguousarray(np.atleast_1d(xi_h), dtype=np.float64)
    xi_v = np.ascontiguousarray(np.atleast_1d(xi_v), dtype=np.float64)
    if xi_h.shape != xi_v.shape:
        raise ValueError("xi_h and xi_v must have the same length")
    if _HAVE_NUMBA:
        return _upa_phase_matrix_nb(xi_h, xi_v, n_h, n_v)
    return _upa_phase_matrix_np(xi_h, xi_v, n_h, n_v)


def expected_quad_energy(A: np.ndarray, Sigma: np.ndarray) -> float:
    """Re tr(A Sigma A^H) for a complex operator A and covariance Sigma.

    Always evaluated through BLAS; the fused numba variant exists for the
    benchmark comparison, where BLAS wins at the sizes this package hits.
    """
    A = np.ascontiguousarray(A, dtype=np.complex128)
    Sigma = np.ascontiguousarray(Sigma, dtype=np.complex128)
    return _expected_quad_energy_np(A, Sigma)
