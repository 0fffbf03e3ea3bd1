"""Exponential tail rates of traveling fronts.

Rates come from real roots of the characteristic determinant (constant
media) or from a principal-eigenvalue dispersion relation (periodic
media, long-range kernels); fitted rates on computed profiles close the
loop.  Rates size the truncation domain of the boundary-value solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .mfde import MFDEOperator, characteristic_matrix
from .model import InfiniteRangeModel, LatticeModel

__all__ = [
    "TailReport",
    "NoRealRootError",
    "ReducibleMatrixError",
    "TailFitError",
    "decay_rates_constant",
    "principal_eigenpair",
    "folded_weight_matrix",
    "dispersion_value",
    "periodic_decay_rate",
    "cutoff_principal_value",
    "fit_tail",
    "tail_report_constant",
]


class NoRealRootError(RuntimeError):
    """No real characteristic root of the required sign at the given end."""


class ReducibleMatrixError(ValueError):
    def __init__(self, msg, blocks=None):
        super().__init__(msg)
        self.blocks = blocks


class TailFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class TailReport:
    lambda0: float            # rate at -inf, positive
    lambda1: float            # rate at +inf, negative
    eigvec0: np.ndarray
    eigvec1: np.ndarray
    method: str

    def to_json(self) -> dict:
        return {"lambda0": self.lambda0, "lambda1": self.lambda1,
                "method": self.method,
                "eigvec0": list(map(float, self.eigvec0)),
                "eigvec1": list(map(float, self.eigvec1))}


def _real_det(op: MFDEOperator, end: int, lam: float) -> float:
    return float(np.real(np.linalg.det(characteristic_matrix(op, end, complex(lam)))))


def decay_rates_constant(op: MFDEOperator, end: int, lam_max: float = 20.0,
                         grid_points: int = 8000, tol: float = 1e-12) -> list[float]:
    """Real roots of det Delta(lambda) = 0 at one end, sorted ascending.

    The caller picks the smallest positive root at -inf or the largest
    negative root at +inf as the front's decay rate.
    """
    if op.c == 0.0:
        raise ValueError("tail roots need a nonzero speed")
    lams = np.linspace(-lam_max, lam_max, grid_points)
    vals = np.array([_real_det(op, end, la) for la in lams])
    roots = []
    sign_change = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    for i in sign_change:
        lo, hi = lams[i], lams[i + 1]
        flo = vals[i]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = _real_det(op, end, mid)
            if fm == 0.0 or hi - lo < tol:
                break
            if (flo < 0) == (fm < 0):
                lo, flo = mid, fm
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    exact_zeros = lams[vals == 0.0]
    roots.extend(float(z) for z in exact_zeros if abs(z) > tol)
    return sorted(roots)


def principal_eigenpair(matrix: np.ndarray, tol: float = 1e-12,
                        max_iter: int = 100_000):
    """Rightmost eigenvalue with positive eigenvector of an irreducible
    matrix with nonnegative off-diagonal entries (shifted power iteration)."""
    B = np.asarray(matrix, dtype=float)
    n = B.shape[0]
    off = B - np.diag(np.diag(B))
    if np.any(off < 0.0):
        raise ValueError("off-diagonal entries must be nonnegative")
    if n > 1:
        ncomp, labels = connected_components(sp.csr_matrix(off != 0.0),
                                             directed=True, connection="strong")
        if ncomp > 1:
            raise ReducibleMatrixError(
                f"matrix is reducible into {ncomp} strongly connected blocks "
                f"(labels {labels.tolist()})", blocks=labels)
    sigma = float(np.max(np.abs(np.diag(B)))) + 1.0
    S = B + sigma * np.eye(n)
    v = np.ones(n)
    lam_old = math.inf
    for _ in range(max_iter):
        w = S @ v
        lam = float(v @ w) / float(v @ v)
        v = w / np.max(np.abs(w))
        if abs(lam - lam_old) <= tol * max(1.0, abs(lam)):
            break
        lam_old = lam
    v = v / np.max(np.abs(v))
    return lam - sigma, v


def folded_weight_matrix(model: LatticeModel, mu: float) -> np.ndarray:
    """N x N matrix with entries sum_k a_{n,k} e^{k mu} folded to the period."""
    N = model.period
    M = np.zeros((N, N))
    for (n, k), a in model.couplings.items():
        M[n, (n + k) % N] += a * math.exp(k * mu)
    return M


def dispersion_value(model: LatticeModel, gammas: np.ndarray, c: float,
                     mu: float) -> float:
    """c mu - lambda_principal(M(mu) - diag(gamma)); zero at a tail rate."""
    Q = folded_weight_matrix(model, mu) - np.diag(gammas)
    lam, _v = principal_eigenpair(Q)
    return c * mu - lam


def periodic_decay_rate(model: LatticeModel, end: int, c: float,
                        gammas=None, tol: float = 1e-12):
    """Tail rate mu and positive per-site weights for periodic media.

    Solves c mu = lambda_principal(M(mu) - diag(gamma)) by bisection,
    with mu > 0 at the -inf end and mu < 0 at +inf.  gamma defaults to
    the cubic slopes at the equilibrium of that end (0 or 1).
    """
    if c == 0.0:
        raise ValueError("dispersion relation needs a nonzero speed")
    if gammas is None:
        u = 0.0 if end < 0 else 1.0
        gammas = np.array([cub.deriv(u) for cub in model.cubics])

    def g(mu):
        return dispersion_value(model, gammas, c, mu)

    lo, hi = (1e-12, 10.0) if end < 0 else (-10.0, -1e-12)
    for _ in range(4):
        a, b = (lo, hi) if end < 0 else (hi, lo)
        if g(a) * g(b) < 0:
            break
        if end < 0:
            hi *= 2.0
        else:
            lo *= 2.0
    else:
        raise NoRealRootError(
            f"no bracketing interval for the tail rate at end {end:+d}; "
            "the front may not decay exponentially there")
    ga = g(a)
    for _ in range(200):
        mid = 0.5 * (a + b)
        gm = g(mid)
        if gm == 0.0 or abs(b - a) < tol * max(1.0, abs(mid)):
            break
        if (ga < 0) == (gm < 0):
            a, ga = mid, gm
        else:
            b = mid
    mu = 0.5 * (a + b)
    _lam, v = principal_eigenpair(folded_weight_matrix(model, mu) - np.diag(gammas))
    return mu, v


def cutoff_principal_value(model: InfiniteRangeModel, mu: float, k0: int,
                           end: int = -1) -> float:
    """Principal value lambda(k0) of the weighted coupling operator
    truncated at cutoff k0, at fixed tail exponent mu."""
    full = model.full_model(eps=1.0)
    truncated = {key: v for key, v in full.couplings.items() if abs(key[1]) <= k0}
    for n in range(full.period):
        truncated[(n, 0)] = -sum(v for (m, k), v in truncated.items()
                                 if m == n and k != 0)
    sub = LatticeModel(full.period, truncated, full.cubics)
    u = 0.0 if end < 0 else 1.0
    gammas = np.array([cub.deriv(u) for cub in sub.cubics])
    lam, _v = principal_eigenpair(folded_weight_matrix(sub, mu) - np.diag(gammas))
    return lam


def fit_tail(xi: np.ndarray, profile: np.ndarray, end: int,
             window: float = 0.5, component: int = 0,
             floor: float = 1e-12, ceiling: float = 1e-2):
    """Log-linear tail rate of a front profile at one end.

    Fits log|phi| (at -inf) or log|1 - phi| (at +inf) against xi over the
    end's window fraction, restricted to amplitudes in (floor, ceiling).
    Returns (rate, r_squared, points_used).
    """
    values = np.asarray(profile, dtype=float)
    if values.ndim > 1:
        values = values[:, component]
    dev = np.abs(values) if end < 0 else np.abs(1.0 - values)
    n = len(xi)
    cut = int(round(n * window))
    mask = np.zeros(n, dtype=bool)
    if end < 0:
        mask[:cut] = True
    else:
        mask[n - cut:] = True
    mask &= (dev > floor) & (dev < ceiling)
    if int(mask.sum()) < 8:
        raise TailFitError(
            f"only {int(mask.sum())} usable tail points at end {end:+d}; "
            "widen the window or enlarge the domain")
    x = np.asarray(xi)[mask]
    y = np.log(dev[mask])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2, int(mask.sum())


def tail_report_constant(op: MFDEOperator, lam_max: float = 20.0) -> TailReport:
    """Smallest positive rate at -inf and largest negative rate at +inf."""
    roots_m = [r for r in decay_rates_constant(op, -1, lam_max) if r > 1e-12]
    roots_p = [r for r in decay_rates_constant(op, +1, lam_max) if r < -1e-12]
    if not roots_m:
        raise NoRealRootError("no positive real characteristic root at -inf")
    if not roots_p:
        raise NoRealRootError("no negative real characteristic root at +inf")
    n = op.dimension
    return TailReport(lambda0=min(roots_m), lambda1=max(roots_p),
                      eigvec0=np.ones(n), eigvec1=np.ones(n),
                      method="characteristic_root")
