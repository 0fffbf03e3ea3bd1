"""Lattice models with cubic bistable reactions and periodic couplings.

Site dynamics follow

    du_n/dt = sum_k a_{n,k} u_{n+k} - f_n(u_n),

with coefficients a_{n,k} periodic in n and f_n a cubic with stable zeros
0 and 1.  The module also carries the 2-site and 4-site changes of
variables that turn connections between period-2 / period-4 equilibria
into vector systems connecting the constant states 0 and 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CubicNonlinearity",
    "LatticeModel",
    "PeriodicState",
    "TwoSiteSystem",
    "FourSiteSystem",
    "InfiniteRangeModel",
    "DecoupledLatticeError",
    "TransformError",
    "build_nagumo",
    "find_two_periodic_equilibria",
    "two_site_transform",
    "find_four_periodic_equilibria",
    "four_site_transform",
    "build_infinite_range",
]


class DecoupledLatticeError(ValueError):
    """Raised when a formula divides by a vanishing coupling constant."""


class TransformError(ValueError):
    """Raised when a change of variables is not well defined."""


@dataclass(frozen=True)
class CubicNonlinearity:
    """f(u) = k * u * (u - a) * (u - 1); roots 0 and 1 by construction."""

    k: float
    a: float

    def __call__(self, u):
        return self.k * u * (u - self.a) * (u - 1.0)

    def deriv(self, u):
        return self.k * (3.0 * u * u - 2.0 * (1.0 + self.a) * u + self.a)

    def second_deriv(self, u):
        return self.k * (6.0 * u - 2.0 * (1.0 + self.a))


@dataclass(frozen=True)
class LatticeModel:
    """Periodic-media lattice model.

    couplings maps (n, k) -> a_{n,k} with n in 0..period-1 and finite
    offset support; absent entries are zero.  cubics has one entry per
    site in the period.
    """

    period: int
    couplings: dict[tuple[int, int], float]
    cubics: tuple[CubicNonlinearity, ...]
    metadata: str = ""

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("period must be a positive integer")
        if len(self.cubics) != self.period:
            raise ValueError("need one cubic nonlinearity per site in the period")
        for (n, _k) in self.couplings:
            if not 0 <= n < self.period:
                raise ValueError(f"site index {n} outside 0..{self.period - 1}")

    @property
    def k_max(self) -> int:
        return max((abs(k) for (_n, k) in self.couplings), default=0)

    def coupling(self, n: int, k: int) -> float:
        return self.couplings.get((n % self.period, k), 0.0)

    def coupling_row(self, n: int) -> dict[int, float]:
        n = n % self.period
        return {k: v for (m, k), v in self.couplings.items() if m == n}

    def apply_coupling(self, values: np.ndarray) -> np.ndarray:
        """Apply sum_k a_{n,k} u_{n+k} to a periodic per-site vector."""
        values = np.asarray(values, dtype=float)
        p = len(values)
        out = np.zeros(p)
        for (n, k), a in self.couplings.items():
            for m in range(n, p, self.period):
                out[m] += a * values[(m + k) % p]
        return out

    def equilibrium_defect(self, values: np.ndarray) -> float:
        """Max-norm defect of a periodic state (period = len(values))."""
        values = np.asarray(values, dtype=float)
        f = np.array([self.cubics[n % self.period](values[n]) for n in range(len(values))])
        return float(np.max(np.abs(self.apply_coupling(values) - f)))

    def to_json(self) -> dict:
        return {
            "period": self.period,
            "couplings": sorted([[n, k, v] for (n, k), v in self.couplings.items()]),
            "cubics": [{"k": c.k, "a": c.a} for c in self.cubics],
            "metadata": self.metadata,
        }

    @staticmethod
    def from_json(data: dict) -> "LatticeModel":
        return LatticeModel(
            period=int(data["period"]),
            couplings={(int(n), int(k)): float(v) for n, k, v in data["couplings"]},
            cubics=tuple(CubicNonlinearity(float(c["k"]), float(c["a"])) for c in data["cubics"]),
            metadata=data.get("metadata", ""),
        )


@dataclass(frozen=True)
class PeriodicState:
    period: int
    values: tuple[float, ...]
    residual: float

    def __post_init__(self):
        if len(self.values) != self.period:
            raise ValueError("values length must equal period")

    def as_array(self) -> np.ndarray:
        return np.array(self.values)


@dataclass(frozen=True)
class TwoSiteSystem:
    d_e: float
    d_o: float
    d2: float
    f_e: CubicNonlinearity
    f_o: CubicNonlinearity
    minus: PeriodicState
    plus: PeriodicState
    a_e_formula_discrepancy: bool


@dataclass(frozen=True)
class FourSiteSystem:
    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    A1_ref: np.ndarray
    A2_ref: np.ndarray
    A3_ref: np.ndarray
    B2: np.ndarray
    cubics: tuple[CubicNonlinearity, ...]
    minus: PeriodicState
    plus: PeriodicState


@dataclass(frozen=True)
class InfiniteRangeModel:
    base: LatticeModel
    tail: dict[tuple[int, int], float]
    tail_bound: float
    k0: int
    k_num: int

    def summability(self, lam: float) -> float:
        """sum_k |a_{n,k}| e^{|k| lam} on the numerical support, worst site,
        plus the declared remainder bound scaled by the largest stored weight."""
        per_site = np.zeros(self.base.period)
        for (n, k), a in list(self.base.couplings.items()) + list(self.tail.items()):
            per_site[n] += abs(a) * math.exp(abs(k) * lam)
        return float(np.max(per_site)) + self.tail_bound * math.exp(self.k_num * lam)

    def full_model(self, eps: float = 1.0) -> LatticeModel:
        """Base model plus eps times the tail (in difference form)."""
        couplings = dict(self.base.couplings)
        for (n, k), a in self.tail.items():
            couplings[(n, k)] = couplings.get((n, k), 0.0) + eps * a
            couplings[(n, 0)] = couplings.get((n, 0), 0.0) - eps * a
        return LatticeModel(self.base.period, couplings, self.base.cubics,
                            metadata=self.base.metadata + f" +tail(eps={eps})")


def build_nagumo(d1: float, d2: float, a: float) -> LatticeModel:
    """Scalar lattice with first/second neighbor diffusion and cubic f_a."""
    if not 0.0 < a < 1.0:
        raise ValueError(f"middle root a={a} must lie in (0, 1)")
    couplings = {
        (0, -2): d2,
        (0, -1): d1,
        (0, 0): -2.0 * d1 - 2.0 * d2,
        (0, 1): d1,
        (0, 2): d2,
    }
    return LatticeModel(1, couplings, (CubicNonlinearity(1.0, a),),
                        metadata=f"nagumo(d1={d1}, d2={d2}, a={a})")


def _bisect(g, lo: float, hi: float, tol: float = 1e-15) -> float:
    glo = g(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0 or hi - lo < tol * max(1.0, abs(mid)):
            return mid
        if (glo < 0) == (gm < 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _dedup_sorted(points, key, tol):
    out = []
    for p in sorted(points, key=key):
        if not out or abs(key(p) - key(out[-1])) > tol:
            out.append(p)
    return out


def find_two_periodic_equilibria(d1: float, a: float,
                                 scan: tuple[float, float] = (-2.0, 3.0),
                                 grid_count: int = 10_000) -> list[PeriodicState]:
    """Period-2 equilibria (x, y) with y on the branch y = x + f_a(x)/(2 d1).

    Scans g(x) = f_a(x) + f_a(x + f_a(x)/(2 d1)) for sign changes and
    bisects.  The homogeneous states (0,0), (a,a), (1,1) are always
    included.
    """
    if d1 == 0.0:
        raise DecoupledLatticeError(
            "d1 = 0 decouples the sublattices; the period-2 branch formula "
            "y = x + f(x)/(2 d1) is undefined — treat each sublattice separately")
    f = CubicNonlinearity(1.0, a)

    def branch_y(x):
        return x + f(x) / (2.0 * d1)

    def g(x):
        return f(x) + f(branch_y(x))

    xs = np.linspace(scan[0], scan[1], grid_count)
    gs = g(xs)
    roots = [0.0, a, 1.0]
    sign_change = np.flatnonzero(np.sign(gs[:-1]) * np.sign(gs[1:]) < 0)
    for i in sign_change:
        x = _bisect(g, xs[i], xs[i + 1])
        if abs(g(x)) <= 1e-12:
            roots.append(x)
    roots = _dedup_sorted(roots, key=lambda x: x, tol=1e-9)

    states = []
    for x in roots:
        y = branch_y(x)
        # even-site defect is zero by the branch formula; the odd one is |g|
        residual = max(abs(2.0 * d1 * (y - x) - f(x)), abs(2.0 * d1 * (x - y) - f(y)))
        states.append(PeriodicState(2, (float(x), float(y)), float(residual)))
    return states


def _match_cubic(samples_v: np.ndarray, samples_f: np.ndarray,
                 tol: float = 1e-12) -> CubicNonlinearity:
    """Fit f(v) = k v (v - a)(v - 1) through exact cubic samples."""
    coeffs = np.polynomial.polynomial.polyfit(samples_v, samples_f, 3)
    c0, c1, c2, c3 = coeffs
    scale = max(1.0, float(np.max(np.abs(coeffs))))
    if abs(c0) > tol * scale:
        raise TransformError(f"transformed nonlinearity has f(0) = {c0:.3e} != 0")
    if abs(c3 + c2 + c1 + c0) > tol * scale:
        raise TransformError("transformed nonlinearity does not vanish at 1")
    k = float(c3)
    if k == 0.0:
        raise TransformError("transformed nonlinearity degenerated to sub-cubic")
    return CubicNonlinearity(k, float(c1 / c3))


def two_site_transform(d1: float, d2: float, a: float,
                       minus: PeriodicState, plus: PeriodicState,
                       equilibrium_tol: float = 1e-9) -> TwoSiteSystem:
    """Affine change of variables sending (minus, plus) to (0, 1) componentwise.

    The transformed nonlinearities come from direct substitution and cubic
    coefficient matching; the closed-form expression for the middle root
    is evaluated separately and a discrepancy flag is raised on mismatch.
    """
    if minus.period != 2 or plus.period != 2:
        raise TransformError("two_site_transform needs period-2 states")
    for st in (minus, plus):
        if st.residual > equilibrium_tol:
            raise TransformError(
                f"input state {st.values} has equilibrium defect {st.residual:.3e}")
    f = CubicNonlinearity(1.0, a)
    xm, ym = minus.values
    xp, yp = plus.values
    dx, dy = xp - xm, yp - ym
    if dx == 0.0 or dy == 0.0:
        raise TransformError("component differences must be nonzero")
    d_e = d1 * dy / dx
    d_o = d1 * dx / dy

    def f_e_raw(v):
        return (f(xm + dx * v) - f(xm)) / dx - 2.0 * (d_e - d1) * v

    def f_o_raw(w):
        return (f(ym + dy * w) - f(ym)) / dy - 2.0 * (d_o - d1) * w

    v = np.array([0.0, 1.0, 2.0, -1.0])
    f_e = _match_cubic(v, f_e_raw(v))
    f_o = _match_cubic(v, f_o_raw(v))

    # closed-form candidate -f''(x-)/(x+ - x-) - 1 (see decisions ledger)
    a_e_printed = -f.second_deriv(xm) / dx - 1.0
    a_o_printed = -f.second_deriv(ym) / dy - 1.0
    discrepancy = (abs(f_e.a - a_e_printed) > 1e-9) or (abs(f_o.a - a_o_printed) > 1e-9)

    return TwoSiteSystem(d_e=float(d_e), d_o=float(d_o), d2=float(d2),
                         f_e=f_e, f_o=f_o, minus=minus, plus=plus,
                         a_e_formula_discrepancy=bool(discrepancy))


_DEFAULT_SEED_AXIS = (-0.5, 0.0, 0.25, 0.5, 0.75, 1.0, 1.5)


def _four_site_rhs(u, d1, d2, f):
    w, x, y, z = u
    return np.array([
        d1 * (z - 2.0 * w + x) + 2.0 * d2 * (y - w) - f(w),
        d1 * (w - 2.0 * x + y) + 2.0 * d2 * (z - x) - f(x),
        d1 * (x - 2.0 * y + z) + 2.0 * d2 * (w - y) - f(y),
        d1 * (y - 2.0 * z + w) + 2.0 * d2 * (x - z) - f(z),
    ])


def _four_site_jac(u, d1, d2, f):
    J = np.array([
        [-2.0 * d1 - 2.0 * d2, d1, 2.0 * d2, d1],
        [d1, -2.0 * d1 - 2.0 * d2, d1, 2.0 * d2],
        [2.0 * d2, d1, -2.0 * d1 - 2.0 * d2, d1],
        [d1, 2.0 * d2, d1, -2.0 * d1 - 2.0 * d2],
    ])
    return J - np.diag(f.deriv(u))


def find_four_periodic_equilibria(d1: float, d2: float, a: float,
                                  seed_axis=_DEFAULT_SEED_AXIS,
                                  box: tuple[float, float] = (-3.0, 4.0),
                                  max_iter: int = 50) -> list[PeriodicState]:
    """Newton sweep over a seed grid for the period-4 equilibrium system."""
    f = CubicNonlinearity(1.0, a)
    seeds = [s for s in seed_axis if box[0] <= s <= box[1]]
    found = [np.full(4, v) for v in (0.0, a, 1.0)]
    grid = np.array(np.meshgrid(seeds, seeds, seeds, seeds)).reshape(4, -1).T
    for seed in grid:
        u = seed.astype(float).copy()
        ok = False
        for _ in range(max_iter):
            r = _four_site_rhs(u, d1, d2, f)
            if np.max(np.abs(r)) <= 1e-13:
                ok = True
                break
            try:
                step = np.linalg.solve(_four_site_jac(u, d1, d2, f), -r)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)) or np.max(np.abs(step)) > 10.0:
                break
            u = u + step
        if ok and np.max(np.abs(_four_site_rhs(u, d1, d2, f))) <= 1e-12:
            found.append(u)

    uniq: list[np.ndarray] = []
    for u in sorted(found, key=lambda v: tuple(v)):
        if not any(np.max(np.abs(u - v)) <= 1e-8 for v in uniq):
            uniq.append(u)
    return [
        PeriodicState(4, tuple(float(c) for c in u),
                      float(np.max(np.abs(_four_site_rhs(u, d1, d2, f)))))
        for u in uniq
    ]


def four_site_transform(d1: float, d2: float, a: float,
                        minus: PeriodicState, plus: PeriodicState,
                        equilibrium_tol: float = 1e-9) -> FourSiteSystem:
    """Build the 4x4 shift matrices, their reference/perturbation split, and
    the transformed cubics for a period-4 connection."""
    if minus.period != 4 or plus.period != 4:
        raise TransformError("four_site_transform needs period-4 states")
    for st in (minus, plus):
        if st.residual > equilibrium_tol:
            raise TransformError(
                f"input state {st.values} has equilibrium defect {st.residual:.3e}")
    f = CubicNonlinearity(1.0, a)
    d = plus.as_array() - minus.as_array()
    if np.any(d == 0.0):
        raise TransformError("all four component differences must be nonzero")
    dw, dx, dy, dz = d

    A1 = np.zeros((4, 4))
    A1[0, 2] = d2 * dy / dw
    A1[0, 3] = d1 * dz / dw
    A1[1, 3] = d2 * dz / dx

    A2 = np.zeros((4, 4))
    A2[0, 1] = d1 * dx / dw
    A2[0, 2] = d2 * dy / dw
    A2[1, 0] = d1 * dw / dx
    A2[1, 2] = d1 * dy / dx
    A2[1, 3] = d2 * dz / dx
    A2[2, 0] = d2 * dw / dy
    A2[2, 1] = d1 * dx / dy
    A2[2, 3] = d1 * dz / dy
    A2[3, 1] = d2 * dx / dz
    A2[3, 2] = d1 * dy / dz

    A3 = np.zeros((4, 4))
    A3[2, 0] = d2 * dw / dy
    A3[3, 0] = d1 * dw / dz
    A3[3, 1] = d2 * dx / dz

    # diagonal of A2 closes the row sums of A1 + A2 + A3 to zero
    np.fill_diagonal(A2, 0.0)
    np.fill_diagonal(A2, -np.sum(A1 + A2 + A3, axis=1))

    B2 = d1 * np.array([
        [-dx / dw, dx / dw, 0.0, 0.0],
        [dw / dx, -(dy / dx + dw / dx), dy / dx, 0.0],
        [0.0, dx / dy, -dx / dy, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ])
    A1_ref = A1.copy()
    A3_ref = A3.copy()
    A2_ref = A2 - B2

    # nonlinearities by direct substitution: vary one transformed component,
    # freeze the others at the minus state; linear coupling cancels by the
    # row-sum-zero property, leaving a scalar cubic per component.
    total = A1 + A2 + A3
    cubics = []
    vs = np.array([0.0, 1.0, 2.0, -1.0])
    for i in range(4):
        vals = []
        for v in vs:
            u = minus.as_array().copy()
            u[i] += d[i] * v
            g = _four_site_rhs(u, d1, d2, f)[i] / d[i]
            vals.append(total[i, i] * v - g)
        cubics.append(_match_cubic(vs, np.array(vals)))

    return FourSiteSystem(A1=A1, A2=A2, A3=A3,
                          A1_ref=A1_ref, A2_ref=A2_ref, A3_ref=A3_ref, B2=B2,
                          cubics=tuple(cubics), minus=minus, plus=plus)


def build_infinite_range(a: float, q: float, scale: float,
                         k0: int, k_num: int) -> InfiniteRangeModel:
    """Geometric-kernel model a_k = scale * q^|k|, truncated reference at k0
    and numerical tail support up to k_num."""
    if not 0.0 < q < 1.0:
        raise ValueError("geometric ratio q must lie in (0, 1)")
    if not 0 < k0 < k_num:
        raise ValueError("need 0 < k0 < k_num")
    couplings: dict[tuple[int, int], float] = {}
    for k in range(1, k0 + 1):
        couplings[(0, k)] = couplings[(0, -k)] = scale * q**k
    couplings[(0, 0)] = -sum(v for (n, k), v in couplings.items() if k != 0)
    base = LatticeModel(1, couplings, (CubicNonlinearity(1.0, a),),
                        metadata=f"geometric(q={q}, scale={scale}, k0={k0})")
    tail = {}
    for k in range(k0 + 1, k_num + 1):
        tail[(0, k)] = tail[(0, -k)] = scale * q**k
    bound = 2.0 * scale * q ** (k_num + 1) / (1.0 - q)
    return InfiniteRangeModel(base=base, tail=tail, tail_bound=bound,
                              k0=k0, k_num=k_num)


def tail_sum(model: InfiniteRangeModel) -> float:
    """sum over |k| > k0 of stored tail weights (the smallness input Pi(k0))."""
    return float(sum(model.tail.values())) + model.tail_bound
