"""Shared numerical kernels.

Three independent tools used across the package:

* adaptive Gauss-Kronrod quadrature (7-15 pair) over finite intervals,
  batched so the integrand is always called on whole arrays of nodes;
* improper integrals over [r0, infinity) via the substitution s = 1/r,
  with a heuristic divergence probe on the tail;
* least-squares extrapolation of ladder sequences in powers of 1/scale,
  and the Gauss hypergeometric function on [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ._kernels import hyp2f1_series

__all__ = [
    "ConvergenceError",
    "ExtrapolationResult",
    "QuadratureError",
    "QuadResult",
    "extrapolate_limit",
    "hyp2f1",
    "integrate_improper",
    "quad_adaptive",
]


class QuadratureError(RuntimeError):
    """Quadrature budget exhausted or divergence suspected."""

    def __init__(self, message: str, value: float = math.nan, estimate: float = math.inf):
        super().__init__(message)
        self.value = value
        self.estimate = estimate


class ConvergenceError(RuntimeError):
    """Series truncated before reaching tolerance."""

    def __init__(self, message: str, partial: float, bound: float):
        super().__init__(f"{message} (partial sum {partial!r}, last-term bound {bound!r})")
        self.partial = partial
        self.bound = bound


# 15-point Kronrod extension of 7-point Gauss, nodes on [-1, 1].
_XK = np.array([
    -0.991455371120812639206854697526329,
    -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926,
    -0.741531185599394439863864773280788,
    -0.586087235467691130294144838258730,
    -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245,
    0.0,
    0.207784955007898467600689403773245,
    0.405845151377397166906606412076961,
    0.586087235467691130294144838258730,
    0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,
    0.949107912342758524526189684047851,
    0.991455371120812639206854697526329,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
    0.204432940075298892414161999234649,
    0.190350578064785409913256402421014,
    0.169004726639267902826583426598550,
    0.140653259715525918745189590510238,
    0.104790010322250183839876322541518,
    0.063092092629978553290700663189204,
    0.022935322010529224963732008058970,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
    0.381830050505118944950369775488975,
    0.279705391489276667901467771423780,
    0.129484966168869693270611432679082,
])
_GAUSS_IDX = np.arange(1, 15, 2)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    panels: int
    evals: int
    converged: bool


def _eval_panels(f, lo, hi):
    """Kronrod value, error estimate, and |f| integral for each panel."""
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * _XK[None, :]
    samples = np.asarray(f(pts.ravel()), dtype=np.float64)
    fv = np.broadcast_to(samples, (pts.size,)).reshape(pts.shape)
    resk = fv @ _WK
    resg = fv[:, _GAUSS_IDX] @ _WG
    resabs = np.abs(fv) @ _WK
    reskh = 0.5 * resk
    resasc = np.abs(fv - reskh[:, None]) @ _WK

    val = resk * half
    raw = np.abs((resk - resg) * half)
    scale = resasc * np.abs(half)
    err = np.where(
        (scale > 0.0) & (raw > 0.0),
        scale * np.minimum(1.0, (200.0 * raw / np.where(scale > 0, scale, 1.0)) ** 1.5),
        raw,
    )
    err = np.maximum(err, 50.0 * _EPS * resabs * np.abs(half))
    return val, err, pts.size


def quad_adaptive(
    f: Callable,
    a: float,
    b: float,
    rel_tol: float = 1e-10,
    abs_tol: float = 0.0,
    max_panels: int = 4096,
    divergence_bound: float = 1e15,
) -> QuadResult:
    """Integrate a vectorized integrand over [a, b].

    The worst panels are bisected in batches until the summed Kronrod error
    estimate meets max(abs_tol, rel_tol * |integral|). Raises
    QuadratureError when the panel budget runs out, carrying the value and
    estimate achieved so far.
    """
    if not b > a:
        if b == a:
            return QuadResult(0.0, 0.0, 0, 0, True)
        raise ValueError(f"bad interval [{a}, {b}]")

    # Wide positive intervals start with one panel per decade, which keeps
    # the worst-panel search from wasting rounds on the far-field scales.
    if a > 0 and b / a > 10.0:
        ndec = int(math.ceil(math.log10(b / a)))
        edges = np.geomspace(a, b, ndec + 1)
    else:
        edges = np.linspace(a, b, 3)
    lo = edges[:-1].copy()
    hi = edges[1:].copy()

    val, err, n_evals = _eval_panels(f, lo, hi)
    while True:
        total = float(val.sum())
        toterr = float(err.sum())
        tol = max(abs_tol, rel_tol * abs(total))
        if toterr <= tol:
            return QuadResult(total, toterr, lo.size, n_evals, True)
        if abs(total) > divergence_bound:
            raise QuadratureError(
                f"integral magnitude exceeds {divergence_bound:g}; suspected divergence",
                value=total,
                estimate=toterr,
            )
        if lo.size >= max_panels:
            raise QuadratureError(
                f"quadrature budget exhausted at {lo.size} panels; "
                f"achieved error estimate {toterr:.3e} (needed {tol:.3e})",
                value=total,
                estimate=toterr,
            )
        worst = float(err.max())
        split = err >= max(0.25 * worst, toterr / (2.0 * lo.size))
        if not split.any():
            split = err == worst
        keep = ~split
        mid = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[keep], lo[split], mid])
        new_hi = np.concatenate([hi[keep], mid, hi[split]])
        child_val, child_err, evals = _eval_panels(f, new_lo[keep.sum():], new_hi[keep.sum():])
        n_evals += evals
        val = np.concatenate([val[keep], child_val])
        err = np.concatenate([err[keep], child_err])
        lo, hi = new_lo, new_hi


def _tail_decay_exponent(f, r_star: float) -> Optional[float]:
    """Log-log slope of |f| on a geometric probe past r_star.

    Returns None when the probe is inconclusive (sign changes, zeros, or
    non-finite values), leaving divergence detection to the budget check.
    """
    rs = r_star * 4.0 ** np.arange(5)
    fv = np.asarray(f(rs), dtype=np.float64)
    if not np.isfinite(fv).all():
        return None
    if np.any(fv == 0.0) or len(set(np.sign(fv))) != 1:
        return None
    slope = np.polyfit(np.log(rs), np.log(np.abs(fv)), 1)[0]
    return -float(slope)


def integrate_improper(
    f: Callable,
    r0: float,
    rel_tol: float = 1e-10,
    abs_tol: float = 0.0,
    split: Optional[float] = None,
    max_panels: int = 4096,
    divergence_bound: float = 1e15,
) -> QuadResult:
    """Integrate a vectorized integrand over [r0, infinity).

    The range is cut at a finite split radius; the tail is mapped to
    (0, 1/split] by s = 1/r and integrated there. A log-log decay probe
    rejects tails flatter than 1/r before any budget is spent on them.
    """
    if r0 < 0:
        raise ValueError("r0 must be nonnegative")
    r_star = split if split is not None else max(10.0, 2.0 * r0)
    if r_star <= r0:
        r_star = 2.0 * r0

    alpha = _tail_decay_exponent(f, r_star)
    if alpha is not None and alpha < 1.001:
        raise QuadratureError(
            f"tail decays like r^-{alpha:.3f} at r >= {r_star:g}; integral appears divergent"
        )

    def transformed(s):
        s = np.asarray(s, dtype=np.float64)
        r = 1.0 / s
        return np.asarray(f(r), dtype=np.float64) * r * r

    head = quad_adaptive(
        f, r0, r_star,
        rel_tol=0.5 * rel_tol, abs_tol=0.5 * abs_tol,
        max_panels=max_panels, divergence_bound=divergence_bound,
    )
    tail = quad_adaptive(
        transformed, 0.0, 1.0 / r_star,
        rel_tol=0.5 * rel_tol, abs_tol=max(0.5 * abs_tol, 0.25 * rel_tol * abs(head.value)),
        max_panels=max_panels, divergence_bound=divergence_bound,
    )
    value = head.value + tail.value
    error = head.error + tail.error
    result = QuadResult(
        value, error, head.panels + tail.panels, head.evals + tail.evals, True
    )
    if error > max(abs_tol, rel_tol * abs(value)) and error > 1e-300:
        raise QuadratureError(
            f"achieved error estimate {error:.3e} exceeds tolerance",
            value=value,
            estimate=error,
        )
    return result


# ---------------------------------------------------------------------------
# Gauss hypergeometric function on [0, 1]

_MAX_TERMS = 20000


def _series(a: float, b: float, c: float, z: float, rtol: float, max_terms: int) -> float:
    total, n, converged = hyp2f1_series(a, b, c, z, rtol, max_terms)
    if not converged:
        raise ConvergenceError(
            f"2F1 series did not converge in {n} terms for "
            f"(a={a}, b={b}, c={c}, z={z})",
            partial=total,
            bound=abs(total) * rtol,
        )
    return total


def _gamma_ratio(c: float, c_ab: float, c_a: float, c_b: float) -> float:
    try:
        return math.gamma(c) * math.gamma(c_ab) / (math.gamma(c_a) * math.gamma(c_b))
    except ValueError as exc:
        raise ValueError(f"Gamma pole in 2F1 parameter combination: {exc}") from exc


def hyp2f1(a: float, b: float, c: float, z: float, rtol: float = 1e-13) -> float:
    """Gauss hypergeometric 2F1(a, b; c; z) for real parameters, 0 <= z <= 1.

    Direct series up to z = 0.75; beyond that the linear transformation in
    1 - z; at z = 1 the closed Gamma-ratio formula (requires c - a - b > 0).
    """
    if c <= 0 and c == int(c):
        raise ValueError(f"c = {c} is a nonpositive integer")
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"argument z = {z} outside [0, 1]")
    if z == 0.0:
        return 1.0
    if a == 0.0 or b == 0.0:
        return 1.0
    if z == 1.0:
        if c - a - b <= 0:
            raise ValueError(
                f"2F1 diverges at z = 1 when c - a - b = {c - a - b} <= 0"
            )
        return _gamma_ratio(c, c - a - b, c - a, c - b)
    if z <= 0.75:
        return _series(a, b, c, z, rtol, _MAX_TERMS)

    cab = c - a - b
    if abs(cab - round(cab)) < 1e-8:
        # The linear transformation degenerates; the direct series still
        # converges for z < 1, just slowly.
        return _series(a, b, c, z, rtol, 40 * _MAX_TERMS)
    w = 1.0 - z
    first = _gamma_ratio(c, cab, c - a, c - b) * _series(a, b, 1.0 - cab, w, rtol, _MAX_TERMS)
    second = (
        w**cab
        * _gamma_ratio(c, -cab, a, b)
        * _series(c - a, c - b, 1.0 + cab, w, rtol, _MAX_TERMS)
    )
    return first + second


# ---------------------------------------------------------------------------
# Ladder extrapolation

@dataclass(frozen=True)
class ExtrapolationResult:
    """Least-squares limit of a ladder sequence in powers of 1/scale."""

    raw: Tuple[Tuple[float, float], ...]
    model: str
    limit: float
    coefficients: Tuple[float, ...]
    residual: float
    monotone_tail: bool

    def to_dict(self) -> dict:
        return {
            "raw": [[s, v] for s, v in self.raw],
            "model": self.model,
            "limit": self.limit,
            "coefficients": list(self.coefficients),
            "residual": self.residual,
            "monotone_tail": self.monotone_tail,
        }


def extrapolate_limit(samples: Sequence[Tuple[float, float]], order: int = 1) -> ExtrapolationResult:
    """Fit v(scale) = v_inf + c1/scale (+ c2/scale^2) and return v_inf.

    Needs at least four samples with strictly increasing scales spanning
    two decades. The residual is the worst absolute misfit; the monotone
    tail flag reports whether the last three raw values are monotone,
    the proxy for a converged (rather than oscillating) sequence.
    """
    pairs = [(float(s), float(v)) for s, v in samples]
    if len(pairs) < 4:
        raise ValueError(f"need at least 4 samples, got {len(pairs)}")
    scales = np.array([s for s, _ in pairs])
    values = np.array([v for _, v in pairs])
    if scales[0] <= 0:
        raise ValueError("scales must be positive")
    if not np.all(np.diff(scales) > 0):
        raise ValueError("scales must be strictly increasing")
    if scales[-1] < 100.0 * scales[0]:
        raise ValueError("scales must span at least two decades")
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")

    x = 1.0 / scales
    columns = [np.ones_like(x), x]
    if order == 2:
        columns.append(x * x)
    design = np.column_stack(columns)
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    fitted = design @ coef
    residual = float(np.max(np.abs(fitted - values)))
    tail = np.diff(values[-3:])
    monotone = bool(np.all(tail >= 0.0) or np.all(tail <= 0.0))
    model = "v_inf + c1/scale" + (" + c2/scale^2" if order == 2 else "")
    return ExtrapolationResult(
        raw=tuple(pairs),
        model=model,
        limit=float(coef[0]),
        coefficients=tuple(float(c) for c in coef),
        residual=residual,
        monotone_tail=monotone,
    )
