"""Exit transforms of the reflected AIMD process.

Four first-passage problems built on the two-sided exit parts from
:mod:`.scalefn`:

* ``lst_reflected_upper`` — process reflected (jump-truncated) at an upper
  level ``a``; passage below ``c``.
* ``lst_reflected_lower`` — process reflected at a lower level ``b``;
  passage up to ``c``.
* ``lst_drawdown`` — first time the process falls ``c`` below its running
  supremum, resolved through the supremum's exit distribution (hazard of
  losing the race to a new maximum) and a drawdown-given-supremum factor.
* ``lst_drawup`` — first time the process rises ``c`` above its running
  infimum, via the infimum-cascade renewal in :mod:`._drawup`.

``solve_a`` computes the implicit upper level that balances the two-sided
split at the drawup boundary; it is exposed both as a building block and a
diagnostic, with a resonance guard for roots landing on coefficient-table
breakpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import ConvergenceError, _require
from .scalefn import (DEFAULT_SERIES, SeriesControl, l_down, l_up,
                      _log_k_from_b, z_down, z_up)
from ._drawup import drawup_lst

__all__ = [
    "QuadratureControl",
    "DerivativeControl",
    "lst_reflected_upper",
    "lst_reflected_lower",
    "hazard",
    "drawdown_supremum_survival",
    "lst_drawdown",
    "lst_drawdown_general_start",
    "solve_a",
    "lst_drawup",
]


@dataclass(frozen=True)
class QuadratureControl:
    """Accuracy policy for the drawdown integrals.

    Each integral is evaluated on kink-aware Gauss-Legendre panels and then
    re-evaluated with all panels halved until two successive refinements
    agree to ``max(abs_tol, rel_tol * |value|)``; the last difference is the
    reported error estimate.  ``max_subdivisions`` bounds the number of
    refinement rounds; ``tail_cutoff_tol`` truncates the infinite upper
    limit once the remaining contribution is provably below it.
    """

    abs_tol: float = 1e-8
    rel_tol: float = 1e-7
    max_subdivisions: int = 6
    tail_cutoff_tol: float = 1e-10

    def __post_init__(self):
        _require(self.abs_tol > 0.0, f"abs_tol must be > 0, got {self.abs_tol}")
        _require(self.rel_tol > 0.0, f"rel_tol must be > 0, got {self.rel_tol}")
        _require(self.max_subdivisions >= 1,
                 f"max_subdivisions must be >= 1, got {self.max_subdivisions}")
        _require(self.tail_cutoff_tol > 0.0,
                 f"tail_cutoff_tol must be > 0, got {self.tail_cutoff_tol}")


@dataclass(frozen=True)
class DerivativeControl:
    """Right-sided finite-difference policy.

    Only right differences are taken (the exit transforms are guaranteed
    one-sided differentiable in their level arguments, with kinks on the
    breakpoint lattice).  ``rel_step`` scales the step by the level;
    ``use_extrapolation`` applies one step-halving Richardson pass.
    """

    rel_step: float = 1e-6
    use_extrapolation: bool = True

    def __post_init__(self):
        _require(0.0 < self.rel_step <= 1e-2,
                 f"rel_step must lie in (0, 1e-2], got {self.rel_step}")


DEFAULT_QUAD = QuadratureControl()
DEFAULT_DERIV = DerivativeControl()


# ---------------------------------------------------------------------------
# reflection at a fixed barrier
# ---------------------------------------------------------------------------


def lst_reflected_upper(w: float, lam: float, p: float, x: float, a: float, c: float,
                        series: SeriesControl = DEFAULT_SERIES) -> float:
    """LST of the passage below ``c`` for the process truncated at ``a``.

    Jumps fire from ``min(level, a)``: the pre-jump position is capped at
    the reflecting level ``a``.  Decomposition: either the free two-sided
    exit from ``(c, a)`` ends below ``c`` directly, or the process reaches
    ``a`` and from there each jump restarts the game from ``p a`` (one
    exponential waiting time per visit to the barrier).
    """
    _require(0.0 < c < a, f"reflected-upper needs 0 < c < a, got c={c}, a={a}")
    _require(c <= x <= a, f"reflected-upper needs c <= x <= a, got x={x}")
    if lam == 0.0:
        return 0.0  # no jumps: the barrier is never left downward
    if w == 0.0:
        return 1.0
    g = w + lam
    ld = l_down(w, lam, p, x, a, c, series)
    lu = l_up(w, lam, p, x, a, c, series)
    if p * a > c:
        # post-jump level p*a is still inside (c, a): geometric recursion
        # over returns to the barrier
        e_pa = l_down(w, lam, p, p * a, a, c, series) \
            / (1.0 - (lam / g) * l_up(w, lam, p, p * a, a, c, series))
        return ld + lu * (lam / g) * e_pa
    return ld + lu * lam / g


def lst_reflected_lower(w: float, lam: float, p: float, x: float, c: float, b: float,
                        series: SeriesControl = DEFAULT_SERIES) -> float:
    """LST of the passage up to ``c`` for the process reflected at ``b``.

    Downward jumps are truncated at ``b`` (the post-jump position is
    ``max(p(level), b)``).  Decomposition: the free two-sided exit from
    ``(b, c)`` either ends at ``c`` or at the floor, and from the floor the
    game restarts at ``b`` — a geometric series in the return weight
    ``l_down(w; b, c, b)``.
    """
    _require(0.0 < b <= x < c, f"reflected-lower needs 0 < b <= x < c, got x={x}, c={c}, b={b}")
    if w == 0.0:
        return 1.0
    lu = l_up(w, lam, p, x, c, b, series)
    ld = l_down(w, lam, p, x, c, b, series)
    if ld == 0.0:
        return lu
    ret = l_down(w, lam, p, b, c, b, series)
    den = 1.0 - ret
    if den < 1e-14:
        raise ConvergenceError(
            f"reflected-lower restart weight too close to 1 (1 - {ret}) at "
            f"w={w}, lam={lam}, p={p}, c={c}, b={b}")
    return lu + ld * l_up(w, lam, p, b, c, b, series) / den


# ---------------------------------------------------------------------------
# drawdown: race hazard of the running supremum
# ---------------------------------------------------------------------------


def hazard(w: float, lam: float, p: float, z: float, c: float,
           dctrl: DerivativeControl = DEFAULT_DERIV) -> float:
    """Exit intensity of the supremum race at level ``z`` with window ``c``.

    Equals the negative right-derivative, in the upper level ``a``, of the
    up-exit transform of the strip ``(z - c, a)`` started at ``z``, taken
    at ``a = z``.  Because that transform equals 1 at ``a = z``, the
    difference quotient of its logarithm (the log of the reciprocal scale
    function) gives the same derivative; it is evaluated right-sided with
    an optional Richardson pass.  Values are clamped to the provable
    ``>= 0`` range; a significantly negative quotient signals a step-size
    fault and raises.
    """
    _require(z > c > 0.0, f"hazard needs z > c > 0, got z={z}, c={c}")
    b = z - c
    step = dctrl.rel_step * z

    def quot(dd: float) -> float:
        return (_log_k_from_b(w, lam, p, b, z + dd)
                - _log_k_from_b(w, lam, p, b, z)) / dd

    h1 = quot(step)
    if dctrl.use_extrapolation:
        h = 2.0 * quot(step / 2.0) - h1
    else:
        h = h1
    noise = 64.0 * 2.2e-16 * (abs(_log_k_from_b(w, lam, p, b, z)) + 1.0) / step
    if h < -noise - 1e-9 * (w + lam):
        raise ConvergenceError(
            f"hazard difference quotient came out negative ({h}) beyond noise "
            f"at w={w}, lam={lam}, p={p}, z={z}, c={c}; adjust rel_step")
    return max(h, 0.0)


def _drawdown_ratio(w: float, lam: float, p: float, y: float, c: float,
                    dctrl: DerivativeControl) -> float:
    """Conditional transform factor given the supremum stops at ``y``.

    Ratio of the right-derivatives (in the upper level) of the down-exit
    part at ``w`` and at 0, evaluated as a ratio of difference quotients
    with one Richardson pass on the ratio itself.
    """
    step = dctrl.rel_step * y

    def ratio(dd: float) -> float:
        num = l_down(w, lam, p, y, y + dd, y - c)
        den = l_down(0.0, lam, p, y, y + dd, y - c)
        return num / den

    r1 = ratio(step)
    if dctrl.use_extrapolation:
        return 2.0 * ratio(step / 2.0) - r1
    return r1


def _supremum_breakpoints(x: float, c: float, p: float) -> list:
    """Kink levels ``c / (1 - p^k)`` above ``x``, ascending.

    At these levels the interval index of the strip ``(z - c, z)`` changes,
    so the hazard is only piecewise-smooth across them.
    """
    bps = []
    k = 1
    while True:
        zk = c / (1.0 - p ** k)
        if zk <= x:
            break
        bps.append(zk)
        k += 1
    return sorted(bps)


_GL24 = np.polynomial.legendre.leggauss(24)
_GL8 = np.polynomial.legendre.leggauss(8)


def _gl_panel(f: Callable[[float], float], lo: float, hi: float) -> float:
    nodes, weights = _GL24
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return float(half * sum(wi * f(mid + half * ni) for ni, wi in zip(nodes, weights)))


def drawdown_supremum_survival(lam: float, p: float, x: float, y: float, c: float,
                               qctrl: QuadratureControl = DEFAULT_QUAD,
                               dctrl: DerivativeControl = DEFAULT_DERIV) -> float:
    """Probability the running supremum exceeds ``y`` before the drawdown hits ``c``.

    ``exp(-integral_x^y h_0(z) dz)`` with the undiscounted hazard.  Beyond
    the last kink level ``c/(1-p)`` the hazard is exactly ``lam`` (any jump
    ends the race there), so that stretch integrates in closed form; the
    finite head uses kink-aware panels with halving refinement.
    """
    _require(x > c > 0.0, f"survival needs x > c > 0, got x={x}, c={c}")
    _require(y >= x, f"survival needs y >= x, got x={x}, y={y}")
    if y == x:
        return 1.0
    if lam == 0.0:
        return 1.0  # hazard vanishes: the supremum grows forever
    z1 = c / (1.0 - p)
    head_hi = min(y, max(z1, x))
    tail = lam * max(0.0, y - max(z1, x))
    if head_hi <= x:
        return math.exp(-tail)
    bps = [z for z in _supremum_breakpoints(x, c, p) if z < head_hi]
    raw = [x] + bps + [head_hi]

    def integrate(split: int) -> float:
        total = 0.0
        for lo, hi in zip(raw[:-1], raw[1:]):
            if hi - lo <= 1e-15 * head_hi:
                continue
            for i in range(split):
                a0 = lo + (hi - lo) * i / split
                b0 = lo + (hi - lo) * (i + 1) / split
                total += _gl_panel(lambda z: hazard(0.0, lam, p, z, c, dctrl), a0, b0)
        return total

    prev = integrate(1)
    for round_ in range(1, qctrl.max_subdivisions + 1):
        cur = integrate(2 ** round_)
        if abs(cur - prev) <= max(qctrl.abs_tol, qctrl.rel_tol * abs(cur)):
            return math.exp(-(cur + tail))
        prev = cur
    raise ConvergenceError(
        f"survival integral did not settle after {qctrl.max_subdivisions} refinements",
        partial=math.exp(-(prev + tail)))


def _drawdown_value(w: float, lam: float, p: float, x: float, c: float,
                    qctrl: QuadratureControl, dctrl: DerivativeControl,
                    split: int) -> float:
    """One resolution level of the drawdown integral (panels split ``split``-fold)."""
    z1 = c / (1.0 - p)
    bps = _supremum_breakpoints(x, c, p)
    ends = bps + [max(z1, x)]
    Hcut = math.log(1.0 / qctrl.tail_cutoff_tol)
    base_panels = []
    lo = x
    for e in ends:
        if e > lo + 1e-15:
            base_panels.append((lo, e))
            lo = e
    width = 2.0 / lam
    while True:
        base_panels.append((lo, lo + width))
        lo += width
        if lam * (lo - max(z1, x)) > Hcut + 5.0:
            break
    panels = []
    for a0, b0 in base_panels:
        for i in range(split):
            panels.append((a0 + (b0 - a0) * i / split,
                           a0 + (b0 - a0) * (i + 1) / split))

    nodes24, weights24 = _GL24
    nodes8, weights8 = _GL8
    H_w = 0.0
    H_0 = 0.0
    total = 0.0
    for (aa, bb) in panels:
        if H_0 > Hcut:
            break
        half = 0.5 * (bb - aa)
        ys = half * nodes24 + 0.5 * (bb + aa)
        ws = half * weights24
        prev = aa
        Hw_loc = H_w
        H0_loc = H_0
        for y, wt in zip(ys, ws):
            ih = 0.5 * (y - prev)
            ts = ih * nodes8 + 0.5 * (y + prev)
            tw = ih * weights8
            Hw_loc += sum(tw_i * hazard(w, lam, p, t, c, dctrl) for t, tw_i in zip(ts, tw))
            H0_loc += sum(tw_i * hazard(0.0, lam, p, t, c, dctrl) for t, tw_i in zip(ts, tw))
            f = hazard(0.0, lam, p, y, c, dctrl) * math.exp(-Hw_loc) \
                * _drawdown_ratio(w, lam, p, y, c, dctrl)
            total += wt * f
            prev = y
        ih = 0.5 * (bb - prev)
        ts = ih * nodes8 + 0.5 * (bb + prev)
        tw = ih * weights8
        Hw_loc += sum(tw_i * hazard(w, lam, p, t, c, dctrl) for t, tw_i in zip(ts, tw))
        H0_loc += sum(tw_i * hazard(0.0, lam, p, t, c, dctrl) for t, tw_i in zip(ts, tw))
        H_w, H_0 = Hw_loc, H0_loc
    return float(total)  # the Gauss weights are numpy scalars; shed the wrapper


def lst_drawdown(w: float, lam: float, p: float, x: float, c: float,
                 qctrl: QuadratureControl = DEFAULT_QUAD,
                 dctrl: DerivativeControl = DEFAULT_DERIV,
                 diagnostics: Optional[dict] = None) -> float:
    """LST of the first time the process falls ``c`` below its running supremum.

    Integrates, over the level ``y`` where the supremum race ends, the
    density ``h_0(y) exp(-H_0(y))`` of the stopped supremum times the
    discount accumulated while racing, ``exp(-(H_w(y) - H_0(y)))``, times
    the conditional drawdown factor of :func:`_drawdown_ratio`; ``H``
    denotes the cumulative hazard from ``x``.  Cumulative hazards advance
    incrementally between quadrature nodes; the upper limit stops once the
    survival weight drops below ``tail_cutoff_tol``, and the whole
    integral is refined by panel halving until two rounds agree.
    """
    _require(x > c > 0.0, f"drawdown needs x > c > 0, got x={x}, c={c}")
    if lam == 0.0:
        return 0.0  # no jumps: the level never leaves its running supremum
    if w == 0.0:
        return 1.0
    if (1.0 - p) * x >= c:
        # the first jump happens at a level >= x, and a jump from level y
        # opens a drawdown of (1-p) y >= (1-p) x >= c: the exit time is
        # exactly the first jump time
        return lam / (lam + w)
    prev = _drawdown_value(w, lam, p, x, c, qctrl, dctrl, 1)
    for round_ in range(1, qctrl.max_subdivisions + 1):
        cur = _drawdown_value(w, lam, p, x, c, qctrl, dctrl, 2 ** round_)
        err = abs(cur - prev)
        if err <= max(qctrl.abs_tol, qctrl.rel_tol * abs(cur)):
            if diagnostics is not None:
                diagnostics.update(quad_error=err + qctrl.tail_cutoff_tol,
                                   refinement_rounds=round_)
            return min(max(cur, 0.0), 1.0)
        prev = cur
    raise ConvergenceError(
        f"drawdown integral did not settle after {qctrl.max_subdivisions} refinements",
        partial=prev)


def lst_drawdown_general_start(w: float, lam: float, p: float, x: float,
                               xbar0: float, c: float,
                               qctrl: QuadratureControl = DEFAULT_QUAD,
                               dctrl: DerivativeControl = DEFAULT_DERIV,
                               diagnostics: Optional[dict] = None) -> float:
    """Drawdown LST when a supremum ``xbar0 >= x`` is already on record.

    While the process stays inside ``(xbar0 - c, xbar0)`` the recorded
    supremum is still the reference: exiting below ends the drawdown
    immediately, exiting above restarts the fresh-supremum problem at
    ``xbar0``.  If the recorded drawdown already reaches ``c`` the stop is
    immediate.  The recorded supremum must stand above the window,
    ``xbar0 > c``; otherwise the window floor sits at or below zero where
    the level cannot reach it in finite time.
    """
    _require(xbar0 >= x, f"general start needs xbar0 >= x, got xbar0={xbar0}, x={x}")
    _require(xbar0 > c > 0.0,
             f"general start needs xbar0 > c > 0, got xbar0={xbar0}, c={c}")
    if xbar0 - c >= x:
        return 1.0
    if xbar0 == x:
        return lst_drawdown(w, lam, p, x, c, qctrl, dctrl, diagnostics)
    if lam == 0.0:
        return 0.0  # drift rejoins the recorded supremum and never falls back
    if w == 0.0:
        return 1.0
    b0 = xbar0 - c
    down = l_down(w, lam, p, x, xbar0, b0)
    up = l_up(w, lam, p, x, xbar0, b0)
    return down + up * lst_drawdown(w, lam, p, xbar0, c, qctrl, dctrl, diagnostics)


# ---------------------------------------------------------------------------
# drawup: implicit balancing level and the cascade transform
# ---------------------------------------------------------------------------


def solve_a(w: float, lam: float, p: float, c: float, u: float,
            tol: float = 1e-12, series: SeriesControl = DEFAULT_SERIES) -> float:
    """Level ``a > u + c`` balancing the two-sided split at the drawup boundary.

    Solves ``l_up(w; u+c, a, u) = 1 - z_down(w; u+c, u)`` by bracket
    doubling and bisection; the map is strictly decreasing in ``a`` (larger
    targets are harder to reach first), so the root is unique.  If the
    root lands within 1e-9 (relative) of a coefficient-table breakpoint
    ``u p^{-k}`` the window ``c`` is perturbed by one part in 1e9 and the
    solve is repeated, so downstream difference quotients never straddle a
    kink.
    """
    _require(w > 0.0, f"solve_a needs w > 0, got {w}")
    _require(c > 0.0 and u > 0.0, f"solve_a needs c > 0 and u > 0, got c={c}, u={u}")

    def root_for(c_eff: float) -> float:
        target = 1.0 - z_down(w, lam, p, u + c_eff, u, series)
        _require(0.0 < target < 1.0, f"degenerate drawup balance target {target}")

        def f(a: float) -> float:
            return l_up(w, lam, p, u + c_eff, a, u, series) - target

        lo = u + c_eff
        d = max(c_eff, 1.0)
        hi = lo + d
        while f(hi) > 0.0:
            d *= 2.0
            hi = lo + d
            if d > 1e12:
                raise ConvergenceError(
                    f"drawup balance bracket exceeded 1e12 at w={w}, lam={lam}, "
                    f"p={p}, c={c_eff}, u={u}")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            if abs(fm) <= tol:
                return mid
            if fm > 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    c_eff = c
    for _ in range(4):
        a = root_for(c_eff)
        k = round(math.log(a / u) / math.log(1.0 / p))
        if k < 0 or abs(u * p ** (-k) - a) / u >= 1e-9:
            return a
        c_eff *= 1.0 + 1e-9
    return a


def lst_drawup(w: float, lam: float, p: float, x: float, u: float, c: float,
               tol: float = 1e-7, diagnostics: Optional[dict] = None) -> float:
    """LST of the first time the process rises ``c`` above its running infimum.

    ``u`` is the infimum on record at time zero.  With ``u = 0`` no jump
    can create a new infimum below the floor and the event is a plain
    ascent over ``c``; otherwise the infimum-cascade renewal solver of
    :mod:`._drawup` applies.  ``tol`` bounds the cascade truncation error.
    """
    return drawup_lst(w, lam, p, x, u, c, tol=tol, diagnostics=diagnostics)
