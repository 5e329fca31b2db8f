"""Vectorized inversion of strictly decreasing functions.

Both the Lévy tail and the inverse-Gaussian survival function span many
decades, so the solver works on ``y = log x`` and expects the caller to
supply the function in log form together with its derivative in ``y``.
The bracket is grown geometrically from an initial guess and then shrunk by
a Newton iteration that falls back to bisection whenever a step leaves it.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

LogFunction = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]

RTOL = 1e-12
MAXITER = 200
EXPANSION_FACTOR = 4.0
MAX_EXPANSIONS = 520  # 4**520 ~ 1e313, the whole double range


class RootFindingError(ArithmeticError):
    """Raised when a bracket cannot be found or the iteration does not converge.

    ``indices`` are flat positions into the target array and ``targets`` the
    corresponding target values, so callers can report which inputs failed.
    """

    def __init__(self, message: str, indices=(), targets=()):
        super().__init__(message)
        self.indices = np.asarray(indices, dtype=int)
        self.targets = np.asarray(targets, dtype=float)


def invert_decreasing(
    logfun: LogFunction,
    target,
    x0=1.0,
    *,
    factor: float = EXPANSION_FACTOR,
    rtol: float = RTOL,
    maxiter: int = MAXITER,
    max_expansions: int = MAX_EXPANSIONS,
) -> np.ndarray:
    """Solve ``h(log x) = target`` elementwise for ``x > 0``.

    ``logfun(y)`` must return ``(h(y), h'(y))`` for a 1-d array ``y`` with ``h``
    strictly decreasing. ``x0`` is the starting guess (scalar or broadcastable
    to ``target``). Convergence is declared when the log-step or the log-bracket
    width falls below ``rtol``, i.e. a relative tolerance on ``x``.
    """
    target = np.asarray(target, dtype=float)
    shape = target.shape
    t = target.ravel()
    y = np.log(np.broadcast_to(np.asarray(x0, dtype=float), shape)).ravel().copy()
    size = t.size
    if size == 0:
        return np.empty(shape)

    h, dh = logfun(y)
    h = np.array(h, dtype=float)
    dh = np.array(dh, dtype=float)
    lo = np.full(size, -np.inf)
    hi = np.full(size, np.inf)
    right = h > t
    lo[right] = y[right]
    hi[~right] = y[~right]

    # grow the bracket in log space
    step = np.log(factor)
    need_hi = np.flatnonzero(np.isinf(hi))
    probe = y[need_hi].copy()
    for _ in range(max_expansions):
        if need_hi.size == 0:
            break
        probe += step
        hp, _ = logfun(probe)
        above = hp > t[need_hi]
        lo[need_hi[above]] = probe[above]
        hi[need_hi[~above]] = probe[~above]
        need_hi, probe = need_hi[above], probe[above]
    need_lo = np.flatnonzero(np.isinf(lo))
    probe = y[need_lo].copy()
    for _ in range(max_expansions):
        if need_lo.size == 0:
            break
        probe -= step
        hp, _ = logfun(probe)
        above = hp > t[need_lo]
        lo[need_lo[above]] = probe[above]
        hi[need_lo[~above]] = probe[~above]
        need_lo, probe = need_lo[~above], probe[~above]
    bad = np.concatenate([need_hi, need_lo])
    if bad.size:
        raise RootFindingError(
            f"could not bracket {bad.size} root(s) within {max_expansions} expansions",
            bad,
            t[bad],
        )

    active = np.flatnonzero(h != t)
    for _ in range(maxiter):
        if active.size == 0:
            break
        ya, la, ua = y[active], lo[active], hi[active]
        with np.errstate(divide="ignore", invalid="ignore"):
            ynew = ya - (h[active] - t[active]) / dh[active]
        outside = ~((ynew > la) & (ynew < ua))
        ynew[outside] = 0.5 * (la[outside] + ua[outside])
        hn, dn = logfun(ynew)
        above = hn > t[active]
        lo[active[above]] = ynew[above]
        hi[active[~above]] = ynew[~above]
        y[active] = ynew
        h[active] = hn
        dh[active] = dn
        done = (
            (~outside & (np.abs(ynew - ya) <= rtol))
            | (hi[active] - lo[active] <= rtol)
            | (hn == t[active])
        )
        active = active[~done]
    else:
        if active.size:
            raise RootFindingError(
                f"{active.size} root(s) did not converge in {maxiter} iterations",
                active,
                t[active],
            )
    return np.exp(y).reshape(shape)


class TableGuess:
    """Starting points for :func:`invert_decreasing` from a tabulated ``h``.

    ``h`` is evaluated once on a log-spaced grid of ``x``; targets are mapped
    back by linear interpolation in ``(h, log x)``. Targets outside the table
    are clamped to its ends and left to the bracket search.
    """

    def __init__(self, logfun: LogFunction, x_lo: float, x_hi: float, size: int = 2048):
        y = np.linspace(np.log(x_lo), np.log(x_hi), size)
        h, _ = logfun(y)
        keep = np.isfinite(h)
        # np.interp needs increasing abscissae; h is decreasing in y
        self._h = h[keep][::-1]
        self._y = y[keep][::-1]

    def __call__(self, target) -> np.ndarray:
        return np.exp(np.interp(target, self._h, self._y))
