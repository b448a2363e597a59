"""Bracketing scalar root finder (Brent's combination of bisection,
secant and inverse quadratic interpolation)."""

from __future__ import annotations

from dataclasses import dataclass

_EPS = 2.220446049250313e-16


class NoSignChangeError(ValueError):
    """The supplied interval does not bracket a sign change."""


class IterationLimitError(ArithmeticError):
    """The iteration cap was exceeded before the bracket collapsed."""


@dataclass(frozen=True)
class BrentResult:
    root: float
    evaluations: int
    iterations: int
    bracket_width: float


def brent(f, a: float, b: float, tol_abs: float, max_iter: int = 200) -> BrentResult:
    """Root of f in [a, b] to absolute bracket width tol_abs.

    f(a) and f(b) must have opposite signs; every evaluation stays inside
    [a, b].  Returns the best endpoint once the bracket width is at most
    tol_abs (plus a machine-precision term).
    """
    if tol_abs <= 0:
        raise ValueError("tol_abs must be positive")
    evals = 0

    def fcount(x):
        nonlocal evals
        evals += 1
        return f(x)

    fa = fcount(a)
    if fa == 0.0:
        return BrentResult(root=a, evaluations=evals, iterations=0, bracket_width=0.0)
    fb = fcount(b)
    if fb == 0.0:
        return BrentResult(root=b, evaluations=evals, iterations=0, bracket_width=0.0)
    if (fa > 0) == (fb > 0):
        raise NoSignChangeError(f"f({a}) and f({b}) have the same sign")

    t = 0.5 * tol_abs  # the loop guarantees |c - b| <= 2*(2*eps*|b| + t)
    c, fc = a, fa
    d = e = b - a

    for it in range(max_iter):
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol = 2.0 * _EPS * abs(b) + t
        m = 0.5 * (c - b)
        if fb == 0.0:
            return BrentResult(root=b, evaluations=evals, iterations=it, bracket_width=0.0)
        if abs(m) <= tol:
            return BrentResult(
                root=b, evaluations=evals, iterations=it, bracket_width=abs(c - b)
            )
        if abs(e) < tol or abs(fa) <= abs(fb):
            d = e = m
        else:
            s = fb / fa
            if a == c:
                p = 2.0 * m * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            else:
                p = -p
            s, e = e, d
            if 2.0 * p < 3.0 * m * q - abs(tol * q) and p < abs(0.5 * s * q):
                d = p / q
            else:
                d = e = m
        a, fa = b, fb
        if abs(d) > tol:
            b += d
        elif m > 0:
            b += tol
        else:
            b -= tol
        fb = fcount(b)
        if (fb > 0) == (fc > 0):
            c, fc = a, fa
            d = e = b - a

    raise IterationLimitError(f"no convergence within {max_iter} iterations")
