"""SISO rational transfer functions and MIMO state-space systems.

Rational functions are exact polynomial pairs: interconnection algebra
never cancels factors implicitly (see :func:`tf_cancel`).  Improper
objects are legal values -- they arise as plant inverses -- but cannot
be realized or simulated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import (
    Polynomial,
    eig_general,
    lyapunov_solve,
    poly_mul,
    poly_sub,
    poly_roots,
)

__all__ = [
    "RationalTF",
    "StateSpace",
    "tf_to_ss",
    "tf_series",
    "tf_parallel",
    "tf_scale",
    "tf_feedback",
    "tf_inverse",
    "tf_cancel",
    "tf_poles",
    "tf_zeros",
    "tf_is_hurwitz",
    "h2_norm_sq",
    "ss_block_diag",
    "ss_series",
    "ss_sum",
    "ss_output_transform",
    "ss_input_transform",
]

HURWITZ_MARGIN = 1e-9


class RationalTF:
    """Ratio of real polynomials, denominator normalized monic."""

    __slots__ = ("num", "den")

    def __init__(self, num, den):
        num = num if isinstance(num, Polynomial) else Polynomial(num)
        den = den if isinstance(den, Polynomial) else Polynomial(den)
        if den.is_zero:
            raise ZeroDivisionError("denominator is identically zero")
        lc = den.leading
        self.num = num.scaled(1.0 / lc)
        self.den = den.scaled(1.0 / lc)

    @staticmethod
    def constant(c: float) -> "RationalTF":
        return RationalTF(Polynomial([float(c)]), Polynomial([1.0]))

    @property
    def is_proper(self) -> bool:
        return self.num.is_zero or self.num.degree <= self.den.degree

    @property
    def is_strictly_proper(self) -> bool:
        return self.num.is_zero or self.num.degree < self.den.degree

    @property
    def relative_degree(self) -> int:
        return self.den.degree - self.num.degree

    def __call__(self, s: complex) -> complex:
        return self.num(s) / self.den(s)

    def __mul__(self, other):
        if isinstance(other, RationalTF):
            return tf_series(self, other)
        return tf_scale(self, float(other))

    __rmul__ = __mul__

    def __add__(self, other: "RationalTF") -> "RationalTF":
        return tf_parallel(self, other)

    def __sub__(self, other: "RationalTF") -> "RationalTF":
        return tf_parallel(self, tf_scale(other, -1.0))

    def __neg__(self) -> "RationalTF":
        return tf_scale(self, -1.0)

    def approx_equal(self, other: "RationalTF", rtol: float = 1e-9) -> bool:
        """Equality as rational functions: num1*den2 == num2*den1."""
        return poly_mul(self.num, other.den).approx_equal(
            poly_mul(other.num, self.den), rtol
        )

    def __repr__(self) -> str:
        return f"RationalTF({self.num.coeffs.tolist()}, {self.den.coeffs.tolist()})"


def tf_series(g1: RationalTF, g2: RationalTF) -> RationalTF:
    return RationalTF(poly_mul(g1.num, g2.num), poly_mul(g1.den, g2.den))


def tf_parallel(g1: RationalTF, g2: RationalTF) -> RationalTF:
    num = poly_mul(g1.num, g2.den) + poly_mul(g2.num, g1.den)
    return RationalTF(num, poly_mul(g1.den, g2.den))


def tf_scale(g: RationalTF, c: float) -> RationalTF:
    return RationalTF(g.num.scaled(c), g.den)


def tf_inverse(g: RationalTF) -> RationalTF:
    if g.num.is_zero:
        raise ZeroDivisionError("cannot invert a zero transfer function")
    return RationalTF(g.den, g.num)


def tf_feedback(p: RationalTF, f: RationalTF) -> tuple[RationalTF, RationalTF]:
    """Close the loop u = f*y around plant p.

    Returns (S, Td) with S = 1/(1 - p f) and Td = S p.  The shared
    plant-denominator factor of Td is cancelled exactly by
    construction, not numerically.
    """
    den_cl = poly_sub(poly_mul(p.den, f.den), poly_mul(p.num, f.num))
    if den_cl.is_zero:
        raise ZeroDivisionError("algebraic loop: 1 - p*f vanishes identically")
    S = RationalTF(poly_mul(p.den, f.den), den_cl)
    Td = RationalTF(poly_mul(p.num, f.den), den_cl)
    return S, Td


def tf_cancel(g: RationalTF, tol: float = 1e-7) -> RationalTF:
    """Remove numerator/denominator root pairs closer than tol.

    Pairs are matched greedily by absolute distance.  The result agrees
    with g away from the cancelled dynamics.
    """
    if g.num.is_zero:
        return RationalTF(Polynomial([0.0]), Polynomial([1.0]))
    zeros = list(poly_roots(g.num)) if g.num.degree >= 1 else []
    poles = list(poly_roots(g.den)) if g.den.degree >= 1 else []
    changed = True
    while changed and zeros and poles:
        changed = False
        best = None
        for i, z in enumerate(zeros):
            for j, q in enumerate(poles):
                d = abs(z - q)
                if best is None or d < best[0]:
                    best = (d, i, j)
        if best is not None and best[0] < tol:
            zeros.pop(best[1])
            poles.pop(best[2])
            changed = True
    num = Polynomial.from_roots(zeros, leading=g.num.leading)
    den = Polynomial.from_roots(poles, leading=1.0)
    return RationalTF(num, den)


def tf_poles(g: RationalTF, tol: float = 1e-7) -> np.ndarray:
    gc = tf_cancel(g, tol)
    if gc.den.degree < 1:
        return np.zeros(0, dtype=complex)
    return poly_roots(gc.den)


def tf_zeros(g: RationalTF, tol: float = 1e-7) -> np.ndarray:
    gc = tf_cancel(g, tol)
    if gc.num.is_zero or gc.num.degree < 1:
        return np.zeros(0, dtype=complex)
    return poly_roots(gc.num)


def tf_is_hurwitz(g: RationalTF) -> bool:
    poles = tf_poles(g)
    return bool(np.all(poles.real < -HURWITZ_MARGIN)) if poles.size else True


@dataclass(frozen=True)
class StateSpace:
    """Real (A, B, C, D) quadruple; n may be zero for static gains."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = A.shape[0]
        if A.size == 0:
            A = A.reshape(0, 0)
            n = 0
            B = B.reshape(0, D.shape[1]) if B.size == 0 else B
            C = C.reshape(D.shape[0], 0) if C.size == 0 else C
        if A.shape != (n, n):
            raise ValueError("A must be square")
        if B.shape[0] != n or C.shape[1] != n:
            raise ValueError("B/C dimensions incompatible with A")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError("D dimensions incompatible with B and C")
        for name, m in (("A", A), ("B", B), ("C", C), ("D", D)):
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def nstates(self) -> int:
        return self.A.shape[0]

    @property
    def ninputs(self) -> int:
        return self.B.shape[1]

    @property
    def noutputs(self) -> int:
        return self.C.shape[0]

    def eval(self, s: complex) -> np.ndarray:
        """Transfer matrix C (sI - A)^{-1} B + D at a single point."""
        n = self.nstates
        if n == 0:
            return self.D.astype(complex)
        m = s * np.eye(n) - self.A
        return self.C @ np.linalg.solve(m, self.B.astype(complex)) + self.D


def tf_to_ss(g: RationalTF) -> StateSpace:
    """Controllable-canonical (companion) realization of a proper TF."""
    if not g.is_proper:
        raise ValueError("unrealizable: relative degree negative")
    n = g.den.degree
    if n == 0:
        d = g.num.coeffs[0] if not g.num.is_zero else 0.0
        return StateSpace(
            np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[d]]
        )
    b = np.zeros(n + 1)
    b[: g.num.coeffs.size] = g.num.coeffs
    a = g.den.coeffs  # monic, ascending, length n+1
    d = b[n]
    r = b[:n] - d * a[:n]
    A = np.zeros((n, n))
    if n > 1:
        A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -a[:n]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = r.reshape(1, n)
    return StateSpace(A, B, C, [[d]])


def ss_block_diag(systems: Sequence[StateSpace]) -> StateSpace:
    if not systems:
        raise ValueError("need at least one system")
    ns = [s.nstates for s in systems]
    ms = [s.ninputs for s in systems]
    ps = [s.noutputs for s in systems]
    n, m, p = sum(ns), sum(ms), sum(ps)
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    C = np.zeros((p, n))
    D = np.zeros((p, m))
    i = j = k = 0
    for s in systems:
        A[i : i + s.nstates, i : i + s.nstates] = s.A
        B[i : i + s.nstates, j : j + s.ninputs] = s.B
        C[k : k + s.noutputs, i : i + s.nstates] = s.C
        D[k : k + s.noutputs, j : j + s.ninputs] = s.D
        i += s.nstates
        j += s.ninputs
        k += s.noutputs
    return StateSpace(A, B, C, D)


def ss_series(first: StateSpace, second: StateSpace) -> StateSpace:
    """Cascade: input -> first -> second -> output."""
    if second.ninputs != first.noutputs:
        raise ValueError("series dimension mismatch")
    n1, n2 = first.nstates, second.nstates
    A = np.zeros((n1 + n2, n1 + n2))
    A[:n1, :n1] = first.A
    A[n1:, n1:] = second.A
    A[n1:, :n1] = second.B @ first.C
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    return StateSpace(A, B, C, D)


def ss_sum(s1: StateSpace, s2: StateSpace) -> StateSpace:
    """Shared input, outputs added."""
    if s1.ninputs != s2.ninputs or s1.noutputs != s2.noutputs:
        raise ValueError("sum dimension mismatch")
    n1, n2 = s1.nstates, s2.nstates
    A = np.zeros((n1 + n2, n1 + n2))
    A[:n1, :n1] = s1.A
    A[n1:, n1:] = s2.A
    B = np.vstack([s1.B, s2.B])
    C = np.hstack([s1.C, s2.C])
    D = s1.D + s2.D
    return StateSpace(A, B, C, D)


def ss_output_transform(s: StateSpace, T: np.ndarray) -> StateSpace:
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if T.shape[1] != s.noutputs:
        raise ValueError("output transform dimension mismatch")
    return StateSpace(s.A, s.B, T @ s.C, T @ s.D)


def ss_input_transform(s: StateSpace, T: np.ndarray) -> StateSpace:
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if T.shape[0] != s.ninputs:
        raise ValueError("input transform dimension mismatch")
    return StateSpace(s.A, s.B @ T, s.C, s.D @ T)


def h2_norm_sq(g: RationalTF | StateSpace) -> float:
    """Squared H2 norm via the controllability gramian.

    Rational inputs are cancelled and realized first; the system must
    be strictly proper and Hurwitz.
    """
    if isinstance(g, RationalTF):
        gc = tf_cancel(g)
        if gc.num.is_zero:
            return 0.0
        if not gc.is_strictly_proper:
            raise ValueError("H2 undefined: system is not strictly proper")
        poles = poly_roots(gc.den) if gc.den.degree >= 1 else np.zeros(0, complex)
        if poles.size == 0 or np.max(poles.real) >= -HURWITZ_MARGIN:
            raise ValueError("H2 undefined: marginal or unstable poles")
        ss = tf_to_ss(gc)
    elif isinstance(g, StateSpace):
        ss = g
        if np.max(np.abs(ss.D), initial=0.0) > 0.0:
            raise ValueError("H2 undefined: system has direct feedthrough")
        if ss.nstates == 0:
            return 0.0
        ev = eig_general(ss.A)
        if np.max(ev.real) >= -HURWITZ_MARGIN:
            raise ValueError("H2 undefined: marginal or unstable poles")
    else:
        raise TypeError("expected RationalTF or StateSpace")
    X = lyapunov_solve(ss.A, ss.B @ ss.B.T)
    return float(np.trace(ss.C @ X @ ss.C.T))
