"""Elementary unipotent factorizations in SL_n.

Covers constant matrices (Gauss-Jordan elimination in float or exact
rational arithmetic), the five-factor word for diagonal families
``diag(a, 1/a)``, the series-at-1 obstruction for words whose entries
vanish at ``w = 1``, and the rank of the last-row projection of the
alternating product map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
import sympy

from .errors import DomainVanishing, NotSL, PreconditionViolated

W = sympy.Symbol("w")
DET_TOL = 1e-10
PSI_STEP = 1e-6
PSI_RTOL = 1e-8


def _is_symbolic(x) -> bool:
    return isinstance(x, sympy.Basic) and bool(x.free_symbols)


@dataclass(frozen=True)
class ElementaryFactor:
    """``I + entry * E_ij`` of size ``n`` (0-based ``i != j``).

    ``entry`` is a number, a :class:`~fractions.Fraction` or a sympy
    expression in the symbol ``w``.
    """

    n: int
    i: int
    j: int
    entry: object

    def __post_init__(self):
        if self.i == self.j or not (0 <= self.i < self.n and 0 <= self.j < self.n):
            raise ValueError("elementary factor needs distinct in-range positions")

    @property
    def label(self) -> str:
        return f"E{self.i + 1}{self.j + 1}"

    def inverse(self) -> "ElementaryFactor":
        return ElementaryFactor(self.n, self.i, self.j, -self.entry)

    def value(self, w=None):
        e = self.entry
        if _is_symbolic(e):
            return complex(e.subs(W, w))
        return e

    def matrix(self, w=None) -> np.ndarray:
        out = np.eye(self.n, dtype=complex)
        out[self.i, self.j] += complex(self.value(w))
        return out

    def exact_matrix(self) -> list:
        out = [[Fraction(int(r == c)) for c in range(self.n)] for r in range(self.n)]
        out[self.i][self.j] += Fraction(self.entry)
        return out

    def symbolic(self) -> sympy.Matrix:
        out = sympy.eye(self.n)
        out[self.i, self.j] = sympy.sympify(self.entry)
        return out


def E(i: int, j: int, entry, n: int = 2) -> ElementaryFactor:
    """Factor ``E_ij(entry)`` with 1-based positions, as written in formulas."""
    return ElementaryFactor(n, i - 1, j - 1, entry)


@dataclass(frozen=True)
class FactorWord:
    """Ordered product of elementary factors of common size (left to right)."""

    factors: tuple
    n: int

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if any(f.n != self.n for f in self.factors):
            raise ValueError("factors must share the matrix size")

    def __len__(self):
        return len(self.factors)

    def product(self, w=None) -> np.ndarray:
        out = np.eye(self.n, dtype=complex)
        for f in self.factors:
            out[:, f.j] += complex(f.value(w)) * out[:, f.i]
        return out

    def exact_product(self) -> list:
        out = [[Fraction(int(r == c)) for c in range(self.n)] for r in range(self.n)]
        for f in self.factors:
            e = Fraction(f.entry)
            for r in range(self.n):
                out[r][f.j] += out[r][f.i] * e
        return out

    def symbolic_product(self) -> sympy.Matrix:
        out = sympy.eye(self.n)
        for f in self.factors:
            out = out * f.symbolic()
        return out.applyfunc(sympy.cancel)

    def labels(self) -> list[str]:
        return [f"{f.label}({f.entry})" for f in self.factors]


def _det_exact(A: list) -> Fraction:
    A = [row[:] for row in A]
    n = len(A)
    det = Fraction(1)
    for c in range(n):
        p = next((r for r in range(c, n) if A[r][c] != 0), None)
        if p is None:
            return Fraction(0)
        if p != c:
            A[c], A[p] = A[p], A[c]
            det = -det
        det *= A[c][c]
        for r in range(c + 1, n):
            m = A[r][c] / A[c][c]
            for k in range(c, n):
                A[r][k] -= m * A[c][k]
    return det


REFINE_PASSES = 4


def factor_constant(A, rational: bool = False) -> FactorWord:
    """Write ``A`` in SL_n as a product of elementary unipotent factors.

    Gauss-Jordan elimination by row additions reduces ``A`` to a diagonal
    matrix; a zero (in float mode: a smaller than some lower entry) pivot is
    first replaced by adding a lower row.  The diagonal part is then split
    into 2x2 blocks ``diag(a, 1/a)`` written as five-factor words.  In float
    mode the near-identity remainder ``word^-1 A`` is factored again and
    appended while that improves the recomposition.
    """
    word = _eliminate(A, rational)
    if rational:
        return word
    A = np.array(A, dtype=complex)
    err = np.abs(word.product() - A).max()
    for _ in range(REFINE_PASSES):
        if err == 0:
            break
        inv = FactorWord(tuple(f.inverse() for f in reversed(word.factors)), word.n)
        rest = inv.product() @ A
        rest /= np.linalg.det(rest) ** (1.0 / word.n)
        cand = FactorWord(word.factors + _eliminate(rest, False, check=False).factors, word.n)
        cand_err = np.abs(cand.product() - A).max()
        if cand_err >= err:
            break
        word, err = cand, cand_err
    return word


def _eliminate(A, rational: bool, check: bool = True) -> FactorWord:
    if rational:
        M = [[Fraction(x) for x in row] for row in A]
        n = len(M)
        if any(len(row) != n for row in M):
            raise ValueError("matrix must be square")
        det = _det_exact(M)
        if det != 1:
            raise NotSL(f"determinant is {det}, not 1")
        rows = M
    else:
        M = np.array(A, dtype=complex)
        n = M.shape[0]
        if M.shape != (n, n):
            raise ValueError("matrix must be square")
        det = np.linalg.det(M)
        if check and not abs(det - 1) < DET_TOL:
            raise NotSL(f"determinant is {det}, not 1")
        rows = M
    ops: list[tuple[int, int, object]] = []

    def add(i, j, c):
        # row_i += c * row_j
        if c == 0:
            return
        if rational:
            for k in range(n):
                rows[i][k] += c * rows[j][k]
        else:
            rows[i] += c * rows[j]
        ops.append((i, j, c))

    for c in range(n):
        col = [rows[r][c] for r in range(n)]
        below = col[c + 1:]
        if below:
            if rational:
                if col[c] == 0:
                    add(c, c + 1 + next(i for i, x in enumerate(below) if x != 0), Fraction(1))
            else:
                r = c + 1 + int(np.argmax(np.abs(below)))
                if abs(col[c]) < abs(col[r]):
                    add(c, r, 1.0 if abs(col[c] + col[r]) >= abs(col[c] - col[r]) else -1.0)
        p = rows[c][c]
        for r in range(n):
            if r != c:
                add(r, c, -rows[r][c] / p)
    # rows now diagonal; ops applied on the left give A = inv(ops) * D
    factors = [ElementaryFactor(n, i, j, -c) for i, j, c in ops]
    diag = [rows[r][r] for r in range(n)]
    acc = Fraction(1) if rational else 1.0
    for c in range(n - 1):
        acc = acc * diag[c]
        if acc != 1:
            block = whitehead_word(acc).factors
            factors.extend(ElementaryFactor(n, f.i + c, f.j + c, f.entry) for f in block)
    return FactorWord(tuple(factors), n)


def whitehead_word(a) -> FactorWord:
    """``E12(a) E21(-1/a) E12(a-1) E21(1) E12(-1)``, whose product is ``diag(a, 1/a)``."""
    return FactorWord((E(1, 2, a), E(2, 1, -1 / a), E(1, 2, a - 1), E(2, 1, 1), E(1, 2, -1)), 2)


def _zeros_and_poles(a: sympy.Expr) -> list[complex]:
    num, den = sympy.fraction(sympy.together(a))
    out = []
    for part in (num, den):
        if part.free_symbols:
            out.extend(complex(r) for r in sympy.Poly(part, W).nroots())
    return out


def factor_diagonal_family(a, center: complex = 1.0, radius: float = 1.0) -> FactorWord:
    """Whitehead word for ``diag(a(w), 1/a(w))``, checked by symbolic multiplication.

    ``a`` must be a rational function of ``w`` without zeros or poles in the
    open disc of the given center and radius.
    """
    a = sympy.sympify(a)
    bad = [z for z in _zeros_and_poles(a) if abs(z - center) < radius]
    if not a.free_symbols and a == 0:
        raise DomainVanishing("a vanishes identically")
    if bad:
        raise DomainVanishing(f"a has zeros or poles at {bad} inside the domain")
    word = whitehead_word(a)
    diff = (word.symbolic_product() - sympy.diag(a, 1 / a)).applyfunc(sympy.simplify)
    if diff != sympy.zeros(2, 2):
        raise AssertionError("word product does not simplify to the diagonal target")
    return word


# ---------------------------------------------------------------------------
# series at w = 1


@dataclass(frozen=True)
class SeriesAt1:
    """Truncated power series in ``(w - 1)`` up to ``order`` inclusive."""

    coeffs: tuple
    order: int

    def __post_init__(self):
        c = list(self.coeffs)[: self.order + 1]
        c += [0] * (self.order + 1 - len(c))
        object.__setattr__(self, "coeffs", tuple(c))

    @classmethod
    def constant(cls, c, order: int) -> "SeriesAt1":
        return cls((c,), order)

    @classmethod
    def from_expr(cls, expr, order: int) -> "SeriesAt1":
        """Taylor coefficients at ``w = 1`` of a rational function; exact for rational input."""
        num, den = sympy.fraction(sympy.together(sympy.sympify(expr)))
        a, b = _shift_to_1(num, order), _shift_to_1(den, order)
        if b[0] == 0:
            raise ValueError("expression is not holomorphic at w = 1")
        out = []
        for m in range(order + 1):
            acc = a[m] - sum(b[j] * out[m - j] for j in range(1, m + 1))
            out.append(acc / b[0])
        return cls(tuple(out), order)

    def __add__(self, other: "SeriesAt1") -> "SeriesAt1":
        return SeriesAt1(tuple(a + b for a, b in zip(self.coeffs, other.coeffs)), min(self.order, other.order))

    def __mul__(self, other: "SeriesAt1") -> "SeriesAt1":
        order = min(self.order, other.order)
        out = [0] * (order + 1)
        for i, a in enumerate(self.coeffs[: order + 1]):
            for j in range(order + 1 - i):
                out[i + j] += a * other.coeffs[j]
        return SeriesAt1(tuple(out), order)


def _to_number(c):
    c = sympy.nsimplify(c) if isinstance(c, sympy.Float) else c
    if c.is_Rational:
        return Fraction(int(c.p), int(c.q))
    return complex(c)


def _shift_to_1(poly_expr, order: int) -> list:
    """Coefficients of ``(w - 1)^m``, m <= order, of a polynomial in ``w``."""
    coeffs = [_to_number(c) for c in sympy.Poly(poly_expr, W).all_coeffs()]
    out = []
    for _ in range(order + 1):
        # synthetic division by (w - 1): remainder is the next Taylor coefficient
        quotient, acc = [], 0
        for c in coeffs:
            acc = acc + c
            quotient.append(acc)
        out.append(quotient.pop() if quotient else 0)
        coeffs = quotient
    return out


def _series_matrix_product(word: FactorWord, order: int) -> list:
    n = word.n
    one, zero = SeriesAt1.constant(Fraction(1), order), SeriesAt1.constant(Fraction(0), order)
    P = [[one if r == c else zero for c in range(n)] for r in range(n)]
    for f in word.factors:
        g = SeriesAt1.from_expr(f.entry, order)
        for r in range(n):
            P[r][f.j] = P[r][f.j] + P[r][f.i] * g
    return P


@dataclass(frozen=True)
class ObstructionVerdict:
    compatible: bool
    product_coeff: object
    target_coeff: object
    structural: bool
    certificate: str

    @property
    def verdict(self) -> str:
        return "Compatible" if self.compatible else "Incompatible"


def obstruction_check(word: FactorWord, target, order: int = 2) -> ObstructionVerdict:
    """Compare the ``(w-1)^1`` coefficient of the (2,2) entry of ``word`` with ``target``.

    Every factor entry must vanish at ``w = 1`` and be holomorphic there; the
    product's coefficient is then exactly 0, so a target whose (2,2) entry has
    a nonzero linear coefficient is out of reach.
    """
    if word.n != 2:
        raise ValueError("the obstruction concerns 2x2 words")
    offending = []
    for pos, f in enumerate(word.factors):
        try:
            s = SeriesAt1.from_expr(f.entry, 0)
        except ValueError:
            offending.append(pos)
            continue
        if s.coeffs[0] != 0:
            offending.append(pos)
    if offending:
        raise PreconditionViolated(f"factors {offending} do not vanish holomorphically at w = 1",
                                   offending=offending)
    P = _series_matrix_product(word, order)
    got = P[1][1].coeffs[1]
    T = sympy.Matrix(target)
    want = SeriesAt1.from_expr(T[1, 1], order).coeffs[1]
    compatible = got == want
    rel = "=" if compatible else "≠"
    return ObstructionVerdict(compatible, got, want, got == 0, f"(w−1)¹ coefficient {got} {rel} {want}")


# ---------------------------------------------------------------------------
# rank of the last-row projection


def psi_matrix(z: Sequence[complex]) -> np.ndarray:
    """Alternating product ``E21(z1) E12(z2) E21(z3) ...``."""
    out = np.eye(2, dtype=complex)
    for m, x in enumerate(z):
        f = E(2, 1, x) if m % 2 == 0 else E(1, 2, x)
        out = out @ f.matrix()
    return out


@dataclass(frozen=True)
class RankReport:
    M: int
    rank: int
    singular_values: np.ndarray
    on_critical_set: bool


def psi_rank(M: int, z, h: float = PSI_STEP) -> RankReport:
    """Numerical rank of the 2 x M Jacobian of ``z -> last row of psi(z)``."""
    if M < 2:
        raise ValueError("need M >= 2")
    z = np.asarray(z, dtype=complex).reshape(-1)
    if z.shape[0] != M:
        raise ValueError(f"expected a point of C^{M}")
    J = np.empty((2, M), dtype=complex)
    for m in range(M):
        e = np.zeros(M)
        e[m] = h
        J[:, m] = (psi_matrix(z + e)[1] - psi_matrix(z - e)[1]) / (2 * h)
    s = np.linalg.svd(J, compute_uv=False)
    rank = int(np.sum(s > PSI_RTOL * s[0])) if s[0] > 0 else 0
    return RankReport(M, rank, s, bool(np.all(z[: M - 1] == 0)))
