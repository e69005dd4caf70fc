"""Arithmetic over GF(2^m) and deterministic linear-system solving.

Field elements are plain integers in [0, 2^m) whose bits are polynomial
coefficients over GF(2); packets and matrices are numpy arrays (uint8 for
m <= 8, uint16 above). Multiplication uses log/antilog tables for m <= 8
and carry-less shift-reduce for larger extensions, so the byte-size
fields used in hot coding loops stay fast while bigger fields remain
available for analysis runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nfcsim.errors import RankDeficient, ZeroInverse

# One irreducible polynomial per supported extension degree. 0x11B for
# m=8 keeps packets byte-aligned and matches common RLNC practice.
DEFAULT_POLYNOMIALS = {
    1: 0b11,
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10001001,
    8: 0x11B,
    9: 0b1000010001,
    10: 0b10000001001,
    11: 0b100000000101,
    12: 0b1000001010011,
    13: 0b10000000011011,
    14: 0b100010001000011,
    15: 0b1000000000000011,
    16: 0b10001000000001011,
}

TABLE_DEGREE_LIMIT = 8  # log/antilog tables up to GF(256)


def _poly_mod(a: int, b: int) -> int:
    """Remainder of carry-less polynomial division of a by b."""
    bl = b.bit_length()
    while a.bit_length() >= bl:
        a ^= b << (a.bit_length() - bl)
    return a


def _poly_mulmod(a: int, b: int, mod: int) -> int:
    """Carry-less product of a and b reduced modulo mod."""
    acc = 0
    while b:
        if b & 1:
            acc ^= a
        b >>= 1
        a <<= 1
    return _poly_mod(acc, mod)


def _is_irreducible(poly: int, m: int) -> bool:
    """Exhaustive trial division by every polynomial of degree 1..m//2."""
    if poly & 1 == 0:  # divisible by x
        return False
    for deg in range(1, m // 2 + 1):
        for divisor in range(1 << deg, 1 << (deg + 1)):
            if _poly_mod(poly, divisor) == 0:
                return False
    return True


class FieldSpec:
    """GF(2^m) under a validated irreducible reduction polynomial.

    Stateless after construction; all methods are pure and safe to call
    from any number of threads.
    """

    def __init__(self, m: int = 8, reduction_polynomial: int | None = None):
        if not 1 <= m <= 16:
            raise ValueError(f"extension degree m={m} outside supported range 1..16")
        if reduction_polynomial is None:
            reduction_polynomial = DEFAULT_POLYNOMIALS[m]
        if reduction_polynomial.bit_length() != m + 1:
            raise ValueError(
                f"reduction polynomial 0x{reduction_polynomial:X} does not have degree {m}"
            )
        if not _is_irreducible(reduction_polynomial, m):
            raise ValueError(
                f"reduction polynomial 0x{reduction_polynomial:X} is reducible over GF(2)"
            )
        self.m = m
        self.reduction_polynomial = reduction_polynomial
        self.order = 1 << m
        self.dtype = np.uint8 if m <= TABLE_DEGREE_LIMIT else np.uint16
        self._exp: np.ndarray | None = None
        self._log: np.ndarray | None = None
        if m <= TABLE_DEGREE_LIMIT:
            self._build_tables()

    def __repr__(self) -> str:
        return f"FieldSpec(m={self.m}, reduction_polynomial=0x{self.reduction_polynomial:X})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FieldSpec)
            and other.m == self.m
            and other.reduction_polynomial == self.reduction_polynomial
        )

    def __hash__(self) -> int:
        return hash((self.m, self.reduction_polynomial))

    def _build_tables(self) -> None:
        n = self.order - 1
        if self.m == 1:
            exp = [1]
        else:
            exp = None
            for g in range(2, self.order):
                seq, x = [], 1
                for _ in range(n):
                    seq.append(x)
                    x = _poly_mulmod(x, g, self.reduction_polynomial)
                if x == 1 and len(set(seq)) == n:
                    exp = seq
                    break
            if exp is None:  # cannot happen for a valid field
                raise ValueError("no primitive element found")
        # Doubled antilog table avoids a modulo in the hot multiply path.
        self._exp = np.array(exp + exp, dtype=self.dtype)
        log = np.zeros(self.order, dtype=np.int32)
        for i, v in enumerate(exp):
            log[v] = i
        self._log = log

    # -- scalar operations ------------------------------------------------

    def add(self, a: int, b: int) -> int:
        return a ^ b

    sub = add  # characteristic 2

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        if self._log is not None:
            return int(self._exp[self._log[a] + self._log[b]])
        return _poly_mulmod(a, b, self.reduction_polynomial)

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroInverse("0 has no multiplicative inverse")
        if self._log is not None:
            n = self.order - 1
            return int(self._exp[(n - int(self._log[a])) % n])
        return self.pow(a, self.order - 2)

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    def pow(self, a: int, e: int) -> int:
        acc, base = 1, a
        while e:
            if e & 1:
                acc = self.mul(acc, base)
            base = self.mul(base, base)
            e >>= 1
        return acc

    # -- vectorized operations --------------------------------------------

    def validate_array(self, arr: np.ndarray) -> np.ndarray:
        """Cast to the field dtype after checking every value fits the field."""
        arr = np.asarray(arr)
        if arr.size and (arr.min() < 0 or arr.max() >= self.order):
            raise ValueError(f"array contains values outside GF(2^{self.m})")
        return arr.astype(self.dtype)

    def add_arrays(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.bitwise_xor(x, y)

    def mul_arrays(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Elementwise product with numpy broadcasting."""
        if self._log is not None:
            x = np.asarray(x, dtype=self.dtype)
            y = np.asarray(y, dtype=self.dtype)
            out = self._exp[self._log[x] + self._log[y]]
            zero = (x == 0) | (y == 0)
            return np.where(zero, self.dtype(0), out)
        xb, yb = np.broadcast_arrays(np.asarray(x), np.asarray(y))
        flat = [
            _poly_mulmod(int(a), int(b), self.reduction_polynomial)
            for a, b in zip(xb.ravel(), yb.ravel())
        ]
        return np.array(flat, dtype=self.dtype).reshape(xb.shape)

    def scale(self, c: int, x: np.ndarray) -> np.ndarray:
        if c == 0:
            return np.zeros_like(x)
        if c == 1:
            return x.copy()
        return self.mul_arrays(np.asarray(c, dtype=self.dtype), x)

    def combine(self, coeffs: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """sum_i coeffs[i] * rows[i], the network-coding workhorse.

        coeffs has shape (P,), rows (P, W); returns shape (W,). An empty
        P yields the zero vector.
        """
        rows = np.asarray(rows)
        if rows.shape[0] == 0:
            return np.zeros(rows.shape[1:], dtype=self.dtype)
        if self.m == 1:
            coeffs = np.asarray(coeffs, dtype=self.dtype)
            return np.bitwise_xor.reduce(coeffs[:, None] & rows, axis=0)
        coeffs = np.asarray(coeffs, dtype=self.dtype)
        prods = self.mul_arrays(coeffs[:, None], rows)
        return np.bitwise_xor.reduce(prods, axis=0)

    def random_elements(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Uniform draws over the whole field, zero included."""
        return rng.integers(0, self.order, size=shape, dtype=self.dtype)


@dataclass(frozen=True)
class SolveResult:
    """Outcome of a full-rank solve: the rank and the unique solution."""

    rank: int
    solution: np.ndarray  # (unknowns, payload columns)


def row_reduce(
    field: FieldSpec, a: np.ndarray, b: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray | None, list[int]]:
    """Gauss-Jordan reduction with deterministic first-nonzero pivoting.

    Returns the reduced copy of ``a``, the correspondingly transformed
    ``b``, and the pivot column list (its length is the rank).
    """
    a = np.array(a, dtype=field.dtype, copy=True)
    b = None if b is None else np.array(b, dtype=field.dtype, copy=True)
    n_rows, n_cols = a.shape
    pivots: list[int] = []
    row = 0
    for col in range(n_cols):
        pivot_row = None
        for r in range(row, n_rows):
            if a[r, col]:
                pivot_row = r
                break
        if pivot_row is None:
            continue
        if pivot_row != row:
            a[[row, pivot_row]] = a[[pivot_row, row]]
            if b is not None:
                b[[row, pivot_row]] = b[[pivot_row, row]]
        inv = field.inv(int(a[row, col]))
        if inv != 1:
            a[row] = field.scale(inv, a[row])
            if b is not None:
                b[row] = field.scale(inv, b[row])
        factors = a[:, col].copy()
        factors[row] = 0
        hit = factors != 0
        if hit.any():
            a[hit] = field.add_arrays(
                a[hit], field.mul_arrays(factors[hit, None], a[row])
            )
            if b is not None:
                b[hit] = field.add_arrays(
                    b[hit], field.mul_arrays(factors[hit, None], b[row])
                )
        pivots.append(col)
        row += 1
        if row == n_rows:
            break
    return a, b, pivots


def matrix_rank(field: FieldSpec, a: np.ndarray) -> int:
    _, _, pivots = row_reduce(field, a)
    return len(pivots)


def gaussian_solve(field: FieldSpec, a: np.ndarray, b: np.ndarray) -> SolveResult:
    """Solve a X = b over the field.

    a is (N', N) and b is (N', L): N' collected equations in N unknowns
    with L payload columns. Raises RankDeficient when rank < N, carrying
    the achieved rank.
    """
    a = field.validate_array(a)
    b = field.validate_array(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError("a must be (N', N) and b (N', L) with matching row counts")
    reduced_a, reduced_b, pivots = row_reduce(field, a, b)
    rank = len(pivots)
    n = a.shape[1]
    if rank < n:
        raise RankDeficient(rank, n)
    # Full column rank: pivots land on columns 0..n-1 in order, so the
    # first n transformed rows are the solution.
    del reduced_a
    return SolveResult(rank=rank, solution=reduced_b[:n].copy())
