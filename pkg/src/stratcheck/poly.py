"""Multivariate polynomials with float coefficients, and polynomial map-germs.

A polynomial is stored as a mapping from exponent tuples to coefficients.
Terms are kept in graded-lexicographic order so that formatting, equality and
hashing are deterministic.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np


class ParseError(ValueError):
    """Malformed polynomial text. ``position`` is the 0-based offset of the problem."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class JetMismatchError(ValueError):
    """Two germs disagree on some monomial of degree <= r."""

    def __init__(self, r: int, offending: list[tuple[int, tuple[int, ...], float, float]]):
        self.r = r
        self.offending = offending
        parts = [
            f"component {j + 1}: {_monomial_text(e)} ({a!r} vs {b!r})"
            for j, e, a, b in offending
        ]
        super().__init__(f"{r}-jets differ: " + "; ".join(parts))


def _grlex_key(exps: tuple[int, ...]) -> tuple:
    # higher total degree first, then lexicographically larger exponent first
    return (-sum(exps), tuple(-e for e in exps))


def _monomial_text(exps: tuple[int, ...], names: Sequence[str] | None = None) -> str:
    factors = []
    for i, e in enumerate(exps):
        if e == 0:
            continue
        name = names[i] if names is not None else f"x{i + 1}"
        factors.append(name if e == 1 else f"{name}^{e}")
    return "*".join(factors) if factors else "1"


class Polynomial:
    """Immutable polynomial in ``nvars`` variables with real coefficients."""

    def __init__(self, terms: Mapping[tuple[int, ...], float] | None, nvars: int):
        if nvars < 1:
            raise ValueError("nvars must be >= 1")
        clean: dict[tuple[int, ...], float] = {}
        for exps, c in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars:
                raise ValueError(f"exponent vector {exps} has length != nvars={nvars}")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            c = float(c)
            if not np.isfinite(c):
                raise ValueError(f"non-finite coefficient for {exps}")
            if c != 0.0:
                clean[exps] = clean.get(exps, 0.0) + c
        self._terms = {e: clean[e] for e in sorted(clean, key=_grlex_key) if clean[e] != 0.0}
        self.nvars = nvars

    # construction helpers
    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls({}, nvars)

    @classmethod
    def constant(cls, c: float, nvars: int) -> "Polynomial":
        return cls({(0,) * nvars: c}, nvars)

    @classmethod
    def variable(cls, i: int, nvars: int) -> "Polynomial":
        """The coordinate function x_{i+1} (0-based ``i``)."""
        exps = [0] * nvars
        exps[i] = 1
        return cls({tuple(exps): 1.0}, nvars)

    @property
    def terms(self) -> dict[tuple[int, ...], float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(e) for e in self._terms), default=-1)

    @property
    def min_degree(self) -> int:
        """Smallest total degree of a term; -1 for the zero polynomial."""
        return min((sum(e) for e in self._terms), default=-1)

    def constant_term(self) -> float:
        return self._terms.get((0,) * self.nvars, 0.0)

    # arithmetic
    def _check(self, other: "Polynomial") -> None:
        if other.nvars != self.nvars:
            raise ValueError(f"nvars mismatch: {self.nvars} vs {other.nvars}")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other, self.nvars)
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        out = dict(self._terms)
        for e, c in other._terms.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial(out, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({e: -c for e, c in self._terms.items()}, self.nvars)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other, self.nvars)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial({e: c * other for e, c in self._terms.items()}, self.nvars)
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        out: dict[tuple[int, ...], float] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial(out, self.nvars)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("exponent must be a non-negative integer")
        result = Polynomial.constant(1.0, self.nvars)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self) -> int:
        return hash((self.nvars, tuple(self._terms.items())))

    def __repr__(self) -> str:
        return f"Polynomial({format_poly(self)!r}, nvars={self.nvars})"

    def __str__(self) -> str:
        return format_poly(self)

    # calculus and truncation
    def derivative(self, i: int) -> "Polynomial":
        out: dict[tuple[int, ...], float] = {}
        for e, c in self._terms.items():
            if e[i] == 0:
                continue
            d = list(e)
            d[i] -= 1
            out[tuple(d)] = out.get(tuple(d), 0.0) + c * e[i]
        return Polynomial(out, self.nvars)

    def truncate(self, r: int) -> "Polynomial":
        """Terms of total degree <= r."""
        return Polynomial({e: c for e, c in self._terms.items() if sum(e) <= r}, self.nvars)

    def extend(self, nvars: int) -> "Polynomial":
        """Same polynomial viewed in more variables (new ones appended)."""
        if nvars < self.nvars:
            raise ValueError("cannot drop variables")
        pad = (0,) * (nvars - self.nvars)
        return Polynomial({e + pad: c for e, c in self._terms.items()}, nvars)

    @cached_property
    def _arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._terms:
            return np.zeros((0, self.nvars), dtype=np.int64), np.zeros(0)
        exps = np.array(list(self._terms), dtype=np.int64)
        coeffs = np.array(list(self._terms.values()))
        return exps, coeffs

    def __call__(self, x) -> float | np.ndarray:
        return evaluate(self, x)


def evaluate(p: Polynomial, x) -> float | np.ndarray:
    """Evaluate ``p`` at a point (shape (n,)) or a batch of points (shape (..., n))."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (p.nvars,):
        raise ValueError(f"point dimension {x.shape[-1:]} does not match nvars={p.nvars}")
    exps, coeffs = p._arrays
    if coeffs.size == 0:
        out = np.zeros(x.shape[:-1])
    else:
        monomials = np.prod(x[..., None, :] ** exps, axis=-1)
        out = monomials @ coeffs
    return float(out) if out.ndim == 0 else out


def gradient(p: Polynomial) -> list[Polynomial]:
    return [p.derivative(i) for i in range(p.nvars)]


class PolyArray:
    """A fixed list of polynomials evaluated together over a shared monomial table."""

    def __init__(self, polys: Sequence[Polynomial], shape: tuple[int, ...] | None = None):
        polys = list(polys)
        if not polys:
            raise ValueError("empty polynomial list")
        nvars = polys[0].nvars
        for q in polys:
            if q.nvars != nvars:
                raise ValueError("nvars mismatch inside PolyArray")
        self.nvars = nvars
        self.shape = tuple(shape) if shape is not None else (len(polys),)
        if int(np.prod(self.shape)) != len(polys):
            raise ValueError("shape does not match number of polynomials")
        table = sorted({e for q in polys for e in q._terms}, key=_grlex_key)
        index = {e: k for k, e in enumerate(table)}
        self._exps = np.array(table, dtype=np.int64).reshape(len(table), nvars)
        self._coeffs = np.zeros((len(table), len(polys)))
        for j, q in enumerate(polys):
            for e, c in q._terms.items():
                self._coeffs[index[e], j] = c

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.nvars,):
            raise ValueError(f"point dimension {x.shape[-1:]} does not match nvars={self.nvars}")
        if self._exps.shape[0] == 0:
            out = np.zeros(x.shape[:-1] + (self._coeffs.shape[1],))
        else:
            monomials = np.prod(x[..., None, :] ** self._exps, axis=-1)
            out = monomials @ self._coeffs
        return out.reshape(x.shape[:-1] + self.shape)


# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<var>x\d+|t)|(?P<op>[-+*^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, nvars: int, allow_t: bool):
        self.text = text
        self.nvars = nvars
        self.allow_t = allow_t
        self.total = nvars + 1 if allow_t else nvars
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message: str, tok=None):
        tok = tok or self.peek()
        raise ParseError(message, tok[2], self.text)

    def parse(self) -> Polynomial:
        if self.peek()[0] == "end":
            self.fail("empty expression")
        p = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return p

    def expr(self) -> Polynomial:
        sign = 1.0
        while self.peek()[1] in "+-" and self.peek()[0] == "op":
            if self.take()[1] == "-":
                sign = -sign
        p = self.term() * sign
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            sign = 1.0 if op == "+" else -1.0
            while self.peek()[0] == "op" and self.peek()[1] in "+-":
                if self.take()[1] == "-":
                    sign = -sign
            p = p + self.term() * sign
        return p

    def term(self) -> Polynomial:
        p = self.power()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            p = p * self.power()
        return p

    def power(self) -> Polynomial:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            tok = self.take()
            if tok[0] != "num" or not tok[1].isdigit():
                self.fail("exponent must be a non-negative integer", tok)
            base = base ** int(tok[1])
        return base

    def atom(self) -> Polynomial:
        tok = self.take()
        kind, value, pos = tok
        if kind == "num":
            return Polynomial.constant(float(value), self.total)
        if kind == "var":
            if value == "t":
                if not self.allow_t:
                    self.fail("variable 't' only allowed in deformation contexts", tok)
                return Polynomial.variable(self.nvars, self.total)
            idx = int(value[1:])
            if not 1 <= idx <= self.nvars:
                self.fail(f"variable {value} out of range x1..x{self.nvars}", tok)
            return Polynomial.variable(idx - 1, self.total)
        if kind == "op" and value == "(":
            p = self.expr()
            if self.peek()[1] != ")":
                self.fail("expected ')'")
            self.take()
            return p
        if kind == "op" and value in "+-":
            # unary sign inside a product, e.g. "2*-x1"
            inner = self.power()
            return -inner if value == "-" else inner
        self.fail(f"unexpected token {value!r}" if kind != "end" else "unexpected end of input", tok)


def parse(text: str, nvars: int, allow_t: bool = False) -> Polynomial:
    """Parse polynomial text in variables ``x1..x<nvars>``.

    With ``allow_t`` the variable ``t`` is accepted and becomes variable
    number ``nvars + 1`` of the result.
    """
    if nvars < 1:
        raise ValueError("nvars must be >= 1")
    return _Parser(text, nvars, allow_t).parse()


def format_poly(p: Polynomial, names: Sequence[str] | None = None) -> str:
    """Canonical text form; ``parse(format_poly(p), p.nvars) == p``."""
    if p.is_zero():
        return "0"
    pieces = []
    for k, (e, c) in enumerate(p.items()):
        sign = "-" if c < 0 else "+"
        a = abs(c)
        mono = _monomial_text(e, names)
        if mono == "1":
            body = repr(a)
        elif a == 1.0:
            body = mono
        else:
            body = f"{a!r}*{mono}"
        if k == 0:
            pieces.append(body if sign == "+" else f"-{body}")
        else:
            pieces.append(f" {sign} {body}")
    return "".join(pieces)


# map-germs


@dataclass(frozen=True)
class MapGerm:
    """A polynomial map (R^n, 0) -> (R^p, 0) with n >= p >= 1."""

    components: tuple[Polynomial, ...]
    nvars: int

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("a map-germ needs at least one component")
        for j, c in enumerate(comps):
            if c.nvars != self.nvars:
                raise ValueError(f"component {j + 1} has nvars={c.nvars}, expected {self.nvars}")
            if c.constant_term() != 0.0:
                raise ValueError(f"component {j + 1} does not vanish at the origin")
        if self.nvars < len(comps):
            raise ValueError(f"need n >= p, got n={self.nvars}, p={len(comps)}")

    @classmethod
    def from_texts(cls, texts: Iterable[str], nvars: int) -> "MapGerm":
        return cls(tuple(parse(s, nvars) for s in texts), nvars)

    @classmethod
    def from_json(cls, data: str | Mapping) -> "MapGerm":
        if isinstance(data, str):
            data = json.loads(data)
        if "nvars" not in data or "components" not in data:
            raise ValueError("germ JSON needs 'nvars' and 'components'")
        return cls.from_texts(data["components"], int(data["nvars"]))

    def to_json(self) -> dict:
        return {"nvars": self.nvars, "components": [format_poly(c) for c in self.components]}

    @property
    def ncomps(self) -> int:
        return len(self.components)

    def __str__(self) -> str:
        return "(" + ", ".join(format_poly(c) for c in self.components) + ")"

    @cached_property
    def _values(self) -> PolyArray:
        return PolyArray(self.components)

    @cached_property
    def _jacobian(self) -> PolyArray:
        polys = [d for c in self.components for d in gradient(c)]
        return PolyArray(polys, shape=(self.ncomps, self.nvars))

    def __call__(self, x) -> np.ndarray:
        """Values, shape (..., p)."""
        return self._values(x)

    def jacobian(self, x) -> np.ndarray:
        """Rows are the component gradients, shape (..., p, n)."""
        return self._jacobian(x)

    def __sub__(self, other: "MapGerm") -> "MapGerm":
        _check_compatible(self, other)
        return MapGerm(tuple(a - b for a, b in zip(self.components, other.components)), self.nvars)

    def __add__(self, other: "MapGerm") -> "MapGerm":
        _check_compatible(self, other)
        return MapGerm(tuple(a + b for a, b in zip(self.components, other.components)), self.nvars)


def _check_compatible(f: MapGerm, g: MapGerm) -> None:
    if f.nvars != g.nvars or f.ncomps != g.ncomps:
        raise ValueError(f"germs differ in shape: (n={f.nvars}, p={f.ncomps}) vs (n={g.nvars}, p={g.ncomps})")


def jet(f: MapGerm, r: int) -> MapGerm:
    """Polynomial representative of the r-jet at 0: keep terms of degree <= r."""
    if r < 1:
        raise ValueError("jet order must be >= 1")
    return MapGerm(tuple(c.truncate(r) for c in f.components), f.nvars)


def jet_mismatches(f: MapGerm, g: MapGerm, r: int) -> list[tuple[int, tuple[int, ...], float, float]]:
    """Monomials of degree <= r on which f and g differ, as (component, exponents, f_coeff, g_coeff)."""
    _check_compatible(f, g)
    out = []
    for j, (a, b) in enumerate(zip(f.components, g.components)):
        ta, tb = a.truncate(r).terms, b.truncate(r).terms
        for e in sorted(set(ta) | set(tb), key=_grlex_key):
            if ta.get(e, 0.0) != tb.get(e, 0.0):
                out.append((j, e, ta.get(e, 0.0), tb.get(e, 0.0)))
    return out


def residuals(f: MapGerm, g: MapGerm, r: int) -> tuple[MapGerm, MapGerm]:
    """Tails ``f - z`` and ``g - z`` where z is the common r-jet of f and g."""
    bad = jet_mismatches(f, g, r)
    if bad:
        raise JetMismatchError(r, bad)
    z = jet(f, r)
    return f - z, g - z
