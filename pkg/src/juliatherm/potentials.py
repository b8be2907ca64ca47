"""Expression language for potentials on Julia sets.

Grammar (EBNF):

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := ("-")? atom ("^" integer)?
    atom   := number | "z" | "t" | "dfs" | "dfe"
            | func "(" expr ")" | "(" expr ")"
    func   := "re" | "im" | "abs" | "log" | "exp"

`z` is the evaluation point, `t` a free real parameter bound at evaluation
time, `dfs`/`dfe` the spherical and Euclidean derivative magnitudes of the
ambient map at `z`.  Trees are immutable; printing emits a canonical form
that re-parses to an identical tree.  Intermediate arithmetic is complex;
the final value of a potential must be real (tiny imaginary round-off is
stripped, anything larger is rejected).

Beyond parsed expressions the module provides orbit-weighted combinations
(Birkhoff sums, averaged iterates, transfer functions for co-homology) and
a smooth bump potential used to build zero-integral potentials with a
large supremum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FixedPointInput, ParseError, SingularOrbit
from .sphere import SpherePoint, as_point, chordal_distance, chordal_distance_arrays

_LOG_FLOOR = 1e-300
_REALNESS_RTOL = 1e-9

# -- syntax tree --------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Sym:
    name: str  # one of z, t, dfs, dfe


@dataclass(frozen=True)
class Neg:
    child: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * /
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    fn: str  # re im abs log exp
    arg: object


_FUNCS = ("re", "im", "abs", "log", "exp")
_SYMS = ("z", "t", "dfs", "dfe")


def _prec(node):
    if isinstance(node, BinOp):
        return 1 if node.op in "+-" else 2
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Pow):
        return 4
    return 5  # Num, Sym, Call are atoms


def print_tree(node):
    """Canonical source for a tree; parse(print_tree(x)) == x."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Call):
        return "%s(%s)" % (node.fn, print_tree(node.arg))
    if isinstance(node, Pow):
        base = print_tree(node.base)
        if _prec(node.base) < 5:  # only bare atoms may carry ^
            base = "(%s)" % base
        return "%s^%d" % (base, node.exponent)
    if isinstance(node, Neg):
        inner = print_tree(node.child)
        if _prec(node.child) < 4:  # negation applies to atom^int only
            inner = "(%s)" % inner
        return "-%s" % inner
    if isinstance(node, BinOp):
        p = _prec(node)
        left = print_tree(node.left)
        if _prec(node.left) < p:
            left = "(%s)" % left
        right = print_tree(node.right)
        # same-precedence right operands need parens: the parser folds left
        if _prec(node.right) <= p:
            right = "(%s)" % right
        return "%s%s%s" % (left, node.op, right)
    raise TypeError("not a syntax tree node: %r" % (node,))


# -- lexer / parser -----------------------------------------------------------

_OPS = "+-*/^()"


class _Lexer:
    def __init__(self, source):
        self.src = source
        self.pos = 0
        self.line = 1
        self.col = 0
        self.tokens = []
        self._run()

    def _error(self, message, expected=()):
        raise ParseError(message, line=self.line, column=self.col,
                         expected=expected)

    def _run(self):
        src = self.src
        n = len(src)
        while self.pos < n:
            ch = src[self.pos]
            if ch == "\n":
                self.line += 1
                self.col = 0
                self.pos += 1
                continue
            if ch.isspace():
                self.pos += 1
                self.col += 1
                continue
            if ch == "−":  # typeset minus sign
                ch = "-"
            if ch in _OPS:
                self.tokens.append(("op", ch, self.line, self.col))
                self.pos += 1
                self.col += 1
                continue
            if ch.isdigit() or ch == ".":
                self._number()
                continue
            if ch.isalpha():
                self._ident()
                continue
            self._error("unexpected character %r" % ch)
        self.tokens.append(("eof", "", self.line, self.col))

    def _number(self):
        start = self.pos
        src = self.src
        n = len(src)
        p = self.pos
        while p < n and (src[p].isdigit() or src[p] == "."):
            p += 1
        if p < n and src[p] in "eE":
            q = p + 1
            if q < n and src[q] in "+-":
                q += 1
            if q < n and src[q].isdigit():
                p = q
                while p < n and src[p].isdigit():
                    p += 1
        text = src[start:p]
        try:
            value = float(text)
        except ValueError:
            self._error("malformed number %r" % text, expected=("number",))
        self.tokens.append(("num", value, self.line, self.col))
        self.col += p - start
        self.pos = p

    def _ident(self):
        start = self.pos
        src = self.src
        n = len(src)
        p = self.pos
        while p < n and (src[p].isalnum() or src[p] == "_"):
            p += 1
        name = src[start:p]
        if name not in _FUNCS and name not in _SYMS:
            self._error("unknown name %r" % name,
                        expected=_SYMS + _FUNCS)
        self.tokens.append(("name", name, self.line, self.col))
        self.col += p - start
        self.pos = p


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    @property
    def cur(self):
        return self.tokens[self.i]

    def _error(self, message, expected=()):
        kind, val, line, col = self.cur
        raise ParseError(message, line=line, column=col, expected=expected)

    def _take_op(self, chars):
        kind, val, _, _ = self.cur
        if kind == "op" and val in chars:
            self.i += 1
            return val
        return None

    def parse(self):
        tree = self.expr()
        if self.cur[0] != "eof":
            self._error("trailing input after expression", expected=("end",))
        return tree

    def expr(self):
        node = self.term()
        while True:
            op = self._take_op("+-")
            if op is None:
                return node
            node = BinOp(op, node, self.term())

    def term(self):
        node = self.factor()
        while True:
            op = self._take_op("*/")
            if op is None:
                return node
            node = BinOp(op, node, self.factor())

    def factor(self):
        neg = self._take_op("-") is not None
        node = self.atom()
        if self._take_op("^") is not None:
            kind, val, _, _ = self.cur
            if kind != "num" or float(val) != int(val) or val < 0:
                self._error("exponent must be a nonnegative integer",
                            expected=("integer",))
            self.i += 1
            node = Pow(node, int(val))
        if neg:
            node = Neg(node)
        return node

    def atom(self):
        kind, val, _, _ = self.cur
        if kind == "num":
            self.i += 1
            return Num(float(val))
        if kind == "name":
            self.i += 1
            if val in _SYMS:
                return Sym(val)
            if self._take_op("(") is None:
                self._error("function %r needs parenthesized argument" % val,
                            expected=("(",))
            arg = self.expr()
            if self._take_op(")") is None:
                self._error("unbalanced parenthesis", expected=(")",))
            return Call(val, arg)
        if kind == "op" and val == "(":
            self.i += 1
            node = self.expr()
            if self._take_op(")") is None:
                self._error("unbalanced parenthesis", expected=(")",))
            return node
        self._error("expected a value",
                    expected=("number",) + _SYMS + _FUNCS + ("(",))


def parse_tree(source):
    """Parse source text to a bare syntax tree."""
    return _Parser(_Lexer(source).tokens).parse()


# -- evaluation ---------------------------------------------------------------


def _tree_uses(node, names):
    if isinstance(node, Sym):
        return node.name in names
    if isinstance(node, Num):
        return False
    if isinstance(node, Neg):
        return _tree_uses(node.child, names)
    if isinstance(node, Pow):
        return _tree_uses(node.base, names)
    if isinstance(node, Call):
        return _tree_uses(node.arg, names)
    if isinstance(node, BinOp):
        return _tree_uses(node.left, names) or _tree_uses(node.right, names)
    raise TypeError("not a syntax tree node: %r" % (node,))


def _eval_tree(node, z, fmap, t, clamp):
    if isinstance(node, Num):
        return np.full(z.shape, complex(node.value))
    if isinstance(node, Sym):
        if node.name == "z":
            return z.copy()
        if node.name == "t":
            if t is None:
                raise ValueError("free variable t must be bound at evaluation")
            return np.full(z.shape, complex(t))
        if fmap is None:
            raise ValueError(
                "expression uses %s but no ambient map was supplied" % node.name)
        if node.name == "dfs":
            return fmap.spherical_derivative_array(z).astype(complex)
        return np.abs(fmap.derivative_array(z)).astype(complex)
    if isinstance(node, Neg):
        return -_eval_tree(node.child, z, fmap, t, clamp)
    if isinstance(node, Pow):
        return _eval_tree(node.base, z, fmap, t, clamp) ** node.exponent
    if isinstance(node, Call):
        val = _eval_tree(node.arg, z, fmap, t, clamp)
        if node.fn == "re":
            return val.real.astype(complex)
        if node.fn == "im":
            return val.imag.astype(complex)
        if node.fn == "abs":
            return np.abs(val).astype(complex)
        if node.fn == "exp":
            return np.exp(val)
        # log: clamp the modulus away from zero or refuse
        tiny = np.abs(val) < _LOG_FLOOR
        if tiny.any():
            if not clamp:
                raise SingularOrbit(
                    "log of a vanishing value with clamping disabled")
            val = np.where(tiny, _LOG_FLOOR, val)
        return np.log(val)
    if isinstance(node, BinOp):
        left = _eval_tree(node.left, z, fmap, t, clamp)
        right = _eval_tree(node.right, z, fmap, t, clamp)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        with np.errstate(divide="ignore", invalid="ignore"):
            return left / right
    raise TypeError("not a syntax tree node: %r" % (node,))


def _as_finite_array(z):
    """Normalize scalar/array point input to a complex array + scalar flag."""
    if isinstance(z, SpherePoint):
        if z.infinite:
            raise SingularOrbit("potential evaluation at infinity")
        return np.array([z.value], dtype=complex), True
    arr = np.asarray(z, dtype=complex)
    if arr.ndim == 0:
        return arr.reshape(1), True
    return arr, False


def _realize(values, source):
    if not np.all(np.isfinite(values)):
        raise SingularOrbit(
            "potential %r produced a non-finite value" % source)
    scale = 1.0 + float(np.max(np.abs(values.real))) if values.size else 1.0
    worst = float(np.max(np.abs(values.imag))) if values.size else 0.0
    if worst > _REALNESS_RTOL * scale:
        raise ValueError(
            "potential %r is not real-valued (imaginary part %.3e)"
            % (source, worst))
    return values.real


# -- potential hierarchy ------------------------------------------------------


class Potential:
    """Real-valued function on the sphere, evaluable on point arrays.

    Subclasses implement _values(z, fmap, t, clamp) -> complex array.
    holder_hint is optional (exponent, constant) metadata and is never
    machine-checked.
    """

    holder_hint = None

    def evaluate(self, z, fmap=None, t=None, clamp=True):
        arr, scalar = _as_finite_array(z)
        vals = _realize(self._values(arr, fmap, t, clamp), self.source_text())
        return float(vals[0]) if scalar else vals

    __call__ = evaluate

    def _values(self, z, fmap, t, clamp):
        raise NotImplementedError

    def source_text(self):
        raise NotImplementedError

    def __repr__(self):
        return "%s(%s)" % (type(self).__name__, self.source_text())


class ExprPotential(Potential):
    """A parsed expression tree."""

    def __init__(self, tree, holder_hint=None):
        self.tree = tree
        self.holder_hint = holder_hint

    def _values(self, z, fmap, t, clamp):
        return _eval_tree(self.tree, z, fmap, t, clamp)

    def source_text(self):
        return print_tree(self.tree)

    def uses_map(self):
        return _tree_uses(self.tree, ("dfs", "dfe"))

    def uses_parameter(self):
        return _tree_uses(self.tree, ("t",))

    def __eq__(self, other):
        return isinstance(other, ExprPotential) and self.tree == other.tree

    def __hash__(self):
        return hash(self.tree)


class SumPotential(Potential):
    """Linear combination sum_i c_i * p_i of potentials."""

    def __init__(self, terms, coeffs=None):
        self.terms = tuple(terms)
        self.coeffs = tuple(1.0 for _ in terms) if coeffs is None \
            else tuple(float(c) for c in coeffs)
        if len(self.terms) != len(self.coeffs):
            raise ValueError("one coefficient per term required")

    def _values(self, z, fmap, t, clamp):
        out = np.zeros(z.shape, dtype=complex)
        for c, p in zip(self.coeffs, self.terms):
            out += c * p._values(z, fmap, t, clamp)
        return out

    def source_text(self):
        parts = ["%g*[%s]" % (c, p.source_text())
                 for c, p in zip(self.coeffs, self.terms)]
        return " + ".join(parts) if parts else "0"


class OrbitCombination(Potential):
    """sum_j w_j * base(f^j(z)): Birkhoff sums, averages, transfer terms.

    orbit_map, when given, pins the orbit (and the base's derivative
    symbols) to a fixed map regardless of the map supplied at evaluation
    time; iterate-scaling identities need sums along the original map
    while the surrounding machinery works with an iterate.
    """

    def __init__(self, base, weights, orbit_map=None):
        self.base = base
        self.weights = tuple(float(w) for w in weights)
        self.orbit_map = orbit_map

    def _values(self, z, fmap, t, clamp):
        if not self.weights:
            return np.zeros(z.shape, dtype=complex)
        m = self.orbit_map if self.orbit_map is not None else fmap
        if m is None:
            raise ValueError("orbit-weighted potential needs the ambient map")
        orbit = m.orbit_array(z.reshape(-1), len(self.weights) - 1)
        out = np.zeros(orbit.shape[1], dtype=complex)
        for j, w in enumerate(self.weights):
            if w != 0.0:
                out += w * self.base._values(orbit[j], m, t, clamp)
        return out.reshape(z.shape)

    def source_text(self):
        return "orbit-combination(%s; weights=%s)" % (
            self.base.source_text(), list(self.weights))


class BirkhoffSum(OrbitCombination):
    """base + base(f .) + ... + base(f^(depth-1) .)."""

    def __init__(self, base, depth, orbit_map=None):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        super().__init__(base, (1.0,) * depth, orbit_map=orbit_map)
        self.depth = depth

    def source_text(self):
        return "birkhoff-sum(%s; depth=%d)" % (
            self.base.source_text(), self.depth)


class BumpPotential(Potential):
    """Smooth bump in chordal distance: amplitude at the center, support in
    the disk of the given radius, infinitely flat at the edge."""

    def __init__(self, center, radius, amplitude):
        self.center = as_point(center)
        self.radius = float(radius)
        self.amplitude = float(amplitude)
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")

    def _values(self, z, fmap, t, clamp):
        if self.center.infinite:
            d = 2.0 / np.sqrt(1.0 + np.abs(z) ** 2)
        else:
            d = chordal_distance_arrays(z, np.full(z.shape, self.center.value))
        r = d / self.radius
        out = np.zeros(z.shape, dtype=float)
        inside = r < 1.0
        ri = r[inside]
        out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - ri * ri))
        return out.astype(complex)

    def source_text(self):
        return "bump(center=%s, radius=%g, amplitude=%g)" % (
            self.center, self.radius, self.amplitude)


# -- public operations --------------------------------------------------------


def parse_potential(source, holder_hint=None):
    """Parse source text into a potential; ParseError carries position and
    the expected-token set."""
    return ExprPotential(parse_tree(source), holder_hint=holder_hint)


def random_tree(rng, depth=4):
    """A random syntax tree over the full grammar; printer/parser fuzz."""
    if depth <= 0 or rng.random() < 0.3:
        if rng.random() < 0.45:
            return Num(round(float(rng.uniform(0.0, 10.0)), 3))
        return Sym(_SYMS[int(rng.integers(len(_SYMS)))])
    r = rng.random()
    if r < 0.35:
        return BinOp("+-*/"[int(rng.integers(4))],
                     random_tree(rng, depth - 1),
                     random_tree(rng, depth - 1))
    if r < 0.55:
        return Call(_FUNCS[int(rng.integers(len(_FUNCS)))],
                    random_tree(rng, depth - 1))
    if r < 0.75:
        return Neg(random_tree(rng, depth - 1))
    return Pow(random_tree(rng, depth - 1), int(rng.integers(0, 4)))


ZERO = parse_potential("0")


def geometric_potential(metric="euclidean"):
    """-t * ln of the derivative magnitude, with t left free."""
    return parse_potential("-t*log(%s)" % ("dfe" if metric == "euclidean"
                                           else "dfs"))


def birkhoff_sum(fmap, potential, n, z, t=None, clamp=True):
    """Sum of the potential along the length-n forward orbit of z."""
    if n < 1:
        raise ValueError("depth must be >= 1")
    return BirkhoffSum(potential, n).evaluate(z, fmap=fmap, t=t, clamp=clamp)


def average_iterate(potential, n):
    """The n-averaged potential (1/n) S_n(phi) and the transfer function h
    with (1/n) S_n(phi) = phi + h - h∘f pointwise.

    h = -(1/n) sum_{j=0}^{n-2} (n-1-j) * phi∘f^j.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    avg = OrbitCombination(potential, (1.0 / n,) * n)
    h = OrbitCombination(
        potential, tuple(-(n - 1.0 - j) / n for j in range(n - 1)))
    return avg, h


def cohomologous_counterexample(fmap, h_top, x, tol=1e-9):
    """A potential of the form h - h∘f whose supremum exceeds h_top.

    h is a smooth bump centered at x with radius a third of the distance
    from x to f(x) (so the bump vanishes at f(x)) and amplitude 2*h_top.
    The result integrates to zero against every invariant measure yet has
    sup >= 2*h_top: a zero-pressure-shift potential with a large sup.
    """
    xp = as_point(x)
    fx = fmap(xp)
    sep = chordal_distance(xp, fx)
    if sep <= tol:
        raise FixedPointInput(
            "base point %s is fixed by the map; the bump construction "
            "needs x != f(x)" % xp)
    h = BumpPotential(xp, sep / 3.0, 2.0 * float(h_top))
    phi = SumPotential([h, OrbitCombination(h, (0.0, 1.0))], [1.0, -1.0])
    phi.h = h
    phi.amplitude = 2.0 * float(h_top)
    return phi
