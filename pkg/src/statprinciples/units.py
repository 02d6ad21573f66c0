"""Dimensional bookkeeping for quantities: add like with like, multiply anything,
and only feed dimensionless numbers to log, exp and Box-Cox.

Dimensions are sparse maps from base-dimension name to a rational exponent.
Base names must be registered; the default registry knows ``mass``,
``length``, ``time``, ``count`` and a few named units used in the demos
(``Pg``, ``yr``, ``feet``).  No conversions between bases exist: ``Pg`` and
``mass`` are simply different bases, and adding them is an error.
"""

import math
import re
from fractions import Fraction
from threading import Lock

from . import variability
from .errors import InputError, UnitError

_DEFAULT_BASES = ("mass", "length", "time", "count", "Pg", "yr", "feet")
_registry = list(_DEFAULT_BASES)
_registry_lock = Lock()
_NAME = re.compile(r"[A-Za-z_][A-Za-z_0-9]*\Z")


def register_base(name):
    """Add a custom base dimension; registering an existing name is a no-op."""
    if not _NAME.match(name):
        raise InputError(f"invalid base dimension name {name!r}")
    with _registry_lock:
        if name not in _registry:
            _registry.append(name)


def base_dimensions():
    return tuple(_registry)


class Dimension:
    """Immutable product of base dimensions raised to rational powers."""

    __slots__ = ("_exp",)

    def __init__(self, exponents=None):
        exp = {}
        for name, power in dict(exponents or {}).items():
            if name not in _registry:
                raise UnitError(f"unknown base dimension {name!r}; register it first")
            power = Fraction(power)
            if power != 0:
                exp[name] = power
        object.__setattr__(self, "_exp", tuple(sorted(exp.items(), key=lambda kv: _registry.index(kv[0]))))

    def __setattr__(self, key, value):
        raise AttributeError("Dimension is immutable")

    @classmethod
    def base(cls, name):
        return cls({name: 1})

    @property
    def exponents(self):
        return dict(self._exp)

    def vector(self):
        """Exponents over the registered bases, in registration order."""
        e = self.exponents
        return tuple(e.get(b, Fraction(0)) for b in _registry)

    @property
    def dimensionless(self):
        return not self._exp

    def __mul__(self, other):
        e = self.exponents
        for k, v in other._exp:
            e[k] = e.get(k, 0) + v
        return Dimension(e)

    def __truediv__(self, other):
        return self * other ** -1

    def __pow__(self, power):
        power = Fraction(power)
        return Dimension({k: v * power for k, v in self._exp})

    def inverse(self):
        return self ** -1

    def __eq__(self, other):
        return isinstance(other, Dimension) and self._exp == other._exp

    def __hash__(self):
        return hash(self._exp)

    def __str__(self):
        if not self._exp:
            return "1"
        parts = []
        for k, v in self._exp:
            if v == 1:
                parts.append(k)
            elif v.denominator == 1:
                parts.append(f"{k}^{v}")
            else:
                parts.append(f"{k}^({v})")
        return "*".join(parts)

    def __repr__(self):
        return f"Dimension({str(self)!r})"


DIMENSIONLESS = Dimension()

_DIM_TOKEN = re.compile(r"\s*(?:(?P<op>[*/])|(?P<name>[A-Za-z_][A-Za-z_0-9]*)(?:\^(?P<pow>\(?-?\d+(?:/\d+)?\)?))?|(?P<one>1))")


def parse_dimension(text):
    """Parse ``Pg``, ``Pg/yr^2``, ``Pg*yr^-1``, ``length^(1/2)`` or ``1``.

    Terms are combined left to right: ``a/b*c`` is ``a * c / b``.
    """
    s = text.strip()
    if not s:
        raise InputError("empty dimension string")
    result = DIMENSIONLESS
    pos = 0
    op = "*"
    expect_term = True
    while pos < len(s):
        m = _DIM_TOKEN.match(s, pos)
        if not m or m.end() == pos:
            raise InputError(f"cannot parse dimension {text!r} at position {pos}")
        pos = m.end()
        if m.group("op"):
            if expect_term:
                raise InputError(f"misplaced operator in dimension {text!r}")
            op = m.group("op")
            expect_term = True
            continue
        if not expect_term:
            raise InputError(f"missing operator in dimension {text!r}")
        if m.group("one"):
            term = DIMENSIONLESS
        else:
            name = m.group("name")
            if name not in _registry:
                raise UnitError(f"unknown base dimension {name!r}")
            power = Fraction(m.group("pow").strip("()")) if m.group("pow") else Fraction(1)
            term = Dimension({name: power})
        result = result * term if op == "*" else result / term
        expect_term = False
    if expect_term:
        raise InputError(f"dimension {text!r} ends with an operator")
    return result


def _as_dim(d):
    if isinstance(d, Dimension):
        return d
    if isinstance(d, str):
        return parse_dimension(d)
    raise InputError(f"not a dimension: {d!r}")


class Quantity:
    """A real value carrying a :class:`Dimension`."""

    __slots__ = ("value", "dim")

    def __init__(self, value, dim=DIMENSIONLESS):
        self.value = float(value)
        self.dim = _as_dim(dim)

    def __repr__(self):
        return f"Quantity({self.value!r}, {str(self.dim)!r})"

    def __str__(self):
        return f"{self.value:g}" if self.dim.dimensionless else f"{self.value:g} {self.dim}"

    def __eq__(self, other):
        return isinstance(other, Quantity) and self.value == other.value and self.dim == other.dim

    def __hash__(self):
        return hash((self.value, self.dim))

    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, -_lift(other))

    def __rsub__(self, other):
        return add(_lift(other), -self)

    def __neg__(self):
        return Quantity(-self.value, self.dim)

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __pow__(self, power):
        power = Fraction(power).limit_denominator(1000)
        return Quantity(self.value ** float(power), self.dim ** power)


def _lift(x):
    return x if isinstance(x, Quantity) else Quantity(x)


def add(a, b):
    if a.dim != b.dim:
        raise UnitError(f"cannot add quantities in {a.dim} and {b.dim}")
    return Quantity(a.value + b.value, a.dim)


def mul(a, b):
    return Quantity(a.value * b.value, a.dim * b.dim)


def div(a, b):
    if b.value == 0:
        raise InputError("division by a zero quantity")
    return Quantity(a.value / b.value, a.dim / b.dim)


def transcendental(f, x, lam=None):
    """Apply ``log``, ``exp`` or ``box_cox`` (with ``lam``) to a dimensionless quantity."""
    if not x.dim.dimensionless:
        raise UnitError(f"{f} needs a unit-free argument, got {x.dim}")
    if f == "log":
        if not x.value > 0:
            raise InputError("log of a non-positive number")
        return Quantity(math.log(x.value))
    if f == "exp":
        return Quantity(math.exp(x.value))
    if f == "box_cox":
        if lam is None:
            raise InputError("box_cox needs lambda")
        return Quantity(variability.box_cox(x.value, float(lam)))
    raise InputError(f"unknown function {f!r}")


def regression_units(response_dim, covariate_dims):
    """Dimension of each coefficient so that every term beta_k * x_k has the response's dimension."""
    r = _as_dim(response_dim)
    return [r / _as_dim(d) for d in covariate_dims]


def density_units(variable_dim):
    """A density integrates to a pure number, so it carries the inverse dimension."""
    return _as_dim(variable_dim).inverse()


# ---- expression checker ---------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
                    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))")
_FUNCS = {"log", "exp", "boxcox", "box_cox"}


def _tokenize(text):
    pos, out = 0, []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise InputError(f"unexpected character in {text!r} at position {pos}")
        pos = m.end()
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
    out.append(("end", ""))
    return out


class _Parser:
    """Recursive-descent evaluator.

    expr   := term (('+'|'-') term)*
    term   := jux (('*'|'/') jux)*
    jux    := unary unary*          # juxtaposition multiplies: "5 Pg"
    unary  := '-' unary | power
    power  := atom ('^' exponent)?
    atom   := number | base-name | func '(' expr [',' expr] ')' | '(' expr ')'
    """

    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, value=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            raise InputError(f"expected {value!r}, found {tok[1]!r}")
        self.i += 1
        return tok

    def parse(self):
        q = self.expr()
        if self.peek()[0] != "end":
            raise InputError(f"unexpected {self.peek()[1]!r}")
        return q

    def expr(self):
        q = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            r = self.term()
            q = add(q, r) if op == "+" else add(q, -r)
        return q

    def term(self):
        q = self.jux()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            r = self.jux()
            q = mul(q, r) if op == "*" else div(q, r)
        return q

    def _starts_atom(self):
        kind, val = self.peek()
        return kind in ("num", "name") or val == "("

    def jux(self):
        q = self.unary()
        while self._starts_atom():
            q = mul(q, self.unary())
        return q

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        return self.power()

    def power(self):
        q = self.atom()
        if self.peek()[1] == "^":
            self.take()
            neg = False
            if self.peek()[1] == "-":
                self.take()
                neg = True
            if self.peek()[1] == "(":
                self.take()
                e = self.expr()
                self.take(")")
                if not e.dim.dimensionless:
                    raise UnitError("exponents must be unit-free")
                p = Fraction(e.value).limit_denominator(1000)
            else:
                kind, val = self.take()
                if kind != "num":
                    raise InputError("exponent must be a number")
                p = Fraction(val)
            q = q ** (-p if neg else p)
        return q

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return Quantity(float(val))
        if kind == "name":
            if val in _FUNCS:
                self.take("(")
                arg = self.expr()
                lam = None
                if self.peek()[1] == ",":
                    self.take()
                    lam_q = self.expr()
                    if not lam_q.dim.dimensionless:
                        raise UnitError("Box-Cox power must be unit-free")
                    lam = lam_q.value
                self.take(")")
                name = "box_cox" if val in ("boxcox", "box_cox") else val
                return transcendental(name, arg, lam)
            if val not in _registry:
                raise UnitError(f"unknown unit {val!r}")
            return Quantity(1.0, Dimension.base(val))
        if val == "(":
            q = self.expr()
            self.take(")")
            return q
        raise InputError(f"unexpected {val!r}")


def evaluate(text):
    """Evaluate a unit expression such as ``"(2 Pg/yr) * 3 yr"`` or ``"log(5 Pg)"``."""
    return _Parser(text).parse()
