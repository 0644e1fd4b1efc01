"""
Single-pool CFMM primitives.

A pool holds a base reserve ``x`` and a quote reserve ``y`` and trades base
for quote along the level curve ``phi(x, y) = k``.  A swap of ``delta`` base
credits only ``gamma * delta`` against the invariant, so the output is

    phi(x + gamma*delta, y - out) = k

Everything here is expressed through the level curve ``Y = f(X)`` passing
through the current reserves: the swap output is ``y - f(x + gamma*delta)``
and its n-th derivative in ``delta`` is ``-gamma**n * f^(n)(x + gamma*delta)``.

Conventions:
  * ``spot_price(pool, "base")``  -> P_x = -f'(x)      (y/x for constant product)
  * ``spot_price(pool, "quote")`` -> P_y = 1 / P_x     (x/y for constant product)
  * quote drift  mu_y = P_y(curve state) / P_y - 1, zero at zero trade size
  * base drift   mu_x = 1 - P_x(curve state) / P_x = mu_y / (1 + mu_y)

Reserve accounting: after a trade the pool holds ``x + delta`` (full input,
fee included) while the curve point used for pricing is ``x + gamma*delta``.
Both are returned on :class:`TradeResult`.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Literal, NamedTuple

from scipy.optimize import brentq

Side = Literal["base", "quote"]

ROOT_RTOL = 1e-14
ROOT_MAXITER = 200


class DomainError(ValueError):
    """Input outside the domain of a pool or market operation."""


def _require_amount(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise DomainError(f"{name} must be a finite nonnegative number, got {value!r}")
    return value


# ---------------------------------------------------------------------------
# Invariant kinds
# ---------------------------------------------------------------------------


class InvariantKind(ABC):
    """Shape of a two-asset trading function.

    Subclasses describe the level curve through given reserves.  The only
    required pieces are ``phi`` and ``slopes``; closed-form kinds override the
    rest for precision.
    """

    name: str = "abstract"

    @abstractmethod
    def phi(self, x: float, y: float) -> float: ...

    @abstractmethod
    def slopes(self, x: float, y: float, X: float) -> tuple[float, float, float]:
        """First three derivatives of the level curve through (x, y), at X."""

    @abstractmethod
    def flipped(self) -> "InvariantKind":
        """The same invariant with base and quote exchanged."""

    def remaining(self, x: float, y: float, shift: float) -> float:
        """Quote reserve on the level curve after the base side moves by ``shift``."""
        return _level_point(self.phi, x, y, x + shift)

    def output(self, x: float, y: float, shift: float) -> float:
        return y - self.remaining(x, y, shift)

    def spot(self, x: float, y: float) -> float:
        return -self.slopes(x, y, x)[0]

    def drift(self, x: float, y: float, shift: float) -> float:
        """Quote-price drift when the curve point moves from x to x + shift."""
        if shift == 0.0:
            return 0.0
        return self.slopes(x, y, x)[0] / self.slopes(x, y, x + shift)[0] - 1.0

    def shift_for_drift(self, x: float, y: float, mu: float) -> float:
        if mu == 0.0:
            return 0.0
        target = lambda s: self.drift(x, y, s) - mu  # noqa: E731
        hi = x
        while target(hi) < 0.0:
            hi *= 2.0
            if hi > 1e300:
                raise DomainError(f"drift {mu} not reachable on {self.name} curve")
        return brentq(target, 0.0, hi, rtol=ROOT_RTOL, maxiter=ROOT_MAXITER)


@dataclass(frozen=True)
class ConstantProduct(InvariantKind):
    """phi(x, y) = x * y."""

    name: str = field(default="constant_product", init=False)

    def phi(self, x, y):
        return x * y

    def remaining(self, x, y, shift):
        return y * x / (x + shift)

    def output(self, x, y, shift):
        return y * shift / (x + shift)

    def spot(self, x, y):
        return y / x

    def slopes(self, x, y, X):
        k = x * y
        return -k / X**2, 2.0 * k / X**3, -6.0 * k / X**4

    def drift(self, x, y, shift):
        r = shift / x
        return r * (2.0 + r)

    def shift_for_drift(self, x, y, mu):
        # x * (sqrt(mu + 1) - 1) without the cancellation
        return x * mu / (math.sqrt(mu + 1.0) + 1.0)

    def flipped(self):
        return self


@dataclass(frozen=True)
class WeightedProduct(InvariantKind):
    """phi(x, y) = x**w * y**(1 - w), the two-token weighted pool."""

    weight_base: float = 0.5
    name: str = field(default="weighted_product", init=False)

    def __post_init__(self):
        if not 0.0 < self.weight_base < 1.0:
            raise DomainError(f"weight_base must lie in (0, 1), got {self.weight_base}")

    @property
    def _ratio(self) -> float:
        return self.weight_base / (1.0 - self.weight_base)

    def phi(self, x, y):
        return x**self.weight_base * y ** (1.0 - self.weight_base)

    def remaining(self, x, y, shift):
        return y * math.exp(-self._ratio * math.log1p(shift / x))

    def output(self, x, y, shift):
        return -y * math.expm1(-self._ratio * math.log1p(shift / x))

    def spot(self, x, y):
        return self._ratio * y / x

    def slopes(self, x, y, X):
        r = self._ratio
        f = y * (x / X) ** r
        return -r * f / X, r * (r + 1) * f / X**2, -r * (r + 1) * (r + 2) * f / X**3

    def drift(self, x, y, shift):
        return math.expm1((self._ratio + 1.0) * math.log1p(shift / x))

    def shift_for_drift(self, x, y, mu):
        return x * math.expm1(math.log1p(mu) / (self._ratio + 1.0))

    def flipped(self):
        return WeightedProduct(1.0 - self.weight_base)


@dataclass(frozen=True)
class CustomInvariant(InvariantKind):
    """Arbitrary increasing, quasi-concave ``phi``; curve points by root finding.

    Slopes come from Richardson-extrapolated central differences of the
    level curve, so derivative-based metrics carry roughly 1e-8 relative
    error rather than machine precision.
    """

    fn: Callable[[float, float], float]
    name: str = "custom"

    def phi(self, x, y):
        return self.fn(x, y)

    def slopes(self, x, y, X):
        f = lambda t: _level_point(self.fn, x, y, t)  # noqa: E731

        def central(h):
            f0 = f(X)
            fp1, fm1, fp2, fm2 = f(X + h), f(X - h), f(X + 2 * h), f(X - 2 * h)
            d1 = (fp1 - fm1) / (2 * h)
            d2 = (fp1 - 2 * f0 + fm1) / h**2
            d3 = (fp2 - 2 * fp1 + 2 * fm1 - fm2) / (2 * h**3)
            return d1, d2, d3

        h = 4e-3 * X
        coarse, fine = central(h), central(h / 2)
        return tuple((4.0 * b - a) / 3.0 for a, b in zip(coarse, fine))

    def flipped(self):
        fn = self.fn
        return CustomInvariant(lambda a, b: fn(b, a), name=f"{self.name}_flipped")


def _level_point(phi: Callable[[float, float], float], x: float, y: float, X: float) -> float:
    """Y with phi(X, Y) = phi(x, y), bracketed around y."""
    if X == x:
        return y
    k = phi(x, y)
    g = lambda Y: phi(X, Y) - k  # noqa: E731
    if X > x:
        lo, hi = y, y
        while g(lo) > 0.0:
            lo *= 0.5
            if lo < 1e-300:
                raise DomainError("level curve does not cross zero quote reserve")
    else:
        lo, hi = y, y
        while g(hi) < 0.0:
            hi *= 2.0
            if hi > 1e300:
                raise DomainError("level curve unbounded in the quote reserve")
    if lo == hi:
        return y
    return brentq(g, lo, hi, rtol=ROOT_RTOL, maxiter=ROOT_MAXITER)


CONSTANT_PRODUCT = ConstantProduct()


# ---------------------------------------------------------------------------
# State and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoolState:
    reserve_base: float
    reserve_quote: float
    gamma: float = 1.0
    kind: InvariantKind = CONSTANT_PRODUCT

    def __post_init__(self):
        for name in ("reserve_base", "reserve_quote"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise DomainError(f"{name} must be finite and positive, got {v!r}")
        if not (0.0 < self.gamma <= 1.0):
            raise DomainError(f"gamma must lie in (0, 1], got {self.gamma!r}")

    @classmethod
    def from_fee(cls, reserve_base, reserve_quote, fee, kind=CONSTANT_PRODUCT):
        return cls(reserve_base, reserve_quote, 1.0 - fee, kind)

    @property
    def k(self) -> float:
        return self.kind.phi(self.reserve_base, self.reserve_quote)

    def flipped(self) -> "PoolState":
        """The pool seen from the other side: quote becomes the input asset."""
        return PoolState(self.reserve_quote, self.reserve_base, self.gamma, self.kind.flipped())


@dataclass(frozen=True)
class TradeResult:
    amount_in: float
    amount_out: float
    post_state: PoolState
    curve_state: PoolState
    effective_price: float
    marginal_exec_price: float


@dataclass(frozen=True)
class DriftPoint:
    mu: float
    asset: Side


class SwapDerivatives(NamedTuple):
    d1: float
    d2: float
    d3: float


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def spot_price(pool: PoolState, denominated_in: Side = "base") -> float:
    p_base = pool.kind.spot(pool.reserve_base, pool.reserve_quote)
    if denominated_in == "base":
        return p_base
    if denominated_in == "quote":
        return 1.0 / p_base
    raise DomainError(f"denominated_in must be 'base' or 'quote', got {denominated_in!r}")


def swap_exact_in(pool: PoolState, delta_in: float) -> TradeResult:
    """Sell ``delta_in`` of the base asset into ``pool``."""
    delta = _require_amount(delta_in, "delta_in")
    x, y, g = pool.reserve_base, pool.reserve_quote, pool.gamma
    if delta == 0.0:
        return TradeResult(0.0, 0.0, pool, pool, spot_price(pool, "quote") / g, g * spot_price(pool))
    shift = g * delta
    out = pool.kind.output(x, y, shift)
    rest = pool.kind.remaining(x, y, shift)
    if not (rest > 0.0 and math.isfinite(out)):
        raise DomainError("trade exhausts the output reserve")
    curve = PoolState(x + shift, rest, g, pool.kind)
    post = PoolState(x + delta, rest, g, pool.kind)
    return TradeResult(delta, out, post, curve, delta / out, g * spot_price(curve))


def swap_derivatives(pool: PoolState, delta_in: float) -> SwapDerivatives:
    """d^n(out)/d(delta)^n for n = 1, 2, 3 at ``delta_in``."""
    delta = _require_amount(delta_in, "delta_in")
    g = pool.gamma
    f1, f2, f3 = pool.kind.slopes(pool.reserve_base, pool.reserve_quote, pool.reserve_base + g * delta)
    return SwapDerivatives(-g * f1, -g * g * f2, -g**3 * f3)


def marginal_exec_price(pool: PoolState, delta_in: float) -> float:
    return swap_derivatives(pool, delta_in).d1


def quote_drift(pool: PoolState, delta_in: float) -> float:
    delta = _require_amount(delta_in, "delta_in")
    return pool.kind.drift(pool.reserve_base, pool.reserve_quote, pool.gamma * delta)


def price_drift(pool: PoolState, delta_in: float) -> tuple[DriftPoint, DriftPoint]:
    """Relative drift of both pool prices caused by a trade of ``delta_in``.

    Returns ``(base, quote)``: mu_x = 1 - (out'/(gamma P_x)) and
    mu_y = gamma / (P_y out') - 1, both exactly zero at zero size.
    """
    mu_q = quote_drift(pool, delta_in)
    return DriftPoint(mu_q / (1.0 + mu_q), "base"), DriftPoint(mu_q, "quote")


def _require_drift(mu: float, name: str = "mu") -> float:
    mu = float(mu)
    if not math.isfinite(mu) or mu < 0.0:
        raise DomainError(f"{name} must be a finite nonnegative drift, got {mu!r}")
    return mu


def input_for_drift(pool: PoolState, target_mu_quote: float) -> float:
    """Base input whose trade moves the quote price by ``target_mu_quote``."""
    mu = _require_drift(target_mu_quote, "target_mu_quote")
    return pool.kind.shift_for_drift(pool.reserve_base, pool.reserve_quote, mu) / pool.gamma


def marginal_depth(pool: PoolState, mu_quote: float) -> float:
    """Input absorbed per unit of extra quote drift, d(delta)/d(mu), at ``mu_quote``.

    Evaluated as -(P_y / gamma) * out'^2 / out'' at delta = input_for_drift(mu).
    """
    delta = input_for_drift(pool, mu_quote)
    d = swap_derivatives(pool, delta)
    if not d.d2 < 0.0:
        raise DomainError("marginal depth needs a strictly concave swap curve")
    return -(spot_price(pool, "quote") / pool.gamma) * d.d1**2 / d.d2


def marginal_depth_slope(pool: PoolState, mu_quote: float) -> float:
    """d(marginal depth)/d(mu) at ``mu_quote``; the chain-rule term of a drift-space expansion."""
    delta = input_for_drift(pool, mu_quote)
    d = swap_derivatives(pool, delta)
    if not d.d2 < 0.0:
        raise DomainError("marginal depth needs a strictly concave swap curve")
    c = pool.gamma / spot_price(pool, "quote")
    dmu = -c * d.d2 / d.d1**2
    d2mu = -c * (d.d3 / d.d1**2 - 2.0 * d.d2**2 / d.d1**3)
    return -d2mu / dmu**3


def total_depth(pool: PoolState, mu_quote: float, tol: float | None = None) -> float:
    """Integral of marginal depth over [0, mu_quote] by adaptive Simpson."""
    mu = _require_drift(mu_quote, "mu_quote")
    if mu == 0.0:
        return 0.0
    if tol is None:
        tol = 1e-12 * pool.reserve_base
    return adaptive_simpson(lambda m: marginal_depth(pool, m), 0.0, mu, tol)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float, max_depth: int = 48) -> float:
    def simpson(fa, fm, fb, a, b):
        return (b - a) * (fa + 4.0 * fm + fb) / 6.0

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        err = left + right - whole
        if depth <= 0 or abs(err) <= 15.0 * tol:
            return left + right + err / 15.0
        return recurse(a, m, fa, flm, fm, left, tol / 2, depth - 1) + recurse(
            m, b, fm, frm, fb, right, tol / 2, depth - 1
        )

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)
