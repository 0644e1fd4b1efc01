"""
Two chained pools: a y/x pool (x, y1) and a z/y pool (y2, z).

Buying z with x routes x -> y -> z and drags the y price up with it; selling
z for x routes z -> y -> x.  This module compares those coupled trades against
a decoupled baseline in which the y/x pool is infinitely deep, and expands the
four-reserve state transition around a trade to second order.

Drift coordinates:
  * purchase metrics are indexed by mu_y, the y-price drift on the y/x pool;
  * liquidation metrics are indexed by mu_y measured on the z/y pool (the
    y price in z units rising as z is sold into it).

Every metric is computed by running the single-pool primitives (inverse drift,
swaps, marginal prices, depths).  Constant-product closed forms for the
compound swaps and transmissions are used when both pools are constant
product; the remaining closed forms sit at the bottom as cross-checks.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

from .cfmm_core import (
    CONSTANT_PRODUCT,
    ConstantProduct,
    DomainError,
    InvariantKind,
    PoolState,
    _require_amount,
    _require_drift,
    input_for_drift,
    marginal_depth,
    marginal_depth_slope,
    marginal_exec_price,
    quote_drift,
    spot_price,
    swap_exact_in,
)

MAX_D_MU = 0.1
INDICATOR_REGIME_FRACTION = 0.5


class OutOfRegimeWarning(UserWarning):
    """Indicator evaluated beyond the small-trade regime it is derived for."""


@dataclass(frozen=True)
class CoupledState:
    x: float
    y1: float
    y2: float
    z: float
    gamma1: float = 1.0
    gamma2: float = 1.0
    kind1: InvariantKind = CONSTANT_PRODUCT
    kind2: InvariantKind = CONSTANT_PRODUCT

    def __post_init__(self):
        # PoolState validates reserves and discount factors
        self.pool1, self.pool2  # noqa: B018

    @classmethod
    def from_fees(cls, x, y1, y2, z, fee1, fee2, kind1=CONSTANT_PRODUCT, kind2=CONSTANT_PRODUCT):
        return cls(x, y1, y2, z, 1.0 - fee1, 1.0 - fee2, kind1, kind2)

    @classmethod
    def from_pools(cls, pool1: PoolState, pool2: PoolState) -> "CoupledState":
        return cls(
            pool1.reserve_base, pool1.reserve_quote, pool2.reserve_base, pool2.reserve_quote,
            pool1.gamma, pool2.gamma, pool1.kind, pool2.kind,
        )

    @property
    def pool1(self) -> PoolState:
        """The y/x pool: base x, quote y1."""
        return PoolState(self.x, self.y1, self.gamma1, self.kind1)

    @property
    def pool2(self) -> PoolState:
        """The z/y pool: base y2, quote z."""
        return PoolState(self.y2, self.z, self.gamma2, self.kind2)

    @property
    def constant_product(self) -> bool:
        return isinstance(self.kind1, ConstantProduct) and isinstance(self.kind2, ConstantProduct)

    def as_dict(self) -> dict:
        return {
            "x": self.x, "y1": self.y1, "y2": self.y2, "z": self.z,
            "gamma1": self.gamma1, "gamma2": self.gamma2,
            "kind1": self.kind1.name, "kind2": self.kind2.name,
        }


# Reference scenario: most y sits in the y/x pool, 3% fees on both pools.
CASE_STUDY = CoupledState(x=1e7, y1=4.5e8, y2=7.2e7, z=1e9, gamma1=0.97, gamma2=0.97)


@dataclass(frozen=True)
class MetricsSample:
    mu_y: float
    trade_size: float
    value_discrepancy: float
    indicator: Optional[float]
    transmitted_drift: float
    marginal_output: float
    curvature_compound: float
    second_order: float
    kappa_y: float
    kappa_z_or_x: float
    depth_marg_y: float


@dataclass(frozen=True)
class ExpansionReport:
    mu_y: float
    d_mu: float
    order1: float
    order2: float
    curvature_term: float
    chain_term: float
    exact_delta: float
    predicted_delta: float
    residual: float

    @property
    def marginal_output(self) -> float:
        """Output received for the extra drift, -exact_delta."""
        return -self.exact_delta


class PurchaseCurvature(NamedTuple):
    kappa_y: float
    kappa_z: float
    a2: float


class LiquidationCurvature(NamedTuple):
    kappa_y: float
    kappa_x: float
    b2: float


@dataclass(frozen=True)
class PurchaseValuation:
    """Both purchase scenarios at one drift, valued in x."""

    mu_y: float
    delta_x: float
    y_coupled: float
    y_decoupled: float
    z_coupled: float
    z_decoupled: float
    intermediate_discrepancy: float
    value_coupled: float
    value_decoupled: float

    @property
    def value_discrepancy(self) -> float:
        return self.value_coupled - self.value_decoupled


@dataclass(frozen=True)
class LiquidationValuation:
    mu_y: float
    gamma_z: float
    y_received: float
    x_received: float
    x_decoupled: float

    @property
    def value_discrepancy(self) -> float:
        return self.x_received - self.x_decoupled


def _require_step(d_mu: float) -> float:
    d_mu = float(d_mu)
    if not (0.0 < d_mu <= MAX_D_MU):
        raise DomainError(f"d_mu must lie in (0, {MAX_D_MU}], got {d_mu!r}")
    return d_mu


# ---------------------------------------------------------------------------
# Purchase: x -> y -> z
# ---------------------------------------------------------------------------


def _after_purchase(state: CoupledState, delta: float, moved_y: float, y1_rest: float, z_rest: float) -> CoupledState:
    return replace(state, x=state.x + delta, y1=y1_rest, y2=state.y2 + moved_y, z=z_rest)


def purchase_compound(state: CoupledState, delta_x: float) -> tuple[float, CoupledState]:
    """z received for ``delta_x`` routed through both pools, and the post-trade state.

    The post-trade state is the purchase transition: x gains the full input,
    y moves from the y/x pool into the z/y pool, z leaves.
    """
    delta = _require_amount(delta_x, "delta_x")
    if delta == 0.0:
        return 0.0, state
    g1, g2 = state.gamma1, state.gamma2
    if state.constant_product:
        x, y1, y2, z = state.x, state.y1, state.y2, state.z
        den = x * y2 + (y2 + g2 * y1) * g1 * delta
        moved = y1 * g1 * delta / (x + g1 * delta)
        z_out = y1 * z * g2 * g1 * delta / den
        y1_rest = y1 * x / (x + g1 * delta)
        z_rest = z * y2 * (x + g1 * delta) / den
    else:
        leg1 = swap_exact_in(state.pool1, delta)
        leg2 = swap_exact_in(state.pool2, leg1.amount_out)
        moved, z_out = leg1.amount_out, leg2.amount_out
        y1_rest, z_rest = leg1.post_state.reserve_quote, leg2.post_state.reserve_quote
    return z_out, _after_purchase(state, delta, moved, y1_rest, z_rest)


def transition_purchase(state: CoupledState, delta_x: float) -> CoupledState:
    return purchase_compound(state, delta_x)[1]


def purchase_decoupled(state: CoupledState, delta_x: float) -> float:
    """z received if the y/x pool were infinitely deep (y bought at pre-trade spot)."""
    delta = _require_amount(delta_x, "delta_x")
    y_in = state.gamma1 * delta / spot_price(state.pool1, "quote")
    return swap_exact_in(state.pool2, y_in).amount_out


def purchase_valuation(state: CoupledState, mu_y: float) -> PurchaseValuation:
    mu = _require_drift(mu_y, "mu_y")
    p1, p2 = state.pool1, state.pool2
    py = spot_price(p1, "quote")
    delta = input_for_drift(p1, mu)
    if delta == 0.0:
        return PurchaseValuation(mu, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    y_c = swap_exact_in(p1, delta).amount_out
    y_d = p1.gamma * delta / py
    z_c = swap_exact_in(p2, y_c).amount_out
    z_d = swap_exact_in(p2, y_d).amount_out
    py_post = py * (mu + 1.0)
    # each basket at the z price its own trade leaves behind
    pz_c = p2.gamma / marginal_exec_price(p2, y_c)
    pz_d = p2.gamma / marginal_exec_price(p2, y_d)
    return PurchaseValuation(
        mu_y=mu,
        delta_x=delta,
        y_coupled=y_c,
        y_decoupled=y_d,
        z_coupled=z_c,
        z_decoupled=z_d,
        intermediate_discrepancy=py_post * y_c - p1.gamma * delta,
        value_coupled=pz_c * py_post * z_c,
        value_decoupled=pz_d * py * z_d,
    )


def value_discrepancy_purchase(state: CoupledState, mu_y: float) -> float:
    """Coupled minus decoupled z basket value, in x, at y-drift ``mu_y``."""
    return purchase_valuation(state, mu_y).value_discrepancy


def indicator_mu_limit(state: CoupledState) -> float:
    """Largest mu_y whose entry trade stays within half of P_y * y1."""
    p1 = state.pool1
    return quote_drift(p1, INDICATOR_REGIME_FRACTION * spot_price(p1, "quote") * state.y1)


def inflation_indicator(state: CoupledState, mu_y: float, strict: bool = False) -> float:
    """Positive for inflationary purchases, negative for deflationary, zero at parity.

    Beyond the small-trade regime (entry size above half of P_y * y1) this
    warns with :class:`OutOfRegimeWarning`, or raises when ``strict``.
    """
    mu = _require_drift(mu_y, "mu_y")
    if mu == 0.0:
        return 0.0
    p1, p2 = state.pool1, state.pool2
    py = spot_price(p1, "quote")
    delta = input_for_drift(p1, mu)
    if delta > INDICATOR_REGIME_FRACTION * py * state.y1:
        msg = f"mu_y={mu} needs an entry trade of {delta:g} x, beyond the indicator regime"
        if strict:
            raise DomainError(msg)
        warnings.warn(msg, OutOfRegimeWarning, stacklevel=2)
    y_c = swap_exact_in(p1, delta).amount_out
    y_d = p1.gamma * delta / py
    z_ratio = swap_exact_in(p2, y_d).amount_out / swap_exact_in(p2, y_c).amount_out
    slope_ratio = marginal_exec_price(p2, y_c) / marginal_exec_price(p2, y_d)
    return mu + 1.0 - z_ratio * slope_ratio


def drift_transmission_purchase(state: CoupledState, mu_y: float) -> float:
    """z-price drift on the z/y pool caused by the purchase that moves y by ``mu_y``."""
    mu = _require_drift(mu_y, "mu_y")
    if state.constant_product:
        u = math.sqrt(mu + 1.0)
        w = state.gamma2 * state.y1 * (mu / (u * (u + 1.0))) / state.y2
        return w * (2.0 + w)
    y_c = swap_exact_in(state.pool1, input_for_drift(state.pool1, mu)).amount_out
    return quote_drift(state.pool2, y_c)


def transmission_bound_purchase(state: CoupledState) -> float:
    """z drift from depositing the entire y1 reserve into the z/y pool."""
    return quote_drift(state.pool2, state.y1)


class _PurchasePoint(NamedTuple):
    delta: float
    y_moved: float
    mu_z: float
    depth_y: float
    depth_y_slope: float
    depth_z: float
    py: float
    pz: float


def _purchase_point(state: CoupledState, mu: float) -> _PurchasePoint:
    p1, p2 = state.pool1, state.pool2
    delta = input_for_drift(p1, mu)
    y_moved = swap_exact_in(p1, delta).amount_out
    mu_z = quote_drift(p2, y_moved)
    return _PurchasePoint(
        delta=delta,
        y_moved=y_moved,
        mu_z=mu_z,
        depth_y=marginal_depth(p1, mu),
        depth_y_slope=marginal_depth_slope(p1, mu),
        # z/y depth at the drift left by the deposited y
        depth_z=marginal_depth(p2, mu_z),
        py=spot_price(p1, "quote"),
        pz=spot_price(p2, "quote"),
    )


def _purchase_curvature(state: CoupledState, mu: float, pt: _PurchasePoint) -> PurchaseCurvature:
    g1, g2 = state.gamma1, state.gamma2
    py_post, pz_post = pt.py * (mu + 1.0), pt.pz * (pt.mu_z + 1.0)
    kappa_y = g1 / (pt.py * (mu + 1.0) ** 2 * pt.depth_y)
    kappa_z = g2 / (pt.pz * (pt.mu_z + 1.0) ** 2 * pt.depth_z)
    # second-leg curvature enters through the square of the first-leg marginal price, g1/P_y'
    a2 = -0.5 * (kappa_y * g2 / pz_post + kappa_z * g1**2 / py_post**2)
    return PurchaseCurvature(kappa_y, kappa_z, a2)


def compound_curvature_purchase(state: CoupledState, mu_y: float) -> PurchaseCurvature:
    """Per-pool trade curvatures and a2 = (1/2) d^2(z out)/d(delta)^2; -2*a2 is the compound curvature."""
    mu = _require_drift(mu_y, "mu_y")
    return _purchase_curvature(state, mu, _purchase_point(state, mu))


def marginal_output_purchase(state: CoupledState, mu_y: float, d_mu: float) -> ExpansionReport:
    """Second-order expansion of the z reserve change for ``d_mu`` extra y drift.

    ``order2`` is the full second Taylor coefficient in drift space: the pool
    curvature part (-a2 * D_y^2) plus the term from the drift dependence of
    the marginal depth (d(delta)/d(mu) is not constant).
    """
    mu = _require_drift(mu_y, "mu_y")
    d_mu = _require_step(d_mu)
    pt = _purchase_point(state, mu)
    curv = _purchase_curvature(state, mu, pt)
    py_post, pz_post = pt.py * (mu + 1.0), pt.pz * (pt.mu_z + 1.0)
    order1 = -state.gamma1 * state.gamma2 / (pz_post * py_post) * pt.depth_y
    curvature_term = -curv.a2 * pt.depth_y**2
    chain_term = 0.5 * order1 * pt.depth_y_slope / pt.depth_y
    order2 = curvature_term + chain_term
    before = transition_purchase(state, pt.delta)
    after = transition_purchase(state, input_for_drift(state.pool1, mu + d_mu))
    exact = after.z - before.z
    predicted = order1 * d_mu + order2 * d_mu**2
    return ExpansionReport(mu, d_mu, order1, order2, curvature_term, chain_term, exact, predicted, exact - predicted)


def purchase_metrics(state: CoupledState, mu_y: float, d_mu: float = 1e-3) -> MetricsSample:
    mu = _require_drift(mu_y, "mu_y")
    pt = _purchase_point(state, mu)
    curv = _purchase_curvature(state, mu, pt)
    expansion = marginal_output_purchase(state, mu, d_mu)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutOfRegimeWarning)
        indicator = inflation_indicator(state, mu)
    return MetricsSample(
        mu_y=mu,
        trade_size=pt.delta,
        value_discrepancy=value_discrepancy_purchase(state, mu),
        indicator=indicator,
        transmitted_drift=drift_transmission_purchase(state, mu),
        marginal_output=-expansion.order1,
        curvature_compound=-2.0 * curv.a2,
        second_order=curv.a2,
        kappa_y=curv.kappa_y,
        kappa_z_or_x=curv.kappa_z,
        depth_marg_y=pt.depth_y,
    )


# ---------------------------------------------------------------------------
# Liquidation: z -> y -> x
# ---------------------------------------------------------------------------


def _after_liquidation(state: CoupledState, gamma_z: float, moved_y: float, x_rest: float, y2_rest: float) -> CoupledState:
    return replace(state, x=x_rest, y1=state.y1 + moved_y, y2=y2_rest, z=state.z + gamma_z)


def liquidate_compound(state: CoupledState, gamma_z: float) -> tuple[float, CoupledState]:
    """x received for selling ``gamma_z`` of z through both pools, and the post-trade state."""
    amount = _require_amount(gamma_z, "gamma_z")
    if amount == 0.0:
        return 0.0, state
    g1, g2 = state.gamma1, state.gamma2
    if state.constant_product:
        x, y1, y2, z = state.x, state.y1, state.y2, state.z
        den = y1 * (z + g2 * amount) + g1 * y2 * g2 * amount
        moved = y2 * g2 * amount / (z + g2 * amount)
        x_out = x * g1 * y2 * g2 * amount / den
        y2_rest = y2 * z / (z + g2 * amount)
        x_rest = x * y1 * (z + g2 * amount) / den
    else:
        leg1 = swap_exact_in(state.pool2.flipped(), amount)
        leg2 = swap_exact_in(state.pool1.flipped(), leg1.amount_out)
        moved, x_out = leg1.amount_out, leg2.amount_out
        y2_rest, x_rest = leg1.post_state.reserve_quote, leg2.post_state.reserve_quote
    return x_out, _after_liquidation(state, amount, moved, x_rest, y2_rest)


def transition_liquidation(state: CoupledState, gamma_z: float) -> CoupledState:
    return liquidate_compound(state, gamma_z)[1]


def liquidation_valuation(state: CoupledState, mu_y: float) -> LiquidationValuation:
    mu = _require_drift(mu_y, "mu_y")
    sell_z, sell_y = state.pool2.flipped(), state.pool1.flipped()
    amount = input_for_drift(sell_z, mu)
    if amount == 0.0:
        return LiquidationValuation(mu, 0.0, 0.0, 0.0, 0.0)
    y_out = swap_exact_in(sell_z, amount).amount_out
    x_out = swap_exact_in(sell_y, y_out).amount_out
    x_dec = state.gamma1 * spot_price(state.pool1, "quote") * y_out
    return LiquidationValuation(mu, amount, y_out, x_out, x_dec)


def value_discrepancy_liquidation(state: CoupledState, mu_y: float) -> float:
    """x received minus the decoupled x (y sold at pre-trade P_y), at z/y drift ``mu_y``."""
    return liquidation_valuation(state, mu_y).value_discrepancy


def drift_transmission_liquidation(state: CoupledState, mu_y: float) -> float:
    """x-price drift on the y/x pool caused by the z sale that moves the z/y pool by ``mu_y``."""
    mu = _require_drift(mu_y, "mu_y")
    if state.constant_product:
        u = math.sqrt(mu + 1.0)
        w = state.gamma1 * state.y2 * (mu / (u * (u + 1.0))) / state.y1
        return w * (2.0 + w)
    sell_z = state.pool2.flipped()
    y_out = swap_exact_in(sell_z, input_for_drift(sell_z, mu)).amount_out
    return quote_drift(state.pool1.flipped(), y_out)


def transmission_bound_liquidation(state: CoupledState) -> float:
    """x drift from selling the entire y2 reserve into the y/x pool."""
    return quote_drift(state.pool1.flipped(), state.y2)


class _LiquidationPoint(NamedTuple):
    amount: float
    y_moved: float
    mu_x: float
    depth_y: float
    depth_y_slope: float
    depth_x: float
    py: float
    pz: float


def _liquidation_point(state: CoupledState, mu: float) -> _LiquidationPoint:
    sell_z, sell_y = state.pool2.flipped(), state.pool1.flipped()
    amount = input_for_drift(sell_z, mu)
    y_moved = swap_exact_in(sell_z, amount).amount_out
    mu_x = quote_drift(sell_y, y_moved)
    return _LiquidationPoint(
        amount=amount,
        y_moved=y_moved,
        mu_x=mu_x,
        depth_y=marginal_depth(sell_z, mu),
        depth_y_slope=marginal_depth_slope(sell_z, mu),
        depth_x=marginal_depth(sell_y, mu_x),
        py=spot_price(state.pool1, "quote"),
        pz=spot_price(state.pool2, "quote"),
    )


def _liquidation_curvature(state: CoupledState, mu: float, pt: _LiquidationPoint) -> LiquidationCurvature:
    g1, g2 = state.gamma1, state.gamma2
    kappa_y = g2 * pt.pz / ((mu + 1.0) ** 2 * pt.depth_y)
    kappa_x = g1 * pt.py / ((pt.mu_x + 1.0) ** 2 * pt.depth_x)
    b2 = -(g2**2 * pt.pz**2 * kappa_x / (mu + 1.0) ** 2 + kappa_y * g1 * pt.py / (pt.mu_x + 1.0))
    return LiquidationCurvature(kappa_y, kappa_x, b2)


def compound_curvature_liquidation(state: CoupledState, mu_y: float) -> LiquidationCurvature:
    """Per-pool sale curvatures and b2 = d^2(x out)/d(gamma_z)^2; -2*b2 is the compound curvature."""
    mu = _require_drift(mu_y, "mu_y")
    return _liquidation_curvature(state, mu, _liquidation_point(state, mu))


def marginal_output_liquidation(state: CoupledState, mu_y: float, d_mu: float) -> ExpansionReport:
    """Second-order expansion of the x reserve change for ``d_mu`` extra z/y drift."""
    mu = _require_drift(mu_y, "mu_y")
    d_mu = _require_step(d_mu)
    pt = _liquidation_point(state, mu)
    curv = _liquidation_curvature(state, mu, pt)
    g1, g2 = state.gamma1, state.gamma2
    order1 = -g1 * g2 * pt.py * pt.pz * pt.depth_y / ((mu + 1.0) * (pt.mu_x + 1.0))
    # b2 is the full second derivative, so no 1/2 is folded into it
    curvature_term = -0.5 * curv.b2 * pt.depth_y**2
    chain_term = 0.5 * order1 * pt.depth_y_slope / pt.depth_y
    order2 = curvature_term + chain_term
    before = transition_liquidation(state, pt.amount)
    after = transition_liquidation(state, input_for_drift(state.pool2.flipped(), mu + d_mu))
    exact = after.x - before.x
    predicted = order1 * d_mu + order2 * d_mu**2
    return ExpansionReport(mu, d_mu, order1, order2, curvature_term, chain_term, exact, predicted, exact - predicted)


def liquidation_metrics(state: CoupledState, mu_y: float, d_mu: float = 1e-3) -> MetricsSample:
    mu = _require_drift(mu_y, "mu_y")
    pt = _liquidation_point(state, mu)
    curv = _liquidation_curvature(state, mu, pt)
    expansion = marginal_output_liquidation(state, mu, d_mu)
    return MetricsSample(
        mu_y=mu,
        trade_size=pt.amount,
        value_discrepancy=value_discrepancy_liquidation(state, mu),
        indicator=None,
        transmitted_drift=drift_transmission_liquidation(state, mu),
        marginal_output=-expansion.order1,
        curvature_compound=-2.0 * curv.b2,
        second_order=curv.b2,
        kappa_y=curv.kappa_y,
        kappa_z_or_x=curv.kappa_x,
        depth_marg_y=pt.depth_y,
    )


# ---------------------------------------------------------------------------
# Constant-product closed forms (cross-checks for the pipelines above)
# ---------------------------------------------------------------------------


def _require_cpmm(state: CoupledState) -> None:
    if not state.constant_product:
        raise DomainError("closed form needs constant-product pools on both legs")


def cpmm_value_discrepancy_purchase(state: CoupledState, mu_y: float) -> float:
    """gamma2 * x * (sqrt(mu + 1) - 1)^2."""
    _require_cpmm(state)
    mu = _require_drift(mu_y, "mu_y")
    s = mu / (math.sqrt(mu + 1.0) + 1.0)
    return state.gamma2 * state.x * s * s


def cpmm_value_discrepancy_liquidation(state: CoupledState, mu_y: float) -> float:
    """-x g1^2 L^2 / (y1 (y1 + g1 L)) with L = y2 (1 - 1/sqrt(mu + 1)) the y received."""
    _require_cpmm(state)
    mu = _require_drift(mu_y, "mu_y")
    u = math.sqrt(mu + 1.0)
    y_out = state.y2 * mu / (u * (u + 1.0))
    g1 = state.gamma1
    return -state.x * g1**2 * y_out**2 / (state.y1 * (state.y1 + g1 * y_out))


def cpmm_inflation_indicator(state: CoupledState, mu_y: float) -> float:
    """u^2 (u - 1) y2 / (u y2 + g2 y1 (u - 1)) with u = sqrt(mu + 1)."""
    _require_cpmm(state)
    mu = _require_drift(mu_y, "mu_y")
    u = math.sqrt(mu + 1.0)
    s = mu / (u + 1.0)
    return u * u * s * state.y2 / (u * state.y2 + state.gamma2 * state.y1 * s)


def cpmm_marginal_depth(pool: PoolState, mu_quote: float) -> float:
    """x / (2 gamma sqrt(mu + 1))."""
    mu = _require_drift(mu_quote, "mu_quote")
    return pool.reserve_base / (2.0 * pool.gamma * math.sqrt(mu + 1.0))
