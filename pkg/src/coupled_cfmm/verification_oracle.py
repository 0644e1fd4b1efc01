"""
Independent numerical oracles for the pool and coupled-market analytics.

The oracles here never call the compound closed forms they check: compound
trades are replayed leg by leg through ``swap_exact_in``, derivatives come
from finite differences, integrals from Gauss-Kronrod quadrature.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Literal, Sequence

import numpy as np
from scipy.integrate import quad

from . import coupled_market as cm
from .cfmm_core import (
    PoolState,
    input_for_drift,
    marginal_depth,
    marginal_exec_price,
    price_drift,
    quote_drift,
    spot_price,
    swap_exact_in,
    total_depth,
)
from .coupled_market import CoupledState

DEFAULT_SEED = 0x5EED
GAMMAS = (1.0, 0.997, 0.97, 0.9)
RESERVE_RANGE = (1e3, 1e12)
EXPANSION_DRIFTS = (0.05, 0.5, 1.5)
HALVING_STEPS = (1e-2, 5e-3, 2.5e-3)
CUBIC_RATIO = 8.0
CUBIC_RATIO_TOL = 0.25  # ratio in [6, 10]

Direction = Literal["purchase", "liquidation"]


class OracleError(ArithmeticError):
    """An oracle evaluation produced a non-finite value."""


@dataclass(frozen=True)
class OracleReport:
    name: str
    max_rel_error: float
    samples: int
    worst_case_input: str
    tolerance: float
    passed: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "passed", self.max_rel_error <= self.tolerance)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "max_rel_error": self.max_rel_error,
            "tolerance": self.tolerance,
            "samples": self.samples,
            "worst_case_input": self.worst_case_input,
        }


# ---------------------------------------------------------------------------
# Primitive oracles
# ---------------------------------------------------------------------------


def fd_derivative(
    f: Callable[[float], float],
    at: float,
    order: int = 1,
    h: float | None = None,
    one_sided: bool = False,
) -> float:
    """Finite-difference derivative with one level of Richardson extrapolation.

    Central differences by default; ``one_sided`` uses the forward
    three-point stencil (first order only) for functions undefined left of
    ``at``.  The default step is max(1e-4*|at|, 1e-7) for first derivatives
    and max(1e-3*|at|, 1e-6) for second derivatives.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if one_sided and order != 1:
        raise ValueError("one-sided stencil is first order only")
    if h is None:
        h = max(1e-4 * abs(at), 1e-7) if order == 1 else max(1e-3 * abs(at), 1e-6)

    def ev(t):
        v = f(t)
        if not math.isfinite(v):
            raise OracleError(f"non-finite evaluation f({t!r}) = {v!r}")
        return v

    def stencil(step):
        if one_sided:
            return (-3.0 * ev(at) + 4.0 * ev(at + step) - ev(at + 2 * step)) / (2 * step)
        if order == 1:
            return (ev(at + step) - ev(at - step)) / (2 * step)
        return (ev(at + step) - 2.0 * ev(at) + ev(at - step)) / step**2

    coarse, fine = stencil(h), stencil(h / 2)
    return (4.0 * fine - coarse) / 3.0


def sequential_swap_oracle(state: CoupledState, amount: float, direction: Direction) -> tuple[float, CoupledState]:
    """Replay a compound trade as two independent single-pool swaps."""
    if direction == "purchase":
        leg1 = swap_exact_in(state.pool1, amount)
        leg2 = swap_exact_in(state.pool2, leg1.amount_out)
        return leg2.amount_out, CoupledState.from_pools(leg1.post_state, leg2.post_state)
    if direction == "liquidation":
        leg1 = swap_exact_in(state.pool2.flipped(), amount)
        leg2 = swap_exact_in(state.pool1.flipped(), leg1.amount_out)
        return leg2.amount_out, CoupledState.from_pools(leg2.post_state.flipped(), leg1.post_state.flipped())
    raise ValueError(f"unknown direction {direction!r}")


def measured_transmission(state: CoupledState, mu_y: float, direction: Direction) -> float:
    """Drift on the second pool, read off the second leg's marginal execution price."""
    if direction == "purchase":
        first, second = state.pool1, state.pool2
    else:
        first, second = state.pool2.flipped(), state.pool1.flipped()
    y_moved = swap_exact_in(first, input_for_drift(first, mu_y)).amount_out
    return price_drift(second, y_moved)[1].mu


def random_states(n: int, seed: int = DEFAULT_SEED) -> list[CoupledState]:
    """Log-uniform reserves over [1e3, 1e12], discount factors from a fixed menu."""
    rng = np.random.default_rng(seed)
    lo, hi = np.log(RESERVE_RANGE[0]), np.log(RESERVE_RANGE[1])
    reserves = np.exp(rng.uniform(lo, hi, size=(n, 4)))
    gammas = rng.choice(GAMMAS, size=(n, 2))
    return [CoupledState(*map(float, r), float(g[0]), float(g[1])) for r, g in zip(reserves, gammas)]


def random_fractions(n: int, lo: float, hi: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=n))


# ---------------------------------------------------------------------------
# Report helpers
# ---------------------------------------------------------------------------


def rel_error(value: float, reference: float, floor: float = 0.0) -> float:
    if value == reference:
        return 0.0
    return abs(value - reference) / max(abs(reference), floor)


def _dump(payload) -> str:
    return json.dumps(payload, sort_keys=True)


class _Tracker:
    def __init__(self, name: str, tolerance: float):
        self.name, self.tolerance = name, tolerance
        self.worst, self.worst_input, self.samples = 0.0, None, 0

    def add(self, err: float, payload) -> None:
        self.samples += 1
        if not math.isfinite(err):
            err = math.inf
        if self.worst_input is None or err > self.worst:
            self.worst, self.worst_input = err, payload

    def report(self) -> OracleReport:
        worst = self.worst if math.isfinite(self.worst) else 1e308
        return OracleReport(self.name, worst, self.samples, _dump(self.worst_input), self.tolerance)


def _flag(ok: bool) -> float:
    return 0.0 if ok else 1.0


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


def check_invariant_preservation(n: int, seed: int = DEFAULT_SEED) -> OracleReport:
    rng = np.random.default_rng(seed)
    t = _Tracker("invariant_preservation", 1e-12)
    reserves = np.exp(rng.uniform(np.log(RESERVE_RANGE[0]), np.log(RESERVE_RANGE[1]), size=(n, 2)))
    gammas = rng.choice(GAMMAS, size=n)
    sizes = np.exp(rng.uniform(np.log(1e-6), np.log(1e2), size=n))
    for (x, y), g, frac in zip(reserves, gammas, sizes):
        pool = PoolState(float(x), float(y), float(g))
        trade = swap_exact_in(pool, float(frac * x))
        c = trade.curve_state
        t.add(rel_error(pool.kind.phi(c.reserve_base, c.reserve_quote), pool.k),
              {"x": float(x), "y": float(y), "gamma": float(g), "delta": float(frac * x)})
    return t.report()


def check_composition(states: Sequence[CoupledState], direction: Direction, seed: int) -> OracleReport:
    t = _Tracker(f"composition_{direction}", 1e-12)
    fracs = random_fractions(len(states), 1e-6, 10.0, seed)
    compound = cm.purchase_compound if direction == "purchase" else cm.liquidate_compound
    for s, frac in zip(states, fracs):
        amount = float(frac * (s.x if direction == "purchase" else s.z))
        out, post = compound(s, amount)
        ref_out, ref_post = sequential_swap_oracle(s, amount, direction)
        err = max(
            rel_error(out, ref_out),
            *(rel_error(getattr(post, k), getattr(ref_post, k)) for k in ("x", "y1", "y2", "z")),
        )
        t.add(err, {"state": s.as_dict(), "amount": amount})
    return t.report()


def check_swap_derivatives(state: CoupledState, grid: Sequence[float]) -> list[OracleReport]:
    mep = _Tracker("marginal_exec_price_fd", 1e-7)
    depth = _Tracker("marginal_depth_fd", 1e-6)
    for label, pool in (("pool1", state.pool1), ("pool2", state.pool2)):
        for mu in grid:
            delta = input_for_drift(pool, mu)
            scale = max(delta, 1e-3 * pool.reserve_base)
            one_sided = delta < 1e-3 * scale
            h = 1e-4 * scale
            d_out = fd_derivative(lambda d: swap_exact_in(pool, d).amount_out, delta, 1, h=h, one_sided=one_sided)
            mep.add(rel_error(marginal_exec_price(pool, delta), d_out), {"pool": label, "mu": mu})
            d_mu = fd_derivative(lambda d: quote_drift(pool, d), delta, 1, h=h, one_sided=one_sided)
            depth.add(rel_error(marginal_depth(pool, mu), 1.0 / d_mu), {"pool": label, "mu": mu})
    return [mep.report(), depth.report()]


def check_inverse_round_trip(state: CoupledState, grid: Sequence[float]) -> OracleReport:
    t = _Tracker("inverse_round_trip", 1e-10)
    mus = [m for m in grid if m > 0] + list(np.logspace(-6, 1, 50))
    for label, pool in (("pool1", state.pool1), ("pool2", state.pool2)):
        for mu in mus:
            back = price_drift(pool, input_for_drift(pool, float(mu)))[1].mu
            t.add(rel_error(back, float(mu)), {"pool": label, "mu": float(mu)})
    return t.report()


def check_total_depth(state: CoupledState, grid: Sequence[float]) -> OracleReport:
    t = _Tracker("total_depth_quadrature", 1e-9)
    pool = state.pool1
    for mu in grid:
        if mu == 0:
            t.add(abs(total_depth(pool, 0.0)), {"mu": 0.0})
            continue
        ref, _ = quad(lambda m: marginal_depth(pool, m), 0.0, mu, epsabs=0.0, epsrel=1e-13, limit=200)
        t.add(rel_error(total_depth(pool, mu), ref), {"mu": mu})
    return t.report()


def check_transmission(state: CoupledState, grid: Sequence[float], direction: Direction) -> list[OracleReport]:
    closed = cm.drift_transmission_purchase if direction == "purchase" else cm.drift_transmission_liquidation
    bound = (cm.transmission_bound_purchase if direction == "purchase" else cm.transmission_bound_liquidation)(state)
    eq = _Tracker(f"transmission_{direction}", 1e-9)
    shape = _Tracker(f"transmission_{direction}_shape", 0.0)
    values = []
    for mu in grid:
        got = closed(state, mu)
        eq.add(rel_error(got, measured_transmission(state, mu, direction), floor=1e-300), {"mu": mu})
        values.append(got)
    for i, (mu, v) in enumerate(zip(grid, values)):
        ok = v < bound and (v == 0.0 if mu == 0 else v > 0.0)
        if i:
            ok = ok and v > values[i - 1]
        shape.add(_flag(ok), {"mu": mu, "value": v, "bound": bound})
    far = closed(state, 1e6)
    shape.add(_flag(far < bound), {"mu": 1e6, "value": far, "bound": bound})
    return [eq.report(), shape.report()]


def check_value_signs(state: CoupledState, grid: Sequence[float]) -> list[OracleReport]:
    purchase = _Tracker("purchase_inflation", 0.0)
    liquidation = _Tracker("liquidation_deflation", 0.0)
    for mu in grid:
        vp = cm.value_discrepancy_purchase(state, mu)
        vl = cm.value_discrepancy_liquidation(state, mu)
        purchase.add(_flag(vp == 0.0 if mu == 0 else vp > 0.0), {"mu": mu, "value": vp})
        liquidation.add(_flag(vl == 0.0 if mu == 0 else vl < 0.0), {"mu": mu, "value": vl})
    # convexity in u = sqrt(mu + 1) on a uniform u grid spanning the drift grid
    convex = _Tracker("purchase_convexity", 0.0)
    mus = [m for m in grid]
    if len(mus) >= 3:
        us = np.linspace(math.sqrt(min(mus) + 1.0), math.sqrt(max(mus) + 1.0), len(mus))
        v = [cm.value_discrepancy_purchase(state, float(u * u - 1.0)) for u in us]
        for i in range(1, len(v) - 1):
            second = v[i + 1] - 2.0 * v[i] + v[i - 1]
            convex.add(_flag(second > 0.0), {"u": float(us[i]), "second_difference": second})
    reports = [purchase.report(), liquidation.report()]
    if convex.samples:
        reports.append(convex.report())
    return reports


def check_value_closed_forms(state: CoupledState, grid: Sequence[float]) -> list[OracleReport]:
    if not state.constant_product:
        return []
    out = []
    for name, pipe, closed in (
        ("value_purchase_closed_form", cm.value_discrepancy_purchase, cm.cpmm_value_discrepancy_purchase),
        ("value_liquidation_closed_form", cm.value_discrepancy_liquidation, cm.cpmm_value_discrepancy_liquidation),
    ):
        t = _Tracker(name, 1e-9)
        for mu in grid:
            t.add(rel_error(pipe(state, mu), closed(state, mu), floor=1e-300), {"mu": mu})
        out.append(t.report())
    return out


def check_indicator_sign(states: Sequence[CoupledState], seed: int) -> OracleReport:
    import warnings

    t = _Tracker("indicator_sign_agreement", 0.0)
    rng = np.random.default_rng(seed)
    for s in states:
        hi = cm.indicator_mu_limit(s) * (1.0 - 1e-9)
        mu = float(np.exp(rng.uniform(np.log(1e-6), np.log(hi))))
        with warnings.catch_warnings():
            warnings.simplefilter("error", cm.OutOfRegimeWarning)
            ind = cm.inflation_indicator(s, mu)
        v = cm.value_discrepancy_purchase(s, mu)
        t.add(_flag(np.sign(ind) == np.sign(v)), {"state": s.as_dict(), "mu": mu, "indicator": ind, "value": v})
    return t.report()


def step_halving_ratios(state: CoupledState, mu: float, direction: Direction, steps=HALVING_STEPS) -> list[float]:
    expand = cm.marginal_output_purchase if direction == "purchase" else cm.marginal_output_liquidation
    res = [expand(state, mu, d).residual for d in steps]
    return [abs(a) / abs(b) for a, b in zip(res, res[1:])]


def check_expansion(state: CoupledState, direction: Direction, drifts: Iterable[float] = EXPANSION_DRIFTS) -> OracleReport:
    t = _Tracker(f"expansion_{direction}_cubic_residual", CUBIC_RATIO_TOL)
    for mu in drifts:
        for r in step_halving_ratios(state, mu, direction):
            t.add(abs(r / CUBIC_RATIO - 1.0), {"mu": mu, "ratio": r})
    return t.report()


def check_curvature(state: CoupledState, grid: Sequence[float], direction: Direction) -> list[OracleReport]:
    per_pool = _Tracker(f"curvature_{direction}_fd", 1e-6)
    compound = _Tracker(f"compound_curvature_{direction}_fd", 1e-6)
    mapping = _Tracker(f"expansion_{direction}_curvature_mapping", 1e-9)
    if direction == "purchase":
        first, second = state.pool1, state.pool2
        curvature, expand = cm.compound_curvature_purchase, cm.marginal_output_purchase
        half = 0.5
    else:
        first, second = state.pool2.flipped(), state.pool1.flipped()
        curvature, expand = cm.compound_curvature_liquidation, cm.marginal_output_liquidation
        half = 1.0
    for mu in grid:
        kappa_first, kappa_second, coeff = curvature(state, mu)
        amount = input_for_drift(first, mu)
        moved = swap_exact_in(first, amount).amount_out
        h1 = 1e-3 * max(amount, first.reserve_base)
        h2 = 1e-3 * max(moved, second.reserve_base)
        fd_first = -fd_derivative(lambda a: _signed_out(first, a), amount, 2, h=h1)
        fd_second = -fd_derivative(lambda a: _signed_out(second, a), moved, 2, h=h2)
        fd_total = fd_derivative(lambda a: _signed_out(second, _signed_out(first, a)), amount, 2, h=h1)
        payload = {"mu": mu}
        per_pool.add(max(rel_error(kappa_first, fd_first), rel_error(kappa_second, fd_second)), payload)
        compound.add(rel_error(coeff, half * fd_total), payload)
        rep = expand(state, mu, 1e-3)
        depth = marginal_depth(first, mu)
        mapped = (-coeff if direction == "purchase" else -0.5 * coeff) * depth**2
        mapping.add(rel_error(rep.curvature_term, mapped), payload)
    return [per_pool.report(), compound.report(), mapping.report()]


def _signed_out(pool: PoolState, delta: float) -> float:
    """Swap output extended to negative input sizes, so central differences work at zero size."""
    return pool.kind.output(pool.reserve_base, pool.reserve_quote, pool.gamma * delta)


def check_zero_fee_round_trip(state: CoupledState, seed: int, n: int = 50) -> OracleReport:
    t = _Tracker("zero_fee_round_trip", 1e-9)
    s = replace(state, gamma1=1.0, gamma2=1.0)
    for frac in random_fractions(n, 1e-6, 0.1, seed):
        delta = float(frac * s.x)
        z_out, post = cm.purchase_compound(s, delta)
        x_back, _ = cm.liquidate_compound(post, z_out)
        t.add(rel_error(x_back, delta), {"delta": delta})
    return t.report()


def run_suite(
    state: CoupledState,
    grid: Sequence[float],
    random_cases: int = 1000,
    seed: int = DEFAULT_SEED,
) -> list[OracleReport]:
    """Every cross-check, on ``state`` over the drift ``grid`` plus seeded random states."""
    grid = [float(m) for m in grid]
    if not grid:
        return []
    states = random_states(random_cases, seed)
    reports = [
        check_invariant_preservation(10 * random_cases, seed),
        check_composition(states + [state], "purchase", seed + 1),
        check_composition(states + [state], "liquidation", seed + 2),
        *check_swap_derivatives(state, grid),
        check_inverse_round_trip(state, grid),
        check_total_depth(state, grid),
        *check_transmission(state, grid, "purchase"),
        *check_transmission(state, grid, "liquidation"),
        *check_value_signs(state, grid),
        *check_value_closed_forms(state, grid),
        check_indicator_sign(states, seed + 3),
        check_expansion(state, "purchase"),
        check_expansion(state, "liquidation"),
        *check_curvature(state, grid, "purchase"),
        *check_curvature(state, grid, "liquidation"),
        check_zero_fee_round_trip(state, seed + 4),
    ]
    return sorted(reports, key=lambda r: r.name)


# ---------------------------------------------------------------------------
# Alternative constant-product forms, compared against the pipelines
# ---------------------------------------------------------------------------


def alternative_forms(state: CoupledState, mu: float) -> dict[str, tuple[float, float]]:
    """(alternative value, pipeline value) pairs for the constant-product closed forms in their alternative arrangement."""
    x, y1, y2, z, g1, g2 = state.x, state.y1, state.y2, state.z, state.gamma1, state.gamma2
    u = math.sqrt(mu + 1.0)
    p1 = state.pool1
    delta = input_for_drift(p1, mu)
    pt_p = cm._purchase_point(state, mu)
    curv_p = cm._purchase_curvature(state, mu, pt_p)
    py_post, pz_post = pt_p.py * (mu + 1.0), pt_p.pz * (pt_p.mu_z + 1.0)
    pt_l = cm._liquidation_point(state, mu)
    rep_l = cm.marginal_output_liquidation(state, mu, 1e-3)
    rep_p = cm.marginal_output_purchase(state, mu, 1e-3)
    return {
        "alt_cpmm_drift": ((x + g1 * delta) ** 2 / y1**2 - 1.0, mu),
        "alt_cpmm_inverse": (y1 / g1 * u - x / g1, delta),
        "alt_cpmm_marginal_depth": (2 * g1 * (x + g1 * delta) / y1**2, marginal_depth(p1, mu)),
        "alt_value_purchase": (
            g2 * x / (y1 * y2) * (y1 / x * u - 1.0)
            * (u * (x * y2 + x * y1 * g2 - g2 * y1**3 / x) + g2 * (y1**2 - x**2) - y1 * y2),
            cm.value_discrepancy_purchase(state, mu),
        ),
        "alt_transmission_purchase": (
            (y2 * x * u + g2 * y1 * x * (u - 1.0)) ** 2 / (x**2 * (mu + 1.0) * y2**2) - 1.0,
            measured_transmission(state, mu, "purchase"),
        ),
        "alt_transmission_liquidation": (
            (y1 * z * u + g1 * y2 * z * u - y2 * z) ** 2 / (y1**2 * z**2 * (mu + 1.0)) - 1.0,
            measured_transmission(state, mu, "liquidation"),
        ),
        "alt_value_liquidation": (
            -x * (g1 * y2**2 * u - g1 * y2 * z) ** 2
            / (y1 * (z + g2) * (y1 * y2 * u + g1 * y2**2 * u - g1 * y2 * z)),
            cm.value_discrepancy_liquidation(state, mu),
        ),
        "alt_a2": (
            -0.5 * (curv_p.kappa_y * g2 / pz_post + curv_p.kappa_z / py_post**2),
            curv_p.a2,
        ),
        "alt_order2_purchase": (
            0.5 * (g2 * pt_p.depth_y**2 / (pz_post * (pt_p.mu_z + 1.0) * py_post**2 * pt_p.depth_z)
                   + g1 * pt_p.depth_y / (pz_post * py_post * (mu + 1.0))),
            rep_p.order2,
        ),
        "alt_order2_liquidation": (
            0.5 * (g1 * g2**2 * pt_l.py * pt_l.pz**2 * pt_l.depth_y**2
                   / ((mu + 1.0) ** 2 * (pt_l.mu_x + 1.0) ** 2 * pt_l.depth_x)
                   + g1 * g2 * pt_l.py * pt_l.pz * pt_l.depth_y / ((mu + 1.0) ** 2 * (pt_l.mu_x + 1.0))),
            rep_l.order2,
        ),
    }


def alternative_form_diagnostics(state: CoupledState, grid: Sequence[float], tolerance: float = 1e-9) -> list[OracleReport]:
    """How far each typeset closed form sits from the pipeline value.

    Informational: these do not gate verification.
    """
    grid = [float(m) for m in grid]
    if not state.constant_product or not grid:
        return []
    trackers: dict[str, _Tracker] = {}
    for mu in grid:
        for name, (alternative, pipeline) in alternative_forms(state, float(mu)).items():
            t = trackers.setdefault(name, _Tracker(name, tolerance))
            scale = max(abs(alternative), abs(pipeline))
            t.add(0.0 if scale == 0.0 else abs(alternative - pipeline) / scale, {"mu": float(mu)})
    return [trackers[k].report() for k in sorted(trackers)]
