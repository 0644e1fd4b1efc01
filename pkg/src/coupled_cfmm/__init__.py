"""Analytics for two constant-function market makers chained through a shared token."""

__version__ = "0.1.0"

from .cfmm_core import (  # noqa: E402
    CONSTANT_PRODUCT,
    ConstantProduct,
    CustomInvariant,
    DomainError,
    DriftPoint,
    InvariantKind,
    PoolState,
    TradeResult,
    WeightedProduct,
    input_for_drift,
    marginal_depth,
    marginal_depth_slope,
    marginal_exec_price,
    price_drift,
    quote_drift,
    spot_price,
    swap_exact_in,
    total_depth,
)
from .coupled_market import (  # noqa: E402
    CASE_STUDY,
    CoupledState,
    ExpansionReport,
    MetricsSample,
    OutOfRegimeWarning,
    drift_transmission_liquidation,
    drift_transmission_purchase,
    inflation_indicator,
    liquidate_compound,
    liquidation_metrics,
    marginal_output_liquidation,
    marginal_output_purchase,
    purchase_compound,
    purchase_metrics,
    value_discrepancy_liquidation,
    value_discrepancy_purchase,
)
