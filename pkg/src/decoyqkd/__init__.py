"""Weak+vacuum decoy-state BB84: security bounds, channel simulation and attack monitoring."""
__version__ = "0.1.0"

from .model import (
    BoundedRates,
    ChannelConfig,
    ClassTally,
    ObservedRates,
    SessionTally,
    SourceConfig,
    binary_entropy,
    ec_efficiency,
    tally_to_rates,
)
from .bounds import BoundPolicy, confidence_of, tail_probability, widen_rates
from .security import (
    ProtocolVariant,
    SecurityResult,
    Thresholds,
    Verdict,
    compute_e1_upper,
    compute_key_rate,
    compute_q1_lower,
    monitor_attacks,
)
from .channel import (
    AttackScenario,
    SimulatedSession,
    apply_attack,
    expected_rates,
    honest_yields,
    run_campaign,
    simulate_session,
)
from .analysis import AnalysisSettings, analytic_result, analyze_tally, sweep
from .optimize import OptimizationSpec, objective, optimize
