"""Self-stabilizing group communication blocks under a deterministic simulator.

Bottom up: a token-passing data link that recovers from arbitrary channel
contents, a heartbeat failure detector riding the tokens, bounded epoch
labels with a global agreement protocol, practically unbounded counters
carrying a multi-writer register, and a virtually synchronous replicated
state machine on top. The simulator injects adversarial initial states and
records JSONL traces; the checkers evaluate safety and convergence claims
over those traces.
"""

from .checkers import CHECKS, CheckResult, run_checks
from .sim import SimConfig, run_sim
from .trace import Trace

__version__ = "0.1.0"

__all__ = [
    "CHECKS",
    "CheckResult",
    "SimConfig",
    "Trace",
    "run_checks",
    "run_sim",
    "__version__",
]
