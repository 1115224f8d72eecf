from .ocp import (
    OcpConfig,
    OcpSolution,
    PayloadNmpc,
    desired_inputs,
    evaluate_constraints,
    evaluate_cost,
    pack_refs,
    warm_start_shift,
)

__all__ = [
    "OcpConfig",
    "OcpSolution",
    "PayloadNmpc",
    "desired_inputs",
    "evaluate_constraints",
    "evaluate_cost",
    "pack_refs",
    "warm_start_shift",
]
