"""Precoding schemes: full-CSI, statistical, no-CSI and randomized."""

from .audit import AuditReport, audit_solution
from .full_csi import (InfeasibleError, balance_program, power_min_program, solve_p2_branch,
                       solve_power_min, solve_sinr_balance_full)
from .randomized import (NULLSPACE_MESSAGE, NullspaceBasis, NullSpaceError, build_rjs, build_rps,
                         nullspace_basis, solve_users_only)
from .sca import eve_sinr, solve_sinr_balance_nocsi, solve_sinr_balance_statistical

__all__ = [
    "AuditReport", "audit_solution", "InfeasibleError", "balance_program", "power_min_program",
    "solve_p2_branch", "solve_power_min", "solve_sinr_balance_full", "NULLSPACE_MESSAGE",
    "NullspaceBasis", "NullSpaceError", "build_rjs", "build_rps", "nullspace_basis",
    "solve_users_only", "eve_sinr", "solve_sinr_balance_nocsi", "solve_sinr_balance_statistical",
]
