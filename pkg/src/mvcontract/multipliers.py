"""Unit-sphere Lagrange multipliers and the transversality case taxonomy.

The constrained principal problem produces a multiplier triple
(lambda_P, lambda_E, lambda_V) with lambda_P >= 0 and
lambda_P^2 + lambda_E^2 + lambda_V^2 = 1.  Which boundary of the constraint
set (agent cost at W0, variance at 0 or at R0) is active narrows the
admissible directions of (lambda_E, lambda_V) to five cases:

    i    variance at 0:            lambda_E = 0,  lambda_V = +r
    ii   variance at R0:           lambda_E = 0,  lambda_V = -r
    iii  cost at W0, var at 0:     lambda_E = -r cos(theta), lambda_V = -r sin(theta), theta in [-pi/2, 0]
    iv   cost at W0, var at R0:    same formulas with theta in [0, pi/2]
    v    cost at W0:               lambda_E = -r, lambda_V = 0

with r = sqrt(1 - lambda_P^2).  ``explicit`` marks triples supplied directly.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

from .model import MIN_LAMBDA_P, LqParams

CASE_TAGS = ("i", "ii", "iii", "iv", "v", "explicit")

_NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class MultiplierTriple:
    lam_P: float
    lam_E: float
    lam_V: float
    case_tag: str = "explicit"
    theta: Optional[float] = None

    def __post_init__(self):
        if self.case_tag not in CASE_TAGS:
            raise ValueError(f"case_tag must be one of {CASE_TAGS}, got {self.case_tag!r}")
        if not 0.0 <= self.lam_P <= 1.0:
            raise ValueError(f"lambda_P must lie in [0, 1], got {self.lam_P}")
        norm = self.lam_P**2 + self.lam_E**2 + self.lam_V**2
        if abs(norm - 1.0) > _NORMALIZATION_TOL:
            raise ValueError(
                f"multiplier triple is not unit-normalized: |lambda|^2 = {norm!r}"
            )
        if self.case_tag == "iii":
            if self.theta is None or not -math.pi / 2 <= self.theta <= 0.0:
                raise ValueError(
                    f"case iii requires theta in [-pi/2, 0], got {self.theta}"
                )
        elif self.case_tag == "iv":
            if self.theta is None or not 0.0 <= self.theta <= math.pi / 2:
                raise ValueError(
                    f"case iv requires theta in [0, pi/2], got {self.theta}"
                )


def from_case(case_tag: str, lam_P: float, theta: Optional[float] = None) -> MultiplierTriple:
    """Build the multiplier triple for one transversality case.

    ``theta`` must be supplied exactly for cases iii and iv, inside that
    case's angular interval.
    """
    if case_tag not in ("i", "ii", "iii", "iv", "v"):
        raise ValueError(f"unknown case tag {case_tag!r}")
    lam_P = float(lam_P)
    if not 0.0 <= lam_P <= 1.0:
        raise ValueError(f"lambda_P must lie in [0, 1], got {lam_P}")
    root = math.sqrt(max(0.0, 1.0 - lam_P * lam_P))

    if case_tag in ("iii", "iv"):
        if theta is None:
            raise ValueError(f"case {case_tag} requires an angle theta")
        theta = float(theta)
        lam_E = -root * math.cos(theta)
        lam_V = -root * math.sin(theta)
        return MultiplierTriple(lam_P, lam_E, lam_V, case_tag, theta)

    if theta is not None:
        raise ValueError(f"case {case_tag} does not take an angle theta")
    if case_tag == "i":
        return MultiplierTriple(lam_P, 0.0, root, case_tag)
    if case_tag == "ii":
        return MultiplierTriple(lam_P, 0.0, -root, case_tag)
    return MultiplierTriple(lam_P, -root, 0.0, case_tag)  # case v


def sweep_grid(
    case_tag: str,
    lam_P_points: Sequence[float],
    theta_points: Optional[Sequence[float]] = None,
) -> List[MultiplierTriple]:
    """Cartesian multiplier grid, ordered lambda_P-major then theta-minor.

    Every lambda_P point must be at least ``MIN_LAMBDA_P``; downstream
    evaluation divides by it.
    """
    lam_P_points = list(lam_P_points)
    if not lam_P_points:
        raise ValueError("lambda_P point list is empty")
    for lp in lam_P_points:
        if lp < MIN_LAMBDA_P:
            raise ValueError(
                f"lambda_P = {lp:g} is below the sweep floor {MIN_LAMBDA_P:g}"
            )
    if case_tag in ("iii", "iv"):
        if not theta_points:
            raise ValueError(f"case {case_tag} requires a non-empty theta point list")
        theta_points = list(theta_points)
        return [
            from_case(case_tag, lp, th) for lp in lam_P_points for th in theta_points
        ]
    if theta_points is not None:
        raise ValueError(f"case {case_tag} does not take theta points")
    return [from_case(case_tag, lp) for lp in lam_P_points]


@dataclass(frozen=True)
class FeasibilityVerdict:
    """Per-constraint verdicts plus the transversality case they indicate.

    ``agent_cost`` and ``variance`` are one of feasible / boundary /
    infeasible, where boundary means within ``tol * |bound| + 2 SE`` of the
    bound.  ``consistent_case`` names the case whose activation pattern
    matches the boundary contacts (``interior`` when nothing is active,
    which is consistent only with lambda_P = 1).
    """

    agent_cost: str
    variance: str
    consistent_case: str
    agent_cost_band: float
    variance_band: float


def _verdict(value: float, bound: float, band: float) -> str:
    if value > bound + band:
        return "infeasible"
    if value >= bound - band:
        return "boundary"
    return "feasible"


def classify_feasibility(evaluation, params: LqParams, tol: float = 1e-3) -> FeasibilityVerdict:
    """Classify a Monte-Carlo evaluation against the participation bounds.

    ``tol`` is relative to each bound's magnitude; the effective band also
    includes twice the estimate's standard error, since a point estimate
    cannot certify a strict inequality.
    """
    band_ja = tol * abs(params.W0) + 2.0 * evaluation.j_a_se
    band_var = tol * params.R0 + 2.0 * evaluation.var_xt_se

    ja = _verdict(evaluation.j_a, params.W0, band_ja)
    var = _verdict(evaluation.var_xt, params.R0, band_var)

    ja_active = abs(evaluation.j_a - params.W0) <= band_ja
    var_at_r0 = abs(evaluation.var_xt - params.R0) <= band_var
    var_at_zero = evaluation.var_xt <= band_var

    if ja_active and var_at_r0:
        case = "iv"
    elif ja_active and var_at_zero:
        case = "iii"
    elif ja_active:
        case = "v"
    elif var_at_r0:
        case = "ii"
    elif var_at_zero:
        case = "i"
    else:
        case = "interior"

    return FeasibilityVerdict(
        agent_cost=ja,
        variance=var,
        consistent_case=case,
        agent_cost_band=band_ja,
        variance_band=band_var,
    )
