"""Weight-budget calculus for mixing layers.

With token count S, channel count C and expansion factor gamma, one base
block carries on average ``omega = gamma * (C*S^2 + C^2*S) / 2`` nonzero
weights per layer. These helpers solve that budget for feasible integer
(S, C) pairs, locate the width-maximizing point, and size the masked dense
baseline. Counts are computed in real arithmetic and rounded half-up only
at the reporting boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def omega(s: int, c: int, gamma: float = 1.0):
    """Average nonzero weights per mixing layer. Exact for integer gamma."""
    if s < 1 or c < 1 or gamma < 1:
        raise ValueError("require S >= 1, C >= 1, gamma >= 1")
    half = (c * s * s + c * c * s) // 2  # C*S*(S+C) is always even
    if isinstance(gamma, int) or float(gamma).is_integer():
        return int(gamma) * half
    return gamma * half


def solve_s(c: int, budget: float, gamma: float = 1.0) -> float:
    """Positive real S with omega(S, c, gamma) == budget."""
    if c < 1 or budget <= 0:
        raise ValueError("require C >= 1 and omega > 0")
    return (math.sqrt(c * c + 8.0 * budget / (gamma * c)) - c) / 2.0


def optimal(budget: float, gamma: float = 1.0):
    """Width-maximizing point: C* = S* = (omega/gamma)^(1/3), m_max = (omega/gamma)^(2/3)."""
    if budget <= 0:
        raise ValueError("omega must be positive")
    side = (budget / gamma) ** (1.0 / 3.0)
    return side, side, side * side


def width_bounds(budget: float, gamma: float = 1.0):
    """(lower, upper) bounds on the effective width m = S*C at fixed budget.

    The lower bound is attained at S = 1 or C = 1, the upper at S = C.
    """
    if budget <= 0:
        raise ValueError("omega must be positive")
    lower = (math.sqrt(1.0 + 8.0 * budget / gamma) - 1.0) / 2.0
    upper = (budget / gamma) ** (2.0 / 3.0)
    return lower, upper


def gamma_given(m: float, c: int, budget: float) -> float:
    """Expansion factor that exhausts the budget at fixed width m and channel count c."""
    if m <= 0:
        raise ValueError("m must be positive")
    return 2.0 * budget / (m * (c + m / c))


def sw_width(budget: float, p: float, gamma: float = 1.0) -> int:
    """Width of a masked dense layer holding ``budget`` weights at density p."""
    if not 0.0 < p <= 1.0:
        raise ValueError("p must be in (0, 1]")
    return round_half_up(math.sqrt(budget / (gamma * p)))


@dataclass(frozen=True)
class PairFeasibility:
    s: int
    c: int
    m: int
    omega_achieved: float
    rel_error: float
    density: float


@dataclass(frozen=True)
class SizingReport:
    omega: float
    gamma: float
    pairs: list[PairFeasibility]
    optimum: tuple  # (c_star, s_star, m_max)
    bounds: tuple   # (m_lower, m_upper)


def integer_pairs(budget: float, gamma: float = 1.0, c_candidates=()) -> list[PairFeasibility]:
    """Rounded feasible (S, C) pairs for each candidate C, with mirrors.

    S is rounded half-up from the real solution; each pair reports the budget
    it actually achieves. If (S, C) is listed its mirror (C, S) is too.
    """
    seen = {}
    for c in c_candidates:
        c = int(c)
        s = round_half_up(solve_s(c, budget, gamma))
        if s < 1:
            continue
        for si, ci in ((s, c), (c, s)):
            if (si, ci) in seen:
                continue
            achieved = omega(si, ci, gamma)
            seen[(si, ci)] = PairFeasibility(
                s=si,
                c=ci,
                m=si * ci,
                omega_achieved=float(achieved),
                rel_error=abs(achieved - budget) / budget,
                density=float(budget) / (si * ci) ** 2,
            )
    return [seen[key] for key in sorted(seen, key=lambda sc: (sc[1], sc[0]))]


def width_curve(budget: float, gamma: float = 1.0, c_values=None):
    """Rows (C, S_real, m) of the single-peaked width curve m(C)."""
    if c_values is None:
        top = max(2, round_half_up(2.5 * optimal(budget, gamma)[0]))
        c_values = range(1, top + 1)
    rows = []
    for c in c_values:
        s_real = solve_s(int(c), budget, gamma)
        rows.append((int(c), s_real, int(c) * s_real))
    return rows


def sizing_report(budget: float, gamma: float = 1.0, c_candidates=()) -> SizingReport:
    return SizingReport(
        omega=float(budget),
        gamma=float(gamma),
        pairs=integer_pairs(budget, gamma, c_candidates),
        optimum=optimal(budget, gamma),
        bounds=width_bounds(budget, gamma),
    )
