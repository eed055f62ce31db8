"""Closed-form per-pixel FLOP counts for the four adaptive beamformers.

All counts are exact integer arithmetic. The network count supports two
accounting conventions because the published total for a 128-channel net
(71,232) exceeds the literal layer formula by exactly one first-layer
activation term (4 * 128 = 512):

- convention "a": the literal sum — first layer 2*n0*n1 + n1, every later
  layer 4*ni*nj + nj + 4*ni (the 4*ni covering the preceding activation)
- convention "b": convention "a" plus 4*n1 for the activation that follows
  the first layer, which reproduces the published totals

Reports carry the convention used so the discrepancy stays visible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .validation import ConfigurationError


@dataclass(frozen=True)
class FlopReport:
    method: str
    n: int
    flops: float
    parameters: dict = field(default_factory=dict)

    def csv_row(self):
        detail = ";".join(f"{k}={v}" for k, v in sorted(self.parameters.items()))
        count = int(self.flops) if float(self.flops).is_integer() else repr(self.flops)
        return f"{self.method},{self.n},{count},{detail}"


def flops_imap(n, iterations):
    """Iterative-MAP cost: I * (3N + 5)."""
    if n < 1 or iterations < 0:
        raise ConfigurationError("need N >= 1 and iterations >= 0")
    return iterations * (3 * n + 5)


def flops_mv(n):
    """Minimum-variance cost: N^3 + 2N^2 + 3N."""
    if n < 1:
        raise ConfigurationError("need N >= 1")
    return n ** 3 + 2 * n ** 2 + 3 * n


def flops_ebmv(n, fraction):
    """Eigenspace MV cost: flops_mv + N^3 + k N^2 + N^2, rounded to integer.

    ``fraction`` is the retained eigenvector fraction k; non-integer totals
    (odd N with k = 0.5) round half to even.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigurationError("fraction must be in [0, 1]")
    exact = flops_mv(n) + n ** 3 + fraction * n ** 2 + n ** 2
    return round(exact)


def able_widths(n):
    """Standard network widths for an N-channel input: [N, N, N/4, N/4, N]."""
    if n < 4:
        raise ConfigurationError("need N >= 4")
    return [n, n, n // 4, n // 4, n]


def flops_able(layer_widths, accounting="b"):
    """Inference cost of the fully connected network.

    ``layer_widths`` lists the input width followed by every layer's output
    width. See the module docstring for the two conventions.
    """
    widths = [int(w) for w in layer_widths]
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ConfigurationError("need at least [input, output] positive widths")
    if accounting not in ("a", "b"):
        raise ConfigurationError(f"unknown accounting convention: {accounting!r}")
    total = 2 * widths[0] * widths[1] + widths[1]
    if accounting == "b" and len(widths) > 2:
        total += 4 * widths[1]
    for i in range(1, len(widths) - 1):
        total += 4 * widths[i] * widths[i + 1] + widths[i + 1] + 4 * widths[i]
    return total


def flops_lower_bound_inversion(n):
    """Reference curve N^2 log2(N): the nominal floor for exact inversion."""
    if n < 1:
        raise ConfigurationError("need N >= 1")
    return n * n * math.log2(n)


def report(method, n, iterations=2, fraction=0.5, accounting="b"):
    """One FlopReport for ``method`` at channel count ``n``."""
    if method == "imap":
        return FlopReport(method, n, flops_imap(n, iterations), {"iterations": iterations})
    if method == "mv":
        return FlopReport(method, n, flops_mv(n))
    if method == "ebmv":
        return FlopReport(method, n, flops_ebmv(n, fraction), {"fraction": fraction})
    if method == "able":
        widths = able_widths(n)
        both = {c: flops_able(widths, c) for c in ("a", "b")}
        # both conventions ride along so their disagreement stays documented
        return FlopReport(method, n, both[accounting],
                          {"widths": "x".join(str(w) for w in widths),
                           "accounting": accounting,
                           "flops_convention_a": both["a"],
                           "flops_convention_b": both["b"]})
    if method == "bound":
        return FlopReport(method, n, flops_lower_bound_inversion(n))
    raise ConfigurationError(f"unknown method: {method!r}")


def sweep(methods, n_values, **kwargs):
    """FlopReports for every (method, N) pair, in the given order."""
    return [report(m, n, **kwargs) for m in methods for n in n_values]


def sweep_csv(reports):
    lines = ["method,n,flops,parameters"]
    lines += [r.csv_row() for r in reports]
    return "\n".join(lines) + "\n"
