"""Equivalence suites: factorized paths against materialized dense oracles.

Three families of checks, each reporting its worst deviation:

  * PK layers: the memory-friendly forward against the dense effective
    weight;
  * bare mixer stacks: the block composition against the flat MLP with
    materialized weights, at the value and at the input-gradient level;
  * Monarch: block-wise application and the weight-shared mixing-block
    correspondence, including the documented negative control with a
    nonlinear middle activation (the correspondence needs a linear middle,
    so the control passes exactly when the deviation is large).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import dense, models, monarch, perms, pk


@dataclass(frozen=True)
class SuiteResult:
    name: str
    cases: int
    max_deviation: float
    tolerance: float
    passed: bool
    expected_failure: bool = False

    def payload(self) -> dict:
        return {
            "suite": self.name,
            "cases": self.cases,
            "max_deviation": self.max_deviation,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "expected_failure": self.expected_failure,
        }


def pk_layer_suite(trials: int = 100, max_dim: int = 6, seed: int = 0,
                   tol: float = 1e-12) -> SuiteResult:
    """Random specs over both activations; forward vs dense effective weight."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(trials):
        n1, n2, k = (int(rng.integers(1, max_dim + 1)) for _ in range(3))
        spec = pk.PKLayerSpec(
            n1, n2, k,
            rng.standard_normal((k, n2)),
            perms.random_permutation(n1 * n2, rng),
            perms.random_permutation(n1 * k, rng),
            "gelu" if t % 2 == 0 else "linear",
        )
        x = rng.standard_normal(n1 * n2)
        direct = pk.pk_forward(spec, x)
        via_dense = pk.activation_fn(spec.activation)(pk.effective_weight(spec) @ x)
        worst = max(worst, float(np.abs(direct - via_dense).max()))
    return SuiteResult("pk_layer", trials, worst, tol, worst < tol)


def _bare_configs(max_dim: int = 6):
    cases = []
    for variant in ("s_mixer", "mlp_mixer"):
        for mode in ("normal", "random"):
            for s, c in ((2, 3), (4, 4), (max_dim, max_dim - 1)):
                for gamma in ((1,) if variant == "s_mixer" else (1, 2)):
                    for depth in (1, 2):
                        cases.append(models.MixerConfig(
                            variant=variant, in_tokens=s, in_channels=c,
                            tokens=s, channels=c, expansion=gamma, depth=depth,
                            num_classes=2, permutation_mode=mode,
                            perm_seed=11 if mode == "random" else None, bare=True,
                        ))
    return cases


def effective_mlp_suite(seed: int = 0, tol: float = 1e-12, grad_tol: float = 1e-10,
                        inputs_per_case: int = 8, max_dim: int = 6) -> SuiteResult:
    """Bare stacks vs their flat expansions, values then input gradients."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    cases = 0
    for cfg in _bare_configs(max_dim):
        params = models.init_mixer_params(cfg, seed=int(rng.integers(1 << 31)))
        width = cfg.tokens * cfg.channels
        for _ in range(inputs_per_case):
            x_matrix = rng.standard_normal((cfg.tokens, cfg.channels))
            body = dense.vec(models.bare_body_forward(cfg, params, x_matrix))
            flat = models.effective_mlp_forward(cfg, params, dense.vec(x_matrix))
            worst = max(worst, float(np.abs(body - flat).max()))
            cases += 1
        if cfg.tokens <= 4 and cfg.channels <= 4:
            probe = rng.standard_normal(width)
            x0 = rng.standard_normal((1, width))

            tape_a = ad.Tape()
            xa = tape_a.leaf(x0, "x")
            out_a = models.bare_body_graph(tape_a, cfg, params, xa)
            tape_a.backward(ad.sum_all(ad.mul(out_a, tape_a.constant(probe))))
            ga = tape_a.gradient(xa)

            tape_b = ad.Tape()
            xb = tape_b.leaf(x0, "x")
            out_b = models.effective_mlp_graph(tape_b, cfg, params, xb)
            tape_b.backward(ad.sum_all(ad.mul(out_b, tape_b.constant(probe))))
            gb = tape_b.gradient(xb)

            gdev = float(np.abs(ga - gb).max())
            if gdev >= grad_tol:
                return SuiteResult("effective_mlp", cases, gdev, grad_tol, False)
            cases += 1
    return SuiteResult("effective_mlp", cases, worst, tol, worst < tol)


def monarch_suite(sides=range(2, 9), trials: int = 100, seed: int = 0,
                  tol: float = 1e-12, nonlinear_middle: bool = False) -> SuiteResult:
    """Weight-shared Monarch vs the mixing block act(W X V).

    With ``nonlinear_middle`` the block becomes act(act(W X) V), which the
    Monarch factorization cannot represent; the suite then passes only when
    the deviation is at least 1e-3.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    smallest = np.inf
    cases = 0
    for side in sides:
        w = rng.standard_normal((side, side))
        v = rng.standard_normal((side, side))
        spec = monarch.mixer_as_monarch(w, v)
        dense_m = monarch.monarch_materialize(spec)
        for _ in range(trials):
            x_matrix = rng.standard_normal((side, side))
            x = dense.vec(x_matrix)
            middle = dense.gelu(w @ x_matrix) if nonlinear_middle else w @ x_matrix
            reference = dense.vec(dense.gelu(middle @ v))
            block_wise = dense.gelu(monarch.monarch_apply(spec, x))
            via_dense = dense.gelu(dense_m @ x)
            dev_ref = float(np.abs(block_wise - reference).max())
            dev_dense = float(np.abs(block_wise - via_dense).max())
            worst = max(worst, dev_ref, dev_dense)
            smallest = min(smallest, dev_ref)
            cases += 1
    if nonlinear_middle:
        # negative control: every case must visibly break
        return SuiteResult("monarch_nonlinear_middle", cases, smallest, 1e-3,
                           smallest >= 1e-3, expected_failure=True)
    return SuiteResult("monarch", cases, worst, tol, worst < tol)


def run_suites(which=("pk", "mlp", "monarch"), seed: int = 0,
               nonlinear_middle: bool = False) -> list[SuiteResult]:
    results = []
    if "pk" in which:
        results.append(pk_layer_suite(seed=seed))
    if "mlp" in which:
        results.append(effective_mlp_suite(seed=seed))
    if "monarch" in which:
        results.append(monarch_suite(seed=seed, nonlinear_middle=nonlinear_middle))
    return results
