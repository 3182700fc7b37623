"""Closed-form generalization bounds and exact construction-specific oracles.

Four loss classes are covered; each class pins its own step-size regime and
the formulas refuse (``RegimeError``) outside it:

    convex               eta_t < 2/beta (upper), eta_t <= 1/beta (lower)
                         upper  2 L^2 / n * sum eta_t
                         lower  L^2 / (2n) * sum eta_t
    nonconvex_lipschitz  eta_t = C/t with C < 1/beta
                         upper  2 C e^{C beta} L^2 T^{C beta} / n
                                * min{1 + 1/(C beta), log(e T)}
                         lower  open
    nonconvex_smooth     eta_t = c / (beta t), c in (0, 1]
                         upper  out-of-scope prior-work reference only
                         lower  ((T+1)^{log(1+c)} - 1) / (2n)   (natural log)
    strongly_convex      constant eta in [2/(gamma (T+1)), 1/(beta+gamma)]
                         upper  4 Lt^2 / (n gamma) * (1 - (1 - eta gamma/2)^T)
                         lower  Lt^2 / (32 gamma n)

The analytic oracle evaluates the exact expected generalization error of a
built-in construction.  Batch-size and selection-rule terms cancel exactly
(every step perturbs m of the n neighbors, and the update divides by m), so
the oracle takes no schedule argument: every data-independent rule, however
exotic, produces the same expected value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from batchstab._series import suffix_products
from batchstab.engine import StepSizePlan
from batchstab.errors import CapabilityError, ConfigError, RegimeError
from batchstab.problems import ProblemInstance, REL_SLACK
from batchstab.stability import nonconvex_step_sum, nonconvex_step_sum_cap

BOUND_CLASSES = (
    "convex",
    "nonconvex_lipschitz",
    "nonconvex_smooth",
    "strongly_convex",
)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise RegimeError(message)


def gen_error_upper(
    cls: str,
    plan: StepSizePlan,
    n: int,
    *,
    L: float | None = None,
    beta: float | None = None,
    gamma: float | None = None,
    Ltilde: float | None = None,
) -> float:
    """Worst-case generalization-error upper bound for one loss class."""
    etas = plan.etas()
    if cls == "convex":
        if L is None or beta is None:
            raise ConfigError("convex upper bound requires L and beta")
        _require(
            etas.size == 0 or etas.max() < (2.0 / beta) * (1.0 + REL_SLACK),
            "convex upper bound requires eta_t < 2/beta",
        )
        return float(2.0 * L * L / n * etas.sum())
    if cls == "nonconvex_lipschitz":
        if L is None or beta is None:
            raise ConfigError("nonconvex upper bound requires L and beta")
        _require(
            plan.kind == "inverse_t",
            "nonconvex upper bound requires a decreasing step size eta_t = C/t",
        )
        _require(
            plan.coeff < 1.0 / beta,
            "nonconvex upper bound requires C < 1/beta",
        )
        if plan.T == 0:
            return 0.0
        return float(2.0 * L * L / n * nonconvex_step_sum_cap(plan.coeff, beta, plan.T))
    if cls == "strongly_convex":
        if Ltilde is None or beta is None or gamma is None:
            raise ConfigError(
                "strongly-convex upper bound requires Ltilde, beta, and gamma"
            )
        _require(
            plan.kind == "constant",
            "strongly-convex upper bound requires a constant step size",
        )
        _require(
            plan.T == 0 or plan.eta <= (1.0 / (beta + gamma)) * (1.0 + REL_SLACK),
            "strongly-convex upper bound requires eta <= 1/(beta+gamma)",
        )
        decay = (1.0 - 0.5 * plan.eta * gamma) ** plan.T
        return float(4.0 * Ltilde * Ltilde / (n * gamma) * (1.0 - decay))
    if cls == "nonconvex_smooth":
        raise CapabilityError(
            "no in-scope upper bound for smooth non-Lipschitz losses; the "
            "full-batch reference rate from prior work is not evaluated here"
        )
    raise ConfigError(f"unknown bound class {cls!r}")


def gen_error_upper_presimplified(
    plan: StepSizePlan, n: int, L: float, beta: float
) -> float:
    """Nonconvex upper bound before the decreasing-step simplification:
    2 L^2 / n * sum_t eta_t prod_{j>t} (1 + beta eta_j); any plan."""
    return float(2.0 * L * L / n * nonconvex_step_sum(plan.etas(), beta))


def gen_error_lower(
    cls: str,
    plan: StepSizePlan,
    n: int,
    *,
    L: float | None = None,
    beta: float | None = None,
    gamma: float | None = None,
    Ltilde: float | None = None,
    d: int | None = None,
) -> float:
    """Minimax generalization-error lower bound for one loss class."""
    etas = plan.etas()
    if cls == "convex":
        if L is None or beta is None:
            raise ConfigError("convex lower bound requires L and beta")
        _require(
            etas.size == 0 or etas.max() <= (1.0 / beta) * (1.0 + REL_SLACK),
            "convex lower bound requires eta_t <= 1/beta",
        )
        return float(L * L / (2.0 * n) * etas.sum())
    if cls == "nonconvex_smooth":
        if beta is None:
            raise ConfigError("nonconvex lower bound requires beta")
        _require(
            plan.kind == "inverse_t",
            "nonconvex lower bound requires eta_t = c/(beta t)",
        )
        c = plan.coeff * beta
        _require(0.0 < c <= 1.0 + REL_SLACK, "nonconvex lower bound requires c in (0, 1]")
        return float(((plan.T + 1) ** math.log1p(c) - 1.0) / (2.0 * n))
    if cls == "strongly_convex":
        if Ltilde is None or beta is None or gamma is None or d is None:
            raise ConfigError(
                "strongly-convex lower bound requires Ltilde, beta, gamma, and d"
            )
        _require(
            d >= (beta * beta - gamma * gamma) / (3.0 * gamma * gamma),
            "strongly-convex lower bound requires d >= (beta^2 - gamma^2)/(3 gamma^2)",
        )
        _require(
            plan.kind == "constant",
            "strongly-convex lower bound requires a constant step size",
        )
        lo = 2.0 / (gamma * (plan.T + 1))
        hi = 1.0 / (beta + gamma)
        _require(
            lo * (1.0 - REL_SLACK) <= plan.eta <= hi * (1.0 + REL_SLACK),
            f"strongly-convex lower bound requires eta in [{lo!r}, {hi!r}]",
        )
        return float(Ltilde * Ltilde / (32.0 * gamma * n))
    if cls == "nonconvex_lipschitz":
        raise CapabilityError(
            "lower bound for Lipschitz-and-smooth nonconvex losses is open"
        )
    raise ConfigError(f"unknown bound class {cls!r}")


def analytic_gen_error(instance: ProblemInstance, plan: StepSizePlan, n: int) -> float:
    """Exact expected generalization error of a built-in construction.

    The value is identical for every data-independent schedule and every
    batch size, so no schedule argument exists.  Families and admissible
    plans:

    linear                      any plan:
                                (sum_k s_k^2 / n) * sum_t eta_t
    convex_huber                eta_t <= 1/beta (iterates then provably stay
                                inside the Huber region):
                                (1/n) [ beta^2 s_d^2 * sum_t eta_t
                                        prod_{j>t} (1 - beta eta_j)
                                      + (sum_{k<d} s_k^2) * sum_t eta_t ]
    quadratic_nonconvex         decreasing eta_t = coeff/t
    quadratic_strongly_convex   constant eta <= 1/(beta+gamma)

    Both quadratics share one exact series:
    (1/n) sum_k s_k^2 lam_k^2 sum_t eta_t prod_{j>t} (1 - eta_j lam_k).
    """
    etas = plan.etas()
    scales = instance.scales
    if instance.family == "linear":
        return float((scales**2).sum() / n * etas.sum())
    if instance.family == "convex_huber":
        beta = instance.params.beta
        _require(
            etas.size == 0 or etas.max() <= (1.0 / beta) * (1.0 + REL_SLACK),
            "the convex oracle requires eta_t <= 1/beta",
        )
        if instance.params.tau < 2.0 * scales[-1] * (1.0 - REL_SLACK):
            raise RegimeError(
                "the convex oracle requires tau >= twice the last data scale "
                "so iterates stay inside the Huber region"
            )
        tail = suffix_products(1.0 - beta * etas)
        curved = beta * beta * float(scales[-1]) ** 2 * float((etas * tail).sum())
        flat = float((scales[:-1] ** 2).sum()) * float(etas.sum())
        return (curved + flat) / n
    if instance.family in ("quadratic_nonconvex", "quadratic_strongly_convex"):
        if instance.family == "quadratic_nonconvex":
            _require(
                plan.kind == "inverse_t",
                "the nonconvex oracle requires the decreasing plan eta_t = coeff/t",
            )
        else:
            beta, gamma = instance.params.beta, instance.params.gamma
            _require(
                plan.kind == "constant",
                "the strongly-convex oracle requires a constant step size",
            )
            _require(
                plan.T == 0
                or plan.eta <= (1.0 / (beta + gamma)) * (1.0 + REL_SLACK),
                "the strongly-convex oracle requires eta <= 1/(beta+gamma)",
            )
        if etas.size == 0:
            return 0.0
        factors = 1.0 - etas[:, None] * instance.lam  # (T, d)
        tail = suffix_products(factors)
        series = (etas[:, None] * tail).sum(axis=0)  # (d,)
        return float((scales**2 * instance.lam**2 * series).sum() / n)
    raise CapabilityError(
        f"no analytic generalization error for family {instance.family!r}"
    )


def uniform_stability_constant(case: str, **kw) -> float:
    """Uniform-stability constants of the incremental (round-robin, m = 1)
    method, computed with the worst-case-over-datasets technique.

    These are the quantities that stay bounded away from zero as the dataset
    grows, which is what makes that technique vacuous here.  Cases:

    linear_epochs               2 K d eta1            (kw: K, d, eta1)
    convex_single_epoch         2 L^2 eta1            (kw: L, eta1)
    convex_epochs               2 L^2 sum_{k<K} eta_{kn+1}   (kw: L, etas, n, K)
    strongly_convex_single_epoch  2 L^2 eta / (1 - eta gamma)  (kw: L, eta, gamma)
    strongly_convex_epochs      2 L^2 eta max_{i*} sum_{k=1..K}
                                (1 - eta gamma)^{k n - i* - 1}
                                (kw: L, eta, gamma, n, K)
    """
    if case == "linear_epochs":
        return float(2.0 * kw["K"] * kw["d"] * kw["eta1"])
    if case == "convex_single_epoch":
        return float(2.0 * kw["L"] ** 2 * kw["eta1"])
    if case == "convex_epochs":
        etas = np.asarray(kw["etas"], dtype=float)
        n, K = int(kw["n"]), int(kw["K"])
        if etas.shape[0] != n * K:
            raise ConfigError(
                f"convex_epochs expects K*n = {K * n} step sizes, got {etas.shape[0]}"
            )
        return float(2.0 * kw["L"] ** 2 * etas[np.arange(K) * n].sum())
    if case == "strongly_convex_single_epoch":
        eta, gamma = kw["eta"], kw["gamma"]
        return float(2.0 * kw["L"] ** 2 * eta / (1.0 - eta * gamma))
    if case == "strongly_convex_epochs":
        eta, gamma, n, K = kw["eta"], kw["gamma"], int(kw["n"]), int(kw["K"])
        decay = 1.0 - eta * gamma
        k = np.arange(1, K + 1)
        # The maximum over the replaced position i* in [1, n] sits at i* = n.
        best = max(
            float((decay ** (k * n - istar - 1)).sum()) for istar in (1, n)
        )
        return float(2.0 * kw["L"] ** 2 * eta * best)
    raise ConfigError(f"unknown uniform-stability case {case!r}")


@dataclass(eq=False)
class BoundSet:
    """Upper/lower bounds and analytic oracle for one configuration.

    Components a class does not define, or whose step-size regime is not
    met, are absent with the refusal reason recorded; they are never
    silently dropped.
    """

    cls: str
    upper: float | None = None
    lower: float | None = None
    oracle: float | None = None
    reasons: dict = field(default_factory=dict)

    @property
    def regime_ok(self) -> bool:
        return not self.reasons

    @property
    def sandwich_ok(self) -> bool | None:
        """lower <= oracle <= upper, or None when any side is absent."""
        if self.upper is None or self.lower is None or self.oracle is None:
            return None
        slack = 1.0 + REL_SLACK
        return bool(
            self.lower <= self.oracle * slack + 1e-15
            and self.oracle <= self.upper * slack + 1e-15
        )

    def to_dict(self) -> dict:
        return {
            "class": self.cls,
            "upper": self.upper,
            "lower": self.lower,
            "oracle": self.oracle,
            "regime_ok": self.regime_ok,
            "reasons": dict(self.reasons),
            "sandwich_ok": self.sandwich_ok,
        }


def assemble_bound_set(
    cls: str,
    instance: ProblemInstance,
    plan: StepSizePlan,
    n: int,
    Ltilde: float | None = None,
) -> BoundSet:
    """Evaluate whichever of upper/lower/oracle apply to (class, family)."""
    if cls not in BOUND_CLASSES:
        raise ConfigError(f"unknown bound class {cls!r}")
    p = instance.params
    if cls == "strongly_convex" and Ltilde is None and p.L is not None:
        Ltilde = 4.0 * p.L  # the construction's proven path-gradient bound
    out = BoundSet(cls=cls)
    try:
        out.upper = gen_error_upper(
            cls, plan, n, L=p.L, beta=p.beta, gamma=p.gamma, Ltilde=Ltilde
        )
    except (RegimeError, CapabilityError) as e:
        out.reasons["upper"] = str(e)
    try:
        out.lower = gen_error_lower(
            cls, plan, n, L=p.L, beta=p.beta, gamma=p.gamma, Ltilde=Ltilde, d=p.d
        )
    except (RegimeError, CapabilityError) as e:
        out.reasons["lower"] = str(e)
    try:
        out.oracle = analytic_gen_error(instance, plan, n)
    except (RegimeError, CapabilityError) as e:
        out.reasons["oracle"] = str(e)
    return out
