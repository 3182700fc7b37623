"""Mini-batch gradient descent with pluggable batch schedules.

The update at step t averages the example gradients over the selected batch:

    w_{t+1} = w_t - (eta_t / m) * sum_{z in batch_t} grad f(w_t, z)

``run`` executes a single trajectory; ``run_paired`` executes the same
schedule realization on a dataset and on all n of its single-replacement
neighbors, sharing one index matrix across the n+1 runs.  Both are thin
wrappers over a core loop that is vectorized across stacked trajectories.
Closed-form final iterates are available for the built-in constructions and
serve as independent oracles for the iterative path.

The engine never projects or clips: a non-finite iterate raises
``DivergenceError`` naming the step instead of being silently handled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from batchstab._series import suffix_products
from batchstab.errors import (
    AnalyticRegionError,
    CapabilityError,
    ConfigError,
    DivergenceError,
    RegimeError,
)
from batchstab.problems import Dataset, ProblemInstance, REL_SLACK
from batchstab.schedule import RealizedSchedule

PLAN_KINDS = ("constant", "inverse_t", "custom")


@dataclass(frozen=True)
class StepSizePlan:
    """Step-size sequence: constant eta, inverse-time coeff/t, or explicit values."""

    kind: str
    T: int
    eta: float | None = None
    coeff: float | None = None
    values: tuple[float, ...] | None = None

    def validate(self) -> None:
        if self.kind not in PLAN_KINDS:
            raise ConfigError(f"plan kind {self.kind!r} is not one of {PLAN_KINDS}")
        if self.T < 0:
            raise ConfigError(f"plan horizon T must be >= 0, got {self.T}")
        if self.kind == "constant" and (self.eta is None or self.eta <= 0):
            raise ConfigError("constant plan requires eta > 0")
        if self.kind == "inverse_t" and (self.coeff is None or self.coeff <= 0):
            raise ConfigError("inverse_t plan requires coeff > 0")
        if self.kind == "custom":
            if self.values is None or len(self.values) != self.T:
                raise ConfigError("custom plan requires exactly T values")
            # zero entries are allowed so frozen-step controls stay expressible
            if any(v < 0 for v in self.values):
                raise ConfigError("custom plan requires every eta_t >= 0")

    def etas(self) -> np.ndarray:
        self.validate()
        if self.kind == "constant":
            return np.full(self.T, float(self.eta))
        if self.kind == "inverse_t":
            return float(self.coeff) / np.arange(1, self.T + 1, dtype=float)
        return np.asarray(self.values, dtype=float)

    def to_config(self) -> dict:
        cfg = {"kind": self.kind, "T": self.T}
        if self.eta is not None:
            cfg["eta"] = self.eta
        if self.coeff is not None:
            cfg["coeff"] = self.coeff
        if self.values is not None:
            cfg["values"] = list(self.values)
        return cfg


def constant_plan(eta: float, T: int) -> StepSizePlan:
    return StepSizePlan(kind="constant", T=T, eta=float(eta))


def inverse_t_plan(coeff: float, T: int) -> StepSizePlan:
    """eta_t = coeff / t."""
    return StepSizePlan(kind="inverse_t", T=T, coeff=float(coeff))


def custom_plan(values) -> StepSizePlan:
    vals = tuple(float(v) for v in values)
    return StepSizePlan(kind="custom", T=len(vals), values=vals)


@dataclass(eq=False)
class Trajectory:
    """Iterates w_1 ... w_{T+1}; ``iterates[k]`` is w_{k+1} (0-based k)."""

    iterates: np.ndarray
    schedule: RealizedSchedule
    etas: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def T(self) -> int:
        return self.iterates.shape[0] - 1


@dataclass(eq=False)
class PairedTrajectory:
    """n+1 runs of one schedule realization on a dataset and its neighbors.

    ``paths`` has shape (T+1, n+1, d): column 0 is the run on the base
    dataset, column i the run with example i replaced.  ``paths`` is None
    when only finals were kept; ``finals`` is always (n+1, d).  All runs
    share the starting point, the step plan, and the realized schedule.
    """

    finals: np.ndarray
    schedule: RealizedSchedule
    etas: np.ndarray
    m: int
    paths: np.ndarray | None = None
    grad_sup: float | None = None

    @property
    def n(self) -> int:
        return self.finals.shape[0] - 1

    @property
    def base_final(self) -> np.ndarray:
        return self.finals[0]

    @property
    def base_path(self) -> np.ndarray:
        return self.paths[:, 0, :]

    def perturbed_path(self, i: int) -> np.ndarray:
        """Path of the run on the i-th-replaced neighbor (1-based i)."""
        return self.paths[:, i, :]


def _resolve_w1(instance: ProblemInstance, w1) -> np.ndarray:
    if w1 is None:
        return instance.w1.copy()
    w1 = np.asarray(w1, dtype=float)
    if w1.shape != (instance.d,):
        raise ConfigError(f"w1 must have length d={instance.d}")
    if instance.family == "convex_huber" and not np.array_equal(w1, instance.w1):
        raise ConfigError(
            "convex_huber anchors its loss at the instance's initial point; "
            "run with the same w1 the instance was built with"
        )
    return w1.copy()


def _huber_region_limit(instance: ProblemInstance, etas: np.ndarray) -> float | None:
    """Half-width of the invariant region, when the plan guarantees one."""
    if instance.family != "convex_huber" or etas.size == 0:
        return None
    p = instance.params
    if etas.max() > (1.0 / p.beta) * (1.0 + REL_SLACK):
        return None
    if p.tau < 2.0 * instance.scales[-1] * (1.0 - REL_SLACK):
        return None
    return 0.5 * p.tau


def _evolve(
    instance: ProblemInstance,
    data: np.ndarray,
    batches: np.ndarray,
    etas: np.ndarray,
    W: np.ndarray,
    keep_path: bool,
    track_grad_sup: bool,
) -> tuple[np.ndarray, np.ndarray | None, float | None]:
    """Advance stacked trajectories W (R, d) through all T steps.

    data is (n, d) shared or (R, n, d) per-trajectory; all trajectories read
    the same (T, m) index matrix.
    """
    T = etas.shape[0]
    R = W.shape[0]
    path = None
    if keep_path:
        path = np.empty((T + 1, R, instance.d))
        path[0] = W
    shared_data = data.ndim == 2
    limit = _huber_region_limit(instance, etas)
    w1d = instance.w1[-1]
    sup = None
    if track_grad_sup:
        sup = float(instance.grad_sup_norm(W).max())

    for t in range(T):
        idx = batches[t]
        Zb = data[idx] if shared_data else data[:, idx, :]
        g = instance.batch_grad_mean(W, Zb)
        W = W - etas[t] * g
        if not np.all(np.isfinite(W)):
            raise DivergenceError(f"non-finite iterate produced at step {t + 1}")
        if limit is not None:
            drift = np.abs(W[..., -1] - w1d).max()
            if drift > limit * (1.0 + REL_SLACK):
                raise AnalyticRegionError(
                    f"step {t + 1}: |w^d - w1^d| = {drift!r} exceeded the "
                    f"invariant half-width {limit!r}; this indicates an engine bug"
                )
        if track_grad_sup:
            sup = max(sup, float(instance.grad_sup_norm(W).max()))
        if keep_path:
            path[t + 1] = W
    return W, path, sup


def run(
    instance: ProblemInstance,
    S: Dataset,
    sched: RealizedSchedule,
    plan: StepSizePlan,
    w1=None,
) -> Trajectory:
    """Run the iterate map once, keeping the whole path."""
    etas = plan.etas()
    _check_run_inputs(instance, S, sched, etas)
    W0 = _resolve_w1(instance, w1)[None, :]
    _, path, _ = _evolve(
        instance, S.examples, sched.batches, etas, W0, keep_path=True,
        track_grad_sup=False,
    )
    return Trajectory(iterates=path[:, 0, :], schedule=sched, etas=etas)


def run_final(
    instance: ProblemInstance,
    S: Dataset,
    sched: RealizedSchedule,
    plan_or_etas,
    w1=None,
) -> np.ndarray:
    """Final iterate only; the cheap path used by Monte Carlo loops."""
    etas = (
        plan_or_etas.etas()
        if isinstance(plan_or_etas, StepSizePlan)
        else np.asarray(plan_or_etas, dtype=float)
    )
    _check_run_inputs(instance, S, sched, etas)
    W0 = _resolve_w1(instance, w1)[None, :]
    W, _, _ = _evolve(
        instance, S.examples, sched.batches, etas, W0, keep_path=False,
        track_grad_sup=False,
    )
    return W[0]


def run_paired(
    instance: ProblemInstance,
    S: Dataset,
    replacements: np.ndarray,
    sched: RealizedSchedule,
    plan: StepSizePlan,
    w1=None,
    keep_path: bool = True,
    track_grad_sup: bool = False,
) -> PairedTrajectory:
    """Run on S and on all n single-replacement neighbors, one shared schedule.

    ``replacements`` is (n, d); neighbor i swaps example i for
    ``replacements[i-1]``.  All n+1 runs start from the same point and read
    the identical realized index matrix, so trajectories can only diverge
    after the first step that selects the replaced index.
    """
    etas = plan.etas()
    _check_run_inputs(instance, S, sched, etas)
    replacements = np.asarray(replacements, dtype=float)
    if replacements.shape != (S.n, instance.d):
        raise ConfigError(
            f"replacements must be shaped (n, d) = {(S.n, instance.d)}, "
            f"got {replacements.shape}"
        )
    n = S.n
    stacked = np.repeat(S.examples[None, :, :], n + 1, axis=0)
    stacked[np.arange(1, n + 1), np.arange(n)] = replacements
    W0 = np.repeat(_resolve_w1(instance, w1)[None, :], n + 1, axis=0)
    if track_grad_sup and instance.family not in (
        "quadratic_nonconvex",
        "quadratic_strongly_convex",
    ):
        track_grad_sup = False
    finals, path, sup = _evolve(
        instance, stacked, sched.batches, etas, W0, keep_path=keep_path,
        track_grad_sup=track_grad_sup,
    )
    return PairedTrajectory(
        finals=finals, schedule=sched, etas=etas, m=sched.m, paths=path,
        grad_sup=sup,
    )


def _check_run_inputs(
    instance: ProblemInstance, S: Dataset, sched: RealizedSchedule, etas: np.ndarray
) -> None:
    if S.examples.shape != (S.n, instance.d):
        raise ConfigError("dataset examples must be shaped (n, d)")
    if sched.n != S.n:
        raise ConfigError(
            f"schedule was realized for n={sched.n} but the dataset has n={S.n}"
        )
    if sched.T != etas.shape[0]:
        raise ConfigError(
            f"plan length {etas.shape[0]} does not match schedule horizon {sched.T}"
        )
    if sched.T and (sched.batches.min() < 0 or sched.batches.max() >= S.n):
        raise ConfigError("schedule indices out of dataset range")


def closed_form_final(
    instance: ProblemInstance,
    S: Dataset,
    sched: RealizedSchedule,
    plan: StepSizePlan,
    w1=None,
) -> np.ndarray:
    """Analytic final iterate for the built-in families; oracle for ``run``.

    linear:      w1 - (1/m) sum_t eta_t sum_{z in K_t} z
    convex_huber: the linear form on the first d-1 coordinates, and on the
                 last one the affine recursion solved in closed form with
                 suffix products of (1 - beta eta_j); valid while iterates
                 stay inside the Huber region, which requires eta_t <= 1/beta.
    quadratics:  per coordinate k, the affine recursion with factors
                 (1 - eta_t lam_k) solved the same way, any step plan.
    """
    etas = plan.etas()
    _check_run_inputs(instance, S, sched, etas)
    w1v = _resolve_w1(instance, w1)
    T, m = sched.T, sched.m
    if T == 0:
        return w1v
    batch_sums = S.examples[sched.batches].sum(axis=1)  # (T, d)

    if instance.family == "linear":
        return w1v - (etas[:, None] * batch_sums).sum(axis=0) / m

    if instance.family == "convex_huber":
        beta = instance.params.beta
        if etas.max() > (1.0 / beta) * (1.0 + REL_SLACK):
            raise RegimeError(
                "the closed form for convex_huber requires eta_t <= 1/beta "
                "(outside it iterates may leave the Huber region)"
            )
        out = np.empty(instance.d)
        out[:-1] = w1v[:-1] - (etas[:, None] * batch_sums[:, :-1]).sum(axis=0) / m
        factors = 1.0 - beta * etas
        tail = suffix_products(factors)
        anchor_mult = factors.prod() + beta * (etas * tail).sum()
        out[-1] = w1v[-1] * anchor_mult + (beta / m) * (
            etas * tail * batch_sums[:, -1]
        ).sum()
        return out

    if instance.family in ("quadratic_nonconvex", "quadratic_strongly_convex"):
        factors = 1.0 - etas[:, None] * instance.lam  # (T, d)
        tail = suffix_products(factors)
        homogeneous = factors.prod(axis=0) * w1v
        driven = (etas[:, None] * tail * instance.lam * batch_sums).sum(axis=0) / m
        return homogeneous + driven

    raise CapabilityError(
        f"no closed-form final iterate for family {instance.family!r}"
    )


def trajectory_to_csv(traj: Trajectory, path: str) -> None:
    """One CSV row per iterate, T+1 rows of d coordinates."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in traj.iterates:
            writer.writerow([repr(float(v)) for v in row])
