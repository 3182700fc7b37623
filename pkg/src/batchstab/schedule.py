"""Data-independent batch-selection rules and their realizations.

A schedule assigns to every step t a set of m distinct dataset indices.  All
rules here are data independent: the realized T x m index matrix is a
deterministic function of the specification and its seed, never of the
sampled examples.

Supported rules:

    full_batch        every step uses all n indices (m = n)
    round_robin       consecutive wrapping blocks of m indices in fixed order;
                      with m = 1 this is the classical incremental rule
                      1, 2, ..., n, 1, 2, ...
    random_reshuffle  a fresh uniform permutation per epoch, chunked into
                      batches of m (the remainder is dropped when m does not
                      divide n, keeping every batch exactly m indices)
    single_shuffle    one uniform permutation drawn once and reused each epoch
    uniform_random    every step an independent uniform draw of m distinct
                      indices
    custom            an explicit T x m matrix supplied by the caller

Indices are 0-based internally.  CSV exports, ``custom_indices``, and the
1-based helpers follow the {1, ..., n} convention used in reports.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.random import default_rng

from batchstab.errors import ConfigError
from batchstab.seeding import substream

VALID_KINDS = (
    "full_batch",
    "round_robin",
    "random_reshuffle",
    "single_shuffle",
    "uniform_random",
    "custom",
)

STOCHASTIC_KINDS = ("random_reshuffle", "single_shuffle", "uniform_random")


@dataclass(frozen=True)
class ScheduleSpec:
    """Specification of a batch-selection rule.

    ``custom_indices`` rows are 1-based.  The seed is irrelevant for
    ``full_batch``, ``round_robin`` and ``custom`` kinds.
    """

    kind: str
    n: int
    m: int
    T: int
    seed: int = 0
    custom_indices: tuple[tuple[int, ...], ...] | None = None

    def validate(self) -> None:
        if self.kind not in VALID_KINDS:
            raise ConfigError(
                f"schedule kind {self.kind!r} is not one of {VALID_KINDS}"
            )
        if self.n < 1:
            raise ConfigError(f"dataset size n must be >= 1, got {self.n}")
        if not 1 <= self.m <= self.n:
            raise ConfigError(
                f"batch size m must satisfy 1 <= m <= n, got m={self.m}, n={self.n}"
            )
        if self.T < 0:
            raise ConfigError(f"horizon T must be >= 0, got {self.T}")
        if self.kind == "full_batch" and self.m != self.n:
            raise ConfigError(
                f"full_batch requires m = n, got m={self.m}, n={self.n}"
            )
        if self.kind == "custom":
            if self.custom_indices is None:
                raise ConfigError("custom schedule requires custom_indices")
            rows = self.custom_indices
            if len(rows) != self.T:
                raise ConfigError(
                    f"custom_indices has {len(rows)} rows, expected T={self.T}"
                )
            for t, row in enumerate(rows, start=1):
                if len(row) != self.m or len(set(row)) != self.m:
                    raise ConfigError(
                        f"custom_indices row {t} must hold {self.m} distinct indices"
                    )
                if not all(1 <= i <= self.n for i in row):
                    raise ConfigError(
                        f"custom_indices row {t} has an index outside [1, {self.n}]"
                    )
        elif self.custom_indices is not None:
            raise ConfigError("custom_indices is only valid for kind='custom'")

    def label(self) -> str:
        return f"{self.kind}_m{self.m}" if self.kind != "full_batch" else "full_batch"


@dataclass(eq=False)
class RealizedSchedule:
    """Concrete outcome of a batch-selection rule: one index set per step.

    ``batches`` is a (T, m) array of 0-based indices; rows are distinct by
    construction when produced by :func:`realize`.
    """

    batches: np.ndarray
    n: int
    kind: str = "custom"

    def __post_init__(self) -> None:
        self.batches = np.asarray(self.batches, dtype=np.int64)
        if self.batches.ndim != 2:
            raise ConfigError("batches must be a T x m matrix")

    @property
    def T(self) -> int:
        return self.batches.shape[0]

    @property
    def m(self) -> int:
        return self.batches.shape[1]

    def row(self, t: int) -> tuple[int, ...]:
        """Indices selected at step t (both t and the result are 1-based)."""
        if not 1 <= t <= self.T:
            raise ValueError(f"step t must be in [1, {self.T}], got {t}")
        return tuple(sorted(int(i) + 1 for i in self.batches[t - 1]))


def realize(spec: ScheduleSpec) -> RealizedSchedule:
    """Realize a schedule specification into a concrete index matrix.

    Deterministic in (spec, spec.seed): equal seeds give bit-identical
    matrices.  Stochastic kinds draw from dedicated substreams (one per epoch
    for random_reshuffle) so realizations are stable under any outer
    parallelism.
    """
    spec.validate()
    n, m, T = spec.n, spec.m, spec.T

    if spec.kind == "full_batch":
        batches = np.tile(np.arange(n, dtype=np.int64), (T, 1))
    elif spec.kind == "round_robin":
        offsets = np.arange(T, dtype=np.int64)[:, None] * m
        batches = (offsets + np.arange(m, dtype=np.int64)) % n
    elif spec.kind == "custom":
        batches = np.asarray(spec.custom_indices, dtype=np.int64).reshape(T, m) - 1
    elif spec.kind == "single_shuffle":
        perm = default_rng(substream(spec.seed, 0)).permutation(n)
        batches = _epoch_chunks(perm[None, :], n, m, T)
    elif spec.kind == "random_reshuffle":
        steps_per_epoch = n // m
        n_epochs = max(1, -(-T // steps_per_epoch))
        root = substream(spec.seed)
        perms = np.stack(
            [default_rng(child).permutation(n) for child in root.spawn(n_epochs)]
        )
        batches = _epoch_chunks(perms, n, m, T)
    elif spec.kind == "uniform_random":
        rng = default_rng(substream(spec.seed, 0))
        if T * n <= 20_000_000:
            batches = np.argsort(rng.random((T, n)), axis=1)[:, :m].astype(np.int64)
        else:
            batches = np.stack(
                [rng.choice(n, size=m, replace=False) for _ in range(T)]
            ).astype(np.int64)
    else:  # pragma: no cover - guarded by validate
        raise ConfigError(f"unhandled kind {spec.kind!r}")

    return RealizedSchedule(batches=batches, n=n, kind=spec.kind)


def _epoch_chunks(perms: np.ndarray, n: int, m: int, T: int) -> np.ndarray:
    """Chunk permutations into m-sized batches; drop the remainder when m∤n.

    ``perms`` holds one permutation per epoch (a single row is recycled for
    every epoch).  The final epoch is truncated when T is not a multiple of
    the epoch length.
    """
    steps_per_epoch = n // m
    if T == 0:
        return np.empty((0, m), dtype=np.int64)
    n_epochs = -(-T // steps_per_epoch)
    rows = []
    for e in range(n_epochs):
        perm = perms[e % len(perms)]
        rows.append(perm[: steps_per_epoch * m].reshape(steps_per_epoch, m))
    return np.concatenate(rows, axis=0)[:T].astype(np.int64)


def perturbation_indicator(sched: RealizedSchedule, t: int, i: int) -> bool:
    """Whether replacing example i would alter the batch consumed at step t.

    True iff index i is selected at step t; this is exactly the event under
    which runs on a dataset and on its i-th-replaced neighbor read different
    examples.  Both t and i are 1-based.
    """
    if not 1 <= t <= sched.T:
        raise ValueError(f"step t must be in [1, {sched.T}], got {t}")
    if not 1 <= i <= sched.n:
        raise ValueError(f"index i must be in [1, {sched.n}], got {i}")
    return bool(np.any(sched.batches[t - 1] == i - 1))


def indicator_matrix(sched: RealizedSchedule) -> np.ndarray:
    """(T, n) boolean matrix: entry (t, i) true iff index i is selected at t."""
    ind = np.zeros((sched.T, sched.n), dtype=bool)
    if sched.T:
        ind[np.arange(sched.T)[:, None], sched.batches] = True
    return ind


def selection_totals(sched: RealizedSchedule) -> np.ndarray:
    """Per-index selection counts over all T steps (length n)."""
    return indicator_matrix(sched).sum(axis=0)


@dataclass(frozen=True)
class CountingVerdict:
    passed: bool
    first_violation_t: int | None = None
    counts: tuple[int, ...] = field(default_factory=tuple)

    def __bool__(self) -> bool:
        return self.passed


def check_counting_lemma(sched: RealizedSchedule) -> CountingVerdict:
    """Check that every step perturbs exactly m of the n neighboring runs.

    For each step the number of indices whose replacement would change the
    batch must equal the batch size: sum_i 1{i in K_t} = m.  Equivalently
    every row must hold m distinct in-range indices.  Returns the first
    violating step (1-based) otherwise.
    """
    b = sched.batches
    in_range = (b >= 0) & (b < sched.n)
    counts = np.zeros(sched.T, dtype=np.int64)
    for t in range(sched.T):
        row = b[t][in_range[t]]
        counts[t] = np.unique(row).size
    bad = np.nonzero(counts != sched.m)[0]
    if bad.size:
        return CountingVerdict(False, int(bad[0]) + 1, tuple(int(c) for c in counts))
    return CountingVerdict(True, None, tuple(int(c) for c in counts))


def schedule_to_csv(sched: RealizedSchedule, path: str) -> None:
    """Dump the realized matrix as CSV, one step per row, 1-based indices."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for t in range(sched.T):
            writer.writerow([int(i) + 1 for i in sched.batches[t]])


def schedule_from_csv(path: str, n: int) -> RealizedSchedule:
    """Read a realized schedule written by :func:`schedule_to_csv`."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row:
                rows.append([int(v) - 1 for v in row])
    batches = np.asarray(rows, dtype=np.int64) if rows else np.empty((0, n), np.int64)
    return RealizedSchedule(batches=batches, n=n)
