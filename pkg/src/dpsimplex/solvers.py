"""Private saddle-point solvers on products of simplices.

All three private solvers release only sampled vertices (never the dense
iterates); the dense multiplicative-weights state stays internal. Each run is
strictly sequential and consumes fresh samples through the dataset cursor;
distinct runs parallelize across disjoint shards and independent streams.

After every run the relevant privacy precondition is re-asserted from the
realized step, batch, and draw counts; a violation raises
:class:`~dpsimplex.errors.BudgetError` instead of returning a result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError
from .oracles import (
    Dataset,
    PerSampleObjective,
    PopulationObjective,
    TruncGeom,
    batch_gradient,
    bias_reduced_gradient,
    sample_trunc_geom,
)
from .privacy import (
    BrPlan,
    PrivacyParams,
    SsmdPlan,
    adaptive_budget_ok,
    exp_mech_sample,
    max_step_vertex_smd,
    plan_anytime_sco,
    plan_bias_reduced,
)
from .rng import RngStream
from .sco import FrozenXObjective, FrozenYObjective, solve_dp_sco
from .simplex import LogWeights, SimplexPoint, mwu_step, sample_vertex, sparsify, to_point


@dataclass(frozen=True)
class SaddleSolution:
    """Output pair of a saddle solver plus its resource accounting."""

    x: SimplexPoint
    y: SimplexPoint
    samples_used: int
    steps_run: int
    vertex_draws: int
    x_vertex_indices: np.ndarray | None = None


@dataclass(frozen=True)
class BrRunTrace:
    """Stopping-time diagnostics of one bias-reduced run."""

    N_sequence: tuple[int, ...]
    total_weight: int
    stop_step: int


def solve_smd_vertex(
    obj: PerSampleObjective,
    dataset: Dataset,
    plan: SsmdPlan,
    rng: RngStream,
    exact_iterates: bool = False,
    keep_x_draws: bool = False,
) -> SaddleSolution:
    """Entropic mirror descent with sparsified iterates and vertex-sampled output.

    Per step: sparsify both iterates with K vertex draws, take a fresh batch,
    evaluate the saddle gradient at the sparsified pair, update both blocks in
    log domain, and contribute one fresh vertex draw per player to the output
    average.

    ``exact_iterates=True`` replaces every sampling stage with the identity,
    which reproduces the non-private baseline trajectory exactly and is used
    by the coupling tests; such a run releases no vertices, so the privacy
    precondition is not enforced for it. ``keep_x_draws=True`` records the
    per-step x output vertices (the released categories used for
    synthetic-data generation).
    """
    if not exact_iterates:
        plan.validate()
    if dataset.remaining < plan.T * plan.B_batch:
        raise BudgetError(
            f"plan needs {plan.T * plan.B_batch} fresh samples, dataset has {dataset.remaining}"
        )
    xw = LogWeights.uniform(obj.d_x)
    yw = LogWeights.uniform(obj.d_y)
    x_acc = np.zeros(obj.d_x)
    y_acc = np.zeros(obj.d_y)
    draws = 0
    x_indices: list[int] = []
    for _ in range(plan.T):
        x_t = to_point(xw)
        y_t = to_point(yw)
        if exact_iterates:
            x_hat, y_hat = x_t, y_t
            x_acc += x_t.coords
            y_acc += y_t.coords
        else:
            x_hat = sparsify(x_t, plan.K, rng)
            y_hat = sparsify(y_t, plan.K, rng)
            xi = sample_vertex(x_t, rng)
            yi = sample_vertex(y_t, rng)
            x_acc[xi] += 1.0
            y_acc[yi] += 1.0
            draws += 2 * plan.K + 2
            if keep_x_draws:
                x_indices.append(xi)
        batch = dataset.take(plan.B_batch)
        g = batch_gradient(obj, x_hat, y_hat, batch)
        xw = mwu_step(xw, -g.g_x, plan.tau)
        yw = mwu_step(yw, -g.g_y, plan.tau)

    if not exact_iterates:
        cap = max_step_vertex_smd(plan.B_batch, plan.epsilon, plan.delta, obj.L0, plan.T, plan.K)
        if plan.tau > cap * (1 + 1e-9):
            raise BudgetError("realized schedule violates the step-size privacy cap")
    return SaddleSolution(
        x=SimplexPoint(x_acc / plan.T),
        y=SimplexPoint(y_acc / plan.T),
        samples_used=plan.T * plan.B_batch,
        steps_run=plan.T,
        vertex_draws=draws,
        x_vertex_indices=np.array(x_indices, dtype=np.int64) if keep_x_draws else None,
    )


def solve_smd_bias_reduced(
    obj: PerSampleObjective, dataset: Dataset, plan: BrPlan, rng: RngStream
) -> tuple[SaddleSolution, BrRunTrace]:
    """Mirror descent driven by the multilevel bias-reduced gradient estimator.

    Runs until the cumulative level weight would cross ``U - 2^M``: a step
    with freshly drawn level N executes only if ``sum 2^{N_i} <= U - 2^M``
    including its own weight, so with M = 0 the loop performs exactly
    ``floor(U) - 1`` deterministic steps. The output averages one vertex draw
    per executed step per player.
    """
    plan.validate()
    tg = TruncGeom(0.5, plan.M)
    threshold = plan.U - 2.0**plan.M
    xw = LogWeights.uniform(obj.d_x)
    yw = LogWeights.uniform(obj.d_y)
    x_acc = np.zeros(obj.d_x)
    y_acc = np.zeros(obj.d_y)
    levels: list[int] = []
    weight = 0
    samples = 0
    draws = 0
    while True:
        N = sample_trunc_geom(tg, rng)
        if weight + 2**N > threshold:
            break
        weight += 2**N
        levels.append(N)
        x_t = to_point(xw)
        y_t = to_point(yw)
        xi = sample_vertex(x_t, rng)
        yi = sample_vertex(y_t, rng)
        x_acc[xi] += 1.0
        y_acc[yi] += 1.0
        batch = dataset.take(max(1, math.ceil(2**N / plan.alpha)))
        samples += batch.size
        g = bias_reduced_gradient(obj, x_t, y_t, N, batch, tg, rng)
        draws += 4 * 2**N + 2  # 2^(N+1) pairs for the estimator plus the output pair
        xw = mwu_step(xw, -g.g_x, plan.tau)
        yw = mwu_step(yw, -g.g_y, plan.tau)

    steps = len(levels)
    if steps == 0:
        raise BudgetError("stopping weight too small to execute a single step")
    _audit_bias_reduced(plan, weight, steps)
    sol = SaddleSolution(
        x=SimplexPoint(x_acc / steps),
        y=SimplexPoint(y_acc / steps),
        samples_used=samples,
        steps_run=steps,
        vertex_draws=draws,
    )
    return sol, BrRunTrace(N_sequence=tuple(levels), total_weight=weight, stop_step=steps)


def _audit_bias_reduced(plan: BrPlan, weight: int, steps: int) -> None:
    """Re-check the adaptive composition budget from realized draw counts."""
    if weight > plan.U:
        raise BudgetError(f"realized level weight {weight} exceeded stopping weight {plan.U}")
    eps_vertex = 9.0 * plan.tau * plan.alpha * plan.L0
    releases = 4 * weight + 2 * steps
    if not adaptive_budget_ok(
        np.full(releases, eps_vertex), plan.epsilon, plan.delta
    ):
        raise BudgetError("realized vertex releases exceed the adaptive composition budget")


def solve_smd_nonprivate(
    pop: PopulationObjective, T: int, tau: float, d_x: int, d_y: int
) -> SaddleSolution:
    """Plain entropic mirror descent on exact population gradients.

    No sampling anywhere; returns the average of the dense iterates. This is
    the baseline the sampling layer is validated against.
    """
    if T < 1:
        raise ValueError(f"need T >= 1, got {T}")
    if not (tau > 0):
        raise ValueError(f"need tau > 0, got {tau}")
    xw = LogWeights.uniform(d_x)
    yw = LogWeights.uniform(d_y)
    x_acc = np.zeros(d_x)
    y_acc = np.zeros(d_y)
    for _ in range(T):
        x_t = to_point(xw)
        y_t = to_point(yw)
        x_acc += x_t.coords
        y_acc += y_t.coords
        gx = pop.grad_x(x_t.coords, y_t.coords)
        gy = -pop.grad_y(x_t.coords, y_t.coords)
        xw = mwu_step(xw, -gx, tau)
        yw = mwu_step(yw, -gy, tau)
    return SaddleSolution(
        x=SimplexPoint(x_acc / T),
        y=SimplexPoint(y_acc / T),
        samples_used=0,
        steps_run=T,
        vertex_draws=0,
    )


# --------------------------------------------------------------------------
# boosted selection


def empirical_value(obj: PerSampleObjective, x: np.ndarray, y: np.ndarray, batch) -> float:
    """Batch-mean objective value at a fixed pair."""
    return obj.batch_value(x, y, batch)


def score_candidate_pairs(
    obj: PerSampleObjective,
    holdout,
    pairs: list[tuple[np.ndarray, np.ndarray]],
    x_table: list[list[np.ndarray]],
    y_table: list[list[np.ndarray]],
) -> np.ndarray:
    """Empirical gap surrogate for each candidate pair on a holdout batch.

    ``G_i = max_j F(x_i, y_table[i][j]) + max_j -F(x_table[i][j], y_i)``;
    swapping one holdout sample moves every score by at most ``4B/|holdout|``.
    """
    scores = np.empty(len(pairs))
    for i, (x_i, y_i) in enumerate(pairs):
        best_y = max(empirical_value(obj, x_i, yy, holdout) for yy in y_table[i])
        best_x = max(-empirical_value(obj, xx, y_i, holdout) for xx in x_table[i])
        scores[i] = best_y + best_x
    return scores


def select_pair(
    scores: np.ndarray, B: float, holdout_size: int, eps: float, rng: RngStream
) -> int:
    """Exponential-mechanism pick of the lowest-scoring candidate.

    Weights are ``exp(-eps * |holdout| * G_i / (8B))``, i.e. the exponential
    mechanism on ``-G`` with score sensitivity ``4B/|holdout|``.
    """
    return exp_mech_sample(-np.asarray(scores), 4.0 * B / holdout_size, eps, rng)


def solve_boosted(
    obj: PerSampleObjective,
    dataset: Dataset,
    I: int,
    J: int,
    privacy: PrivacyParams,
    rng: RngStream,
    ell: float | None = None,
) -> SaddleSolution:
    """Boost the bias-reduced solver to a high-probability guarantee.

    Splits the data into four parts: part 1 yields I candidate pairs from
    independent bias-reduced runs, parts 2 and 3 yield I*J approximate best
    responses from the anytime convex solver, and part 4 scores each candidate
    by its empirical gap surrogate. The returned pair is selected by the
    exponential mechanism; all shards are disjoint, so the whole procedure
    stays within the per-shard (eps, delta) budget by parallel composition.

    For a requested failure probability beta, choose ``I = ceil(log2(4/beta))``
    and ``J = ceil(log2(8 I / beta))`` (see :func:`boosting_shape`).
    """
    if I < 1 or J < 1:
        raise ValueError("need I >= 1 and J >= 1")
    if ell is None:
        ell = math.log(obj.d_x) + math.log(obj.d_y)
    n = dataset.remaining
    quarter = n // 4
    if quarter < 1:
        raise BudgetError(f"dataset of {n} cannot be split four ways")
    parts = [dataset.take(quarter) for _ in range(4)]

    cand_size = quarter // I
    inner_size = quarter // (I * J)
    if cand_size < 1 or inner_size < 1:
        raise BudgetError(f"shards too small for I={I}, J={J} with n={n}")

    samples = 0
    steps = 0
    draws = 0
    pairs: list[tuple[np.ndarray, np.ndarray]] = []
    for i in range(I):
        shard = Dataset(parts[0][i * cand_size : (i + 1) * cand_size])
        try:
            plan = plan_bias_reduced(
                shard.n, privacy.epsilon, privacy.delta, obj.L0, obj.L1, obj.L2, ell
            )
        except BudgetError as exc:
            raise BudgetError(f"candidate shard {i}: {exc}") from exc
        sol, _ = solve_smd_bias_reduced(obj, shard, plan, rng.child("candidate", i))
        pairs.append((sol.x.coords, sol.y.coords))
        samples += sol.samples_used
        steps += sol.steps_run
        draws += sol.vertex_draws

    x_table: list[list[np.ndarray]] = [[] for _ in range(I)]
    y_table: list[list[np.ndarray]] = [[] for _ in range(I)]
    for i in range(I):
        for j in range(J):
            lo = (i * J + j) * inner_size
            sl2 = Dataset(parts[1][lo : lo + inner_size])
            sl3 = Dataset(parts[2][lo : lo + inner_size])
            # x_ij approximately minimizes x -> F(x, y_i); y_ij maximizes y -> F(x_i, y)
            fx = FrozenYObjective(obj, pairs[i][1])
            fy = FrozenXObjective(obj, pairs[i][0])
            try:
                plan_x = plan_anytime_sco(
                    sl2.n, privacy.epsilon, privacy.delta, fx.L0, fx.L1, fx.L2,
                    math.log(obj.d_x), "second_order",
                )
                plan_y = plan_anytime_sco(
                    sl3.n, privacy.epsilon, privacy.delta, fy.L0, fy.L1, fy.L2,
                    math.log(obj.d_y), "second_order",
                )
            except BudgetError as exc:
                raise BudgetError(f"inner shard ({i},{j}): {exc}") from exc
            sx = solve_dp_sco(fx, sl2, plan_x, rng.child("inner_x", i, j))
            sy = solve_dp_sco(fy, sl3, plan_y, rng.child("inner_y", i, j))
            x_table[i].append(sx.w_hat.coords)
            y_table[i].append(sy.w_hat.coords)
            samples += sx.samples_used + sy.samples_used

    scores = score_candidate_pairs(obj, parts[3], pairs, x_table, y_table)
    winner = select_pair(scores, obj.B, quarter, privacy.epsilon, rng.child("select"))
    samples += quarter  # the holdout part is consumed by the scoring mechanism
    return SaddleSolution(
        x=SimplexPoint(pairs[winner][0]),
        y=SimplexPoint(pairs[winner][1]),
        samples_used=samples,
        steps_run=steps,
        vertex_draws=draws,
    )


def boosting_shape(beta: float) -> tuple[int, int]:
    """Default (I, J) so the boosted gap bound fails with probability <= beta."""
    if not (0.0 < beta < 1.0):
        raise ValueError(f"failure probability must lie in (0,1), got {beta}")
    I = max(1, math.ceil(math.log2(4.0 / beta)))
    J = max(1, math.ceil(math.log2(8.0 * I / beta)))
    return I, J
