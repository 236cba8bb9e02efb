"""Evaluation metrics and radius sweeps.

Metrics follow the recourse-evaluation playbook: local fidelity of the
surrogate against the black-box on an evaluation ball, sensitivity of
the fitted slope to Gaussian perturbations of the query point, recourse
cost, validity against the current model, and validity against an
ensemble of retrained future models. sweep() runs the whole pipeline
over a grid of negative-class radii and emits one report row per
radius, which is the input for cost-validity Pareto plots.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._io import atomic_write_text
from .blackbox import TrainConfig, simulate_future_models, train_mlp
from .errors import CvasError, EmptyInput
from .moments import estimate_moments
from .recourse import (
    actionable_recourse,
    default_action_grids,
    fit_surrogate,
    l1_projection,
)
from .sampler import SamplerConfig, max_pairwise_distance, sample_ball, synthesize
from .surrogate import Divergence, solve_cvas

CSV_HEADER = ("config_id,divergence,rho_pos,rho_neg,mode,mean_cost,"
              "current_validity,future_validity,local_fidelity,sensitivity,"
              "n_skipped")


def local_fidelity(model, surrogate, x0, r_fid, n=1000, seed=0):
    """Fraction of an evaluation ball where model and surrogate agree.

    Draws n points uniformly from the L2 ball of radius r_fid around
    x0 and compares hard labels. `model` is anything with a
    label(matrix) -> {-1,+1} method, so a Surrogate can play the model
    role too.
    """
    if r_fid <= 0.0:
        raise ValueError("r_fid must be positive")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    points = sample_ball(x0, r_fid, n, seed)
    return float(np.mean(model.label(points) == surrogate.label(points)))


def sensitivity(pipeline_config, model, dataset, x0, n_neighbors=10,
                noise_var=0.001, seed=0):
    """Largest slope change under Gaussian perturbation of the query.

    pipeline_config is a (SamplerConfig, Divergence) pair describing the
    full fitting pipeline. Fits the surrogate at x0 and at n_neighbors
    draws from N(x0, noise_var * I), all with the same frozen sampler
    seed so the only varying input is the query point, and returns
    max ||w(x0) - w(x')||_2 over the neighbors (normalized slopes).
    Neighbors whose pipeline fails are skipped; at least one must
    succeed.
    """
    sampler_config, divergence = pipeline_config
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    base = fit_surrogate(model, x0, dataset, sampler_config, divergence)
    rng = np.random.default_rng(seed)
    neighbors = x0 + rng.normal(0.0, math.sqrt(noise_var),
                                size=(n_neighbors, x0.shape[0]))
    worst = None
    last_error = None
    for neighbor in neighbors:
        try:
            other = fit_surrogate(model, neighbor, dataset, sampler_config,
                                  divergence)
        except CvasError as exc:
            last_error = exc
            continue
        gap = float(np.linalg.norm(base.w - other.w))
        worst = gap if worst is None else max(worst, gap)
    if worst is None:
        raise last_error
    return worst


def validity_metrics(recourses, current_model, future_models):
    """(current validity, future validity, mean cost) of a recourse batch.

    Current validity is the fraction of recourse points the current
    model labels +1; future validity averages that fraction over the
    ensemble; mean cost averages the L1 costs.
    """
    if not recourses:
        raise EmptyInput("no recourses to evaluate")
    if not future_models:
        raise EmptyInput("future-model ensemble is empty")
    points = np.vstack([r.x_r for r in recourses])
    current = float(np.mean(current_model.label(points) == 1))
    future = float(np.mean([np.mean(m.label(points) == 1) for m in future_models]))
    mean_cost = float(np.mean([r.cost for r in recourses]))
    return current, future, mean_cost


def pareto_frontier(points):
    """Non-dominated (cost, validity) pairs, ascending in cost.

    A point is dominated when another has cost <= and validity >= with
    at least one strict. Exact duplicates keep their first occurrence.
    """
    points = [(float(c), float(v)) for c, v in points]
    order = sorted(range(len(points)),
                   key=lambda i: (points[i][0], -points[i][1], i))
    frontier = []
    best_validity = -math.inf
    seen_exact = set()
    for i in order:
        cost, validity = points[i]
        if (cost, validity) in seen_exact:
            continue
        if validity > best_validity:
            frontier.append(points[i])
            seen_exact.add((cost, validity))
            best_validity = validity
    return frontier


@dataclass(frozen=True)
class EvalRow:
    """One sweep configuration's metrics, in CSV column order."""

    config_id: str
    divergence: str
    rho_pos: float
    rho_neg: float
    mode: str
    mean_cost: float
    current_validity: float
    future_validity: float
    local_fidelity: float
    sensitivity: float
    n_skipped: int


@dataclass(frozen=True)
class EvalReport:
    rows: tuple

    def __post_init__(self):
        rows = tuple(self.rows)
        ids = [row.config_id for row in rows]
        if len(set(ids)) != len(ids):
            raise ValueError("EvalReport rows must have unique config_id keys")
        object.__setattr__(self, "rows", rows)

    def to_csv(self, path):
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(",".join([
                r.config_id, r.divergence, repr(r.rho_pos), repr(r.rho_neg),
                r.mode, repr(r.mean_cost), repr(r.current_validity),
                repr(r.future_validity), repr(r.local_fidelity),
                repr(r.sensitivity), str(r.n_skipped),
            ]))
        atomic_write_text(path, "\n".join(lines) + "\n")

    def to_json(self, path):
        records = [{
            "config_id": r.config_id, "divergence": r.divergence,
            "rho_pos": r.rho_pos, "rho_neg": r.rho_neg, "mode": r.mode,
            "mean_cost": r.mean_cost, "current_validity": r.current_validity,
            "future_validity": r.future_validity,
            "local_fidelity": r.local_fidelity, "sensitivity": r.sensitivity,
            "n_skipped": r.n_skipped,
        } for r in self.rows]
        atomic_write_text(path, json.dumps(records, indent=2) + "\n")


@dataclass(frozen=True)
class EvalConfig:
    """Master configuration for sweep().

    The current model trains with `train` verbatim; the ensemble and the
    per-instance sampler/fidelity/sensitivity streams take seeds derived
    from the master `seed`, so two sweeps with equal configs are
    bit-identical. r_fid = None resolves to 10% of the max pairwise
    distance of the present dataset (r_p inside `sampler` resolves to 5%
    as usual).
    """

    seed: int = 0
    rho_pos: float = 0.0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_models: int = 100
    fraction: float = 0.8
    r_fid: float = None
    fid_n: int = 1000
    sens_neighbors: int = 10
    sens_noise_var: float = 0.001
    action_kinds: tuple = None


def _derived_seeds(master, count):
    state = np.random.SeedSequence(master).generate_state(count, dtype=np.uint32)
    return [int(s) for s in state]


def sweep(dataset_present, dataset_shifted, instances, divergence_kind, rho_grid,
          mode, config=EvalConfig()):
    """Full evaluation over a grid of negative-class radii.

    Trains the current model on the present dataset and the future
    ensemble on the shifted one, then for every rho in the grid
    generates a recourse for every instance and aggregates the metrics
    into one report row. Instances whose sampling or solve fails are
    skipped and counted in n_skipped. Deterministic per master seed.
    """
    instances = np.atleast_2d(np.asarray(instances, dtype=float))
    if instances.size == 0:
        raise EmptyInput("no instances to sweep over")
    rho_grid = [float(r) for r in rho_grid]
    if not rho_grid:
        raise EmptyInput("empty rho grid")
    if mode not in ("projection", "actionable"):
        raise ValueError(f"unknown recourse mode {mode!r}")

    present_x, present_y = dataset_present
    shifted_x, shifted_y = dataset_shifted
    present_x = np.asarray(present_x, dtype=float)
    n_instances = instances.shape[0]
    seeds = _derived_seeds(config.seed, 1 + 3 * n_instances)

    # The current model trains with config.train verbatim so callers can
    # reproduce it (e.g. to select unfavorably classified instances).
    model = train_mlp(present_x, present_y, config.train)
    ensemble = simulate_future_models(shifted_x, shifted_y,
                                      n_models=config.n_models,
                                      fraction=config.fraction,
                                      config=replace(config.train, seed=seeds[0]))

    r_p = config.sampler.r_p
    if r_p is None:
        r_p = 0.05 * max_pairwise_distance(present_x, seed=config.seed)
    r_fid = config.r_fid
    if r_fid is None:
        r_fid = 0.1 * max_pairwise_distance(present_x, seed=config.seed)

    # Boundary samples do not depend on rho; fit moments once per instance.
    prepared = []
    for i, x0 in enumerate(instances):
        sampler_cfg = replace(config.sampler, seed=seeds[1 + 3 * i], r_p=r_p)
        try:
            sample = synthesize(x0, present_x, model, sampler_cfg)
            moments = (estimate_moments(sample.positives),
                       estimate_moments(sample.negatives))
        except CvasError:
            prepared.append(None)
            continue
        prepared.append((x0, sampler_cfg, moments,
                         seeds[1 + 3 * i + 1], seeds[1 + 3 * i + 2]))

    rows = []
    for rho in rho_grid:
        divergence = Divergence(kind=divergence_kind, rho_pos=config.rho_pos,
                                rho_neg=rho)
        recourses, fidelities, sensitivities = [], [], []
        skipped = sum(1 for p in prepared if p is None)
        for item in prepared:
            if item is None:
                continue
            x0, sampler_cfg, (mom_pos, mom_neg), fid_seed, sens_seed = item
            try:
                surrogate = solve_cvas(mom_pos, mom_neg, divergence)
                if mode == "projection":
                    result = l1_projection(x0, surrogate)
                else:
                    actions = default_action_grids(x0, present_x,
                                                   kinds=config.action_kinds)
                    result = actionable_recourse(x0, surrogate, actions)
            except CvasError:
                skipped += 1
                continue
            blackbox_valid = bool(model.label(result.x_r[None, :])[0] == 1)
            recourses.append(replace(result, blackbox_valid=blackbox_valid))
            fidelities.append(local_fidelity(model, surrogate, x0, r_fid,
                                             n=config.fid_n, seed=fid_seed))
            try:
                sensitivities.append(sensitivity(
                    (sampler_cfg, divergence), model, present_x, x0,
                    n_neighbors=config.sens_neighbors,
                    noise_var=config.sens_noise_var, seed=sens_seed))
            except CvasError:
                pass
        if not recourses:
            raise EmptyInput(f"every instance failed at rho_neg = {rho}")
        current, future, mean_cost = validity_metrics(recourses, model, ensemble)
        kind_value = divergence.kind.value
        rows.append(EvalRow(
            config_id=f"{kind_value}_rpos{config.rho_pos:g}_rneg{rho:g}_{mode}",
            divergence=kind_value,
            rho_pos=float(config.rho_pos),
            rho_neg=rho,
            mode=mode,
            mean_cost=mean_cost,
            current_validity=current,
            future_validity=future,
            local_fidelity=float(np.mean(fidelities)),
            sensitivity=float(np.mean(sensitivities)) if sensitivities else 0.0,
            n_skipped=skipped,
        ))
    return EvalReport(rows=tuple(rows))
