"""Continuum-limit scaling experiment.

Doubling the block count while doubling the coupling stiffness and halving
the mass, plate stiffness and friction threshold keeps the macroscopic
constants N*m, k_c/N, N*k_p and N*F0 fixed, so every level discretizes the
same continuum medium.  The suite runs a ladder of such levels and tabulates
distances between the natural-log magnitude distributions of successive
levels; the distances are a diagnostic, not a convergence claim.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .events import EventCatalog
from .integrator import IntegratorConfig, run_simulation, warm_up
from .model import ModelParams
from .stats import MagnitudeDistribution, build_distribution, distribution_distance

__all__ = [
    "ScalingLevel",
    "ScalingSuiteResult",
    "ScalingError",
    "rescale",
    "distance_table",
    "run_scaling_suite",
]


class ScalingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScalingLevel:
    """Parameter set for the n-th doubling of the block count."""

    n: int
    n_blocks: int
    params: ModelParams


def rescale(base: ModelParams, n: int) -> ScalingLevel:
    """Apply ``n`` doublings to a base parameter set.

    Powers of two are exact in binary floating point, so the four matching
    constants hold to the last bit.
    """
    if n < 0:
        raise ValueError(f"doubling count must be >= 0, got {n}")
    factor = 2**n
    params = replace(
        base,
        n_blocks=base.n_blocks * factor,
        mass=base.mass / factor,
        coupling_stiffness=base.coupling_stiffness * factor,
        plate_stiffness=base.plate_stiffness / factor,
        friction=replace(base.friction, f0=base.friction.f0 / factor),
    )
    return ScalingLevel(n=n, n_blocks=params.n_blocks, params=params)


@dataclass
class ScalingSuiteResult:
    levels: list[ScalingLevel]
    event_counts: list[int]
    distributions: list[MagnitudeDistribution]
    distances: list[dict]


def distance_table(distributions: list[MagnitudeDistribution]) -> list[dict]:
    """Distances between successive distributions in both norms."""
    rows = []
    for k in range(len(distributions) - 1):
        rows.append(
            {
                "pair": f"f{k}-f{k + 1}",
                "euclidean": distribution_distance(
                    distributions[k], distributions[k + 1], "euclidean"
                ),
                "max": distribution_distance(distributions[k], distributions[k + 1], "max"),
            }
        )
    return rows


def _run_level(level: ScalingLevel, cfg: IntegratorConfig, seed_seq) -> EventCatalog:
    rng = np.random.default_rng(seed_seq)
    state = warm_up(level.params, cfg, rng)
    result = run_simulation(state, level.params, cfg, collect_events=True)
    return result.catalog


def run_scaling_suite(
    base: ModelParams,
    n_max: int,
    cfg: IntegratorConfig,
    bin_width: float = 0.2,
    workers: int = 1,
) -> ScalingSuiteResult:
    """Run levels 0..n_max with a shared horizon and tabulate distances.

    Every level gets an independent RNG stream spawned from the master seed,
    so results do not depend on the worker count.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    levels = [rescale(base, n) for n in range(n_max + 1)]
    seeds = np.random.SeedSequence(cfg.seed).spawn(n_max + 1)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            catalogs = list(pool.map(_run_level, levels, [cfg] * len(levels), seeds))
    else:
        catalogs = [_run_level(level, cfg, seed) for level, seed in zip(levels, seeds)]

    for level, catalog in zip(levels, catalogs):
        if catalog.total_events == 0:
            raise ScalingError(
                f"scaling level n={level.n} (N={level.n_blocks}) produced no events; "
                "increase the horizon"
            )
    distributions = [
        build_distribution(catalog, bin_width, log_base="natural") for catalog in catalogs
    ]
    return ScalingSuiteResult(
        levels=levels,
        event_counts=[c.total_events for c in catalogs],
        distributions=distributions,
        distances=distance_table(distributions),
    )
