"""Stage functions of the simulation pipeline and the multi-seed experiment.

The command-line front end wires these stages to files; the experiment
runner chains them in memory. Both derive every random stream from the single
master seed, so a seed fully determines a run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import ExperimentConfig
from .flow import FlowField, build_motion_operator, estimate_flow_sequence, upsample_coarse
from .masks import MaskSequence, gen_family
from .operators import CakeOperator, cake_forward
from .solvers import (SolverReport, coarse_estimate, conventional_baseline,
                      reconstruct_optical_flow, reconstruct_tv_l1, spline_baseline)
from .video import NoiseModel, VideoCube, default_scene_spec, rmse_percent, synth_scene

__all__ = [
    "TABLE_ROWS", "make_scene", "make_masks", "make_operator", "acquire",
    "acquire_conventional", "preview", "reconstruct", "evaluate",
    "SeedResult", "ExperimentResult", "run_seed", "run_experiment", "format_metrics_table",
]

# metric-table rows: label, reconstruction method, mask family
TABLE_ROWS: Tuple[Tuple[str, str, Optional[str]], ...] = (
    ("spline", "spline", None),
    ("CAKE", "tvl1", "rademacher"),
    ("DSM-CAKE", "tvl1", "dsm"),
    ("OF-CAKE", "of", "dsm"),
)


def make_scene(config: ExperimentConfig, seed: int) -> VideoCube:
    return synth_scene(default_scene_spec(config.geometry, seed), config.geometry)


def make_masks(config: ExperimentConfig, family: str, seed: int) -> MaskSequence:
    return gen_family(config.geometry, family, seed, config.alpha, config.beta)


def make_operator(config: ExperimentConfig, masks: MaskSequence, seed: int) -> CakeOperator:
    return CakeOperator(config.geometry, masks, config.downsampler, sign_seed=seed)


def _noise(config: ExperimentConfig, seed: int) -> NoiseModel:
    return NoiseModel(config.noise.kind, config.noise.sigma, seed)


def acquire(config: ExperimentConfig, operator: CakeOperator, scene, seed: int) -> VideoCube:
    return cake_forward(operator, scene, _noise(config, seed))


def acquire_conventional(config: ExperimentConfig, scene, seed: int) -> VideoCube:
    return conventional_baseline(scene, config.geometry, _noise(config, seed))


def preview(config: ExperimentConfig, measurement, masks: MaskSequence
            ) -> Tuple[VideoCube, VideoCube, FlowField]:
    """Coarse estimate, its spline upsampling, and the flow estimated on it."""
    coarse = coarse_estimate(measurement, masks)
    upsampled = upsample_coarse(coarse, config.geometry)
    return coarse, upsampled, estimate_flow_sequence(upsampled, config.flow)


def reconstruct(config: ExperimentConfig, method: str, measurement,
                operator: Optional[CakeOperator] = None, masks: Optional[MaskSequence] = None
                ) -> Tuple[VideoCube, Optional[SolverReport]]:
    """Run one reconstruction method.

    ``spline`` expects the conventional block-average cube as ``measurement``;
    ``coarse-only`` returns the upsampled preview; ``of`` estimates flow from
    that preview and, by default, warm-starts from it.
    """
    if method == "spline":
        return spline_baseline(measurement, config.geometry), None
    if method == "tvl1":
        return reconstruct_tv_l1(operator, measurement, config.tvl1)
    if method in ("of", "coarse-only"):
        _, upsampled, flow = preview(config, measurement, masks)
        if method == "coarse-only":
            return upsampled, None
        initial = upsampled if config.of_warm_start == "coarse" else None
        return reconstruct_optical_flow(operator, measurement, build_motion_operator(flow),
                                        params=config.of, initial=initial)
    raise ValueError(f"unknown method {method!r}")


def evaluate(config: ExperimentConfig, estimate, truth) -> float:
    return rmse_percent(estimate, truth, roi=config.roi, discount=config.discount)


@dataclass
class SeedResult:
    seed: int
    rmse: Dict[str, float]
    reports: Dict[str, Optional[SolverReport]]
    seconds: Dict[str, float]
    estimates: Dict[str, VideoCube] = field(default_factory=dict, repr=False)


def run_seed(config: ExperimentConfig, seed: int, rows=TABLE_ROWS,
             keep_estimates: bool = False) -> SeedResult:
    """All table rows for one seed: scene, masks, measurements and reconstructions."""
    scene = make_scene(config, seed)
    result = SeedResult(seed, {}, {}, {})
    cache = {}
    for label, method, family in rows:
        start = time.perf_counter()
        if method == "spline":
            est, report = reconstruct(config, "spline", acquire_conventional(config, scene, seed))
        else:
            if family not in cache:
                masks = make_masks(config, family, seed)
                op = make_operator(config, masks, seed)
                cache[family] = (masks, op, acquire(config, op, scene, seed))
            masks, op, y = cache[family]
            est, report = reconstruct(config, method, y, op, masks)
        result.seconds[label] = time.perf_counter() - start
        result.rmse[label] = evaluate(config, est, scene)
        result.reports[label] = report
        if keep_estimates:
            result.estimates[label] = est
    return result


@dataclass
class ExperimentResult:
    seeds: List[int]
    per_seed: List[SeedResult]

    @property
    def labels(self) -> List[str]:
        return list(self.per_seed[0].rmse) if self.per_seed else []

    def mean(self, label: str) -> float:
        return float(np.mean([r.rmse[label] for r in self.per_seed]))

    def means(self) -> Dict[str, float]:
        return {label: self.mean(label) for label in self.labels}


def run_experiment(config: ExperimentConfig, seeds: Sequence[int], rows=TABLE_ROWS,
                   progress=None) -> ExperimentResult:
    per_seed = []
    for seed in seeds:
        res = run_seed(config, seed, rows)
        per_seed.append(res)
        if progress is not None:
            progress(res)
    return ExperimentResult(list(seeds), per_seed)


def format_metrics_table(rmse: Dict[str, float], config: ExperimentConfig,
                         trials: int = 1) -> str:
    """Plain-text table, method then RMSE in percent; byte-stable for equal inputs."""
    g = config.geometry
    roi = config.roi
    roi_text = "full" if roi is None else f"{roi.row0}:{roi.row1},{roi.col0}:{roi.col1}"
    lines = [
        f"# roi={roi_text} frames={config.discount}:{g.N - config.discount} trials={trials}",
        f"{'method':<12}{'rmse_percent':>14}",
    ]
    for label, value in rmse.items():
        lines.append(f"{label:<12}{value:>14.4f}")
    return "\n".join(lines) + "\n"
