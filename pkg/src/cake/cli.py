"""Command-line front end: ``cake <stage> [--config PATH] [--seed N] [--out DIR]``.

Stages communicate only through files in the output directory:

========  =====================================  ==========================================
stage     reads                                  writes
========  =====================================  ==========================================
synth     (nothing)                              scene.vcub
masks     (nothing)                              masks_<family>.msks
acquire   scene.vcub, masks_<family>.msks        measurement_<family>.vcub, conventional.vcub
coarse    measurement_dsm.vcub, masks_dsm.msks   coarse.vcub
flow      coarse.vcub                            upsampled.vcub, flow.flow
recon     depends on ``--method``                estimate_*.vcub, report_*.txt
metrics   scene.vcub, estimate_*.vcub            metrics.txt
ripcheck  (nothing)                              ripcheck.txt
========  =====================================  ==========================================

``recon --method tvl1`` runs once per configured family; ``of`` needs the DSM
measurement plus ``flow.flow`` and ``upsampled.vcub``; ``spline`` needs
``conventional.vcub``; ``coarse-only`` copies ``upsampled.vcub``.

Every command records its resolved config, seed and the SHA-256 of each input
and output in ``manifest.json``. Exit codes: 0 success, 2 config error,
3 missing upstream file, 4 solver divergence or infeasibility, 1 otherwise.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from . import pipeline
from .config import ExperimentConfig, load_config
from .errors import (CakeError, ConfigError, DivergenceError, InfeasibleError,
                     StageDependencyError)
from .flow import build_motion_operator, estimate_flow_sequence, read_flow, upsample_coarse, write_flow
from .masks import MaskSequence, gen_family, read_masks, write_masks
from .operators import CakeOperator, frames_to_diff
from .pgm import export_frames, magnitude_frames
from .ripcheck import concentration_report, rip_chain
from .solvers import coarse_estimate, reconstruct_optical_flow
from .video import SamplingGeometry, VideoCube, read_cube, write_cube

__all__ = ["main", "build_parser", "STAGES", "METHODS", "FAMILY_LABELS"]

STAGES = ("synth", "masks", "acquire", "coarse", "flow", "recon", "metrics", "ripcheck")
METHODS = ("tvl1", "of", "spline", "coarse-only")
FAMILY_LABELS = {"rademacher": "CAKE", "phase_shift": "PS-CAKE", "dsm": "DSM-CAKE"}
MANIFEST = "manifest.json"

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_DEPENDENCY, EXIT_DIVERGENCE = 0, 1, 2, 3, 4


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Stage:
    """File bookkeeping for one command: resolved inputs, written outputs."""

    def __init__(self, name: str, config: ExperimentConfig, out: Path, seed: int,
                 method: Optional[str] = None):
        self.name, self.config, self.out, self.seed, self.method = name, config, out, seed, method
        self.inputs: Dict[str, str] = {}
        self.outputs: Dict[str, str] = {}

    def need(self, filename: str) -> Path:
        path = self.out / filename
        if not path.is_file():
            raise StageDependencyError(f"missing upstream file {path}")
        self.inputs[filename] = _sha256(path)
        return path

    def wrote(self, path: Path) -> None:
        self.outputs[path.relative_to(self.out).as_posix()] = _sha256(path)

    def cube(self, filename: str) -> VideoCube:
        return read_cube(self.need(filename))

    def masks(self, family: str) -> MaskSequence:
        seq = read_masks(self.need(f"masks_{family}.msks"))
        g = seq.geometry
        _check_geometry((g.N, g.n1, g.n2), self.config.geometry, f"masks_{family}.msks")
        return seq

    def write_cube(self, cube: VideoCube, filename: str) -> None:
        path = self.out / filename
        write_cube(cube, path)
        self.wrote(path)
        if self.config.dump_frames:
            for p in export_frames(cube, self.out / "frames", Path(filename).stem):
                self.wrote(p)

    def write_text(self, text: str, filename: str) -> None:
        path = self.out / filename
        path.write_text(text)
        self.wrote(path)

    def record(self) -> None:
        """Merge this command's entry into the manifest (keyed by stage and method)."""
        path = self.out / MANIFEST
        manifest = json.loads(path.read_text()) if path.is_file() else {}
        manifest.setdefault("stages", {})
        key = self.name if self.method is None else f"{self.name}:{self.method}"
        manifest["version"] = __version__
        manifest["stages"][key] = {
            "command": self.name, "method": self.method, "seed": self.seed,
            "config": self.config.to_text(), "inputs": self.inputs, "outputs": self.outputs,
        }
        path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def _check_geometry(shape, expected: SamplingGeometry, what: str) -> None:
    want = (expected.N, expected.n1, expected.n2)
    if tuple(shape) != want:
        raise ConfigError(f"{what} has shape {tuple(shape)}, config expects {want}")


def _operator(stage: Stage, seq: MaskSequence) -> CakeOperator:
    return pipeline.make_operator(stage.config, seq, seq.seed)


# ---------------------------------------------------------------------------
# stages


def cmd_synth(stage: Stage) -> None:
    stage.write_cube(pipeline.make_scene(stage.config, stage.seed), "scene.vcub")


def cmd_masks(stage: Stage) -> None:
    for family in stage.config.families:
        seq = pipeline.make_masks(stage.config, family, stage.seed)
        path = stage.out / f"masks_{family}.msks"
        write_masks(seq, path)
        stage.wrote(path)


def cmd_acquire(stage: Stage) -> None:
    scene = stage.cube("scene.vcub")
    _check_geometry(scene.shape, stage.config.geometry, "scene.vcub")
    for family in stage.config.families:
        op = _operator(stage, stage.masks(family))
        stage.write_cube(pipeline.acquire(stage.config, op, scene, stage.seed),
                         f"measurement_{family}.vcub")
    stage.write_cube(pipeline.acquire_conventional(stage.config, scene, stage.seed),
                     "conventional.vcub")


def cmd_coarse(stage: Stage) -> None:
    seq = stage.masks("dsm")
    stage.write_cube(coarse_estimate(stage.cube("measurement_dsm.vcub"), seq), "coarse.vcub")


def cmd_flow(stage: Stage) -> None:
    upsampled = upsample_coarse(stage.cube("coarse.vcub"), stage.config.geometry)
    stage.write_cube(upsampled, "upsampled.vcub")
    path = stage.out / "flow.flow"
    write_flow(estimate_flow_sequence(upsampled, stage.config.flow), path)
    stage.wrote(path)


def _estimate_name(method: str, family: Optional[str] = None) -> str:
    return f"estimate_{method}" + (f"_{family}" if family else "")


def _emit_images(stage: Stage, estimate: VideoCube, name: str) -> None:
    diff = magnitude_frames(frames_to_diff(np.asarray(estimate.frames)))
    for p in export_frames(diff, stage.out / "images", f"diff_{name}"):
        stage.wrote(p)
    if (stage.out / "scene.vcub").is_file():
        truth = stage.cube("scene.vcub")
        residual = magnitude_frames(np.asarray(estimate.frames) - np.asarray(truth.frames))
        for p in export_frames(residual, stage.out / "images", f"residual_{name}"):
            stage.wrote(p)


def _finish(stage: Stage, estimate: VideoCube, report, name: str) -> None:
    stage.write_cube(estimate, f"{name}.vcub")
    if report is not None:
        stage.write_text(report.to_text(), name.replace("estimate", "report", 1) + ".txt")
        print(f"{name}: {report.iterations} iterations, {report.wall_time:.3f} s",
              file=sys.stderr)
    if stage.config.dump_images:
        _emit_images(stage, estimate, name[len("estimate_"):])


def cmd_recon(stage: Stage) -> None:
    cfg, method = stage.config, stage.method
    if method == "tvl1":
        for family in cfg.families:
            op = _operator(stage, stage.masks(family))
            est, report = pipeline.reconstruct(cfg, "tvl1", stage.cube(f"measurement_{family}.vcub"), op)
            _finish(stage, est, report, _estimate_name("tvl1", family))
    elif method == "of":
        op = _operator(stage, stage.masks("dsm"))
        y = stage.cube("measurement_dsm.vcub")
        motion = build_motion_operator(read_flow(stage.need("flow.flow")))
        initial = stage.cube("upsampled.vcub") if cfg.of_warm_start == "coarse" else None
        est, report = reconstruct_optical_flow(op, y, motion, params=cfg.of, initial=initial)
        _finish(stage, est, report, _estimate_name("of"))
    elif method == "spline":
        est, _ = pipeline.reconstruct(cfg, "spline", stage.cube("conventional.vcub"))
        _finish(stage, est, None, _estimate_name("spline"))
    else:
        _finish(stage, stage.cube("upsampled.vcub"), None, _estimate_name("coarse-only"))


def metric_rows(config: ExperimentConfig) -> List[tuple]:
    """``(label, estimate file)`` in table order for the configured families."""
    rows = [("spline", "estimate_spline.vcub")]
    for family in ("rademacher", "phase_shift", "dsm"):
        if family in config.families:
            rows.append((FAMILY_LABELS[family], f"estimate_tvl1_{family}.vcub"))
    rows += [("OF-CAKE", "estimate_of.vcub"), ("coarse-only", "estimate_coarse-only.vcub")]
    return rows


def cmd_metrics(stage: Stage) -> None:
    truth = stage.cube("scene.vcub")
    rmse = {}
    for label, filename in metric_rows(stage.config):
        if (stage.out / filename).is_file():
            rmse[label] = pipeline.evaluate(stage.config, stage.cube(filename), truth)
    if not rmse:
        stage.need("estimate_spline.vcub")
    stage.write_text(pipeline.format_metrics_table(rmse, stage.config), "metrics.txt")


def ripcheck_text(config: ExperimentConfig, seed: int) -> str:
    """Concentration statistics plus the exact-versus-Gersgorin RIP chain."""
    rc = config.ripcheck
    stats = concentration_report(rc.geometry, rc.family, rc.trials, rc.delta_d, rc.delta_o,
                                 rc.s, seed, config.alpha, config.beta)
    lines = ["[concentration]", stats.to_text().rstrip("\n"), "", "[rip_chain]"]
    toy = rc.toy_geometry
    lines.append(f"n={toy.n} B={toy.B} nB={toy.n * toy.B} s={rc.s} instances={rc.instances}")
    holds = 0
    for k in range(rc.instances):
        masks = gen_family(toy, rc.family, [seed, k], config.alpha, config.beta)
        exact, bound = rip_chain(CakeOperator(toy, masks), rc.s)
        holds += exact <= bound + 1e-12
        lines.append(f"instance={k} exact_delta={exact:.6g} gersgorin_delta={bound:.6g}")
    lines.append(f"chain_holds={holds}/{rc.instances}")
    return "\n".join(lines) + "\n"


def cmd_ripcheck(stage: Stage) -> None:
    stage.write_text(ripcheck_text(stage.config, stage.seed), "ripcheck.txt")


COMMANDS = {"synth": cmd_synth, "masks": cmd_masks, "acquire": cmd_acquire,
            "coarse": cmd_coarse, "flow": cmd_flow, "recon": cmd_recon,
            "metrics": cmd_metrics, "ripcheck": cmd_ripcheck}


HELP = {"synth": "render the synthetic scene", "masks": "draw mask sequences",
        "acquire": "simulate CAKE and conventional measurements",
        "coarse": "closed-form DSM coarse preview", "flow": "upsample preview, estimate flow",
        "recon": "reconstruct with --method", "metrics": "RMSE table of all estimates",
        "ripcheck": "Gram concentration and RIP chain report"}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cake", description="Coded-aperture keyed-exposure "
                                     "video simulation and reconstruction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="stage", required=True)
    for name in STAGES:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", type=Path, help="INI-style config (defaults when omitted)")
        p.add_argument("--seed", type=int, help="override [run] seed")
        p.add_argument("--out", type=Path, help="override [run] out directory")
        p.add_argument("--method", choices=METHODS, default="tvl1" if name == "recon" else None,
                       help="reconstruction method (recon only)")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"run": {"seed": str(args.seed)}} if args.seed is not None else None
    try:
        config = load_config(args.config, overrides)
        out = args.out if args.out is not None else config.out
        out.mkdir(parents=True, exist_ok=True)
        stage = Stage(args.stage, config, out, config.seed,
                      args.method if args.stage == "recon" else None)
        COMMANDS[args.stage](stage)
        stage.record()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageDependencyError as exc:
        print(f"stage dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (DivergenceError, InfeasibleError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (CakeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
