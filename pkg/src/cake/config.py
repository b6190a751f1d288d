"""Experiment configuration: INI-style ``key = value`` lines under section headers.

Every key is optional; missing keys take the values in :data:`DEFAULT_CONFIG`,
which describe the desk-scale 64 x 64 x 32 synthetic experiment. Unknown
sections or keys are rejected so that typos fail loudly.

Sections and keys
-----------------
``[run]``       seed (master seed for scene, masks, signs and noise), out (output directory)
``[geometry]``  n1, n2, frames, d1, d2, B
``[scene]``     kind (``default``)
``[masks]``     families (comma list of rademacher, phase_shift, dsm), alpha, beta,
                downsampler (subsample, integrate, random_demod)
``[noise]``     kind (none, gaussian), sigma
``[tvl1]``      tau_tv, tau_l1, max_iters, tol, step_growth
``[of]``        eps1, eps2, max_iters, polish_iters, wavelet_levels (``max`` or int),
                warm_start (coarse, none)
``[flow]``      smoothness, iterations, levels
``[metrics]``   roi (``full`` or ``row0:row1,col0:col1``), discount (frames dropped at
                each end; ``block`` means one exposure block)
``[output]``    frames (yes/no: dump PGM frames of every estimate), images (yes/no:
                residual and difference-frame magnitude images)
``[ripcheck]``  n1, n2, d1, d2, B, trials, delta_d, delta_o (comma list), s, family for the
                Gram concentration study; instances and toy_n1, toy_n2, toy_d1, toy_d2
                (sharing B) for the exact-versus-Gersgorin chain
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

from .errors import ConfigError
from .flow import HornSchunckParams
from .solvers import FlowConstrainedParams, TvL1Params
from .video import NoiseModel, RectRegion, SamplingGeometry

__all__ = ["DEFAULT_CONFIG", "ExperimentConfig", "load_config", "parse_config"]

DEFAULT_CONFIG = """\
[run]
seed = 0
out = cake-run

[geometry]
n1 = 64
n2 = 64
frames = 32
d1 = 2
d2 = 2
B = 4

[scene]
kind = default

[masks]
families = rademacher, dsm
alpha = 0.383
beta = 0.924
downsampler = subsample

[noise]
kind = none
sigma = 0.0

[tvl1]
tau_tv = 1.0e-2
tau_l1 = 2.0e-2
max_iters = 2000
tol = 1e-6
step_growth = 1.1

[of]
eps1 = 4.3e-2
eps2 = 4.3e3
max_iters = 1500
polish_iters = 500
wavelet_levels = max
warm_start = coarse

[flow]
smoothness = 0.1
iterations = 100
levels = 3

[metrics]
roi = full
discount = block

[output]
frames = no
images = no

[ripcheck]
n1 = 16
n2 = 16
d1 = 2
d2 = 2
B = 2
trials = 1000
delta_d = 0.2
delta_o = 0.2, 0.5, 1.0, 1.5, 2.0
s = 2
instances = 20
toy_n1 = 8
toy_n2 = 4
toy_d1 = 1
toy_d2 = 2
family = rademacher
"""

FAMILIES = ("rademacher", "phase_shift", "dsm")


@dataclass(frozen=True)
class RipcheckConfig:
    geometry: SamplingGeometry
    trials: int
    delta_d: float
    delta_o: Tuple[float, ...]
    s: int
    instances: int
    toy_geometry: SamplingGeometry
    family: str


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved configuration of one run."""

    seed: int
    out: Path
    geometry: SamplingGeometry
    scene_kind: str
    families: Tuple[str, ...]
    alpha: float
    beta: float
    downsampler: str
    noise: NoiseModel
    tvl1: TvL1Params
    of: FlowConstrainedParams
    of_warm_start: str
    flow: HornSchunckParams
    roi: Optional[RectRegion]
    discount: int
    dump_frames: bool
    dump_images: bool
    ripcheck: RipcheckConfig
    raw: Dict[str, Dict[str, str]] = field(default_factory=dict, compare=False)

    def to_text(self) -> str:
        """Canonical resolved config (sorted sections and keys)."""
        lines = []
        for section in sorted(self.raw):
            lines.append(f"[{section}]")
            for key in sorted(self.raw[section]):
                lines.append(f"{key} = {self.raw[section][key]}")
            lines.append("")
        return "\n".join(lines)


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    return cp


def _get(cp, section, key, conv, what):
    text = cp[section][key].strip()
    try:
        return conv(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key} = {text!r}: expected {what}") from exc


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("yes", "true", "1", "on"):
        return True
    if low in ("no", "false", "0", "off"):
        return False
    raise ValueError(text)


def _roi(text: str) -> Optional[RectRegion]:
    if text.lower() == "full":
        return None
    rows, cols = text.split(",")
    r0, r1 = (int(v) for v in rows.split(":"))
    c0, c1 = (int(v) for v in cols.split(":"))
    return RectRegion(r0, r1, c0, c1)


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _choice(options):
    def conv(text):
        if text not in options:
            raise ValueError(text)
        return text
    return conv


def parse_config(text: str = "", overrides: Optional[Dict[str, Dict[str, str]]] = None
                 ) -> ExperimentConfig:
    """Resolve ``text`` on top of the defaults, then apply ``overrides``."""
    cp = _parser()
    cp.read_string(DEFAULT_CONFIG)
    known = {s: set(cp[s]) for s in cp.sections()}
    user = _parser()
    try:
        user.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for section in user.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in user[section].items():
            if key not in known[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            cp[section][key] = value
    for section, pairs in (overrides or {}).items():
        for key, value in pairs.items():
            cp[section][key] = str(value)

    def num(section, key, conv=int, what="an integer"):
        return _get(cp, section, key, conv, what)

    try:
        geometry = SamplingGeometry(*(num("geometry", k) for k in ("n1", "n2", "frames",
                                                                    "d1", "d2", "B")))
    except ValueError as exc:
        raise ConfigError(f"[geometry] {exc}") from exc
    families = tuple(f.strip() for f in cp["masks"]["families"].split(",") if f.strip())
    bad = [f for f in families if f not in FAMILIES]
    if bad or not families:
        raise ConfigError(f"[masks] families: unknown or empty {bad or families}")
    seed = num("run", "seed")
    noise_kind = num("noise", "kind", _choice(("none", "gaussian")), "none or gaussian")
    try:
        noise = NoiseModel(noise_kind, num("noise", "sigma", float, "a number"), seed)
        tvl1 = TvL1Params(tau_tv=num("tvl1", "tau_tv", float, "a number"),
                          tau_l1=num("tvl1", "tau_l1", float, "a number"),
                          max_iters=num("tvl1", "max_iters"),
                          tol=num("tvl1", "tol", float, "a number"),
                          growth=num("tvl1", "step_growth", float, "a number"))
        levels_text = cp["of"]["wavelet_levels"].strip()
        of = FlowConstrainedParams(
            eps1=num("of", "eps1", float, "a number"), eps2=num("of", "eps2", float, "a number"),
            max_iters=num("of", "max_iters"), polish_iters=num("of", "polish_iters"),
            wavelet_levels=None if levels_text == "max" else num("of", "wavelet_levels"))
        flow = HornSchunckParams(smoothness=num("flow", "smoothness", float, "a number"),
                                 iterations=num("flow", "iterations"),
                                 levels=num("flow", "levels"))
        rg = SamplingGeometry(num("ripcheck", "n1"), num("ripcheck", "n2"), num("ripcheck", "B"),
                              num("ripcheck", "d1"), num("ripcheck", "d2"), num("ripcheck", "B"))
        toy = SamplingGeometry(num("ripcheck", "toy_n1"), num("ripcheck", "toy_n2"),
                               num("ripcheck", "B"), num("ripcheck", "toy_d1"),
                               num("ripcheck", "toy_d2"), num("ripcheck", "B"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    discount_text = cp["metrics"]["discount"].strip()
    discount = geometry.B if discount_text == "block" else num("metrics", "discount")
    if discount < 0 or 2 * discount >= geometry.N:
        raise ConfigError(f"[metrics] discount {discount} leaves no frames")
    ripcheck = RipcheckConfig(
        geometry=rg, trials=num("ripcheck", "trials"),
        delta_d=num("ripcheck", "delta_d", float, "a number"),
        delta_o=num("ripcheck", "delta_o", _floats, "a comma list of numbers"),
        s=num("ripcheck", "s"), instances=num("ripcheck", "instances"), toy_geometry=toy,
        family=num("ripcheck", "family", _choice(FAMILIES), "a mask family"))
    raw = {s: dict(cp[s]) for s in cp.sections()}
    return ExperimentConfig(
        seed=seed, out=Path(cp["run"]["out"]), geometry=geometry,
        scene_kind=num("scene", "kind", _choice(("default",)), "default"),
        families=families, alpha=num("masks", "alpha", float, "a number"),
        beta=num("masks", "beta", float, "a number"),
        downsampler=num("masks", "downsampler",
                        _choice(("subsample", "integrate", "random_demod")), "a downsampler"),
        noise=noise, tvl1=tvl1, of=of,
        of_warm_start=num("of", "warm_start", _choice(("coarse", "none")), "coarse or none"),
        flow=flow, roi=num("metrics", "roi", _roi, "full or row0:row1,col0:col1"),
        discount=discount, dump_frames=num("output", "frames", _bool, "yes or no"),
        dump_images=num("output", "images", _bool, "yes or no"),
        ripcheck=ripcheck, raw=raw)


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Read ``path`` (or only the defaults when ``None``) into a resolved config."""
    text = ""
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} does not exist")
        text = p.read_text()
    return parse_config(text, overrides)

