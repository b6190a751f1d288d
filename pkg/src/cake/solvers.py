"""Reconstruction from CAKE measurements.

* :func:`coarse_estimate` -- closed-form low-rate, low-resolution preview
  from dual-scale-mask data.
* :func:`reconstruct_tv_l1` -- TV on the first frame plus l1 on the
  difference frames, solved with monotone FISTA.
* :func:`reconstruct_optical_flow` -- wavelet-l1 of the difference frames
  under data and motion-consistency constraints, solved by Pareto-curve root
  finding (SPGL1 style) on a stacked single-ball reformulation.
* conventional block-averaging acquisition with spline upsampling as the
  baseline.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .errors import DivergenceError, InfeasibleError, UnsupportedMaskError
from .flow import MotionOperator, upsample_coarse
from .masks import MaskSequence
from .operators import (CakeOperator, diff_to_frames, diff_to_frames_adjoint,
                        estimate_norm_squared, frames_to_diff, tv_gradient,
                        tv_gradient_adjoint, tv_norm)
from .video import NoiseModel, SamplingGeometry, VideoCube, _as_array
from .wavelets import WaveletTransform

logger = logging.getLogger(__name__)

__all__ = [
    "TvL1Params", "FlowConstrainedParams", "SolverReport", "parse_report",
    "coarse_estimate", "prox_tv", "project_l1_ball", "tv_l1_objective",
    "reconstruct_tv_l1", "spgl1", "stacked_problem", "reconstruct_optical_flow",
    "conventional_baseline", "spline_baseline",
]


@dataclass(frozen=True)
class TvL1Params:
    tau_tv: float = 1.0e-2
    tau_l1: float = 2.0e-2
    max_iters: int = 500
    tol: float = 1e-6
    window: int = 5
    backtrack: float = 0.5
    growth: float = 1.0
    tv_inner: int = 30
    tv_tol: float = 1e-8
    power_iters: int = 50

    def __post_init__(self):
        for name in ("tau_tv", "tau_l1", "max_iters", "tol", "tv_inner", "power_iters"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.growth < 1.0:
            raise ValueError("step growth factor must be at least 1")


@dataclass(frozen=True)
class FlowConstrainedParams:
    eps1: float = 4.3e-2
    eps2: float = 4.3e3
    max_iters: int = 1000
    gap_tol: float = 1e-4
    polish_iters: int = 500
    wavelet_levels: Optional[int] = None
    power_iters: int = 50

    def __post_init__(self):
        if self.eps1 <= 0 or self.eps2 <= 0:
            raise ValueError("eps1 and eps2 must be positive")
        if self.max_iters <= 0 or self.gap_tol <= 0:
            raise ValueError("max_iters and gap_tol must be positive")


@dataclass
class SolverReport:
    """Run summary. ``objective[0]`` is the value at the initial point."""

    method: str
    iterations: int = 0
    objective: List[float] = field(default_factory=list)
    residuals: Dict[str, float] = field(default_factory=dict)
    wall_time: float = 0.0
    converged: bool = False
    status: str = ""
    extra: Dict[str, float] = field(default_factory=dict)

    def to_text(self, timing: bool = False) -> str:
        """Objective trace plus a ``[summary]`` block.

        Wall time is omitted unless ``timing`` is set, so that identical runs
        produce identical files.
        """
        lines = [f"iter {k} objective {v:.17g}" for k, v in enumerate(self.objective)]
        lines.append("[summary]")
        summary = {"method": self.method, "iterations": self.iterations,
                   "converged": int(self.converged), "status": self.status,
                   "final_objective": f"{self.objective[-1]:.17g}" if self.objective else "nan"}
        if timing:
            summary["wall_time"] = f"{self.wall_time:.6f}"
        summary.update({f"residual.{k}": f"{v:.17g}" for k, v in self.residuals.items()})
        summary.update({f"extra.{k}": f"{v:.17g}" for k, v in self.extra.items()})
        lines += [f"{k}={v}" for k, v in summary.items()]
        return "\n".join(lines) + "\n"


def parse_report(text: str) -> Dict[str, str]:
    """Key/value pairs of the ``[summary]`` block of :meth:`SolverReport.to_text`."""
    out, in_summary = {}, False
    for line in text.splitlines():
        if line.strip() == "[summary]":
            in_summary = True
        elif in_summary and "=" in line:
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


# ---------------------------------------------------------------------------
# coarse estimate


def coarse_estimate(measurement, masks: MaskSequence) -> VideoCube:
    """Low-rate, low-resolution preview ``(1 / (alpha B d)) Sigma_k^T y_k``.

    Valid for subsampled measurements that retain the last pixel of each
    block, where the low-resolution mask component reduces to ``d Sigma_k``
    on block-constant scenes. One size-``m`` FFT pair per frame.
    """
    if masks.family != "dsm" or masks.spectra is None:
        raise UnsupportedMaskError("coarse estimation needs dual-scale masks with stored spectra")
    g = masks.geometry
    y = np.asarray(_as_array(measurement), dtype=np.float64)
    if y.shape != g.measurement_shape:
        raise ValueError(f"measurement shape {y.shape} != {g.measurement_shape}")
    corr = np.fft.ifft2(np.fft.fft2(y) * np.conj(masks.spectra)).real
    return VideoCube(corr / (masks.alpha * g.B * g.d), kind="measurement", frame_rate_ratio=g.B)


# ---------------------------------------------------------------------------
# proximal pieces


def prox_tv(x: np.ndarray, lam: float, dual=None, max_iter: int = 30, tol: float = 1e-8):
    """``argmin_z 0.5 ||z - x||^2 + lam * TV(z)`` by fast dual projection.

    Returns ``(z, dual)`` where ``dual = (ph, pv)`` lies in the pointwise unit
    ball and ``z = x - lam * grad^T dual``; pass ``dual`` back in to warm start.
    Stops after ``max_iter`` iterations or once the duality gap is below ``tol``.
    """
    if lam <= 0:
        return x.copy(), dual
    if dual is None:
        ph, pv = np.zeros_like(x), np.zeros_like(x)
    else:
        ph, pv = dual
    qh, qv, t = ph, pv, 1.0
    step = 1.0 / (8.0 * lam)
    half_x2 = 0.5 * float(np.vdot(x, x))
    for _ in range(max_iter):
        z = x - lam * tv_gradient_adjoint(qh, qv)
        gh, gv = tv_gradient(z)
        nh, nv = qh + step * gh, qv + step * gv
        scale = np.maximum(1.0, np.sqrt(nh * nh + nv * nv))
        nh, nv = nh / scale, nv / scale
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_next
        qh, qv = nh + mom * (nh - ph), nv + mom * (nv - pv)
        ph, pv, t = nh, nv, t_next
        z = x - lam * tv_gradient_adjoint(ph, pv)
        primal = 0.5 * float(np.vdot(z - x, z - x)) + lam * tv_norm(z)
        dual_val = half_x2 - 0.5 * float(np.vdot(z, z))
        if primal - dual_val < tol:
            break
    return x - lam * tv_gradient_adjoint(ph, pv), (ph, pv)


def soft_threshold(x: np.ndarray, thresh: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def project_l1_ball(x: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{z : ||z||_1 <= radius}`` (sort based)."""
    if radius <= 0:
        return np.zeros_like(x)
    a = np.abs(x).ravel()
    if a.sum() <= radius:
        return x.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u) - radius
    idx = np.arange(1, u.size + 1)
    rho = np.nonzero(u * idx > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.sign(x) * np.maximum(np.abs(x) - theta, 0.0)


# ---------------------------------------------------------------------------
# TV + l1 on difference frames


def tv_l1_objective(operator: CakeOperator, y: np.ndarray, theta: np.ndarray,
                    params: TvL1Params) -> float:
    resid = operator.forward(diff_to_frames(theta)) - y
    return (0.5 * float(np.vdot(resid, resid)) + params.tau_tv * tv_norm(theta[0])
            + params.tau_l1 * float(np.abs(theta[1:]).sum()))


def reconstruct_tv_l1(operator: CakeOperator, measurement, params: TvL1Params = TvL1Params()
                      ) -> Tuple[VideoCube, SolverReport]:
    """Minimise ``0.5 ||A L theta - y||^2 + tau_tv TV(theta_1) + tau_l1 sum_t>1 ||theta_t||_1``.

    Monotone FISTA with backtracking; the TV prox is computed inexactly by a
    warm-started dual projection. Returns the frames ``L theta`` and a report.
    """
    start = time.perf_counter()
    g = operator.geometry
    y = np.asarray(_as_array(measurement), dtype=np.float64)
    if y.shape != g.measurement_shape:
        raise ValueError(f"measurement shape {y.shape} != {g.measurement_shape}")

    def image(theta):
        return operator.forward(diff_to_frames(theta))

    def smooth(img):
        resid = img - y
        return 0.5 * float(np.vdot(resid, resid)), resid

    def grad_from(resid):
        return diff_to_frames_adjoint(operator.adjoint(resid))

    def nonsmooth(theta):
        return params.tau_tv * tv_norm(theta[0]) + params.tau_l1 * float(np.abs(theta[1:]).sum())

    tv_dual = None

    def prox(v, step):
        nonlocal tv_dual
        out = np.empty_like(v)
        out[0], tv_dual = prox_tv(v[0], step * params.tau_tv, tv_dual,
                                  params.tv_inner, params.tv_tol)
        out[1:] = soft_threshold(v[1:], step * params.tau_l1)
        return out

    norm_a = estimate_norm_squared(operator.forward, operator.adjoint, g.scene_shape,
                                   params.power_iters)
    lipschitz = estimate_norm_squared(
        lambda th: operator.forward(diff_to_frames(th)),
        lambda r: diff_to_frames_adjoint(operator.adjoint(r)),
        g.scene_shape, params.power_iters)
    x = frames_to_diff(operator.adjoint(y) / norm_a) if norm_a > 0 else np.zeros(g.scene_shape)
    # images under A L are cached and extrapolated linearly alongside theta
    ax = image(x)
    f_x, _ = smooth(ax)
    F_x = f_x + nonsmooth(x)
    trace = [F_x]
    step = 1.0 / lipschitz if lipschitz > 0 else 1.0
    yk, ay, t = x.copy(), ax.copy(), 1.0
    converged, status, it, restarts = False, "max_iters", 0, 0
    for it in range(1, params.max_iters + 1):
        f_y, r_y = smooth(ay)
        grad = grad_from(r_y)
        step *= params.growth
        while True:
            z = prox(yk - step * grad, step)
            az = image(z)
            f_z, _ = smooth(az)
            dz = z - yk
            if not np.isfinite(f_z):
                raise DivergenceError(f"non-finite objective at iteration {it} (step {step:.3g}, "
                                      f"Lipschitz estimate {lipschitz:.3g})")
            if f_z <= f_y + float(np.vdot(grad, dz)) + 0.5 / step * float(np.vdot(dz, dz)) + 1e-12 * abs(f_y):
                break
            step *= params.backtrack
        F_z = f_z + nonsmooth(z)
        x_prev, ax_prev = x, ax
        if F_z <= F_x:
            x, ax, F_x = z, az, F_z
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            c = (t - 1.0) / t_next
            yk = x + c * (x - x_prev)
            ay = ax + c * (ax - ax_prev)
            t = t_next
        else:
            # adaptive restart: drop the momentum once the objective rises
            yk, ay, t = x.copy(), ax.copy(), 1.0
            restarts += 1
        trace.append(F_x)
        if not np.isfinite(F_x):
            raise DivergenceError(f"non-finite objective at iteration {it} (step {step:.3g})")
        if it >= params.window:
            old = trace[-1 - params.window]
            if abs(old - F_x) <= params.tol * max(abs(F_x), 1e-300):
                converged, status = True, "objective_stalled"
                break
    frames = diff_to_frames(x)
    resid = operator.forward(frames) - y
    report = SolverReport("tvl1", iterations=it, objective=trace,
                          residuals={"data": float(np.linalg.norm(resid))},
                          wall_time=time.perf_counter() - start, converged=converged,
                          status=status, extra={"step": step, "lipschitz": lipschitz,
                                                "norm_a_squared": norm_a,
                                                "restarts": restarts})
    return VideoCube(frames, kind="scene", frame_rate_ratio=g.B), report


# ---------------------------------------------------------------------------
# l2-constrained l1 by Pareto root finding


@dataclass
class SpgResult:
    x: np.ndarray
    tau: float
    residual: float
    iterations: int
    status: str
    objective_trace: List[float]


def spgl1(forward: Callable, adjoint: Callable, b: np.ndarray, sigma: float, shape,
          max_iters: int = 1000, opt_tol: float = 1e-4, bp_tol: float = 1e-6,
          dec_tol: float = 1e-4, memory: int = 3, x0: Optional[np.ndarray] = None) -> SpgResult:
    """Solve ``min ||x||_1  s.t.  ||forward(x) - b||_2 <= sigma``.

    Follows the SPGL1 scheme: spectral projected gradient iterations on the
    l1-ball constrained least-squares problem, with Newton updates of the
    ball radius ``tau`` along the Pareto curve whenever the inner problem
    stalls. A warm start ``x0`` fixes the initial radius at ``||x0||_1``;
    the radius then moves toward the root from either side. ``b`` and
    ``forward(x)`` may have any (matching) shape.
    """
    b_norm = float(np.linalg.norm(b))
    if b_norm <= sigma:
        zero = np.zeros(shape)
        return SpgResult(zero, 0.0, b_norm, 0, "zero_feasible", [0.0])
    x = np.zeros(shape) if x0 is None else np.array(x0, dtype=np.float64)
    tau = float(np.abs(x).sum())
    x = project_l1_ball(x, tau)
    r = b - forward(x)
    f = 0.5 * float(np.vdot(r, r))
    g = -adjoint(r)
    dx = project_l1_ball(x - g, tau) - x
    dx_norm = float(np.abs(dx).max())
    step = min(1.0, 1.0 / dx_norm) if dx_norm > 0 else 1.0
    last_f = [f] * memory
    trace = [float(np.abs(x).sum())]
    status, it = "max_iters", 0
    update_tau = False
    f_old = f
    tau_lo, tau_hi, shrink = 0.0, np.inf, 0.9
    for it in range(1, max_iters + 1):
        g_norm = float(np.abs(g).max())
        r_norm = float(np.sqrt(2.0 * f))
        gap = float(np.vdot(r, r - b)) + tau * g_norm
        r_gap = abs(gap) / max(1.0, f)
        a_err1 = r_norm - sigma
        a_err2 = f - 0.5 * sigma * sigma
        r_err1 = abs(a_err1) / max(1.0, r_norm)
        r_err2 = abs(a_err2) / max(1.0, f)

        if r_err1 <= opt_tol:
            status = "root_found"
            break
        if r_norm <= bp_tol * b_norm and sigma <= bp_tol * b_norm:
            status = "bp_solution"
            break
        if r_norm < sigma and tau == 0.0:
            status = "zero_feasible"
            break

        # Newton step on the Pareto curve once the inner problem has stalled
        rel1 = abs(f - f_old) <= dec_tol * f
        rel2 = abs(f - f_old) <= 1e-1 * f * abs(r_norm - sigma)
        update_tau = ((rel1 and r_norm > 2 * sigma) or (rel2 and r_norm <= 2 * sigma)) \
            and not update_tau and r_gap <= 1e-1
        if update_tau and g_norm > 0:
            tau_old = tau
            if r_norm > sigma:
                tau_lo = max(tau_lo, tau)
            else:
                tau_hi = min(tau_hi, tau)
            tau = max(0.0, tau + r_norm * a_err1 / g_norm)
            # safeguards: far inside the ball the curve is flat and Newton
            # crawls, so shrink geometrically; never leave the bracket
            if r_norm < 0.5 * sigma and tau_lo == 0.0:
                tau = min(tau, shrink * tau_old)
            if not tau_lo < tau < tau_hi and np.isfinite(tau_hi):
                tau = 0.5 * (tau_lo + tau_hi)
            if tau < tau_old:
                x = project_l1_ball(x, tau)
                r = b - forward(x)
                f = 0.5 * float(np.vdot(r, r))
                g = -adjoint(r)
                last_f = [f] * memory
        f_old = f

        # nonmonotone projected line search along the spectral step
        x_old, g_old = x, g
        f_max = max(last_f)
        alpha = step
        for _ in range(10):
            x_new = project_l1_ball(x - alpha * g, tau)
            r_new = b - forward(x_new)
            f_new = 0.5 * float(np.vdot(r_new, r_new))
            if f_new <= f_max + 1e-4 * float(np.vdot(g, x_new - x)):
                break
            alpha *= 0.5
        x, r, f = x_new, r_new, f_new
        g = -adjoint(r)
        s = x - x_old
        yv = g - g_old
        sts = float(np.vdot(s, s))
        sty = float(np.vdot(s, yv))
        step = min(1e5, max(1e-5, sts / sty)) if sty > 0 else 1e5
        last_f = last_f[1:] + [f]
        trace.append(float(np.abs(x).sum()))
    return SpgResult(x, tau, float(np.sqrt(2.0 * f)), it, status, trace)


@dataclass
class StackedProblem:
    """``Phi z = [A L W z ; w V L W z]`` with target ``[y ; 0]`` and radius ``sqrt(2) eps1``."""

    operator: CakeOperator
    motion: MotionOperator
    wavelet: WaveletTransform
    y: np.ndarray
    weight: float
    radius: float

    def synth(self, z):
        return diff_to_frames(self.wavelet.inverse(z))

    def data_part(self, z):
        return self.operator.forward(self.synth(z))

    def flow_part(self, z):
        return self.motion.apply(self.synth(z))

    def forward(self, z):
        f = self.synth(z)
        return np.concatenate([self.operator.forward(f).ravel(),
                               self.weight * self.motion.apply(f).ravel()])

    def adjoint(self, v):
        g = self.operator.geometry
        k = g.m * g.M
        ry = v[:k].reshape(g.measurement_shape)
        rv = v[k:].reshape((g.N - 1, g.n1, g.n2))
        back = self.operator.adjoint(ry) + self.weight * self.motion.adjoint(rv)
        return self.wavelet.forward(diff_to_frames_adjoint(back))

    @property
    def target(self):
        g = self.operator.geometry
        return np.concatenate([self.y.ravel(), np.zeros((g.N - 1) * g.n)])


def stacked_problem(operator, measurement, motion, wavelet, params) -> StackedProblem:
    y = np.asarray(_as_array(measurement), dtype=np.float64)
    return StackedProblem(operator, motion, wavelet, y, params.eps1 / params.eps2,
                          np.sqrt(2.0) * params.eps1)


def reconstruct_optical_flow(operator: CakeOperator, measurement, motion: MotionOperator,
                             wavelet: Optional[WaveletTransform] = None,
                             params: FlowConstrainedParams = FlowConstrainedParams(),
                             initial=None) -> Tuple[VideoCube, SolverReport]:
    """Minimise ``||W^T theta||_1`` s.t. ``||A L theta - y|| <= eps1``, ``||V L theta|| <= eps2``.

    The two balls are merged into one stacked constraint (flow rows weighted
    by ``eps1 / eps2``, radius ``sqrt(2) eps1``) and solved by :func:`spgl1`
    in wavelet coefficients, optionally warm-started from the frames
    ``initial`` (the upsampled coarse preview in the full pipeline).
    Conjugate-gradient least-squares steps then pull each original residual
    back inside its own ball.
    """
    start = time.perf_counter()
    g = operator.geometry
    if motion.transitions != g.N - 1 or motion.frame_shape != (g.n1, g.n2):
        raise ValueError("motion operator does not match the operator geometry")
    wavelet = wavelet or WaveletTransform(params.wavelet_levels)
    prob = stacked_problem(operator, measurement, motion, wavelet, params)
    b = prob.target
    x0 = None
    if initial is not None:
        start_frames = np.asarray(_as_array(initial), dtype=np.float64)
        if start_frames.shape != g.scene_shape:
            raise ValueError(f"initial cube {start_frames.shape} != {g.scene_shape}")
        x0 = wavelet.forward(frames_to_diff(start_frames))
    res = spgl1(prob.forward, prob.adjoint, b, prob.radius, g.scene_shape,
                max_iters=params.max_iters, opt_tol=params.gap_tol, x0=x0)
    z = res.x
    stacked_obj = float(np.abs(z).sum())

    # polish: CGLS on the weighted stacked least-squares system, started at
    # the SPGL1 point and stopped as soon as both original balls hold
    y = prob.y
    bounds = (params.eps1, params.eps2)
    wv = params.eps1 / params.eps2

    def residuals(z):
        return prob.data_part(z) - y, prob.flow_part(z)

    def normal(r1, r2):
        back = operator.adjoint(r1) + wv * motion.adjoint(wv * r2)
        return wavelet.forward(diff_to_frames_adjoint(back))

    r1, r2 = residuals(z)
    n1, n2 = float(np.linalg.norm(r1)), float(np.linalg.norm(r2))
    grad = -normal(r1, r2)
    direction = grad.copy()
    gamma = float(np.vdot(grad, grad))
    polish = 0
    while (n1 > bounds[0] or n2 > bounds[1]) and polish < params.polish_iters and gamma > 0:
        polish += 1
        q1, q2 = prob.data_part(direction), wv * prob.flow_part(direction)
        alpha = gamma / (float(np.vdot(q1, q1)) + float(np.vdot(q2, q2)))
        z = z + alpha * direction
        r1 = r1 + alpha * q1
        r2 = r2 + alpha * q2 / wv
        n1, n2 = float(np.linalg.norm(r1)), float(np.linalg.norm(r2))
        grad = -normal(r1, r2)
        gamma_next = float(np.vdot(grad, grad))
        direction = grad + (gamma_next / gamma) * direction
        gamma = gamma_next
    r1, r2 = residuals(z)
    n1, n2 = float(np.linalg.norm(r1)), float(np.linalg.norm(r2))
    if n1 > 1.05 * bounds[0] or n2 > 1.05 * bounds[1]:
        raise InfeasibleError(
            f"constraints not met after polishing: data {n1:.4g} (eps1 {bounds[0]:.4g}), "
            f"flow {n2:.4g} (eps2 {bounds[1]:.4g})")
    frames = prob.synth(z)
    trace = list(res.objective_trace)
    if polish:
        trace.append(float(np.abs(z).sum()))
    report = SolverReport(
        "of", iterations=len(trace) - 1, objective=trace,
        residuals={"data": n1, "flow": n2,
                   "stacked": float(np.linalg.norm(prob.forward(res.x) - b))},
        wall_time=time.perf_counter() - start,
        converged=res.status in ("root_found", "bp_solution", "zero_feasible"),
        status=res.status,
        extra={"stacked_objective": stacked_obj, "spg_iterations": res.iterations,
               "polish_iterations": polish, "tau": res.tau})
    return VideoCube(frames, kind="scene", frame_rate_ratio=g.B), report


# ---------------------------------------------------------------------------
# conventional acquisition baseline


def conventional_baseline(scene, geometry: SamplingGeometry,
                          noise: Optional[NoiseModel] = None) -> VideoCube:
    """Average over ``d1 x d2 x B`` blocks: what a plain low-rate camera sees."""
    f = np.asarray(_as_array(scene), dtype=np.float64)
    g = geometry
    avg = f.reshape(g.M, g.B, g.m1, g.d1, g.m2, g.d2).mean(axis=(1, 3, 5))
    if noise is not None:
        avg = noise.apply(avg)
    return VideoCube(avg, kind="measurement", frame_rate_ratio=g.B)


def spline_baseline(coarse, geometry: SamplingGeometry) -> VideoCube:
    return upsample_coarse(coarse, geometry)
