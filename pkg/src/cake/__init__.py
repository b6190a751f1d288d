"""Coded-aperture keyed-exposure (CAKE) video compressive sensing.

Simulation of the sensing model, mask families, fast operators, the TV+l1 and
flow-constrained reconstructions, optical-flow estimation, empirical
restricted-isometry checks, and a staged command-line pipeline.
"""

__version__ = "0.1.0"

from .errors import (BlockParityError, CakeError, ConfigError, DimensionError, DivergenceError,
                     FormatError, InfeasibleError, InvalidFlowError, NormalizationError,
                     StageDependencyError, UnsupportedMaskError)
from .video import (MovingDisc, MovingRect, NoiseModel, RectRegion, SamplingGeometry, SceneSpec,
                    VideoCube, default_scene_spec, make_geometry, read_cube, rmse_percent,
                    synth_scene, write_cube)
from .masks import (MaskSequence, gen_dsm, gen_family, gen_phase_shift, gen_phase_shift_sequence,
                    gen_rademacher, read_masks, write_masks)
from .operators import (CakeOperator, cake_adjoint, cake_forward, diff_to_frames, frames_to_diff)
from .wavelets import WaveletTransform
from .flow import (FlowField, HornSchunckParams, MotionOperator, build_motion_operator,
                   estimate_flow, estimate_flow_sequence, read_flow, upsample_coarse, write_flow)
from .solvers import (FlowConstrainedParams, SolverReport, TvL1Params, coarse_estimate,
                      conventional_baseline, reconstruct_optical_flow, reconstruct_tv_l1,
                      spline_baseline)
from .ripcheck import concentration_report, exact_rip_constant, gersgorin_eigen_bounds, rip_chain
from .config import ExperimentConfig, load_config, parse_config
