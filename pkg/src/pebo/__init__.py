"""Parameter-estimation-based observers for nonlinear time-varying plants.

The state is mapped to coordinates in which its dynamics depend on the
measured output only.  A dynamic extension then tracks those coordinates
up to a constant offset.  Estimating that offset by nonlinear least
squares recovers the state.
"""
from .errors import (BadEigenvalue, ConfigError, IllConditioned, NoSolution, NonFinite,
                     NonInjective, PeboError, RankDeficientPsi, Singular)
from .system import DomainBox, SampledSignal, SystemModel, Trajectory, polynomial_model, validate_model
from .flows import IntegratorConfig, integrate_flow, output_along_flow, variational_flow
from .transform import (LeftInverseConfig, ObserverDesign, QuadratureTransform, TransformEvaluator,
                        eval_T, eval_phi, eval_phi_jacobian, left_inverse, make_design,
                        pde_residual)
from .extension import run_extension, run_gpebo_extension
from .estimation import (EstimationResult, EstimatorConfig, RegressionDataset, batch_estimate,
                         cost_J, expanding_horizon_estimate, nelder_mead, reconstruct_state)
from .example import (ExampleScenario, example_closed_form, example_model, run_batch,
                      run_expanding, run_landscape)
from .analysis import (distinguishability_probe, gramian_W_phi, injectivity_sweep,
                       observability_matrix)

__version__ = "0.1.0"
