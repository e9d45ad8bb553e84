"""Physics-guided neural network feedforward control.

Identification of inverse-dynamics models from sampled input/output data,
regularized PGNN training, input-to-state stability certification of the
resulting feedforward filters, and closed-loop validation on synthetic
plants.
"""

from .data import (
    DataSet,
    DiffOperators,
    NormalizationRecord,
    RegressorSpec,
    build_regressors,
    normalize_inputs,
    read_log_csv,
    split_train_val,
    write_log_csv,
)
from .extrap import ExtrapolationSet, OperatingRegion, generate_ze, lift_to_regressors
from .model import InputTransform, NeuralNet, PgnnModel, PhysicsModel
from .stability import (
    FeedforwardStateSpace,
    IssCertificate,
    ZpetcFilter,
    certify_iss,
    extend_preview,
    theta_constraint,
    to_state_space,
    zpetc_inverse,
)
from .sim import (
    FeedbackLaw,
    PlantModel,
    ReferenceTrajectory,
    ScenarioResult,
    make_reference,
    metrics,
    run_closed_loop,
)
from .train import (
    CostSpec,
    TrainConfig,
    TrainReport,
    fit_physics,
    lambda_phy_rule,
    optimized_lip_selection,
    sweep_lambda,
    total_cost,
)
from . import train  # submodule, not the train() entry point

__version__ = "0.1.0"
