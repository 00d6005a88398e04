"""Certified defense against adversarial patch attacks.

An occlusion window slides over the image; a mask-aware classifier predicts
each occluded view; 3x3 regions of those predictions vote; disagreeing
unanimous regions raise an attack alarm.  Because a correctly sized window
fully hides any patch at nine aligned positions, a worst-case analysis can
certify individual images against all patches of a bounded size.
"""

from .attack import (
    AttackConfig,
    AttackImageReport,
    PatchAttackResult,
    attack_image,
    choose_target,
    cyclic_schedule,
    feasibility_sweep,
    pgd_patch,
)
from .certify import (
    CertificationResult,
    adversary_oracle,
    certified_accuracy_flags,
    certify_grid,
    certify_unanimous,
    positionwise_map,
    unaffected_votes,
)
from .data import Dataset, IdxFormatError, SplitSpec, load_cifar10, load_idx, random_split, save_idx
from .evaluate import (
    EvalReport,
    ablation_occlusion_training,
    evaluate_defense,
    evaluate_grids,
    multi_trial,
)
from .gridgen import PredictionGrid, grid_from_json, grid_to_json, load_grid, prediction_grid, save_grid
from .nn import (
    CheckpointError,
    ModelParams,
    TrainConfig,
    desk_cnn,
    forward,
    forward_batch,
    input_gradient,
    load_params,
    loss_and_gradients,
    save_params,
    train,
)
from .occlusion import (
    DefenseConfig,
    apply_mask,
    covering_grid,
    make_mask,
    occlusion_positions,
    occlusion_size,
    patch_positions,
    random_occlusion,
)
from .render import RenderSpec, render_prediction_grid, render_vote_grid
from .vote import (
    ABSTAIN,
    DefenseOutcome,
    VoteGrid,
    decide,
    hard_vote,
    soft_vote,
    trimmed_mean,
    vote,
)

__version__ = "0.1.0"
