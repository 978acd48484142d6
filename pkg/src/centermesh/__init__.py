"""Center-heatmap machinery for one-stage multi-person 3D body-mesh regression.

The package covers everything around the (out-of-scope) CNN backbone: map
encoding of scenes (center heatmap + parameter map), collision-aware center
repulsion, peak parsing and parameter sampling, a parametric body model,
the training loss stack, and the evaluation metrics.
"""

from .backend import backend_name, set_backend, use_backend, warmup
from .body_model import (
    BodyModel,
    PoseParams,
    ShapeParams,
    TORSO_JOINT_INDICES,
    forward,
    forward_batch,
    load_model,
    make_toy_model,
    matrix_to_rot6d,
    rot6d_to_matrix,
    rot6d_to_matrix_batch,
    save_model,
)
from .camera import CameraParams, heatmap_to_normalized, normalized_to_heatmap, project
from .center_map import (
    CenterHeatmap,
    CenterSpec,
    Joints2D,
    apply_car,
    compute_body_center,
    kernel_size,
    render_heatmap,
    repel_pair,
)
from .decode import (
    DecodedPerson,
    Detection,
    MeshParamMap,
    decode_scene,
    depth_order,
    match_to_gt,
    parse_peaks,
    people_from_json,
    people_to_json,
    sample_params,
)
from .errors import (
    CenterMeshError,
    DegenerateGeometryError,
    DegenerateRotationError,
    EmptySupervisionError,
    ModelLoadError,
    NoPositiveCellsError,
    NoVisibleJointsError,
    TensorFormatError,
)
from .evaluation import evaluate_scene, evaluate_scenes, report_to_csv
from .losses import (
    GmmPrior,
    LossWeights,
    MeshParamLossResult,
    PersonPrediction,
    SupervisionTargets,
    focal_center_loss,
    focal_center_loss_grad,
    gmm_prior_loss,
    mesh_param_loss,
    procrustes_align,
)
from .metrics import EvalResult, ap50, mpjae, mpjpe, pa_mpjae, pck_auc, pmpjpe, pve
from .scene import (
    Person,
    Scene,
    default_toy_model,
    encode_scene,
    load_maps,
    load_scene,
    save_maps,
    save_scene,
    synth_scene,
)

__version__ = "0.1.0"
