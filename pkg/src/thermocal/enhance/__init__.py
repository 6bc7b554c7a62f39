from .curve import CurveParams, curve_backward, curve_forward, curve_iterates
from .engine import (
    TrainConfig,
    TrainResult,
    apply_curve,
    enhance_normalized,
    enhance_region,
    mean_dataset_loss,
    optimize_theta_direct,
    predict_theta,
    sample_loss_and_grads,
    theta_loss_and_grad,
    train,
)
from .gradcheck import grad_check, numeric_grad, relative_error
from .layers import scaled_dot_attention
from .losses import SoftTarget, loss_hist, loss_stat, loss_total, soft_histogram, soft_loss_and_grad
from .network import (
    AttentionConfig,
    NetworkWeights,
    cross_attention,
    network_backward,
    network_forward,
    skip_cnn_forward,
)
