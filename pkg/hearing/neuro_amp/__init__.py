from .architectures import (
    PRESETS,
    SCALE_PRESETS,
    AmpModel,
    Architecture,
    ModelConfig,
    count_parameters,
    embed_audiogram,
    forward,
    preset_config,
    with_depth,
)
from .checkpoint import load_model, save_model
from .training import (
    AdamState,
    EarlyStopping,
    TrainConfig,
    TrainResult,
    adam_step,
    backward,
    check_gradients,
    fit,
    infer,
    infer_manifest,
    loss_mse,
    train,
    write_history,
)
