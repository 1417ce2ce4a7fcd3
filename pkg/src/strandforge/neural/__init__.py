"""From-scratch tensor core, transformer encoder, and training loops."""

from strandforge.neural.model import (  # noqa: F401
    Encoder,
    IGNORE_INDEX,
    MarkMissing,
    ModelConfig,
    ShapeError,
    classifier_loss,
    classify,
    cosine_similarity,
    desk_config,
    elm_loss,
    embed_sequence,
    group_embedding,
    make_batch,
    paper_config,
    siamese_loss,
    ssm_loss,
    token_loss,
)
from strandforge.neural.tensor import Tensor, tensor  # noqa: F401
from strandforge.neural.train import (  # noqa: F401
    Adam,
    NonFiniteLoss,
    TrainConfig,
    embed_samples,
    evaluate_classifier,
    evaluate_ssm,
    finetune_classifier,
    finetune_siamese,
    finetune_token,
    load_checkpoint,
    pretrain,
    save_checkpoint,
    write_metrics,
)
