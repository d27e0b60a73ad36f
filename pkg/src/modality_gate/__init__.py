"""Audio-visual action recognition with learnable irrelevant-modality dropout."""

import os as _os

# tiny desk-scale matrices: BLAS thread dispatch costs more than it saves,
# and a single thread keeps results bit-reproducible run to run
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from .autodiff import NumericError, ShapeError, Tensor
from .config import RunConfig, load_config
from .gating import GateConfig, GateDecision, LossConfig, gate
from .model import ActionModel, ModelConfig
from .nn import Parameter, SgdConfig, sgd_step
from .savld import (EmbeddingTable, OverlapConfig, Savld, build_savld,
                    load_embeddings, parse_savld, relevance_target, serialize_savld)
from .synth import MultimodalSample, SynthConfig, SynthWorld, gen_dataset, intra_class_pairing
from .train import evaluate, gate_stats, run_ablation, train
from .train_report import TrainReport

__version__ = "0.1.0"
