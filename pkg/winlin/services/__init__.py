from .bench_service import bench_sweep, count_flops, measure, write_bench_csv
from .dataset_service import generate_dataset, load_split
from .evaluation_service import evaluate, evaluate_checkpoint
from .gradcheck_service import run_suite
from .inference import tta_predict
from .losses import joint_loss
from .metrics import compute_metrics
from .optim import AdamW, cosine_lr
from .prediction_service import predict_directory
from .run_config_service import parse_config, resolve_seed, write_effective_config
from .training_service import train

__all__ = [
    "AdamW",
    "bench_sweep",
    "compute_metrics",
    "cosine_lr",
    "count_flops",
    "evaluate",
    "evaluate_checkpoint",
    "generate_dataset",
    "joint_loss",
    "load_split",
    "measure",
    "parse_config",
    "predict_directory",
    "resolve_seed",
    "run_suite",
    "train",
    "tta_predict",
    "write_bench_csv",
    "write_effective_config",
]
