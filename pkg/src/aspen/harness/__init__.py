"""Synthetic data, splits, epochs IO and ablation runners."""

from .epochs import load_epochs, save_epochs
from .runconfig import RunConfig
from .splits import SplitPlan, split_subjects
from .synth import SynthSpec, synthesize
from .tasks import TASKS, get_task, preprocess

__all__ = [
    "RunConfig",
    "SplitPlan",
    "SynthSpec",
    "TASKS",
    "get_task",
    "load_epochs",
    "preprocess",
    "save_epochs",
    "split_subjects",
    "synthesize",
]
