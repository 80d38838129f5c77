"""Small experiment configurations that run in seconds."""
from dataclasses import replace

from decompens.config import (BaggingSection, DecompositionSection, Pipeline, StackerSection,
                              profile_config)
from decompens.learners import LearnerSpec
from decompens.synthetic import SyntheticSpec


def tiny_config(pipelines=("single+none", "eemd+sum", "eemd+linear"), **overrides):
    pipes = [Pipeline(*(p.split("+") + ["none"])[:2]) for p in pipelines]
    cfg = profile_config(
        "quick",
        synthetic=SyntheticSpec(days=2),
        pipelines=pipes,
        input_minutes=30, target_minutes=5, repeats=2,
        stride_train=10, stride_eval=20,
        decomposition=DecompositionSection(trials=3),
        bagging=BaggingSection(members=3),
        learner=LearnerSpec(kind="feedforward", hidden=(8, 8), max_epochs=4, patience=2),
        stacker=StackerSection(max_epochs=4, patience=2),
    )
    return replace(cfg, **overrides).validate() if overrides else cfg
