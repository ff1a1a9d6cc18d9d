"""Plan edits to reasoning chains by rolling candidate edits through a learned
latent world model (encoder, residual transition, reward head)."""
from tapplan.chain import (
    AddExample, EditAction, FormatChange, InstructionEdit, MDPState, NoOp, ReasoningChain, ScaleWeights,
    StepMerge, StepReorder, StepSplit, TaskInput, TokenAdd, TokenDelete, TokenReplace, Transition,
    apply_edit, enumerate_actions, sample_action,
)
from tapplan.planner import OracleModel, PlannerConfig, optimize
from tapplan.world_model import ModelConfig, TrainConfig, WorldModel, train

__version__ = "0.1.0"

__all__ = [
    "AddExample", "EditAction", "FormatChange", "InstructionEdit", "MDPState", "NoOp", "ReasoningChain",
    "ScaleWeights", "StepMerge", "StepReorder", "StepSplit", "TaskInput", "TokenAdd", "TokenDelete",
    "TokenReplace", "Transition", "apply_edit", "enumerate_actions", "sample_action",
    "OracleModel", "PlannerConfig", "optimize", "ModelConfig", "TrainConfig", "WorldModel", "train",
]
