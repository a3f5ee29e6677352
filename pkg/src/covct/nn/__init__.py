from covct.nn.layers import convolve, dense_softmax, global_avg_pool, mbconv_block, relu, softmax, swish
from covct.nn.model import (
    DEFAULT_THREADS,
    ActivationOutput,
    LayerSpec,
    ModelBundle,
    build_micronet,
    forward,
    forward_array,
)
from covct.nn.scaling import CompoundScaleSpec, compound_scale
from covct.nn.schedule import ScheduleState, early_stopping_step, plateau_lr_step
from covct.nn.serde import dumps, load, loads, save

__all__ = [
    "ActivationOutput", "CompoundScaleSpec", "DEFAULT_THREADS", "LayerSpec", "ModelBundle",
    "ScheduleState", "build_micronet", "compound_scale", "convolve", "dense_softmax", "dumps",
    "early_stopping_step", "forward", "forward_array", "global_avg_pool", "load", "loads",
    "mbconv_block", "plateau_lr_step", "relu", "save", "softmax", "swish",
]
