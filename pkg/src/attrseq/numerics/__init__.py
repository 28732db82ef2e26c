"""Minimal deterministic numeric kernel."""

from .gradcheck import grad_check, numerical_gradient, relative_errors
from .init import glorot_bound, init_glorot_uniform, init_orthogonal, init_uniform
from .lstm import (
    Gates,
    LstmCellParams,
    LstmGrads,
    LstmState,
    StepCache,
    init_lstm,
    lstm_backward,
    lstm_forward,
    lstm_step,
    zero_state,
)
from .optim import AdamState, adam_update, sgd_update
from .rng import Rng
from .tensors import (
    dense_backward,
    dense_forward,
    identity,
    log_softmax,
    matrix,
    matvec,
    relu,
    sigmoid,
    softmax,
    stack_backward,
    stack_forward,
    tanh_act,
    vector,
    zeros,
    zeros_like_params,
)
