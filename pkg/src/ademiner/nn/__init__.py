from ademiner.nn.tensor import (
    Tensor,
    add,
    check_finite,
    concat,
    conv1d,
    div,
    dropout,
    gather_rows,
    leaky_relu,
    matmul,
    max_over_time,
    mean,
    mul,
    narrow,
    neg,
    no_grad,
    reshape,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    sqrt,
    sub,
    tanh,
    tensor_sum,
)
from ademiner.nn.layers import (
    BatchNorm,
    BiLstm,
    Dense,
    LstmCell,
    MLP,
    Module,
    batch_norm,
    bilstm,
    dense,
    glorot,
    lstm_step,
)
from ademiner.nn.optim import Adam, TrainConfig

__all__ = [
    "Adam", "BatchNorm", "BiLstm", "Dense", "LstmCell", "MLP", "Module",
    "Tensor", "TrainConfig", "add", "batch_norm", "bilstm", "check_finite",
    "concat", "conv1d", "dense", "div", "dropout", "gather_rows", "glorot",
    "leaky_relu", "lstm_step", "matmul", "max_over_time", "mean", "mul",
    "narrow", "neg", "no_grad", "reshape", "sigmoid", "softmax",
    "softmax_cross_entropy", "sqrt", "sub", "tanh", "tensor_sum",
]
