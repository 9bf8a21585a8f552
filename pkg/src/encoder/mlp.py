from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from src.core.errors import ArgumentError, NumericalError, ShapeError
from src.core.numeric import log_softmax, one_hot, softmax
from src.data.dataset import Payload, payload_matrix
from src.encoder.params import ROTATION_CLASSES, EncoderParams


@dataclass
class LossResult:
    total: float
    cls: float
    rot: float
    grads: EncoderParams


def _as_inputs(params: EncoderParams, payloads: Union[np.ndarray, Sequence[Payload]]) -> np.ndarray:
    inputs = payloads if isinstance(payloads, np.ndarray) else payload_matrix(payloads)
    if inputs.ndim != 2 or inputs.shape[1] != params.input_dim:
        raise ShapeError(f"Encoder expects inputs of width {params.input_dim}, got shape {inputs.shape}")
    return inputs.astype(params.dtype, copy=False)


def _forward_trunk(params: EncoderParams, inputs: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Return layer inputs and pre-activations; the last pre-activation is the embedding"""
    activations, pre = [inputs], []
    for index, layer in enumerate(params.trunk):
        z = activations[-1] @ layer.weight + layer.bias
        pre.append(z)
        if index < len(params.trunk) - 1:
            activations.append(np.maximum(z, 0.0))
    return activations, pre


def embed(params: EncoderParams, payloads: Union[np.ndarray, Sequence[Payload]]) -> np.ndarray:
    """f_phi: (n, input_dim) payloads -> (n, d) embeddings"""
    _, pre = _forward_trunk(params, _as_inputs(params, payloads))
    return pre[-1]


def forward_loss(params: EncoderParams, inputs: Union[np.ndarray, Sequence[Payload]], class_labels: np.ndarray,
                 rot_labels: Optional[np.ndarray], alpha: float) -> LossResult:
    """L = L_cls + alpha * L_rot with gradients of L by backpropagation.

    `class_labels` are class-head indices. Without `rot_labels` the rotation
    loss is 0 and the rotation head gets zero gradient.
    """
    if alpha < 0:
        raise ArgumentError(f"alpha must be >= 0, got {alpha}")
    x = _as_inputs(params, inputs)
    n = x.shape[0]
    if n == 0 or len(class_labels) != n or (rot_labels is not None and len(rot_labels) != n):
        raise ShapeError(f"{n} inputs do not match label counts")

    activations, pre = _forward_trunk(params, x)
    emb = pre[-1]

    cls_logits = emb @ params.class_head.weight + params.class_head.bias
    cls_log_probs = log_softmax(cls_logits)
    loss_cls = -cls_log_probs[np.arange(n), class_labels].mean()
    d_cls = (np.exp(cls_log_probs) - one_hot(class_labels, params.num_classes, emb.dtype)) / n

    if rot_labels is not None:
        rot_logits = emb @ params.rotation_head.weight + params.rotation_head.bias
        rot_log_probs = log_softmax(rot_logits)
        loss_rot = -rot_log_probs[np.arange(n), rot_labels].mean()
        d_rot = alpha * (np.exp(rot_log_probs) - one_hot(rot_labels, ROTATION_CLASSES, emb.dtype)) / n
    else:
        loss_rot = 0.0
        d_rot = np.zeros((n, ROTATION_CLASSES), dtype=emb.dtype)

    total = float(loss_cls + alpha * loss_rot)
    if not np.isfinite(total):
        raise NumericalError(f"Loss is not finite (cls={loss_cls}, rot={loss_rot})")

    head_grads = [emb.T @ d_cls, d_cls.sum(axis=0), emb.T @ d_rot, d_rot.sum(axis=0)]
    dz = d_cls @ params.class_head.weight.T + d_rot @ params.rotation_head.weight.T

    trunk_grads = []
    for index in range(len(params.trunk) - 1, -1, -1):
        layer = params.trunk[index]
        trunk_grads = [activations[index].T @ dz, dz.sum(axis=0)] + trunk_grads
        if index > 0:
            dz = (dz @ layer.weight.T) * (pre[index - 1] > 0)

    grads = params.with_tensors(trunk_grads + head_grads)
    return LossResult(total, float(loss_cls), float(loss_rot), grads)


def sgd_step(params: EncoderParams, grads: EncoderParams, lr: float) -> EncoderParams:
    """params - lr * grads"""
    if lr < 0:
        raise ArgumentError(f"Learning rate must be >= 0, got {lr}")
    if [p.shape for p in params.tensors()] != [g.shape for g in grads.tensors()]:
        raise ShapeError("Gradient shapes do not match parameter shapes")
    return params.with_tensors([(p - lr * g).astype(p.dtype) for p, g in zip(params.tensors(), grads.tensors())])


def class_probabilities(params: EncoderParams, inputs: Union[np.ndarray, Sequence[Payload]]) -> np.ndarray:
    emb = embed(params, inputs)
    return softmax(emb @ params.class_head.weight + params.class_head.bias)


def gradient_check(params: EncoderParams, inputs: np.ndarray, class_labels: np.ndarray,
                   rot_labels: Optional[np.ndarray], alpha: float, h: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences, computed in f64.

    Relative error is |a - n| / max(|a| + |n|, 1e-6) per entry.
    """
    params = params.astype(np.float64)
    inputs = np.asarray(inputs, dtype=np.float64)
    analytic = forward_loss(params, inputs, class_labels, rot_labels, alpha).grads.tensors()

    worst = 0.0
    tensors = [t.copy() for t in params.tensors()]
    for t_index, tensor in enumerate(tensors):
        for idx in np.ndindex(tensor.shape):
            original = tensor[idx]
            tensor[idx] = original + h
            plus = forward_loss(params.with_tensors(tensors), inputs, class_labels, rot_labels, alpha).total
            tensor[idx] = original - h
            minus = forward_loss(params.with_tensors(tensors), inputs, class_labels, rot_labels, alpha).total
            tensor[idx] = original
            numeric = (plus - minus) / (2.0 * h)
            a = analytic[t_index][idx]
            worst = max(worst, abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6))
    return worst
