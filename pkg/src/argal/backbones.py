"""Emission backbones mapping token vectors to per-token label scores.

Two backbones are provided:

* ``linear`` — dropout (rate 0.3) on the input vectors followed by a single
  linear map.
* ``bilstm`` — one bidirectional LSTM layer (hidden size 200 per direction),
  dropout (rate 0.5) on the concatenated hidden states, then a linear map
  from the 2H concatenation to the label scores.

All forward/backward functions operate on batches of same-length sentences,
shape [B, T, D]; a single sentence is a batch of one.  Forward passes cache
everything needed for exact reverse-mode gradients; ``*_backward`` returns
parameter gradients summed over the batch, keyed like the parameter dicts.
Dropout is inverted (kept activations scaled by 1/(1-p)) and only active in
training mode, so inference is deterministic.
"""

from __future__ import annotations

from typing import Any

import numpy as np

LINEAR_DROPOUT = 0.3
BILSTM_DROPOUT = 0.5
BILSTM_HIDDEN = 200


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_linear_params(rng: np.random.Generator, input_dim: int, num_labels: int) -> dict[str, np.ndarray]:
    return {
        "lin_w": uniform_init(rng, (num_labels, input_dim), input_dim),
        "lin_b": np.zeros(num_labels),
    }


def init_bilstm_params(
    rng: np.random.Generator, input_dim: int, num_labels: int, hidden: int = BILSTM_HIDDEN
) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    for direction in ("fw", "bw"):
        params[f"{direction}_w"] = uniform_init(rng, (4 * hidden, input_dim), input_dim)
        params[f"{direction}_u"] = uniform_init(rng, (4 * hidden, hidden), hidden)
        params[f"{direction}_b"] = np.zeros(4 * hidden)
    params["out_w"] = uniform_init(rng, (num_labels, 2 * hidden), 2 * hidden)
    params["out_b"] = np.zeros(num_labels)
    return params


def _dropout_mask(rng: np.random.Generator, shape: tuple[int, ...], rate: float) -> np.ndarray:
    return (rng.random(shape) >= rate).astype(np.float64) / (1.0 - rate)


def linear_forward(
    params: dict[str, np.ndarray],
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict[str, Any]]:
    if training:
        if rng is None:
            raise ValueError("training-mode forward needs an rng for dropout")
        xd = x * _dropout_mask(rng, x.shape, LINEAR_DROPOUT)
    else:
        xd = x
    emissions = xd @ params["lin_w"].T + params["lin_b"]
    return emissions, {"xd": xd}


def linear_backward(
    params: dict[str, np.ndarray], cache: dict[str, Any], d_emissions: np.ndarray
) -> dict[str, np.ndarray]:
    B, T, _ = d_emissions.shape
    xd = cache["xd"]
    return {
        "lin_w": np.einsum("btl,btd->ld", d_emissions, xd),
        "lin_b": d_emissions.sum(axis=(0, 1)),
    }


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _lstm_forward(
    w: np.ndarray, u: np.ndarray, b: np.ndarray, xs: np.ndarray
) -> tuple[np.ndarray, dict[str, Any]]:
    """Unidirectional LSTM over xs [B, T, D]; returns hidden states [B, T, H]."""
    B, T, _ = xs.shape
    H = u.shape[1]
    hs = np.zeros((T + 1, B, H))  # hs[0] is the initial state
    cs = np.zeros((T + 1, B, H))
    gates = np.zeros((T, 4, B, H))  # i, f, g, o after the nonlinearity
    x_proj = xs @ w.T  # [B, T, 4H], shared across steps
    for t in range(T):
        z = x_proj[:, t] + hs[t] @ u.T + b
        i = _sigmoid(z[:, 0:H])
        f = _sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H : 4 * H])
        cs[t + 1] = f * cs[t] + i * g
        hs[t + 1] = o * np.tanh(cs[t + 1])
        gates[t, 0], gates[t, 1], gates[t, 2], gates[t, 3] = i, f, g, o
    return hs[1:].transpose(1, 0, 2), {"xs": xs, "hs": hs, "cs": cs, "gates": gates}


def _lstm_backward(
    w: np.ndarray,
    u: np.ndarray,
    cache: dict[str, Any],
    d_hidden: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reverse accumulation through the recurrence; d_hidden is [B, T, H]."""
    xs, hs, cs, gates = cache["xs"], cache["hs"], cache["cs"], cache["gates"]
    B, T, H = d_hidden.shape
    dw = np.zeros_like(w)
    du = np.zeros_like(u)
    db = np.zeros(4 * H)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i, f, g, o = gates[t]
        tanh_c = np.tanh(cs[t + 1])
        dh = d_hidden[:, t] + dh_next
        do = dh * tanh_c
        dc = dh * o * (1.0 - tanh_c**2) + dc_next
        di = dc * g
        df = dc * cs[t]
        dg = dc * i
        dc_next = dc * f
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g**2), do * o * (1 - o)], axis=1
        )  # [B, 4H]
        dw += dz.T @ xs[:, t]
        du += dz.T @ hs[t]
        db += dz.sum(axis=0)
        dh_next = dz @ u
    return dw, du, db


def bilstm_forward(
    params: dict[str, np.ndarray],
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict[str, Any]]:
    h_fw, cache_fw = _lstm_forward(params["fw_w"], params["fw_u"], params["fw_b"], x)
    h_bw_rev, cache_bw = _lstm_forward(params["bw_w"], params["bw_u"], params["bw_b"], x[:, ::-1])
    h_bw = h_bw_rev[:, ::-1]
    h2 = np.concatenate([h_fw, h_bw], axis=2)  # [B, T, 2H]
    if training:
        if rng is None:
            raise ValueError("training-mode forward needs an rng for dropout")
        mask = _dropout_mask(rng, h2.shape, BILSTM_DROPOUT)
        h2d = h2 * mask
    else:
        mask = None
        h2d = h2
    emissions = h2d @ params["out_w"].T + params["out_b"]
    cache = {"cache_fw": cache_fw, "cache_bw": cache_bw, "h2d": h2d, "mask": mask}
    return emissions, cache


def bilstm_backward(
    params: dict[str, np.ndarray], cache: dict[str, Any], d_emissions: np.ndarray
) -> dict[str, np.ndarray]:
    H = params["fw_u"].shape[1]
    grads: dict[str, np.ndarray] = {
        "out_w": np.einsum("btl,bth->lh", d_emissions, cache["h2d"]),
        "out_b": d_emissions.sum(axis=(0, 1)),
    }
    d_h2d = d_emissions @ params["out_w"]
    d_h2 = d_h2d * cache["mask"] if cache["mask"] is not None else d_h2d
    d_fw = d_h2[:, :, :H]
    d_bw = d_h2[:, ::-1, H:]  # backward LSTM saw the reversed sequence
    grads["fw_w"], grads["fw_u"], grads["fw_b"] = _lstm_backward(
        params["fw_w"], params["fw_u"], cache["cache_fw"], d_fw
    )
    grads["bw_w"], grads["bw_u"], grads["bw_b"] = _lstm_backward(
        params["bw_w"], params["bw_u"], cache["cache_bw"], d_bw
    )
    return grads


def bilstm_final_states(params: dict[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    """Concatenated final hidden states of both directions (inference mode).

    The forward direction contributes its state after the last token; the
    backward direction its state after consuming the reversed sequence.
    Used as the sentence representation for the adaptive-sampling binary
    model.  ``x`` is a single sentence [T, D].
    """
    xb = x[None, :, :]
    h_fw, _ = _lstm_forward(params["fw_w"], params["fw_u"], params["fw_b"], xb)
    h_bw_rev, _ = _lstm_forward(params["bw_w"], params["bw_u"], params["bw_b"], xb[:, ::-1])
    return np.concatenate([h_fw[0, -1], h_bw_rev[0, -1]])
