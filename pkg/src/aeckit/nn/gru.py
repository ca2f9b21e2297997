"""GRU layers (optionally bidirectional, stackable) with backpropagation through time.

Gate layout follows the common (reset, update, candidate) convention with
stacked weight matrices: w_ih (3H, D), w_hh (3H, H) and matching bias vectors.

    r_t = sigmoid(W_ir x_t + b_ir + W_hr h_{t-1} + b_hr)
    z_t = sigmoid(W_iz x_t + b_iz + W_hz h_{t-1} + b_hz)
    n_t = tanh(W_in x_t + b_in + r_t * (W_hn h_{t-1} + b_hn))
    h_t = (1 - z_t) * n_t + z_t * h_{t-1}
"""

from __future__ import annotations

import numpy as np

from .ops import sigmoid


def gru_dir_forward(x: np.ndarray, w_ih, w_hh, b_ih, b_hh):
    """Run one direction over x (T, D); returns hidden states (T, H) and a cache."""
    t_len = x.shape[0]
    hidden = w_hh.shape[1]
    gi = x @ w_ih.T + b_ih  # (T, 3H)
    hs = np.empty((t_len, hidden), dtype=x.dtype)
    r_all = np.empty_like(hs)
    z_all = np.empty_like(hs)
    n_all = np.empty_like(hs)
    ghn_all = np.empty_like(hs)
    h = np.zeros(hidden, dtype=x.dtype)
    for t in range(t_len):
        gh = w_hh @ h + b_hh
        r = sigmoid(gi[t, :hidden] + gh[:hidden])
        z = sigmoid(gi[t, hidden:2 * hidden] + gh[hidden:2 * hidden])
        ghn = gh[2 * hidden:]
        n = np.tanh(gi[t, 2 * hidden:] + r * ghn)
        h = (1.0 - z) * n + z * h
        r_all[t], z_all[t], n_all[t], ghn_all[t] = r, z, n, ghn
        hs[t] = h
    cache = {"x": x, "hs": hs, "r": r_all, "z": z_all, "n": n_all, "ghn": ghn_all}
    return hs, cache


def gru_dir_backward(d_hs: np.ndarray, cache: dict, w_ih, w_hh):
    """BPTT for one direction. d_hs holds the gradient w.r.t. every output h_t."""
    x, hs = cache["x"], cache["hs"]
    r_all, z_all, n_all, ghn_all = cache["r"], cache["z"], cache["n"], cache["ghn"]
    t_len, hidden = hs.shape
    d_gi = np.empty((t_len, 3 * hidden), dtype=x.dtype)
    d_whh = np.zeros_like(w_hh)
    d_bhh = np.zeros(3 * hidden, dtype=x.dtype)
    dh = np.zeros(hidden, dtype=x.dtype)
    for t in range(t_len - 1, -1, -1):
        dh = dh + d_hs[t]
        h_prev = hs[t - 1] if t > 0 else np.zeros(hidden, dtype=x.dtype)
        r, z, n, ghn = r_all[t], z_all[t], n_all[t], ghn_all[t]
        dz = dh * (h_prev - n) * z * (1.0 - z)
        dn = dh * (1.0 - z) * (1.0 - n * n)
        dh_prev = dh * z
        dr = dn * ghn * r * (1.0 - r)
        dghn = dn * r
        d_gi[t, :hidden] = dr
        d_gi[t, hidden:2 * hidden] = dz
        d_gi[t, 2 * hidden:] = dn
        dgh = np.concatenate([dr, dz, dghn])
        d_whh += np.outer(dgh, h_prev)
        d_bhh += dgh
        dh = dh_prev + w_hh.T @ dgh
    d_wih = d_gi.T @ x
    d_bih = d_gi.sum(axis=0)
    dx = d_gi @ w_ih
    return dx, {"w_ih": d_wih, "w_hh": d_whh, "b_ih": d_bih, "b_hh": d_bhh}


def bigru_stack_forward(x: np.ndarray, layer_params: list, bidirectional: bool,
                        inter_dropout: float, training: bool, rng):
    """Stacked (bi)GRU over x (T, D).

    Returns the concatenated final hidden state of the last layer -- forward
    direction at the last time step, backward direction at the first -- plus a
    cache for backprop. Inter-layer dropout applies between stacked layers only.
    """
    from .ops import dropout_mask

    seq = x
    caches = []
    final = None
    n_layers = len(layer_params)
    for j, params in enumerate(layer_params):
        fw_hs, fw_cache = gru_dir_forward(seq, params["fw.w_ih"], params["fw.w_hh"],
                                          params["fw.b_ih"], params["fw.b_hh"])
        layer_cache = {"fw": fw_cache, "in_shape": seq.shape}
        if bidirectional:
            bw_hs, bw_cache = gru_dir_forward(seq[::-1], params["bw.w_ih"], params["bw.w_hh"],
                                              params["bw.b_ih"], params["bw.b_hh"])
            layer_cache["bw"] = bw_cache
            out = np.concatenate([fw_hs, bw_hs[::-1]], axis=1)
            final = np.concatenate([fw_hs[-1], bw_hs[-1]])
        else:
            out = fw_hs
            final = fw_hs[-1]
        mask = None
        if training and inter_dropout > 0 and j < n_layers - 1:
            mask = dropout_mask(out.shape, inter_dropout, rng, out.dtype)
            out = out * mask
        layer_cache["mask"] = mask
        caches.append(layer_cache)
        seq = out
    return final, caches


def bigru_stack_backward(d_final: np.ndarray, caches: list, layer_params: list,
                         bidirectional: bool):
    """Backprop through the stack given the gradient of the final hidden state."""
    grads = [None] * len(layer_params)
    d_seq = None  # gradient flowing into layer j's output sequence
    for j in range(len(layer_params) - 1, -1, -1):
        params = layer_params[j]
        cache = caches[j]
        hidden = params["fw.w_hh"].shape[1]
        t_len = cache["fw"]["hs"].shape[0]
        if d_seq is None:
            d_out = np.zeros((t_len, (2 if bidirectional else 1) * hidden),
                             dtype=cache["fw"]["hs"].dtype)
        else:
            d_out = d_seq
        if cache["mask"] is not None:
            d_out = d_out * cache["mask"]
        d_fw = d_out[:, :hidden].copy()
        if j == len(layer_params) - 1:
            d_fw[-1] += d_final[:hidden]
        dx_fw, g_fw = gru_dir_backward(d_fw, cache["fw"], params["fw.w_ih"], params["fw.w_hh"])
        layer_grads = {f"fw.{k}": v for k, v in g_fw.items()}
        dx = dx_fw
        if bidirectional:
            d_bw = d_out[::-1, hidden:].copy()
            if j == len(layer_params) - 1:
                d_bw[-1] += d_final[hidden:]
            dx_bw, g_bw = gru_dir_backward(d_bw, cache["bw"], params["bw.w_ih"], params["bw.w_hh"])
            dx = dx + dx_bw[::-1]
            layer_grads.update({f"bw.{k}": v for k, v in g_bw.items()})
        grads[j] = layer_grads
        d_seq = dx
    return d_seq, grads
