"""NumPy implementation of the hot training kernels.

This is the reference backend: one fused discriminator update and one fused
generator update per call, mutating the flat parameter/moment vectors in
place.  ``fedganlab._kernels`` is the compiled twin with the same call
surface; ``fedganlab.backend`` picks between them at import time.

Conventions shared by both backends:
  * discriminator loss  -mean log D(x) - mean log(1 - D(G(z)))
  * generator loss      -mean log D(G(z))          (non-saturating)
                        +mean log(1 - D(G(z)))     (saturating)
  * log arguments are clamped from below, in the loss and in the loss
    gradient denominators, by the ``log_eps`` argument
  * Adam with bias correction on both moments; the step counter is the
    one-element int64 array ``t`` and is advanced by the call
"""

from __future__ import annotations

import numpy as np

from . import nn

NAME = "python"

_HIDDEN_BY_CODE = {0: "relu", 1: "leaky_relu"}
_OUTPUT_BY_CODE = {0: "identity", 1: "tanh", 2: "sigmoid"}


class Ctx:
    """Per-(architecture, max_batch) context; this backend only needs specs."""

    def __init__(self, gen_spec: nn.MlpSpec, disc_spec: nn.MlpSpec):
        self.gen_spec = gen_spec
        self.disc_spec = disc_spec


def _spec_from_meta(sizes, hidden_code, slope, out_code) -> nn.MlpSpec:
    return nn.MlpSpec(
        layer_sizes=tuple(int(s) for s in sizes),
        hidden=_HIDDEN_BY_CODE[int(hidden_code)],
        hidden_slope=float(slope),
        output=_OUTPUT_BY_CODE[int(out_code)],
    )


def prepare(gen_sizes, g_hidden, g_slope, g_out,
            disc_sizes, d_hidden, d_slope, d_out, max_batch: int) -> Ctx:
    del max_batch  # no preallocation needed here
    return Ctx(
        _spec_from_meta(gen_sizes, g_hidden, g_slope, g_out),
        _spec_from_meta(disc_sizes, d_hidden, d_slope, d_out),
    )


def _hyper(lr, b1, b2, eps) -> nn.AdamHyper:
    return nn.AdamHyper(learning_rate=lr, beta1=b1, beta2=b2, epsilon=eps)


def disc_step(ctx: Ctx, gen_params, disc_params, d_m, d_v, d_t,
              real, z, lr, b1, b2, eps, log_eps) -> float:
    """One discriminator update on a real minibatch plus matched fake batch."""
    batch = real.shape[0]
    fake = nn.forward(ctx.gen_spec, gen_params, z)
    stacked = np.vstack((real, fake))
    probs, acts = nn.forward_cached(ctx.disc_spec, disc_params, stacked)
    p_real = probs[:batch, 0]
    p_fake = probs[batch:, 0]
    loss = -(
        np.log(np.maximum(p_real, log_eps)).mean()
        + np.log(np.maximum(1.0 - p_fake, log_eps)).mean()
    )
    upstream = np.empty((2 * batch, 1))
    upstream[:batch, 0] = -1.0 / (batch * np.maximum(p_real, log_eps))
    upstream[batch:, 0] = 1.0 / (batch * np.maximum(1.0 - p_fake, log_eps))
    grad, _ = nn.backprop(ctx.disc_spec, disc_params, acts, upstream)
    d_t[0] += 1
    nn.adam_step_inplace(disc_params, grad, d_m, d_v, int(d_t[0]), _hyper(lr, b1, b2, eps))
    return float(loss)


def gen_step(ctx: Ctx, gen_params, disc_params, g_m, g_v, g_t,
             z, lr, b1, b2, eps, log_eps, non_saturating: bool) -> float:
    """One generator update through a frozen discriminator."""
    batch = z.shape[0]
    fake, gen_acts = nn.forward_cached(ctx.gen_spec, gen_params, z)
    probs, disc_acts = nn.forward_cached(ctx.disc_spec, disc_params, fake)
    p_fake = probs[:, 0]
    if non_saturating:
        loss = -np.log(np.maximum(p_fake, log_eps)).mean()
        upstream = -1.0 / (batch * np.maximum(p_fake, log_eps))
    else:
        loss = np.log(np.maximum(1.0 - p_fake, log_eps)).mean()
        upstream = -1.0 / (batch * np.maximum(1.0 - p_fake, log_eps))
    _, fake_grad = nn.backprop(
        ctx.disc_spec, disc_params, disc_acts, upstream[:, None],
        need_input_grad=True, need_param_grad=False,
    )
    grad, _ = nn.backprop(ctx.gen_spec, gen_params, gen_acts, fake_grad)
    g_t[0] += 1
    nn.adam_step_inplace(gen_params, grad, g_m, g_v, int(g_t[0]), _hyper(lr, b1, b2, eps))
    return float(loss)
