# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled training kernels: fused GAN minibatch updates.

Same call surface and numerical conventions as ``fedganlab._kernels_py``
(see that module's docstring).  Matrix products go through BLAS dgemm;
activations, loss gradients and Adam run as C loops over preallocated
scratch, so one call performs a full discriminator or generator update
without touching the Python interpreter.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, pow, sqrt, tanh
from scipy.linalg.cython_blas cimport dgemm

NAME = "compiled"

DEF HIDDEN_RELU = 0
DEF HIDDEN_LEAKY = 1
DEF OUT_IDENTITY = 0
DEF OUT_TANH = 1
DEF OUT_SIGMOID = 2


cdef void _gemm_nn(int m, int n, int k, double* a, double* b, double* c) noexcept:
    # c(m,n) = a(m,k) @ b(k,n), all row-major contiguous
    cdef double one = 1.0, zero = 0.0
    dgemm("N", "N", &n, &m, &k, &one, b, &n, a, &k, &zero, c, &n)


cdef void _gemm_nt(int m, int n, int k, double* a, double* b, double* c) noexcept:
    # c(m,n) = a(m,k) @ b(n,k)^T
    cdef double one = 1.0, zero = 0.0
    dgemm("T", "N", &n, &m, &k, &one, b, &k, a, &k, &zero, c, &n)


cdef void _gemm_tn(int r, int a_dim, int b_dim, double* x, double* y, double* c) noexcept:
    # c(a_dim,b_dim) = x(r,a_dim)^T @ y(r,b_dim)
    cdef double one = 1.0, zero = 0.0
    dgemm("N", "T", &b_dim, &a_dim, &r, &one, y, &b_dim, x, &a_dim, &zero, c, &b_dim)


cdef class Net:
    cdef long[::1] sizes
    cdef long[::1] w_off
    cdef long[::1] b_off
    cdef long[::1] act_off
    cdef int n_layers
    cdef int hidden_code
    cdef int out_code
    cdef double slope
    cdef long n_params
    cdef int max_rows

    def __init__(self, sizes, int hidden_code, double slope, int out_code, int max_rows):
        cdef int i
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.n_layers = self.sizes.shape[0] - 1
        self.hidden_code = hidden_code
        self.out_code = out_code
        self.slope = slope
        self.max_rows = max_rows
        w_off = np.zeros(self.n_layers, dtype=np.int64)
        b_off = np.zeros(self.n_layers, dtype=np.int64)
        act_off = np.zeros(self.n_layers + 1, dtype=np.int64)
        offset = 0
        for i in range(self.n_layers):
            w_off[i] = offset
            offset += int(self.sizes[i]) * int(self.sizes[i + 1])
            b_off[i] = offset
            offset += int(self.sizes[i + 1])
        self.n_params = offset
        offset = 0
        for i in range(self.n_layers + 1):
            act_off[i] = offset
            offset += max_rows * int(self.sizes[i])
        self.w_off = w_off
        self.b_off = b_off
        self.act_off = act_off

    @property
    def act_buf_len(self):
        return int(self.act_off[self.n_layers]) + self.max_rows * int(self.sizes[self.n_layers])


cdef void _activate(double* h, long count, int code, double slope, bint is_output) noexcept:
    cdef long i
    cdef double v, e
    if not is_output:
        if code == HIDDEN_RELU:
            for i in range(count):
                if h[i] < 0.0:
                    h[i] = 0.0
        else:  # leaky relu
            for i in range(count):
                if h[i] <= 0.0:
                    h[i] = slope * h[i]
        return
    if code == OUT_IDENTITY:
        return
    if code == OUT_TANH:
        for i in range(count):
            h[i] = tanh(h[i])
        return
    # sigmoid, branch on sign so exp never overflows
    for i in range(count):
        v = h[i]
        if v >= 0.0:
            h[i] = 1.0 / (1.0 + exp(-v))
        else:
            e = exp(v)
            h[i] = e / (1.0 + e)


cdef void _net_forward(Net net, double* params, double* acts, int rows) noexcept:
    cdef int l, a, b
    cdef long i, j
    cdef double* x
    cdef double* out
    cdef double* bias
    for l in range(net.n_layers):
        a = <int>net.sizes[l]
        b = <int>net.sizes[l + 1]
        x = acts + net.act_off[l]
        out = acts + net.act_off[l + 1]
        _gemm_nn(rows, b, a, x, params + net.w_off[l], out)
        bias = params + net.b_off[l]
        for i in range(rows):
            for j in range(b):
                out[i * b + j] += bias[j]
        _activate(out, rows * b, net.hidden_code if l < net.n_layers - 1 else net.out_code,
                  net.slope, l == net.n_layers - 1)


cdef void _act_grad_from_value(double* h, double* dh, double* dz, long count,
                               int code, double slope, bint is_output) noexcept:
    # dz = dh * activation'(pre-activation), derivative recovered from h
    cdef long i
    cdef double v
    if not is_output:
        if code == HIDDEN_RELU:
            for i in range(count):
                dz[i] = dh[i] if h[i] > 0.0 else 0.0
        else:
            for i in range(count):
                dz[i] = dh[i] if h[i] > 0.0 else dh[i] * slope
        return
    if code == OUT_IDENTITY:
        for i in range(count):
            dz[i] = dh[i]
        return
    if code == OUT_TANH:
        for i in range(count):
            v = h[i]
            dz[i] = dh[i] * (1.0 - v * v)
        return
    for i in range(count):
        v = h[i]
        dz[i] = dh[i] * (v * (1.0 - v))


cdef void _net_backward(Net net, double* params, double* acts, int rows,
                        double* dh, double* dz_buf, double* grad,
                        double* input_grad) noexcept:
    # dh holds d(loss)/d(output) on entry (rows x out_dim) and is reused as
    # the running upstream buffer; pass grad=NULL to skip parameter
    # gradients, input_grad=NULL to skip d(loss)/d(input).
    cdef int l, a, b
    cdef long i, j
    cdef double* h
    cdef double s
    for l in range(net.n_layers - 1, -1, -1):
        a = <int>net.sizes[l]
        b = <int>net.sizes[l + 1]
        h = acts + net.act_off[l + 1]
        _act_grad_from_value(h, dh, dz_buf, rows * b,
                             net.hidden_code if l < net.n_layers - 1 else net.out_code,
                             net.slope, l == net.n_layers - 1)
        if grad != NULL:
            _gemm_tn(rows, a, b, acts + net.act_off[l], dz_buf, grad + net.w_off[l])
            for j in range(b):
                s = 0.0
                for i in range(rows):
                    s += dz_buf[i * b + j]
                (grad + net.b_off[l])[j] = s
        if l > 0:
            _gemm_nt(rows, a, b, dz_buf, params + net.w_off[l], dh)
        elif input_grad != NULL:
            _gemm_nt(rows, a, b, dz_buf, params + net.w_off[l], input_grad)


cdef void _adam(double* params, double* grad, double* m, double* v,
                long n, long t_new, double lr, double b1, double b2,
                double eps) noexcept:
    cdef long i
    cdef double bc1 = 1.0 - pow(b1, <double>t_new)
    cdef double bc2 = 1.0 - pow(b2, <double>t_new)
    cdef double g, mh, vh
    for i in range(n):
        g = grad[i]
        m[i] = b1 * m[i] + (1.0 - b1) * g
        v[i] = b2 * v[i] + (1.0 - b2) * (g * g)
        mh = m[i] / bc1
        vh = v[i] / bc2
        params[i] = params[i] - lr * mh / (sqrt(vh) + eps)


cdef class Ctx:
    cdef Net gen
    cdef Net disc
    cdef int max_batch
    cdef double[::1] gen_acts
    cdef double[::1] disc_acts
    cdef double[::1] s1
    cdef double[::1] s2
    cdef double[::1] s3
    cdef double[::1] gen_grad
    cdef double[::1] disc_grad

    def __init__(self, Net gen, Net disc, int max_batch):
        self.gen = gen
        self.disc = disc
        self.max_batch = max_batch
        self.gen_acts = np.zeros(gen.act_buf_len)
        self.disc_acts = np.zeros(disc.act_buf_len)
        maxw = max(max(gen.sizes), max(disc.sizes))
        self.s1 = np.zeros(2 * max_batch * int(maxw))
        self.s2 = np.zeros(2 * max_batch * int(maxw))
        self.s3 = np.zeros(2 * max_batch * int(maxw))
        self.gen_grad = np.zeros(gen.n_params)
        self.disc_grad = np.zeros(disc.n_params)


def prepare(gen_sizes, int g_hidden, double g_slope, int g_out,
            disc_sizes, int d_hidden, double d_slope, int d_out, int max_batch):
    gen = Net(gen_sizes, g_hidden, g_slope, g_out, max_batch)
    disc = Net(disc_sizes, d_hidden, d_slope, d_out, 2 * max_batch)
    return Ctx(gen, disc, max_batch)


def disc_step(Ctx ctx, double[::1] gen_params, double[::1] disc_params,
              double[::1] d_m, double[::1] d_v, long[::1] d_t,
              double[:, ::1] real, double[:, ::1] z,
              double lr, double b1, double b2, double eps, double log_eps):
    """Fused discriminator update; returns the minibatch loss."""
    cdef int batch = real.shape[0]
    cdef int data_dim = <int>ctx.disc.sizes[0]
    if batch < 1 or batch > ctx.max_batch:
        raise ValueError(f"batch size {batch} outside 1..{ctx.max_batch}")
    if z.shape[0] != batch or z.shape[1] != ctx.gen.sizes[0]:
        raise ValueError("noise block does not match generator input")
    if real.shape[1] != data_dim:
        raise ValueError(f"real batch width {real.shape[1]} != data dim {data_dim}")
    cdef double* gacts = &ctx.gen_acts[0]
    cdef double* dacts = &ctx.disc_acts[0]
    cdef long i, j
    cdef int rows = 2 * batch
    for i in range(batch):
        for j in range(ctx.gen.sizes[0]):
            gacts[i * ctx.gen.sizes[0] + j] = z[i, j]
    _net_forward(ctx.gen, &gen_params[0], gacts, batch)
    cdef double* fake = gacts + ctx.gen.act_off[ctx.gen.n_layers]
    for i in range(batch):
        for j in range(data_dim):
            dacts[i * data_dim + j] = real[i, j]
            dacts[(batch + i) * data_dim + j] = fake[i * data_dim + j]
    _net_forward(ctx.disc, &disc_params[0], dacts, rows)
    cdef double* probs = dacts + ctx.disc.act_off[ctx.disc.n_layers]
    cdef double* up = &ctx.s1[0]
    cdef double loss_real = 0.0, loss_fake = 0.0
    cdef double c
    for i in range(batch):
        c = probs[i]
        if c < log_eps:
            c = log_eps
        loss_real += log(c)
        up[i] = -1.0 / (batch * c)
        c = 1.0 - probs[batch + i]
        if c < log_eps:
            c = log_eps
        loss_fake += log(c)
        up[batch + i] = 1.0 / (batch * c)
    _net_backward(ctx.disc, &disc_params[0], dacts, rows, up, &ctx.s2[0],
                  &ctx.disc_grad[0], NULL)
    d_t[0] += 1
    _adam(&disc_params[0], &ctx.disc_grad[0], &d_m[0], &d_v[0],
          ctx.disc.n_params, d_t[0], lr, b1, b2, eps)
    return -(loss_real / batch + loss_fake / batch)


def gen_step(Ctx ctx, double[::1] gen_params, double[::1] disc_params,
             double[::1] g_m, double[::1] g_v, long[::1] g_t,
             double[:, ::1] z, double lr, double b1, double b2,
             double eps, double log_eps, bint non_saturating):
    """Fused generator update through a frozen discriminator; returns the loss."""
    cdef int batch = z.shape[0]
    cdef int data_dim = <int>ctx.disc.sizes[0]
    if batch < 1 or batch > ctx.max_batch:
        raise ValueError(f"batch size {batch} outside 1..{ctx.max_batch}")
    if z.shape[1] != ctx.gen.sizes[0]:
        raise ValueError("noise block does not match generator input")
    cdef double* gacts = &ctx.gen_acts[0]
    cdef double* dacts = &ctx.disc_acts[0]
    cdef long i, j
    for i in range(batch):
        for j in range(ctx.gen.sizes[0]):
            gacts[i * ctx.gen.sizes[0] + j] = z[i, j]
    _net_forward(ctx.gen, &gen_params[0], gacts, batch)
    cdef double* fake = gacts + ctx.gen.act_off[ctx.gen.n_layers]
    for i in range(batch):
        for j in range(data_dim):
            dacts[i * data_dim + j] = fake[i * data_dim + j]
    _net_forward(ctx.disc, &disc_params[0], dacts, batch)
    cdef double* probs = dacts + ctx.disc.act_off[ctx.disc.n_layers]
    cdef double* up = &ctx.s1[0]
    cdef double loss = 0.0
    cdef double c
    for i in range(batch):
        if non_saturating:
            c = probs[i]
            if c < log_eps:
                c = log_eps
            loss += log(c)
            up[i] = -1.0 / (batch * c)
        else:
            c = 1.0 - probs[i]
            if c < log_eps:
                c = log_eps
            loss += log(c)
            up[i] = -1.0 / (batch * c)
    # d(loss)/d(fake) via the discriminator, parameter gradients skipped
    _net_backward(ctx.disc, &disc_params[0], dacts, batch, up, &ctx.s2[0],
                  NULL, &ctx.s3[0])
    _net_backward(ctx.gen, &gen_params[0], gacts, batch, &ctx.s3[0], &ctx.s2[0],
                  &ctx.gen_grad[0], NULL)
    g_t[0] += 1
    _adam(&gen_params[0], &ctx.gen_grad[0], &g_m[0], &g_v[0],
          ctx.gen.n_params, g_t[0], lr, b1, b2, eps)
    if non_saturating:
        return -(loss / batch)
    return loss / batch
