# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM kernels: fused gate math in C, matrix products via BLAS.

Semantics match the NumPy reference backend exactly (the parity tests
compare the two); only the internal cache layout differs.  Everything is
stored time-major, (k, B, n), so each timestep is one contiguous block:
the recurrent products then run on dense panels and the gate loops in
_gatemath.h vectorize.  Inputs and gradients are transposed at the module
boundary, which costs two small copies per call.

Gate blocks are packed (forget, input, candidate, output) along the first
axis of W/U/b.
"""

import numpy as np

cimport cython
from scipy.linalg.cython_blas cimport dgemm, sgemm

ctypedef fused real:
    float
    double

cdef extern from "_gatemath.h":
    void mts_gate_fwd_f32(float* G, float* C, float* TC, float* H,
                          const float* bias, const float* c_prev,
                          int B, int h) nogil
    void mts_gate_fwd_f64(double* G, double* C, double* TC, double* H,
                          const double* bias, const double* c_prev,
                          int B, int h) nogil
    void mts_gate_bwd_f32(const float* G, const float* TC, const float* c_prev,
                          const float* d_ext, const float* dh_carry,
                          float* dc_carry, float* dZ, int B, int h) nogil
    void mts_gate_bwd_f64(const double* G, const double* TC, const double* c_prev,
                          const double* d_ext, const double* dh_carry,
                          double* dc_carry, double* dZ, int B, int h) nogil


cdef inline void _gate_fwd(real* G, real* C, real* TC, real* H, real* bias,
                           real* c_prev, int B, int h) noexcept nogil:
    if real is float:
        mts_gate_fwd_f32(G, C, TC, H, bias, c_prev, B, h)
    else:
        mts_gate_fwd_f64(G, C, TC, H, bias, c_prev, B, h)


cdef inline void _gate_bwd(real* G, real* TC, real* c_prev, real* d_ext,
                           real* dh_carry, real* dc_carry, real* dZ,
                           int B, int h) noexcept nogil:
    if real is float:
        mts_gate_bwd_f32(G, TC, c_prev, d_ext, dh_carry, dc_carry, dZ, B, h)
    else:
        mts_gate_bwd_f64(G, TC, c_prev, d_ext, dh_carry, dc_carry, dZ, B, h)


cdef void _gemm_rm(bint ta, bint tb, int m, int n, int k, real alpha,
                   real* A, int lda, real* B, int ldb, real beta,
                   real* C, int ldc) noexcept nogil:
    """C (m x n, row-major) = alpha * opA(A) * opB(B) + beta * C.

    Row-major operands are handed to Fortran BLAS swapped and transposed:
    the call computes C^T = opB(B)^T opA(A)^T.  lda/ldb/ldc are row
    strides of the stored row-major matrices.
    """
    cdef char first = b'T' if tb else b'N'
    cdef char second = b'T' if ta else b'N'
    if real is float:
        sgemm(&first, &second, &n, &m, &k, &alpha, B, &ldb, A, &lda, &beta, C, &ldc)
    else:
        dgemm(&first, &second, &n, &m, &k, &alpha, B, &ldb, A, &lda, &beta, C, &ldc)


class ExtStackCache:
    """Time-major forward cache consumed by lstm_stack_backward."""

    __slots__ = ("xT", "layers", "h0", "c0", "G", "C", "TC", "H")

    def __init__(self, xT, layers, h0, c0, G, C, TC, H):
        self.xT = xT          # (k, B, in)
        self.layers = layers  # [(W, U, b), ...]
        self.h0 = h0          # (L, B, h)
        self.c0 = c0
        self.G = G            # (L, k, B, 4h) activated gates
        self.C = C            # (L, k, B, h)
        self.TC = TC
        self.H = H


class ExtDecoderCache:
    __slots__ = ("stack", "Wout", "bout", "Y")

    def __init__(self, stack, Wout, bout, Y):
        self.stack = stack
        self.Wout = Wout
        self.bout = bout
        self.Y = Y            # (k, B, d)


def lstm_stack_forward(real[:, :, ::1] x, layers, real[:, :, ::1] h0,
                       real[:, :, ::1] c0):
    cdef int B = x.shape[0]
    cdef int k = x.shape[1]
    cdef int L = len(layers)
    cdef int hidden = layers[0][1].shape[1]
    cdef int row = 4 * hidden
    dtype = np.float32 if real is float else np.float64

    xT_arr = np.ascontiguousarray(np.asarray(x).transpose(1, 0, 2))
    G_arr = np.empty((L, k, B, row), dtype=dtype)
    C_arr = np.empty((L, k, B, hidden), dtype=dtype)
    TC_arr = np.empty((L, k, B, hidden), dtype=dtype)
    H_arr = np.empty((L, k, B, hidden), dtype=dtype)
    cdef real[:, :, ::1] xT = xT_arr
    cdef real[:, :, :, ::1] G = G_arr
    cdef real[:, :, :, ::1] C = C_arr
    cdef real[:, :, :, ::1] TC = TC_arr
    cdef real[:, :, :, ::1] H = H_arr

    cdef real[:, ::1] W, U
    cdef real[::1] bias
    cdef real* inp
    cdef real* hp
    cdef real* cp
    cdef int l, t, in_dim

    for l in range(L):
        W = layers[l][0]
        U = layers[l][1]
        bias = layers[l][2]
        in_dim = W.shape[1]
        inp = &xT[0, 0, 0] if l == 0 else &H[l - 1, 0, 0, 0]
        with nogil:
            # input projection for all timesteps in one product
            _gemm_rm(0, 1, k * B, row, in_dim, <real>1.0, inp, in_dim,
                     &W[0, 0], in_dim, <real>0.0, &G[l, 0, 0, 0], row)
            for t in range(k):
                hp = &h0[l, 0, 0] if t == 0 else &H[l, t - 1, 0, 0]
                cp = &c0[l, 0, 0] if t == 0 else &C[l, t - 1, 0, 0]
                _gemm_rm(0, 1, B, row, hidden, <real>1.0, hp, hidden,
                         &U[0, 0], hidden, <real>1.0, &G[l, t, 0, 0], row)
                _gate_fwd(&G[l, t, 0, 0], &C[l, t, 0, 0], &TC[l, t, 0, 0],
                          &H[l, t, 0, 0], &bias[0], cp, B, hidden)

    cache = ExtStackCache(xT_arr, list(layers), np.asarray(h0), np.asarray(c0),
                          G_arr, C_arr, TC_arr, H_arr)
    h_top = np.ascontiguousarray(H_arr[L - 1].transpose(1, 0, 2))
    return h_top, cache


cdef _layer_grads(real[:, :, ::1] dZ, real[:, :, ::1] x_in,
                  real[:, :, :, ::1] H, real[:, :, ::1] h0,
                  real[:, :, ::1] hprev, int l, int B, int k, int hidden):
    """Parameter gradients of one layer via three large products."""
    cdef int row = 4 * hidden
    cdef int in_dim = x_in.shape[2]
    dtype = np.float32 if real is float else np.float64
    dW_arr = np.empty((row, in_dim), dtype=dtype)
    dU_arr = np.empty((row, hidden), dtype=dtype)
    cdef real[:, ::1] dW = dW_arr
    cdef real[:, ::1] dU = dU_arr
    cdef int t, b, j, n = k * B
    with nogil:
        for b in range(B):
            for j in range(hidden):
                hprev[0, b, j] = h0[l, b, j]
        for t in range(1, k):
            for b in range(B):
                for j in range(hidden):
                    hprev[t, b, j] = H[l, t - 1, b, j]
        _gemm_rm(1, 0, row, in_dim, n, <real>1.0, &dZ[0, 0, 0], row,
                 &x_in[0, 0, 0], in_dim, <real>0.0, &dW[0, 0], in_dim)
        _gemm_rm(1, 0, row, hidden, n, <real>1.0, &dZ[0, 0, 0], row,
                 &hprev[0, 0, 0], hidden, <real>0.0, &dU[0, 0], hidden)
    db_arr = np.asarray(dZ).reshape(n, row).sum(axis=0)
    return dW_arr, dU_arr, db_arr


def lstm_stack_backward(cache, d_htop, need_x_grad=True,
                        need_param_grads=True, need_state_grads=False):
    dT = np.ascontiguousarray(np.asarray(d_htop).transpose(1, 0, 2))
    return _stack_backward_impl(dT, cache, need_x_grad, need_param_grads,
                                need_state_grads)


def _stack_backward_impl(real[:, :, ::1] dT, cache, bint need_x_grad,
                         bint need_param_grads, bint need_state_grads):
    layers = cache.layers
    cdef real[:, :, :, ::1] G = cache.G
    cdef real[:, :, :, ::1] C = cache.C
    cdef real[:, :, :, ::1] TC = cache.TC
    cdef real[:, :, :, ::1] H = cache.H
    cdef real[:, :, ::1] xT = cache.xT
    cdef real[:, :, ::1] h0 = cache.h0
    cdef real[:, :, ::1] c0 = cache.c0
    cdef int L = len(layers)
    cdef int k = dT.shape[0]
    cdef int B = dT.shape[1]
    cdef int hidden = H.shape[3]
    cdef int row = 4 * hidden
    dtype = np.float32 if real is float else np.float64

    dZ_arr = np.empty((k, B, row), dtype=dtype)
    hprev_arr = np.empty((k, B, hidden), dtype=dtype)
    dh_arr = np.empty((B, hidden), dtype=dtype)
    dc_arr = np.empty((B, hidden), dtype=dtype)
    cdef real[:, :, ::1] dZ = dZ_arr
    cdef real[:, :, ::1] hprev = hprev_arr
    cdef real[:, ::1] dh_carry = dh_arr
    cdef real[:, ::1] dc_carry = dc_arr

    param_grads = [None] * L if need_param_grads else None
    dh0_arr = np.zeros((L, B, hidden), dtype=dtype) if need_state_grads else None
    dc0_arr = np.zeros((L, B, hidden), dtype=dtype) if need_state_grads else None

    cdef real[:, ::1] W, U
    cdef real[:, :, ::1] d_ext = dT
    cdef real[:, :, ::1] d_below
    cdef real[:, :, ::1] x_in_mv
    cdef real* cp
    cdef int l, t, in_dim, b, j
    dx = None

    for l in range(L - 1, -1, -1):
        W = layers[l][0]
        U = layers[l][1]
        in_dim = W.shape[1]
        with nogil:
            for b in range(B):
                for j in range(hidden):
                    dh_carry[b, j] = <real>0.0
                    dc_carry[b, j] = <real>0.0
            for t in range(k - 1, -1, -1):
                cp = &c0[l, 0, 0] if t == 0 else &C[l, t - 1, 0, 0]
                _gate_bwd(&G[l, t, 0, 0], &TC[l, t, 0, 0], cp, &d_ext[t, 0, 0],
                          &dh_carry[0, 0], &dc_carry[0, 0], &dZ[t, 0, 0],
                          B, hidden)
                # recurrent gradient for step t-1: dZ_t @ U
                _gemm_rm(0, 0, B, hidden, row, <real>1.0, &dZ[t, 0, 0], row,
                         &U[0, 0], hidden, <real>0.0, &dh_carry[0, 0], hidden)
        if need_param_grads:
            x_in_mv = cache.xT if l == 0 else cache.H[l - 1]
            param_grads[l] = _layer_grads(dZ, x_in_mv, H, h0, hprev, l, B, k, hidden)
        if need_state_grads:
            dh0_arr[l] = dh_arr
            dc0_arr[l] = dc_arr
        if l > 0 or need_x_grad:
            d_below_arr = np.empty((k, B, in_dim), dtype=dtype)
            d_below = d_below_arr
            with nogil:
                _gemm_rm(0, 0, k * B, in_dim, row, <real>1.0, &dZ[0, 0, 0], row,
                         &W[0, 0], in_dim, <real>0.0, &d_below[0, 0, 0], in_dim)
            d_ext = d_below
            if l == 0:
                dx = np.ascontiguousarray(d_below_arr.transpose(1, 0, 2))
    return dx, param_grads, dh0_arr, dc0_arr


def decoder_forward(real[:, :, ::1] h0, real[:, :, ::1] c0, layers,
                    real[:, ::1] Wout, real[::1] bout, int k):
    cdef int L = len(layers)
    cdef int B = h0.shape[1]
    cdef int hidden = h0.shape[2]
    cdef int d = Wout.shape[0]
    cdef int row = 4 * hidden
    dtype = np.float32 if real is float else np.float64

    G_arr = np.empty((L, k, B, row), dtype=dtype)
    C_arr = np.empty((L, k, B, hidden), dtype=dtype)
    TC_arr = np.empty((L, k, B, hidden), dtype=dtype)
    H_arr = np.empty((L, k, B, hidden), dtype=dtype)
    X1_arr = np.zeros((k, B, d), dtype=dtype)
    Y_arr = np.empty((k, B, d), dtype=dtype)
    cdef real[:, :, :, ::1] G = G_arr
    cdef real[:, :, :, ::1] C = C_arr
    cdef real[:, :, :, ::1] TC = TC_arr
    cdef real[:, :, :, ::1] H = H_arr
    cdef real[:, :, ::1] X1 = X1_arr
    cdef real[:, :, ::1] Y = Y_arr

    cdef real[:, ::1] W, U
    cdef real[::1] bias
    cdef real* inp
    cdef real* hp
    cdef real* cp
    cdef int t, l, b, j, in_dim

    for t in range(k):
        for l in range(L):
            W = layers[l][0]
            U = layers[l][1]
            bias = layers[l][2]
            in_dim = W.shape[1]
            inp = &X1[t, 0, 0] if l == 0 else &H[l - 1, t, 0, 0]
            hp = &h0[l, 0, 0] if t == 0 else &H[l, t - 1, 0, 0]
            cp = &c0[l, 0, 0] if t == 0 else &C[l, t - 1, 0, 0]
            with nogil:
                _gemm_rm(0, 1, B, row, in_dim, <real>1.0, inp, in_dim,
                         &W[0, 0], in_dim, <real>0.0, &G[l, t, 0, 0], row)
                _gemm_rm(0, 1, B, row, hidden, <real>1.0, hp, hidden,
                         &U[0, 0], hidden, <real>1.0, &G[l, t, 0, 0], row)
                _gate_fwd(&G[l, t, 0, 0], &C[l, t, 0, 0], &TC[l, t, 0, 0],
                          &H[l, t, 0, 0], &bias[0], cp, B, hidden)
        with nogil:
            # output head; the emitted row is the next step's input
            _gemm_rm(0, 1, B, d, hidden, <real>1.0, &H[L - 1, t, 0, 0], hidden,
                     &Wout[0, 0], hidden, <real>0.0, &Y[t, 0, 0], d)
            for b in range(B):
                for j in range(d):
                    Y[t, b, j] += bout[j]
                    if t + 1 < k:
                        X1[t + 1, b, j] = Y[t, b, j]

    stack = ExtStackCache(X1_arr, list(layers), np.asarray(h0), np.asarray(c0),
                          G_arr, C_arr, TC_arr, H_arr)
    y_out = np.ascontiguousarray(Y_arr.transpose(1, 0, 2))
    return y_out, ExtDecoderCache(stack, np.asarray(Wout), np.asarray(bout), Y_arr)


def decoder_backward(cache, dY, need_param_grads=True, need_state_grads=True):
    dT = np.ascontiguousarray(np.asarray(dY).transpose(1, 0, 2))
    return _decoder_backward_impl(dT, cache, need_param_grads, need_state_grads)


def _decoder_backward_impl(real[:, :, ::1] dT, cache, bint need_param_grads,
                           bint need_state_grads):
    st = cache.stack
    layers = st.layers
    cdef real[:, :, :, ::1] G = st.G
    cdef real[:, :, :, ::1] C = st.C
    cdef real[:, :, :, ::1] TC = st.TC
    cdef real[:, :, :, ::1] H = st.H
    cdef real[:, :, ::1] h0 = st.h0
    cdef real[:, :, ::1] c0 = st.c0
    cdef real[:, ::1] Wout = cache.Wout
    cdef int L = len(layers)
    cdef int k = dT.shape[0]
    cdef int B = dT.shape[1]
    cdef int d = dT.shape[2]
    cdef int hidden = H.shape[3]
    cdef int row = 4 * hidden
    dtype = np.float32 if real is float else np.float64

    dZ_arr = np.empty((L, k, B, row), dtype=dtype)
    dYacc_arr = np.empty((k, B, d), dtype=dtype)
    dhc_arr = np.zeros((L, B, hidden), dtype=dtype)
    dcc_arr = np.zeros((L, B, hidden), dtype=dtype)
    dfrom_arr = np.empty((B, hidden), dtype=dtype)
    dxfb_arr = np.zeros((B, d), dtype=dtype)
    hprev_arr = np.empty((k, B, hidden), dtype=dtype)
    cdef real[:, :, :, ::1] dZ = dZ_arr
    cdef real[:, :, ::1] dYacc = dYacc_arr
    cdef real[:, :, ::1] dh_carry = dhc_arr
    cdef real[:, :, ::1] dc_carry = dcc_arr
    cdef real[:, ::1] dfrom = dfrom_arr
    cdef real[:, ::1] dxfb = dxfb_arr
    cdef real[:, :, ::1] hprev = hprev_arr
    cdef real[:, :, ::1] x_in_mv

    cdef real[:, ::1] W, U
    cdef real* cp
    cdef int t, l, b, j, in_dim

    for t in range(k - 1, -1, -1):
        with nogil:
            for b in range(B):
                for j in range(d):
                    dYacc[t, b, j] = dT[t, b, j] + dxfb[b, j]
            _gemm_rm(0, 0, B, hidden, d, <real>1.0, &dYacc[t, 0, 0], d,
                     &Wout[0, 0], hidden, <real>0.0, &dfrom[0, 0], hidden)
        for l in range(L - 1, -1, -1):
            W = layers[l][0]
            U = layers[l][1]
            in_dim = W.shape[1]
            with nogil:
                cp = &c0[l, 0, 0] if t == 0 else &C[l, t - 1, 0, 0]
                _gate_bwd(&G[l, t, 0, 0], &TC[l, t, 0, 0], cp, &dfrom[0, 0],
                          &dh_carry[l, 0, 0], &dc_carry[l, 0, 0],
                          &dZ[l, t, 0, 0], B, hidden)
                _gemm_rm(0, 0, B, hidden, row, <real>1.0, &dZ[l, t, 0, 0], row,
                         &U[0, 0], hidden, <real>0.0, &dh_carry[l, 0, 0], hidden)
                if l > 0:
                    _gemm_rm(0, 0, B, in_dim, row, <real>1.0, &dZ[l, t, 0, 0],
                             row, &W[0, 0], in_dim, <real>0.0, &dfrom[0, 0], in_dim)
                else:
                    _gemm_rm(0, 0, B, in_dim, row, <real>1.0, &dZ[l, t, 0, 0],
                             row, &W[0, 0], in_dim, <real>0.0, &dxfb[0, 0], in_dim)

    param_grads = None
    dWout_arr = dbout_arr = None
    cdef real[:, ::1] dWout_mv
    if need_param_grads:
        param_grads = []
        for l in range(L):
            x_in_mv = st.xT if l == 0 else st.H[l - 1]
            param_grads.append(_layer_grads(dZ[l], x_in_mv, H, h0, hprev,
                                            l, B, k, hidden))
        dWout_arr = np.empty((d, hidden), dtype=dtype)
        dWout_mv = dWout_arr
        with nogil:
            _gemm_rm(1, 0, d, hidden, k * B, <real>1.0, &dYacc[0, 0, 0], d,
                     &H[L - 1, 0, 0, 0], hidden, <real>0.0, &dWout_mv[0, 0], hidden)
        dbout_arr = dYacc_arr.reshape(k * B, d).sum(axis=0)
    dh0_out = dhc_arr if need_state_grads else None
    dc0_out = dcc_arr if need_state_grads else None
    return param_grads, dWout_arr, dbout_arr, dh0_out, dc0_out
