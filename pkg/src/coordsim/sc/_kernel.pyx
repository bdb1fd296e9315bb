# cython: language_level=3
"""Compiled successive-cancellation kernel; same contract as ``_kernel_py``."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    FROZEN = 0
    SAMPLE = 1
    ARGMAX = 2


cdef struct State:
    double* prob
    Py_ssize_t* poff
    unsigned char* cw
    Py_ssize_t* coff
    Py_ssize_t n_ctx
    const signed char* actions
    const Py_ssize_t* ctx
    const unsigned char* frozen
    const double* uniforms
    unsigned char* u
    double* post


cdef void _node(State* st, int d, Py_ssize_t m, Py_ssize_t j0, unsigned char* out) noexcept nogil:
    cdef double* P = st.prob + st.poff[d]
    cdef double* Q
    cdef unsigned char* child
    cdef Py_ssize_t h, i, k
    cdef double a, b, flip, keep, num1, tot, p
    cdef unsigned char bit, cl
    cdef signed char act
    if m == 1:
        p = P[st.ctx[j0]]
        st.post[j0] = p
        act = st.actions[j0]
        if act == FROZEN:
            bit = st.frozen[j0]
        elif act == SAMPLE:
            bit = 1 if st.uniforms[j0] < p else 0
        else:
            bit = 1 if p > 0.5 else 0
        st.u[j0] = bit
        out[0] = bit
        return
    h = m >> 1
    Q = st.prob + st.poff[d + 1]
    child = st.cw + st.coff[d + 1]
    for k in range(st.n_ctx):
        for i in range(h):
            a = P[k * m + i]
            b = P[k * m + h + i]
            Q[k * h + i] = a + b - 2.0 * a * b
    _node(st, d + 1, h, j0, child)
    for i in range(h):
        out[i] = child[i]
    for k in range(st.n_ctx):
        for i in range(h):
            a = P[k * m + i]
            b = P[k * m + h + i]
            cl = out[i]
            if cl:
                flip = 1.0 - a
                keep = a
            else:
                flip = a
                keep = 1.0 - a
            num1 = b * flip
            tot = num1 + (1.0 - b) * keep
            Q[k * h + i] = num1 / tot if tot > 0.0 else 0.5
    _node(st, d + 1, h, j0 + h, child)
    for i in range(h):
        out[i] ^= child[i]
        out[h + i] = child[i]


def sc_kernel(leaves, actions, ctx, frozen, uniforms):
    cdef const double[:, :, ::1] lv = np.ascontiguousarray(leaves, dtype=np.float64)
    cdef const signed char[::1] act = np.ascontiguousarray(actions, dtype=np.int8)
    cdef const Py_ssize_t[::1] cx = np.ascontiguousarray(ctx, dtype=np.intp)
    cdef const unsigned char[:, ::1] fr = np.ascontiguousarray(frozen, dtype=np.uint8)
    cdef const double[:, ::1] un = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t n_ctx = lv.shape[0], B = lv.shape[1], N = lv.shape[2]
    u_arr = np.zeros((B, N), dtype=np.uint8)
    post_arr = np.zeros((B, N), dtype=np.float64)
    cdef unsigned char[:, ::1] u = u_arr
    cdef double[:, ::1] post = post_arr
    cdef int n = 0
    while (<Py_ssize_t>1 << n) < N:
        n += 1
    cdef Py_ssize_t poff[32]
    cdef Py_ssize_t coff[32]
    cdef Py_ssize_t tot_p = 0, tot_c = 0
    cdef int d
    for d in range(n + 1):
        poff[d] = tot_p
        coff[d] = tot_c
        tot_p += n_ctx * (N >> d)
        tot_c += N >> d
    cdef State st
    st.prob = <double*> malloc(tot_p * sizeof(double))
    st.cw = <unsigned char*> malloc(tot_c * sizeof(unsigned char))
    if st.prob == NULL or st.cw == NULL:
        free(st.prob)
        free(st.cw)
        raise MemoryError()
    st.poff = poff
    st.coff = coff
    st.n_ctx = n_ctx
    st.actions = &act[0]
    st.ctx = &cx[0]
    cdef Py_ssize_t bi, k, i
    try:
        with nogil:
            for bi in range(B):
                for k in range(n_ctx):
                    for i in range(N):
                        st.prob[k * N + i] = lv[k, bi, i]
                st.frozen = &fr[bi, 0]
                st.uniforms = &un[bi, 0]
                st.u = &u[bi, 0]
                st.post = &post[bi, 0]
                _node(&st, 0, N, 0, st.cw)
    finally:
        free(st.prob)
        free(st.cw)
    return u_arr, post_arr
