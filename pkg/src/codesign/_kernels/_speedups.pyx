# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: greedy DAG scheduling, streaming Pareto filtering,
and the controller's LSTM step.

The scheduler and archive mirror ``pure.py`` bit-for-bit.  The policy core
matches the numpy path to floating-point reassociation (sums run in a
different order), so lanes agree to ~1e-12 rather than exactly.
"""
from libc.math cimport exp, tanh, log, isfinite

import numpy as np

BACKEND = "compiled"


def schedule_core(double[::1] duration, int[::1] unit, int n_units,
                  int[::1] pred_ptr, int[::1] pred_idx):
    cdef int n = duration.shape[0]
    start_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] start = start_arr
    cdef double[::1] finish = np.zeros(n, dtype=np.float64)
    cdef double[::1] avail = np.zeros(n_units, dtype=np.float64)
    cdef signed char[::1] done = np.zeros(n, dtype=np.int8)
    cdef int remaining = n, v, k, best
    cdef double t, f, makespan = 0.0
    cdef bint ready
    while remaining > 0:
        best = -1
        for v in range(n):
            if done[v]:
                continue
            ready = True
            for k in range(pred_ptr[v], pred_ptr[v + 1]):
                if not done[pred_idx[k]]:
                    ready = False
                    break
            if ready:
                best = v
                break
        t = avail[unit[best]]
        for k in range(pred_ptr[best], pred_ptr[best + 1]):
            f = finish[pred_idx[k]]
            if f > t:
                t = f
        start[best] = t
        f = t + duration[best]
        finish[best] = f
        avail[unit[best]] = f
        if f > makespan:
            makespan = f
        done[best] = 1
        remaining -= 1
    return makespan, start_arr


def schedule_batch(double[:, ::1] durations, int[:, ::1] units, int n_units,
                   int[::1] pred_ptr, int[::1] pred_idx):
    cdef int b = durations.shape[0]
    cdef int n = durations.shape[1]
    out_arr = np.empty(b, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] finish = np.zeros(n, dtype=np.float64)
    cdef double[::1] avail = np.zeros(n_units, dtype=np.float64)
    cdef signed char[::1] done = np.zeros(n, dtype=np.int8)
    cdef int i, v, k, best, remaining
    cdef double t, f, makespan
    cdef bint ready
    for i in range(b):
        for v in range(n):
            done[v] = 0
        for v in range(n_units):
            avail[v] = 0.0
        remaining = n
        makespan = 0.0
        while remaining > 0:
            best = -1
            for v in range(n):
                if done[v]:
                    continue
                ready = True
                for k in range(pred_ptr[v], pred_ptr[v + 1]):
                    if not done[pred_idx[k]]:
                        ready = False
                        break
                if ready:
                    best = v
                    break
            t = avail[units[i, best]]
            for k in range(pred_ptr[best], pred_ptr[best + 1]):
                f = finish[pred_idx[k]]
                if f > t:
                    t = f
            f = t + durations[i, best]
            finish[best] = f
            avail[units[i, best]] = f
            if f > makespan:
                makespan = f
            done[best] = 1
            remaining -= 1
        out[i] = makespan
    return out_arr


cdef class ParetoArchive:
    """Streaming non-dominated archive (see the pure lane for semantics)."""

    cdef double[:, ::1] _d
    cdef long long[::1] _ids
    cdef int _m
    cdef public long long n_seen
    cdef public long long n_ties

    def __init__(self):
        self._d = np.empty((256, 3), dtype=np.float64)
        self._ids = np.empty(256, dtype=np.int64)
        self._m = 0
        self.n_seen = 0
        self.n_ties = 0

    def __len__(self):
        return self._m

    cdef void _grow(self, int need):
        cdef int cap = self._d.shape[0]
        while cap < need:
            cap *= 2
        d = np.empty((cap, 3), dtype=np.float64)
        ids = np.empty(cap, dtype=np.int64)
        d[: self._m] = np.asarray(self._d[: self._m])
        ids[: self._m] = np.asarray(self._ids[: self._m])
        self._d = d
        self._ids = ids

    cdef void _add_one(self, double a, double b, double c, long long pid):
        cdef int m = self._m
        cdef int j, k
        cdef double[:, ::1] d = self._d
        for j in range(m):
            if d[j, 0] <= a and d[j, 1] <= b and d[j, 2] <= c:
                if d[j, 0] == a and d[j, 1] == b and d[j, 2] == c:
                    self.n_ties += 1
                return
        k = 0
        for j in range(m):
            if a <= d[j, 0] and b <= d[j, 1] and c <= d[j, 2]:
                continue
            if k != j:
                d[k, 0] = d[j, 0]
                d[k, 1] = d[j, 1]
                d[k, 2] = d[j, 2]
                self._ids[k] = self._ids[j]
            k += 1
        if k + 1 > d.shape[0]:
            self._grow(k + 1)
            d = self._d
        d[k, 0] = a
        d[k, 1] = b
        d[k, 2] = c
        self._ids[k] = pid
        self._m = k + 1

    def add_block(self, double[:, ::1] block, long long[::1] ids):
        cdef int n = block.shape[0]
        cdef int i
        self.n_seen += n
        for i in range(n):
            self._add_one(block[i, 0], block[i, 1], block[i, 2], ids[i])

    def add_point(self, double a, double b, double c, long long pid):
        self.n_seen += 1
        self._add_one(a, b, c, pid)

    def extract(self):
        return (
            np.asarray(self._d[: self._m]).copy(),
            np.asarray(self._ids[: self._m]).copy(),
        )


cdef class PolicyCore:
    """Fused forward/backward/update over the controller's flat parameters.

    Offsets into ``theta`` come from the Python layout so there is a single
    source of truth; scratch buffers live here and hold one forward pass.
    ``serial`` increments per forward so a stale tape can be detected.
    """

    cdef double[::1] theta
    cdef double[::1] grad
    cdef int H, E, D, maxk
    cdef int[::1] ks
    cdef long[::1] emb_row0      # embedding row of option 0, per decision
    cdef long wx_off, wh_off, b_off
    cdef long[::1] hw_off, hb_off
    cdef double[:, ::1] gates    # (D, 4H)
    cdef double[:, ::1] tanh_c   # (D, H)
    cdef double[:, ::1] h_all    # (D, H)
    cdef double[:, ::1] c_all    # (D, H)
    cdef double[::1] probs       # flat, prob_off per decision
    cdef long[::1] prob_off
    cdef long[::1] x_rows
    cdef long[::1] choices
    cdef double[::1] logps
    cdef public object grad_arr, probs_arr, choices_arr, logps_arr
    cdef public long serial

    def __init__(self, double[::1] theta, int hidden, int embed_dim, ks,
                 emb_row0, long wx_off, long wh_off, long b_off, hw_off, hb_off):
        self.theta = theta
        self.H = hidden
        self.E = embed_dim
        self.ks = np.asarray(ks, dtype=np.int32)
        self.D = len(ks)
        self.maxk = int(max(ks))
        self.emb_row0 = np.asarray(emb_row0, dtype=np.int64)
        self.wx_off = wx_off
        self.wh_off = wh_off
        self.b_off = b_off
        self.hw_off = np.asarray(hw_off, dtype=np.int64)
        self.hb_off = np.asarray(hb_off, dtype=np.int64)
        self.grad_arr = np.zeros(theta.shape[0], dtype=np.float64)
        self.grad = self.grad_arr
        self.gates = np.zeros((self.D, 4 * hidden))
        self.tanh_c = np.zeros((self.D, hidden))
        self.h_all = np.zeros((self.D, hidden))
        self.c_all = np.zeros((self.D, hidden))
        off = np.concatenate([[0], np.cumsum(np.asarray(ks, dtype=np.int64))])
        self.prob_off = off
        self.probs_arr = np.zeros(int(off[-1]), dtype=np.float64)
        self.probs = self.probs_arr
        self.x_rows = np.zeros(self.D, dtype=np.int64)
        self.choices_arr = np.zeros(self.D, dtype=np.int64)
        self.choices = self.choices_arr
        self.logps_arr = np.zeros(self.D, dtype=np.float64)
        self.logps = self.logps_arr
        self.serial = 0

    cdef void _step(self, int t, long x_row, double* z) nogil:
        cdef int H = self.H, E = self.E
        cdef double* th = &self.theta[0]
        cdef double* x = th + x_row * E
        cdef double* hp = &self.h_all[t - 1, 0] if t > 0 else NULL
        cdef double* wx
        cdef double* wh
        cdef int r, e, j
        cdef double s
        for r in range(4 * H):
            s = th[self.b_off + r]
            wx = th + self.wx_off + r * E
            for e in range(E):
                s += wx[e] * x[e]
            if t > 0:
                wh = th + self.wh_off + r * H
                for j in range(H):
                    s += wh[j] * hp[j]
            z[r] = s
        cdef double* grow = &self.gates[t, 0]
        cdef double* crow = &self.c_all[t, 0]
        cdef double* cprev = &self.c_all[t - 1, 0] if t > 0 else NULL
        cdef double* tcrow = &self.tanh_c[t, 0]
        cdef double* hrow = &self.h_all[t, 0]
        cdef double gi, gf, gg, go, c, tc
        for j in range(H):
            gi = 1.0 / (1.0 + exp(-z[j]))
            gf = 1.0 / (1.0 + exp(-z[H + j]))
            gg = tanh(z[2 * H + j])
            go = 1.0 / (1.0 + exp(-z[3 * H + j]))
            grow[j] = gi
            grow[H + j] = gf
            grow[2 * H + j] = gg
            grow[3 * H + j] = go
            c = gf * (cprev[j] if t > 0 else 0.0) + gi * gg
            tc = tanh(c)
            crow[j] = c
            tcrow[j] = tc
            hrow[j] = go * tc

    cdef void _head(self, int t) nogil:
        cdef int H = self.H
        cdef int k, j
        cdef int K = self.ks[t]
        cdef double* th = &self.theta[0]
        cdef double* p = &self.probs[self.prob_off[t]]
        cdef double* hw
        cdef double* hb = th + self.hb_off[t]
        cdef double* h = &self.h_all[t, 0]
        cdef double s, m, tot
        for k in range(K):
            s = hb[k]
            hw = th + self.hw_off[t] + k * H
            for j in range(H):
                s += hw[j] * h[j]
            p[k] = s
        m = p[0]
        for k in range(1, K):
            if p[k] > m:
                m = p[k]
        tot = 0.0
        for k in range(K):
            s = exp(p[k] - m)
            p[k] = s
            tot += s
        for k in range(K):
            p[k] /= tot

    def forward(self, uniforms, forced):
        """Sample (uniforms given) or replay (forced choices given)."""
        cdef double[::1] us = (np.ascontiguousarray(uniforms, dtype=np.float64)
                               if uniforms is not None else None)
        cdef long[::1] fc = (np.ascontiguousarray(forced, dtype=np.int64)
                             if forced is not None else None)
        cdef bint sampling = uniforms is not None
        z_arr = np.empty(4 * self.H, dtype=np.float64)
        cdef double[::1] zv = z_arr
        cdef int t, k, K
        cdef long x_row = 0, po
        cdef double u, cum
        cdef int choice
        for t in range(self.D):
            self.x_rows[t] = x_row
            self._step(t, x_row, &zv[0])
            self._head(t)
            K = self.ks[t]
            po = self.prob_off[t]
            if sampling:
                u = us[t]
                choice = K - 1
                cum = 0.0
                for k in range(K):
                    cum += self.probs[po + k]
                    if u < cum:
                        choice = k
                        break
            else:
                choice = <int> fc[t]
            self.choices[t] = choice
            self.logps[t] = log(self.probs[po + choice])
            x_row = self.emb_row0[t] + choice
        self.serial += 1
        return self.choices_arr.copy(), self.logps_arr.copy()

    def backward(self, double advantage, double entropy_coef):
        """Fill the gradient buffer from the stored forward pass.

        advantage=1 with entropy_coef=0 yields grad(sum_t log pi(choice_t)).
        """
        cdef int H = self.H, E = self.E
        cdef int t, k, j, r, e, K
        cdef long po, xb
        cdef double s, dkk, dzr, ent, lp, tc
        dk_arr = np.empty(self.maxk, dtype=np.float64)
        cdef double[::1] dk_mv = dk_arr
        cdef double* dk = &dk_mv[0]
        buf = np.zeros((4, self.H), dtype=np.float64)
        cdef double[:, ::1] dhc_mv = buf
        cdef double* dh_next = &dhc_mv[0, 0]
        cdef double* dc_next = &dhc_mv[1, 0]
        cdef double* dh = &dhc_mv[2, 0]
        cdef double* dc = &dhc_mv[3, 0]
        dz_arr = np.empty(4 * self.H, dtype=np.float64)
        cdef double[::1] dz_mv = dz_arr
        cdef double* dz = &dz_mv[0]
        cdef double* grad = &self.grad[0]
        cdef double* th = &self.theta[0]
        cdef double* p
        cdef double* hrow
        cdef double* hprev
        cdef double* cprev
        cdef double* grow
        cdef double* tcrow
        cdef double* gw
        cdef double* gwh
        cdef double* wrow
        cdef long n = self.theta.shape[0]
        for j in range(n):
            grad[j] = 0.0
        for t in range(self.D - 1, -1, -1):
            K = self.ks[t]
            po = self.prob_off[t]
            p = &self.probs[po]
            hrow = &self.h_all[t, 0]
            grow = &self.gates[t, 0]
            tcrow = &self.tanh_c[t, 0]
            hprev = &self.h_all[t - 1, 0] if t > 0 else NULL
            cprev = &self.c_all[t - 1, 0] if t > 0 else NULL
            if entropy_coef != 0.0:
                ent = 0.0
                for k in range(K):
                    ent -= p[k] * log(p[k] + 1e-300)
                for k in range(K):
                    lp = log(p[k] + 1e-300)
                    dk[k] = -p[k] * advantage - entropy_coef * p[k] * (lp + ent)
            else:
                for k in range(K):
                    dk[k] = -p[k] * advantage
            dk[self.choices[t]] += advantage
            # head grads and dh
            for j in range(H):
                dh[j] = dh_next[j]
            for k in range(K):
                dkk = dk[k]
                grad[self.hb_off[t] + k] += dkk
                gw = grad + self.hw_off[t] + k * H
                wrow = th + self.hw_off[t] + k * H
                for j in range(H):
                    gw[j] += dkk * hrow[j]
                    dh[j] += wrow[j] * dkk
            # gate gradients
            for j in range(H):
                tc = tcrow[j]
                dc[j] = dh[j] * grow[3 * H + j] * (1.0 - tc * tc) + dc_next[j]
            for j in range(H):
                dz[j] = dc[j] * grow[2 * H + j] * grow[j] * (1.0 - grow[j])
                s = cprev[j] if t > 0 else 0.0
                dz[H + j] = dc[j] * s * grow[H + j] * (1.0 - grow[H + j])
                dz[2 * H + j] = dc[j] * grow[j] * (1.0 - grow[2 * H + j] * grow[2 * H + j])
                dz[3 * H + j] = dh[j] * tcrow[j] * grow[3 * H + j] * (1.0 - grow[3 * H + j])
            xb = self.x_rows[t] * E
            for r in range(4 * H):
                dzr = dz[r]
                gw = grad + self.wx_off + r * E
                for e in range(E):
                    gw[e] += dzr * th[xb + e]
                if t > 0:
                    gwh = grad + self.wh_off + r * H
                    for j in range(H):
                        gwh[j] += dzr * hprev[j]
                grad[self.b_off + r] += dzr
            for e in range(E):
                s = 0.0
                for r in range(4 * H):
                    s += th[self.wx_off + r * E + e] * dz[r]
                grad[xb + e] += s
            for j in range(H):
                s = 0.0
                for r in range(4 * H):
                    s += th[self.wh_off + r * H + j] * dz[r]
                dh_next[j] = s
                dc_next[j] = dc[j] * grow[H + j]

    def apply(self, double learning_rate):
        """theta += lr * grad; returns False when any parameter went non-finite."""
        cdef long i, n = self.theta.shape[0]
        cdef bint ok = True
        for i in range(n):
            self.theta[i] += learning_rate * self.grad[i]
        for i in range(n):
            if not isfinite(self.theta[i]):
                ok = False
                break
        return bool(ok)


def dominated_or_equal_mask(double[:, ::1] points, double[:, ::1] frontier):
    cdef int n = points.shape[0]
    cdef int m = frontier.shape[0]
    out_arr = np.zeros(n, dtype=bool)
    cdef signed char[::1] out = out_arr.view(np.int8)
    cdef int i, j
    for i in range(n):
        for j in range(m):
            if (frontier[j, 0] <= points[i, 0]
                    and frontier[j, 1] <= points[i, 1]
                    and frontier[j, 2] <= points[i, 2]):
                out[i] = 1
                break
    return out_arr
