# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.  Signatures mirror :mod:`aimsat._pykernels`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


cdef inline double _clip(double a) noexcept nogil:
    if a < 0.0:
        return 0.0
    if a > 1.0:
        return 1.0
    return a


cdef void _deriv(const double[::1] vs, double[::1] out, const unsigned char[::1] clamped,
                 double alpha, const double[::1] lin,
                 const int[::1] q_ptr, const int[::1] q_idx, const double[::1] q_w,
                 const int[::1] c_ptr, const int[::1] c_j, const int[::1] c_k,
                 const double[::1] c_w, int and_gate) noexcept nogil:
    cdef Py_ssize_t n, p, N = vs.shape[0]
    cdef double sq, sc
    for n in range(N):
        if clamped[n]:
            out[n] = 0.0
            continue
        sq = 0.0
        for p in range(q_ptr[n], q_ptr[n + 1]):
            sq = sq + q_w[p] * vs[q_idx[p]]
        sc = 0.0
        if and_gate:
            for p in range(c_ptr[n], c_ptr[n + 1]):
                if vs[c_j[p]] >= 0.5 and vs[c_k[p]] >= 0.5:
                    sc = sc + c_w[p]
        else:
            for p in range(c_ptr[n], c_ptr[n + 1]):
                sc = sc + c_w[p] * vs[c_j[p]] * vs[c_k[p]]
        out[n] = alpha * ((lin[n] + sq) + sc)


def derivative(const double[::1] v, const unsigned char[::1] clamped, double alpha,
               const double[::1] lin, const int[::1] q_ptr, const int[::1] q_idx,
               const double[::1] q_w, const int[::1] c_ptr, const int[::1] c_j,
               const int[::1] c_k, const double[::1] c_w, int and_gate):
    out = np.empty(v.shape[0])
    cdef double[::1] o = out
    _deriv(v, o, clamped, alpha, lin, q_ptr, q_idx, q_w, c_ptr, c_j, c_k, c_w, and_gate)
    return out


def integrate(double[::1] v, unsigned char[::1] x, double[::1] clamp_until,
              const unsigned char[::1] clamp_target, double t, double dt, double alpha,
              int nsteps, const double[::1] lin, const int[::1] q_ptr,
              const int[::1] q_idx, const double[::1] q_w, const int[::1] c_ptr,
              const int[::1] c_j, const int[::1] c_k, const double[::1] c_w,
              int and_gate, const double[:, ::1] noise, unsigned char[:, ::1] snaps):
    """Advance ``nsteps`` RK4 steps in place.

    Returns ``(n_snapshots, natural_flips, t)``.  Every step whose
    quantized state differs from the previous one writes a row to ``snaps``.
    """
    cdef Py_ssize_t N = v.shape[0], n, s
    cdef int n_snap = 0, natural = 0, changed, use_noise = noise.shape[0] > 0
    cdef unsigned char nb
    cdef double h2 = 0.5 * dt, h6 = dt / 6.0
    k1a = np.empty(N); k2a = np.empty(N); k3a = np.empty(N); k4a = np.empty(N)
    wa = np.empty(N)
    cla = np.zeros(N, dtype=np.uint8)
    cdef double[::1] k1 = k1a, k2 = k2a, k3 = k3a, k4 = k4a, w = wa
    cdef unsigned char[::1] clamped = cla
    with nogil:
        for s in range(nsteps):
            for n in range(N):
                clamped[n] = clamp_until[n] > 0.0
            _deriv(v, k1, clamped, alpha, lin, q_ptr, q_idx, q_w, c_ptr, c_j, c_k, c_w, and_gate)
            for n in range(N):
                w[n] = _clip(v[n] + h2 * k1[n])
            _deriv(w, k2, clamped, alpha, lin, q_ptr, q_idx, q_w, c_ptr, c_j, c_k, c_w, and_gate)
            for n in range(N):
                w[n] = _clip(v[n] + h2 * k2[n])
            _deriv(w, k3, clamped, alpha, lin, q_ptr, q_idx, q_w, c_ptr, c_j, c_k, c_w, and_gate)
            for n in range(N):
                w[n] = _clip(v[n] + dt * k3[n])
            _deriv(w, k4, clamped, alpha, lin, q_ptr, q_idx, q_w, c_ptr, c_j, c_k, c_w, and_gate)
            t = t + dt
            changed = 0
            for n in range(N):
                if clamped[n]:
                    v[n] = <double>clamp_target[n]
                    if t + 0.5 * dt > clamp_until[n]:
                        clamp_until[n] = 0.0
                    continue
                v[n] = v[n] + h6 * (((k1[n] + 2.0 * k2[n]) + 2.0 * k3[n]) + k4[n])
                if use_noise:
                    v[n] = v[n] + noise[s, n]
                v[n] = _clip(v[n])
                nb = 1 if v[n] >= 0.5 else 0
                if nb != x[n]:
                    x[n] = nb
                    natural += 1
                    changed = 1
            if changed:
                for n in range(N):
                    snaps[n_snap, n] = x[n]
                n_snap += 1
    return n_snap, natural, t


def make_break(const int[:, ::1] var, const int[:, ::1] neg, const int[::1] size,
               const unsigned char[::1] x, long[::1] make, long[::1] brk):
    """Fill make/break counts for every variable; returns the unsat count."""
    cdef Py_ssize_t m, j, M = var.shape[0]
    cdef int ntrue, last, unsat = 0
    for j in range(make.shape[0]):
        make[j] = 0
        brk[j] = 0
    with nogil:
        for m in range(M):
            ntrue = 0
            last = -1
            for j in range(size[m]):
                if x[var[m, j]] ^ neg[m, j]:
                    ntrue += 1
                    last = var[m, j]
            if ntrue == 0:
                unsat += 1
                for j in range(size[m]):
                    make[var[m, j]] += 1
            elif ntrue == 1:
                brk[last] += 1
    return unsat


cdef int _count_unsat(const int[:, ::1] var, const int[:, ::1] neg, const int[::1] size,
                      const unsigned char[::1] x) noexcept nogil:
    cdef Py_ssize_t m, j
    cdef int unsat = 0, sat
    for m in range(var.shape[0]):
        sat = 0
        for j in range(size[m]):
            if x[var[m, j]] ^ neg[m, j]:
                sat = 1
                break
        if not sat:
            unsat += 1
    return unsat


def count_unsat(const int[:, ::1] var, const int[:, ::1] neg, const int[::1] size,
                const unsigned char[::1] x):
    return _count_unsat(var, neg, size, x)


def sa_sweeps(unsigned char[::1] x, double energy, const double[::1] lin,
              const int[::1] q_ptr, const int[::1] q_idx, const double[::1] q_w,
              const int[::1] c_ptr, const int[::1] c_j, const int[::1] c_k,
              const double[::1] c_w, const double[::1] temps, const double[:, ::1] u,
              unsigned char[::1] best_x, double best_e, double[::1] trace,
              const int[:, ::1] var, const int[:, ::1] neg, const int[::1] size,
              unsigned char[:, ::1] record, int stop_on_solution):
    """Metropolis single-flip sweeps in variable order.

    Returns ``(energy, best_e, solved_at, sweeps_done)``; ``solved_at`` is
    the 0-based sweep after which the clause check first passed, or -1.
    """
    cdef Py_ssize_t N = x.shape[0], n, p, s, S = temps.shape[0]
    cdef double g, dh, T
    cdef int solved_at = -1, check = var.shape[0] > 0, rec = record.shape[0] > 0
    cdef int done = 0
    with nogil:
        for s in range(S):
            T = temps[s]
            for n in range(N):
                g = lin[n]
                for p in range(q_ptr[n], q_ptr[n + 1]):
                    g = g + q_w[p] * x[q_idx[p]]
                for p in range(c_ptr[n], c_ptr[n + 1]):
                    if x[c_j[p]] and x[c_k[p]]:
                        g = g + c_w[p]
                dh = g if x[n] else -g
                if dh <= 0.0 or u[s, n] < exp(-dh / T):
                    x[n] = 1 - x[n]
                    energy = energy + dh
                    if energy < best_e:
                        best_e = energy
                        for p in range(N):
                            best_x[p] = x[p]
            trace[s] = energy
            if rec:
                for n in range(N):
                    record[s, n] = x[n]
            done = s + 1
            if check and _count_unsat(var, neg, size, x) == 0:
                solved_at = s
                if stop_on_solution:
                    break
    return energy, best_e, solved_at, done


def walksat_init(const int[:, ::1] var, const int[:, ::1] neg, const int[::1] size,
                 const unsigned char[::1] x, int[::1] numtrue, long[::1] brk,
                 int[::1] unsat, int[::1] where):
    """Build the incremental WalkSAT state; returns the unsat count."""
    cdef Py_ssize_t m, j
    cdef int nu = 0, last
    for j in range(brk.shape[0]):
        brk[j] = 0
    for m in range(var.shape[0]):
        numtrue[m] = 0
        last = -1
        for j in range(size[m]):
            if x[var[m, j]] ^ neg[m, j]:
                numtrue[m] += 1
                last = var[m, j]
        where[m] = -1
        if numtrue[m] == 0:
            unsat[nu] = m
            where[m] = nu
            nu += 1
        elif numtrue[m] == 1:
            brk[last] += 1
    return nu


def walksat_flips(const int[:, ::1] var, const int[:, ::1] neg, const int[::1] size,
                  const int[::1] occ_ptr, const int[::1] occ_clause, const int[::1] occ_slot,
                  unsigned char[::1] x, int[::1] numtrue, long[::1] brk,
                  int[::1] unsat, int[::1] where, int nu, double noise,
                  const double[:, ::1] u):
    """Run up to ``len(u)`` SKC flips; returns ``(nu, flips_done)``.

    Each flip consumes one row of ``u``: clause pick, noise coin, tie/var pick.
    """
    cdef Py_ssize_t f, F = u.shape[0], j, p
    cdef int c, k, v, best, nbest, cand[3], m, sl, w, newval, flips = 0
    cdef long b, bmin
    with nogil:
        for f in range(F):
            if nu == 0:
                break
            c = unsat[<int>(u[f, 0] * nu)]
            k = size[c]
            # minimal break count among clause variables
            bmin = -1
            nbest = 0
            for j in range(k):
                b = brk[var[c, j]]
                if bmin < 0 or b < bmin:
                    bmin = b
                    nbest = 0
                if b == bmin:
                    cand[nbest] = var[c, j]
                    nbest += 1
            if bmin > 0 and u[f, 1] < noise:
                v = var[c, <int>(u[f, 2] * k)]
            else:
                v = cand[<int>(u[f, 2] * nbest)]
            x[v] = 1 - x[v]
            flips += 1
            for p in range(occ_ptr[v], occ_ptr[v + 1]):
                m = occ_clause[p]
                sl = occ_slot[p]
                newval = x[v] ^ neg[m, sl]
                if newval:
                    numtrue[m] += 1
                    if numtrue[m] == 1:
                        # leave the unsat list, v becomes critical
                        w = where[m]
                        nu -= 1
                        unsat[w] = unsat[nu]
                        where[unsat[w]] = w
                        where[m] = -1
                        brk[v] += 1
                    elif numtrue[m] == 2:
                        for j in range(size[m]):
                            if var[m, j] != v and (x[var[m, j]] ^ neg[m, j]):
                                brk[var[m, j]] -= 1
                                break
                else:
                    numtrue[m] -= 1
                    if numtrue[m] == 0:
                        unsat[nu] = m
                        where[m] = nu
                        nu += 1
                        brk[v] -= 1
                    elif numtrue[m] == 1:
                        for j in range(size[m]):
                            if x[var[m, j]] ^ neg[m, j]:
                                brk[var[m, j]] += 1
                                break
    return nu, flips
