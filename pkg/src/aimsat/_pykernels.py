"""Pure-Python/numpy fallback for :mod:`aimsat._kernels`.

Same signatures and the same arithmetic order, so both backends agree to
the last bit on the integrator and exactly on the discrete solvers.
"""
import math

import numpy as np


def _rows(ptr):
    ptr = np.asarray(ptr)
    return np.repeat(np.arange(len(ptr) - 1), np.diff(ptr))


def _deriv(vs, clamped, alpha, lin, q_row, q_idx, q_w, c_row, c_j, c_k, c_w, and_gate, n):
    sq = np.bincount(q_row, weights=q_w * vs[q_idx], minlength=n)
    if and_gate:
        on = (vs[c_j] >= 0.5) & (vs[c_k] >= 0.5)
        sc = np.bincount(c_row, weights=np.where(on, c_w, 0.0), minlength=n)
    else:
        sc = np.bincount(c_row, weights=c_w * vs[c_j] * vs[c_k], minlength=n)
    out = alpha * ((lin + sq) + sc)
    out[clamped] = 0.0
    return out


def derivative(v, clamped, alpha, lin, q_ptr, q_idx, q_w, c_ptr, c_j, c_k, c_w, and_gate):
    v = np.asarray(v, dtype=float)
    return _deriv(v, np.asarray(clamped, dtype=bool), alpha, lin, _rows(q_ptr), q_idx, q_w,
                  _rows(c_ptr), c_j, c_k, c_w, and_gate, len(v))


def integrate(v, x, clamp_until, clamp_target, t, dt, alpha, nsteps, lin, q_ptr, q_idx, q_w,
              c_ptr, c_j, c_k, c_w, and_gate, noise, snaps):
    n = len(v)
    q_row, c_row = _rows(q_ptr), _rows(c_ptr)
    args = (alpha, lin, q_row, q_idx, q_w, c_row, c_j, c_k, c_w, and_gate, n)
    target = np.asarray(clamp_target, dtype=float)
    use_noise = noise.shape[0] > 0
    n_snap = natural = 0
    for s in range(nsteps):
        clamped = clamp_until > 0.0
        k1 = _deriv(v, clamped, *args)
        k2 = _deriv(np.clip(v + 0.5 * dt * k1, 0.0, 1.0), clamped, *args)
        k3 = _deriv(np.clip(v + 0.5 * dt * k2, 0.0, 1.0), clamped, *args)
        k4 = _deriv(np.clip(v + dt * k3, 0.0, 1.0), clamped, *args)
        t = t + dt
        new = v + (dt / 6.0) * (((k1 + 2.0 * k2) + 2.0 * k3) + k4)
        if use_noise:
            new = new + noise[s]
        new = np.clip(new, 0.0, 1.0)
        new[clamped] = target[clamped]
        v[:] = new
        clamp_until[clamped & (t + 0.5 * dt > clamp_until)] = 0.0
        nb = (v >= 0.5).astype(np.uint8)
        diff = (nb != x) & ~clamped
        if diff.any():
            natural += int(diff.sum())
            x[:] = nb
            snaps[n_snap] = x
            n_snap += 1
    return n_snap, natural, t


def make_break(var, neg, size, x, make, brk):
    make[:] = 0
    brk[:] = 0
    if var.shape[0] == 0:
        return 0
    valid = var >= 0
    vals = (np.asarray(x)[np.where(valid, var, 0)].astype(np.int32) ^ neg) * valid
    ntrue = vals.sum(axis=1)
    unsat = ntrue == 0
    np.add.at(make, var[unsat[:, None] & valid], 1)
    np.add.at(brk, var[(ntrue == 1)[:, None] & (vals == 1)], 1)
    return int(unsat.sum())


def count_unsat(var, neg, size, x):
    if var.shape[0] == 0:
        return 0
    valid = var >= 0
    vals = (np.asarray(x)[np.where(valid, var, 0)].astype(np.int32) ^ neg) * valid
    return int(np.count_nonzero(vals.sum(axis=1) == 0))


def sa_sweeps(x, energy, lin, q_ptr, q_idx, q_w, c_ptr, c_j, c_k, c_w, temps, u,
              best_x, best_e, trace, var, neg, size, record, stop_on_solution):
    n = len(x)
    xs = [int(b) for b in x]
    lin_l = list(map(float, lin))
    qp, qi, qw = list(map(int, q_ptr)), list(map(int, q_idx)), list(map(float, q_w))
    cp, cj, ck, cw = (list(map(int, c_ptr)), list(map(int, c_j)), list(map(int, c_k)),
                      list(map(float, c_w)))
    check = var.shape[0] > 0
    rec = record.shape[0] > 0
    solved_at = -1
    done = 0
    for s, T in enumerate(temps):
        row = u[s]
        for i in range(n):
            g = lin_l[i]
            for p in range(qp[i], qp[i + 1]):
                g = g + qw[p] * xs[qi[p]]
            for p in range(cp[i], cp[i + 1]):
                if xs[cj[p]] and xs[ck[p]]:
                    g = g + cw[p]
            dh = g if xs[i] else -g
            if dh <= 0.0 or row[i] < math.exp(-dh / T):
                xs[i] = 1 - xs[i]
                energy = energy + dh
                if energy < best_e:
                    best_e = energy
                    best_x[:] = xs
        trace[s] = energy
        x[:] = xs
        if rec:
            record[s] = xs
        done = s + 1
        if check and count_unsat(var, neg, size, x) == 0:
            solved_at = s
            if stop_on_solution:
                break
    x[:] = xs
    return energy, best_e, solved_at, done


def walksat_init(var, neg, size, x, numtrue, brk, unsat, where):
    brk[:] = 0
    nu = 0
    for m in range(var.shape[0]):
        cnt, last = 0, -1
        for j in range(size[m]):
            if x[var[m, j]] ^ neg[m, j]:
                cnt += 1
                last = var[m, j]
        numtrue[m] = cnt
        where[m] = -1
        if cnt == 0:
            unsat[nu] = m
            where[m] = nu
            nu += 1
        elif cnt == 1:
            brk[last] += 1
    return nu


def walksat_flips(var, neg, size, occ_ptr, occ_clause, occ_slot, x, numtrue, brk, unsat,
                  where, nu, noise, u, on_flip=None):
    """``on_flip(v, nu)``, when given, runs after each flip (test hook)."""
    V = var.tolist()
    G = neg.tolist()
    S = size.tolist()
    flips = 0
    for row in u:
        if nu == 0:
            break
        c = int(unsat[int(row[0] * nu)])
        k = S[c]
        bmin = -1
        cand = []
        for j in range(k):
            b = int(brk[V[c][j]])
            if bmin < 0 or b < bmin:
                bmin = b
                cand = []
            if b == bmin:
                cand.append(V[c][j])
        if bmin > 0 and row[1] < noise:
            v = V[c][int(row[2] * k)]
        else:
            v = cand[int(row[2] * len(cand))]
        x[v] = 1 - x[v]
        flips += 1
        for p in range(occ_ptr[v], occ_ptr[v + 1]):
            m = int(occ_clause[p])
            if x[v] ^ G[m][occ_slot[p]]:
                numtrue[m] += 1
                if numtrue[m] == 1:
                    w = where[m]
                    nu -= 1
                    unsat[w] = unsat[nu]
                    where[unsat[w]] = w
                    where[m] = -1
                    brk[v] += 1
                elif numtrue[m] == 2:
                    for j in range(S[m]):
                        if V[m][j] != v and (x[V[m][j]] ^ G[m][j]):
                            brk[V[m][j]] -= 1
                            break
            else:
                numtrue[m] -= 1
                if numtrue[m] == 0:
                    unsat[nu] = m
                    where[m] = nu
                    nu += 1
                    brk[v] -= 1
                elif numtrue[m] == 1:
                    for j in range(S[m]):
                        if x[V[m][j]] ^ G[m][j]:
                            brk[V[m][j]] += 1
                            break
        if on_flip is not None:
            on_flip(v, nu)
    return nu, flips
