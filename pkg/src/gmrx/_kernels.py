"""Numba inner loop for the message-passing sweeps.

The sweep is inherently sequential over symbols, so its per-step linear
algebra (2x2 innovations, 4x4 Riccati updates on a handful of components)
is far too small for vectorized numpy to amortize call overhead.  This
kernel hand-rolls those operations; `detector._sweep_py` is the numpy
reference implementation that the tests hold it against.
"""

import numba
import numpy as np

LOG_PI = np.log(np.pi)
VAR_FLOOR = 1e-12


@numba.njit(cache=True)
def _chol(a, n):
    """In-place lower Cholesky of a Hermitian matrix; False when not PD."""
    for i in range(n):
        s = a[i, i].real
        for k in range(i):
            s -= (a[i, k] * a[i, k].conjugate()).real
        if s <= 0.0:
            return False
        d = np.sqrt(s)
        a[i, i] = d
        for j in range(i + 1, n):
            c = a[j, i]
            for k in range(i):
                c -= a[j, k] * a[i, k].conjugate()
            a[j, i] = c / d
    return True


@numba.njit(cache=True)
def _psd_repair(k, r, scale):
    """Symmetrize; clamp eigenvalues below 1e-12 * max(trace, scale) up to
    that floor.  The scale anchor keeps fully degenerate zero-noise runs
    from shrinking the trace itself into underflow."""
    tr = 0.0
    for a in range(r):
        tr += k[a, a].real
    for a in range(r):
        for b in range(a + 1, r):
            m = 0.5 * (k[a, b] + k[b, a].conjugate())
            k[a, b] = m
            k[b, a] = m.conjugate()
        k[a, a] = k[a, a].real
    if tr < scale:
        tr = scale
    floor = VAR_FLOOR * tr
    probe = k.copy()
    for a in range(r):
        probe[a, a] -= floor
    if _chol(probe, r):
        return
    w, v = np.linalg.eigh(k)
    for a in range(r):
        if w[a] < floor:
            w[a] = floor
    for a in range(r):
        for b in range(r):
            acc = 0.0 + 0.0j
            for c in range(r):
                acc += v[a, c] * w[c] * v[b, c].conjugate()
            k[a, b] = acc


@numba.njit(cache=True)
def _step_component(mean, cov, x, xp, y, alpha, sigma_n2, q_diag, trace_q, out_mean, out_cov):
    """One conditional Kalman measure/predict step; returns the observation
    log likelihood.  Writes alpha (m + K Z^H S^-1 v) and
    alpha^2 (K - K Z^H S^-1 Z K) + (1 - alpha^2) Q."""
    r = mean.shape[0]
    n = r // 2
    kz = np.empty((r, n), np.complex128)  # K Z^H
    for a in range(r):
        for b in range(n):
            kz[a, b] = x * cov[a, b] + xp * cov[a, b + n]
    s = np.empty((n, n), np.complex128)  # sigma_n2 I + Z K Z^H
    for a in range(n):
        for b in range(n):
            s[a, b] = x * kz[a, b] + xp * kz[a + n, b]
        s[a, a] += sigma_n2
    if not _chol(s, n):
        if sigma_n2 > 0.0:
            raise np.linalg.LinAlgError("innovation covariance not PD")
        # Zero-noise degenerate run: lift a rank-deficient innovation by an
        # escalating relative floor until it factors.
        tr = 0.0
        for a in range(n):
            tr += abs(x * kz[a, a] + xp * kz[a + n, a])
        lift = VAR_FLOOR * tr
        ok = False
        for _ in range(40):
            for a in range(n):
                for b in range(n):
                    s[a, b] = x * kz[a, b] + xp * kz[a + n, b]
                s[a, a] += lift
            if _chol(s, n):
                ok = True
                break
            lift *= 10.0
        if not ok:
            raise np.linalg.LinAlgError("innovation covariance not PD")
    logdet = 0.0
    for a in range(n):
        logdet += 2.0 * np.log(s[a, a].real)
    v = np.empty(n, np.complex128)  # innovation, then L^-1 innovation
    for a in range(n):
        acc = y[a] - x * mean[a] - xp * mean[a + n]
        for k in range(a):
            acc -= s[a, k] * v[k]
        v[a] = acc / s[a, a].real
    quad = 0.0
    for a in range(n):
        quad += (v[a] * v[a].conjugate()).real
    loglike = -n * LOG_PI - logdet - quad

    # Gain G = K Z^H S^-1 via S W = (K Z^H)^H, G = W^H.
    w = np.empty((n, r), np.complex128)
    for col in range(r):
        for a in range(n):
            acc = kz[col, a].conjugate()
            for k in range(a):
                acc -= s[a, k] * w[k, col]
            w[a, col] = acc / s[a, a].real
        for a in range(n - 1, -1, -1):
            acc = w[a, col]
            for k in range(a + 1, n):
                acc -= s[k, a].conjugate() * w[k, col]
            w[a, col] = acc / s[a, a].real
    # Finish the innovation solve (v currently holds L^-1 innovation).
    for a in range(n - 1, -1, -1):
        acc = v[a]
        for k in range(a + 1, n):
            acc -= s[k, a].conjugate() * v[k]
        v[a] = acc / s[a, a].real

    a2 = alpha * alpha
    for a in range(r):
        acc = mean[a]
        for c in range(n):
            acc += kz[a, c] * v[c]  # K Z^H (S^-1 innovation)
        out_mean[a] = alpha * acc
    for a in range(r):
        for b in range(r):
            acc = cov[a, b]
            for c in range(n):
                acc -= w[c, a].conjugate() * kz[b, c].conjugate()
            out_cov[a, b] = a2 * acc
        out_cov[a, a] += (1.0 - a2) * q_diag[a]
    _psd_repair(out_cov, r, trace_q)
    return loglike


@numba.njit(cache=True)
def sweep_kernel(y, p_plus, p_plus_int, alpha, sigma_n2, q_diag, cap, collapse):
    """Forward sweep of the mixture recursion with survivor reduction.

    Returns padded per-index message arrays (counts, log weights, means,
    covariances); index 0 holds the stationary prior.
    """
    l, n = y.shape
    r = 2 * n
    trace_q = q_diag.sum()
    width = 1 if collapse else cap
    out_counts = np.zeros(l, np.int64)
    out_logw = np.full((l, width), -np.inf)
    out_means = np.zeros((l, width, r), np.complex128)
    out_covs = np.zeros((l, width, r, r), np.complex128)

    cur_logw = np.zeros(width)
    cur_means = np.zeros((width, r), np.complex128)
    cur_covs = np.zeros((width, r, r), np.complex128)
    for a in range(r):
        cur_covs[0, a, a] = q_diag[a]
    cur_cnt = 1

    buf = 4 * width
    buf_logw = np.empty(buf)
    buf_means = np.empty((buf, r), np.complex128)
    buf_covs = np.empty((buf, r, r), np.complex128)
    used = np.empty(buf, np.bool_)

    out_counts[0] = 1
    out_logw[0, 0] = 0.0
    out_covs[0, 0] = cur_covs[0]

    for i in range(1, l):
        cnt = 0
        for h in range(4):
            x = 1.0 if h < 2 else -1.0
            xp = 1.0 if h % 2 == 0 else -1.0
            px = p_plus[i - 1] if x > 0 else 1.0 - p_plus[i - 1]
            pxi = p_plus_int[i - 1] if xp > 0 else 1.0 - p_plus_int[i - 1]
            if px <= 0.0 or pxi <= 0.0:
                continue
            lp = np.log(px) + np.log(pxi)
            for j in range(cur_cnt):
                ll = _step_component(
                    cur_means[j], cur_covs[j], x, xp, y[i - 1],
                    alpha, sigma_n2, q_diag, trace_q, buf_means[cnt], buf_covs[cnt],
                )
                buf_logw[cnt] = cur_logw[j] + lp + ll
                cnt += 1

        if collapse:
            # Moment-matched single Gaussian.
            mx = buf_logw[0]
            for j in range(1, cnt):
                if buf_logw[j] > mx:
                    mx = buf_logw[j]
            tot = 0.0
            for j in range(cnt):
                tot += np.exp(buf_logw[j] - mx)
            for a in range(r):
                acc = 0.0 + 0.0j
                for j in range(cnt):
                    acc += np.exp(buf_logw[j] - mx) / tot * buf_means[j, a]
                cur_means[0, a] = acc
            for a in range(r):
                for b in range(r):
                    acc = 0.0 + 0.0j
                    for j in range(cnt):
                        wj = np.exp(buf_logw[j] - mx) / tot
                        da = buf_means[j, a] - cur_means[0, a]
                        db = buf_means[j, b] - cur_means[0, b]
                        acc += wj * (buf_covs[j, a, b] + da * db.conjugate())
                    cur_covs[0, a, b] = acc
            _psd_repair(cur_covs[0], r, trace_q)
            cur_logw[0] = 0.0
            cur_cnt = 1
        else:
            keep = cap if cap < cnt else cnt
            for j in range(cnt):
                used[j] = False
            for _s in range(keep):
                best = -1
                bw = -np.inf
                for j in range(cnt):
                    if not used[j] and buf_logw[j] > bw:
                        bw = buf_logw[j]
                        best = j
                used[best] = True
            pos = 0
            for j in range(cnt):  # survivors keep their original order
                if used[j]:
                    cur_logw[pos] = buf_logw[j]
                    cur_means[pos] = buf_means[j]
                    cur_covs[pos] = buf_covs[j]
                    pos += 1
            cur_cnt = keep
            mx = cur_logw[0]
            for j in range(1, cur_cnt):
                if cur_logw[j] > mx:
                    mx = cur_logw[j]
            tot = 0.0
            for j in range(cur_cnt):
                tot += np.exp(cur_logw[j] - mx)
            shift = mx + np.log(tot)
            for j in range(cur_cnt):
                cur_logw[j] -= shift

        out_counts[i] = cur_cnt
        for j in range(cur_cnt):
            out_logw[i, j] = cur_logw[j]
            out_means[i, j] = cur_means[j]
            out_covs[i, j] = cur_covs[j]

    return out_counts, out_logw, out_means, out_covs
