"""Compiled scalar kernels shared by the public modules.

Everything in here works on plain floats and integer codes so that numba can
compile it once and the chain loops can call it without Python overhead. The
public modules (``model``, ``proposal``, ``accept``, ``rng``, ``chain``) wrap
these with enums and dataclasses.
"""

import math

import numpy as np
from numba import njit

# potential codes
POT_QUARTIC = 0
POT_COSINE = 1
POT_ZERO = 2
POT_HARMONIC = 3

# space codes
SPACE_TORUS = 0
SPACE_LINE = 1

# diffusion codes
DIFF_UNIT = 0
DIFF_COSSQ = 1

# proposal codes
PROP_MALA = 0
PROP_MODIFIED = 1
PROP_MIDPOINT = 2
PROP_HMC = 3
PROP_MALA_MULT = 4

# acceptance codes
RULE_MH = 0
RULE_BARKER = 1

# proposal status codes
STATUS_OK = 0
STATUS_MIDPOINT_NO_CONVERGENCE = 1
STATUS_MODIFIED_DEGENERATE = 2

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def potential(pk, q):
    """Return (V, V', V'', V''') at q."""
    if pk == POT_QUARTIC:
        q2 = q * q
        return q2 * q2, 4.0 * q2 * q, 12.0 * q2, 24.0 * q
    elif pk == POT_COSINE:
        c = math.cos(TWO_PI * q)
        s = math.sin(TWO_PI * q)
        return c, -TWO_PI * s, -TWO_PI * TWO_PI * c, TWO_PI * TWO_PI * TWO_PI * s
    elif pk == POT_HARMONIC:
        return 0.5 * q * q, q, 1.0, 0.0
    return 0.0, 0.0, 0.0, 0.0


@njit(cache=True)
def diffusion(dk, q):
    """Return (M, M') at q."""
    if dk == DIFF_COSSQ:
        s = 0.5 * (1.5 + math.cos(TWO_PI * q))
        ds = -math.pi * math.sin(TWO_PI * q)
        return s * s, 2.0 * s * ds
    return 1.0, 0.0


@njit(cache=True)
def wrap(space, q):
    if space == SPACE_TORUS:
        r = q - math.floor(q)
        # q slightly below an integer can round up to exactly 1.0
        if r >= 1.0:
            r = 0.0
        return r
    return q


@njit(cache=True)
def modified_coeffs(pk, beta, q):
    _, v1, v2, v3 = potential(pk, q)
    sigma = beta * v2 / 3.0
    f_corr = beta / 6.0 * (v3 - beta * v2 * v1)
    return sigma, f_corr


@njit(cache=True)
def total_drift(pk, dk, beta, q):
    v1 = potential(pk, q)[1]
    m, dm = diffusion(dk, q)
    return -beta * m * v1 + dm


@njit(cache=True)
def acceptance(rule, alpha):
    if rule == RULE_MH:
        if alpha <= 0.0:
            return 1.0
        return math.exp(-alpha)
    # Barker: e^{-a}/(1+e^{-a}) without overflow on either side
    if alpha >= 0.0:
        e = math.exp(-alpha)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(alpha))


@njit(cache=True)
def verlet(pk, q, p, h):
    q_half = q + 0.5 * h * p
    p_new = p - h * potential(pk, q_half)[1]
    return q_half + 0.5 * h * p_new, p_new


@njit(cache=True)
def _mala_alpha(pk, beta, q, qp, dt):
    vq, v1q, _, _ = potential(pk, q)
    vp, v1p, _, _ = potential(pk, qp)
    back = q - qp + beta * dt * v1p
    fwd = qp - q + beta * dt * v1q
    return beta * (vp - vq) + (back * back - fwd * fwd) / (4.0 * dt)


@njit(cache=True)
def propose(kind, pk, dk, beta, q, g, dt, tol, maxiter):
    """One proposal move.

    Returns (q_proposed, alpha, fixed_point_iters, status). ``q_proposed`` is
    not wrapped. ``alpha`` is the log ratio entering the acceptance rules.
    """
    sq = math.sqrt(2.0 * dt)
    if kind == PROP_MALA:
        v1 = potential(pk, q)[1]
        qp = q - beta * dt * v1 + sq * g
        return qp, _mala_alpha(pk, beta, q, qp, dt), 0, STATUS_OK

    if kind == PROP_MODIFIED:
        sig, fc = modified_coeffs(pk, beta, q)
        c = 1.0 + dt * sig
        if c <= 0.0:
            return q, 0.0, 0, STATUS_MODIFIED_DEGENERATE
        vq, v1q, _, _ = potential(pk, q)
        qp = q + dt * (-beta * v1q + dt * fc) + sq * g / math.sqrt(c)
        sigp, fcp = modified_coeffs(pk, beta, qp)
        cp = 1.0 + dt * sigp
        if cp <= 0.0:
            return q, 0.0, 0, STATUS_MODIFIED_DEGENERATE
        vp, v1p, _, _ = potential(pk, qp)
        back = q - qp + dt * (beta * v1p - dt * fcp)
        fwd = qp - q + dt * (beta * v1q - dt * fc)
        alpha = (beta * (vp - vq) - 0.5 * (math.log(cp) - math.log(c))
                 + (cp * back * back - c * fwd * fwd) / (4.0 * dt))
        return qp, alpha, 0, STATUS_OK

    if kind == PROP_MIDPOINT:
        x = q - beta * dt * potential(pk, q)[1] + sq * g
        it = 0
        while True:
            x_new = q - beta * dt * potential(pk, 0.5 * (q + x))[1] + sq * g
            it += 1
            if abs(x_new - x) < tol:
                x = x_new
                break
            if it >= maxiter:
                return x_new, 0.0, it, STATUS_MIDPOINT_NO_CONVERGENCE
            x = x_new
        vq = potential(pk, q)[0]
        vp = potential(pk, x)[0]
        v1m = potential(pk, 0.5 * (q + x))[1]
        return x, beta * (vp - vq - v1m * (x - q)), it, STATUS_OK

    if kind == PROP_HMC:
        p = g / math.sqrt(beta)
        h = math.sqrt(2.0 * beta * dt)
        qp, pp = verlet(pk, q, p, h)
        vq = potential(pk, q)[0]
        vp = potential(pk, qp)[0]
        return qp, beta * (vp - vq + 0.5 * (pp * pp - p * p)), 0, STATUS_OK

    # PROP_MALA_MULT
    m, _ = diffusion(dk, q)
    fq = total_drift(pk, dk, beta, q)
    qp = q + dt * fq + sq * math.sqrt(m) * g
    mp, _ = diffusion(dk, qp)
    fp = total_drift(pk, dk, beta, qp)
    vq = potential(pk, q)[0]
    vp = potential(pk, qp)[0]
    back = q - qp - dt * fp
    fwd = qp - q - dt * fq
    alpha = (beta * (vp - vq) + (back * back / mp - fwd * fwd / m) / (4.0 * dt)
             + 0.5 * (math.log(mp) - math.log(m)))
    return qp, alpha, 0, STATUS_OK


@njit(cache=True)
def propose_many(kind, pk, dk, beta, q, g, dt, tol, maxiter):
    """Elementwise ``propose`` over matching arrays q, g."""
    n = q.shape[0]
    qp = np.empty(n)
    alpha = np.empty(n)
    iters = np.empty(n, dtype=np.int64)
    status = np.empty(n, dtype=np.int64)
    for i in range(n):
        qp[i], alpha[i], iters[i], status[i] = propose(
            kind, pk, dk, beta, q[i], g[i], dt, tol, maxiter)
    return qp, alpha, iters, status


# ---------------------------------------------------------------------------
# Philox4x32-10 counter-based generator (Salmon et al., Random123)

_MASK32 = np.uint64(0xFFFFFFFF)
_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = np.uint64(0x9E3779B9)
_PHILOX_W1 = np.uint64(0xBB67AE85)
_SHIFT32 = np.uint64(32)
_SHIFT11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0
_TWO_M32 = 1.0 / 4294967296.0


@njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds; all arguments are uint64 holding 32-bit words."""
    for r in range(10):
        if r > 0:
            k0 = (k0 + _PHILOX_W0) & _MASK32
            k1 = (k1 + _PHILOX_W1) & _MASK32
        p0 = _PHILOX_M0 * c0
        p1 = _PHILOX_M1 * c2
        hi0 = p0 >> _SHIFT32
        lo0 = p0 & _MASK32
        hi1 = p1 >> _SHIFT32
        lo1 = p1 & _MASK32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
    return c0, c1, c2, c3


@njit(cache=True)
def draw_gu(seed, substream, stream_id, step):
    """Standard normal G and uniform U for one chain step.

    Counter words are (step, substream, stream_id low, stream_id high) and the
    key is the 64-bit seed. Words 0-1 give a 53-bit radius uniform and word 2
    the angle for Box-Muller; word 3 gives U in (0, 1).
    """
    s = np.uint64(seed)
    sid = np.uint64(stream_id)
    w0, w1, w2, w3 = philox4x32(
        np.uint64(step) & _MASK32, np.uint64(substream) & _MASK32,
        sid & _MASK32, sid >> _SHIFT32, s & _MASK32, s >> _SHIFT32)
    bits = ((w0 << _SHIFT32) | w1) >> _SHIFT11
    u1 = (float(bits) + 1.0) * _TWO_M53
    theta = TWO_PI * float(w2) * _TWO_M32
    g = math.sqrt(-2.0 * math.log(u1)) * math.cos(theta)
    u = (float(w3) + 0.5) * _TWO_M32
    return g, u


# ---------------------------------------------------------------------------
# chain loops


@njit(cache=True)
def run_chains(kind, rule, pk, dk, beta, space, dt, tol, maxiter,
               seed, substream, stream_ids, q0, n_steps, step_offset,
               rec_stride, rec_q, rec_qq):
    """Advance independent chains, one per entry of ``stream_ids``.

    Chain i consumes the Philox counters ``step_offset .. step_offset+n_steps-1``
    of stream ``stream_ids[i]``. If ``rec_stride > 0`` the wrapped position and
    unperiodized displacement are stored every ``rec_stride`` steps (column 0
    is the initial state).

    Returns (q, Q, n_accepted, sum_1mA, sum_2Am1, sum_abs_2Am1, status).
    """
    n = q0.shape[0]
    q_out = np.empty(n)
    qq_out = np.empty(n)
    n_acc = np.zeros(n, dtype=np.int64)
    s1 = np.zeros(n)
    s2 = np.zeros(n)
    s3 = np.zeros(n)
    status = STATUS_OK
    for i in range(n):
        q = wrap(space, q0[i])
        qq = q0[i]
        sid = stream_ids[i]
        if rec_stride > 0:
            rec_q[i, 0] = q
            rec_qq[i, 0] = qq
        for j in range(n_steps):
            g, u = draw_gu(seed, substream, sid, step_offset + j)
            qp, alpha, _, st = propose(kind, pk, dk, beta, q, g, dt, tol, maxiter)
            if st != STATUS_OK:
                status = st
                break
            a = acceptance(rule, alpha)
            s1[i] += 1.0 - a
            s2[i] += 2.0 * a - 1.0
            s3[i] += abs(2.0 * a - 1.0)
            if u <= a:
                qq += qp - q
                q = wrap(space, qp)
                n_acc[i] += 1
            if rec_stride > 0 and (j + 1) % rec_stride == 0:
                k = (j + 1) // rec_stride
                rec_q[i, k] = q
                rec_qq[i, k] = qq
        q_out[i] = q
        qq_out[i] = qq
        if status != STATUS_OK:
            break
    return q_out, qq_out, n_acc, s1, s2, s3, status


@njit(cache=True)
def run_observed(kind, rule, pk, dk, beta, space, dt, tol, maxiter,
                 seed, substream, stream_ids, q0, n_steps, obs_code):
    """Chains of ``n_steps`` recording an observable of q at every step.

    ``obs_code`` 0 records V'(q), 1 records the total drift F(q). The output
    has shape (n_chains, n_steps + 1).
    """
    n = q0.shape[0]
    out = np.empty((n, n_steps + 1))
    status = STATUS_OK
    for i in range(n):
        q = wrap(space, q0[i])
        sid = stream_ids[i]
        if obs_code == 0:
            out[i, 0] = potential(pk, q)[1]
        else:
            out[i, 0] = total_drift(pk, dk, beta, q)
        for j in range(n_steps):
            g, u = draw_gu(seed, substream, sid, j)
            qp, alpha, _, st = propose(kind, pk, dk, beta, q, g, dt, tol, maxiter)
            if st != STATUS_OK:
                status = st
                break
            if u <= acceptance(rule, alpha):
                q = wrap(space, qp)
            if obs_code == 0:
                out[i, j + 1] = potential(pk, q)[1]
            else:
                out[i, j + 1] = total_drift(pk, dk, beta, q)
        if status != STATUS_OK:
            break
    return out, status


@njit(cache=True)
def strong_error_paths(kind, rule, pk, dk, beta, space, dt_ref, tol, maxiter,
                       seed, stream_ids, q0, n_ref, ks, share_uniforms):
    """Per-realization maximal deviations d_k between coarse chains and the reference.

    The reference chain uses substream 0 for (G, U). The coarse chain for the
    j-th factor k uses block-averaged reference Gaussians and uniforms from
    substream j + 1, or the reference uniform of the last fine step in the
    block when ``share_uniforms`` is set (only meaningful for self-coupling
    checks). Deviations are measured on the unperiodized displacement.
    Returns an array of shape (n_realizations, len(ks)) and a status code.
    """
    n = q0.shape[0]
    nk = ks.shape[0]
    d = np.zeros((n, nk))
    g_ref = np.empty(n_ref)
    path = np.empty(n_ref + 1)
    status = STATUS_OK
    for i in range(n):
        sid = stream_ids[i]
        q = wrap(space, q0[i])
        qq = q0[i]
        path[0] = qq
        for j in range(n_ref):
            g, u = draw_gu(seed, 0, sid, j)
            g_ref[j] = g
            qp, alpha, _, st = propose(kind, pk, dk, beta, q, g, dt_ref, tol, maxiter)
            if st != STATUS_OK:
                return d, st
            if u <= acceptance(rule, alpha):
                qq += qp - q
                q = wrap(space, qp)
            path[j + 1] = qq
        for jk in range(nk):
            k = ks[jk]
            dt = k * dt_ref
            m_steps = n_ref // k
            inv_sqrt_k = 1.0 / math.sqrt(k)
            q = wrap(space, q0[i])
            qq = q0[i]
            worst = 0.0
            for m in range(m_steps):
                acc = 0.0
                for l in range(m * k, (m + 1) * k):
                    acc += g_ref[l]
                g = acc * inv_sqrt_k
                if share_uniforms:
                    _, u = draw_gu(seed, 0, sid, (m + 1) * k - 1)
                else:
                    _, u = draw_gu(seed, jk + 1, sid, m)
                qp, alpha, _, st = propose(kind, pk, dk, beta, q, g, dt, tol, maxiter)
                if st != STATUS_OK:
                    return d, st
                if u <= acceptance(rule, alpha):
                    qq += qp - q
                    q = wrap(space, qp)
                err = abs(qq - path[(m + 1) * k])
                if err > worst:
                    worst = err
            d[i, jk] = worst
    return d, status
