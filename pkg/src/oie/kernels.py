"""Hot numeric kernels.

Every kernel exists twice: a vectorised numpy implementation (``*_numpy``)
and an explicit-loop implementation compiled with numba (``*_numba``). The
unsuffixed names dispatch to one of them according to
:data:`oie._accel.USE_NUMBA`. Both paths must agree to round-off; the test
suite checks this directly.
"""

import numpy as np

from oie._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# LSTM forward / backward through time
#
# Gate layout along the 4H axis: input, forget, output, candidate.
# Hs and Cs carry a leading zero state: Hs[:, 0] = 0, Hs[:, t + 1] = h_t.
# ---------------------------------------------------------------------------


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_forward_numpy(X, Wx, Wh, b):
    B, T, D = X.shape
    H = Wh.shape[0]
    Hs = np.zeros((B, T + 1, H))
    Cs = np.zeros((B, T + 1, H))
    G = np.empty((B, T, 4 * H))
    XW = (X.reshape(B * T, D) @ Wx).reshape(B, T, 4 * H) + b
    for t in range(T):
        z = XW[:, t] + Hs[:, t] @ Wh
        G[:, t, : 3 * H] = _sigmoid(z[:, : 3 * H])
        G[:, t, 3 * H :] = np.tanh(z[:, 3 * H :])
        i = G[:, t, :H]
        f = G[:, t, H : 2 * H]
        o = G[:, t, 2 * H : 3 * H]
        g = G[:, t, 3 * H :]
        Cs[:, t + 1] = f * Cs[:, t] + i * g
        Hs[:, t + 1] = o * np.tanh(Cs[:, t + 1])
    return Hs, Cs, G


def lstm_backward_numpy(X, Wx, Wh, Hs, Cs, G, dh_last):
    B, T, D = X.shape
    H = Wh.shape[0]
    dZ = np.empty((B, T, 4 * H))
    dh = dh_last.copy()
    dc = np.zeros((B, H))
    WhT = Wh.T
    for t in range(T - 1, -1, -1):
        i = G[:, t, :H]
        f = G[:, t, H : 2 * H]
        o = G[:, t, 2 * H : 3 * H]
        g = G[:, t, 3 * H :]
        tc = np.tanh(Cs[:, t + 1])
        dc = dc + dh * o * (1.0 - tc * tc)
        dZ[:, t, :H] = dc * g * i * (1.0 - i)
        dZ[:, t, H : 2 * H] = dc * Cs[:, t] * f * (1.0 - f)
        dZ[:, t, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
        dZ[:, t, 3 * H :] = dc * i * (1.0 - g * g)
        dh = dZ[:, t] @ WhT
        dc = dc * f
    dZ2 = dZ.reshape(B * T, 4 * H)
    dWx = X.reshape(B * T, D).T @ dZ2
    dWh = np.ascontiguousarray(Hs[:, :T]).reshape(B * T, H).T @ dZ2
    db = dZ2.sum(axis=0)
    dX = (dZ2 @ Wx.T).reshape(B, T, D)
    return dX, dWx, dWh, db


def _lstm_forward_loops(X, Wx, Wh, b):
    # exp-based gates vectorise under fastmath; libm tanh does not
    B, T, D = X.shape
    H = Wh.shape[0]
    Hs = np.zeros((B, T + 1, H))
    Cs = np.zeros((B, T + 1, H))
    G = np.empty((B, T, 4 * H))
    XW = np.dot(X.reshape(B * T, D), Wx)
    hprev = np.zeros((B, H))
    for t in range(T):
        HW = np.dot(hprev, Wh)
        for n in range(B):
            row = n * T + t
            for j in range(4 * H):
                G[n, t, j] = XW[row, j] + HW[n, j] + b[j]
            for j in range(3 * H):
                G[n, t, j] = 1.0 / (1.0 + np.exp(-G[n, t, j]))
            for j in range(3 * H, 4 * H):
                G[n, t, j] = 2.0 / (1.0 + np.exp(-2.0 * G[n, t, j])) - 1.0
            for k in range(H):
                c = G[n, t, H + k] * Cs[n, t, k] + G[n, t, k] * G[n, t, 3 * H + k]
                Cs[n, t + 1, k] = c
                h = G[n, t, 2 * H + k] * (2.0 / (1.0 + np.exp(-2.0 * c)) - 1.0)
                Hs[n, t + 1, k] = h
                hprev[n, k] = h
    return Hs, Cs, G


def _lstm_backward_loops(X, Wx, Wh, Hs, Cs, G, dh_last):
    B, T, D = X.shape
    H = Wh.shape[0]
    dZ = np.empty((B * T, 4 * H))
    dh = dh_last.copy()
    dc = np.zeros((B, H))
    WhT = np.ascontiguousarray(Wh.T)
    dzt = np.empty((B, 4 * H))
    for t in range(T - 1, -1, -1):
        for n in range(B):
            row = n * T + t
            for k in range(H):
                i = G[n, t, k]
                f = G[n, t, H + k]
                o = G[n, t, 2 * H + k]
                g = G[n, t, 3 * H + k]
                tc = 2.0 / (1.0 + np.exp(-2.0 * Cs[n, t + 1, k])) - 1.0
                dck = dc[n, k] + dh[n, k] * o * (1.0 - tc * tc)
                dzt[n, k] = dck * g * i * (1.0 - i)
                dzt[n, H + k] = dck * Cs[n, t, k] * f * (1.0 - f)
                dzt[n, 2 * H + k] = dh[n, k] * tc * o * (1.0 - o)
                dzt[n, 3 * H + k] = dck * i * (1.0 - g * g)
                dc[n, k] = dck * f
            for j in range(4 * H):
                dZ[row, j] = dzt[n, j]
        dh = np.dot(dzt, WhT)
    Hp = np.empty((B * T, H))
    for n in range(B):
        for t in range(T):
            for k in range(H):
                Hp[n * T + t, k] = Hs[n, t, k]
    dWx = np.dot(X.reshape(B * T, D).T, dZ)
    dWh = np.dot(Hp.T, dZ)
    db = np.zeros(4 * H)
    for r in range(B * T):
        for j in range(4 * H):
            db[j] += dZ[r, j]
    dX = np.dot(dZ, np.ascontiguousarray(Wx.T)).reshape(B, T, D)
    return dX, dWx, dWh, db


# ---------------------------------------------------------------------------
# Signed curvature on three-point stencils
# ---------------------------------------------------------------------------

_COLLINEAR_AREA = 1e-12


def curvature_stencils_numpy(P0, P1, P2):
    """Signed curvature at the middle point of each (P0, P1, P2) triple.

    Returns ``(kappa, status)``; status is 0 ok, 1 when the stencil cannot
    be parametrised as y(x) in the chord frame.
    """
    chord = P2 - P0
    length = np.hypot(chord[:, 0], chord[:, 1])
    d1 = P1 - P0
    cross = d1[:, 0] * chord[:, 1] - d1[:, 1] * chord[:, 0]
    area = 0.5 * np.abs(cross)
    out = np.zeros(len(P0))
    status = np.zeros(len(P0), dtype=np.int64)
    bad = length <= 0.0
    status[bad] = 1
    live = (area >= _COLLINEAR_AREA) & ~bad
    if not np.any(live):
        return out, status
    u = chord[live] / length[live, None]
    v = np.stack([-u[:, 1], u[:, 0]], axis=1)
    q1 = d1[live]
    x1 = q1[:, 0] * u[:, 0] + q1[:, 1] * u[:, 1]
    y1 = q1[:, 0] * v[:, 0] + q1[:, 1] * v[:, 1]
    x2 = length[live]
    h0 = x1
    h1 = x2 - x1
    degenerate = (h0 <= 0.0) | (h1 <= 0.0)
    h0s = np.where(degenerate, 1.0, h0)
    h1s = np.where(degenerate, 1.0, h1)
    # y0 = y2 = 0 in the chord frame
    yp = (y1 * h1s / h0s - y1 * h0s / h1s) / x2
    ypp = 2.0 * (-y1 / h1s - y1 / h0s) / x2
    kappa = np.abs(ypp) / (1.0 + yp * yp) ** 1.5
    turn = (P1[live] - P0[live])
    nxt = (P2[live] - P1[live])
    z = turn[:, 0] * nxt[:, 1] - turn[:, 1] * nxt[:, 0]
    sign = np.where(z > 0.0, -1.0, 1.0)
    vals = np.where(degenerate, 0.0, sign * kappa)
    out[live] = vals
    st = status[live]
    st[degenerate] = 1
    status[live] = st
    return out, status


def _curvature_stencils_loops(P0, P1, P2):
    n = P0.shape[0]
    out = np.zeros(n)
    status = np.zeros(n, dtype=np.int64)
    for k in range(n):
        cx = P2[k, 0] - P0[k, 0]
        cy = P2[k, 1] - P0[k, 1]
        length = np.sqrt(cx * cx + cy * cy)
        if length <= 0.0:
            status[k] = 1
            continue
        dx = P1[k, 0] - P0[k, 0]
        dy = P1[k, 1] - P0[k, 1]
        cross = dx * cy - dy * cx
        if 0.5 * abs(cross) < _COLLINEAR_AREA:
            continue
        ux = cx / length
        uy = cy / length
        x1 = dx * ux + dy * uy
        y1 = -dx * uy + dy * ux
        h0 = x1
        h1 = length - x1
        if h0 <= 0.0 or h1 <= 0.0:
            status[k] = 1
            continue
        yp = (y1 * h1 / h0 - y1 * h0 / h1) / length
        ypp = 2.0 * (-y1 / h1 - y1 / h0) / length
        kappa = abs(ypp) / (1.0 + yp * yp) ** 1.5
        ex = P2[k, 0] - P1[k, 0]
        ey = P2[k, 1] - P1[k, 1]
        z = dx * ey - dy * ex
        out[k] = -kappa if z > 0.0 else kappa
    return out, status


# ---------------------------------------------------------------------------
# Magnitude-weighted orientation histogram
# ---------------------------------------------------------------------------


def orientation_histogram_numpy(dx, dy, bins):
    hist = np.zeros(bins)
    if len(dx) == 0:
        return hist
    mag = np.hypot(dx, dy)
    ang = np.mod(np.arctan2(dy, dx), 2.0 * np.pi)
    idx = np.floor(ang / (2.0 * np.pi / bins)).astype(np.int64)
    idx = np.minimum(idx, bins - 1)
    np.add.at(hist, idx, mag)
    total = hist.sum()
    if total > 0.0:
        hist /= total
    return hist


def _orientation_histogram_loops(dx, dy, bins):
    hist = np.zeros(bins)
    width = 2.0 * np.pi / bins
    total = 0.0
    for k in range(dx.shape[0]):
        m = np.sqrt(dx[k] * dx[k] + dy[k] * dy[k])
        if m == 0.0:
            continue
        a = np.arctan2(dy[k], dx[k])
        if a < 0.0:
            a += 2.0 * np.pi
        j = int(np.floor(a / width))
        if j >= bins:
            j = bins - 1
        hist[j] += m
        total += m
    if total > 0.0:
        for j in range(bins):
            hist[j] /= total
    return hist


# ---------------------------------------------------------------------------
# Pairwise IoU of (left, top, width, height) boxes
# ---------------------------------------------------------------------------


def iou_matrix_numpy(A, B):
    if len(A) == 0 or len(B) == 0:
        return np.zeros((len(A), len(B)))
    ax0, ay0 = A[:, 0:1], A[:, 1:2]
    ax1, ay1 = ax0 + A[:, 2:3], ay0 + A[:, 3:4]
    bx0, by0 = B[:, 0], B[:, 1]
    bx1, by1 = bx0 + B[:, 2], by0 + B[:, 3]
    iw = np.clip(np.minimum(ax1, bx1) - np.maximum(ax0, bx0), 0.0, None)
    ih = np.clip(np.minimum(ay1, by1) - np.maximum(ay0, by0), 0.0, None)
    inter = iw * ih
    union = A[:, 2:3] * A[:, 3:4] + B[:, 2] * B[:, 3] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0.0, inter / union, 0.0)
    return out


def _iou_matrix_loops(A, B):
    n = A.shape[0]
    m = B.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            iw = min(A[i, 0] + A[i, 2], B[j, 0] + B[j, 2]) - max(A[i, 0], B[j, 0])
            ih = min(A[i, 1] + A[i, 3], B[j, 1] + B[j, 3]) - max(A[i, 1], B[j, 1])
            if iw <= 0.0 or ih <= 0.0:
                continue
            inter = iw * ih
            union = A[i, 2] * A[i, 3] + B[j, 2] * B[j, 3] - inter
            if union > 0.0:
                out[i, j] = inter / union
    return out


# ---------------------------------------------------------------------------
# Non-interpolated AP over an already ranked label vector
# ---------------------------------------------------------------------------


def ranked_precision_sum_numpy(labels):
    labels = np.asarray(labels, dtype=np.float64)
    hits = np.cumsum(labels)
    ranks = np.arange(1, len(labels) + 1, dtype=np.float64)
    return float(np.sum((hits / ranks) * labels))


def _ranked_precision_sum_loops(labels):
    hits = 0.0
    acc = 0.0
    for k in range(labels.shape[0]):
        if labels[k] > 0.0:
            hits += 1.0
            acc += hits / (k + 1.0)
    return acc


lstm_forward_numba = njit(_lstm_forward_loops, fastmath=True)
lstm_backward_numba = njit(_lstm_backward_loops, fastmath=True)
curvature_stencils_numba = njit(_curvature_stencils_loops)
orientation_histogram_numba = njit(_orientation_histogram_loops)
iou_matrix_numba = njit(_iou_matrix_loops)
ranked_precision_sum_numba = njit(_ranked_precision_sum_loops)

if USE_NUMBA:
    lstm_forward = lstm_forward_numba
    lstm_backward = lstm_backward_numba
    curvature_stencils = curvature_stencils_numba
    orientation_histogram = orientation_histogram_numba
    iou_matrix = iou_matrix_numba
    ranked_precision_sum = ranked_precision_sum_numba
else:
    lstm_forward = lstm_forward_numpy
    lstm_backward = lstm_backward_numpy
    curvature_stencils = curvature_stencils_numpy
    orientation_histogram = orientation_histogram_numpy
    iou_matrix = iou_matrix_numpy
    ranked_precision_sum = ranked_precision_sum_numpy


def backend():
    """Name of the active kernel backend."""
    return "numba" if USE_NUMBA else "numpy"
