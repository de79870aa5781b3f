"""Compiled selective-scan recurrence and its reverse-mode gradient.

Layouts (all C-contiguous, one dtype throughout):

    u, delta, y : [batch, K, d, L]
    A           : [K, d, n]
    B, C        : [batch, K, L, n]
    D           : [K, d]
    decay       : [batch, K, dc, L, n], exp(delta * A) for channels c0 .. c0+dc

Each call handles the channel slice covered by ``decay``; the exponentials are
computed by the caller in vectorized form, which dominates the cost otherwise.
The kernels are serial so results are bitwise independent of thread count.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def scan_forward(u, delta, decay, c0, B, C, D, y):
    nb, nk, nc, L, n = decay.shape
    h = np.zeros(n, dtype=u.dtype)
    for b in range(nb):
        for k in range(nk):
            for j in range(nc):
                c = c0 + j
                h[:] = 0.0
                for t in range(L):
                    x = u[b, k, c, t]
                    dtx = delta[b, k, c, t] * x
                    acc = 0.0
                    for s in range(n):
                        h[s] = decay[b, k, j, t, s] * h[s] + dtx * B[b, k, t, s]
                        acc += C[b, k, t, s] * h[s]
                    y[b, k, c, t] = acc + D[k, c] * x


@njit(cache=True)
def scan_backward(u, delta, decay, c0, A, B, C, D, dy, du, ddelta, dA, dB, dC, dD):
    # Gradient buffers dA, dB, dC, dD must be zeroed by the caller; du and
    # ddelta are overwritten on the channel slice.
    nb, nk, nc, L, n = decay.shape
    hs = np.empty((L + 1, n), dtype=u.dtype)
    g = np.empty(n, dtype=u.dtype)
    for b in range(nb):
        for k in range(nk):
            for j in range(nc):
                c = c0 + j
                # Recompute the state trajectory for this channel.
                hs[0, :] = 0.0
                for t in range(L):
                    dtx = delta[b, k, c, t] * u[b, k, c, t]
                    for s in range(n):
                        hs[t + 1, s] = decay[b, k, j, t, s] * hs[t, s] + dtx * B[b, k, t, s]
                g[:] = 0.0
                dskip = 0.0
                for t in range(L - 1, -1, -1):
                    gy = dy[b, k, c, t]
                    x = u[b, k, c, t]
                    dt = delta[b, k, c, t]
                    dskip += gy * x
                    dut = gy * D[k, c]
                    ddt = 0.0
                    for s in range(n):
                        gs = g[s] + gy * C[b, k, t, s]
                        dC[b, k, t, s] += gy * hs[t + 1, s]
                        a = decay[b, k, j, t, s]
                        gdecay = gs * hs[t, s] * a
                        ddt += gdecay * A[k, c, s] + gs * x * B[b, k, t, s]
                        dA[k, c, s] += gdecay * dt
                        dut += gs * dt * B[b, k, t, s]
                        dB[b, k, t, s] += gs * dt * x
                        g[s] = gs * a
                    du[b, k, c, t] = dut
                    ddelta[b, k, c, t] = ddt
                dD[k, c] += dskip
