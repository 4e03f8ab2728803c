"""Pure numpy implementation of the solver kernels.

Used when the compiled extension is unavailable, and as the reference the
compiled kernels are benchmarked and tested against.
"""
import numpy as np

BACKEND = "numpy"


def stencil_matvec(diag, cx, cy, cz, x, out=None):
    """``out = A @ x`` for the symmetric 7-point operator.

    All arrays have the grid shape.  ``cx[i, j, k]`` couples cell
    ``(i, j, k)`` with ``(i + 1, j, k)`` and enters the matrix with a minus
    sign; its last slab along x is ignored (likewise ``cy``, ``cz``).
    """
    if out is None:
        out = np.empty_like(x)
    np.multiply(diag, x, out=out)
    out[:-1] -= cx[:-1] * x[1:]
    out[1:] -= cx[:-1] * x[:-1]
    out[:, :-1] -= cy[:, :-1] * x[:, 1:]
    out[:, 1:] -= cy[:, :-1] * x[:, :-1]
    out[:, :, :-1] -= cz[:, :, :-1] * x[:, :, 1:]
    out[:, :, 1:] -= cz[:, :, :-1] * x[:, :, :-1]
    return out


def pcg(diag, cx, cy, cz, b, x, tol, maxiter):
    """Jacobi-preconditioned conjugate gradients, updating ``x`` in place.

    Returns ``(iterations, history)`` where ``history[k]`` is the relative
    recursive residual after ``k`` iterations.  Stops once it drops to
    ``tol`` or after ``maxiter`` iterations.
    """
    bnorm = float(np.sqrt(np.vdot(b, b)))
    if bnorm == 0.0:
        x[...] = 0.0
        return 0, np.zeros(1)
    inv_d = 1.0 / diag
    r = b - stencil_matvec(diag, cx, cy, cz, x)
    z = r * inv_d
    p = z.copy()
    q = np.empty_like(x)
    rz = float(np.vdot(r, z))
    history = [float(np.sqrt(np.vdot(r, r))) / bnorm]
    it = 0
    while history[-1] > tol and it < maxiter:
        stencil_matvec(diag, cx, cy, cz, p, out=q)
        pq = float(np.vdot(p, q))
        if pq <= 0.0 or rz == 0.0:
            break
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        np.multiply(r, inv_d, out=z)
        rz_new = float(np.vdot(r, z))
        history.append(float(np.sqrt(np.vdot(r, r))) / bnorm)
        it += 1
        p *= rz_new / rz
        p += z
        rz = rz_new
    return it, np.asarray(history)
