# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled iteration kernels.  Same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_blas cimport dgemv
from scipy.linalg.cython_lapack cimport dsyevd

cnp.import_array()


cdef struct Workspace:
    double *a
    double *lam
    double *work
    int *iwork
    int lwork
    int liwork


cdef int ws_init(Workspace *ws, int m) nogil:
    cdef char jobz = b'V'
    cdef char uplo = b'U'
    cdef int info = 0
    cdef double wq
    cdef int iwq
    cdef int lwq = -1
    cdef int liwq = -1
    ws.a = <double *> malloc(m * m * sizeof(double))
    ws.lam = <double *> malloc(m * sizeof(double))
    dsyevd(&jobz, &uplo, &m, ws.a, &m, ws.lam, &wq, &lwq, &iwq, &liwq, &info)
    ws.lwork = <int> wq + 1
    ws.liwork = iwq + 1
    ws.work = <double *> malloc(ws.lwork * sizeof(double))
    ws.iwork = <int *> malloc(ws.liwork * sizeof(int))
    return info


cdef void ws_free(Workspace *ws) nogil:
    free(ws.a)
    free(ws.lam)
    free(ws.work)
    free(ws.iwork)


cdef int eig_members(Workspace *ws, const double *Q, const double *c, int k, int m) nogil:
    """Eigen-decompose the member with coefficients c; result left in ws."""
    cdef char trans = b'N'
    cdef char jobz = b'V'
    cdef char uplo = b'U'
    cdef int n = m * m
    cdef int one = 1
    cdef int info = 0
    cdef double alpha = 1.0
    cdef double beta = 0.0
    dgemv(&trans, &n, &k, &alpha, <double *> Q, &n, <double *> c, &one, &beta, ws.a, &one)
    dsyevd(&jobz, &uplo, &m, ws.a, &m, ws.lam, ws.work, &ws.lwork, ws.iwork, &ws.liwork, &info)
    return info


cdef void project_outer(const double *Q, const double *u, double *outer, double *w, int k, int m) nogil:
    """w = Q vec(u u^T)."""
    cdef char trans = b'T'
    cdef int n = m * m
    cdef int one = 1
    cdef double alpha = 1.0
    cdef double beta = 0.0
    cdef int i, j
    for i in range(m):
        for j in range(m):
            outer[i * m + j] = u[i] * u[j]
    dgemv(&trans, &n, &k, &alpha, <double *> Q, &n, outer, &one, &beta, w, &one)


def rank1_iterate(Q, c0, double gamma, int steps, double tol):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] Qa = np.ascontiguousarray(Q, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] c = np.array(c0, dtype=np.float64, copy=True)
    cdef int k = Qa.shape[0]
    cdef int m = <int> round(sqrt(Qa.shape[1]))
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] history = np.empty(steps + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] w = np.empty(k)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] outer = np.empty(m * m)
    cdef double *qp = &Qa[0, 0]
    cdef double *cp = &c[0]
    cdef double *hp = &history[0]
    cdef double *wp = &w[0]
    cdef double *op = &outer[0]
    cdef double g2 = gamma * gamma - 1.0
    cdef double lstar, cc, scale
    cdef int ell, i, j, jbest
    cdef int taken = steps
    cdef int info = 0
    cdef Workspace ws
    with nogil:
        info = ws_init(&ws, m)
        for ell in range(steps + 1):
            if info != 0:
                break
            info = eig_members(&ws, qp, cp, k, m)
            jbest = 0
            for j in range(1, m):
                if fabs(ws.lam[j]) > fabs(ws.lam[jbest]):
                    jbest = j
            lstar = ws.lam[jbest]
            hp[ell] = fabs(lstar)
            if ell == steps:
                break
            if tol > 0 and fabs(1.0 - hp[ell]) < tol:
                taken = ell
                break
            project_outer(qp, &ws.a[jbest * m], op, wp, k, m)
            cc = 0.0
            for i in range(k):
                cc = cc + cp[i] * cp[i]
            scale = 1.0 / sqrt(cc + g2 * lstar * lstar)
            for i in range(k):
                cp[i] = (cp[i] + (gamma - 1.0) * lstar * wp[i]) * scale
        ws_free(&ws)
    if info != 0:
        raise np.linalg.LinAlgError(f"dsyevd failed with info={info}")
    return c, history[: taken + 1].copy(), taken


def pd_ascent(Q, c0, int iters):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] Qa = np.ascontiguousarray(Q, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] c = np.array(c0, dtype=np.float64, copy=True)
    cdef int k = Qa.shape[0]
    cdef int m = <int> round(sqrt(Qa.shape[1]))
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] best_c = np.empty(k)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] w = np.empty(k)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] outer = np.empty(m * m)
    cdef double *qp = &Qa[0, 0]
    cdef double *cp = &c[0]
    cdef double *bp = &best_c[0]
    cdef double *wp = &w[0]
    cdef double *op = &outer[0]
    cdef double best = -INFINITY
    cdef double nrm, step
    cdef int it, i
    cdef int info = 0
    cdef Workspace ws
    with nogil:
        nrm = 0.0
        for i in range(k):
            nrm = nrm + cp[i] * cp[i]
        nrm = sqrt(nrm)
        for i in range(k):
            cp[i] = cp[i] / nrm
        info = ws_init(&ws, m)
        for it in range(iters + 1):
            if info != 0:
                break
            info = eig_members(&ws, qp, cp, k, m)
            if ws.lam[0] > best:
                best = ws.lam[0]
                for i in range(k):
                    bp[i] = cp[i]
            if it == iters:
                break
            project_outer(qp, ws.a, op, wp, k, m)
            step = 1.0 / sqrt(it + 1.0)
            nrm = 0.0
            for i in range(k):
                cp[i] = cp[i] + step * wp[i]
                nrm = nrm + cp[i] * cp[i]
            nrm = sqrt(nrm)
            for i in range(k):
                cp[i] = cp[i] / nrm
        ws_free(&ws)
    if info != 0:
        raise np.linalg.LinAlgError(f"dsyevd failed with info={info}")
    return best_c, float(best)
