# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the angle-grid estimators."""

cdef extern from "complex.h":
    double creal(double complex)
    double cimag(double complex)


def pair_search(double complex[:, ::1] Q, double complex[::1] c, Py_ssize_t min_sep=1):
    """Best pair (i, j), j - i >= min_sep, of the two-column concentrated LS score.

    Returns ``(i, j, score)`` where ``score = c_S^H Q_S^{-1} c_S``.
    """
    cdef Py_ssize_t n = Q.shape[0]
    cdef Py_ssize_t i, j, bi = -1, bj = -1
    cdef double best = -1.0, qii, qjj, det, num, s, ci2, cj2
    cdef double complex qij, ci, cj, x
    for i in range(n):
        qii = creal(Q[i, i])
        ci = c[i]
        ci2 = creal(ci) * creal(ci) + cimag(ci) * cimag(ci)
        for j in range(i + min_sep, n):
            qjj = creal(Q[j, j])
            qij = Q[i, j]
            det = qii * qjj - (creal(qij) * creal(qij) + cimag(qij) * cimag(qij))
            if det <= 1e-12 * qii * qjj:
                continue
            cj = c[j]
            cj2 = creal(cj) * creal(cj) + cimag(cj) * cimag(cj)
            # Re(conj(ci) * qij * cj)
            x = qij * cj
            num = qjj * ci2 + qii * cj2 - 2.0 * (creal(ci) * creal(x) + cimag(ci) * cimag(x))
            s = num / det
            if s > best:
                best = s
                bi = i
                bj = j
    return bi, bj, best
