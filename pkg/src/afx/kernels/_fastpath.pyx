# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled per-packet kernels. Behaviour mirrors ``_purepy`` exactly."""

cdef enum:
    SCAN_OK = 0
    SCAN_BAD_VERSION = 1
    SCAN_BAD_LENGTH = 2


def scan_frames(const unsigned char[:] buf, int version=4):
    cdef Py_ssize_t pos = 0
    cdef Py_ssize_t n = buf.shape[0]
    cdef Py_ssize_t length
    cdef list ends = []
    while pos < n:
        if buf[pos] != version:
            return ends, pos, SCAN_BAD_VERSION
        if n - pos < 4:
            break
        length = (buf[pos + 2] << 8) | buf[pos + 3]
        if length < 8 or (length & 7):
            return ends, pos, SCAN_BAD_LENGTH
        if n - pos < length:
            break
        pos += length
        ends.append(pos)
    return ends, pos, SCAN_OK


def first_match(list in_ports, list dsts, long in_port, bytes dst):
    cdef Py_ssize_t i
    cdef Py_ssize_t n = len(in_ports)
    cdef long p
    cdef bytes d
    for i in range(n):
        p = in_ports[i]
        if p != -1 and p != in_port:
            continue
        d = dsts[i]
        if len(d) and d != dst:
            continue
        return i
    return -1


def bin_events(times, weights, long long origin, long long width, Py_ssize_t n):
    cdef list counts = [0] * n
    cdef list sums = [0] * n
    cdef Py_ssize_t i, m = len(times)
    cdef long long off, k
    for i in range(m):
        off = times[i] - origin
        if off < 0:
            continue
        k = off // width
        if k >= n:
            continue
        counts[k] += 1
        sums[k] += weights[i]
    return counts, sums
