"""Pure-Python reference versions of the per-packet kernels.

These are the fallback used when the compiled ``_fastpath`` extension is not
available, and the baseline the benchmark compares against.
"""

SCAN_OK = 0
SCAN_BAD_VERSION = 1
SCAN_BAD_LENGTH = 2

OFP_VERSION = 0x04


def scan_frames(buf, version=OFP_VERSION):
    """Walk message headers in ``buf``.

    Returns ``(ends, consumed, status)`` where ``ends`` are the end offsets of
    every complete message, ``consumed`` the offset of the first byte not
    belonging to a complete message and ``status`` one of the SCAN_* codes.
    On error, ``consumed`` points at the offending header.
    """
    ends = []
    pos = 0
    n = len(buf)
    while pos < n:
        if buf[pos] != version:
            return ends, pos, SCAN_BAD_VERSION
        if n - pos < 4:
            break
        length = (buf[pos + 2] << 8) | buf[pos + 3]
        if length < 8 or length & 7:
            return ends, pos, SCAN_BAD_LENGTH
        if n - pos < length:
            break
        pos += length
        ends.append(pos)
    return ends, pos, SCAN_OK


def first_match(in_ports, dsts, in_port, dst):
    """Index of the first entry matching ``(in_port, dst)``, or -1.

    Entries are pre-sorted by the caller (priority descending, insertion
    order ascending). ``-1`` in ``in_ports`` and ``b""`` in ``dsts`` are
    wildcards.
    """
    for i in range(len(in_ports)):
        p = in_ports[i]
        if p != -1 and p != in_port:
            continue
        d = dsts[i]
        if d and d != dst:
            continue
        return i
    return -1


def bin_events(times, weights, origin, width, n):
    """Histogram ``times`` into ``n`` bins of ``width`` starting at ``origin``.

    Returns ``(counts, sums)`` where ``sums`` accumulates ``weights``. Times
    outside ``[origin, origin + n*width)`` are ignored.
    """
    counts = [0] * n
    sums = [0] * n
    for i in range(len(times)):
        off = times[i] - origin
        if off < 0:
            continue
        k = off // width
        if k >= n:
            continue
        counts[k] += 1
        sums[k] += weights[i]
    return counts, sums
