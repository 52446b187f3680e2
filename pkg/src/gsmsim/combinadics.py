"""Combinatorial number system: ranking/unranking of antenna index subsets.

An R-subset of {0,...,N-1}, written as a strictly increasing tuple
(n_1 < n_2 < ... < n_R), is identified with the integer
sum_i C(n_i, i).  This gives a bijection between [0, C(N,R)) and the
R-subsets, ordered colexicographically, so the bit-to-antenna map of a
GSM transmitter needs no lookup table even when C(N,R) is astronomically
large (e.g. C(64,32) ~ 1.8e18).
"""

import math

__all__ = ["binomial", "rank", "unrank", "bits_to_int", "int_to_bits"]


def binomial(n: int, k: int) -> int:
    """Exact C(n, k); 0 when k > n. Python ints cannot overflow."""
    if n < 0 or k < 0:
        raise ValueError(f"binomial arguments must be non-negative, got ({n}, {k})")
    if k > n:
        return 0
    return math.comb(n, k)


def rank(elements) -> int:
    """Map a strictly increasing index tuple to its integer rank.

    rank((n_1,...,n_R)) = sum_i C(n_i, i), the inverse of :func:`unrank`.
    """
    elements = tuple(elements)
    if not elements:
        raise ValueError("empty combination")
    prev = -1
    total = 0
    for i, n_i in enumerate(elements, start=1):
        if n_i <= prev:
            raise ValueError(f"combination must be strictly increasing, got {elements}")
        prev = n_i
        total += binomial(n_i, i)
    return total


def _largest_below(rem: int, i: int, upper) -> int:
    """Largest m (with m < upper if bounded) such that C(m, i) <= rem."""
    lo = i - 1  # C(i-1, i) = 0 <= rem always holds
    hi = lo + 1
    while (upper is None or hi < upper) and binomial(hi, i) <= rem:
        lo = hi
        hi *= 2
    if upper is not None:
        hi = min(hi, upper)
    # invariant: C(lo, i) <= rem and (hi == upper or C(hi, i) > rem)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if binomial(mid, i) <= rem:
            lo = mid
        else:
            hi = mid
    return lo


def unrank(n: int, r: int) -> tuple:
    """Return the unique strictly increasing r-tuple whose rank is n.

    Greedy from the top element down: each element is the largest m with
    C(m, i) <= remainder, found by galloping + bisection, so the whole
    construction costs O(r log n) binomial evaluations.
    """
    if n < 0:
        raise ValueError("rank must be non-negative")
    if r < 1:
        raise ValueError("subset size must be >= 1")
    out = []
    rem = n
    upper = None  # elements are strictly decreasing as i goes r..1
    for i in range(r, 0, -1):
        m = _largest_below(rem, i, upper)
        out.append(m)
        rem -= binomial(m, i)
        upper = m
    out.reverse()
    return tuple(out)


def bits_to_int(bits) -> int:
    """Big-endian bit sequence to integer (leftmost bit is most significant)."""
    value = 0
    for b in bits:
        b = int(b)
        if b not in (0, 1):
            raise ValueError(f"bits must be 0/1, got {b}")
        value = (value << 1) | b
    return value


def int_to_bits(n: int, width: int) -> list:
    """Integer to big-endian bit list of the given width."""
    if n < 0:
        raise ValueError("value must be non-negative")
    if width < 0:
        raise ValueError("width must be non-negative")
    if n >> width:
        raise ValueError(f"{n} does not fit in {width} bits")
    return [(n >> (width - 1 - i)) & 1 for i in range(width)]
