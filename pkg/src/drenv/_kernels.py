"""Compiled kernels: environment generation and graph search on arrow masks.

Arrow masks follow the :class:`~drenv.model.EdgeSet` bit order: bit ``b < d``
is ``+e_{b+1}``, bit ``b >= d`` is ``-e_{b-d+1}``.  Searches run on a copy
padded by one layer of sentinel cells carrying ``OUT_BIT``; reaching one
means an arrow (or a predecessor) left the box.
"""

import numba
import numpy as np

OUT_BIT = 31
_OUT = np.uint32(1 << OUT_BIT)

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


@numba.njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(cache=True)
def mix_outer(prefix, keys):
    """``out[i, j] = mix64(prefix[i] ^ keys[j])``."""
    n, m = prefix.shape[0], keys.shape[0]
    out = np.empty((n, m), np.uint64)
    for i in range(n):
        h = prefix[i]
        for j in range(m):
            out[i, j] = _mix(h ^ keys[j])
    return out


@numba.njit(cache=True)
def select_arrows(hu_prefix, hu2_prefix, keys, plus_all, plus_below,
                  e_cuts, e_masks, f_cuts, f_masks):
    """Last-axis hashing fused with the Omega+/E_i/F_j selection.

    ``plus``: ``plus_all`` or ``h_U < plus_below``.  The set index is the
    number of cut thresholds ``t`` with ``h_U' >= t`` (thresholds are
    cumulative weights minus one).
    """
    n, m = hu_prefix.shape[0], keys.shape[0]
    arrows = np.empty((n, m), np.uint32)
    plus = np.empty((n, m), np.bool_)
    ne, nf = e_cuts.shape[0], f_cuts.shape[0]
    for i in range(n):
        a = hu_prefix[i]
        b = hu2_prefix[i]
        for j in range(m):
            hu = _mix(a ^ keys[j])
            hu2 = _mix(b ^ keys[j])
            if plus_all or hu < plus_below:
                idx = 0
                for c in range(ne):
                    if hu2 >= e_cuts[c]:
                        idx += 1
                arrows[i, j] = e_masks[idx]
                plus[i, j] = True
            else:
                idx = 0
                for c in range(nf):
                    if hu2 >= f_cuts[c]:
                        idx += 1
                arrows[i, j] = f_masks[idx]
                plus[i, j] = False
    return arrows, plus


@numba.njit(cache=True)
def reach_padded(padded, offsets, start, reverse):
    """FIFO search on a padded flat arrow array from flat index ``start``.

    Forward: ``u -> u + offsets[b]`` for each bit ``b`` of ``padded[u]``.
    Reverse: ``u - offsets[b]`` joins when its bit ``b`` is set.
    Returns ``(member, touched)``.
    """
    n = padded.shape[0]
    nb = offsets.shape[0]
    seen = np.zeros(n, np.bool_)
    queue = np.empty(n, np.int64)
    queue[0] = start
    seen[start] = True
    head = 0
    tail = 1
    touched = False
    for_out = _OUT
    while head < tail:
        u = queue[head]
        head += 1
        if reverse:
            for b in range(nb):
                v = u - offsets[b]
                pv = padded[v]
                if pv & for_out:
                    touched = True
                elif (pv >> b) & 1 and not seen[v]:
                    seen[v] = True
                    queue[tail] = v
                    tail += 1
        else:
            pu = padded[u]
            for b in range(nb):
                if (pu >> b) & 1:
                    v = u + offsets[b]
                    if padded[v] & for_out:
                        touched = True
                    elif not seen[v]:
                        seen[v] = True
                        queue[tail] = v
                        tail += 1
    return seen, touched


def pad(arrows: np.ndarray) -> np.ndarray:
    out = np.full(tuple(s + 2 for s in arrows.shape), _OUT, dtype=np.uint32)
    out[tuple(slice(1, -1) for _ in arrows.shape)] = arrows
    return out


def offsets_for(padded_shape) -> np.ndarray:
    d = len(padded_shape)
    strides = np.ones(d, dtype=np.int64)
    for a in range(d - 2, -1, -1):
        strides[a] = strides[a + 1] * padded_shape[a + 1]
    return np.concatenate([strides, -strides])


def reach(arrows: np.ndarray, start_idx, reverse: bool):
    """Search on an unpadded arrow array; returns ``(member, touched)`` in its shape."""
    padded = pad(arrows)
    start = int(np.ravel_multi_index(tuple(i + 1 for i in start_idx), padded.shape))
    seen, touched = reach_padded(padded.ravel(), offsets_for(padded.shape), start, reverse)
    inner = tuple(slice(1, -1) for _ in arrows.shape)
    return seen.reshape(padded.shape)[inner], bool(touched)


@numba.njit(cache=True)
def segment_violations(X, Y):
    """Runs of ``X`` (axis 0) on which the ``Y`` members are not contiguous.

    ``X, Y``: (n, lines) boolean.  Returns rows ``(line, k1, k2, gap)`` where
    ``[k1, k2] ⊆ X``, ``Y[k1], Y[k2]`` true and ``Y[gap]`` false.
    """
    n, m = X.shape
    out = []
    for j in range(m):
        i = 0
        while i < n:
            if not X[i, j]:
                i += 1
                continue
            first = -1
            last = -1
            hole = -1
            while i < n and X[i, j]:
                if Y[i, j]:
                    if first < 0:
                        first = i
                    elif hole >= 0 and last >= first:
                        out.append((j, first, i, hole))
                        hole = -2
                    last = i
                elif first >= 0 and hole == -1:
                    hole = i
                i += 1
    return out
