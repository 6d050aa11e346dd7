"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def banded_rows(padded, start, w):
    idx = start[:, None] + np.arange(w.shape[1])
    return np.einsum("ia,iac->ic", w, padded[idx])


def banded_congruence(padded, sr, wr, sc, wc):
    tmp = banded_rows(padded, sr, wr)
    idx = sc[:, None] + np.arange(wc.shape[1])
    return np.einsum("jb,ijb->ij", wc, tmp[:, idx])
