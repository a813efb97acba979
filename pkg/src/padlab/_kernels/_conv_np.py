"""Pure-numpy im2col / col2im kernels (fallback backend).

Both backends produce the same column layout, so the surrounding matmuls
are shared and the backends are interchangeable.
"""

import numpy as np


def im2col(xp, kh, kw, stride, h_out, w_out):
    """Gather conv windows of a padded NCHW input into columns.

    xp: [N, C, Hp, Wp] float64, C-contiguous.
    Returns [N, C*kh*kw, h_out*w_out].
    """
    n, c, _, _ = xp.shape
    s0, s1, s2, s3 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, h_out, w_out),
        strides=(s0, s1, s2, s3, stride * s2, stride * s3),
        writeable=False,
    )
    return windows.reshape(n, c * kh * kw, h_out * w_out)


def col2im(cols, n, c, hp, wp, kh, kw, stride, h_out, w_out):
    """Scatter-add columns back onto a padded input gradient.

    cols: [N, C*kh*kw, h_out*w_out].
    Returns [N, C, Hp, Wp].
    """
    xp = np.zeros((n, c, hp, wp))
    cols6 = cols.reshape(n, c, kh, kw, h_out, w_out)
    for u in range(kh):
        for v in range(kw):
            # slices for a fixed kernel offset never overlap, so += is safe
            xp[:, :, u : u + stride * h_out : stride, v : v + stride * w_out : stride] += cols6[
                :, :, u, v
            ]
    return xp
