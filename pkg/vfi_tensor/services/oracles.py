"""
Brute-force twins of the optimized kernels.

Direct summation loops. Nothing is shared with kernels.py except ConvSpec
geometry. Test use only.
"""
import numpy as np

from .tensor import ConvSpec


def conv3d_direct(x, weight, bias, spec: ConvSpec) -> np.ndarray:
    """Nested-loop cross-correlation with zeros padding, float64 result"""
    batch, channels, depth, height, width = x.shape
    kt, kh, kw = spec.kernel
    st, sh, sw = spec.stride
    pt, ph, pw = spec.padding
    out_t, out_h, out_w = spec.output_extents((depth, height, width))
    out = np.zeros((batch, spec.out_channels, out_t, out_h, out_w), dtype=np.float64)
    for b in range(batch):
        for o in range(spec.out_channels):
            for t in range(out_t):
                for i in range(out_h):
                    for j in range(out_w):
                        acc = 0.0
                        for c in range(channels):
                            for dt in range(kt):
                                ti = t * st + dt - pt
                                if not 0 <= ti < depth:
                                    continue
                                for dh in range(kh):
                                    hi = i * sh + dh - ph
                                    if not 0 <= hi < height:
                                        continue
                                    for dw in range(kw):
                                        wi = j * sw + dw - pw
                                        if not 0 <= wi < width:
                                            continue
                                        acc += float(x[b, c, ti, hi, wi]) * float(weight[o, c, dt, dh, dw])
                        if bias is not None:
                            acc += float(bias[o])
                        out[b, o, t, i, j] = acc
    return out


def conv_transpose3d_direct(x, weight, bias, spec: ConvSpec) -> np.ndarray:
    """Nested-loop scatter: every input element stamps its weighted kernel"""
    batch, channels, depth, height, width = x.shape
    kt, kh, kw = spec.kernel
    st, sh, sw = spec.stride
    pt, ph, pw = spec.padding
    out_t, out_h, out_w = spec.transposed_extents((depth, height, width))
    out = np.zeros((batch, spec.out_channels, out_t, out_h, out_w), dtype=np.float64)
    for b in range(batch):
        for c in range(channels):
            for t in range(depth):
                for i in range(height):
                    for j in range(width):
                        value = float(x[b, c, t, i, j])
                        for o in range(spec.out_channels):
                            for dt in range(kt):
                                to = t * st + dt - pt
                                if not 0 <= to < out_t:
                                    continue
                                for dh in range(kh):
                                    ho = i * sh + dh - ph
                                    if not 0 <= ho < out_h:
                                        continue
                                    for dw in range(kw):
                                        wo = j * sw + dw - pw
                                        if not 0 <= wo < out_w:
                                            continue
                                        out[b, o, to, ho, wo] += value * float(weight[c, o, dt, dh, dw])
    if bias is not None:
        for o in range(spec.out_channels):
            out[:, o] += float(bias[o])
    return out


def conv2d_direct(x, weight, bias, spec: ConvSpec) -> np.ndarray:
    return conv3d_direct(x[:, :, None], weight[:, :, None], bias, spec)[:, :, 0]


def global_avg_pool_naive(x) -> np.ndarray:
    batch, channels = x.shape[:2]
    out = np.zeros((batch, channels), dtype=np.float64)
    for b in range(batch):
        for c in range(channels):
            total = 0.0
            for value in np.asarray(x[b, c]).ravel():
                total += float(value)
            out[b, c] = total / x[b, c].size
    return out
