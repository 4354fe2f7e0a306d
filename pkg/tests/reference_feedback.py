"""Independent transcription of the probability-update rule, used as a test oracle.

p_f <- clamp(p_f + G / log2(|V_f| + 1)),
G = h(c) * g(i) / n, h = +1 if c > 0 else -1,
g = beta * gamma if c > 0 else 1 / (beta * gamma), gamma = min(i / warm, 1).
At gamma == 0 the penalty uses 1 / beta.
"""
import math


def ref_gamma(i, warm):
    return min(float(i) / float(warm), 1.0)


def ref_gain(c, i, beta, warm, n):
    gamma = ref_gamma(i, warm)
    if c > 0:
        h, g = 1.0, beta * gamma
    else:
        h = -1.0
        g = 1.0 / beta if gamma == 0 else 1.0 / (beta * gamma)
    return h * g / n


def ref_update(p, bit_width, gain, lo=0.001, hi=1.0):
    q = p + gain / math.log2(2.0 ** bit_width + 1.0)
    return max(lo, min(hi, q))
