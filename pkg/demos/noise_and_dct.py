"""Block DCT of a waveform and the noise covariance it induces.

White noise gives a flat diagonal; low-pass noise piles its energy into the
first coefficients, which is what the adapted variances pick up.
"""
import numpy as np
from scipy.signal import lfilter

from linphone.frontend import block_dct, estimate_noise_cov, inverse_block_dct

rng = np.random.default_rng(0)

x = rng.standard_normal(160 * 20)
c = block_dct(x)
print("round trip error:", np.max(np.abs(inverse_block_dct(c) - x)))
print("energy per block, time vs DCT:",
      np.allclose((x.reshape(-1, 160) ** 2).sum(1), (c.reshape(-1, 160) ** 2).sum(1)))

white = estimate_noise_cov(rng.standard_normal(10 ** 6))
print(f"white noise N: min {white.N.min():.3f}, max {white.N.max():.3f}")

# one-pole low-pass filter
lp = lfilter([1.0], [1.0, -0.9], rng.standard_normal(10 ** 6))
low = estimate_noise_cov(lp, noise_id="lowpass")
for k in (0, 5, 20, 80, 159):
    print(f"  coefficient {k:3d}: white {white.N[k]:.3f}   low-pass {low.N[k]:.3f}")
