"""Follow the local scale of an exponential chirp.

The instantaneous frequency falls as exp(-t/a), so log(sigma_hat) should grow
linearly with slope 1/a. Prints the fitted slope and a coarse track.
"""
import numpy as np

from densescale.quadrature import QuadratureParams
from densescale.scalespace import ScaleLadder
from densescale.selection import max_response_map, select_dense
from densescale.synth import SyntheticSpec, generate

a, b, n = 200.0, 1000.0, 1000
sig = generate(SyntheticSpec("chirp", (n,), a=a, b=b))
smap = select_dense("II", sig, ScaleLadder.per_octave(1, 128, 8), QuadratureParams())
tau = max_response_map(smap).s_hat

t = np.arange(n, dtype=float)
keep = (t >= 200) & (t < 800) & np.isfinite(tau)
slope = np.polyfit(t[keep], 0.5 * np.log(tau[keep]), 1)[0]
print(f"d log(sigma_hat) / dt = {slope:.5f}   (1/a = {1 / a:.5f}, ratio {slope * a:.3f})")
for i in range(0, n, 100):
    w = np.exp((b - i) / a) / a
    print(f"t={i:4d}  sigma_hat={np.sqrt(tau[i]):8.3f}  1/omega={1 / w:8.3f}")
