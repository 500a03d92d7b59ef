"""A temporal shift is a channel-wise temporal convolution with fixed taps.

Walks through the two views on a tiny clip whose values spell out (channel,
frame), then checks bit-exact agreement on random shapes.

    python3 demos/01_shift_is_a_convolution.py
"""
import numpy as np

from teanet.core import Tensor, ops
from teanet.shift import shift_init_kernel

# value 10*c + t makes it easy to see where every entry came from
T, C = 4, 8
clip = np.array([[[[[10 * c + t]] for c in range(C)] for t in range(T)]], dtype=np.float32)

shifted = ops.temporal_shift(Tensor(clip)).data[0, :, :, 0, 0]
print("part shift, rows = frames, columns = channels")
print(shifted.astype(int))
print("channel 0 reads the next frame, channel 1 the previous one, the rest stay put;"
      " missing neighbours are zero\n")

kernel = shift_init_kernel(C)
print("the same operator as a channel-wise kernel of size 3 (taps for t-1, t, t+1):")
print(kernel.weight.data[:, 0, :, 0, 0].astype(int))

conv = ops.temporal_conv1d_cw(Tensor(clip), kernel).data[0, :, :, 0, 0]
print("\nconv output equals shift output:", np.array_equal(conv, shifted))

# ---------------------------------------------------------------- random shapes
rng = np.random.default_rng(0)
worst = 0.0
for _ in range(200):
    c = int(rng.choice([8, 16, 64]))
    t = int(rng.integers(1, 9))
    x = Tensor(rng.standard_normal((2, t, c, 3, 3)).astype(np.float32))
    diff = ops.temporal_shift(x).data - ops.temporal_conv1d_cw(x, shift_init_kernel(c)).data
    worst = max(worst, float(np.abs(diff).max()))
print(f"max |shift - conv| over 200 random shapes: {worst!r}")

# Because the shift is just one setting of a learnable kernel, a network can
# start from it and then learn other temporal filters ("shift initialization").
