"""What motion excitation responds to.

The module subtracts each frame's features from (a transform of) the next
frame's features. It averages the difference over space and turns it into a
per-channel gate in (-1, 1). Spatial averaging has a consequence worth
seeing: a pure shift of the picture leaves the average unchanged.

    python3 demos/03_motion_excitation.py
"""
import numpy as np

from teanet.core import Tensor
from teanet.data import SyntheticSpec, generate_dataset
from teanet.me import MEModule, me_attention, me_forward

rng = np.random.default_rng(0)
spec = SyntheticSpec(frames=6, noise=0.0, speed=1.0)
moving = generate_dataset(spec, 1)[3].frames                  # sprite sliding right, wrapping around
static = moving[:1].repeat(6, axis=0)                         # first frame held still
fading = moving[:1] * np.linspace(0.2, 1.0, 6)[:, None, None, None]  # brightening in place

m = MEModule(3, 1, rng=rng)   # fresh module: the next-frame transform is the identity
m.conv_exp.set_weights(rng.standard_normal(m.conv_exp.weight.shape) * 4)


def show(name, frames):
    a = me_attention(m, Tensor(frames[None].astype(np.float64))).data[0, :, :, 0, 0]
    print(f"{name:8s} max |attention| {np.abs(a).max():.3f}   first frame {np.round(a[0], 3)}")


print("identity transform")
show("static", static)
show("moving", moving)   # wrap-around shift: the spatial mean of every frame is the same
show("fading", fading)
# The last frame has no successor, so its motion feature is zero by definition.

# A learned 3x3 transform does not change this much. Its taps rarely sum
# to one, so even a still picture now produces a gate. The part that is
# specific to motion comes only from zero padding at the borders, and a
# sprite away from the edge never touches them. On wrap-around data like
# this, direction has to be read by the temporal convolutions; motion
# excitation only sees changes that alter the spatial average.
m.conv_trans.set_weights(rng.standard_normal(m.conv_trans.weight.shape))
print("\nrandom 3x3 transform")
show("static", static)
show("moving", moving)
a_static = me_attention(m, Tensor(static[None].astype(np.float64))).data
a_moving = me_attention(m, Tensor(moving[None].astype(np.float64))).data
print(f"moving - static, max over frames and channels: {np.abs(a_moving - a_static).max():.4f}")

# with the expansion conv zeroed the module is an exact identity, which is
# how a freshly inserted block can leave a pretrained network unchanged
m.conv_exp.set_weights(np.zeros(m.conv_exp.weight.shape))
x = Tensor(moving[None])
print("\nzeroed expansion -> identity:", np.array_equal(me_forward(m, x).data, x.data))
