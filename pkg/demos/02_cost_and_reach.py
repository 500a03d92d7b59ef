"""Where the compute goes, and how far each design looks in time.

Counts multiply-accumulates (1 MAC = 1 FLOP, convolutions and the classifier
only) for ResNet-50 with and without TEA blocks at 8x224x224, then tabulates
the temporal receptive field block by block.

    python3 demos/02_cost_and_reach.py
"""
from teanet.analyzer import count_flops, count_params, temporal_rf
from teanet.net import preset

plain = count_flops(preset("resnet50-2d"), frames=8, height=224)
tea = count_flops(preset("resnet50-tea"), frames=8, height=224)

print(f"{'':12s}{'GMACs':>10s}{'params (M)':>12s}")
for name, r in (("plain 2D", plain), ("TEA", tea)):
    print(f"{name:12s}{r.totals['macs'] / 1e9:10.2f}{r.totals['params'] / 1e6:12.2f}")
print(f"TEA / plain = {tea.totals['macs'] / plain.totals['macs']:.3f}\n")

# The aggregation cascade replaces the block's 3x3 conv, so compare it with
# that conv; motion excitation is pure extra cost.
def macs(report, part):
    return sum(l.macs for l in report.layers if part in l.name)


print(f"3x3 convs in the plain net   {macs(plain, '.conv2') / 1e9:7.3f} G")
print(f"aggregation cascades in TEA  {macs(tea, '.mta.') / 1e9:7.3f} G")
print(f"motion excitation in TEA     {macs(tea, '.me.') / 1e9:7.3f} G")
print("(the TEA preset also widens the bottleneck to the Res2Net widths 104/208/416/832)\n")

# ---------------------------------------------------------------- receptive field
print("\ntemporal reach (frames back / forward) per stage")
for name in ("resnet50-2d", "resnet50-tea"):
    r = temporal_rf(preset(name))
    print(f"  {name:14s} stages {[s['radius'] for s in r.per_stage]}  "
          f"whole network: back {r.back}, forward {r.forward}, "
          f"from temporal convs alone {r.cumulative_aggregation}")

# one TEA block: the aggregation cascade reaches 3 frames each way, and the
# motion excitation peeks one extra frame ahead (a change at t alters the
# motion feature of frame t-1)
b = temporal_rf(preset("resnet50-tea")).per_block[0]
print(f"\nfirst block: fragments reach {b.fragment_radii}, block back {b.back}, forward {b.forward}")

p21d = preset("resnet50-2d").with_variant("P21D_RESNET", "SHIFT_INIT")
print(f"a (2+1)D ResNet-50 with one temporal conv per block reaches {temporal_rf(p21d).cumulative} frames,"
      f" at {count_params(p21d).totals['params'] / 1e6:.1f}M parameters")
