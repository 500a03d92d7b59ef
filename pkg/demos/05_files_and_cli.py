"""The on-disk side: clip files, manifests, checkpoints and the CLI.

Generates a small dataset, trains briefly through the command-line entry
point, reloads the checkpoint and shows that tampering is caught.

    python3 demos/05_files_and_cli.py
"""
import json
import tempfile
from pathlib import Path

from teanet.checkpoint import load_checkpoint
from teanet.cli import main
from teanet.data import read_clip, read_manifest
from teanet.errors import DigestMismatchError

root = Path(tempfile.mkdtemp(prefix="teanet-demo-"))
print("working in", root)

(root / "data.json").write_text(json.dumps({"frames": 16, "seed": 3}))
main(["gen-data", "--out-dir", str(root / "data"), "--data-spec", str(root / "data.json"),
      "--n-train", "64", "--n-val", "32", "-o", str(root / "gen.json")])
first = sorted((root / "data" / "train").glob("*.teac"))[0]
clip = read_clip(first)
print(f"\n{first.name}: {first.stat().st_size} bytes, frames {clip.frames.shape}, label {clip.label}")

main(["train-toy", "--variant", "tea", "--epochs", "2", "--batch-size", "16",
      "--data-dir", str(root / "data"), "--out-dir", str(root / "run")])

net, meta = load_checkpoint(root / "run" / "checkpoint.teaw")
print("\ncheckpoint meta:", meta)
print("reloaded spec:", net.spec.name, "with", net.num_parameters(), "parameters")
print("validation clips:", len(read_manifest(root / "data" / "val" / "manifest.json")))

buf = bytearray((root / "run" / "checkpoint.teaw").read_bytes())
buf[-10] ^= 1
(root / "tampered.teaw").write_bytes(bytes(buf))
try:
    load_checkpoint(root / "tampered.teaw")
except DigestMismatchError as exc:
    print("tampered checkpoint rejected:", exc)
