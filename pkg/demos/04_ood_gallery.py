"""Generate a gallery of synthetic OOD images as PGM files.

About a third of the batch are glyph inliers pushed through a random chain
of corruptions; the rest are procedural patterns (fractal noise, strokes,
checkerboards, thresholded blobs). Open the PGMs with any image viewer.

Run: python demos/04_ood_gallery.py [out_dir]
"""

import sys
from pathlib import Path

from hecka import data, io, ood

out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/ood_gallery")
inliers = data.glyphs(32, seed=0)
items = ood.ood_batch_items(inliers, ood.OodRecipe(), n=20, seed=0)
for i, (img, kind, seed) in enumerate(items):
    io.write_pgm(out / f"{i:02d}_{kind}.pgm", img)
    print(f"{i:02d}  {kind:16s} seed={seed}")
print(f"wrote {len(items)} images to {out}")
