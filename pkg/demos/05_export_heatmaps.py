# Export per-component prediction maps as viewable PGM images and raw CSV.
#
# PGM (binary P5) needs no image library and renders anywhere; three
# normalizations highlight different things: max-positive keeps confident
# regions, signed-symmetric shows suppression as dark areas, sigmoid squashes
# raw scores.

from pathlib import Path

import modaldecomp as md
from modaldecomp.heatmap import as_2d, write_component_maps

model = md.gen_synthetic_model(seed=7, spec=md.GenSpec())
samples = md.gen_sample_set(seed=3, model=model, n=2)
result = md.decompose(model, samples[0])

labels = md.component_labels(model.modalities)
components = {lab: as_2d(result.output.parts[i]) for i, lab in enumerate(labels)}

out = Path("heatmaps_demo")
for norm in ("max-positive", "signed-symmetric", "sigmoid"):
    written = write_component_maps(out / norm, components, "positive-pgm", norm)
    print(f"{norm}: " + ", ".join(p.as_posix() for p in written))

# raw signed values round-trip exactly through CSV
written = write_component_maps(out / "raw", components, "signed-csv", "max-positive")
print("raw csv: " + ", ".join(p.as_posix() for p in written))
