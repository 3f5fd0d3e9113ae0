"""Walk through the prior-feature prompts for each restoration task.

A synthetic degraded page is generated per task, its three prompt planes are
computed and written next to the input so they can be inspected side by side.

    python3 demos/prompts_tour.py [out_dir]
"""

import os
import sys

import numpy as np

from docprompt import ALL_TASKS, prompt, synth
from docprompt.core_io import save_image
from docprompt.rng import Rng

out_dir = sys.argv[1] if len(sys.argv) > 1 else "demo_prompts"
os.makedirs(out_dir, exist_ok=True)
cfg = synth.SynthConfig()

for i, task in enumerate(ALL_TASKS):
    sample = synth.make_sample(task, cfg, Rng(100 + i))
    p = prompt.generate(sample.input, task)
    save_image(sample.input, os.path.join(out_dir, f"{task.value}_input.png"))
    for k, plane in enumerate(p.planes):
        save_image(plane, os.path.join(out_dir, f"{task.value}_p{k}.png"))
    stats = ", ".join(f"p{k} mean {plane.mean():.3f}" for k, plane in enumerate(p.planes))
    print(f"{task.value:>10}: {stats}")

# The same page yields a different prompt per task, which is what lets one
# network tell the tasks apart.
page = synth.make_sample(ALL_TASKS[1], cfg, Rng(7)).input
planes = {t: np.stack(prompt.generate(page, t).planes) for t in ALL_TASKS}
print("\npairwise max-abs distance between prompts of one page:")
for a in ALL_TASKS:
    row = " ".join(f"{np.abs(planes[a] - planes[b]).max():5.2f}" for b in ALL_TASKS)
    print(f"{a.value:>10}  {row}")

# Constant prompts used by the ablation baseline carry only the task identity.
for t in ALL_TASKS:
    print(f"fixed prompt value for {t.value}: {prompt.fixed_prompt(t, 4, 4).planes[0][0, 0]:.2f}")
print(f"\nwrote images to {out_dir}/")
