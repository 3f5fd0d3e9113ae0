"""Train a small model, then steer it with the prompt.

A short run on a freshly generated dataset is enough to see the mechanism:
the same photographed page goes through the network three times, once per
prompt, and each pass fixes a different problem. The chained pipeline then
applies the three stages in turn. Expect rough results: deshadowing and
lighting correction improve within a few hundred steps, while dewarping
usually needs the 2000-step run of the acceptance suite to beat the input.

    python3 demos/train_and_control.py [out_dir] [steps]
"""

import os
import sys
import time

import numpy as np

from docprompt import imgproc, metrics, synth
from docprompt.core_io import save_image
from docprompt.net import TrainConfig, build_model, predict, train
from docprompt.rng import Rng
from docprompt.tasks import TaskKind

out_dir = sys.argv[1] if len(sys.argv) > 1 else "demo_control"
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 600
os.makedirs(out_dir, exist_ok=True)

manifest = synth.make_dataset(synth.SynthConfig(seed=1), 40, os.path.join(out_dir, "data"))
cfg = TrainConfig(steps=steps, pretrain_steps=steps // 4, batch=4, lr_max=1e-3,
                  widths=(16, 32, 64), seed=7)
t0 = time.time()
model = build_model(cfg.widths, seed=cfg.seed)
log = train(model, manifest, cfg).log_text()
print(f"trained {steps} steps in {time.time() - t0:.0f}s")

# A page that is curved, unevenly lit and partly shadowed at once.
scfg = synth.SynthConfig()
rng = Rng(0)
page, _ = synth.render_page(scfg, rng)
flat = imgproc.gaussian_blur(page, synth.CAMERA_SIGMA)
lit, _ = synth.gen_illum(flat, scfg, rng)
shadowed, _ = synth.gen_shadow(lit, scfg, rng)
disp, _ = synth.gen_warp(scfg, rng)
backdrop = synth.backdrop_for(rng, scfg.page_size)
photo, _ = synth.apply_warp(shadowed, disp, backdrop)
save_image(photo, os.path.join(out_dir, "photo.png"))

truth = {
    TaskKind.DEWARP: shadowed,
    TaskKind.DESHADOW: synth.apply_warp(lit, disp, backdrop)[0],
    TaskKind.APPEARANCE: synth.apply_warp(flat, disp, backdrop)[0],
}
outs = {}
for task, gt in truth.items():
    outs[task] = predict(model, photo, task).image
    save_image(outs[task], os.path.join(out_dir, f"prompted_{task.value}.png"))
    if task is TaskKind.DEWARP:
        before, after = metrics.ms_ssim(photo, gt), metrics.ms_ssim(outs[task], gt)
        print(f"{task.value:>10}: MS-SSIM {before:.3f} -> {after:.3f}")
    else:
        before, after = metrics.psnr(photo, gt), metrics.psnr(outs[task], gt)
        print(f"{task.value:>10}: PSNR {before:.2f} -> {after:.2f} dB")

tasks = list(truth)
for i, a in enumerate(tasks):
    for b in tasks[i + 1:]:
        print(f"mean |{a.value} - {b.value}| = {np.abs(outs[a] - outs[b]).mean():.3f}")

img = photo
for i, task in enumerate(tasks, 1):
    img = predict(model, img, task).image
    save_image(img, os.path.join(out_dir, f"pipeline_{i}_{task.value}.png"))
print(f"pipeline result vs clean flat page: PSNR {metrics.psnr(img, flat):.2f} dB "
      f"(photo: {metrics.psnr(photo, flat):.2f} dB)")
print(f"images in {out_dir}/")
