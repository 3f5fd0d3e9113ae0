"""How the evaluation metrics react to controlled damage.

    python3 demos/metrics_tour.py
"""

import numpy as np

from docprompt import imgproc, metrics, synth
from docprompt.rng import Rng

page, ink = synth.render_page(synth.SynthConfig(), Rng(3))
noise = np.random.default_rng(0).standard_normal(page.shape)

print("additive noise on a clean page")
for sigma in (0.01, 0.05, 0.1):
    noisy = np.clip(page + sigma * noise, 0, 1)
    print(f"  sigma {sigma:4.2f}: PSNR {metrics.psnr(noisy, page):6.2f}  "
          f"SSIM {metrics.ssim(noisy, page):.4f}  MS-SSIM {metrics.ms_ssim(noisy, page):.4f}")

# Geometric metrics rely on block matching, which needs texture to lock on to.
tex = imgproc.gaussian_blur(np.random.default_rng(1).random((512, 512, 3)), 1.5)
ident = imgproc.identity_map(512, 512)
shifted = imgproc.remap_bilinear(tex, ident + np.array([3.0, 0.0]))
print(f"\n3 px translation: LD {metrics.local_distortion(shifted, tex):.3f}")

shear = np.zeros_like(ident)
shear[..., 1] = 0.02 * (ident[..., 0] - 256)
sheared = imgproc.remap_bilinear(tex, ident + shear)
flow = metrics.dense_flow(sheared, tex)
gray = imgproc.to_grayscale(tex)
print(f"small shear: AD {metrics.align_distortion_from_flow(flow, gray):.5f} "
      f"(without affine removal {metrics.align_distortion_from_flow(flow, gray, remove_affine=False):.5f})")

print("\nbinarisation against the true ink mask")
fm, p, r = metrics.f_measure(ink, ink)
print(f"  perfect:  FM {fm:.3f}  pFM {metrics.pseudo_f_measure(ink, ink):.3f}")
thick = imgproc.dilate(ink, 1)
fm, p, r = metrics.f_measure(thick, ink)
print(f"  dilated:  FM {fm:.3f} (P {p:.3f}, R {r:.3f})  pFM {metrics.pseudo_f_measure(thick, ink):.3f}")
degraded = synth.make_sample("binarize", synth.SynthConfig(), Rng(5))
sauvola, _ = imgproc.sauvola(imgproc.to_grayscale(degraded.input))
fm, p, r = metrics.f_measure(sauvola, degraded.target)
print(f"  Sauvola on a degraded scan: FM {fm:.3f} (P {p:.3f}, R {r:.3f})")
