"""
Masked tactile input, fusion and action denoising
=================================================
"""

import numpy as np

from visuotactile.diffusion import add_noise, denoise, make_schedule
from visuotactile.fusion import fuse, init_params, reconstruct, reconstruction_loss, tactile_encode
from visuotactile.preprocess import apply_mask, colormap, draw_mask, stack_pads
from visuotactile.sim import ContactEvent, SessionSpec, simulate_session
from visuotactile.wire import Pad, decode_stream

press = ContactEvent(0.0, 1.0, Pad.LEFT, (6, 12), 2.5, 3500)
session = simulate_session(SessionSpec(duration_s=1.0, contact_script=(press,)))
left, _ = decode_stream(session.streams[Pad.LEFT])
right, _ = decode_stream(session.streams[Pad.RIGHT])

img = stack_pads(left[5], right[5])  # (24, 32) in [0, 1]
rgb = colormap(img)
print(img.shape, rgb.shape, "peak", img.max())

rng = np.random.default_rng(42)
mask = draw_mask(rng)
print("masked patches", mask.masked_count, "of 48, ratio", mask.ratio)
visible = apply_mask(rgb, mask)

params = init_params(42)
z_tac = tactile_encode(visible, params)
z_img = rng.standard_normal(768)  # stands in for a vision backbone
z = fuse(z_tac, z_img, params)
recon = reconstruct(z, params)
print("fused", z.shape, "loss", reconstruction_loss(img, recon))

# %%
# Untrained weights reconstruct nothing useful, but the forward path is
# complete. The diffusion side works the same way: given a perfect noise
# predictor, sixteen strided steps walk a noised action back.

schedule = make_schedule()
a0 = np.array([0.1, -0.4, 0.25, 0.0, 0.9, -0.2, 0.05])
a_k, eps = add_noise(a0, 50, schedule, rng)
a_hat = denoise(a_k, lambda a, obs, k: eps, None, schedule)
print("timesteps", schedule.timesteps.tolist())
print("max error", np.abs(a_hat - a0).max())
