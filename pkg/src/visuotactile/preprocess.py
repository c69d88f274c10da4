"""Tactile image construction and patch masking.

The two 12x32 pads stack into a 24x32 image (left on top), values scaled
to [0, 1], mapped to RGB with a fixed jet-like colormap, and tiled into a
6x8 grid of non-overlapping 4x4 patches. Masked patches are replaced by a
mask-token template: ``visible = M * T + (1 - M) * T_mask``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .wire import COLS, ROWS, TAXEL_MAX, Pad

IMG_H, IMG_W = 2 * ROWS, COLS
PATCH = 4
GRID_H, GRID_W = IMG_H // PATCH, IMG_W // PATCH
N_PATCHES = GRID_H * GRID_W

MASK_PROB = 0.95
RATIO_RANGE = (0.6, 0.8)


class PadMismatch(ValueError):
    pass


def stack_pads(left, right) -> np.ndarray:
    """(24, 32) float64 image in [0, 1]; left pad in rows 0-11."""
    if left.pad_id != Pad.LEFT or right.pad_id != Pad.RIGHT:
        raise PadMismatch(f"expected (LEFT, RIGHT), got ({left.pad_id.name}, {right.pad_id.name})")
    img = np.vstack([left.taxels, right.taxels]).astype(np.float64)
    return img / TAXEL_MAX


def colormap(img) -> np.ndarray:
    """(3, H, W) RGB from values in [0, 1].

    R = clip(1.5 - |4v - 3|), G = clip(1.5 - |4v - 2|), B = clip(1.5 - |4v - 1|).
    """
    v = 4.0 * np.asarray(img, dtype=np.float64)
    return np.clip(1.5 - np.abs(np.stack([v - 3.0, v - 2.0, v - 1.0])), 0.0, 1.0)


def patchify(img):
    """(..., 24, 32) -> (..., 6, 8, 4, 4) view-style reshape."""
    img = np.asarray(img)
    lead = img.shape[:-2]
    x = img.reshape(*lead, GRID_H, PATCH, GRID_W, PATCH)
    return np.moveaxis(x, -3, -2)


def unpatchify(patches):
    patches = np.asarray(patches)
    lead = patches.shape[:-4]
    x = np.moveaxis(patches, -2, -3)
    return x.reshape(*lead, IMG_H, IMG_W)


@dataclass(frozen=True, eq=False)
class PatchMask:
    """``bits`` is (6, 8) uint8, 1 = visible. ``ratio`` is None when unmasked."""

    bits: np.ndarray
    ratio: float | None = None

    @property
    def masked_count(self):
        return int(N_PATCHES - self.bits.sum())

    @property
    def unmasked(self):
        return self.ratio is None

    def pixel_mask(self):
        """(24, 32) visibility at pixel resolution."""
        return np.kron(self.bits, np.ones((PATCH, PATCH), dtype=self.bits.dtype))

    @classmethod
    def all_visible(cls):
        return cls(np.ones((GRID_H, GRID_W), dtype=np.uint8), None)

    @classmethod
    def from_masked(cls, patch_ids, ratio=None):
        bits = np.ones(N_PATCHES, dtype=np.uint8)
        bits[np.asarray(patch_ids, dtype=np.int64)] = 0
        return cls(bits.reshape(GRID_H, GRID_W), ratio)


def masked_count(ratio):
    """Patches to hide for a mask ratio (round half up)."""
    return int(np.floor(ratio * N_PATCHES + 0.5))


def draw_mask(rng: np.random.Generator, mask_prob=MASK_PROB, ratio_range=RATIO_RANGE) -> PatchMask:
    """Random patch mask.

    With probability ``mask_prob`` a ratio is drawn uniformly from
    ``ratio_range`` and that share of the 48 patches (chosen uniformly
    without replacement) is hidden; otherwise every patch stays visible.
    """
    if rng.random() >= mask_prob:
        return PatchMask.all_visible()
    ratio = float(rng.uniform(*ratio_range))
    ids = rng.choice(N_PATCHES, size=masked_count(ratio), replace=False)
    return PatchMask.from_masked(ids, ratio)


def default_mask_token():
    return np.full((PATCH, PATCH), 0.5)


def apply_mask(img, mask: PatchMask, token=None) -> np.ndarray:
    """Replace masked 4x4 patches of a (C, 24, 32) image by the token template."""
    img = np.asarray(img, dtype=np.float64)
    token = default_mask_token() if token is None else np.asarray(token, dtype=np.float64)
    if token.shape != (PATCH, PATCH):
        raise ValueError(f"mask token must be {PATCH}x{PATCH}")
    if img.shape[-2:] != (IMG_H, IMG_W):
        raise ValueError(f"image must end in ({IMG_H}, {IMG_W}), got {img.shape}")
    m = mask.pixel_mask().astype(bool)
    tiled = np.tile(token, (GRID_H, GRID_W))
    return np.where(m, img, tiled)


def tactile_input(left, right, mask=None, token=None):
    """Stack, colormap and (optionally) mask one pad pair."""
    rgb = colormap(stack_pads(left, right))
    return rgb if mask is None else apply_mask(rgb, mask, token)
