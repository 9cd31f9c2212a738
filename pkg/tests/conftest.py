import numpy as np
import pytest

from mcop.core import CH_DEPTH, CH_ROT, McopImage, N_CHANNELS
from mcop.erosion import default_mask_count, erode_image
from mcop.patchbank import PatchBank, build_bank
from mcop.projection import project
from mcop.sweep import integrate_slit_poses, resample_path
from mcop.synth import StructureSpec, profile_from_structure, synth_erosion_mask, synth_wall

STEP = 0.02


def make_image(h, w, known=None, rgb=0.5, depth=1.0, rot=None, wrap=False):
    """Small valid image builder for unit tests."""
    ch = np.zeros((h, w, N_CHANNELS))
    mask = np.ones((h, w), dtype=bool) if known is None else np.asarray(known, dtype=bool)
    ch[..., :3] = rgb
    ch[..., CH_DEPTH] = np.where(mask, depth, np.inf)
    ch[~mask, :3] = 0.0
    ch[..., CH_ROT] = (np.pi / h) if rot is None else rot
    return McopImage(ch, mask, wrap=wrap)


def build_scene(footprint, height, seed, closed=False, doors=(), spacing=0.01,
                arc_rows=88, step=STEP):
    """synth -> sweep -> project for one structure; returns a dict of parts."""
    spec = StructureSpec(
        name="scene", footprint=np.asarray(footprint, dtype=np.float64),
        closed=closed, height=height, doors=tuple(doors), spacing=spacing,
    )
    res = synth_wall(spec, seed=seed)
    h = int(np.ceil((res.meta["max_height"] + 0.06) / step)) + arc_rows
    paths, profiles, images = [], [], []
    for loop in res.loops:
        path = resample_path(loop, ground_z=0.0, offset=0.0, step=step, closed=None)
        prof = profile_from_structure(path, res.meta, h, step)
        poses = integrate_slit_poses(path, prof, h, step)
        images.append(project(res.cloud, poses))
        paths.append(path)
        profiles.append(prof)
    return {
        "spec": spec, "cloud": res.cloud, "loops": res.loops, "meta": res.meta,
        "paths": paths, "profiles": profiles, "images": images, "step": step, "H": h,
    }


def synthetic_mask_bank(size=128, n=12, seed=100):
    sevs = np.linspace(0.3, 0.7, n)
    masks = tuple(synth_erosion_mask(size, size, float(s), seed=seed + i)
                  for i, s in enumerate(sevs))
    return PatchBank(size, masks, 0.0, ("synthetic",))


@pytest.fixture(scope="session")
def wall_scene():
    """A 2.5 m straight wall, projected: the shared medium-size fixture."""
    return build_scene([[0.0, 0.0], [2.5, 0.0]], 1.6, seed=3)


@pytest.fixture(scope="session")
def eroded_scene(wall_scene):
    truth = wall_scene["images"][0]
    bank = synthetic_mask_bank()
    eroded, held = erode_image(truth, bank, default_mask_count(truth, bank.w),
                               (0.2, 0.8), seed=7)
    patch_bank = build_bank([eroded], w=64, stride=16, seed=1)
    return {"truth": truth, "eroded": eroded, "held": held, "bank": patch_bank,
            **{k: wall_scene[k] for k in ("paths", "profiles", "cloud", "step")}}
