"""
Datasets - random-dot samples in memory and the left/right/disp directory layout.

Loading is pure given (seed, path), so samples can be produced by a pool of
workers; write_dataset uses a bounded asyncio pool the same way.
"""

import asyncio
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from PIL import Image

from ..shared.errors import ConfigurationError, FormatError
from ..shared.schemas import DatasetFilterRule
from ..stereo.disparity import DisparityMap
from ..tensor import Tensor
from .images import load_image, save_image
from .pfm import load_pfm, save_pfm
from .preprocess import apply_filter, random_crop
from .sample import StereoSample
from .synthetic import generate_random_dot

logger = structlog.get_logger()

PathLike = Union[str, Path]
IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")


class SyntheticDataset:
    """Random-dot pairs; sample i is generated from the seed sequence [seed, i]."""

    def __init__(
        self,
        count: int,
        height: int,
        width: int,
        max_disp: int,
        shape_count: int = 3,
        seed: int = 0,
    ):
        if count < 1:
            raise ConfigurationError(f"dataset needs at least one sample, got {count}")
        self.count = count
        self.height = height
        self.width = width
        self.max_disp = max_disp
        self.shape_count = shape_count
        self.seed = seed
        self._cache: Dict[int, StereoSample] = {}

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, index: int) -> StereoSample:
        if not 0 <= index < self.count:
            raise IndexError(f"sample {index} out of range 0..{self.count - 1}")
        if index not in self._cache:
            sample = generate_random_dot(
                [self.seed, index], self.height, self.width, self.max_disp, self.shape_count
            )
            sample.name = f"{index:04d}"
            self._cache[index] = sample
        return self._cache[index]


class DirectoryDataset:
    """left/NNNN.png, right/NNNN.png, disp/NNNN.pfm and optionally occ/NNNN.png.

    Samples failing the large-disparity filter are dropped when the index is
    built. With a crop, sample i is cropped with the seed sequence [seed, i].
    """

    def __init__(
        self,
        root: PathLike,
        rule: Optional[DatasetFilterRule] = None,
        crop: Optional[Tuple[int, int]] = None,
        seed: int = 0,
    ):
        self.root = Path(root)
        self.rule = rule
        self.crop = crop
        self.seed = seed
        self.log = logger.bind(component="dataset", root=str(self.root))

        for folder in ("left", "right", "disp"):
            if not (self.root / folder).is_dir():
                raise FileNotFoundError(f"dataset folder missing: {self.root / folder}")

        stems = sorted(p.stem for p in (self.root / "disp").glob("*.pfm"))
        if not stems:
            raise FormatError("no disparity maps found", path=str(self.root / "disp"))

        self.names: List[str] = []
        rejected = 0
        for stem in stems:
            if rule is not None and not apply_filter(self._load(stem), rule):
                rejected += 1
                continue
            self.names.append(stem)
        if not self.names:
            raise ConfigurationError(f"every sample in {self.root} was rejected by the filter")
        self.log.info("Dataset indexed", samples=len(self.names), rejected=rejected)

    def __len__(self) -> int:
        return len(self.names)

    def __getitem__(self, index: int) -> StereoSample:
        sample = self._load(self.names[index])
        if self.crop is not None:
            sample = random_crop(sample, self.crop[0], self.crop[1], [self.seed, index])
        return sample

    def _image(self, folder: str, stem: str) -> Path:
        for suffix in IMAGE_SUFFIXES:
            candidate = self.root / folder / f"{stem}{suffix}"
            if candidate.is_file():
                return candidate
        raise FileNotFoundError(f"image not found: {self.root / folder / stem}.png")

    def _load(self, stem: str) -> StereoSample:
        left = load_image(self._image("left", stem))
        right = load_image(self._image("right", stem))
        disparity = load_pfm(self.root / "disp" / f"{stem}.pfm")
        valid = np.isfinite(disparity.data)
        values = np.where(valid, disparity.data, 0.0)

        occlusion = None
        occ_path = self.root / "occ" / f"{stem}.png"
        if occ_path.is_file():
            with Image.open(occ_path) as image:
                occlusion = (np.asarray(image.convert("L")) > 0).reshape(valid.shape)

        return StereoSample(
            left=left,
            right=right,
            gt_disparity=DisparityMap(Tensor(values)),
            valid_mask=valid,
            occlusion_mask=occlusion,
            name=stem,
        )


def write_sample(sample: StereoSample, root: Path, stem: str) -> None:
    """Lay one sample out in the directory format DirectoryDataset reads."""
    save_image(sample.left, root / "left" / f"{stem}.png")
    save_image(sample.right, root / "right" / f"{stem}.png")
    save_pfm(sample.gt_disparity.values[0], root / "disp" / f"{stem}.pfm")
    if sample.occlusion_mask is not None:
        mask = np.where(sample.occlusion_mask[0, 0], 255, 0).astype(np.uint8)
        Image.fromarray(mask, mode="L").save(str(root / "occ" / f"{stem}.png"))


async def write_dataset(
    dataset: Union[SyntheticDataset, Sequence[StereoSample]],
    root: PathLike,
    workers: int = 4,
) -> int:
    """Write every sample under root with at most `workers` writes in flight."""
    root = Path(root)
    for folder in ("left", "right", "disp", "occ"):
        (root / folder).mkdir(parents=True, exist_ok=True)

    semaphore = asyncio.Semaphore(max(1, workers))
    log = logger.bind(component="dataset", root=str(root))

    async def emit(index: int) -> None:
        async with semaphore:
            sample = await asyncio.to_thread(dataset.__getitem__, index)
            await asyncio.to_thread(write_sample, sample, root, f"{index:04d}")
            log.debug("Sample written", index=index)

    tasks = [emit(index) for index in range(len(dataset))]
    await asyncio.gather(*tasks)

    log.info("Dataset written", samples=len(tasks))
    return len(tasks)
