"""Stereo samples: random-dot generation, PFM and image I/O, filtering and cropping."""

from .dataset import DirectoryDataset, SyntheticDataset, write_dataset, write_sample
from .images import export_disparity_image, export_error_image, load_image, quantize, save_image
from .pfm import load_pfm, save_pfm
from .preprocess import apply_filter, large_disparity_fraction, random_crop
from .sample import StereoSample, collate
from .synthetic import forward_map, generate_random_dot

__all__ = [
    "DirectoryDataset",
    "SyntheticDataset",
    "write_dataset",
    "write_sample",
    "export_disparity_image",
    "export_error_image",
    "load_image",
    "quantize",
    "save_image",
    "load_pfm",
    "save_pfm",
    "apply_filter",
    "large_disparity_fraction",
    "random_crop",
    "StereoSample",
    "collate",
    "forward_map",
    "generate_random_dot",
]
