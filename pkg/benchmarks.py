# benchmarks.py
#
# Full-scale reference results on NUAA-SIRST and NUDT-SIRST (percent), kept
# as documentation. They need the real datasets and 1500-epoch training; a
# desk-scale run is not expected to reach them.

from dataclasses import dataclass
from typing import Dict, List, Optional

DATASETS = ("NUAA-SIRST", "NUDT-SIRST")


@dataclass(frozen=True)
class ReferenceResult:
    method: str
    family: str
    dataset: str
    miou: float
    precision: float
    recall: float
    f1: float


_ROWS = [
    # method, family, NUAA (mIoU, P, R, F1), NUDT (mIoU, P, R, F1)
    ("Top-Hat", "filtering", (23.52, 67.23, 44.47, 53.53), (33.04, 69.48, 47.39, 56.35)),
    ("Max-Median", "filtering", (18.74, 57.35, 60.48, 58.87), (20.58, 59.47, 56.58, 57.99)),
    ("LCM", "local contrast", (25.89, 64.23, 27.81, 38.81), (34.26, 63.46, 34.29, 44.52)),
    ("TLLCM", "local contrast", (38.54, 67.68, 31.58, 43.07), (41.03, 72.45, 40.48, 51.94)),
    ("IPI", "low rank", (33.46, 69.29, 64.47, 66.79), (30.32, 72.49, 60.67, 66.06)),
    ("RIPT", "low rank", (44.12, 75.48, 69.71, 72.48), (46.25, 77.73, 54.23, 63.89)),
    ("TBCNet", "cnn", (58.46, 78.37, 48.76, 60.12), (65.62, 79.69, 57.39, 66.73)),
    ("MDvsFA-cGAN", "cnn", (64.56, 83.47, 52.47, 64.44), (74.43, 87.47, 62.71, 73.05)),
    ("ACMNet", "cnn", (68.96, 87.58, 69.61, 77.57), (75.41, 89.35, 72.56, 80.08)),
    ("ALCNet", "cnn", (72.80, 88.16, 56.43, 68.81), (79.96, 89.76, 68.93, 77.98)),
    ("DNANet", "cnn", (77.47, 83.37, 86.23, 84.78), (86.53, 91.98, 92.76, 92.37)),
    ("iSmallNet", "full", (80.34, 88.74, 90.79, 89.75), (87.25, 90.26, 95.55, 92.83)),
    ("iSmallNet w/o interior/boundary stream", "ablation", (79.24, 86.96, 88.67, 87.81), (85.67, 88.56, 93.89, 91.15)),
    ("iSmallNet-UNet", "ablation", (78.74, 86.35, 88.13, 87.23), (85.13, 88.38, 93.74, 90.98)),
    ("iSmallNet-UNet++", "ablation", (79.09, 87.14, 88.78, 87.95), (86.19, 88.69, 94.09, 91.31)),
    ("iSmallNet-DNANet", "ablation", (79.26, 87.41, 89.46, 88.42), (86.56, 89.63, 94.81, 92.15)),
]

REFERENCE_RESULTS: List[ReferenceResult] = [
    ReferenceResult(method, family, dataset, *values)
    for method, family, nuaa, nudt in _ROWS
    for dataset, values in zip(DATASETS, (nuaa, nudt))
]

VARIANT_REFERENCE: Dict[str, str] = {
    "full": "iSmallNet",
    "no_interior": "iSmallNet w/o interior/boundary stream",
    "no_boundary": "iSmallNet w/o interior/boundary stream",
    "unet_decoder": "iSmallNet-UNet",
    "unetpp_decoder": "iSmallNet-UNet++",
    "dnanet_decoder": "iSmallNet-DNANet",
}


def reference_for_variant(variant: str) -> List[ReferenceResult]:
    """Reference rows (one per dataset) matching a model variant."""
    method: Optional[str] = VARIANT_REFERENCE.get(variant)
    return [r for r in REFERENCE_RESULTS if r.method == method]
