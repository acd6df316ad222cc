"""UNet (ResNet-18 encoder) segmentation trainer speaking the labelbudget
external-trainer wire protocol."""

__version__ = "0.1.0"
