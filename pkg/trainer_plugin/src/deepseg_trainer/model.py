"""Encoder-decoder segmentation network with a ResNet-18 encoder.

Slices are replicated to 3 channels and, when needed, resized to the nearest
multiple of 32 for stride compatibility; logits are resized back to native
resolution before any metric is computed.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn
from torchvision.models import resnet18


class DecoderBlock(nn.Module):
    def __init__(self, in_ch: int, skip_ch: int, out_ch: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch + skip_ch, out_ch, 3, padding=1)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.bn2 = nn.BatchNorm2d(out_ch)

    def forward(self, x, skip=None):
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        if skip is not None:
            x = torch.cat([x, skip], dim=1)
        x = F.relu(self.bn1(self.conv1(x)))
        return F.relu(self.bn2(self.conv2(x)))


class ResNetUNet(nn.Module):
    """UNet over the ResNet-18 feature pyramid, 1-channel logits out.

    The final decoder stage takes the raw input as a full-resolution skip:
    the encoder stem halves the image immediately, so without it boundary
    detail on small slices never reaches the head."""

    def __init__(self):
        super().__init__()
        encoder = resnet18(weights=None)
        self.stem = nn.Sequential(encoder.conv1, encoder.bn1, encoder.relu)  # 1/2, 64
        self.pool = encoder.maxpool  # 1/4
        self.layer1 = encoder.layer1  # 1/4, 64
        self.layer2 = encoder.layer2  # 1/8, 128
        self.layer3 = encoder.layer3  # 1/16, 256
        self.layer4 = encoder.layer4  # 1/32, 512

        self.up4 = DecoderBlock(512, 256, 256)  # -> 1/16
        self.up3 = DecoderBlock(256, 128, 128)  # -> 1/8
        self.up2 = DecoderBlock(128, 64, 64)  # -> 1/4
        self.up1 = DecoderBlock(64, 64, 32)  # -> 1/2
        self.up0 = DecoderBlock(32, 3, 16)  # -> 1/1, skip = input image
        self.head = nn.Conv2d(16, 1, 1)

    def forward(self, x):
        s0 = self.stem(x)
        s1 = self.layer1(self.pool(s0))
        s2 = self.layer2(s1)
        s3 = self.layer3(s2)
        s4 = self.layer4(s3)
        d = self.up4(s4, s3)
        d = self.up3(d, s2)
        d = self.up2(d, s1)
        d = self.up1(d, s0)
        d = self.up0(d, x)
        return self.head(d)


def round_to_stride(size: int, stride: int = 32) -> int:
    return max(stride, int(round(size / stride)) * stride)


def forward_slices(model: nn.Module, batch: torch.Tensor) -> torch.Tensor:
    """batch: (B, H, W) intensities. Returns (B, H, W) logits at native
    resolution, resizing through the stride-compatible shape if needed."""
    _, h, w = batch.shape
    x = batch.unsqueeze(1).repeat(1, 3, 1, 1)
    h32, w32 = round_to_stride(h), round_to_stride(w)
    if (h, w) != (h32, w32):
        x = F.interpolate(x, size=(h32, w32), mode="bilinear", align_corners=False)
    logits = model(x)
    if (h, w) != (h32, w32):
        logits = F.interpolate(logits, size=(h, w), mode="bilinear", align_corners=False)
    return logits.squeeze(1)
