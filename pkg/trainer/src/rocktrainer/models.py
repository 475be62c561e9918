"""U-Net and DeepLabv3+ with a ResNet18 encoder.

ImageNet encoder weights are requested when ``pretrained`` is set; if the
download is unavailable (offline environments) the model falls back to
random initialisation with a warning.
"""

from __future__ import annotations

import warnings

import torch
import torch.nn as nn
import torch.nn.functional as F
from torchvision.models import resnet18


def _backbone(pretrained: bool):
    if pretrained:
        try:
            from torchvision.models import ResNet18_Weights

            return resnet18(weights=ResNet18_Weights.IMAGENET1K_V1)
        except Exception as exc:  # download unavailable
            warnings.warn(f"pretrained encoder unavailable ({exc}); using random init")
    return resnet18(weights=None)


class _ConvBlock(nn.Module):
    def __init__(self, c_in, c_out):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(c_in, c_out, 3, padding=1, bias=False),
            nn.BatchNorm2d(c_out),
            nn.ReLU(inplace=True),
            nn.Conv2d(c_out, c_out, 3, padding=1, bias=False),
            nn.BatchNorm2d(c_out),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class UNet(nn.Module):
    """ResNet18-encoder U-Net with a single-logit head."""

    def __init__(self, pretrained: bool = True):
        super().__init__()
        net = _backbone(pretrained)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu)   # /2, 64
        self.pool = net.maxpool
        self.enc1 = net.layer1                                    # /4, 64
        self.enc2 = net.layer2                                    # /8, 128
        self.enc3 = net.layer3                                    # /16, 256
        self.enc4 = net.layer4                                    # /32, 512
        self.dec4 = _ConvBlock(512 + 256, 256)
        self.dec3 = _ConvBlock(256 + 128, 128)
        self.dec2 = _ConvBlock(128 + 64, 64)
        self.dec1 = _ConvBlock(64 + 64, 32)
        self.dec0 = _ConvBlock(32, 16)
        self.head = nn.Conv2d(16, 1, 1)

    @staticmethod
    def _up_to(x, ref):
        return F.interpolate(x, size=ref.shape[-2:], mode="bilinear", align_corners=False)

    def forward(self, x):
        s0 = self.stem(x)
        s1 = self.enc1(self.pool(s0))
        s2 = self.enc2(s1)
        s3 = self.enc3(s2)
        s4 = self.enc4(s3)
        d = self.dec4(torch.cat([self._up_to(s4, s3), s3], dim=1))
        d = self.dec3(torch.cat([self._up_to(d, s2), s2], dim=1))
        d = self.dec2(torch.cat([self._up_to(d, s1), s1], dim=1))
        d = self.dec1(torch.cat([self._up_to(d, s0), s0], dim=1))
        d = self.dec0(F.interpolate(d, size=x.shape[-2:], mode="bilinear", align_corners=False))
        return self.head(d)


class _ASPP(nn.Module):
    def __init__(self, c_in, c_out=256, rates=(6, 12, 18)):
        super().__init__()
        self.branches = nn.ModuleList(
            [nn.Sequential(nn.Conv2d(c_in, c_out, 1, bias=False),
                           nn.BatchNorm2d(c_out), nn.ReLU(inplace=True))]
            + [nn.Sequential(nn.Conv2d(c_in, c_out, 3, padding=r, dilation=r, bias=False),
                             nn.BatchNorm2d(c_out), nn.ReLU(inplace=True))
               for r in rates]
        )
        # no BN on the 1x1 pooled branch (undefined for a single spatial value)
        self.image_pool = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Conv2d(c_in, c_out, 1),
            nn.ReLU(inplace=True),
        )
        self.project = nn.Sequential(
            nn.Conv2d(c_out * (len(rates) + 2), c_out, 1, bias=False),
            nn.BatchNorm2d(c_out),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        outs = [b(x) for b in self.branches]
        pooled = self.image_pool(x)
        outs.append(F.interpolate(pooled, size=x.shape[-2:], mode="bilinear",
                                  align_corners=False))
        return self.project(torch.cat(outs, dim=1))


class DeepLabV3Plus(nn.Module):
    """DeepLabv3+ decoder over ResNet18.

    BasicBlock encoders cannot be dilated, so the deep features sit at output
    stride 32 with correspondingly tighter ASPP rates.
    """

    def __init__(self, pretrained: bool = True):
        super().__init__()
        net = _backbone(pretrained)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.low = net.layer1              # /4, 64
        self.mid = nn.Sequential(net.layer2, net.layer3, net.layer4)  # /32, 512
        self.aspp = _ASPP(512, 256, rates=(3, 6, 9))
        self.low_proj = nn.Sequential(
            nn.Conv2d(64, 48, 1, bias=False), nn.BatchNorm2d(48), nn.ReLU(inplace=True)
        )
        self.decoder = nn.Sequential(
            nn.Conv2d(256 + 48, 256, 3, padding=1, bias=False),
            nn.BatchNorm2d(256), nn.ReLU(inplace=True),
            nn.Conv2d(256, 256, 3, padding=1, bias=False),
            nn.BatchNorm2d(256), nn.ReLU(inplace=True),
        )
        self.head = nn.Conv2d(256, 1, 1)

    def forward(self, x):
        low = self.low(self.stem(x))
        deep = self.aspp(self.mid(low))
        deep = F.interpolate(deep, size=low.shape[-2:], mode="bilinear", align_corners=False)
        d = self.decoder(torch.cat([deep, self.low_proj(low)], dim=1))
        d = F.interpolate(d, size=x.shape[-2:], mode="bilinear", align_corners=False)
        return self.head(d)


def build_model(architecture: str, pretrained: bool = True) -> nn.Module:
    if architecture == "unet":
        return UNet(pretrained=pretrained)
    if architecture == "deeplabv3plus":
        return DeepLabV3Plus(pretrained=pretrained)
    raise ValueError(f"unknown architecture {architecture!r}")
