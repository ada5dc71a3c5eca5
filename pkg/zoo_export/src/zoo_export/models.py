"""The supported model families.

Six come straight from torchvision. ResNet56 is the CIFAR variant (three
stages of nine basic blocks at 16/32/64 channels) which torchvision does not
ship, so it is defined here with 1x1-conv shortcuts at the two stage
transitions.

Without ``pretrained`` every build is seeded, so exporting the same family
twice produces bit-identical weights and therefore an identical archive
checksum.
"""

import torch
from torch import nn

import torchvision.models as tvm


class UnsupportedModelError(ValueError):
    """Requested model is not one of the exportable families."""


class _CifarBlock(nn.Module):
    def __init__(self, cin: int, cout: int, stride: int):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.relu1 = nn.ReLU()
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.relu2 = nn.ReLU()
        self.down = None
        if stride != 1 or cin != cout:
            self.down = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride=stride, bias=False),
                nn.BatchNorm2d(cout))

    def forward(self, x):
        identity = x if self.down is None else self.down(x)
        y = self.relu1(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        return self.relu2(y + identity)


class ResNet56(nn.Module):
    """CIFAR-style 56-layer residual network (9 blocks per stage)."""

    def __init__(self, num_classes: int = 10):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 16, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(16)
        self.relu = nn.ReLU()
        self.layer1 = self._stage(16, 16, stride=1)
        self.layer2 = self._stage(16, 32, stride=2)
        self.layer3 = self._stage(32, 64, stride=2)
        self.avgpool = nn.AdaptiveAvgPool2d((1, 1))
        self.fc = nn.Linear(64, num_classes)

    @staticmethod
    def _stage(cin: int, cout: int, stride: int) -> nn.Sequential:
        blocks = [_CifarBlock(cin, cout, stride)]
        blocks += [_CifarBlock(cout, cout, 1) for _ in range(8)]
        return nn.Sequential(*blocks)

    def forward(self, x):
        x = self.relu(self.bn1(self.conv1(x)))
        x = self.layer3(self.layer2(self.layer1(x)))
        x = self.avgpool(x)
        x = torch.flatten(x, 1)
        return self.fc(x)


_IMAGENET = (3, 224, 224)
_CIFAR = (3, 32, 32)

_FAMILIES = {
    "densenet121": (tvm.densenet121, _IMAGENET),
    "mobilenet_v2": (tvm.mobilenet_v2, _IMAGENET),
    "resnet18": (tvm.resnet18, _IMAGENET),
    "resnet50": (tvm.resnet50, _IMAGENET),
    "resnet56": (None, _CIFAR),
    "resnet101": (tvm.resnet101, _IMAGENET),
    "vgg16": (tvm.vgg16, _IMAGENET),
}

SUPPORTED_MODELS = tuple(sorted(_FAMILIES))


def _settle_batch_norms(model: nn.Module, shape: tuple[int, int, int],
                        seed: int) -> None:
    """Estimate batch-norm running stats from seeded noise batches.

    Freshly initialized models keep mean=0/var=1 running stats that bear no
    relation to their actual activation statistics, so deep stacks amplify
    magnitudes layer over layer until float32 runs out of digits. A few
    train-mode passes with momentum=None (cumulative averaging) settle the
    stats the way any trained checkpoint would have them.
    """
    norms = [m for m in model.modules()
             if isinstance(m, nn.modules.batchnorm._BatchNorm)]
    if not norms:
        return
    saved = [m.momentum for m in norms]
    for m in norms:
        m.momentum = None
    gen = torch.Generator().manual_seed(seed + 0x5EED)
    model.train()
    with torch.no_grad():
        for _ in range(4):
            model(torch.randn(8, *shape, generator=gen))
    model.eval()
    for m, momentum in zip(norms, saved):
        m.momentum = momentum


def build_model(name: str, seed: int = 0,
                pretrained: bool = False) -> tuple[nn.Module, tuple[int, int, int]]:
    """Construct an eval-mode model and its single-image input shape."""
    if name not in _FAMILIES:
        raise UnsupportedModelError(
            f"unknown model {name!r}; supported families: "
            + ", ".join(SUPPORTED_MODELS))
    ctor, shape = _FAMILIES[name]
    torch.manual_seed(seed)  # deterministic weights when no zoo download
    if name == "resnet56":
        if pretrained:
            raise UnsupportedModelError(
                "resnet56 has no packaged pretrained weights; "
                "load a state dict into the exported archive instead")
        model = ResNet56()
    else:
        model = ctor(weights="DEFAULT" if pretrained else None)
    model = model.eval()
    if not pretrained:
        _settle_batch_norms(model, shape, seed)
    for p in model.parameters():
        p.requires_grad_(False)
    return model, shape
