"""The two embedding networks.

Each extractor is an ImageNet classifier whose 1000-logit head supplies the
feature vector. The weight policy is part of the configuration: "pretrained"
loads published weights (unavailable weights are a configuration error, not
a silent fallback), "random" uses a seeded initialization for fully offline,
reproducible runs; either choice is recorded in the output metadata.
"""

from __future__ import annotations

import numpy as np
import torch

from .errors import ExporterConfigError, ExporterError

EXPECTED_FEATURES = 1000
INPUT_SIZE = 224
_IMAGENET_MEAN = np.array([0.485, 0.456, 0.406])
_IMAGENET_STD = np.array([0.229, 0.224, 0.225])

WEIGHT_POLICIES = ("pretrained", "random")


def _build_resnet18(pretrained: bool):
    from torchvision.models import ResNet18_Weights, resnet18

    return resnet18(weights=ResNet18_Weights.IMAGENET1K_V1 if pretrained else None)


def _build_resnet34(pretrained: bool):
    from torchvision.models import ResNet34_Weights, resnet34

    return resnet34(weights=ResNet34_Weights.IMAGENET1K_V1 if pretrained else None)


# name -> (builder, output layer description used in error messages)
MODEL_BUILDERS = {
    "resnet18": (_build_resnet18, "fc"),
    "resnet34": (_build_resnet34, "fc"),
}


class Extractor:
    """One network plus the preprocessing that feeds it."""

    def __init__(self, name: str, weights: str, seed: int, device: str):
        if name not in MODEL_BUILDERS:
            raise ExporterConfigError(
                f"unknown model {name!r}; available: {', '.join(sorted(MODEL_BUILDERS))}"
            )
        if weights not in WEIGHT_POLICIES:
            raise ExporterConfigError(
                f"unknown weight policy {weights!r}; use one of {WEIGHT_POLICIES}"
            )
        builder, self.head = MODEL_BUILDERS[name]
        self.name = name
        self.weights = weights
        torch.manual_seed(seed)
        try:
            model = builder(pretrained=weights == "pretrained")
        except Exception as exc:
            raise ExporterConfigError(
                f"weights for {name} unavailable: {exc}"
            ) from exc
        self.device = torch.device(device)
        self.model = model.to(self.device).eval()

    def describe(self) -> str:
        return f"{self.name}:{self.weights}"

    def batch_features(self, planes: list[np.ndarray]) -> np.ndarray:
        """(len(planes), 1000) float32 from [0, 255] float RGB planes."""
        tensors = []
        for plane in planes:
            t = torch.from_numpy(np.ascontiguousarray(plane / 255.0)).permute(2, 0, 1)
            t = torch.nn.functional.interpolate(
                t.unsqueeze(0).to(torch.float32),
                size=(INPUT_SIZE, INPUT_SIZE),
                mode="bilinear",
                align_corners=False,
            ).squeeze(0)
            tensors.append(t)
        batch = torch.stack(tensors)
        mean = torch.tensor(_IMAGENET_MEAN, dtype=torch.float32).view(1, 3, 1, 1)
        std = torch.tensor(_IMAGENET_STD, dtype=torch.float32).view(1, 3, 1, 1)
        batch = ((batch - mean) / std).to(self.device)
        with torch.no_grad():
            out = self.model(batch)
        features = out.detach().cpu().numpy().astype(np.float32)
        if features.ndim != 2 or features.shape[1] != EXPECTED_FEATURES:
            raise ExporterError(
                f"{self.name} layer {self.head!r}: expected {EXPECTED_FEATURES} "
                f"features, got {features.shape[1:]}"
            )
        return features
