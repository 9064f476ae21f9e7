"""Request/response bodies for the HTTP service.

Binary artifacts (datasets, models, activation dumps) travel as base64
strings inside JSON bodies; reports travel as plain JSON objects whose key
order is produced — and preserved — by the report builders, so a client
can re-serialize them byte-identically.  Unknown request fields are
rejected rather than ignored.
"""
from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field

LayerSelector = Literal["all"] | list[int]


class _Request(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GenDataRequest(_Request):
    k: int = Field(ge=1, description="number of classes")
    per_class: int = Field(ge=2, description="samples per class")
    dim: int = Field(ge=1, description="input dimension")
    spread: float = Field(ge=0.0, description="per-coordinate noise scale")
    seed: int = 0


class GenDataResponse(BaseModel):
    dataset_b64: str
    b: int
    d0: int
    k: int


class TrainRequest(_Request):
    dataset_b64: str
    arch: list[int] = Field(min_length=1, description="hidden layer widths")
    scheme: str = "onehot"
    epochs: int = Field(default=200, ge=0)
    lr: float = Field(default=0.01, ge=0.0)
    batch: int = Field(default=32, ge=1)
    seed: int = 0
    split_index: int | None = Field(default=None, ge=0)


class TrainResponse(BaseModel):
    model_b64: str
    final_loss: float | None
    final_accuracy: float | None
    loss_curve: list[float]


class DumpRequest(_Request):
    model_b64: str
    dataset_b64: str
    layers: LayerSelector = "all"


class DumpResponse(BaseModel):
    acts_b64: str
    layer_names: list[str]
    b: int
    k: int


class StatsRequest(_Request):
    acts_b64: str


class LocateRequest(_Request):
    acts_b64: str
    tau: float = Field(default=0.20, gt=0.0, le=1.0)


class BoundsRequest(_Request):
    acts_b64: str
    delta: float = Field(default=2.0 ** -10, gt=0.0)
    hx: float | None = None
    bits: bool = False


class DynamicsRequest(_Request):
    model_b64: str
    dataset_b64: str
    layer: int = Field(ge=0, description="state index with a logit Jacobian")
    scheme: str = "onehot"
    gamma: float = Field(default=0.01)


class InvertRequest(_Request):
    model_b64: str
    dataset_b64: str
    layers: LayerSelector = "all"
    hidden: list[int] = Field(default=[64], min_length=1)
    epochs: int = Field(default=600, ge=0)
    lr: float = Field(default=0.2, ge=0.0)
    batch: int = Field(default=16, ge=1)
    aux_fraction: float = Field(default=0.7, gt=0.0, lt=1.0)
    seed: int = 0


class CostRequest(_Request):
    model_b64: str
    split_index: int | None = Field(default=None, ge=0,
                                    description="defaults to the model's stored split")
    precisions: list[str] = Field(default=["fp32", "fp16", "int8"], min_length=1)
    measurement: dict[str, float] | None = None


class PipelineRequest(_Request):
    seed: int = 0
    k: int = Field(default=4, ge=1)
    per_class: int = Field(default=250, ge=2)
    dim: int = Field(default=16, ge=1)
    spread: float = Field(default=0.05, ge=0.0)
    arch: list[int] = Field(default=[32, 32, 16, 8], min_length=1)
    scheme: str = "onehot"
    epochs: int = Field(default=200, ge=0)
    lr: float = Field(default=0.01, ge=0.0)
    batch: int = Field(default=32, ge=1)
    tau: float = Field(default=0.20, gt=0.0, le=1.0)
    delta: float = Field(default=2.0 ** -10, gt=0.0)
    gamma: float = Field(default=0.01)
    dyn_layer: int | None = Field(default=None, ge=0)
    split: int | None = Field(default=None, ge=0)
    decoder_hidden: list[int] = Field(default=[64], min_length=1)
    decoder_epochs: int = Field(default=600, ge=0)
    decoder_lr: float = Field(default=0.2, ge=0.0)
    decoder_batch: int = Field(default=16, ge=1)
    aux_fraction: float = Field(default=0.7, gt=0.0, lt=1.0)
    precisions: list[str] = Field(default=["fp32", "fp16", "int8"], min_length=1)
    stability_evals: int = Field(default=3, ge=2)
    measurement: dict[str, float] | None = None


class ReportResponse(BaseModel):
    report: dict[str, Any]


class PipelineResponse(BaseModel):
    reports: dict[str, dict[str, Any]]
    dataset_b64: str
    model_b64: str
    acts_b64: str


class HealthResponse(BaseModel):
    status: str
    version: str
