"""FastAPI application: one endpoint per pipeline stage.

The service owns all computation; clients (including the bundled CLI) only
move bytes.  Domain failures — malformed artifacts, violated preconditions,
training divergence — map to HTTP 400 with the underlying message; schema
violations are rejected by pydantic as 422 before handlers run.
"""
from __future__ import annotations

import base64
import binascii
from contextlib import contextmanager

from fastapi import FastAPI, HTTPException

from .. import __version__, reports, tensor_io
from ..inversion import DecoderConfig
from ..micronet import TargetScheme, TrainingDiverged, extract, init_model, train
from ..datagen import gaussian_mixture
from .schemas import (
    BoundsRequest,
    CostRequest,
    DumpRequest,
    DumpResponse,
    DynamicsRequest,
    GenDataRequest,
    GenDataResponse,
    HealthResponse,
    InvertRequest,
    LocateRequest,
    PipelineRequest,
    PipelineResponse,
    ReportResponse,
    StatsRequest,
    TrainRequest,
    TrainResponse,
)

__all__ = ["app", "create_app"]


def _decode(fieldname: str, payload: str) -> bytes:
    try:
        return base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(status_code=400, detail=f"{fieldname}: invalid base64") from None


def _encode(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


@contextmanager
def _domain_guard():
    """Convert domain errors into 400s; anything else stays a 500."""
    try:
        yield
    except HTTPException:
        raise
    except (tensor_io.ParseError, TrainingDiverged, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def create_app() -> FastAPI:
    app = FastAPI(
        title="gpzkit",
        version=__version__,
        description="Split-network representation analysis pipeline over HTTP.",
    )

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/v1/gen-data", response_model=GenDataResponse)
    def gen_data(req: GenDataRequest) -> GenDataResponse:
        with _domain_guard():
            dataset = gaussian_mixture(req.k, req.per_class, req.dim, req.spread, req.seed)
            return GenDataResponse(
                dataset_b64=_encode(tensor_io.dumps_gpzd(dataset)),
                b=dataset.b, d0=dataset.d0, k=dataset.k,
            )

    @app.post("/v1/train", response_model=TrainResponse)
    def train_model(req: TrainRequest) -> TrainResponse:
        with _domain_guard():
            dataset = tensor_io.loads_gpzd(_decode("dataset_b64", req.dataset_b64))
            scheme = TargetScheme.parse(req.scheme)
            model = init_model([dataset.d0, *req.arch], dataset.k, seed=req.seed,
                               split_index=req.split_index)
            result = train(model, dataset, scheme, epochs=req.epochs, lr=req.lr,
                           batch=req.batch, seed=req.seed)
            return TrainResponse(
                model_b64=_encode(tensor_io.dumps_gpzm(result.model)),
                final_loss=result.loss_curve[-1] if result.loss_curve else None,
                final_accuracy=result.final_accuracy,
                loss_curve=result.loss_curve,
            )

    @app.post("/v1/dump", response_model=DumpResponse)
    def dump(req: DumpRequest) -> DumpResponse:
        with _domain_guard():
            model = tensor_io.loads_gpzm(_decode("model_b64", req.model_b64))
            dataset = tensor_io.loads_gpzd(_decode("dataset_b64", req.dataset_b64))
            acts = extract(model, dataset, req.layers)
            return DumpResponse(
                acts_b64=_encode(tensor_io.dumps_gpza(acts)),
                layer_names=acts.layer_names,
                b=int(acts.labels.shape[0]), k=acts.k,
            )

    @app.post("/v1/stats", response_model=ReportResponse)
    def stats(req: StatsRequest) -> ReportResponse:
        with _domain_guard():
            acts = tensor_io.loads_gpza(_decode("acts_b64", req.acts_b64))
            return ReportResponse(report=tensor_io.sanitize_json(reports.stats_report(acts)))

    @app.post("/v1/locate", response_model=ReportResponse)
    def locate(req: LocateRequest) -> ReportResponse:
        with _domain_guard():
            acts = tensor_io.loads_gpza(_decode("acts_b64", req.acts_b64))
            return ReportResponse(report=tensor_io.sanitize_json(reports.gpz_report(acts, req.tau)))

    @app.post("/v1/bounds", response_model=ReportResponse)
    def bounds(req: BoundsRequest) -> ReportResponse:
        with _domain_guard():
            acts = tensor_io.loads_gpza(_decode("acts_b64", req.acts_b64))
            report = reports.bounds_report(acts, req.delta, hx=req.hx, bits=req.bits)
            return ReportResponse(report=tensor_io.sanitize_json(report))

    @app.post("/v1/dynamics", response_model=ReportResponse)
    def dynamics(req: DynamicsRequest) -> ReportResponse:
        with _domain_guard():
            model = tensor_io.loads_gpzm(_decode("model_b64", req.model_b64))
            dataset = tensor_io.loads_gpzd(_decode("dataset_b64", req.dataset_b64))
            report = reports.dynamics_report(model, dataset, req.layer,
                                             TargetScheme.parse(req.scheme), req.gamma)
            return ReportResponse(report=tensor_io.sanitize_json(report))

    @app.post("/v1/invert", response_model=ReportResponse)
    def invert(req: InvertRequest) -> ReportResponse:
        with _domain_guard():
            model = tensor_io.loads_gpzm(_decode("model_b64", req.model_b64))
            dataset = tensor_io.loads_gpzd(_decode("dataset_b64", req.dataset_b64))
            config = DecoderConfig(hidden=tuple(req.hidden), epochs=req.epochs,
                                   lr=req.lr, batch=req.batch,
                                   aux_fraction=req.aux_fraction)
            report = reports.inversion_report(model, dataset, req.layers, config, req.seed)
            return ReportResponse(report=tensor_io.sanitize_json(report))

    @app.post("/v1/cost", response_model=ReportResponse)
    def cost(req: CostRequest) -> ReportResponse:
        with _domain_guard():
            model = tensor_io.loads_gpzm(_decode("model_b64", req.model_b64))
            split = req.split_index if req.split_index is not None else model.split_index
            report = reports.cost_report(model, split, req.precisions, req.measurement)
            return ReportResponse(report=tensor_io.sanitize_json(report))

    @app.post("/v1/pipeline", response_model=PipelineResponse)
    def pipeline(req: PipelineRequest) -> PipelineResponse:
        with _domain_guard():
            cfg = reports.PipelineConfig(
                seed=req.seed, k=req.k, per_class=req.per_class, dim=req.dim,
                spread=req.spread, arch=tuple(req.arch), scheme=req.scheme,
                epochs=req.epochs, lr=req.lr, batch=req.batch, tau=req.tau,
                delta=req.delta, gamma=req.gamma, dyn_layer=req.dyn_layer,
                split=req.split,
                decoder=DecoderConfig(hidden=tuple(req.decoder_hidden),
                                      epochs=req.decoder_epochs, lr=req.decoder_lr,
                                      batch=req.decoder_batch,
                                      aux_fraction=req.aux_fraction),
                precisions=tuple(req.precisions),
                stability_evals=req.stability_evals,
                measurement=req.measurement,
            )
            result = reports.run_pipeline(cfg)
            return PipelineResponse(
                reports={name: tensor_io.sanitize_json(rep)
                         for name, rep in result.reports.items()},
                dataset_b64=_encode(result.dataset_bytes),
                model_b64=_encode(result.model_bytes),
                acts_b64=_encode(result.acts_bytes),
            )

    return app


app = create_app()
