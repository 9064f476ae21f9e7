"""Client for the pipeline service.

By default requests are served in-process through an ASGI transport — no
socket, no separate process — so the CLI works out of the box; pass a
server URL to talk to a remote instance instead.  Either way the client
only moves JSON and base64 bytes; all computation happens service-side.
"""
from __future__ import annotations

import asyncio
import base64

import httpx

__all__ = ["ServiceError", "GpzClient", "DEFAULT_TIMEOUT"]

DEFAULT_TIMEOUT = 600.0


class ServiceError(RuntimeError):
    """Non-200 response from the service, with the transported detail."""

    def __init__(self, status_code: int, detail: str):
        self.status_code = status_code
        self.detail = detail
        super().__init__(f"service returned HTTP {status_code}: {detail}")


def encode_artifact(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def decode_artifact(payload: str) -> bytes:
    return base64.b64decode(payload, validate=True)


class GpzClient:
    def __init__(self, server: str | None = None, timeout: float = DEFAULT_TIMEOUT):
        self._server = server.rstrip("/") if server else None
        self._timeout = timeout
        self._app = None

    # --- transport -------------------------------------------------------

    def _ensure_app(self):
        if self._app is None:
            from .service import create_app
            self._app = create_app()
        return self._app

    @staticmethod
    def _unwrap(response: httpx.Response) -> dict:
        if response.status_code != 200:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise ServiceError(response.status_code, str(detail))
        return response.json()

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        if self._server is None:
            return asyncio.run(self._request_local(method, path, payload))
        with httpx.Client(base_url=self._server, timeout=self._timeout) as client:
            return self._unwrap(client.request(method, path, json=payload))

    async def _request_local(self, method: str, path: str, payload: dict | None) -> dict:
        transport = httpx.ASGITransport(app=self._ensure_app())
        async with httpx.AsyncClient(transport=transport, base_url="http://gpzkit.local",
                                     timeout=self._timeout) as client:
            return self._unwrap(await client.request(method, path, json=payload))

    # --- endpoints ---------------------------------------------------------

    def health(self) -> dict:
        return self._request("GET", "/healthz")

    def gen_data(self, k: int, per_class: int, dim: int, spread: float, seed: int) -> dict:
        return self._request("POST", "/v1/gen-data", {
            "k": k, "per_class": per_class, "dim": dim, "spread": spread, "seed": seed,
        })

    def train(self, dataset_b64: str, arch: list[int], scheme: str, epochs: int,
              lr: float, batch: int, seed: int, split_index: int | None = None) -> dict:
        return self._request("POST", "/v1/train", {
            "dataset_b64": dataset_b64, "arch": arch, "scheme": scheme,
            "epochs": epochs, "lr": lr, "batch": batch, "seed": seed,
            "split_index": split_index,
        })

    def dump(self, model_b64: str, dataset_b64: str, layers) -> dict:
        return self._request("POST", "/v1/dump", {
            "model_b64": model_b64, "dataset_b64": dataset_b64, "layers": layers,
        })

    def stats(self, acts_b64: str) -> dict:
        return self._request("POST", "/v1/stats", {"acts_b64": acts_b64})

    def locate(self, acts_b64: str, tau: float) -> dict:
        return self._request("POST", "/v1/locate", {"acts_b64": acts_b64, "tau": tau})

    def bounds(self, acts_b64: str, delta: float, hx: float | None = None,
               bits: bool = False) -> dict:
        return self._request("POST", "/v1/bounds", {
            "acts_b64": acts_b64, "delta": delta, "hx": hx, "bits": bits,
        })

    def dynamics(self, model_b64: str, dataset_b64: str, layer: int, scheme: str,
                 gamma: float) -> dict:
        return self._request("POST", "/v1/dynamics", {
            "model_b64": model_b64, "dataset_b64": dataset_b64, "layer": layer,
            "scheme": scheme, "gamma": gamma,
        })

    def invert(self, model_b64: str, dataset_b64: str, layers, hidden: list[int],
               epochs: int, lr: float, batch: int, aux_fraction: float, seed: int) -> dict:
        return self._request("POST", "/v1/invert", {
            "model_b64": model_b64, "dataset_b64": dataset_b64, "layers": layers,
            "hidden": hidden, "epochs": epochs, "lr": lr, "batch": batch,
            "aux_fraction": aux_fraction, "seed": seed,
        })

    def cost(self, model_b64: str, split_index: int | None, precisions: list[str],
             measurement: dict | None = None) -> dict:
        return self._request("POST", "/v1/cost", {
            "model_b64": model_b64, "split_index": split_index,
            "precisions": precisions, "measurement": measurement,
        })

    def pipeline(self, **config) -> dict:
        return self._request("POST", "/v1/pipeline", config)
