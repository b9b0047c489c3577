"""HTTP inference service: prediction, CAM overlays, triage queue.

JSON over HTTP; uploads are multipart.  Inference runs eval-mode over a
shared read-only checkpoint and is serialized through one worker lock, which
keeps memory bounded on the single-node deployments this targets.
"""

from __future__ import annotations

import io
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from fastapi import Depends, FastAPI, File, Form, Header, HTTPException, Query, UploadFile
from fastapi.responses import JSONResponse, Response
from PIL import Image, UnidentifiedImageError

from ..cam import class_index, grad_cam, render_overlay
from ..errors import InvalidClass
from ..evaluation import pipeline_config_for
from ..manifest import CLASS_ORDER
from ..models import (AuxKind, DeepCXRNet, checkpoint_version, constant_aux,
                      load_checkpoint, model_from_checkpoint)
from ..preprocess import Mode, PreprocessConfig, run_pipeline
from .store import Case, CaseStore, Triage

log = logging.getLogger("covidscreen.service")

MODALITIES = ("ct", "cxr")


@dataclass
class ServiceConfig:
    store_dir: str = "covidscreen-store"
    ct_checkpoint: Optional[str] = None
    cxr_checkpoint: Optional[str] = None
    api_token: Optional[str] = None
    port: int = 8000
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)


def load_service_config(path: str | Path | None = None,
                        env: Optional[dict] = None) -> ServiceConfig:
    """Config file (JSON) with environment overrides."""
    env = dict(os.environ if env is None else env)
    data: dict = {}
    if path is not None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    cfg = ServiceConfig(
        store_dir=data.get("store_dir", "covidscreen-store"),
        ct_checkpoint=data.get("ct_checkpoint"),
        cxr_checkpoint=data.get("cxr_checkpoint"),
        api_token=data.get("api_token"),
        port=int(data.get("port", 8000)),
    )
    cfg.store_dir = env.get("COVIDSCREEN_STORE", cfg.store_dir)
    cfg.ct_checkpoint = env.get("COVIDSCREEN_CT_CKPT", cfg.ct_checkpoint)
    cfg.cxr_checkpoint = env.get("COVIDSCREEN_CXR_CKPT", cfg.cxr_checkpoint)
    cfg.api_token = env.get("COVIDSCREEN_API_TOKEN", cfg.api_token)
    cfg.port = int(env.get("COVIDSCREEN_PORT", cfg.port))
    return cfg


class LoadedModel:
    def __init__(self, model, version: str, preprocess: PreprocessConfig):
        self.model = model
        self.version = version
        self.preprocess = preprocess


class ServiceState:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.store = CaseStore(config.store_dir)
        self.models: dict[str, LoadedModel] = {}
        self.inference_lock = threading.Lock()
        if config.ct_checkpoint:
            self.load_model("ct", config.ct_checkpoint)
        if config.cxr_checkpoint:
            self.load_model("cxr", config.cxr_checkpoint)

    def load_model(self, modality: str, checkpoint_path: str) -> str:
        checkpoint = load_checkpoint(checkpoint_path)
        model = model_from_checkpoint(checkpoint)
        if isinstance(model, DeepCXRNet):
            # Demo auxiliaries unless real extractor checkpoints are wired in.
            model.attach_aux(AuxKind.CHEXPERT6, constant_aux([0.5] * 6))
            model.attach_aux(AuxKind.PNEUMONIA2, constant_aux([0.5] * 2))
        version = checkpoint_version(checkpoint_path)
        self.models[modality] = LoadedModel(model, version,
                                            pipeline_config_for(checkpoint))
        log.info("loaded %s model %s from %s", modality, version, checkpoint_path)
        return version


def _decode_upload(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError):
        raise HTTPException(status_code=400, detail="file is not a decodable image")


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    state = ServiceState(config or ServiceConfig())
    app = FastAPI(title="covidscreen", version="0.1.0")
    app.state.service = state

    def check_token(x_api_token: Optional[str] = Header(default=None)) -> None:
        expected = state.config.api_token
        if expected and x_api_token != expected:
            raise HTTPException(status_code=401, detail="missing or invalid API token")

    guarded = [Depends(check_token)]

    def run_inference(image: np.ndarray, modality: str):
        loaded = state.models[modality]
        tensor = run_pipeline(image, Mode.EVAL, cfg=loaded.preprocess).values
        batch = torch.from_numpy(np.transpose(tensor, (2, 0, 1))[None]).float()
        with state.inference_lock, torch.no_grad():
            predictions = loaded.model.predict(batch)
        return predictions[0], loaded.version

    @app.get("/v1/health")
    def health():
        models = {m: state.models[m].version if m in state.models else None
                  for m in MODALITIES}
        status = "ok" if state.models else "degraded"
        return {"status": status, "models": models}

    @app.post("/v1/predict", dependencies=guarded)
    async def predict(image: UploadFile = File(...), modality: str = Form(...)):
        modality = modality.lower()
        if modality not in MODALITIES:
            raise HTTPException(status_code=422,
                                detail=f"unsupported modality {modality!r}")
        if modality not in state.models:
            raise HTTPException(status_code=503,
                                detail=f"no {modality} model loaded")
        data = await image.read()
        decoded = _decode_upload(data)
        prediction, version = run_inference(decoded, modality)

        if 1 < len(prediction.probabilities) <= len(CLASS_ORDER):
            probs = {label.value: p for label, p in
                     zip(CLASS_ORDER, prediction.probabilities)}
        else:
            probs = {"covid19": prediction.probabilities[0]}
        sha = state.store.store_blob(data)
        case = state.store.new_case(sha, modality, probs,
                                    prediction.label_name, version)
        return {
            "case_id": case.case_id,
            "modality": modality,
            "probabilities": probs,
            "predicted_label": prediction.label_name,
            "model_version": version,
        }

    @app.get("/v1/cases", dependencies=guarded)
    def list_cases(triage: Optional[str] = None, limit: int = 50, offset: int = 0):
        if triage is not None:
            try:
                Triage(triage)
            except ValueError:
                raise HTTPException(status_code=422,
                                    detail=f"invalid triage filter {triage!r}")
        cases = state.store.list_cases(triage, limit, offset)
        return {"cases": [c.to_json() for c in cases],
                "limit": limit, "offset": offset}

    @app.get("/v1/cases/{case_id}", dependencies=guarded)
    def get_case(case_id: str):
        case = state.store.get_case(case_id)
        if case is None:
            raise HTTPException(status_code=404, detail="unknown case")
        return case.to_json()

    @app.get("/v1/cases/{case_id}/cam", dependencies=guarded)
    def case_cam(case_id: str,
                 target: str = Query(default="covid19", alias="class"),
                 alpha: float = Query(default=0.4)):
        case = state.store.get_case(case_id)
        if case is None:
            raise HTTPException(status_code=404, detail="unknown case")
        if not 0.0 <= alpha <= 1.0:
            raise HTTPException(status_code=422, detail="alpha must be in [0, 1]")
        if case.modality not in state.models:
            raise HTTPException(status_code=503,
                                detail=f"no {case.modality} model loaded")
        loaded = state.models[case.modality]
        try:
            index = class_index(loaded.model, target)
        except InvalidClass as exc:
            raise HTTPException(status_code=422, detail=str(exc))

        cache = state.store.cam_cache_path(case_id, f"c{index}", alpha,
                                           loaded.version)
        if not cache.exists():
            image = _decode_upload(state.store.blob_bytes(case.image_sha))
            tensor = run_pipeline(image, Mode.EVAL, cfg=loaded.preprocess).values
            batch = torch.from_numpy(np.transpose(tensor, (2, 0, 1))[None]).float()
            with state.inference_lock:
                result = grad_cam(loaded.model, batch, index,
                                  source_id=case.case_id)
            overlay = render_overlay(image, result, alpha)
            buffer = io.BytesIO()
            Image.fromarray(overlay, mode="RGB").save(buffer, format="PNG")
            cache.write_bytes(buffer.getvalue())
        return Response(content=cache.read_bytes(), media_type="image/png")

    @app.post("/v1/cases/{case_id}/triage", dependencies=guarded)
    def triage_case(case_id: str, payload: dict):
        decision = payload.get("decision", "")
        try:
            Triage(decision)
        except ValueError:
            raise HTTPException(status_code=422,
                                detail=f"invalid triage decision {decision!r}")
        case = state.store.set_triage(case_id, decision,
                                      payload.get("note", ""))
        if case is None:
            raise HTTPException(status_code=404, detail="unknown case")
        return case.to_json()

    @app.post("/v1/admin/reload", dependencies=guarded)
    def reload_model(payload: dict):
        modality = str(payload.get("modality", "")).lower()
        checkpoint = payload.get("checkpoint")
        if modality not in MODALITIES:
            raise HTTPException(status_code=422,
                                detail=f"unsupported modality {modality!r}")
        if not checkpoint or not Path(checkpoint).exists():
            raise HTTPException(status_code=400,
                                detail=f"checkpoint not found: {checkpoint}")
        version = state.load_model(modality, checkpoint)
        return {"modality": modality, "model_version": version}

    return app
