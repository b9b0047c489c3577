"""Inference HTTP service and its persistent case store."""

from .app import ServiceConfig, create_app, load_service_config
from .store import Case, CaseStore, Triage

__all__ = ["ServiceConfig", "create_app", "load_service_config",
           "Case", "CaseStore", "Triage"]
