"""Analyst backends: a deterministic playbook provider and a remote chat-model provider."""

from .base import (
    ExtractionFailure,
    FindingSummary,
    InvestigationContext,
    Provider,
    ProviderCall,
    ProviderConfigError,
    ProviderContractError,
    ProviderError,
    ProviderOutputError,
    Selection,
)
from .scripted import PlaybookError, ScriptedProvider, default_playbook_path, load_playbook


def make_provider(settings: dict, taxonomy, atomic_cap: int = 3) -> Provider:
    """Build a provider from the ``provider`` section of a run config."""
    kind = settings.get("kind", "scripted")
    repairs = int(settings.get("max_repairs", 2))
    if kind == "scripted":
        return ScriptedProvider(taxonomy, settings.get("playbook"), max_repairs=repairs, atomic_cap=atomic_cap)
    if kind == "remote":
        from .remote import RemoteProvider

        for key in ("endpoint", "model"):
            if not settings.get(key):
                raise ProviderConfigError(f"remote provider needs provider.{key}")
        return RemoteProvider(
            taxonomy,
            endpoint=settings["endpoint"],
            model=settings["model"],
            api_key_env=settings.get("api_key_env", "DISARMLAB_API_KEY"),
            timeout=float(settings.get("timeout", 120.0)),
            max_repairs=repairs,
            atomic_cap=atomic_cap,
        )
    raise ProviderConfigError(f"unknown provider kind {kind!r}")


__all__ = [
    "ExtractionFailure", "FindingSummary", "InvestigationContext", "PlaybookError", "Provider",
    "ProviderCall", "ProviderConfigError", "ProviderContractError", "ProviderError", "ProviderOutputError",
    "ScriptedProvider", "Selection", "default_playbook_path", "load_playbook", "make_provider",
]
