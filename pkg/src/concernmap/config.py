"""Pipeline configuration file handling.

The config is a JSON object; command-line flags override its values, and the
gateway endpoints fall back to environment variables when the config leaves
them unset. See the README for the documented format.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .concern_engine import DEFAULT_PRECLUSTER_LIMIT, DEFAULT_SELECT_K, DEFAULT_TOP_N
from .llm_gateway import GatewayConfig, HttpGateway, StubGateway, load_stub_script
from .localization import DEFAULT_ADAPTERS, PromptAdapter


@dataclass
class PipelineConfig:
    gateway_kind: str = "http"
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    stub_script_path: str | None = None
    stub_embed_dim: int = 32
    languages: tuple[str, ...] = ("javascript", "typescript")
    precluster_limit: int = DEFAULT_PRECLUSTER_LIMIT
    select_k: int = DEFAULT_SELECT_K
    top_n: int = DEFAULT_TOP_N
    explain_concurrency: int = 1
    parse_workers: int = 1
    filter_stop_terms: bool = False
    stoplist: tuple[str, ...] = ("value",)
    adapters: dict[str, PromptAdapter] = field(default_factory=lambda: dict(DEFAULT_ADAPTERS))
    base_dir: Path = field(default_factory=Path)


def load_config(path: str | Path | None) -> PipelineConfig:
    config = PipelineConfig()
    if path is None:
        return config
    path = Path(path)
    data = json.loads(path.read_text("utf-8"))
    config.base_dir = path.parent

    gateway = data.get("gateway", {})
    config.gateway_kind = gateway.get("kind", "http")
    if config.gateway_kind == "stub":
        config.stub_script_path = gateway.get("script")
        config.stub_embed_dim = int(gateway.get("embed_dim", 32))
    else:
        config.gateway = GatewayConfig(
            chat_endpoint=gateway.get("chat_endpoint")
            or os.environ.get("CONCERNMAP_CHAT_ENDPOINT", ""),
            embed_endpoint=gateway.get("embed_endpoint")
            or os.environ.get("CONCERNMAP_EMBED_ENDPOINT", ""),
            model_light=gateway.get("model_light", "light-model"),
            model_strong=gateway.get("model_strong", "strong-model"),
            embed_model=gateway.get("embed_model", "embed-model"),
            api_key_env=gateway.get("api_key_env", "CONCERNMAP_API_KEY"),
            max_retries=int(gateway.get("max_retries", 2)),
            rate_limit=float(gateway.get("rate_limit", 0.0)),
            cache_dir=gateway.get("cache_dir"),
            timeout=float(gateway.get("timeout", 60.0)),
            embed_char_budget=int(gateway.get("embed_char_budget", 8000)),
        )

    limits = data.get("limits", {})
    config.precluster_limit = int(limits.get("precluster_limit", config.precluster_limit))
    config.select_k = int(limits.get("select_k", config.select_k))
    config.top_n = int(limits.get("top_n", config.top_n))

    config.languages = tuple(data.get("languages", config.languages))
    config.explain_concurrency = int(data.get("explain_concurrency", 1))
    config.parse_workers = int(data.get("parse_workers", 1))
    config.filter_stop_terms = bool(data.get("filter_stop_terms", False))
    config.stoplist = tuple(data.get("stoplist", config.stoplist))

    for name, spec in data.get("adapters", {}).items():
        config.adapters[name] = PromptAdapter(
            name=name,
            mode=spec.get("mode", "workflow"),
            block_header=spec.get("block_header", ""),
            separator=spec.get("separator", "\n\n"),
        )
    return config


def build_gateway(config: PipelineConfig):
    """Instantiate the configured gateway (stub or HTTP)."""
    if config.gateway_kind == "stub":
        script = None
        if config.stub_script_path:
            script_path = Path(config.stub_script_path)
            if not script_path.is_absolute():
                script_path = config.base_dir / script_path
            script = load_stub_script(script_path)
            if script.embed_dim == 32 and config.stub_embed_dim != 32:
                script.embed_dim = config.stub_embed_dim
        return StubGateway(script)
    return HttpGateway(config.gateway)
