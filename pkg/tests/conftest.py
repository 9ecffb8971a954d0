"""Shared fixtures: repository paths, parsed catalogs, scripted gateways."""

from __future__ import annotations

from pathlib import Path

import pytest

from sdv_guard.catalog import parse_can_catalog, parse_vss_catalog
from sdv_guard.llm_gateway import LlmGateway, ReplayStore

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def vss_text() -> str:
    return (FIXTURES / "catalogs" / "vss.json").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def can_text() -> str:
    return (FIXTURES / "catalogs" / "can.json").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def signal_catalog(vss_text):
    return parse_vss_catalog(vss_text)


@pytest.fixture(scope="session")
def message_catalog(can_text):
    return parse_can_catalog(can_text)


def scripted_gateway(completions, record_prompts=None) -> LlmGateway:
    """Live-mode gateway whose transport pops canned completions in order.

    ``completions`` may also hold callables taking the prompt text, for
    responses that depend on what was asked.
    """
    queue = list(completions)

    def transport(payload: dict) -> dict:
        prompt = payload["messages"][0]["content"]
        if record_prompts is not None:
            record_prompts.append(prompt)
        if not queue:
            raise AssertionError(f"no scripted completion left for: {prompt[:80]}")
        item = queue.pop(0)
        content = item(prompt) if callable(item) else item
        return {"choices": [{"message": {"content": content}}]}

    return LlmGateway(mode="live", transport=transport, base_url="scripted:")


def replay_gateway(store_name: str) -> LlmGateway:
    store = ReplayStore.load(FIXTURES / "replay" / f"{store_name}.json")
    return LlmGateway(mode="replay", store=store)
