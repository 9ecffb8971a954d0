"""Stage helpers shared by the analysis runs and the evaluation harness.

Each helper is a thin composition of the module-level operations; the value
here is that runs and the harness execute the *same* code path, so a replay
store recorded by one is valid for the other.
"""

from __future__ import annotations

from pathlib import Path

from ..catalog import MessageCatalog, SignalCatalog, parse_can_catalog, parse_vss_catalog
from ..errors import ConfigurationError
from ..eventchain import (
    ChainDocument,
    chain_generation_prompt_digest,
    generate_chain,
    parse_activity_diagram,
    to_chain_document,
)
from ..extraction import (
    ExtractionReport,
    build_extraction_retry_prompt,
    code_digest,
    extract_entries,
    parse_extraction_response,
    validate_entries,
)
from ..llm_gateway import CompletionRequest, LlmGateway
from ..retrieval import Chunk, ShortList, build_index, chunk_entries, retrieve_top_k


def read_text(path: str | Path, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigurationError(f"{what} file '{path}' does not exist") from None
    except OSError as exc:
        raise ConfigurationError(f"cannot read {what} file '{path}': {exc}") from exc


def load_catalogs(vss_path: str | Path, can_path: str | Path,
                  ) -> tuple[SignalCatalog, MessageCatalog]:
    signal_catalog = parse_vss_catalog(read_text(vss_path, "VSS catalog"))
    message_catalog = parse_can_catalog(read_text(can_path, "CAN catalog"))
    return signal_catalog, message_catalog


def ground_code(code: str, signal_catalog: SignalCatalog,
                message_catalog: MessageCatalog, top_k: int,
                token_budget: int) -> tuple[ShortList, list[Chunk]]:
    """Retrieve the catalog entries most relevant to the code and chunk them."""
    index = build_index(tuple(signal_catalog.entries) + tuple(message_catalog.entries))
    shortlist = retrieve_top_k(index, code, k=top_k)
    return shortlist, chunk_entries(shortlist, token_budget=token_budget)


def run_extraction(code: str, chunks: list[Chunk], gateway: LlmGateway,
                   signal_catalog: SignalCatalog, message_catalog: MessageCatalog,
                   max_retries: int = 1) -> ExtractionReport:
    """Extract, validate, and re-extract once per allowed retry while entries fail.

    The retry prompt carries the validation feedback; whatever is still
    rejected after the last retry stays in the report — nothing is dropped.
    """
    entries = extract_entries(code, chunks, gateway)
    report = validate_entries(entries, signal_catalog, message_catalog)
    retries = 0
    while report.rejected and retries < max_retries:
        retries += 1
        merged = []
        seen: set[tuple[str, str, str | None]] = set()
        for chunk in chunks:
            prompt = build_extraction_retry_prompt(code, chunk, report.rejected)
            completion = gateway.complete(CompletionRequest(prompt=prompt))
            for entry in parse_extraction_response(completion):
                key = (entry.name, entry.protocol, entry.value)
                if key in seen:
                    continue
                seen.add(key)
                merged.append(entry)
        report = validate_entries(merged, signal_catalog, message_catalog)
    return report


def build_chain(code: str, current_chain: str, accepted, gateway: LlmGateway,
                ) -> tuple[str, ChainDocument]:
    """Generate a diagram for the code and lift it into a chain document."""
    diagram = generate_chain(code, current_chain, accepted, gateway)
    graph = parse_activity_diagram(diagram)
    document = to_chain_document(
        graph,
        source_digest=code_digest(code),
        generation_prompt_digest=chain_generation_prompt_digest(
            code, current_chain, accepted),
    )
    return diagram, document
