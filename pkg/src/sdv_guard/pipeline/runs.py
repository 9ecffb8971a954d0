"""End-to-end analysis runs and their on-disk records.

A run writes every intermediate artifact under an output directory and
finishes with ``run.json``: configuration echo, per-iteration verdicts, and
a digest for every artifact file. Artifact files themselves are
deterministic — rerunning the same inputs in replay mode reproduces them
byte for byte; wall-clock timestamps appear only inside ``run.json``.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..catalog import parse_can_catalog, parse_vss_catalog
from ..errors import (
    ConfigurationError,
    PipelineError,
    SdvGuardError,
)
from ..eventchain import serialize_chain, strip_fences
from ..extraction import ExtractionReport
from ..llm_gateway import LlmGateway
from ..safety_rules import (
    SafetyReport,
    check,
    parse_rules,
    render_report,
    suggest_correction,
)
from ..topology import (
    InstanceModel,
    Metamodel,
    TopologyReport,
    conform,
    correct_instance,
    default_metamodel,
    eval_constraints,
    export_class_diagram,
    generate_constraints,
    generate_instance,
    import_class_diagram,
    parse_constraints,
    parse_instance,
    render_topology_report,
    serialize_instance,
)
from ..util import sha256_bytes
from .config import PipelineConfig
from .stages import build_chain, ground_code, read_text, run_extraction

VERDICT_PASS = "pass"
VERDICT_VIOLATED = "violated"


def _extract_code(completion: str) -> str:
    """Corrected code from a completion: the first fenced block when present,
    otherwise the whole text with any stray fence lines dropped."""
    lines = completion.splitlines()
    fences = [i for i, line in enumerate(lines) if line.lstrip().startswith("```")]
    if len(fences) >= 2:
        return "\n".join(lines[fences[0] + 1:fences[1]])
    return strip_fences(completion)


# ---------------------------------------------------------------------------
# run records


@dataclass
class RunRecord:
    kind: str
    verdict: str = ""
    started_at: str = ""
    finished_at: str = ""
    config: dict = field(default_factory=dict)
    iterations: list[dict] = field(default_factory=list)
    artifacts: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "config": self.config,
            "iterations": self.iterations,
            "artifacts": self.artifacts,
        }


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _config_echo(config: PipelineConfig) -> dict:
    return {
        "top_k": config.top_k,
        "token_budget": config.token_budget,
        "max_iterations": config.max_iterations,
        "max_extraction_retries": config.max_extraction_retries,
        "mode": config.mode,
        "model": config.model,
    }


class _ArtifactWriter:
    """Writes artifact files and tracks their digests for the run record."""

    def __init__(self, out_dir: str | Path, record: RunRecord):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.record = record

    def write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        data = text.encode("utf-8")
        path.write_bytes(data)
        self.record.artifacts[name] = {"path": name, "sha256": sha256_bytes(data)}
        return path

    def finish(self) -> Path:
        self.record.finished_at = _now()
        path = self.out_dir / "run.json"
        path.write_text(
            json.dumps(self.record.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return path


def load_run_record(out_dir: str | Path) -> RunRecord:
    path = Path(out_dir) / "run.json"
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"no run record at '{path}'") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"run record '{path}' is not valid JSON: {exc}") from exc
    record = RunRecord(kind=raw.get("kind", ""))
    record.verdict = raw.get("verdict", "")
    record.started_at = raw.get("started_at", "")
    record.finished_at = raw.get("finished_at", "")
    record.config = raw.get("config", {})
    record.iterations = raw.get("iterations", [])
    record.artifacts = raw.get("artifacts", {})
    return record


def verify_artifacts(record: RunRecord, out_dir: str | Path) -> list[str]:
    """Recompute every artifact digest; returns the names that do not match."""
    out_dir = Path(out_dir)
    mismatched: list[str] = []
    for name, meta in sorted(record.artifacts.items()):
        path = out_dir / meta["path"]
        try:
            digest = sha256_bytes(path.read_bytes())
        except FileNotFoundError:
            mismatched.append(name)
            continue
        if digest != meta["sha256"]:
            mismatched.append(name)
    return mismatched


# ---------------------------------------------------------------------------
# safety run


@dataclass(frozen=True)
class SafetyIteration:
    index: int
    extraction: ExtractionReport
    diagram: str
    safety: SafetyReport
    corrected_code: str | None


@dataclass(frozen=True)
class SafetyRunResult:
    verdict: str
    iterations: tuple[SafetyIteration, ...]
    final_code: str
    out_dir: Path

    @property
    def final_report(self) -> SafetyReport:
        return self.iterations[-1].safety


def run_safety_pipeline(code: str, vss_text: str, can_text: str, rules_text: str,
                        gateway: LlmGateway, config: PipelineConfig,
                        out_dir: str | Path | None = None,
                        auto_correct: bool = False) -> SafetyRunResult:
    """Extract, build the event chain, check it, optionally iterate on fixes.

    Each iteration re-runs grounding and extraction on the current code and
    regenerates the chain with the previous diagram as context. Correction
    is only attempted while iterations remain; the last report stands either
    way. Every stage failure is wrapped in PipelineError naming the stage,
    with the partial run record attached.
    """
    record = RunRecord(kind="safety", started_at=_now(), config=_config_echo(config))
    writer = _ArtifactWriter(out_dir or config.out_dir, record)

    def _stage(stage: str, fn):
        try:
            return fn()
        except SdvGuardError as exc:
            record.verdict = "error"
            writer.finish()
            raise PipelineError(stage, exc, record=record) from exc

    signal_catalog = _stage("catalog", lambda: parse_vss_catalog(vss_text))
    message_catalog = _stage("catalog", lambda: parse_can_catalog(can_text))
    ruleset = _stage("rules", lambda: parse_rules(rules_text))

    iterations: list[SafetyIteration] = []
    current_code = code
    current_chain = ""
    for index in range(1, config.max_iterations + 1):
        suffix = f"_iter{index}"
        _shortlist, chunks = _stage(
            "retrieval",
            lambda: ground_code(current_code, signal_catalog, message_catalog,
                                config.top_k, config.token_budget),
        )
        extraction = _stage(
            "extraction",
            lambda: run_extraction(current_code, chunks, gateway,
                                   signal_catalog, message_catalog,
                                   max_retries=config.max_extraction_retries),
        )
        writer.write(f"extraction{suffix}.json",
                     json.dumps(extraction.to_dict(), indent=2, sort_keys=True) + "\n")
        diagram, document = _stage(
            "chain",
            lambda: build_chain(current_code, current_chain,
                                extraction.accepted, gateway),
        )
        writer.write(f"chain{suffix}.puml", diagram)
        writer.write(f"chain{suffix}.json", serialize_chain(document) + "\n")
        safety = _stage("check", lambda: check(document, ruleset))
        writer.write(f"safety{suffix}.txt", render_report(safety))
        writer.write(f"safety{suffix}.json",
                     json.dumps(safety.to_dict(), indent=2, sort_keys=True) + "\n")

        corrected: str | None = None
        if safety.violated and auto_correct and index < config.max_iterations:
            corrected = _stage(
                "correction",
                lambda: _extract_code(
                    suggest_correction(current_code, safety, gateway)).strip() + "\n",
            )
            writer.write(f"corrected_code{suffix}.py", corrected)
        iterations.append(SafetyIteration(
            index=index, extraction=extraction, diagram=diagram,
            safety=safety, corrected_code=corrected,
        ))
        record.iterations.append({
            "index": index,
            "accepted": len(extraction.accepted),
            "rejected": len(extraction.rejected),
            "verdict": VERDICT_VIOLATED if safety.violated else VERDICT_PASS,
            "corrected": corrected is not None,
        })
        if corrected is None:
            break
        current_code = corrected
        current_chain = diagram

    final = iterations[-1]
    record.verdict = VERDICT_VIOLATED if final.safety.violated else VERDICT_PASS
    writer.finish()
    return SafetyRunResult(
        verdict=record.verdict,
        iterations=tuple(iterations),
        final_code=current_code,
        out_dir=writer.out_dir,
    )


def run_safety_pipeline_files(code_path, vss_path, can_path, rules_path,
                              gateway: LlmGateway, config: PipelineConfig,
                              out_dir=None, auto_correct: bool = False,
                              ) -> SafetyRunResult:
    return run_safety_pipeline(
        read_text(code_path, "code"),
        read_text(vss_path, "VSS catalog"),
        read_text(can_path, "CAN catalog"),
        read_text(rules_path, "rules"),
        gateway, config, out_dir=out_dir, auto_correct=auto_correct,
    )


# ---------------------------------------------------------------------------
# topology run


@dataclass(frozen=True)
class TopologyIteration:
    index: int
    model: InstanceModel
    report: TopologyReport


@dataclass(frozen=True)
class TopologyRunResult:
    verdict: str
    iterations: tuple[TopologyIteration, ...]
    out_dir: Path

    @property
    def final_model(self) -> InstanceModel:
        return self.iterations[-1].model

    @property
    def final_report(self) -> TopologyReport:
        return self.iterations[-1].report


def _load_instance_text(text: str) -> InstanceModel:
    if text.lstrip().startswith("@startuml"):
        return import_class_diagram(text)
    return parse_instance(text)


def run_topology_pipeline(gateway: LlmGateway, config: PipelineConfig,
                          metamodel: Metamodel | None = None,
                          model_text: str | None = None,
                          requirements: str | None = None,
                          constraints_text: str | None = None,
                          guidelines: str | None = None,
                          out_dir: str | Path | None = None,
                          auto_correct: bool = False) -> TopologyRunResult:
    """Check (and optionally repair) an instance model against constraints.

    The model comes either from text (JSON or object-diagram form) or from
    requirements via generation; constraints either from text or from
    guideline generation. A supplied model that does not conform to the
    metamodel is a stage error, not a finding — constraint verdicts over a
    non-conformant model would be meaningless.
    """
    if (model_text is None) == (requirements is None):
        raise ConfigurationError("pass exactly one of model_text or requirements")
    if (constraints_text is None) == (guidelines is None):
        raise ConfigurationError("pass exactly one of constraints_text or guidelines")
    if gateway is None and (requirements is not None or guidelines is not None
                            or auto_correct):
        raise ConfigurationError(
            "generation and correction need a completion gateway")
    metamodel = metamodel if metamodel is not None else default_metamodel()

    record = RunRecord(kind="topology", started_at=_now(), config=_config_echo(config))
    writer = _ArtifactWriter(out_dir or config.out_dir, record)

    def _stage(stage: str, fn):
        try:
            return fn()
        except SdvGuardError as exc:
            record.verdict = "error"
            writer.finish()
            raise PipelineError(stage, exc, record=record) from exc

    if model_text is not None:
        model = _stage("model", lambda: _load_instance_text(model_text))
        conformance = conform(model, metamodel)
        if not conformance.ok:
            record.verdict = "error"
            writer.write("conformance.txt", conformance.render_text())
            writer.finish()
            raise PipelineError(
                "conformance",
                ConfigurationError("supplied model does not conform to the metamodel"),
                record=record,
            )
    else:
        model = _stage(
            "model", lambda: generate_instance(requirements, metamodel, gateway))

    if constraints_text is not None:
        constraints = _stage(
            "constraints", lambda: parse_constraints(constraints_text, metamodel))
    else:
        constraints = _stage(
            "constraints", lambda: generate_constraints(guidelines, metamodel, gateway))

    iterations: list[TopologyIteration] = []
    for index in range(1, config.max_iterations + 1):
        suffix = f"_iter{index}"
        report = _stage(
            "evaluate", lambda: eval_constraints(model, constraints, metamodel))
        writer.write(f"model{suffix}.puml", export_class_diagram(model))
        writer.write(f"model{suffix}.json", serialize_instance(model))
        writer.write(f"topology{suffix}.txt", render_topology_report(report))
        writer.write(f"topology{suffix}.json",
                     json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        iterations.append(TopologyIteration(index=index, model=model, report=report))
        record.iterations.append({
            "index": index,
            "failing": len(report.failing),
            "verdict": report.overall,
        })
        if not report.failing or not auto_correct or index == config.max_iterations:
            break
        model, _ = _stage(
            "correction",
            lambda: correct_instance(model, report, metamodel, gateway),
        )

    final = iterations[-1]
    record.verdict = VERDICT_VIOLATED if final.report.failing else VERDICT_PASS
    writer.finish()
    return TopologyRunResult(
        verdict=record.verdict, iterations=tuple(iterations), out_dir=writer.out_dir,
    )
