"""Model-level operations that go through the language model.

Three flows, all with the same shape: render a fixed prompt, send it through
the gateway, parse the completion, and verify the result before handing it
back. A completion that does not survive parsing (or, for instance models,
conformance checking) earns exactly one retry with the failure appended to
the prompt; a second failure raises GenerationError carrying both raw
attempts so the caller can inspect what the model actually said.
"""

from __future__ import annotations

from ..errors import (
    ConfigurationError,
    ConstraintError,
    GenerationError,
    ModelImportError,
)
from ..eventchain import extract_diagram_block, strip_fences
from ..llm_gateway import PC3, PC4, PC4B, CompletionRequest, LlmGateway, render_prompt
from .model import (
    InstanceModel,
    Metamodel,
    conform,
    export_class_diagram,
    import_class_diagram,
    serialize_metamodel,
)
from .ocl import (
    ConstraintSet,
    TopologyReport,
    eval_constraints,
    parse_constraints,
    render_topology_report,
)

_EMPTY_SYSTEM = "(none)"


def build_instance_prompt(requirements: str, metamodel: Metamodel,
                          current_model: InstanceModel | None = None) -> str:
    current = (export_class_diagram(current_model)
               if current_model is not None else _EMPTY_SYSTEM)
    return render_prompt(PC3, {
        "current system": current,
        "metamodel": serialize_metamodel(metamodel),
        "user input": requirements,
    })


def build_constraints_prompt(guidelines: str, metamodel: Metamodel) -> str:
    return render_prompt(PC4, {
        "metamodel": serialize_metamodel(metamodel),
        "security guidelines": guidelines,
    })


def build_instance_correction_prompt(model: InstanceModel, report: TopologyReport,
                                     metamodel: Metamodel) -> str:
    return render_prompt(PC4B, {
        "metamodel": serialize_metamodel(metamodel),
        "current system": export_class_diagram(model),
        "OCL pass/fail list": render_topology_report(report),
    })


def _import_checked(completion: str, metamodel: Metamodel) -> InstanceModel:
    """Parse a completion as an object diagram and insist it conforms."""
    block = extract_diagram_block(completion)
    if block is None:
        raise ModelImportError("completion contains no @startuml block")
    model = import_class_diagram(block)
    conformance = conform(model, metamodel)
    if not conformance.ok:
        raise ModelImportError(
            "generated model does not conform:\n" + conformance.render_text()
        )
    return model


def generate_instance(requirements: str, metamodel: Metamodel, gateway: LlmGateway,
                      current_model: InstanceModel | None = None) -> InstanceModel:
    """Build (or update) an instance model from requirements text.

    Blank requirements with an existing model are an identity update and
    never reach the gateway; blank requirements with nothing to start from
    are a configuration error.
    """
    if not requirements.strip():
        if current_model is not None:
            return current_model
        raise ConfigurationError("instance generation needs requirements text")
    prompt = build_instance_prompt(requirements, metamodel, current_model)
    attempts: list[str] = []
    for round_index in range(2):
        completion = gateway.complete(CompletionRequest(prompt=prompt))
        attempts.append(completion)
        try:
            return _import_checked(completion, metamodel)
        except ModelImportError as err:
            if round_index == 1:
                raise GenerationError(
                    f"instance generation failed twice: {err}",
                    attempts=tuple(attempts),
                ) from err
            prompt = (
                f"{prompt}\n\nThe previous attempt was rejected:\n{err}\n"
                "Return a corrected PlantUML object diagram."
            )
    raise AssertionError("unreachable")


def generate_constraints(guidelines: str, metamodel: Metamodel,
                         gateway: LlmGateway) -> ConstraintSet:
    """Turn guideline text into a checked constraint set.

    Empty guidelines yield an empty set without a gateway call — there is
    nothing to ground a generation on.
    """
    if not guidelines.strip():
        return ConstraintSet(constraints=())
    prompt = build_constraints_prompt(guidelines, metamodel)
    attempts: list[str] = []
    for round_index in range(2):
        completion = gateway.complete(CompletionRequest(prompt=prompt))
        attempts.append(completion)
        try:
            return parse_constraints(strip_fences(completion), metamodel)
        except ConstraintError as err:
            if round_index == 1:
                raise GenerationError(
                    f"constraint generation failed twice: {err}",
                    attempts=tuple(attempts),
                ) from err
            prompt = (
                f"{prompt}\n\nThe previous attempt was rejected:\n{err}\n"
                "Return corrected constraints only."
            )
    raise AssertionError("unreachable")


def correct_instance(model: InstanceModel, report: TopologyReport,
                     metamodel: Metamodel, gateway: LlmGateway,
                     constraints: ConstraintSet | None = None,
                     ) -> tuple[InstanceModel, TopologyReport | None]:
    """Ask for a corrected model for a failing report and re-check the result.

    Requires at least one failing row — correcting a clean model is a caller
    bug, not a no-op. When the originating constraints are supplied the
    corrected model is re-evaluated and the fresh report returned alongside
    it; the corrected model is not guaranteed to pass, callers own the loop.
    """
    if not report.failing:
        raise ValueError("correct_instance needs a report with at least one failure")
    prompt = build_instance_correction_prompt(model, report, metamodel)
    attempts: list[str] = []
    for round_index in range(2):
        completion = gateway.complete(CompletionRequest(prompt=prompt))
        attempts.append(completion)
        try:
            corrected = _import_checked(completion, metamodel)
        except ModelImportError as err:
            if round_index == 1:
                raise GenerationError(
                    f"instance correction failed twice: {err}",
                    attempts=tuple(attempts),
                ) from err
            prompt = (
                f"{prompt}\n\nThe previous attempt was rejected:\n{err}\n"
                "Return a corrected PlantUML object diagram."
            )
            continue
        if constraints is None:
            return corrected, None
        return corrected, eval_constraints(corrected, constraints, metamodel)
    raise AssertionError("unreachable")
