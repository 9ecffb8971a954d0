"""sdv-guard: pre-deployment functional-safety and security analysis for
software-defined-vehicle artifacts.

The package splits into focused modules — ``catalog`` (VSS/CAN signal
catalogs), ``retrieval`` (rank-and-chunk grounding), ``llm_gateway``
(prompt templates and the record/replay completion client), ``extraction``
(signal extraction with catalog validation), ``eventchain`` (activity
diagrams as event chains), ``safety_rules`` (temporal before/after rules),
``topology`` (instance models and security constraints), and ``pipeline``
(orchestration, evaluation harness, CLI).
"""

__version__ = "0.1.0"
