"""Long-term dyadic dialogue with managed shared memory.

Subpackages cover the pipeline end to end: screenplay parsing into
episodes, the five-collection memory model and its update strategies,
pluggable chat backends, prompt/output wire formats, the session engine
and evaluation protocols, automatic metrics with judge scoring, JSONL
persistence, and an HTTP service plus CLI.
"""

__version__ = "0.1.0"
