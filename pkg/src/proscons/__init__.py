"""Query-keyed pros/cons opinion highlights from large review collections.

The package turns long-form user reviews into per-query highlight
summaries: sentences are retrieved as evidence for each annotated query
(BM25 or dense), a chat model condenses the evidence into one key-point
per query, and every generated highlight is verified against its own
evidence through aspect/opinion/sentiment triplet metrics. An evaluation
harness scores summaries against expert references (ROUGE, sentiment
alignment, extractive baselines, rubric judging).
"""

__version__ = "0.1.0"
