"""Dataset-knowledge construction: summary agents, reflection, storage."""

from .agents import (
    AgentRuntime,
    GlobalEdgeLabelResult,
    GlobalLinkResult,
    LocalEvidence,
    Trajectory,
    collect_trajectories,
    render_global_description,
    render_template,
    run_global_edge_label_summary,
    run_global_link_summary,
    run_initial_agent,
    run_local_summaries,
    run_local_summary,
    run_reflection,
    select_active_nodes,
    window_evidence,
)
from .types import (
    BINARY_LEVELS,
    GENERATION_LEVELS,
    KNOWLEDGE_SCHEMA_VERSION,
    Clause,
    DatasetCard,
    GlobalEdgeLabelKnowledge,
    GlobalLinkKnowledge,
    GuidanceEntry,
    Indicator,
    KnowledgeStore,
    MetricKnowledge,
    NodeProfile,
    ReflectionOutcome,
    ThresholdRule,
    significance_rank,
)

__all__ = [
    "AgentRuntime",
    "BINARY_LEVELS",
    "Clause",
    "DatasetCard",
    "GENERATION_LEVELS",
    "GlobalEdgeLabelKnowledge",
    "GlobalEdgeLabelResult",
    "GlobalLinkKnowledge",
    "GlobalLinkResult",
    "GuidanceEntry",
    "Indicator",
    "KNOWLEDGE_SCHEMA_VERSION",
    "KnowledgeStore",
    "LocalEvidence",
    "MetricKnowledge",
    "NodeProfile",
    "ReflectionOutcome",
    "ThresholdRule",
    "Trajectory",
    "collect_trajectories",
    "render_global_description",
    "render_template",
    "run_global_edge_label_summary",
    "run_global_link_summary",
    "run_initial_agent",
    "run_local_summaries",
    "run_local_summary",
    "run_reflection",
    "select_active_nodes",
    "significance_rank",
    "window_evidence",
]
