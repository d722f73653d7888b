"""Prompt assembly for the predictor: all three tasks, all five modes.

Every value-carrying line comes from the shared rendering module so the
scripted mock can parse the same formats back out. Knowledge-guided mode
filters evidence blocks by recorded significance, injects the reflection
supplement when one was accepted, and attaches the source node's profile
when one exists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from string import Template
from typing import Dict, List, Optional, Sequence, Tuple

from .. import rendering
from ..gateway import ChatRequest, system_user_request
from ..knowledge import (
    GlobalEdgeLabelKnowledge,
    GlobalLinkKnowledge,
    KnowledgeStore,
    NodeProfile,
    render_global_description,
    significance_rank,
)
from ..knowledge.types import NOT_SIGNIFICANT
from ..metrics import PairEvidence
from ..recall import CandidateSet
from ..store import DyTagStore
from .types import (
    FEWSHOT_MODES,
    MODE_GAD,
    MODE_STRUCTURE,
    MODE_STRUCTURE_FEWSHOT,
    MODE_TEXT,
    MODE_TEXT_FEWSHOT,
    MODES,
    TASK_EC,
    TASK_LP,
    TASK_NR,
    TaskQuery,
)

_TEMPLATE_CACHE: Dict[str, Template] = {}


def _template(name: str) -> Template:
    if name not in _TEMPLATE_CACHE:
        text = (resources.files(__package__) / "templates" / f"{name}.txt").read_text(
            encoding="utf-8")
        _TEMPLATE_CACHE[name] = Template(text)
    return _TEMPLATE_CACHE[name]


def render_task_template(name: str, **values: str) -> str:
    """Strict substitution: an unresolved placeholder is a template bug."""
    return _template(name).substitute(**values)


def default_description() -> str:
    return render_task_template("description_default").rstrip("\n")


# --- evidence block selection -------------------------------------------

# Block keys, canonical order. LP/NR use the first four; EC its own set.
BLOCK_TEXT = "text"
BLOCK_HI = "HI"
BLOCK_CN = "CN"
BLOCK_NODE_METRICS = "node-metrics"
BLOCK_NODE_PREFS = "node-preferences"
BLOCK_PAIR_PREF = "pair-preference"
BLOCK_EDGE_TEXT = "edge-text"

_LINK_BLOCKS = (BLOCK_TEXT, BLOCK_HI, BLOCK_CN, BLOCK_NODE_METRICS)
_EC_BLOCKS = (BLOCK_TEXT, BLOCK_EDGE_TEXT, BLOCK_NODE_PREFS, BLOCK_PAIR_PREF)

_INCLUDED_LEVELS = ("Extremely Significant", "Helpful")
_FALLBACK_LEVEL = "Maybe Related"

_INSTRUCTIONS = {
    BLOCK_TEXT: (
        "Node Text:\n"
        "- Textual information of each node."),
    BLOCK_HI: (
        "Historical Interaction Count:\n"
        "- The total number of past interactions the two nodes have had.\n"
        "- High interaction counts indicate active historical interactions "
        "between the two nodes and a higher likelihood of future interactions."),
    BLOCK_CN: (
        "Common Neighbor Count:\n"
        "- The number of shared neighbors between the two nodes.\n"
        "- A higher number of common neighbors suggests a stronger community "
        "bond and a higher probability of interaction."),
    BLOCK_NODE_METRICS: (
        "Node-Specific Metrics:\n"
        "- For each of the source and destination nodes:\n"
        "  - Frequency: total number of past interactions.\n"
        "  - Times as Source: number of times the node has been the source "
        "node in interactions.\n"
        "  - Times as Destination: number of times the node has been the "
        "destination node in interactions.\n"
        "  - Average Frequency of Neighbors: average number of interactions "
        "per historical neighbor, indicating whether the node's neighbors "
        "are predominantly new or well-established.\n"
        "- If the destination node has participated in many interactions "
        "overall but has rarely been a destination in past interactions, it "
        "is less likely for this pair to form a link.\n"
        "- If a node demonstrates a preference for neighbors with high or "
        "low interaction frequency, it is likely to exhibit the same "
        "preference for forming links with new nodes."),
    BLOCK_NODE_PREFS: (
        "Node Preferences:\n"
        "- This dictionary contains the historical edge class distributions "
        "for both the source and destination nodes.\n"
        "- The keys represent class names, and the values indicate the "
        "frequency of each class observed in past edges involving the node.\n"
        "- Higher frequencies suggest a higher likelihood of that class "
        "being the predicted class for the edge."),
    BLOCK_PAIR_PREF: (
        "Pair Preference:\n"
        "- The historical classes of edges between the source and "
        "destination nodes.\n"
        "- The keys are the class names, and the values are the frequencies "
        "of those classifications in past observations.\n"
        "- Higher frequencies of a particular class increase the likelihood "
        "that the same class will be predicted for the current edge."),
    BLOCK_EDGE_TEXT: (
        "Edge Text:\n"
        "- The raw textual content of the edge being classified."),
}


def _qualify(levels: Dict[str, str], keys: Sequence[str]) -> List[str]:
    """Keys whose significance qualifies for knowledge-guided prompts.

    Strong levels win; when nothing is strong the weak middle level is
    used instead, so the prompt never silently loses all evidence unless
    everything was judged irrelevant.
    """
    strong = [k for k in keys if levels.get(k) in _INCLUDED_LEVELS]
    if strong:
        return strong
    return [k for k in keys if levels.get(k) == _FALLBACK_LEVEL]


def link_blocks(mode: str, knowledge: Optional[GlobalLinkKnowledge],
                use_edge_text: bool = False) -> List[str]:
    if mode in (MODE_TEXT, MODE_TEXT_FEWSHOT):
        return [BLOCK_TEXT]
    if mode in (MODE_STRUCTURE, MODE_STRUCTURE_FEWSHOT):
        return list(_LINK_BLOCKS)
    if mode == MODE_GAD:
        if knowledge is None:
            raise ValueError("knowledge-guided mode needs global link knowledge")
        levels = {
            BLOCK_TEXT: knowledge.metrics["text"].significance,
            BLOCK_HI: knowledge.metrics["HI"].significance,
            BLOCK_CN: knowledge.metrics["CN"].significance,
            BLOCK_NODE_METRICS: knowledge.metrics["DNF"].significance,
        }
        return [k for k in _LINK_BLOCKS if k in _qualify(levels, _LINK_BLOCKS)]
    raise ValueError(f"unknown mode {mode!r}")


def ec_blocks(mode: str, knowledge: Optional[GlobalEdgeLabelKnowledge],
              use_edge_text: bool = False) -> List[str]:
    if mode in (MODE_TEXT, MODE_TEXT_FEWSHOT):
        return [BLOCK_TEXT] + ([BLOCK_EDGE_TEXT] if use_edge_text else [])
    if mode in (MODE_STRUCTURE, MODE_STRUCTURE_FEWSHOT):
        keep = [BLOCK_TEXT, BLOCK_NODE_PREFS, BLOCK_PAIR_PREF]
        if use_edge_text:
            keep.insert(1, BLOCK_EDGE_TEXT)
        return keep
    if mode == MODE_GAD:
        if knowledge is None:
            raise ValueError("knowledge-guided mode needs edge label knowledge")
        levels = {
            BLOCK_TEXT: knowledge.node_text.significance,
            BLOCK_EDGE_TEXT: knowledge.edge_text.significance,
            BLOCK_NODE_PREFS: knowledge.eld_guidance.significance,
            BLOCK_PAIR_PREF: knowledge.eld_guidance.significance,
        }
        keep = _qualify(levels, _EC_BLOCKS)
        if not use_edge_text and BLOCK_EDGE_TEXT in keep:
            keep.remove(BLOCK_EDGE_TEXT)
        return [k for k in _EC_BLOCKS if k in keep]
    raise ValueError(f"unknown mode {mode!r}")


def instruction_section(blocks: Sequence[str]) -> str:
    """Numbered instruction list; numbering is contiguous after filtering."""
    parts = [f"{i}. {_INSTRUCTIONS[key]}" for i, key in enumerate(blocks, start=1)]
    return "\n\n".join(parts)


# --- knowledge rendering ---------------------------------------------------

_METRIC_TITLES = {
    "text": "Node Text",
    "HI": "Historical Interaction Count",
    "CN": "Common Neighbor Count",
    "DNF": "Destination Node Frequency",
}

_BLOCK_TO_METRIC = {
    BLOCK_TEXT: "text",
    BLOCK_HI: "HI",
    BLOCK_CN: "CN",
    BLOCK_NODE_METRICS: "DNF",
}


def link_knowledge_section(knowledge: GlobalLinkKnowledge,
                           blocks: Sequence[str]) -> str:
    """Metric knowledge for the blocks that made it into the prompt."""
    lines = ["Dataset Knowledge:"]
    for block in blocks:
        name = _BLOCK_TO_METRIC[block]
        entry = knowledge.metrics[name]
        suffix = ""
        if entry.favors is not None:
            suffix = f", favors {entry.favors} values"
        lines.append(
            f"- {_METRIC_TITLES[name]} [{entry.significance}{suffix}]: "
            f"{entry.explanation}")
    if knowledge.overall_rules:
        lines.append(f"Overall: {knowledge.overall_rules}")
    return "\n".join(lines)


def ec_knowledge_section(knowledge: GlobalEdgeLabelKnowledge,
                         blocks: Sequence[str]) -> str:
    lines = ["Dataset Knowledge:"]
    if BLOCK_TEXT in blocks:
        lines.append(f"- Node Text [{knowledge.node_text.significance}]: "
                     f"{knowledge.node_text.guidance}")
    if BLOCK_EDGE_TEXT in blocks:
        lines.append(f"- Edge Text [{knowledge.edge_text.significance}]: "
                     f"{knowledge.edge_text.guidance}")
    if BLOCK_NODE_PREFS in blocks or BLOCK_PAIR_PREF in blocks:
        lines.append(
            f"- Edge Label Preference [{knowledge.eld_guidance.significance}]: "
            f"{knowledge.eld_guidance.guidance}")
    return "\n".join(lines)


def reflection_section(store: KnowledgeStore, task: str) -> str:
    outcome = store.reflection.get(task)
    if outcome is None or not outcome.significant:
        return ""
    return f"Knowledge Reflection:\n{outcome.supplementation}"


def profile_section(profile: Optional[NodeProfile]) -> str:
    """Source node profile lines; judged-insignificant fields are dropped."""
    if profile is None:
        return ""
    rows = [
        ("Node Description", profile.node_description),
        ("Neighbor Preference", profile.neighbor_preference),
        ("Edge Text Preference", profile.edge_text_preference),
        ("Edge Label Preference", profile.edge_label_preference),
        ("Structural Preference", profile.structural_preference),
        ("Explanation", profile.explanation),
    ]
    lines = ["Source Node Profile:"]
    for title, value in rows:
        if value.strip() == NOT_SIGNIFICANT:
            continue
        lines.append(f"- {title}: {value}")
    return "\n".join(lines)


# --- sample blocks ---------------------------------------------------------


def _quote(text: Optional[str]) -> str:
    return json.dumps(text if text else "", ensure_ascii=True)


def _eld_payload(store: DyTagStore, counts: Dict[int, int]) -> str:
    return rendering.render_label_counts(
        {store.label_text(k): v for k, v in counts.items()})


def lp_sample_block(evidence: PairEvidence, blocks: Sequence[str]) -> str:
    parts: List[str] = []
    if BLOCK_TEXT in blocks:
        parts.append("\n".join([
            rendering.NODE_TEXT_HEADER,
            rendering.SOURCE_TEXT_LINE.format(text=_quote(evidence.src_text)),
            rendering.DESTINATION_TEXT_LINE.format(text=_quote(evidence.dst_text)),
        ]))
    if BLOCK_HI in blocks:
        parts.append(rendering.render_hi_block(evidence.src, evidence.dst, evidence.hi))
    if BLOCK_CN in blocks:
        parts.append(rendering.render_cn_block(evidence.src, evidence.dst, evidence.cn))
    if BLOCK_NODE_METRICS in blocks:
        src_act, dst_act = evidence.src_activity, evidence.dst_activity
        parts.append("\n".join([
            rendering.NODE_METRICS_HEADER,
            rendering.render_node_activity(
                "Source", evidence.src, src_act.frequency, src_act.as_source,
                src_act.as_destination, src_act.avg_neighbor_frequency),
            rendering.render_node_activity(
                "Destination", evidence.dst, dst_act.frequency, dst_act.as_source,
                dst_act.as_destination, dst_act.avg_neighbor_frequency),
        ]))
    return "\n\n".join(parts)


def nr_source_block(source: int, evidence: PairEvidence,
                    blocks: Sequence[str]) -> str:
    parts = [f"Source Node ID: {source}"]
    if BLOCK_TEXT in blocks:
        parts.append(rendering.SOURCE_TEXT_LINE.format(text=_quote(evidence.src_text)))
    if BLOCK_NODE_METRICS in blocks:
        act = evidence.src_activity
        parts.append(rendering.render_node_activity(
            "Source", source, act.frequency, act.as_source,
            act.as_destination, act.avg_neighbor_frequency))
    return "\n".join(parts)


def nr_candidate_block(node: int, evidence: PairEvidence,
                       blocks: Sequence[str]) -> str:
    parts = [rendering.CANDIDATE_ID_LINE.format(node=node)]
    if BLOCK_TEXT in blocks:
        parts.append(
            rendering.DESTINATION_TEXT_LINE.format(text=_quote(evidence.dst_text)))
    if BLOCK_HI in blocks:
        parts.append(rendering.render_hi_block(evidence.src, node, evidence.hi))
    if BLOCK_CN in blocks:
        parts.append(rendering.render_cn_block(evidence.src, node, evidence.cn))
    if BLOCK_NODE_METRICS in blocks:
        act = evidence.dst_activity
        parts.append(rendering.render_node_activity(
            "Destination", node, act.frequency, act.as_source,
            act.as_destination, act.avg_neighbor_frequency))
    return "\n".join(parts)


def ec_sample_block(store: DyTagStore, evidence: PairEvidence,
                    blocks: Sequence[str],
                    edge_text: Optional[str] = None) -> str:
    parts: List[str] = []
    if BLOCK_TEXT in blocks:
        parts.append("\n".join([
            rendering.NODE_TEXT_HEADER,
            f"- Source Node {_quote(evidence.src_text)}",
            f"- Destination Node {_quote(evidence.dst_text)}",
        ]))
    if BLOCK_EDGE_TEXT in blocks:
        parts.append(f"Edge Text: {_quote(edge_text)}")
    if BLOCK_NODE_PREFS in blocks:
        parts.append("\n".join([
            rendering.NODE_PREFERENCES_HEADER,
            rendering.SOURCE_PREF_LINE.format(
                node=evidence.src,
                payload=_eld_payload(store, evidence.eld_src.counts)),
            rendering.DESTINATION_PREF_LINE.format(
                node=evidence.dst,
                payload=_eld_payload(store, evidence.eld_dst.counts)),
        ]))
    if BLOCK_PAIR_PREF in blocks:
        parts.append("\n".join([
            rendering.PAIR_PREFERENCES_HEADER,
            rendering.PAIR_PREF_LINE.format(
                src=evidence.src, dst=evidence.dst,
                payload=_eld_payload(store, evidence.eld_pair.counts)),
        ]))
    return "\n\n".join(parts)


# --- few-shot example rendering -------------------------------------------


@dataclass(frozen=True)
class FewShotExample:
    """A pre-rendered validation sample plus its answer text."""

    body: str
    answer: str


def examples_section(examples: Sequence[FewShotExample]) -> str:
    parts = []
    for i, example in enumerate(examples, start=1):
        parts.append(
            f"{rendering.EXAMPLE_HEADER.format(index=i)}\n"
            f"{example.body}\n"
            f"{rendering.ANSWER_PREFIX} {example.answer}\n")
    return "\n".join(parts) + ("\n" if parts else "")


# --- full prompt assembly ---------------------------------------------------


@dataclass(frozen=True)
class PromptSettings:
    model: str
    temperature: float = 0.0
    max_tokens: int = 1024
    use_edge_text: bool = False


def _description(knowledge: Optional[KnowledgeStore]) -> str:
    if knowledge is not None and knowledge.dataset_card is not None:
        return render_global_description(knowledge.dataset_card)
    return default_description()


def _examples_clause(mode: str) -> str:
    return " and several examples" if mode in FEWSHOT_MODES else ""


def _knowledge_block(section: str, reflection: str) -> str:
    block = ""
    if section:
        block += "\n" + section + "\n"
    if reflection:
        block += "\n" + reflection + "\n"
    return block


def assemble_prompt(query: TaskQuery, mode: str,
                    evidence: PairEvidence | CandidateSet,
                    knowledge: Optional[KnowledgeStore],
                    settings: PromptSettings,
                    few_shot: Sequence[FewShotExample] = (),
                    store: Optional[DyTagStore] = None,
                    edge_text: Optional[str] = None,
                    class_names: Optional[Sequence[str]] = None) -> ChatRequest:
    """Render the full two-message request for one query.

    EC prompts need ``store`` (label texts) and ``class_names``; NR takes
    the already recalled-and-ranked CandidateSet as evidence.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode in FEWSHOT_MODES and not few_shot:
        raise ValueError("few-shot mode without examples")
    expect_structured = query.task != TASK_LP

    global_link = knowledge.global_link if knowledge is not None else None
    edge_knowledge = knowledge.global_edge_label if knowledge is not None else None
    profile = None
    if mode == MODE_GAD and knowledge is not None:
        profile = knowledge.profile_for(query.source)
    reflection = reflection_section(knowledge, query.task) if (
        mode == MODE_GAD and knowledge is not None) else ""

    if query.task in (TASK_LP, TASK_NR):
        blocks = link_blocks(mode, global_link)
        knowledge_section = ""
        if mode == MODE_GAD:
            knowledge_section = link_knowledge_section(global_link, blocks)
    else:
        blocks = ec_blocks(mode, edge_knowledge, settings.use_edge_text)
        knowledge_section = ""
        if mode == MODE_GAD:
            knowledge_section = ec_knowledge_section(edge_knowledge, blocks)

    system_values = dict(
        global_description=_description(knowledge),
        examples_clause=_examples_clause(mode),
        information_blocks=instruction_section(blocks),
        knowledge_block=_knowledge_block(knowledge_section, reflection),
    )
    profile_text = profile_section(profile)
    profile_block = ("\n" + profile_text + "\n") if profile_text else ""

    if query.task == TASK_LP:
        system = render_task_template("lp_system", **system_values)
        user = render_task_template(
            "lp_input",
            examples_block=examples_section(few_shot),
            sample_block=lp_sample_block(evidence, blocks),
            profile_block=profile_block,
            src=str(query.source),
            dst=str(query.destination),
        )
    elif query.task == TASK_NR:
        if not isinstance(evidence, CandidateSet):
            raise ValueError("nr assembly needs a CandidateSet")
        candidate_blocks = "\n\n".join(
            nr_candidate_block(node, ev, blocks)
            for node, ev in evidence.candidates)
        source_evidence = (
            evidence.candidates[0][1] if evidence.candidates else None)
        if source_evidence is not None:
            source_block = nr_source_block(query.source, source_evidence, blocks)
        else:
            source_block = f"Source Node ID: {query.source}"
        system = render_task_template("nr_system", **system_values)
        user = render_task_template(
            "nr_input",
            examples_block=examples_section(few_shot),
            source_block=source_block,
            profile_block=profile_block,
            candidate_blocks=candidate_blocks if candidate_blocks else "(none survived recall)",
        )
    else:
        if store is None or class_names is None:
            raise ValueError("ec assembly needs the store and class names")
        system = render_task_template("ec_system", **system_values)
        user = render_task_template(
            "ec_input",
            edge_classes_line=rendering.EDGE_CLASSES_LINE.format(
                payload=rendering.render_class_list(class_names)),
            examples_block=examples_section(few_shot),
            sample_block=ec_sample_block(
                store, evidence, blocks,
                edge_text=edge_text if settings.use_edge_text else None),
            profile_block=profile_block,
            src=str(query.source),
            dst=str(query.destination),
        )

    return system_user_request(
        settings.model, system, user,
        temperature=settings.temperature,
        max_tokens=settings.max_tokens,
        expect_structured=expect_structured,
    )
