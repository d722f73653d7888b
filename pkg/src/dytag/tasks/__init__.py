"""Prediction tasks: prompt assembly, execution, parsing, fallbacks."""

from .prompts import (
    FewShotExample,
    PromptSettings,
    assemble_prompt,
    default_description,
    ec_blocks,
    instruction_section,
    link_blocks,
    render_task_template,
)
from .runner import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_WINDOW,
    TaskRunner,
    TaskRunSettings,
    build_few_shot,
    build_queries,
    ec_fallback,
    lp_fallback,
    match_label,
    ordered_class_list,
    surrogate_link_predictor,
)
from .types import (
    MODES,
    TASKS,
    PredictionRecord,
    TaskQuery,
    append_records,
    dump_records,
    load_records,
)

__all__ = [
    "DEFAULT_BATCH_SIZE",
    "DEFAULT_WINDOW",
    "FewShotExample",
    "MODES",
    "PredictionRecord",
    "PromptSettings",
    "TASKS",
    "TaskQuery",
    "TaskRunner",
    "TaskRunSettings",
    "append_records",
    "assemble_prompt",
    "build_few_shot",
    "build_queries",
    "default_description",
    "dump_records",
    "ec_blocks",
    "ec_fallback",
    "instruction_section",
    "link_blocks",
    "load_records",
    "lp_fallback",
    "match_label",
    "ordered_class_list",
    "render_task_template",
    "surrogate_link_predictor",
]
