"""LLM (or mock) labeling, few-shot refinement, and root-cause reports."""

from .llm import (AnnotationResult, ChatClient, NoisyOracleClient, ScriptedChatClient, annotate, mock_annotate,
                  parse_label)
from .prompts import (COT_FS, FS, FS_COT, FS_COT_SR, LABEL_STRATEGIES, RCA, ChatPrompt, FewShotPool,
                      PromptTemplate, Shot, get_template, initial_pool, render_label_prompt, render_rca_prompt)
from .rca import RcaReport, analyze_anomaly, parse_rca_response
from .refine import annotate_records, message_pattern, refine_shots_step1, refine_shots_step2

__all__ = [
    "AnnotationResult", "ChatClient", "NoisyOracleClient", "ScriptedChatClient", "annotate", "mock_annotate",
    "parse_label", "COT_FS", "FS", "FS_COT", "FS_COT_SR", "LABEL_STRATEGIES", "RCA", "ChatPrompt",
    "FewShotPool", "PromptTemplate", "Shot", "get_template", "initial_pool", "render_label_prompt",
    "render_rca_prompt", "RcaReport", "analyze_anomaly", "parse_rca_response", "annotate_records",
    "message_pattern", "refine_shots_step1", "refine_shots_step2",
]
