"""LLM access: chat client, prompt builders, reply parsers and an offline mock."""
from .client import (
    API_KEY_ENV,
    CORRECTIVE_SUFFIX,
    BaseChatClient,
    ChatRequest,
    ChatResponse,
    LLMError,
    LLMStatusError,
    LLMTimeoutError,
    LLMTransportError,
    MalformedPayloadError,
    MalformedResponseError,
    OpenAIChatClient,
    ask_with_retries,
    map_bounded,
    parse_completion,
)
from .mock import HeuristicResponder, MockChatClient, OracleResponder, fingerprint
from .parsing import parse_generated_documents, parse_rating, parse_sentence_probs
from .prompts import (
    DOC_MARKER,
    MixRatio,
    PromptBudgetError,
    build_generation_prompt,
    build_kshot_prompt,
    build_score_prompt,
    build_single_group_prompt,
    build_summarize_prompt,
    sample_alpha,
)
