"""LLM-as-recommender: prompts, chat client, reply parsing and title matching."""
from .client import (CandidateStub, ChatClient, ChatRequest, ClientConfig, EchoStub,
                     GibberishStub, LiveBackend, ResponseCache, cache_key, complete_chat)
from .matching import (TitleMatcher, damerau_levenshtein, match_title, normalize_title,
                       parse_recommendations, title_similarity)
from .pipeline import (RERANK, TOP_N, HallucinationReport, LlmExchange, RunFailedError,
                       make_stub, match_response, run_llm_recommender)
from .prompts import (PromptBudgetError, PromptTemplate, build_prompt_rerank,
                      build_prompt_top_n, estimate_tokens)
