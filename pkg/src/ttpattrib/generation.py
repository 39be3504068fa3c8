"""Text-generation clients: a chat-completions HTTP client and a local stub.

The remote client mirrors the embedding client's transport behavior
(retry on 429/5xx and connection errors, exponential backoff, fail fast
on other 4xx) but posts to a chat-completions endpoint with temperature
pinned to 0. The local template generator needs no network and returns
a deterministic paragraph, which keeps HyDE runnable offline.
"""
from __future__ import annotations

import logging
import os
import time
from typing import Callable

from .embedding import ProviderConfig
from .errors import ProviderUnavailableError, ValidationError

logger = logging.getLogger(__name__)

TextGenerator = Callable[[str], str]


class CompletionClient:
    """OpenAI-compatible chat-completions client with retry and backoff."""

    def __init__(self, config: ProviderConfig, session=None):
        import requests

        if config.kind != "remote":
            raise ValidationError("completion client requires a remote provider config")
        self.config = config
        self.call_count = 0
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def generate(self, prompt: str) -> str:
        payload = {
            "model": self.config.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        body = self._post_with_retry(payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderUnavailableError(f"malformed completion response: {exc}") from exc
        if not isinstance(content, str):
            raise ProviderUnavailableError("completion content is not text")
        return content

    def _post_with_retry(self, payload: dict) -> dict:
        import requests

        self.call_count += 1
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff_seconds * (2 ** (attempt - 1)))
            try:
                resp = self._session.post(
                    self.config.endpoint,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.config.timeout_seconds,
                )
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("completion request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code == 200:
                return resp.json()
            if resp.status_code in (429, 500, 502, 503, 504):
                last_error = ProviderUnavailableError(
                    f"provider returned {resp.status_code}"
                )
                logger.warning("completion request got %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            raise ProviderUnavailableError(
                f"provider returned {resp.status_code}: {resp.text[:200]}"
            )
        raise ProviderUnavailableError(f"provider unreachable after retries: {last_error}")


class TemplateGenerator:
    """Deterministic offline generator: echoes the prompt's subject matter.

    Good enough for HyDE passages (the embedding only needs on-topic
    tokens); useless for real extraction, which needs a remote model.
    """

    def __init__(self, config: ProviderConfig):
        if config.kind != "local-template":
            raise ValidationError("template generator requires kind local-template")
        self.config = config
        self.call_count = 0

    def generate(self, prompt: str) -> str:
        self.call_count += 1
        # HyDE prompts end with "technique <name>: <definition>"
        marker = "technique "
        subject = prompt[prompt.rfind(marker) + len(marker):] if marker in prompt else prompt
        return (
            f"Incident responders observed activity consistent with {subject.strip()} "
            "The operators repeated the procedure at several hosts during the intrusion."
        )


def make_generator(config: ProviderConfig, session=None) -> TextGenerator:
    if config.kind == "remote":
        return CompletionClient(config, session=session).generate
    if config.kind == "local-template":
        return TemplateGenerator(config).generate
    raise ValidationError(f"no text generator for kind {config.kind!r}")
