"""HTTP scoring backend.

The endpoint accepts ``{"model", "prompt", "continuations"}`` and answers
``{"scores": [...], "normalized": bool}``, one summed continuation
log-probability per candidate.
"""

import logging
import math

import httpx

from moniker.backend.protocol import ScoreRequest, ScoreResult
from moniker.errors import ProtocolError, TransportError

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class HttpBackend:
    """Client for a scoring endpoint speaking the JSON wire protocol."""

    def __init__(
        self,
        endpoint: str,
        model_id: str,
        timeout: float = 60.0,
        normalized_default: bool = True,
        client: httpx.AsyncClient | None = None,
    ) -> None:
        """Initialize the backend.

        Args:
            endpoint: Full URL of the scoring endpoint.
            model_id: Model name sent with every request.
            timeout: Per-request timeout in seconds.
            normalized_default: Assumed when the response omits ``normalized``.
            client: Optional preconfigured httpx client (tests inject one).
        """
        self.endpoint = endpoint
        self.model_id = model_id
        self.normalized_default = normalized_default
        self._client = client or httpx.AsyncClient(timeout=timeout)

    @property
    def identity(self) -> str:
        return f"{self.endpoint}#{self.model_id}"

    async def score(self, request: ScoreRequest) -> ScoreResult:
        """Score every continuation of the request.

        Raises:
            TransportError: Network failure, timeout, 429 or 5xx.
            ProtocolError: Other HTTP errors or a malformed response.
        """
        payload = {
            "model": self.model_id,
            "prompt": request.prompt,
            "continuations": list(request.continuations),
        }
        try:
            response = await self._client.post(self.endpoint, json=payload)
        except httpx.RequestError as e:
            raise TransportError(f"Request to {self.endpoint} failed: {e}") from e

        if response.status_code in RETRYABLE_STATUS:
            raise TransportError(
                f"{self.endpoint} answered {response.status_code}"
            )
        if response.is_error:
            detail = response.text[:200]
            raise ProtocolError(
                f"{self.endpoint} rejected request ({response.status_code}): {detail}"
            )

        try:
            data = response.json()
        except ValueError as e:
            raise ProtocolError(f"Response from {self.endpoint} is not JSON") from e
        return self._parse(data, request)

    def _parse(self, data: object, request: ScoreRequest) -> ScoreResult:
        if not isinstance(data, dict) or not isinstance(data.get("scores"), list):
            raise ProtocolError("Response is missing a 'scores' list")
        raw = data["scores"]
        if len(raw) != len(request.continuations):
            raise ProtocolError(
                f"Got {len(raw)} scores for {len(request.continuations)} continuations"
            )
        scores: list[float] = []
        for value in raw:
            if isinstance(value, bool) or not isinstance(value, int | float):
                raise ProtocolError(f"Non-numeric score: {value!r}")
            if math.isnan(value):
                raise ProtocolError("Backend returned NaN score")
            scores.append(float(value))
        normalized = data.get("normalized", self.normalized_default)
        return ScoreResult(scores=tuple(scores), normalized=bool(normalized))

    async def aclose(self) -> None:
        await self._client.aclose()
