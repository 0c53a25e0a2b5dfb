"""Model backends: every nondeterministic byte entering the pipeline flows here.

A BackendHub routes chat / embed / detect / depth calls through a
content-addressed StageCache. Cache hits are served without touching the
provider (in live mode too), so a warmed cache replays a run bit-exactly
regardless of worker scheduling. Live HTTP providers are opt-in.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .config import ModelIds, SamplingParams
from .core import ImageRef
from .errors import (
    BackendUnavailable,
    DimensionMismatch,
    MalformedResponse,
    ReplayMiss,
)

_TIMEOUT = float(os.environ.get("OWSGG_HTTP_TIMEOUT", "120"))


@dataclass(frozen=True)
class ChatRequest:
    prompt: str
    image: ImageRef | None
    sampling: SamplingParams
    # Retry ordinal. Distinct attempts get distinct cache keys so a live run
    # that succeeded on its second try replays the same way.
    attempt: int = 0

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("empty prompt")
        if self.sampling.temperature < 0 or not 0.0 < self.sampling.top_p <= 1.0:
            raise ValueError("sampling parameters out of range")


@dataclass(frozen=True)
class DetectionRequest:
    image: ImageRef
    label: str
    box_threshold: float
    text_threshold: float

    def __post_init__(self):
        if any(sep in self.label for sep in (".", ",", ";", "|", "\n")):
            raise ValueError(f"label {self.label!r} contains separator tokens; one object name per request")
        if not self.label.strip():
            raise ValueError("empty label")


@dataclass(frozen=True)
class DepthMap:
    width: int
    height: int
    values: np.ndarray  # (height, width), normalized to [0,1]

    def __post_init__(self):
        if self.values.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"depth values shaped {self.values.shape}, expected {(self.height, self.width)}"
            )
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValueError("depth values outside [0,1]")


@dataclass(frozen=True)
class CacheKey:
    stage: str  # chat | embed | detect | depth
    content_hash: str


def normalize_depth(raw: np.ndarray) -> np.ndarray:
    """Per-image min-max normalization; constant maps normalize to all zeros."""
    raw = np.asarray(raw, dtype=np.float64)
    lo, hi = raw.min(), raw.max()
    if hi <= lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# Cache


def _canonical(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def make_cache_key(stage: str, payload: dict) -> CacheKey:
    return CacheKey(stage=stage, content_hash=hashlib.sha256(_canonical(payload).encode()).hexdigest())


class StageCache:
    """Append-only JSON-Lines record of backend request/response pairs.

    Concurrent reads are safe; appends are serialized; a reader never sees a
    partial record (the in-memory index is updated only after the full line
    is flushed, and the loader skips a torn final line).
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[tuple[str, str], dict] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        for line in self.path.read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn tail from an interrupted append
            self._index[(rec["stage"], rec["key"])] = rec

    def lookup(self, key: CacheKey) -> dict | None:
        with self._lock:
            return self._index.get((key.stage, key.content_hash))

    def append(self, key: CacheKey, request: dict, response) -> None:
        rec = {
            "key": key.content_hash,
            "stage": key.stage,
            "request": request,
            "response": response,
            "timestamp": time.time(),
        }
        line = json.dumps(rec, sort_keys=True)
        with self._lock:
            if (key.stage, key.content_hash) in self._index:
                return  # idempotent: first record wins
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a") as fh:
                fh.write(line + "\n")
                fh.flush()
            self._index[(key.stage, key.content_hash)] = rec

    def __len__(self) -> int:
        with self._lock:
            return len(self._index)


# ---------------------------------------------------------------------------
# Image helpers

_image_hashes: dict[str, str] = {}
_image_lock = threading.Lock()


def image_digest(image: ImageRef) -> str:
    with _image_lock:
        cached = _image_hashes.get(image.path)
    if cached is not None:
        return cached
    digest = hashlib.sha256(Path(image.path).read_bytes()).hexdigest()
    with _image_lock:
        _image_hashes[image.path] = digest
    return digest


def image_b64(image: ImageRef) -> str:
    return base64.b64encode(Path(image.path).read_bytes()).decode("ascii")


def _image_payload(image: ImageRef | None):
    if image is None:
        return None
    return {"id": image.id, "sha256": image_digest(image)}


def _mime_type(path: str) -> str:
    ext = Path(path).suffix.lower()
    return {"": "application/octet-stream", ".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg"}.get(
        ext, "application/octet-stream"
    )


# ---------------------------------------------------------------------------
# Live HTTP providers


def _post(url: str, payload: dict, headers: dict | None = None, retries: int = 1) -> dict:
    last = None
    for _ in range(retries + 1):
        try:
            resp = requests.post(url, json=payload, headers=headers or {}, timeout=_TIMEOUT)
        except requests.RequestException as exc:
            last = exc
            continue
        if resp.status_code != 200:
            last = BackendUnavailable(f"{url} -> HTTP {resp.status_code}: {resp.text[:200]}")
            continue
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"{url} returned non-JSON payload") from exc
    raise BackendUnavailable(f"{url} unreachable: {last}")


class HttpChatBackend:
    """OpenAI-compatible chat-completions endpoint."""

    def __init__(self, base_url: str, model: str, api_key: str = "", retries: int = 1):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.retries = retries

    def chat(self, req: ChatRequest) -> str:
        content: list[dict] = [{"type": "text", "text": req.prompt}]
        if req.image is not None:
            data_url = f"data:{_mime_type(req.image.path)};base64,{image_b64(req.image)}"
            content.append({"type": "image_url", "image_url": {"url": data_url}})
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": req.sampling.temperature,
            "top_p": req.sampling.top_p,
            "max_tokens": req.sampling.max_tokens,
            "presence_penalty": req.sampling.presence_penalty,
            "repetition_penalty": req.sampling.repetition_penalty,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        doc = _post(f"{self.base_url}/chat/completions", payload, headers, self.retries)
        try:
            text = doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"chat response missing choices: {doc}") from exc
        if not isinstance(text, str):
            raise MalformedResponse("chat message content is not text")
        return text


class HttpEmbeddingBackend:
    """OpenAI-compatible embeddings endpoint."""

    def __init__(self, base_url: str, model: str, api_key: str = "", retries: int = 1):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.retries = retries

    def embed(self, texts: list[str]) -> list[list[float]]:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        doc = _post(f"{self.base_url}/embeddings", {"model": self.model, "input": texts}, headers, self.retries)
        try:
            rows = sorted(doc["data"], key=lambda d: d.get("index", 0))
            return [list(map(float, row["embedding"])) for row in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"embeddings response malformed: {exc}") from exc


class ShimBackend:
    """Client for the model shim's /detect, /depth, /embed protocol."""

    def __init__(self, base_url: str, retries: int = 1):
        self.base_url = base_url.rstrip("/")
        self.retries = retries

    def detect(self, req: DetectionRequest) -> dict:
        payload = {
            "image_b64": image_b64(req.image),
            "label": req.label,
            "box_threshold": req.box_threshold,
            "text_threshold": req.text_threshold,
        }
        doc = _post(f"{self.base_url}/detect", payload, retries=self.retries)
        if "boxes" not in doc or "scores" not in doc or len(doc["boxes"]) != len(doc["scores"]):
            raise MalformedResponse(f"detect response malformed: {doc}")
        return {"boxes": doc["boxes"], "scores": doc["scores"]}

    def depth(self, image: ImageRef) -> dict:
        doc = _post(f"{self.base_url}/depth", {"image_b64": image_b64(image)}, retries=self.retries)
        for field in ("width", "height", "values_b64"):
            if field not in doc:
                raise MalformedResponse(f"depth response missing {field!r}")
        return {"width": doc["width"], "height": doc["height"], "values_b64": doc["values_b64"]}

    def embed(self, texts: list[str]) -> list[list[float]]:
        doc = _post(f"{self.base_url}/embed", {"texts": texts}, retries=self.retries)
        if "vectors" not in doc or len(doc["vectors"]) != len(texts):
            raise MalformedResponse("embed response malformed")
        return [list(map(float, v)) for v in doc["vectors"]]


# ---------------------------------------------------------------------------
# Hub


class BackendHub:
    """Cache-fronted access to all four model operations.

    mode="replay" never consults providers; a key miss raises ReplayMiss.
    mode="live" consults the cache first and records every provider response
    before returning it.
    """

    def __init__(
        self,
        cache: StageCache,
        models: ModelIds,
        mode: str = "replay",
        chat_backend=None,
        embed_backend=None,
        detect_backend=None,
        depth_backend=None,
    ):
        if mode not in ("live", "replay"):
            raise ValueError(f"unknown backend mode {mode!r}")
        self.cache = cache
        self.models = models
        self.mode = mode
        self._chat = chat_backend
        self._embed = embed_backend
        self._detect = detect_backend
        self._depth = depth_backend

    def _resolve(self, key: CacheKey, payload: dict, live_call):
        rec = self.cache.lookup(key)
        if rec is not None:
            return rec["response"]
        if self.mode == "replay":
            raise ReplayMiss(f"no cached response for {key.stage} key {key.content_hash[:12]}")
        response = live_call()
        self.cache.append(key, payload, response)
        return response

    def chat(self, req: ChatRequest) -> str:
        payload = {
            "op": "chat",
            "model": self.models.chat,
            "prompt": req.prompt,
            "image": _image_payload(req.image),
            "sampling": {
                "temperature": req.sampling.temperature,
                "top_p": req.sampling.top_p,
                "max_tokens": req.sampling.max_tokens,
                "presence_penalty": req.sampling.presence_penalty,
                "repetition_penalty": req.sampling.repetition_penalty,
            },
            "attempt": req.attempt,
        }
        key = make_cache_key("chat", payload)

        def live():
            if self._chat is None:
                raise BackendUnavailable("no chat backend configured")
            return self._chat.chat(req)

        text = self._resolve(key, payload, live)
        if not isinstance(text, str):
            raise MalformedResponse("cached chat response is not text")
        return text

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            raise ValueError("embed requires at least one text")
        payload = {"op": "embed", "model": self.models.embed, "texts": list(texts)}
        key = make_cache_key("embed", payload)

        def live():
            if self._embed is None:
                raise BackendUnavailable("no embedding backend configured")
            return self._embed.embed(list(texts))

        vectors = self._resolve(key, payload, live)
        try:
            arr = np.asarray(vectors, dtype=np.float64)
        except ValueError as exc:
            raise DimensionMismatch(f"ragged embedding batch: {exc}") from exc
        if arr.ndim != 2 or arr.shape[0] != len(texts):
            raise DimensionMismatch(f"expected {len(texts)} vectors, got shape {arr.shape}")
        norms = np.linalg.norm(arr, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise MalformedResponse("zero-norm embedding vector")
        return arr / norms

    def detect(self, req: DetectionRequest) -> list[tuple[tuple[float, float, float, float], float]]:
        payload = {
            "op": "detect",
            "model": self.models.detect,
            "image": _image_payload(req.image),
            "label": req.label,
            "box_threshold": req.box_threshold,
            "text_threshold": req.text_threshold,
        }
        key = make_cache_key("detect", payload)

        def live():
            if self._detect is None:
                raise BackendUnavailable("no detection backend configured")
            return self._detect.detect(req)

        doc = self._resolve(key, payload, live)
        out = []
        for box, score in zip(doc["boxes"], doc["scores"]):
            if float(score) >= req.box_threshold:
                out.append((tuple(float(c) for c in box), float(score)))
        return out

    def depth(self, image: ImageRef) -> DepthMap:
        payload = {"op": "depth", "model": self.models.depth, "image": _image_payload(image)}
        key = make_cache_key("depth", payload)

        def live():
            if self._depth is None:
                raise BackendUnavailable("no depth backend configured")
            return self._depth.depth(image)

        doc = self._resolve(key, payload, live)
        w, h = int(doc["width"]), int(doc["height"])
        raw = np.frombuffer(base64.b64decode(doc["values_b64"]), dtype="<f4")
        if raw.size != w * h:
            raise DimensionMismatch(f"depth payload has {raw.size} values for {w}x{h}")
        if (w, h) != (image.width, image.height):
            raise DimensionMismatch(
                f"depth map {w}x{h} does not match image {image.width}x{image.height}"
            )
        return DepthMap(width=w, height=h, values=normalize_depth(raw.reshape(h, w)))


def hub_from_env(cache: StageCache, models: ModelIds, mode: str) -> BackendHub:
    """Build a hub from OWSGG_* environment variables (live endpoints are opt-in)."""
    chat = embedder = detector = depth = None
    chat_url = os.environ.get("OWSGG_CHAT_URL")
    if chat_url:
        chat = HttpChatBackend(chat_url, models.chat, os.environ.get("OWSGG_CHAT_API_KEY", ""))
    embed_url = os.environ.get("OWSGG_EMBED_URL")
    if embed_url:
        if os.environ.get("OWSGG_EMBED_STYLE", "shim") == "openai":
            embedder = HttpEmbeddingBackend(embed_url, models.embed, os.environ.get("OWSGG_EMBED_API_KEY", ""))
        else:
            embedder = ShimBackend(embed_url)
    shim_url = os.environ.get("OWSGG_SHIM_URL")
    if shim_url:
        shim = ShimBackend(shim_url)
        detector = shim
        depth = shim
        if embedder is None:
            embedder = shim
    return BackendHub(
        cache,
        models,
        mode=mode,
        chat_backend=chat,
        embed_backend=embedder,
        detect_backend=detector,
        depth_backend=depth,
    )
