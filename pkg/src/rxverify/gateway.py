"""Language-model gateway: templates, sampling profiles, providers, retries.

Every model call in the package goes through :class:`Gateway`.  The
default provider is a deterministic offline stub whose responses are pure
functions of the rendered request, so the whole engine runs without
network access; an HTTP provider can be swapped in for real models.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Protocol

from . import dose_text
from .core import parse_labeled_case
from .errors import GatewayError, MissingVariable, ProviderError, RateLimited, Timeout
from .icd_match import normalize_name

logger = logging.getLogger(__name__)

PROMPT_DELIMITER = "-" * 40

BASE_EVALUATION_PROMPT = """You are a meticulous clinical pharmacist specializing in medication safety and appropriateness. Given a patient's profile and prescription, your task is to thoroughly evaluate the prescription's suitability.
Pay close attention to the patient's age, medical conditions (especially kidney failure, liver disease, and pregnancy), and any relevant allergies.
Follow these steps for each medication in the prescription:
1. Assess Patient Profile: Carefully review the patient's information to identify any potential risk factors or contraindications.
2. Verify Indication: Determine if the medication or combination of medication is APPROPRIATE, INAPPROPRIATE, or UNDERPRESCRIBED for the patient's diagnosed condition(s).
3. Verify Dosage and Administration (If Appropriate): If the medication is appropriate, confirm that the prescribed dosage and administration instructions are safe and effective for the patient.
4. Conclusion: For each medication, provide a final assessment:
    * If APPROPRIATE, state "APPROPRIATE".
    * If INAPPROPRIATE, specify which aspect (e.g., dosage, active ingredient, interaction) is problematic and provide a detailed explanation.
Prescription:
"""

INTERACTION_EVALUATION_PROMPT = """You are a meticulous clinical pharmacist specializing in medication safety and appropriateness.
Given the reference materials below.
""" + PROMPT_DELIMITER + """
{summary}
""" + PROMPT_DELIMITER + """
Your task is to thoroughly evaluate the prescription's suitability.
Pay close attention to the patient's age, medical conditions (especially kidney failure, liver disease, and pregnancy), and any relevant allergies.
Follow these steps for each medication in the prescription:
1. Assess Patient Profile: Carefully review the patient's information to identify any potential risk factors or contraindications.
2. Verify Indication: Determine if the medication or combination of medication is APPROPRIATE, INAPPROPRIATE, or UNDERPRESCRIBED for the patient's diagnosed condition(s).
3. Verify Dosage and Administration (If Appropriate): If the medication is appropriate, confirm that the prescribed dosage and administration instructions are safe and effective for the patient.
4. Conclusion: For each medication, provide a final assessment:
    * If APPROPRIATE, state "APPROPRIATE".
    * If INAPPROPRIATE, specify which aspect (e.g., dosage, active ingredient, interaction) is problematic and provide a detailed explanation.
Prescription:
"""

DEFAULT_TEMPLATES: dict[str, str] = {
    "base_evaluation": BASE_EVALUATION_PROMPT,
    "interaction_evaluation": INTERACTION_EVALUATION_PROMPT,
    "icd_codes": (
        "List the ICD-10 codes of the conditions treated by the active ingredient"
        " {ingredient}. Answer with the codes only, separated by commas.\n"
    ),
    "diagnosis_codes": (
        "Assign the most specific ICD-10 code to the diagnosis below."
        " Answer with the code only.\nDiagnosis: {diagnosis}\n"
    ),
    "disease_match": (
        "Pick the condition from the candidate list that is closest in meaning"
        " to the diagnosis.\nDiagnosis: {diagnosed}\nCandidates:\n{candidates}\n"
        "Answer with one candidate name exactly as written.\n"
    ),
    "dosage_extraction": (
        "Extract the dosage recommendations for {disease} from the reference"
        " text below. Answer with a JSON list of objects with keys dosage,"
        " relation (INITIAL_DOSAGE or SPECIFIC_DOSAGE), age_specific,"
        " administration and indication.\nContext: {context}\nText:\n{text}\n"
    ),
    "prescription_structuring": (
        "Convert the prescription below into a JSON object with keys case_id,"
        " patient (age_years, diagnoses as text plus optional icd10) and items"
        " (ingredient, brand, strength_mg, dose_instruction).\n{text}\n"
    ),
    "interaction_summary": (
        "Summarize the following drug interaction facts for a clinical"
        " pharmacist:\n{facts}\n"
    ),
}

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


def render_template(
    template_id: str,
    variables: Mapping[str, str] | None = None,
    templates: Mapping[str, str] | None = None,
) -> str:
    """Substitute {name} placeholders; every placeholder must be bound."""
    templates = DEFAULT_TEMPLATES if templates is None else templates
    if template_id not in templates:
        raise KeyError(f"unknown template: {template_id!r}")
    template = templates[template_id]
    variables = variables or {}
    names = set(_PLACEHOLDER_RE.findall(template))
    missing = [name for name in names if name not in variables]
    if missing:
        raise MissingVariable(missing)
    return _PLACEHOLDER_RE.sub(lambda m: str(variables[m.group(1)]), template)


@dataclass(frozen=True)
class LmParams:
    temperature: float = 0.0
    top_p: float = 1.0
    top_k: int | None = None
    max_tokens: int = 1024

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature out of range: {self.temperature}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p out of range: {self.top_p}")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError(f"top_k out of range: {self.top_k}")


@dataclass(frozen=True)
class LmRequest:
    template_id: str
    variables: Mapping[str, str]
    params: LmParams = LmParams()


@dataclass(frozen=True)
class LmResponse:
    text: str
    generated_tokens: int
    latency_ms: int


@dataclass(frozen=True)
class ModelProfile:
    """Sampling defaults for one model family.

    ``top_k_supported`` is False for providers whose API has no top-k
    knob; a requested top_k is then dropped with a warning.  Per-task
    overrides adjust single parameters for specific template ids.
    """

    name: str
    temperature: float = 0.0
    top_p: float = 1.0
    top_k: int | None = None
    top_k_supported: bool = True
    temperature_range: tuple[float, float] | None = None
    task_overrides: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    def resolve(self, params: LmParams, template_id: str) -> LmParams:
        resolved = replace(
            params,
            temperature=params.temperature if params.temperature else self.temperature,
            top_p=self.top_p if params.top_p == 1.0 else params.top_p,
            top_k=params.top_k if params.top_k is not None else self.top_k,
        )
        override = self.task_overrides.get(template_id)
        if override:
            resolved = replace(resolved, **dict(override))
        if self.temperature_range is not None:
            low, high = self.temperature_range
            clamped = min(max(resolved.temperature, low), high)
            if clamped != resolved.temperature:
                logger.warning(
                    "clamping temperature %.2f into [%s, %s] for %s",
                    resolved.temperature, low, high, self.name,
                )
                resolved = replace(resolved, temperature=clamped)
        if resolved.top_k is not None and not self.top_k_supported:
            logger.warning("profile %s does not support top_k; dropping it", self.name)
            resolved = replace(resolved, top_k=None)
        return resolved


def load_profiles(path: str | None = None) -> dict[str, ModelProfile]:
    """Load sampling profiles from JSON (bundled defaults when no path)."""
    if path is None:
        from importlib.resources import files

        raw = json.loads(files("rxverify.data").joinpath("lm_profiles.json").read_text("utf-8"))
    else:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    profiles = {}
    for name, entry in raw.items():
        rng = entry.get("temperature_range")
        profiles[name] = ModelProfile(
            name=name,
            temperature=entry.get("temperature", 0.0),
            top_p=entry.get("top_p", 1.0),
            top_k=entry.get("top_k"),
            top_k_supported=entry.get("top_k_supported", True),
            temperature_range=tuple(rng) if rng else None,
            task_overrides=entry.get("task_overrides", {}),
        )
    return profiles


class Provider(Protocol):  # pragma: no cover - structural type only
    name: str

    def complete_prompt(self, prompt: str, request: LmRequest) -> "ProviderResult":
        ...


@dataclass(frozen=True)
class ProviderResult:
    text: str
    latency_ms: int | None = None
    generated_tokens: int | None = None


# Count of outbound network sends; the stub never touches it, which makes
# "no network happened" assertable from tests.
_transport_calls = 0
_transport_lock = threading.Lock()


def record_transport_call() -> None:
    global _transport_calls
    with _transport_lock:
        _transport_calls += 1


def transport_call_count() -> int:
    return _transport_calls


def reset_transport_counter() -> None:
    global _transport_calls
    with _transport_lock:
        _transport_calls = 0


class StubProvider:
    """Offline provider: keyed lookup, task handlers, echo fallback.

    ``responses`` maps an exact rendered prompt to a canned reply.  Known
    template ids fall back to small rule-based handlers (ICD lookup from a
    static name-to-codes mapping, token-overlap disease matching, dose
    phrase extraction, labeled-line prescription parsing, interaction fact
    pass-through).  Anything else echoes the prompt, so every response is
    a pure function of the request.
    """

    name = "stub"

    def __init__(
        self,
        responses: Mapping[str, str] | None = None,
        mapping: Mapping[str, list[str]] | None = None,
        handlers: Mapping[str, Callable[[Mapping[str, str]], str]] | None = None,
    ):
        self.responses = dict(responses or {})
        self.mapping = {normalize_name(k): v for k, v in (mapping or {}).items()}
        self.handlers: dict[str, Callable[[Mapping[str, str]], str]] = {
            "icd_codes": self._codes_for_name("ingredient"),
            "diagnosis_codes": self._codes_for_name("diagnosis"),
            "disease_match": self._match_disease,
            "dosage_extraction": self._extract_dosages,
            "prescription_structuring": self._structure_prescription,
            "interaction_summary": self._summarize_interactions,
        }
        self.handlers.update(handlers or {})
        self.call_count = 0

    def _codes_for_name(self, variable: str) -> Callable[[Mapping[str, str]], str]:
        def handler(variables: Mapping[str, str]) -> str:
            codes = self.mapping.get(normalize_name(variables.get(variable, "")), [])
            return ", ".join(codes)

        return handler

    @staticmethod
    def _match_disease(variables: Mapping[str, str]) -> str:
        candidates = [c for c in variables.get("candidates", "").split("\n") if c.strip()]
        if not candidates:
            return ""
        if len(candidates) == 1:
            return candidates[0]
        diagnosed_tokens = set(normalize_name(variables.get("diagnosed", "")).split())
        best = min(
            candidates,
            key=lambda c: (-len(diagnosed_tokens & set(normalize_name(c).split())), normalize_name(c)),
        )
        return best

    @staticmethod
    def _extract_dosages(variables: Mapping[str, str]) -> str:
        entries = dose_text.extract_dose_entries(
            variables.get("text", ""), context=variables.get("context", "")
        )
        return json.dumps(entries, ensure_ascii=False)

    @staticmethod
    def _structure_prescription(variables: Mapping[str, str]) -> str:
        return json.dumps(parse_labeled_case(variables.get("text", "")), ensure_ascii=False)

    @staticmethod
    def _summarize_interactions(variables: Mapping[str, str]) -> str:
        return variables.get("facts", "")

    def complete_prompt(self, prompt: str, request: LmRequest) -> ProviderResult:
        self.call_count += 1
        if prompt in self.responses:
            text = self.responses[prompt]
        else:
            handler = self.handlers.get(request.template_id)
            text = handler(request.variables) if handler else prompt
        return ProviderResult(text=text, latency_ms=0)


class HttpProvider:
    """Thin provider over an injectable ``send`` callable.

    ``send`` receives a JSON-serializable payload and returns the response
    text.  The API key is read from an environment variable, never from
    configuration files.  Every send is counted by the transport
    instrumentation.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        send: Callable[[dict], str],
        api_key_env: str = "RXVERIFY_API_KEY",
        name: str = "http",
    ):
        if not endpoint:
            raise GatewayError("http provider requires an endpoint")
        api_key = os.environ.get(api_key_env)
        if not api_key:
            raise GatewayError(f"API key environment variable {api_key_env} is not set")
        self.endpoint = endpoint
        self.model = model
        self.name = name
        self._send = send
        self._api_key = api_key

    def complete_prompt(self, prompt: str, request: LmRequest) -> ProviderResult:
        payload = {
            "endpoint": self.endpoint,
            "model": self.model,
            "prompt": prompt,
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "max_tokens": request.params.max_tokens,
        }
        if request.params.top_k is not None:
            payload["top_k"] = request.params.top_k
        record_transport_call()
        start = time.perf_counter()
        try:
            text = self._send(payload)
        except (Timeout, RateLimited, ProviderError):
            raise
        except Exception as exc:
            raise ProviderError(f"provider send failed: {exc}") from exc
        latency = int((time.perf_counter() - start) * 1000)
        return ProviderResult(text=text, latency_ms=latency)


def _count_tokens(text: str) -> int:
    return len(text.split())


class Gateway:
    """Single entry point for model calls: render, throttle, retry, account.

    Thread safe; a semaphore caps in-flight provider calls and an optional
    minimum interval spaces them out.  Transient provider failures retry
    with exponential backoff before surfacing.
    """

    def __init__(
        self,
        provider: Provider,
        templates: Mapping[str, str] | None = None,
        profile: ModelProfile | None = None,
        max_retries: int = 3,
        backoff_s: float = 0.05,
        concurrency: int = 4,
        min_interval_s: float = 0.0,
    ):
        self.provider = provider
        self.templates = dict(DEFAULT_TEMPLATES if templates is None else templates)
        self.profile = profile
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._semaphore = threading.Semaphore(concurrency)
        self._min_interval_s = min_interval_s
        self._last_call = 0.0
        self._lock = threading.Lock()
        self.history: list[LmResponse] = []

    def render(self, template_id: str, variables: Mapping[str, str] | None = None) -> str:
        return render_template(template_id, variables, self.templates)

    @property
    def total_tokens(self) -> int:
        with self._lock:
            return sum(r.generated_tokens for r in self.history)

    def _throttle(self) -> None:
        if self._min_interval_s <= 0:
            return
        with self._lock:
            wait = self._last_call + self._min_interval_s - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_call = time.monotonic()

    def complete(self, request: LmRequest) -> LmResponse:
        params = request.params
        if self.profile is not None:
            params = self.profile.resolve(params, request.template_id)
            request = replace(request, params=params)
        prompt = self.render(request.template_id, request.variables)
        attempt = 0
        while True:
            try:
                with self._semaphore:
                    self._throttle()
                    result = self.provider.complete_prompt(prompt, request)
                break
            except (Timeout, RateLimited, ProviderError) as exc:
                attempt += 1
                if attempt > self.max_retries:
                    raise
                delay = self.backoff_s * (2 ** (attempt - 1))
                if isinstance(exc, RateLimited) and exc.retry_after:
                    delay = max(delay, exc.retry_after)
                logger.warning("gateway retry %d/%d after %s", attempt, self.max_retries, exc)
                time.sleep(delay)
        tokens = result.generated_tokens
        if tokens is None:
            tokens = _count_tokens(result.text)
        response = LmResponse(
            text=result.text,
            generated_tokens=tokens,
            latency_ms=result.latency_ms if result.latency_ms is not None else 0,
        )
        with self._lock:
            self.history.append(response)
        return response

    def complete_template(
        self,
        template_id: str,
        variables: Mapping[str, str] | None = None,
        params: LmParams | None = None,
    ) -> LmResponse:
        return self.complete(
            LmRequest(template_id=template_id, variables=variables or {}, params=params or LmParams())
        )


def load_static_mapping(path: str | None = None) -> dict[str, list[str]]:
    """Name-to-codes lookup used by the stub for code assignment."""
    if path is None:
        from importlib.resources import files

        return json.loads(files("rxverify.data").joinpath("disease_icd_map.json").read_text("utf-8"))
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def stub_gateway(
    responses: Mapping[str, str] | None = None,
    mapping: Mapping[str, list[str]] | None = None,
    **kwargs,
) -> Gateway:
    """A ready-to-use offline gateway with the bundled code mapping."""
    if mapping is None:
        mapping = load_static_mapping()
    return Gateway(StubProvider(responses=responses, mapping=mapping), **kwargs)
