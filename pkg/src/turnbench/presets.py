"""Built-in pipeline configurations and their latency profiles.

Four agent stacks ship as presets, with per-stage mean latencies taken
from measured end-to-end behavior of each stack (scaled 1:1000 so a
benchmark run takes milliseconds per stage rather than seconds):

* ``GPT35_ETE``     speech2text 3, llm 4, tts 8           critical path  15
* ``GPT4O_ETE``     speech2text 6, vision_llm 31, tts 8   critical path  45
* ``QuantizationLLM_ETE``
                    speech2text 20 and emotion 10 in parallel,
                    llm 28, tts 12                        critical path  60
* ``HF_ETE``        speech2text 10 and emotion 10 in parallel,
                    llm 160, tts 19                       critical path 189

Two profile bundles ship per stack: ``constant`` reproduces the
configured means exactly, and ``lognormal`` adds a seeded heavy tail
with 95% of samples within +-30% of each mean, for soak-style runs.
"""

from __future__ import annotations

from .domain import PipelineConfig, StageKind, StageSpec, chain, source, upstream, validate_pipeline
from .workers import LatencyProfile, ProfileSet, constant, lognormal


def gpt35_ete() -> PipelineConfig:
    return chain(
        "GPT35_ETE",
        StageSpec("speech2text", StageKind.SPEECH2TEXT, (source("audio"),)),
        StageSpec("llm", StageKind.LLM, (upstream("speech2text"),)),
        StageSpec("tts", StageKind.TTS, (upstream("llm"),)),
    )


def gpt4o_ete() -> PipelineConfig:
    return chain(
        "GPT4O_ETE",
        StageSpec("speech2text", StageKind.SPEECH2TEXT, (source("audio"),)),
        StageSpec(
            "vision_llm",
            StageKind.VISION_LLM,
            (upstream("speech2text"), source("video")),
        ),
        StageSpec("tts", StageKind.TTS, (upstream("vision_llm"),)),
    )


def quantization_llm_ete() -> PipelineConfig:
    return chain(
        "QuantizationLLM_ETE",
        StageSpec("emotion", StageKind.EMOTION, (source("audio"),)),
        StageSpec("speech2text", StageKind.SPEECH2TEXT, (source("audio"),)),
        StageSpec("llm", StageKind.LLM, (upstream("speech2text"), upstream("emotion"))),
        StageSpec("tts", StageKind.TTS, (upstream("llm"),)),
    )


def hf_ete() -> PipelineConfig:
    return chain(
        "HF_ETE",
        StageSpec("emotion", StageKind.EMOTION, (source("audio"),)),
        StageSpec("speech2text", StageKind.SPEECH2TEXT, (source("audio"),)),
        StageSpec("llm", StageKind.LLM, (upstream("speech2text"), upstream("emotion"))),
        StageSpec("tts", StageKind.TTS, (upstream("llm"),)),
    )


def builtin_configs() -> list[PipelineConfig]:
    return [gpt35_ete(), gpt4o_ete(), quantization_llm_ete(), hf_ete()]


#: Mean stage latency in ms for every preset configuration.
PRESET_MEANS: dict[str, dict[str, float]] = {
    "GPT35_ETE": {"speech2text": 3, "llm": 4, "tts": 8},
    "GPT4O_ETE": {"speech2text": 6, "vision_llm": 31, "tts": 8},
    "QuantizationLLM_ETE": {
        "speech2text": 20,
        "emotion": 10,
        "llm": 28,
        "tts": 12,
    },
    "HF_ETE": {"speech2text": 10, "emotion": 10, "llm": 160, "tts": 19},
}


def builtin_profiles(variant: str = "constant") -> dict[str, dict[str, LatencyProfile]]:
    """Per-config, per-stage latency profiles matching the preset means.

    ``constant`` emits each mean exactly; ``lognormal`` spreads samples
    around it with a seeded heavy tail.
    """
    if variant == "constant":
        make = constant
    elif variant == "lognormal":
        make = lognormal
    else:
        raise ValueError(f"unknown profile bundle variant {variant!r}")
    return {
        config: {stage: make(mean) for stage, mean in stages.items()}
        for config, stages in PRESET_MEANS.items()
    }


def builtin_profile_set(variant: str = "constant") -> ProfileSet:
    return ProfileSet(by_stage=builtin_profiles(variant))


def stage_means(config_name: str) -> dict[str, float]:
    return dict(PRESET_MEANS[config_name])


def critical_path_ms(config: PipelineConfig, means: dict[str, float]) -> float:
    """Longest source-to-terminal path weighted by per-stage mean latency."""
    order = validate_pipeline(config).order
    longest: dict[str, float] = {}
    for stage_id in order:
        spec = config.stage(stage_id)
        upstream_ids = [u for u in spec.upstream_ids()]
        base = max((longest[u] for u in upstream_ids), default=0.0)
        longest[stage_id] = base + float(means[stage_id])
    return longest[config.terminal_stage]


def install_presets(hub) -> None:
    """Register every built-in configuration on a hub."""
    for config in builtin_configs():
        hub.put_config(config)
