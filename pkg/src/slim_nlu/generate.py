"""Template-based synthetic multi-intent utterances.

Each record joins one single-intent template instantiation per sampled
intent with a connector phrase, so every slot's intent is known exactly.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from .data import UtteranceRecord
from .errors import ConfigError

_PLACEHOLDER = re.compile(r"^\{(\w+)\}$")

DEFAULT_TEMPLATES = {
    "PlayMusic": [
        "play {song} by {artist}",
        "listen to {artist}",
        "i want to hear {song}",
        "put on some {artist} music",
        "play the song {song}",
        "can you play {artist} album {song}",
    ],
    "GetWeather": [
        "what is the weather in {city}",
        "will it rain in {city} {date}",
        "tell me the forecast for {date} in {city}",
        "how hot will it be {date}",
        "is it going to snow in {city}",
        "weather for {city} {date}",
    ],
    "BookRestaurant": [
        "book a {cuisine} restaurant in {city}",
        "reserve a table {date} at a {cuisine} place",
        "find me a {cuisine} restaurant",
        "i need a table in {city} {date}",
        "book dinner for {date} somewhere {cuisine}",
    ],
    "AddToPlaylist": [
        "add {song} to {playlist}",
        "put {artist} on my {playlist} playlist",
        "add this track to {playlist}",
        "save {song} by {artist} to my {playlist} list",
        "include {artist} in {playlist}",
    ],
}

DEFAULT_LEXICONS = {
    "artist": ["michael jackson", "westbam", "taylor swift", "the beatles", "adele", "miles davis",
               "daft punk", "nina simone", "bob marley", "radiohead", "lady gaga", "johnny cash",
               "billie eilish", "frank sinatra"],
    "song": ["thriller", "allergic", "yesterday", "rolling in the deep", "blue in green", "one more time",
             "feeling good", "redemption song", "karma police", "bad romance", "ring of fire",
             "bad guy", "my way", "shake it off"],
    "city": ["south carolina", "new york", "paris", "los angeles", "tokyo", "san francisco", "berlin",
             "chicago", "boston", "seattle", "madrid", "rome", "lagos", "lima"],
    "date": ["today", "tomorrow", "next monday", "this weekend", "tonight", "on friday",
             "next week", "in two days", "saturday evening", "sunday morning"],
    "cuisine": ["italian", "thai", "mexican", "sushi", "indian", "french", "korean", "vegan",
                "greek", "ethiopian"],
    "playlist": ["workout", "chill vibes", "road trip", "study beats", "party mix", "rainy day",
                 "throwback", "dinner jazz"],
}

DEFAULT_CONNECTORS = ["and", "and also", "and then"]
DEFAULT_MIX = {1: 0.3, 2: 0.5, 3: 0.2}


@dataclass
class GeneratorConfig:
    templates: dict[str, list[str]] = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_TEMPLATES.items()})
    lexicons: dict[str, list[str]] = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_LEXICONS.items()})
    mix: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_MIX))
    connectors: list[str] = field(default_factory=lambda: list(DEFAULT_CONNECTORS))
    seed: int = 0

    def __post_init__(self):
        self.mix = {int(k): float(v) for k, v in self.mix.items()}
        self.validate()

    def validate(self) -> None:
        if not self.templates:
            raise ConfigError("generator needs at least one intent")
        for intent, patterns in self.templates.items():
            if not patterns:
                raise ConfigError(f"intent {intent!r} has no templates")
            for pattern in patterns:
                for tok in pattern.split():
                    m = _PLACEHOLDER.match(tok)
                    if m and not self.lexicons.get(m.group(1)):
                        raise ConfigError(f"placeholder {tok} in {pattern!r} has no lexicon entries")
        if not self.connectors or not all(c.split() for c in self.connectors):
            raise ConfigError("connectors must be non-empty phrases")
        if any(k < 1 or p < 0 for k, p in self.mix.items()) or abs(sum(self.mix.values()) - 1.0) > 1e-6:
            raise ConfigError(f"mix must be a distribution over k >= 1, got {self.mix}")
        k_max = max(k for k, p in self.mix.items() if p > 0)
        if k_max > len(self.templates):
            raise ConfigError(f"mix asks for {k_max} intents but only {len(self.templates)} exist")

    @classmethod
    def from_dict(cls, obj: dict) -> GeneratorConfig:
        unknown = set(obj) - {"templates", "lexicons", "mix", "connectors", "seed"}
        if unknown:
            raise ConfigError(f"unknown generator config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_file(cls, path) -> GeneratorConfig:
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read generator config {path}: {exc}") from None
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        return {"templates": self.templates, "lexicons": self.lexicons,
                "mix": {str(k): v for k, v in sorted(self.mix.items())},
                "connectors": self.connectors, "seed": self.seed}

    @property
    def slot_types(self) -> list[str]:
        used = set()
        for patterns in self.templates.values():
            for pattern in patterns:
                used.update(m.group(1) for m in map(_PLACEHOLDER.match, pattern.split()) if m)
        return sorted(used)


def _instantiate(pattern: str, intent: str, lexicons, rng: random.Random):
    tokens, tags, slot_intents = [], [], []
    for tok in pattern.split():
        m = _PLACEHOLDER.match(tok)
        if m is None:
            tokens.append(tok)
            tags.append("O")
            continue
        slot = m.group(1)
        value = rng.choice(lexicons[slot]).split()
        tokens.extend(value)
        tags.extend([f"B-{slot}"] + [f"I-{slot}"] * (len(value) - 1))
        slot_intents.append(intent)
    return tokens, tags, slot_intents


def generate(config: GeneratorConfig, count: int, seed: int | None = None) -> list[UtteranceRecord]:
    """``count`` records; a pure function of (config, seed, count)."""
    rng = random.Random(config.seed if seed is None else seed)
    intents = sorted(config.templates)
    ks = sorted(config.mix)
    weights = [config.mix[k] for k in ks]
    if max(k for k, w in zip(ks, weights) if w > 0) > len(intents):
        raise ConfigError("mix asks for more intents than the inventory holds")
    records = []
    for _ in range(count):
        k = rng.choices(ks, weights=weights)[0]
        chosen = rng.sample(intents, k)
        tokens, tags, slot_intents = [], [], []
        for j, intent in enumerate(chosen):
            if j:
                connector = rng.choice(config.connectors).split()
                tokens.extend(connector)
                tags.extend(["O"] * len(connector))
            t, g, s = _instantiate(rng.choice(config.templates[intent]), intent, config.lexicons, rng)
            tokens.extend(t)
            tags.extend(g)
            slot_intents.extend(s)
        records.append(UtteranceRecord(tokens, tags, sorted(chosen), slot_intents))
    return records
