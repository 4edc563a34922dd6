"""Training hyperparameters with per-mode defaults."""

from dataclasses import dataclass, fields

from lambdaehr.errors import DataError

MODES = ("direct", "sketch", "grammar")

# Mode-specific defaults; everything else is shared.
_MODE_DEFAULTS = {
    "grammar": {
        "hidden_size": 256,
        "word_dim": 128,
        "learning_rate": 0.0025,
        "patience": 5,
        "validate_every": 1,
    },
    "sketch": {
        "hidden_size": 300,
        "word_dim": 150,
        "learning_rate": 0.005,
        "patience": None,
        "validate_every": 10,
    },
    "direct": {
        "hidden_size": 256,
        "word_dim": 128,
        "learning_rate": 5e-4,
        "patience": None,
        "validate_every": 1,
    },
}


@dataclass(frozen=True)
class TrainingConfig:
    """Everything a training run depends on besides the data.

    `patience` is the number of dev evaluations without improvement
    before stopping; None trains to `max_epochs` with the best dev
    checkpoint kept. `validate_every` spaces the dev evaluations in
    epochs. `stop_at_perfect_dev` halts as soon as the dev set is
    solved, since no later checkpoint can beat it.
    """

    mode: str = "grammar"
    hidden_size: int = 256
    word_dim: int = 128
    learning_rate: float = 0.0025
    lr_decay: float = 0.985
    dropout: float = 0.5
    max_epochs: int = 200
    patience: int | None = 5
    validate_every: int = 1
    stop_at_perfect_dev: bool = True
    clip_norm: float = 5.0
    beam_size: int = 5
    max_decode_steps: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(
                f"mode must be one of {MODES}, got {self.mode!r}"
            )
        if self.hidden_size < 1 or self.word_dim < 1:
            raise DataError("sizes must be >= 1")
        if self.learning_rate <= 0:
            raise DataError("learning rate must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise DataError("dropout must be in [0, 1)")
        if self.max_epochs < 1 or self.validate_every < 1:
            raise DataError("epoch counts must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise DataError("patience must be >= 1 when set")
        if self.beam_size < 1 or self.max_decode_steps < 1:
            raise DataError("decode limits must be >= 1")

    @classmethod
    def for_mode(cls, mode: str, **overrides) -> "TrainingConfig":
        """Defaults for a decoding mode, with keyword overrides."""
        if mode not in _MODE_DEFAULTS:
            raise DataError(
                f"mode must be one of {MODES}, got {mode!r}"
            )
        merged = dict(_MODE_DEFAULTS[mode], mode=mode)
        merged.update(overrides)
        return cls(**merged)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DataError(
                f"unknown config keys: {', '.join(sorted(unknown))}"
            )
        return cls(**data)
