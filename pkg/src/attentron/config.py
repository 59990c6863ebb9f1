"""Model hyperparameters, training configuration, and the key=value config file."""

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError, InputError

# pad at index 0, then the speakable alphabet
ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789 ',.-"
CHAR_TO_ID = {ch: i + 1 for i, ch in enumerate(ALPHABET)}
VOCAB_SIZE = len(ALPHABET) + 1

FINE_MODES = ("attention", "average_pool", "self_attention", "none")
VALUE_PATHS = ("raw_fc", "encoded")


def text_to_ids(text: str) -> list[int]:
    """Normalize (lowercase, strip ends) and map to ids; unknown chars are errors."""
    normalized = text.lower().strip()
    if not normalized:
        raise InputError("text is empty after normalization")
    ids = []
    for pos, ch in enumerate(normalized):
        if ch not in CHAR_TO_ID:
            raise InputError(f"character {ch!r} at position {pos} is outside the alphabet")
        ids.append(CHAR_TO_ID[ch])
    return ids


@dataclass
class HyperParams:
    """Architecture widths; defaults follow the full-scale configuration."""
    n_mels: int = 80
    d_char: int = 512           # character embedding
    d_m: int = 256              # attention key/query width
    d_v: int = 256              # variable-length embedding width
    d_g: int = 256              # global embedding width
    conv_channels: int = 512
    kernel: int = 3
    lstm_cells: int = 256       # per direction
    d_dec: int = 512            # decoder LSTM width
    prenet_width: int = 256
    dropout: float = 0.5
    max_frames_factor: int = 10
    fine_mode: str = "attention"
    value_path: str = "raw_fc"
    use_coarse: bool = True

    @property
    def d_r(self) -> int:
        return 2 * self.lstm_cells

    @property
    def d_text(self) -> int:
        # text encoder output plus the broadcast global embedding
        return 2 * self.lstm_cells + self.d_g

    def validate(self):
        for f in ("n_mels", "d_char", "d_m", "d_v", "d_g", "conv_channels",
                  "kernel", "lstm_cells", "d_dec", "prenet_width",
                  "max_frames_factor"):
            if getattr(self, f) <= 0:
                raise ConfigError(f"hyperparameter {f} must be positive")
        if self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be odd, got {self.kernel}")
        if self.fine_mode not in FINE_MODES:
            raise ConfigError(f"unknown fine_mode {self.fine_mode!r}, "
                              f"expected one of {FINE_MODES}")
        if self.value_path not in VALUE_PATHS:
            raise ConfigError(f"unknown value_path {self.value_path!r}, "
                              f"expected one of {VALUE_PATHS}")
        if self.value_path == "encoded" and self.d_v % 2 != 0:
            raise ConfigError("encoded value path needs an even d_v")
        return self

    @classmethod
    def desk(cls, width: int = 64, **overrides) -> "HyperParams":
        """Small profile with every width equal; lstm cells are width/2 per direction."""
        base = dict(d_char=width, d_m=width, d_v=width, d_g=width,
                    conv_channels=width, lstm_cells=width // 2, d_dec=width,
                    prenet_width=width)
        base.update(overrides)
        return cls(**base).validate()


@dataclass
class TrainConfig:
    """Two-phase schedule; defaults are the full-scale published recipe."""
    phase1_steps: int = 30000
    phase1_lr: float = 1e-3
    phase1_decay_step: int = 20000
    phase1_lr2: float = 1e-4
    phase2_steps: int = 70000
    phase2_lr: float = 1e-4
    phase2_decay_step: int = 50000
    phase2_lr2: float = 1e-5
    batch_size: int = 16
    n_refs_train: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-6
    seed: int = 0
    include_target_as_ref: bool = False
    log_every: int = 1
    checkpoint_every: int = 1000

    def validate(self):
        if self.phase1_decay_step >= self.phase1_steps and self.phase1_steps > 0:
            raise ConfigError("phase1_decay_step must be below phase1_steps")
        if self.phase2_decay_step >= self.phase2_steps and self.phase2_steps > 0:
            raise ConfigError("phase2_decay_step must be below phase2_steps")
        if self.n_refs_train < 1:
            raise ConfigError("n_refs_train must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        return self


@dataclass
class RunConfig:
    """Everything a training run needs: model, schedule, data paths."""
    hp: HyperParams = field(default_factory=HyperParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    manifest_phase1: str = ""
    manifest_phase2: str = ""
    cache_dir: str = ""
    checkpoint_dir: str = ""


def _parse_bool(value: str, key: str) -> bool:
    v = value.lower()
    if v in ("true", "on", "yes", "1"):
        return True
    if v in ("false", "off", "no", "0"):
        return False
    raise ConfigError(f"config key {key}: cannot parse {value!r} as a boolean")


_PATH_KEYS = ("manifest_phase1", "manifest_phase2", "cache_dir", "checkpoint_dir")


def parse_config_text(text: str, path: str = "<config>") -> RunConfig:
    """Parse `key = value` lines; blank lines and # comments allowed; unknown keys error."""
    hp_fields = {f.name: f.type for f in fields(HyperParams)}
    tr_fields = {f.name: f.type for f in fields(TrainConfig)}
    hp_kwargs: dict = {}
    tr_kwargs: dict = {}
    paths: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in _PATH_KEYS:
            paths[key] = value
            continue
        if key in hp_fields:
            target, ftype = hp_kwargs, hp_fields[key]
        elif key in tr_fields:
            target, ftype = tr_kwargs, tr_fields[key]
        else:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        if ftype in ("bool", bool):
            target[key] = _parse_bool(value, key)
        elif ftype in ("int", int):
            try:
                target[key] = int(value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: key {key} needs an integer, "
                                  f"got {value!r}") from None
        elif ftype in ("float", float):
            try:
                target[key] = float(value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: key {key} needs a number, "
                                  f"got {value!r}") from None
        else:
            target[key] = value
    cfg = RunConfig(hp=HyperParams(**hp_kwargs).validate(),
                    train=TrainConfig(**tr_kwargs).validate(), **paths)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def describe_config(cfg: RunConfig) -> str:
    """One block of resolved key = value lines (the reproducibility header)."""
    lines = []
    for f in fields(HyperParams):
        lines.append(f"{f.name} = {getattr(cfg.hp, f.name)}")
    for f in fields(TrainConfig):
        lines.append(f"{f.name} = {getattr(cfg.train, f.name)}")
    for key in _PATH_KEYS:
        lines.append(f"{key} = {getattr(cfg, key)}")
    return "\n".join(lines)


def desk_run_config(**train_overrides) -> RunConfig:
    """Small-budget profile used by tests and the toy experiments."""
    train = replace(TrainConfig(), phase1_steps=400, phase1_decay_step=300,
                    phase2_steps=1500, phase2_decay_step=1200, batch_size=8,
                    n_refs_train=2, checkpoint_every=500, **train_overrides)
    return RunConfig(hp=HyperParams.desk(), train=train.validate())
