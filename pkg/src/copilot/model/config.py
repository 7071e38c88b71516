from __future__ import annotations

from dataclasses import asdict, dataclass

from ..sim.body import NUM_JOINTS, ROOT_VIEW

ATTENTION_MODES = ("joint_stv", "divided_stv", "st_concat", "single_view")
MODALITY_CHANNELS = {"rgb": 3, "depth": 1, "rgbd": 4}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Network hyperparameters.

    ``V`` is the number of input views; the views are the first ``V`` camera
    mounts. ``single_view`` consumes only the pelvis stream (mount
    ``root_view``) and yields a view axis of size 1.
    """
    V: int = 3
    T: int = 10
    image_size: int = 64
    patch_size: int = 8
    embed_dim: int = 128
    heads: int = 4
    depth: int = 4
    mlp_ratio: float = 4.0
    num_joints: int = NUM_JOINTS
    attention_mode: str = "joint_stv"
    modality: str = "depth"
    root_view: int = ROOT_VIEW
    max_views: int = 6

    def __post_init__(self):
        if self.attention_mode not in ATTENTION_MODES:
            raise ConfigError(f"unknown attention mode {self.attention_mode!r}")
        if self.modality not in MODALITY_CHANNELS:
            raise ConfigError(f"unknown modality {self.modality!r}")
        if self.image_size % self.patch_size:
            raise ConfigError("image side must be divisible by the patch size")
        if self.embed_dim % self.heads:
            raise ConfigError("embed_dim must be divisible by heads")
        stages = self.patch_size.bit_length() - 1
        if 1 << stages != self.patch_size:
            raise ConfigError("patch size must be a power of two")
        if self.embed_dim % (1 << stages):
            raise ConfigError("embed_dim must be divisible by 2**log2(patch_size)")
        if not 1 <= self.V <= self.max_views:
            raise ConfigError("V out of range")
        if self.attention_mode == "single_view" and self.V > 1 and self.root_view >= self.V:
            raise ConfigError("root view not among the input views")

    @property
    def in_channels(self) -> int:
        return MODALITY_CHANNELS[self.modality]

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def upsample_stages(self) -> int:
        return self.patch_size.bit_length() - 1

    @property
    def out_views(self) -> int:
        return 1 if self.attention_mode == "single_view" else self.V

    @property
    def view_ids(self) -> tuple[int, ...]:
        """Mount indices of the streams that enter the backbone."""
        if self.attention_mode == "single_view":
            return (self.root_view,)
        return tuple(range(self.V))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)
