from .config import ATTENTION_MODES, ConfigError, ModelConfig
from .network import (Backbone, ClassifyHead, CopilotNet, HeatmapHead, Predictions,
                      grid_to_tokens, tokens_to_grid)
