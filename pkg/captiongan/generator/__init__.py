from captiongan.generator.types import GeneratorConfig, DecodeConfig
from captiongan.generator.types import VisualPromptSet, CaptionSample
from captiongan.generator.decoder import WordTokenizer, TinyDecoder, PretrainedDecoder
from captiongan.generator.generator import PromptMapper, CaptionGenerator
from captiongan.generator.generator import build_generator

__all__ = [
    "GeneratorConfig",
    "DecodeConfig",
    "VisualPromptSet",
    "CaptionSample",
    "WordTokenizer",
    "TinyDecoder",
    "PretrainedDecoder",
    "PromptMapper",
    "CaptionGenerator",
    "build_generator",
]
