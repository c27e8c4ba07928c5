"""Phoneme-indexed expression parameter synthesis with neural retargeting."""

from .core import (
    EXPRESSION_DIM,
    EditScript,
    ExpressionTrack,
    FullFaceFrame,
    GeneralizedToken,
    GESTURE,
    GESTURE_NAMES,
    PHONEME,
    PhonosynthError,
    TokenSequence,
    VisemeTable,
    parse_edit_script,
    viseme_of,
)

__version__ = "0.1.0"
