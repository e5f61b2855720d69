"""Dysarthria severity classification from short speech recordings.

The pipeline extracts glottal-pulse and formant features from sustained
phonations, trains a demographic-routed hierarchy of boosted-tree binary
classifiers, and fuses their outputs into a five-class severity decision
(1 = most severe, 5 = healthy).
"""

from dysarthria.corpus import AudioClip, SpeakerRecord, UtteranceKind

__all__ = ["AudioClip", "SpeakerRecord", "UtteranceKind"]

__version__ = "0.1.0"
