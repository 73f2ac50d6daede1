import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from glsed.corpus.labels import (ClipRecord, StrongAnnotation, WeakLabel, check_event_ranges, read_labels,
                                 read_manifest, weaken)
from glsed.corpus.vocabulary import EventVocabulary

logger = logging.getLogger(__name__)


@dataclass
class Corpus:
    """
    Everything a run reads from the data root: the manifest and the three label files.
    Unlabeled clips are the manifest entries with subset "unlabeled".
    """
    root: Path
    vocabulary: EventVocabulary
    clips: List[ClipRecord]
    weak: List[WeakLabel] = field(default_factory=list)
    synthetic: List[StrongAnnotation] = field(default_factory=list)
    validation: List[StrongAnnotation] = field(default_factory=list)

    @classmethod
    def load(cls, root: Union[str, Path], vocabulary: EventVocabulary, manifest: str = "manifest.tsv",
             weak_labels: Optional[str] = "weak.tsv", synthetic_labels: Optional[str] = "synthetic.tsv",
             validation_labels: Optional[str] = "validation.tsv") -> 'Corpus':
        root = Path(root)
        clips = read_manifest(root / manifest)
        durations = {c.clip_id: c.duration_s for c in clips}

        def optional(name, strong):
            if not name:
                return []
            path = root / name
            if not path.exists():
                logger.warning("label file %s not found, treating it as empty", path)
                return []
            return read_labels(path, vocabulary, strong=strong)

        corpus = cls(root, vocabulary, clips,
                     weak=optional(weak_labels, strong=False),
                     synthetic=optional(synthetic_labels, strong=True),
                     validation=optional(validation_labels, strong=True))
        check_event_ranges(corpus.synthetic, durations)
        check_event_ranges(corpus.validation, durations)
        return corpus

    def subset(self, name: str) -> List[ClipRecord]:
        return [c for c in self.clips if c.subset == name]

    def durations(self) -> Dict[str, float]:
        return {c.clip_id: c.duration_s for c in self.clips}

    def training_labels(self, use_synthetic: bool) -> List[WeakLabel]:
        """The labeled training set L: weak labels, plus weakened synthetic labels if requested."""
        labels = list(self.weak)
        if use_synthetic:
            labels.extend(weaken(self.synthetic))
        return labels

    def unlabeled_ids(self) -> List[str]:
        return [c.clip_id for c in self.subset("unlabeled")]

    def validation_tags(self) -> List[WeakLabel]:
        return weaken(self.validation)
