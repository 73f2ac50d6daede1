from glsed.corpus.labels import (ClipRecord, DetectionEvent, LabelFormatError, ManifestError, StrongAnnotation,
                                 WeakLabel, format_strong_labels, format_weak_labels, parse_strong_labels,
                                 parse_weak_labels, read_manifest, weaken)
from glsed.corpus.statistics import CooccurrenceTable, count_cooccurrence, event_statistics
from glsed.corpus.vocabulary import DCASE_CLASSES, EventVocabulary
