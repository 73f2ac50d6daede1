from glsed.metrics.report import CollarConfig, EventRangeError, ScoreReport
from glsed.metrics.sed_metrics import (clip_f1, event_based_f1, greedy_shortfall, match_events, segment_based_f1,
                                       tags_from_events)
