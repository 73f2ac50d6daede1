from glsed.inference.postprocess import (WindowPlan, adaptive_windows, decode_events, median_smooth,
                                         write_submission)
from glsed.inference.predict import ClipProbabilitySet, ensemble, predict, upsample_frames
