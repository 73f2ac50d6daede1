from glsed.features.logmel import FeatureConfig, extract_logmel, load_audio, pad_or_trim, resample
from glsed.features.store import FeatureFormatError, FeatureStore, read_matrix, write_matrix
