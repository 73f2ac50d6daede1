from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from glsed.config import parse_args
from glsed.corpus import EventVocabulary

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def toy_vocabulary():
    return EventVocabulary(("Noise", "Tone"))


@pytest.fixture
def dcase_vocabulary():
    return EventVocabulary.dcase()


@pytest.fixture
def make_args():
    """Parsed defaults of the train command with attribute overrides."""

    def factory(**overrides):
        all_args = parse_args(["train"])
        for key, value in overrides.items():
            setattr(all_args, key, value)
        return all_args

    return factory


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def read_fixture(name):
    return pd.read_csv(FIXTURES / name, sep="\t")
