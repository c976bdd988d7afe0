import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from matchbox import synth


@pytest.fixture(scope="session")
def small_print():
    """One synthetic print shared by read-only tests."""
    img, truth = synth.generate(
        synth.SynthSpec(seed=424242, minutiae_count=25, singularity="loop")
    )
    return img, truth


@pytest.fixture(scope="session")
def template_bank():
    """Twelve distinct templates across the three flow families."""
    bank = []
    kinds = synth.SINGULARITY_TYPES
    for i in range(12):
        spec = synth.SynthSpec(
            seed=9000 + 17 * i,
            width=224,
            height=256,
            minutiae_count=24,
            singularity=kinds[i % 3],
        )
        img, truth = synth.generate(spec)
        bank.append(synth.template_from_truth(img, truth))
    return bank


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def acceptance_bank():
    """200 synthetic subjects for the acceptance experiments: images are
    discarded, templates carry ground-truth minutiae + image descriptors."""
    kinds = synth.SINGULARITY_TYPES
    templates = []
    for i in range(200):
        spec = synth.SynthSpec(
            seed=31337 + 101 * i,
            minutiae_count=30,
            singularity=kinds[i % 3],
        )
        img, truth = synth.generate(spec)
        templates.append(synth.template_from_truth(img, truth))
    return templates
