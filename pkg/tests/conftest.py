import dataclasses

import numpy as np
import pytest

from chartex import chartgen


def make_clean_spec(seed: int = 0, **overrides) -> chartgen.ChartSpec:
    """A randomly sampled, noise-free spec (deterministic per seed)."""
    rng = np.random.default_rng(seed)
    spec = chartgen.sample_spec(rng)
    spec = dataclasses.replace(spec, **{"noise": 0.0, **overrides})
    return spec


def render_clean(seed: int = 0, **overrides):
    """Render a noise-free chart, retrying seeds that cannot be laid out."""
    s = seed
    while True:
        try:
            return chartgen.render(make_clean_spec(s, **overrides))
        except chartgen.SpecInfeasible:
            s += 1


@pytest.fixture(scope="session")
def clean_chart():
    """One representative noise-free chart: (rgb, truth)."""
    return render_clean(0)
