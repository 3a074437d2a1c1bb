"""Shared test fixtures."""

from collections.abc import Iterator

import numpy as np
import pytest

from fxtsp.certify import Benchmark
from fxtsp.gradflow import build_benchmark as build_gradflow_benchmark
from fxtsp.gradflow import default_params
from fxtsp.highorder import build_benchmark as build_highorder_benchmark
from fxtsp.models import GradFlowParams, HighOrderParams, IntegratorConfig, InterconnectionBounds

SYMMETRIC_Q = [[3.0, 1.0], [1.0, 5.0]]


@pytest.fixture
def rng() -> np.random.Generator:
    """Create a seeded generator."""
    return np.random.default_rng(20240611)


@pytest.fixture
def reference_params() -> GradFlowParams:
    """Gradient-flow parameters with the asymmetric reference cost."""
    return default_params()


@pytest.fixture
def symmetric_params() -> GradFlowParams:
    """Gradient-flow parameters with a symmetric cost, where every quadratic bound is exact."""
    return GradFlowParams(Q=SYMMETRIC_Q, A=[[-1.0, 0.0], [0.0, -1.0]], B=[[1.0, 0.0], [0.0, 1.0]])


@pytest.fixture
def highorder_params() -> HighOrderParams:
    """Default second-order benchmark parameters."""
    return HighOrderParams()


@pytest.fixture
def gradflow_benchmark(symmetric_params: GradFlowParams) -> Benchmark:
    """Gradient-flow benchmark on the symmetric cost with q chosen by admissibility."""
    return build_gradflow_benchmark(symmetric_params)


@pytest.fixture
def highorder_benchmark(highorder_params: HighOrderParams) -> Benchmark:
    """Second-order benchmark with q chosen by admissibility."""
    return build_highorder_benchmark(highorder_params)


@pytest.fixture
def unit_bounds() -> InterconnectionBounds:
    """Small interconnection bounds with a hand-computable P matrix."""
    return InterconnectionBounds(chi1=1.0, delta1=0.1, c1=0.1, chi2=1.0, delta2=0.1, c2=0.1)


@pytest.fixture
def fast_integrator() -> IntegratorConfig:
    """Integrator settings with a short horizon and dwell for quick runs."""
    return IntegratorConfig(t_max=20.0, dwell=0.5, dt_max_per_eps=2.0)


@pytest.fixture
def clean_environment(monkeypatch: pytest.MonkeyPatch) -> Iterator[None]:
    """Remove FXTSP_* settings from the environment."""
    for name in ("FXTSP_THREADS", "FXTSP_LOG_LEVEL", "FXTSP_LOG_JSON"):
        monkeypatch.delenv(name, raising=False)
    yield
