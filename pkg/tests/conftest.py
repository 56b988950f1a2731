"""Shared fixtures: the seeded verification families used across tests.

Two instance families, both deterministic:
  - analysis scale: 5 frames at 16x16, exact scenes plus +-0.1 px seeded flow
    jitter (keeps feature columns independent so the plain lam=0 projector
    is well posed);
  - desk scale: 10 videos of 10 frames at 64x48 with +-0.48 px jitter, the
    corpus the quantitative recovery checks run on.
"""

from __future__ import annotations

import numpy as np
import pytest

from stclust.corpus import degrade_flow, make_corpus_specs
from stclust.flow_io import synth_scene
from stclust.solver import SolverConfig

ANALYSIS_M, ANALYSIS_H, ANALYSIS_W = 5, 16, 16
ANALYSIS_JITTER = 0.1
CORPUS_JITTER = 0.48
FAMILY_SEED = 21
VIDEO_JITTER_SEED = 777


def analysis_config(**overrides) -> SolverConfig:
    base = dict(p=3, q=1, lam=0.0, bias=False, standardize=True, max_iters=300, tol=1e-13)
    base.update(overrides)
    return SolverConfig(**base)


def corpus_config(**overrides) -> SolverConfig:
    base = dict(p=5, q=1, lam=None, bias=False, standardize=True, max_iters=20, tol=1e-6)
    base.update(overrides)
    return SolverConfig(**base)


def analysis_instances(count=20):
    """Yield (video, jittered flow, gt) at the 5-frame 16x16 scale."""
    specs = make_corpus_specs(count, ANALYSIS_M, ANALYSIS_H, ANALYSIS_W, seed=FAMILY_SEED)
    for i, spec in enumerate(specs):
        video, flow, gt = synth_scene(spec)
        yield video, degrade_flow(flow, ANALYSIS_JITTER, VIDEO_JITTER_SEED + i), gt


def corpus_instances(count=10):
    """Yield (video, jittered flow, gt) at the 10-frame 64x48 desk scale."""
    specs = make_corpus_specs(count, 10, 48, 64, seed=FAMILY_SEED)
    for i, spec in enumerate(specs):
        video, flow, gt = synth_scene(spec)
        yield video, degrade_flow(flow, CORPUS_JITTER, VIDEO_JITTER_SEED + i), gt


@pytest.fixture(scope="session")
def analysis_family():
    return list(analysis_instances())


@pytest.fixture(scope="session")
def desk_corpus():
    return list(corpus_instances())


def dense_M_reference(graph):
    """Densify the neighbor lists through an independent code path."""
    n = graph.n
    M = np.zeros((n, n))
    for a, b, w in zip(graph.rows, graph.indices, graph.weights):
        M[a, b] = w
    return M
