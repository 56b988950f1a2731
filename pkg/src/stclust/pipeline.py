"""Shared composition: flow -> chains/graph -> features -> eigenvector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feature_chains import FeatureMapSet, build_feature_matrix, flow_planes
from .flow_io import FlowField
from .motion_graph import ChainIndex, MotionGraph, build_chains, build_motion_graph
from .projection import build_cache
from .solver import SolverConfig, solve


@dataclass(frozen=True)
class GraphContext:
    """Flow-derived structures that stay fixed across solver runs."""

    chains: ChainIndex
    graph: MotionGraph

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.graph.m, self.graph.h, self.graph.w)


def build_context(flow: FlowField, config: SolverConfig) -> GraphContext:
    chains = build_chains(flow)
    graph = build_motion_graph(chains, config.p, config.sigma_t)
    return GraphContext(chains=chains, graph=graph)


def base_feature_maps(flow: FlowField) -> FeatureMapSet:
    maps = FeatureMapSet(flow.m, flow.h, flow.w)
    maps.add("flow", flow_planes(flow))
    return maps


def run_graph(
    ctx: GraphContext,
    maps: FeatureMapSet,
    config: SolverConfig,
    x0: np.ndarray | None = None,
):
    """Build F for the given feature maps and solve; returns (x, diag, F)."""
    F = build_feature_matrix(
        ctx.chains, maps, config.q, standardize=config.standardize, bias=config.bias
    )
    cache = build_cache(F, config.lam)
    x, diag = solve(ctx.graph, F, cache, config, x0=x0)
    return x, diag, F


def segment_flow(flow: FlowField, config: SolverConfig, extra_planes=None):
    """One-shot segmentation from flow alone (plus optional extra per-pixel
    feature planes); returns (x, diag, F)."""
    ctx = build_context(flow, config)
    maps = base_feature_maps(flow)
    if extra_planes:
        for name, plane in extra_planes:
            maps.add(name, plane)
    return run_graph(ctx, maps, config)
