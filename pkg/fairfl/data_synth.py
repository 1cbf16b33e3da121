"""
Synthetic heterogeneous federated datasets
Agents are grouped around cluster centers that are at least R apart, each
agent's generating vector lies within r of its center (r < R/2)
"""
from dataclasses import dataclass

import numpy as np

from fairfl.config import ModelType, ScenarioKind
from fairfl.errors import PlacementError
from fairfl.rng import Stream

MAX_PLACEMENT_ATTEMPTS = 10_000


@dataclass(frozen=True)
class ClusterSpec:
    """Cluster centers w*_m with intra radius r and minimum inter distance R"""
    centers: np.ndarray
    intra_radius: float
    inter_distance: float

    @property
    def num_clusters(self):
        return self.centers.shape[0]

    @property
    def dimension(self):
        return self.centers.shape[1]

    def min_pairwise_distance(self):
        """Smallest distance between two centers (inf for a single center)"""
        m = self.num_clusters
        if m < 2:
            return float("inf")
        diffs = self.centers[:, None, :] - self.centers[None, :, :]
        dists = np.linalg.norm(diffs, axis=2)
        return float(dists[np.triu_indices(m, k=1)].min())

    def check(self):
        """Raise ValueError if the separability conditions do not hold"""
        if not self.intra_radius < self.inter_distance / 2:
            raise ValueError("intra_radius must be < inter_distance / 2")
        if self.min_pairwise_distance() < self.inter_distance:
            raise ValueError("cluster centers closer than inter_distance")
        return self


@dataclass(frozen=True)
class AgentDataset:
    """
    One agent's local data.

    true_cluster is evaluation-only metadata: training code never reads it.
    Labels are real values for regression and class indices (0/1) for
    classification.
    """
    features: np.ndarray
    labels: np.ndarray
    true_mean: np.ndarray
    noise_std: float
    feature_std: float
    true_cluster: int = 0

    @property
    def num_samples(self):
        return self.features.shape[0]

    @property
    def dimension(self):
        return self.features.shape[1]

    @property
    def is_classification(self):
        return np.issubdtype(self.labels.dtype, np.integer)


@dataclass(frozen=True)
class FederatedScenario:
    """Training data, fresh evaluation data and the generating clusters"""
    train: list
    test: list
    spec: ClusterSpec
    assignment: tuple

    @property
    def num_agents(self):
        return len(self.train)


# --- centers and means ---

def gen_cluster_centers(M, d, R, rng, intra_radius=0.0, max_attempts=MAX_PLACEMENT_ATTEMPTS):
    """
    Place M centers with pairwise distance >= R.

    Candidates are Gaussian directions scaled to norm R; a candidate too close
    to an accepted center is rejected. Gives up after max_attempts candidates.

    Args:
        M: Number of clusters (>= 1)
        d: Dimension (>= 1)
        R: Minimum pairwise distance (> 0)
        rng: Stream used for the candidate directions

    Returns:
        ClusterSpec with the accepted centers
    """
    if M < 1 or d < 1:
        raise ValueError("gen_cluster_centers requires M >= 1 and d >= 1")
    if not R > 0:
        raise ValueError("gen_cluster_centers requires R > 0")

    centers = [R * rng.unit_vector(d)]
    attempts = 1
    while len(centers) < M:
        if attempts >= max_attempts:
            raise PlacementError(attempts)
        candidate = R * rng.unit_vector(d)
        attempts += 1
        if all(np.linalg.norm(candidate - c) >= R for c in centers):
            centers.append(candidate)
    return ClusterSpec(np.array(centers), float(intra_radius), float(R))


def gen_agent_means(spec, assignment, seed):
    """
    Generating vector for every agent: its center plus a uniform draw from the
    r-ball. Each agent uses its own stream, so the order of generation does
    not matter.
    """
    means = []
    for e, m in enumerate(assignment):
        if not 0 <= m < spec.num_clusters:
            raise ValueError(f"assignment[{e}]={m} outside [0, {spec.num_clusters})")
        offset = Stream(seed, "agent_mean", e).in_ball(spec.dimension, spec.intra_radius)
        means.append(spec.centers[m] + offset)
    return means


# --- per-agent datasets ---

def gen_regression_dataset(mean, n, delta, sigma, rng, true_cluster=0):
    """
    Gaussian linear data: x ~ N(0, delta^2 I_d), y = mean^T x + eps, eps ~ N(0, sigma^2).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not delta > 0 or sigma < 0:
        raise ValueError("requires delta > 0 and sigma >= 0")
    mean = np.asarray(mean, dtype=np.float64)
    d = mean.shape[0]
    features = rng.normal((n, d), scale=delta)
    noise = rng.normal(n, scale=sigma) if sigma > 0 else np.zeros(n)
    labels = features @ mean + noise
    return AgentDataset(features, labels, mean.copy(), float(sigma), float(delta), int(true_cluster))


def gen_classification_dataset(mean, n, delta, rng, true_cluster=0):
    """Binary labels from a logistic model with parameter `mean` on Gaussian features"""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not delta > 0:
        raise ValueError("requires delta > 0")
    mean = np.asarray(mean, dtype=np.float64)
    d = mean.shape[0]
    features = rng.normal((n, d), scale=delta)
    logits = features @ mean
    prob = 0.5 * (1.0 + np.tanh(0.5 * logits))  # sigmoid without overflow
    labels = (rng.uniform(n) < prob).astype(np.int64)
    return AgentDataset(features, labels, mean.copy(), 0.0, float(delta), int(true_cluster))


def _gen_dataset(cfg, mean, cluster, seed, tag, agent, n):
    rng = Stream(seed, tag, agent)
    if cfg.model_kind == ModelType.RIDGE_LOGISTIC:
        return gen_classification_dataset(mean, n, cfg.feature_std, rng, cluster)
    return gen_regression_dataset(mean, n, cfg.feature_std, cfg.noise_std, rng, cluster)


# --- scenarios ---

def _assignment_from_split(split):
    out = []
    for m, size in enumerate(split):
        out.extend([m] * size)
    return tuple(out)


def scenario_means(cfg, seed=None):
    """
    Cluster spec, assignment and generating vectors for a scenario.

    single_outlier: agents 0..E-2 are r-dispersed around mu* = centers[0],
    the last agent uses centers[1] exactly, so its distance to mu* is >= R.
    multi_cluster: agents are assigned contiguously by cfg.resolved_split().
    """
    seed = cfg.seed if seed is None else seed
    if cfg.scenario_kind == ScenarioKind.SINGLE_OUTLIER:
        if cfg.num_agents < 3:
            raise ValueError("E > 2 required for the single-outlier scenario")
        spec = gen_cluster_centers(2, cfg.dimension, cfg.inter_distance, Stream(seed, "centers"),
                                   intra_radius=cfg.intra_radius)
        assignment = (0,) * (cfg.num_agents - 1) + (1,)
        means = gen_agent_means(spec, assignment[:-1], seed)
        means.append(spec.centers[1].copy())
        return spec, assignment, means

    split = cfg.resolved_split()
    spec = gen_cluster_centers(len(split), cfg.dimension, cfg.inter_distance, Stream(seed, "centers"),
                               intra_radius=cfg.intra_radius)
    assignment = _assignment_from_split(split)
    return spec, assignment, gen_agent_means(spec, assignment, seed)


def gen_outlier_scenario(cfg, seed=None):
    """E training datasets: E-1 similar agents plus one outlier (true_cluster 1)"""
    if cfg.scenario_kind != ScenarioKind.SINGLE_OUTLIER:
        raise ValueError("gen_outlier_scenario requires scenario_kind=single_outlier")
    return build_scenario(cfg, seed).train


def build_scenario(cfg, seed=None, spec=None):
    """
    Generate training and evaluation data for every agent.

    Evaluation sets reuse each agent's generating vector with a disjoint
    stream ('test' instead of 'train'), size cfg.eval_samples.

    Args:
        cfg: ScenarioConfig
        seed: Overrides cfg.seed (repetitions use seed + k)
        spec: Optional hand-made ClusterSpec; agents are then spread over its
            centers by cfg.resolved_split() (true cluster count must match)
    """
    seed = cfg.seed if seed is None else seed
    if spec is None:
        spec, assignment, means = scenario_means(cfg, seed)
    else:
        spec.check()
        split = cfg.resolved_split()
        if len(split) != spec.num_clusters:
            raise ValueError(f"spec has {spec.num_clusters} centers but the split has {len(split)} clusters")
        assignment = _assignment_from_split(split)
        means = gen_agent_means(spec, assignment, seed)
        if cfg.scenario_kind == ScenarioKind.SINGLE_OUTLIER:
            means[-1] = spec.centers[1].copy()

    train = [_gen_dataset(cfg, means[e], assignment[e], seed, "train", e, cfg.samples_per_agent)
             for e in range(len(assignment))]
    test = [_gen_dataset(cfg, means[e], assignment[e], seed, "test", e, cfg.eval_samples)
            for e in range(len(assignment))]
    return FederatedScenario(train, test, spec, assignment)

