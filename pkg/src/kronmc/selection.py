"""Configuration selection by the rearranged spectral-norm criterion."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from ._validation import check_mask, check_matrix
from .core import ConfigurationSet, project, rearrange
from .exceptions import EmptyCandidateSet
from .spectral import spectral_norm

__all__ = [
    "ConfigScore",
    "ConfigRanking",
    "criterion",
    "rank_configurations",
    "select_configuration",
]


@dataclass(frozen=True)
class ConfigScore:
    config: object
    score: float

    def __post_init__(self):
        if not self.score >= 0:
            raise ValueError(f"criterion score must be non-negative, got {self.score}")

    def to_dict(self):
        return {**self.config.to_dict(), "score": self.score}


class ConfigRanking(tuple):
    """Configurations in descending criterion order (ties by smallest ``(p, q)``)."""

    def __new__(cls, scores):
        ordered = sorted(scores, key=lambda s: (-s.score, s.config.p, s.config.q))
        return super().__new__(cls, ordered)

    @property
    def configs(self):
        return [s.config for s in self]

    @property
    def scores(self):
        return [s.score for s in self]

    @property
    def best(self):
        if not self:
            raise EmptyCandidateSet("ranking is empty")
        return self[0].config

    def to_list(self):
        return [s.to_dict() for s in self]


def _criterion_value(Y_obs, c):
    return spectral_norm(rearrange(Y_obs, c))


def criterion(Y_obs, mask, c):
    """Spectral norm of the rearranged zero-filled observation under ``c``."""
    Y = check_matrix(Y_obs, "Y_obs")
    Y = project(Y, check_mask(mask, Y.shape))
    return ConfigScore(c, _criterion_value(Y, c))


def rank_configurations(Y_obs, mask, configs, n_jobs=1):
    """Score every member of ``configs`` and return a :class:`ConfigRanking`.

    ``n_jobs > 1`` evaluates configurations on a thread pool; the result does
    not depend on the evaluation order.
    """
    Y = check_matrix(Y_obs, "Y_obs")
    Y = project(Y, check_mask(mask, Y.shape))
    members = list(configs)
    if n_jobs and n_jobs > 1 and len(members) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            values = list(pool.map(lambda c: _criterion_value(Y, c), members))
    else:
        values = [_criterion_value(Y, c) for c in members]
    return ConfigRanking(ConfigScore(c, v) for c, v in zip(members, values))


def select_configuration(Y_obs, mask, configs, n_jobs=1):
    """Configuration maximizing the criterion over ``configs``."""
    if isinstance(configs, ConfigurationSet):
        configs = configs.members
    if len(configs) == 0:
        raise EmptyCandidateSet("candidate set is empty")
    return rank_configurations(Y_obs, mask, configs, n_jobs=n_jobs).best
