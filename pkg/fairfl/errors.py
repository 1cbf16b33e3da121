"""
Exceptions raised by the simulator
Every error the CLI can report carries the exit code it maps to
"""


class FocusFLError(Exception):
    """Base class for simulator errors"""
    exit_code = 1


class ConfigError(FocusFLError, ValueError):
    """Invalid configuration value, reported with the offending field"""
    exit_code = 2

    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}" if field else message)


class PlacementError(ConfigError):
    def __init__(self, attempts):
        self.attempts = attempts
        super().__init__("num_clusters", f"center placement failed after {attempts} attempts")


class EmptyClusterError(ConfigError):
    def __init__(self, cluster):
        self.cluster = cluster
        super().__init__("assignment", f"empty cluster {cluster}")


class DimensionMismatchError(FocusFLError, ValueError):
    def __init__(self, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"dimension mismatch: parameters have {got} entries, data has {expected} features")


class DivergenceError(FocusFLError, ArithmeticError):
    """Non-finite parameters during local descent (learning rate too large)"""
    exit_code = 3

    def __init__(self, step=None, round=None, agent=None, cluster=None):
        self.step = step
        self.round = round
        self.agent = agent
        self.cluster = cluster
        super().__init__(self._describe())

    def _describe(self):
        where = []
        if self.round is not None:
            where.append(f"round {self.round}")
        if self.agent is not None:
            where.append(f"agent {self.agent}")
        if self.cluster is not None:
            where.append(f"cluster {self.cluster}")
        if self.step is not None:
            where.append(f"local step {self.step}")
        suffix = f" at {', '.join(where)}" if where else ""
        return f"divergence detected{suffix}"

    def located(self, round=None, agent=None, cluster=None):
        """Copy of this error with the round/agent/cluster filled in"""
        return DivergenceError(
            step=self.step,
            round=self.round if round is None else round,
            agent=self.agent if agent is None else agent,
            cluster=self.cluster if cluster is None else cluster,
        )


class TheoremCheckFailed(FocusFLError):
    exit_code = 4

    def __init__(self, verdict):
        self.verdict = verdict
        failed = [name for name, check in verdict.get("checks", {}).items() if not check.get("passed")]
        super().__init__(f"theorem check {verdict.get('which')} failed: {', '.join(failed) or 'unknown'}")
