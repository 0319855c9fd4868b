r"""
Configs
=======

``ExperimentConfig`` holds everything an experiment needs: the domain, the schedule that ``build`` turns
into a tree, and the knobs of every analysis. Every field has a default, so an empty config reproduces the
standard experiment (``n = 3``, ``K = 2``, ``a = 0.5``, ``PHI``, depth 6 on the unit cube).

Configs are single JSON documents:

.. code-block:: json

    {
      "schedule": "CANTOR",
      "a": 0.1,
      "delta": 0.0001,
      "depth": 6
    }

Unknown keys are an error rather than being ignored, a typo would otherwise silently run the default
experiment.

Documentation
-------------
"""

from pprint import pformat
from typing import List, Optional

from .construction import ScheduleParams
from .geometry import BoxDomain
from .utils import WQRError, dumps_json, load_json, sha256


class ConfigError(WQRError):
    exit_code = 2


VALID_FIELDS = ["abs", "logdf"]


class ExperimentConfig:
    def __init__(
        self,
        # domain, the unit cube when the corners are not given
        n: int = 3,
        lower: Optional[List[float]] = None,
        upper: Optional[List[float]] = None,
        # schedule
        K: float = 2.0,
        a: float = 0.5,
        variant: str = "PHI",
        depth: int = 6,
        schedule: str = "SUMMABLE",
        delta0: Optional[float] = None,
        q: Optional[float] = None,
        delta: float = 0.2,
        forced: Optional[bool] = None,
        forced_fraction: float = 1.0,
        # packing
        eta: float = 0.05,
        max_balls: int = 200_000,
        samples: int = 100_000,
        # analysis
        p_grid: List[float] = (1.0, 1.5, 1.9, 2.0, 2.1, 2.5),
        margin: float = 0.02,
        p: Optional[float] = None,
        theta: float = 0.01,
        degree_nodes: int = 100,
        degree_samples: int = 100,
        level: int = 4,
        cross_check: Optional[str] = "autograd",
        blowup_radii: Optional[int] = None,
        blowup_samples: int = 10_000,
        audit_samples: int = 10_000,
        max_table_nodes: int = 100_000,
        slice_axis: int = 2,
        slice_offset: Optional[float] = None,
        slice_resolution: int = 256,
        slice_field: str = "logdf",
        # output
        out: str = "wqr_out",
        seed: int = 4,
    ):
        r"""Configuration of one experiment.

        Args:
            n (int, optional): ambient dimension
            lower (List[float], optional): lower corner of the box domain
            upper (List[float], optional): upper corner of the box domain
            K (float, optional): distortion of the stretches
            a (float, optional): inner ball ratio in ``(0, 1)``
            variant (str, optional): ``PHI`` or ``PSI``
            depth (int, optional): number of generations
            schedule (str, optional): ``SUMMABLE`` or ``CANTOR``
            delta0 (float, optional): schedule scale, defaults to ``inradius / 4`` (SUMMABLE) or 1 (CANTOR)
            q (float, optional): SUMMABLE ratio, defaults to ``0.9 a^alpha``
            delta (float, optional): CANTOR growth parameter
            forced (bool, optional): forced branching, defaults to on exactly for CANTOR
            forced_fraction (float, optional): share of the forced lattice capacity that is used
            eta (float, optional): fill tolerance of every packing
            max_balls (int, optional): ball cap of every packing
            samples (int, optional): Monte Carlo probes per packing level
            p_grid (List[float], optional): exponents of the energy sweep
            margin (float, optional): inconclusive band of the criticality verdict
            p (float, optional): when set, ``dimension`` picks the variant and ``K`` with ``kp_selector``
            theta (float, optional): closeness parameter of ``kp_selector``
            degree_nodes (int, optional): nodes sampled by the degree audit
            degree_samples (int, optional): interior samples per audited node
            level (int, optional): icosahedral level of the numeric degree
            cross_check (str, optional): ``autograd``, ``fd`` or None
            blowup_radii (int, optional): radii of the blow-up probe, defaults to the depth
            blowup_samples (int, optional): samples per blow-up radius
            audit_samples (int, optional): samples of the distortion and boundedness audits
            max_table_nodes (int, optional): rows of the node CSV
            slice_axis (int, optional): axis normal to the slice
            slice_offset (float, optional): coordinate of the slice, defaults to the domain center
            slice_resolution (int, optional): pixels per side of the slice
            slice_field (str, optional): ``abs`` renders ``|F|``, ``logdf`` renders ``log |DF|``
            out (str, optional): output folder
            seed (int, optional): seed of every random draw
        """
        self.n = n
        self.lower = lower
        self.upper = upper
        self.K = K
        self.a = a
        self.variant = variant
        self.depth = depth
        self.schedule = schedule
        self.delta0 = delta0
        self.q = q
        self.delta = delta
        self.forced = forced
        self.forced_fraction = forced_fraction
        self.eta = eta
        self.max_balls = max_balls
        self.samples = samples
        self.p_grid = [float(p) for p in p_grid]
        self.margin = margin
        self.p = p
        self.theta = theta
        self.degree_nodes = degree_nodes
        self.degree_samples = degree_samples
        self.level = level
        self.cross_check = cross_check
        self.blowup_radii = blowup_radii
        self.blowup_samples = blowup_samples
        self.audit_samples = audit_samples
        self.max_table_nodes = max_table_nodes
        self.slice_axis = slice_axis
        self.slice_offset = slice_offset
        self.slice_resolution = slice_resolution
        self.slice_field = slice_field
        self.out = out
        self.seed = seed
        self._validate()

    def _check(self, key, ok, what):
        if not ok:
            raise ConfigError(f"'{key}' {what}, got: {getattr(self, key)!r}", key=key, value=getattr(self, key))

    def _validate(self):
        for key in ["n", "depth", "max_balls", "samples", "degree_nodes", "degree_samples", "level", "blowup_samples", "audit_samples", "slice_resolution", "seed"]:
            v = getattr(self, key)
            self._check(key, isinstance(v, int) and not isinstance(v, bool), "must be an integer")
        self._check("n", self.n >= 3, "must be >= 3")
        for key in ["depth", "max_balls", "samples", "degree_nodes", "degree_samples", "blowup_samples", "audit_samples", "slice_resolution"]:
            self._check(key, getattr(self, key) >= 1, "must be >= 1")
        self._check("seed", self.seed >= 0, "must be non negative")
        self._check("level", 0 <= self.level <= 7, "must be in [0, 7]")
        self._check("a", 0 < self.a < 1, "must be in (0, 1)")
        self._check("K", self.K >= 1, "must be >= 1")
        self._check("eta", 0 < self.eta < 1, "must be in (0, 1)")
        self._check("margin", 0 <= self.margin < 1, "must be in [0, 1)")
        self._check("theta", self.theta >= 0, "must be >= 0")
        self._check("variant", str(self.variant).upper() in ["PHI", "PSI"], "must be PHI or PSI")
        self._check("schedule", str(self.schedule).upper() in ["SUMMABLE", "CANTOR"], "must be SUMMABLE or CANTOR")
        self._check("p_grid", len(self.p_grid) > 0, "must not be empty")
        self._check("p_grid", all(1 <= p < self.n for p in self.p_grid), f"must lie in [1, {self.n})")
        self._check("p", self.p is None or 1 < self.p < self.n, f"must lie in (1, {self.n})")
        self._check("cross_check", self.cross_check in ["autograd", "fd", None], "must be autograd, fd or null")
        self._check("slice_axis", 0 <= self.slice_axis < self.n, f"must be in [0, {self.n})")
        self._check("slice_field", self.slice_field in VALID_FIELDS, f"must be one of {VALID_FIELDS}")
        self._check("blowup_radii", self.blowup_radii is None or self.blowup_radii >= 1, "must be >= 1")
        for key in ["lower", "upper"]:
            v = getattr(self, key)
            self._check(key, v is None or len(v) == self.n, f"must have {self.n} coordinates")

    def __repr__(self) -> str:
        return pformat(self.__dict__, indent=2, sort_dicts=True)

    def __getitem__(self, key):
        return getattr(self, key)

    def get_dict(self):
        return dict(self.__dict__)

    def to_json(self, path=None):
        _j = dumps_json(self.get_dict())
        if path == None:
            return _j
        with open(path, "w") as f:
            f.write(_j + "\n")

    @classmethod
    def from_dict(cls, d):
        unknown = sorted(set(d) - set(cls().get_dict()))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}", keys=unknown)
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        try:
            d = load_json(path)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read config {path}: {e}", path=str(path)) from e
        if not isinstance(d, dict):
            raise ConfigError(f"config {path} must be a JSON object", path=str(path))
        return cls.from_dict(d)

    def hash(self):
        # the output folder does not change results
        d = self.get_dict()
        d.pop("out")
        return sha256(dumps_json(d))

    def domain(self) -> BoxDomain:
        if self.lower is None and self.upper is None:
            return BoxDomain.unit_cube(self.n)
        try:
            return BoxDomain(self.lower or [0.0] * self.n, self.upper or [1.0] * self.n)
        except ValueError as e:
            raise ConfigError(str(e), key="lower/upper") from e

    def schedule_params(self, **overrides) -> ScheduleParams:
        schedule = str(self.schedule).upper()
        forced = schedule == "CANTOR" if self.forced is None else self.forced
        kwargs = dict(
            n=self.n,
            K=self.K,
            a=self.a,
            variant=self.variant,
            depth=self.depth,
            schedule=schedule,
            delta0=self.delta0,
            q=self.q,
            delta=self.delta,
            eta=self.eta,
            forced=forced,
            forced_fraction=self.forced_fraction,
            max_balls=self.max_balls,
            samples=self.samples,
            seed=self.seed,
        )
        kwargs.update(overrides)
        try:
            return ScheduleParams(**kwargs)
        except ValueError as e:
            raise ConfigError(str(e)) from e
