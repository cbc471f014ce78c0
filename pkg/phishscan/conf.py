import json
import os
import yaml
from pathlib import Path
from pydantic import BaseModel, ValidationError, validator, root_validator
from typing import Any, Dict, List, Optional, Union
from urllib.parse import urlsplit

from phishscan.errors import ConfigError
from phishscan.logger import add_file_handler
from phishscan.schema import TimeWindowPlan, check_month

ENV_ENDPOINT = 'ETH_RPC_URL'
MODEL_FAMILIES = ('rf', 'gbdt', 'knn', 'logreg', 'svm')
MODEL_CATEGORIES = {
    'rf': 'ensemble',
    'gbdt': 'ensemble',
    'knn': 'instance',
    'logreg': 'linear',
    'svm': 'linear',
}


# #############
# Configuration
# #############

class Paths(BaseModel):
    corpus: Optional[Path]
    output: Path = Path('runs')
    cache: Optional[Path]
    log: Optional[Path]
    opcode_table: Optional[Path]

    @validator('*', pre=True)
    def expanduser(value):
        if value is None:
            return None
        return Path(os.path.expanduser(value))


class RpcSettings(BaseModel):
    endpoint: Optional[str] = None
    block_tag: str = 'latest'
    rate_limit: float = 5.0
    max_attempts: int = 5
    backoff_initial: float = 0.5
    timeout: float = 30.0

    @validator('endpoint', pre=True, always=True)
    def endpoint_from_env(value):
        return value or os.environ.get(ENV_ENDPOINT) or None

    @validator('rate_limit', 'backoff_initial', 'timeout')
    def positive(value):
        if value <= 0:
            raise ValueError('must be positive')
        return value

    @validator('max_attempts')
    def at_least_one(value):
        if value < 1:
            raise ValueError('at least one attempt is required')
        return value


class TimePlanConf(BaseModel):
    train_first: str = '2023-10'
    train_last: str = '2024-01'
    test_months: List[str] = [f'2024-{m:02d}' for m in range(2, 11)]

    @validator('train_first', 'train_last')
    def month_format(value):
        return check_month(value)

    @validator('test_months', each_item=True)
    def test_month_format(value):
        return check_month(value)

    def plan(self) -> TimeWindowPlan:
        return TimeWindowPlan((self.train_first, self.train_last), list(self.test_months))


class ForestParams(BaseModel):
    n_trees: int = 100
    max_depth: Optional[int] = None
    max_features: Union[int, str] = 'sqrt'
    min_samples_leaf: int = 1
    bootstrap: bool = True

    @validator('max_features')
    def known_max_features(value):
        if isinstance(value, str) and value not in ('sqrt', 'all'):
            raise ValueError('max_features must be "sqrt", "all" or an integer')
        return value


class BoostParams(BaseModel):
    n_trees: int = 100
    max_depth: Optional[int] = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 1


class KnnParams(BaseModel):
    k: int = 5

    @validator('k')
    def positive_k(value):
        if value < 1:
            raise ValueError('k must be positive')
        return value


class LinearParams(BaseModel):
    l2: float = 1e-2
    max_iter: int = 1000
    tol: float = 1e-6
    backtracking: bool = True
    learning_rate: float = 0.1


class Hyperparams(BaseModel):
    rf: ForestParams = ForestParams()
    gbdt: BoostParams = BoostParams()
    knn: KnnParams = KnnParams()
    logreg: LinearParams = LinearParams()
    svm: LinearParams = LinearParams()

    def for_family(self, family: str) -> Dict[str, Any]:
        return getattr(self, family).dict()


def default_grid() -> Dict[str, Dict[str, List[Any]]]:
    return {
        'rf': {'n_trees': [100, 300, 500], 'max_depth': [8, 16, None]},
        'gbdt': {'n_trees': [100, 300, 500], 'max_depth': [8, 16, None], 'learning_rate': [0.05, 0.1, 0.3]},
        'knn': {'k': [1, 3, 5, 7, 9, 15]},
        'logreg': {'l2': [1e-4, 1e-2, 1.0]},
        'svm': {'l2': [1e-4, 1e-2, 1.0]},
    }


class ExperimentConf(BaseModel):
    models: List[str] = ['rf', 'gbdt', 'knn', 'logreg', 'svm']
    k: int = 10
    runs: int = 3
    seeds: Optional[List[int]] = None
    stratified: bool = True
    fractions: List[float] = [1 / 3, 2 / 3, 1.0]
    time_plan: TimePlanConf = TimePlanConf()
    categories: Dict[str, str] = dict(MODEL_CATEGORIES)
    top_n: int = 20
    alpha: float = 0.05

    @validator('models', each_item=True)
    def known_model(value):
        if value not in MODEL_FAMILIES:
            raise ValueError(f'unknown model family "{value}", expecting one of {", ".join(MODEL_FAMILIES)}')
        return value

    @validator('k')
    def k_at_least_two(value):
        if value < 2:
            raise ValueError('k must be at least 2')
        return value

    @validator('fractions', each_item=True)
    def fraction_range(value):
        if not 0 < value <= 1:
            raise ValueError('fractions must lie in (0, 1]')
        return value

    @root_validator
    def seeds_per_run(cls, values):
        seeds = values.get('seeds')
        runs = values.get('runs')
        if runs is None:
            return values
        if seeds is None:
            values['seeds'] = list(range(runs))
        elif len(seeds) != runs:
            raise ValueError(f'{len(seeds)} seeds given for {runs} runs')
        return values


class Conf(BaseModel):
    seed: int = 0
    workers: int = 1
    paths: Paths = Paths()
    rpc: RpcSettings = RpcSettings()
    experiment: ExperimentConf = ExperimentConf()
    hyperparams: Hyperparams = Hyperparams()
    grid: Dict[str, Dict[str, List[Any]]] = default_grid()

    @classmethod
    def from_yaml(cls, file_path: Path) -> "Conf":
        with open(file_path) as conffile:
            if Path(file_path).suffix == '.json':
                d = json.load(conffile)
            else:
                d = yaml.safe_load(conffile)
            if not d:
                raise ValueError(f'Configuration file {file_path} can not be empty')
            conf = Conf(**d)
            if conf.paths.log:
                add_file_handler(conf.paths.log)
        return conf

    @root_validator
    def check_grid(cls, values):
        for family in values.get('grid', {}):
            if family not in MODEL_FAMILIES:
                raise ValueError(f'grid names unknown model family "{family}"')
        return values


def load_conf(path: Optional[Path] = None) -> Conf:
    try:
        if path is None:
            return Conf()
        return Conf.from_yaml(path)
    except (ValidationError, yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f'Invalid configuration {path or "defaults"}: {e}')
    except (OSError, ValueError) as e:
        raise ConfigError(str(e))


class RunConfig(BaseModel):
    """ Resolved configuration of one invocation, snapshotted next to its outputs """
    subcommand: str
    corpus: Optional[Path]
    output: Path
    seeds: List[int]
    models: List[str]
    k: int
    runs: int
    fractions: List[float]
    time_plan: TimePlanConf
    rpc: RpcSettings
    workers: int = 1
    options: Dict[str, Any] = {}

    @classmethod
    def resolve(cls, subcommand: str, conf: Conf, output: Path, **options) -> 'RunConfig':
        return cls(
            subcommand=subcommand,
            corpus=conf.paths.corpus,
            output=output,
            seeds=list(conf.experiment.seeds or []),
            models=list(conf.experiment.models),
            k=conf.experiment.k,
            runs=conf.experiment.runs,
            fractions=list(conf.experiment.fractions),
            time_plan=conf.experiment.time_plan,
            rpc=conf.rpc,
            workers=conf.workers,
            options={key: val for key, val in options.items() if val is not None},
        )

    def snapshot(self) -> str:
        d = json.loads(self.json())
        # the endpoint may embed an API key
        if d['rpc'].get('endpoint'):
            d['rpc']['endpoint'] = redact_endpoint(d['rpc']['endpoint'])
        return yaml.safe_dump(d, sort_keys=True)


def redact_endpoint(endpoint: str) -> str:
    parts = urlsplit(endpoint)
    return f'{parts.scheme}://{parts.hostname}' if parts.hostname else '<redacted>'
