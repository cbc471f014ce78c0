"""
Post hoc statistics over experiment metrics: normality screening, rank tests,
multiplicity correction, effect sizes and critical-difference diagram data.
"""
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from statistics import NormalDist
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from phishscan.errors import DegenerateSampleError, StatsPreconditionError
from phishscan.logger import logger
from phishscan.schema import MetricsRecord, RankSummary, StatTestResult
from phishscan.specfun import chi2_sf, norm_cdf, norm_sf, two_sided_p
from phishscan.utils import write_csv

ALPHA = 0.05
EXACT_WILCOXON_MAX_N = 25
SHAPIRO_MAX_N = 5000
TINY_P = 1e-19

# Cliff's delta magnitude thresholds
NEGLIGIBLE = 0.147
SMALL = 0.33
MEDIUM = 0.474

# Shapiro-Wilk polynomial approximations (Royston 1995)
SW_C1 = [-2.706056, 4.434685, -2.07119, -0.147981, 0.221157, 0.0]
SW_C2 = [-3.582633, 5.682633, -1.752461, -0.293762, 0.042981, 0.0]
SW_C3 = [-0.0006714, 0.025054, -0.39978, 0.544]
SW_C4 = [-0.0020322, 0.062767, -0.77857, 1.3822]
SW_C5 = [0.0038915, -0.083751, -0.31082, -1.5861]
SW_C6 = [0.0030302, -0.082676, -0.4803]
SW_G = [0.459, -2.273]
SW_PI6 = 6 / math.pi
SW_STQR = math.pi / 3


def rankdata(values) -> Tuple[np.ndarray, List[int]]:
    """ 1-based ranks with ties sharing their average rank, and the sizes of the tie groups """
    x = np.asarray(values, dtype=np.float64)
    if len(x) == 0:
        return np.zeros(0), []
    order = np.argsort(x, kind='stable')
    ordered = x[order]
    starts = np.flatnonzero(np.r_[True, ordered[1:] != ordered[:-1]])
    ends = np.r_[starts[1:], len(x)]
    sizes = ends - starts
    ranks = np.empty(len(x))
    ranks[order] = np.repeat((starts + ends + 1) / 2.0, sizes)
    return ranks, [int(size) for size in sizes if size > 1]


def _tie_sum(tie_sizes: Sequence[int]) -> float:
    return float(sum(t ** 3 - t for t in tie_sizes))


# #########
# Normality
# #########

def _shapiro_coefficients(n: int) -> np.ndarray:
    """ Coefficients for the order statistics, antisymmetric around the median """
    half = n // 2
    if n == 3:
        upper = np.array([math.sqrt(0.5)])
    else:
        nd = NormalDist()
        m = np.array([-nd.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, half + 1)])
        summ2 = 2 * float(m @ m)
        ssumm2 = math.sqrt(summ2)
        rsn = 1 / math.sqrt(n)
        upper = np.empty(half)
        upper[0] = np.polyval(SW_C1, rsn) + m[0] / ssumm2
        if n > 5:
            upper[1] = np.polyval(SW_C2, rsn) + m[1] / ssumm2
            fac = math.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2) / (1 - 2 * upper[0] ** 2 - 2 * upper[1] ** 2))
            upper[2:] = m[2:] / fac
        else:
            fac = math.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * upper[0] ** 2))
            upper[1:] = m[1:] / fac
    coefficients = np.zeros(n)
    coefficients[:half] = -upper
    coefficients[n - half:] = upper[::-1]
    return coefficients


def _shapiro_p(w: float, n: int) -> float:
    if n == 3:
        return min(1.0, max(0.0, SW_PI6 * (math.asin(math.sqrt(w)) - SW_STQR)))
    w1 = 1.0 - w
    if w1 <= 0:
        return 1.0
    y = math.log(w1)
    if n <= 11:
        gamma = np.polyval(SW_G, n)
        if y >= gamma:
            return TINY_P
        y = -math.log(gamma - y)
        m = np.polyval(SW_C3, n)
        s = math.exp(np.polyval(SW_C4, n))
    else:
        ln = math.log(n)
        m = np.polyval(SW_C5, ln)
        s = math.exp(np.polyval(SW_C6, ln))
    return float(norm_sf((y - m) / s))


def shapiro_wilk(sample, label: str = '') -> StatTestResult:
    """ Shapiro-Wilk W with Royston's coefficient and p-value approximations """
    x = np.sort(np.asarray(sample, dtype=np.float64))
    n = len(x)
    if n < 3:
        raise StatsPreconditionError(f'Shapiro-Wilk needs at least 3 values, got {n}')
    if x[-1] - x[0] == 0:
        raise DegenerateSampleError('Shapiro-Wilk is undefined for a constant sample')
    if n > SHAPIRO_MAX_N:
        logger.warning(f'Shapiro-Wilk p-value approximation is untested above {SHAPIRO_MAX_N} values, got {n}')
    centered = x - x.mean()
    w = float((_shapiro_coefficients(n) @ x) ** 2 / (centered @ centered))
    w = min(w, 1.0)
    return StatTestResult('shapiro_wilk', w, _shapiro_p(w, n), groups=label)


@dataclass
class NormalityScreen:
    results: List[StatTestResult]
    violations: int


def normality_screen(records: Sequence[MetricsRecord], metrics: Sequence[str] = MetricsRecord.METRICS,
                     alpha: float = ALPHA) -> NormalityScreen:
    """ Shapiro-Wilk for every model and metric; a violation is p < alpha """
    results: List[StatTestResult] = []
    violations = 0
    for metric in metrics:
        for model, values in _groups(records, metric).items():
            try:
                result = shapiro_wilk(values, model)
            except StatsPreconditionError as e:
                result = StatTestResult('shapiro_wilk', math.nan, None, groups=model, note=str(e))
            result.metric = metric
            if result.p is not None and result.p < alpha:
                violations += 1
            results.append(result)
    logger.info(f'{violations} of {len(results)} model-metric samples reject normality at {alpha}')
    return NormalityScreen(results, violations)


# ######################
# Multiplicity and ranks
# ######################

def holm_bonferroni(p_values: Sequence[float]) -> List[float]:
    """ Holm step-down adjustment, returned in input order """
    p = np.asarray(p_values, dtype=np.float64)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise StatsPreconditionError('p-values must lie in [0, 1]')
    m = len(p)
    if m == 0:
        return []
    order = np.argsort(p, kind='stable')
    stepped = np.minimum(1.0, np.maximum.accumulate((m - np.arange(m)) * p[order]))
    adjusted = np.empty(m)
    adjusted[order] = stepped
    return adjusted.tolist()


def _pooled_ranks(groups: Sequence[Sequence[float]]) -> Tuple[RankSummary, List[np.ndarray]]:
    sizes = [len(group) for group in groups]
    if any(size == 0 for size in sizes):
        raise StatsPreconditionError('Every group needs at least one value')
    ranks, ties = rankdata(np.concatenate([np.asarray(group, dtype=np.float64) for group in groups]))
    bounds = np.cumsum([0] + sizes)
    per_group = [ranks[start:end] for start, end in zip(bounds[:-1], bounds[1:])]
    sums = [float(r.sum()) for r in per_group]
    summary = RankSummary(sizes, sums, [s / n for s, n in zip(sums, sizes)], int(bounds[-1]), ties)
    return summary, per_group


def kruskal_wallis(groups: Sequence[Sequence[float]], label: str = '') -> Tuple[StatTestResult, RankSummary]:
    """ Tie-corrected Kruskal-Wallis H with a chi-square p-value on k - 1 degrees of freedom """
    if len(groups) < 3:
        raise StatsPreconditionError(f'Kruskal-Wallis needs at least 3 groups, got {len(groups)}')
    summary, _ = _pooled_ranks(groups)
    n = summary.total
    correction = 1 - _tie_sum(summary.tie_group_sizes) / (n ** 3 - n)
    if correction <= 0:
        raise DegenerateSampleError('Kruskal-Wallis is undefined when every value is identical')
    h = 12 / (n * (n + 1)) * sum(r * r / size for r, size in zip(summary.rank_sums, summary.group_sizes))
    h = max(0.0, (h - 3 * (n + 1)) / correction)
    return StatTestResult('kruskal_wallis', h, chi2_sf(h, len(groups) - 1), groups=label), summary


def dunn_pairwise(groups: Sequence[Sequence[float]], names: Optional[Sequence[str]] = None,
                  tie_correction: bool = False) -> List[StatTestResult]:
    """
    Dunn's z for every unordered pair of groups on the pooled ranks, Holm-adjusted over all pairs.

    By default the standard error has no tie term; tie_correction subtracts sum(t^3 - t) / (12 (N - 1)).
    """
    names = list(names) if names is not None else [str(i) for i in range(len(groups))]
    if len(names) != len(groups):
        raise StatsPreconditionError(f'{len(names)} names for {len(groups)} groups')
    summary, _ = _pooled_ranks(groups)
    n = summary.total
    variance = n * (n + 1) / 12
    if tie_correction:
        variance -= _tie_sum(summary.tie_group_sizes) / (12 * (n - 1)) if n > 1 else 0.0
    results: List[StatTestResult] = []
    for i, j in combinations(range(len(groups)), 2):
        se = math.sqrt(variance * (1 / summary.group_sizes[i] + 1 / summary.group_sizes[j]))
        diff = summary.mean_ranks[i] - summary.mean_ranks[j]
        if se == 0:
            z = 0.0
        else:
            z = diff / se
        results.append(StatTestResult('dunn', z, two_sided_p(z), pair=(names[i], names[j])))
    for result, adjusted in zip(results, holm_bonferroni([r.p for r in results if r.p is not None])):
        result.p_adj = adjusted
    return results


def friedman(block_matrix, label: str = '') -> StatTestResult:
    """ Friedman chi-square for treatments (rows) ranked within each block (column) """
    data = np.asarray(block_matrix, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] < 2:
        raise StatsPreconditionError(f'Friedman needs at least 2 treatments and 2 blocks, got shape {data.shape}')
    k, n = data.shape
    ranks = within_block_ranks(data)
    mean_ranks = ranks.mean(axis=1)
    statistic = 12 * n / (k * (k + 1)) * float(mean_ranks @ mean_ranks) - 3 * n * (k + 1)
    statistic = max(0.0, statistic)
    return StatTestResult('friedman', statistic, chi2_sf(statistic, k - 1), groups=label)


def within_block_ranks(block_matrix) -> np.ndarray:
    data = np.asarray(block_matrix, dtype=np.float64)
    return np.column_stack([rankdata(data[:, j])[0] for j in range(data.shape[1])])


# ##############################
# Paired tests and effect sizes
# ##############################

def _exact_signed_rank_cdf(doubled_ranks: np.ndarray, statistic: int) -> float:
    """ P(T <= statistic) under the null, by counting sign patterns over the doubled ranks """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = counts[:total + 1 - r].copy()
        counts[r:] += shifted
    return float(counts[:statistic + 1].sum() / 2.0 ** len(doubled_ranks))


def wilcoxon_signed_rank(paired_a, paired_b, label: str = '') -> StatTestResult:
    """
    Two-sided Wilcoxon signed-rank test on the statistic min(W+, W-).

    Zero differences are dropped. The p-value is exact for up to 25 non-zero differences,
    a continuity-corrected normal approximation above.
    """
    a = np.asarray(paired_a, dtype=np.float64)
    b = np.asarray(paired_b, dtype=np.float64)
    if a.shape != b.shape:
        raise StatsPreconditionError(f'Paired samples differ in length: {len(a)} and {len(b)}')
    diff = a - b
    diff = diff[diff != 0]
    n = len(diff)
    if n == 0:
        raise DegenerateSampleError('Every paired difference is zero')
    ranks, ties = rankdata(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    w_minus = float(ranks[diff < 0].sum())
    statistic = min(w_plus, w_minus)
    if n <= EXACT_WILCOXON_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        p = 2 * _exact_signed_rank_cdf(doubled, int(round(2 * statistic)))
        note = 'exact'
    else:
        mean = n * (n + 1) / 4
        sd = math.sqrt(n * (n + 1) * (2 * n + 1) / 24 - _tie_sum(ties) / 48)
        z = (statistic - mean + 0.5) / sd if sd > 0 else 0.0
        p = 2 * norm_cdf(min(z, 0.0))
        note = 'normal'
    return StatTestResult('wilcoxon', statistic, min(1.0, p), groups=label, note=note)


def delta_magnitude(delta: float) -> str:
    size = abs(delta)
    if size < NEGLIGIBLE:
        return 'negligible'
    if size < SMALL:
        return 'small'
    if size < MEDIUM:
        return 'medium'
    return 'large'


def cliffs_delta(sample_x, sample_y, label: str = '') -> StatTestResult:
    x = np.asarray(sample_x, dtype=np.float64)
    y = np.asarray(sample_y, dtype=np.float64)
    if len(x) == 0 or len(y) == 0:
        raise StatsPreconditionError("Cliff's delta needs two non-empty samples")
    signs = np.sign(x[:, None] - y[None, :])
    delta = float(signs.sum() / (len(x) * len(y)))
    return StatTestResult('cliffs_delta', delta, None, groups=label, note=delta_magnitude(delta))


# ##########################
# Critical difference inputs
# ##########################

@dataclass
class CddInputs:
    models: List[str]
    mean_ranks: List[float]
    friedman: StatTestResult
    pairs: List[StatTestResult]
    effects: List[StatTestResult]
    cliques: List[List[str]]
    alpha: float = ALPHA

    def significant(self, a: str, b: str) -> bool:
        for pair in self.pairs:
            if pair.pair in ((a, b), (b, a)):
                return pair.p_adj is not None and pair.p_adj < self.alpha
        raise KeyError(f'No comparison between {a} and {b}')


def _cliques(ordered: List[str], significant) -> List[List[str]]:
    """ Maximal runs of rank-adjacent models without a significant pair among them """
    spans: List[Tuple[int, int]] = []
    for i in range(len(ordered)):
        j = i
        while j + 1 < len(ordered) and not any(significant(ordered[m], ordered[j + 1]) for m in range(i, j + 1)):
            j += 1
        if j > i and (not spans or j > spans[-1][1]):
            spans.append((i, j))
    return [ordered[i:j + 1] for i, j in spans]


def cdd_inputs(block_matrix, models: Sequence[str], alpha: float = ALPHA, force: bool = False,
               label: str = '') -> CddInputs:
    """
    Mean ranks (1 = best, higher values are better) and Holm-adjusted pairwise Wilcoxon tests
    across blocks, for drawing a critical difference diagram.
    """
    data = np.asarray(block_matrix, dtype=np.float64)
    models = list(models)
    if data.ndim != 2 or data.shape[0] != len(models):
        raise StatsPreconditionError(f'{len(models)} models for a block matrix of shape {data.shape}')
    omnibus = friedman(data, label)
    if omnibus.p is not None and omnibus.p >= alpha:
        message = f'Friedman test not rejected for {label or "block matrix"} (p={omnibus.p:.4g})'
        if not force:
            raise StatsPreconditionError(message)
        logger.warning(message)
    mean_ranks = within_block_ranks(-data).mean(axis=1)
    pairs: List[StatTestResult] = []
    effects: List[StatTestResult] = []
    for i, j in combinations(range(len(models)), 2):
        try:
            result = wilcoxon_signed_rank(data[i], data[j], label)
        except DegenerateSampleError:
            result = StatTestResult('wilcoxon', 0.0, 1.0, groups=label, note='identical')
        result.pair = (models[i], models[j])
        pairs.append(result)
        effect = cliffs_delta(data[i], data[j], label)
        effect.pair = (models[i], models[j])
        effects.append(effect)
    for result, adjusted in zip(pairs, holm_bonferroni([r.p if r.p is not None else 1.0 for r in pairs])):
        result.p_adj = adjusted
    inputs = CddInputs(models, [float(r) for r in mean_ranks], omnibus, pairs, effects, [], alpha)
    ordered = [models[i] for i in np.argsort(mean_ranks, kind='stable')]
    inputs.cliques = _cliques(ordered, inputs.significant)
    return inputs


def block_matrix(records: Sequence[MetricsRecord], metric: str) -> Tuple[List[str], List[str], np.ndarray]:
    """ Mean metric value per model (rows) and split (columns), averaged over runs and folds """
    models = list(OrderedDict.fromkeys(record.model for record in records))
    splits = list(OrderedDict.fromkeys(record.split for record in records))
    data = np.full((len(models), len(splits)), np.nan)
    for i, model in enumerate(models):
        for j, split in enumerate(splits):
            values = [r.value(metric) for r in records if r.model == model and r.split == split]
            if values:
                data[i, j] = float(np.mean(values))
    if np.isnan(data).any():
        raise StatsPreconditionError(f'Not every model has {metric} values for every split')
    return models, splits, data


# ########
# Post hoc
# ########

def _groups(records: Sequence[MetricsRecord], metric: str) -> Dict[str, List[float]]:
    groups: Dict[str, List[float]] = OrderedDict()
    for record in records:
        groups.setdefault(record.model, []).append(record.value(metric))
    return groups


@dataclass
class SignificantShare:
    metric: str
    scope: str
    significant: int
    total: int

    @property
    def fraction(self) -> float:
        return self.significant / self.total if self.total else 0.0


@dataclass
class PosthocResult:
    models: List[str]
    kruskal: List[StatTestResult]
    dunn: List[StatTestResult]
    shares: List[SignificantShare]
    rank_summaries: Dict[str, RankSummary] = field(default_factory=dict)
    alpha: float = ALPHA

    def dunn_matrix(self, metric: str) -> np.ndarray:
        """ Symmetric matrix of adjusted Dunn p-values, 1 on the diagonal """
        index = {model: i for i, model in enumerate(self.models)}
        matrix = np.ones((len(self.models), len(self.models)))
        for result in self.dunn:
            if result.metric == metric and result.pair is not None and result.p_adj is not None:
                i, j = index[result.pair[0]], index[result.pair[1]]
                matrix[i, j] = matrix[j, i] = result.p_adj
        return matrix


def posthoc(records: Sequence[MetricsRecord], metrics: Sequence[str] = MetricsRecord.METRICS,
            categories: Optional[Mapping[str, str]] = None, alpha: float = ALPHA,
            tie_correction: bool = False) -> PosthocResult:
    """
    Kruskal-Wallis per metric (Holm-adjusted across metrics), then Dunn's pairs per metric
    (Holm-adjusted within the metric) and the share of significant pairs overall,
    within a model category and across categories.
    """
    categories = categories or {}
    models = list(OrderedDict.fromkeys(record.model for record in records))
    kruskal: List[StatTestResult] = []
    dunn: List[StatTestResult] = []
    shares: List[SignificantShare] = []
    summaries: Dict[str, RankSummary] = {}
    for metric in metrics:
        groups = _groups(records, metric)
        try:
            result, summary = kruskal_wallis([groups[model] for model in models], metric)
            summaries[metric] = summary
        except DegenerateSampleError as e:
            logger.warning(f'{metric}: {e}')
            result = StatTestResult('kruskal_wallis', math.nan, None, groups=metric, note=str(e))
        result.metric = metric
        kruskal.append(result)
        if result.p is None:
            continue
        pairs = dunn_pairwise([groups[model] for model in models], models, tie_correction)
        for pair in pairs:
            pair.metric = metric
        dunn += pairs
        scopes: Dict[str, List[bool]] = {'overall': [], 'within_category': [], 'cross_category': []}
        for pair in pairs:
            significant = pair.p_adj is not None and pair.p_adj < alpha
            scopes['overall'].append(significant)
            a, b = (categories.get(model) for model in pair.pair or ('', ''))
            if a is not None and b is not None:
                scopes['within_category' if a == b else 'cross_category'].append(significant)
        shares += [SignificantShare(metric, scope, sum(flags), len(flags)) for scope, flags in scopes.items()]
    tested = [result for result in kruskal if result.p is not None]
    for result, adjusted in zip(tested, holm_bonferroni([result.p for result in tested if result.p is not None])):
        result.p_adj = adjusted
    for share in shares:
        if share.scope == 'overall':
            logger.info(f'{share.metric}: {share.significant} of {share.total} model pairs differ significantly')
    return PosthocResult(models, kruskal, dunn, shares, summaries, alpha)


# #######
# Writers
# #######

TEST_COLUMNS = ['method', 'metric', 'groups', 'group_a', 'group_b', 'statistic', 'p', 'p_adj', 'note']


def _test_row(result: StatTestResult) -> list:
    a, b = result.pair if result.pair is not None else ('', '')
    return [result.method, result.metric, result.groups, a, b, result.statistic, result.p, result.p_adj, result.note]


def write_tests_csv(results: Sequence[StatTestResult], path: Path) -> Path:
    return write_csv(path, TEST_COLUMNS, (_test_row(result) for result in results))


def write_posthoc(result: PosthocResult, directory: Path) -> List[Path]:
    directory = Path(directory)
    paths = [
        write_tests_csv(result.kruskal, directory / 'kruskal_wallis.csv'),
        write_tests_csv(result.dunn, directory / 'dunn.csv'),
        write_csv(directory / 'significant_pairs.csv', ['metric', 'scope', 'significant', 'total', 'fraction'],
                  ([s.metric, s.scope, s.significant, s.total, s.fraction] for s in result.shares)),
    ]
    rows: List[list] = []
    for metric in OrderedDict.fromkeys(r.metric for r in result.dunn):
        matrix = result.dunn_matrix(metric)
        for i, model in enumerate(result.models):
            rows.append([metric, model] + matrix[i].tolist())
    paths.append(write_csv(directory / 'dunn_matrix.csv', ['metric', 'model'] + result.models, rows))
    return paths


def write_cdd(inputs: Sequence[CddInputs], directory: Path) -> List[Path]:
    directory = Path(directory)
    ranks: List[list] = []
    pairs: List[list] = []
    cliques: List[list] = []
    for cdd in inputs:
        label = cdd.friedman.groups
        ranks += [[label, model, rank] for model, rank in zip(cdd.models, cdd.mean_ranks)]
        for test, effect in zip(cdd.pairs, cdd.effects):
            a, b = test.pair or ('', '')
            pairs.append([label, a, b, test.statistic, test.p, test.p_adj,
                          test.p_adj is not None and test.p_adj < cdd.alpha, effect.statistic, effect.note])
        cliques += [[label, i, ' '.join(members)] for i, members in enumerate(cdd.cliques)]
    return [
        write_csv(directory / 'cdd_ranks.csv', ['metric', 'model', 'mean_rank'], ranks),
        write_csv(directory / 'cdd_pairs.csv', ['metric', 'model_a', 'model_b', 'statistic', 'p', 'p_adj',
                                                'significant', 'cliffs_delta', 'magnitude'], pairs),
        write_csv(directory / 'cdd_cliques.csv', ['metric', 'clique', 'models'], cliques),
        write_tests_csv([cdd.friedman for cdd in inputs], directory / 'friedman.csv'),
    ]
