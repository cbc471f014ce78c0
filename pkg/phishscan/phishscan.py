"""Command line interface for phishscan."""
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import click

import phishscan
from phishscan.conf import MODEL_FAMILIES, Conf, RunConfig, load_conf
from phishscan.corpus import (
    corpus_report,
    dedup_exact,
    fetch_labeled,
    load_corpus,
    load_label_file,
    match_temporal_distribution,
    write_corpus,
    write_report,
)
from phishscan.errors import FoldError, PhishscanError, StatsPreconditionError
from phishscan.evaluation import (
    make_folds,
    read_metrics_csv,
    run_cv,
    run_scalability,
    run_time_resistance,
    summarize_metrics,
    write_aut_csv,
    write_metrics_csv,
    write_summary_csv,
    write_timing_csv,
)
from phishscan.features import (
    HistogramDataset,
    build_bigram_vocab,
    build_frequency_lookup,
    encode_frequency_image,
    encode_rgb_image,
    export_features,
    image_batch,
    token_batch,
    tokenize_bigrams,
)
from phishscan.logger import logger, set_verbose
from phishscan.models import describe, is_forest, load_model, save_model, train
from phishscan.opcodes import (
    DISASSEMBLY_COLUMNS,
    OpcodeTable,
    disassemble,
    disassembly_rows,
    load_opcode_table,
    write_disassembly_csv,
)
from phishscan.outputs import RunDirectory
from phishscan.rpc import EthRpcClient
from phishscan.schema import Corpus, MetricsRecord
from phishscan.shap import shap_summary
from phishscan.stats import (
    block_matrix,
    cdd_inputs,
    normality_screen,
    posthoc,
    write_cdd,
    write_posthoc,
    write_tests_csv,
)
from phishscan.tuning import grid_search, write_tuning_csv
from phishscan.utils import write_csv
from phishscan.view import (
    LongTask,
    console,
    print_corpus,
    print_instructions,
    print_paths,
    print_section_heading,
    print_summary,
    print_tests,
)

FEATURE_KINDS = ('histogram', 'rgb', 'frequency', 'bigram')
TREE_FAMILIES = ('rf', 'gbdt')


class AliasedGroup(click.Group):

    def get_command(self, ctx, cmd_name):
        rv = click.Group.get_command(self, ctx, cmd_name)
        if rv is not None:
            return rv
        matches = [x for x in self.list_commands(ctx)
                   if x.startswith(cmd_name)]
        if not matches:
            return None
        elif len(matches) == 1:
            return click.Group.get_command(self, ctx, matches[0])
        ctx.fail('Too many matches: %s' % ', '.join(sorted(matches)))


@click.command(cls=AliasedGroup)
@click.version_option(phishscan.__version__, prog_name='phishscan')
def cli() -> None:
    pass


def common_options(func: Callable) -> Callable:
    options = [
        click.option('--config', type=click.Path(exists=True, dir_okay=False, path_type=Path),
                     help='YAML or JSON configuration file. Default: built-in defaults'),
        click.option('--seed', type=int, help='Base seed; run i uses seed + i'),
        click.option('--workers', type=click.IntRange(min=1), help='Worker threads'),
        click.option('--output', type=click.Path(file_okay=False, path_type=Path),
                     help='Base directory for run directories. Default: paths.output'),
        click.option('--run-name', type=str,
                     help='Name of the run directory. Default: <timestamp>-<subcommand>'),
        click.option('--verbose', is_flag=True, help='Show informative log messages'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def corpus_option(func: Callable) -> Callable:
    return click.option('--corpus', type=click.Path(exists=True, dir_okay=False, path_type=Path),
                        help='Labeled corpus (CSV or JSON-Lines). Default: paths.corpus')(func)


def experiment_options(func: Callable) -> Callable:
    options = [
        click.option('--model', 'models', type=click.Choice(MODEL_FAMILIES), multiple=True,
                     help='Model family, repeatable. Default: experiment.models'),
        click.option('--k', type=int, help='Number of folds'),
        click.option('--runs', type=click.IntRange(min=1), help='Number of repeated runs'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@dataclass
class Invocation:
    conf: Conf
    run_config: RunConfig
    run_dir: RunDirectory
    table: OpcodeTable

    @property
    def seeds(self) -> List[int]:
        return list(self.conf.experiment.seeds or [])

    @property
    def workers(self) -> int:
        return self.conf.workers

    def corpus(self) -> Corpus:
        path = self.conf.paths.corpus
        if path is None:
            raise click.UsageError('No corpus given: use --corpus or set paths.corpus in the configuration')
        return load_corpus(path)

    def dataset(self, corpus: Optional[Corpus] = None) -> HistogramDataset:
        return HistogramDataset.from_corpus(corpus if corpus is not None else self.corpus(), self.table,
                                            self.workers)

    def params(self, family: str) -> Dict[str, Any]:
        return self.conf.hyperparams.for_family(family)


def start(subcommand: str, config: Optional[Path], seed: Optional[int], workers: Optional[int],
          output: Optional[Path], run_name: Optional[str], verbose: bool, corpus: Optional[Path] = None,
          models: Sequence[str] = (), k: Optional[int] = None, runs: Optional[int] = None,
          opcode_table: Optional[Path] = None, **options) -> Invocation:
    """ Resolves the configuration, creates the run directory and records config and provenance in it """
    set_verbose(verbose)
    conf = load_conf(config)
    if seed is not None:
        conf.seed = seed
    if workers is not None:
        conf.workers = workers
    if corpus is not None:
        conf.paths.corpus = corpus
    if opcode_table is not None:
        conf.paths.opcode_table = opcode_table
    if models:
        conf.experiment.models = list(models)
    if k is not None:
        if k < 2:
            raise FoldError(f'k must be at least 2, got {k}')
        conf.experiment.k = k
    if runs is not None:
        conf.experiment.runs = runs
    if seed is not None or runs is not None:
        conf.experiment.seeds = list(range(conf.seed, conf.seed + conf.experiment.runs))
    table = load_opcode_table(conf.paths.opcode_table) if conf.paths.opcode_table else load_opcode_table()
    run_dir = RunDirectory.create(output or conf.paths.output, subcommand, run_name)
    run_config = RunConfig.resolve(subcommand, conf, run_dir.path, **options)
    run_dir.write_config(run_config)
    run_dir.write_provenance(run_config, table, phishscan.__version__)
    if conf.paths.corpus is not None and conf.paths.corpus.exists():
        run_dir.write_corpus_digest(conf.paths.corpus)
    return Invocation(conf, run_config, run_dir, table)


# ###########
# Subcommands
# ###########

@cli.command(help='Fetch deployed bytecode over JSON-RPC')  # type: ignore
@click.option('--labels', type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help='Label file (address, label, deployed_month[, source]) to build a corpus from')
@click.option('--address', 'addresses', multiple=True,
              help='Print the bytecode of this address, repeatable')
@click.option('--endpoint', type=str, help='JSON-RPC endpoint URL. Default: rpc.endpoint or $ETH_RPC_URL')
@click.option('--cache-dir', type=click.Path(file_okay=False, path_type=Path),
              help='Directory of the response cache. Default: paths.cache')
@click.option('--block-tag', type=str, help='Block tag or number. Default: rpc.block_tag')
@click.option('--rate-limit', type=click.FloatRange(0, min_open=True),
              help='Requests per second. Default: rpc.rate_limit')
@click.option('--dedup', is_flag=True, help='Remove exact bytecode duplicates')
@click.option('--match-temporal', is_flag=True,
              help='Subsample benign contracts to the monthly phishing distribution')
@common_options
def fetch(labels: Optional[Path], addresses: Sequence[str], endpoint: Optional[str], cache_dir: Optional[Path],
          block_tag: Optional[str], rate_limit: Optional[float], dedup: bool, match_temporal: bool, **common) -> None:
    if not labels and not addresses:
        raise click.UsageError('Give --labels or at least one --address')
    inv = start('fetch', **common, labels=labels, block_tag=block_tag, dedup=dedup)
    if endpoint:
        inv.conf.rpc.endpoint = endpoint
    if rate_limit:
        inv.conf.rpc.rate_limit = rate_limit
    client = EthRpcClient(inv.conf.rpc, cache_dir or inv.conf.paths.cache)
    for address in addresses:
        click.echo(f'{address}\t{client.fetch_bytecode(address, block_tag)}')
    if labels:
        rows = load_label_file(labels)
        with LongTask(f'Fetching {len(rows)} contracts') as task:
            corpus = fetch_labeled(rows, client, block_tag, inv.workers)
            task.set_status(LongTask.OK)
        if dedup:
            corpus = dedup_exact(corpus)
        if match_temporal:
            corpus = match_temporal_distribution(corpus, inv.conf.seed)
        destination = inv.run_dir / 'corpus.jsonl'
        write_corpus(corpus, destination)
        print_corpus(corpus)
        print_paths([destination])


@cli.command(help='Disassemble EVM bytecode')  # type: ignore
@click.option('--in', 'bytecode', type=str, help='Bytecode as hex, with or without 0x')
@click.option('--file', 'bytecode_file', type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help='File holding the bytecode as hex')
@click.option('--csv', 'csv_path', type=click.Path(dir_okay=False, path_type=Path),
              help='Also write the instructions as CSV')
@click.option('--format', 'fmt', type=click.Choice(['table', 'csv']), default='table',
              help='Output format on stdout')
@click.option('--opcode-table', type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help='Opcode table CSV. Default: paths.opcode_table or the bundled Shanghai table')
@common_options
def disasm(bytecode: Optional[str], bytecode_file: Optional[Path], csv_path: Optional[Path], fmt: str,
           opcode_table: Optional[Path], **common) -> None:
    if (bytecode is None) == (bytecode_file is None):
        raise click.UsageError('Give exactly one of --in and --file')
    inv = start('disasm', **common, opcode_table=opcode_table, bytecode_file=bytecode_file and str(bytecode_file),
                csv=csv_path and str(csv_path), format=fmt)
    if bytecode_file is not None:
        bytecode = bytecode_file.read_text()
    instructions = disassemble(bytecode or '', inv.table)
    if fmt == 'csv':
        for row in [DISASSEMBLY_COLUMNS, *disassembly_rows(instructions)]:
            click.echo(','.join(row))
    else:
        print_instructions(instructions)
    if csv_path is not None:
        write_disassembly_csv(instructions, csv_path)


@cli.command(help='Monthly counts and opcode usage of a corpus')  # type: ignore
@corpus_option
@click.option('--dedup', is_flag=True, help='Remove exact bytecode duplicates first')
@click.option('--top', type=click.IntRange(min=1), help='Number of most used mnemonics. Default: experiment.top_n')
@click.option('--mnemonic', 'mnemonics', multiple=True, help='Report these mnemonics instead, repeatable')
@common_options
def report(corpus: Optional[Path], dedup: bool, top: Optional[int], mnemonics: Sequence[str], **common) -> None:
    inv = start('report', **common, corpus=corpus, dedup=dedup)
    contracts = inv.corpus()
    if dedup:
        contracts = dedup_exact(contracts)
        write_corpus(contracts, inv.run_dir / 'corpus.dedup.jsonl')
    result = corpus_report(contracts, list(mnemonics) or None, top or inv.conf.experiment.top_n, inv.table)
    print_corpus(contracts)
    print_paths(write_report(result, inv.run_dir.path))


@cli.command(help='Export feature representations of a corpus')  # type: ignore
@corpus_option
@click.option('--kind', 'kinds', type=click.Choice(FEATURE_KINDS), multiple=True,
              help='Feature kind, repeatable. Default: histogram')
@click.option('--stride', type=click.IntRange(min=1), default=6, show_default=True,
              help='Hex characters per bigram window')
@common_options
def featurize(corpus: Optional[Path], kinds: Sequence[str], stride: int, **common) -> None:
    """ Vocabularies and lookups are built from the given corpus; featurize a training corpus to keep them clean """
    inv = start('featurize', **common, corpus=corpus, kinds=list(kinds), stride=stride)
    contracts = inv.corpus()
    ids = [record.address for record in contracts]
    labels = [int(record.label) for record in contracts]
    items: List[Any] = []
    kinds = kinds or ('histogram',)
    if 'histogram' in kinds:
        dataset = inv.dataset(contracts)
        items.append(dataset.matrix(dataset.vocabulary()))
    if 'rgb' in kinds:
        items.append(image_batch('rgb', [encode_rgb_image(record.raw) for record in contracts], ids, labels))
    if 'frequency' in kinds:
        listings = [disassemble(record.raw, inv.table) for record in contracts]
        lookup = build_frequency_lookup(listings)
        items.append(image_batch('frequency', [encode_frequency_image(listing, lookup) for listing in listings],
                                 ids, labels))
    if 'bigram' in kinds:
        vocabulary = build_bigram_vocab([record.bytecode for record in contracts], stride)
        sequences = [tokenize_bigrams(record.bytecode, vocabulary) for record in contracts]
        items.append(token_batch(sequences, vocabulary, ids, labels))
    manifest = export_features(items, inv.run_dir / 'features')
    print_paths([inv.run_dir / 'features' / entry['path'] for entry in manifest['entries']])


@cli.command(name='train', help='Train one model on a whole corpus and save it')  # type: ignore
@corpus_option
@click.option('--model', 'family', type=click.Choice(MODEL_FAMILIES), default='rf', show_default=True,
              help='Model family')
@click.option('--out', type=click.Path(dir_okay=False, path_type=Path),
              help='Model file, .json or .npz. Default: model.json in the run directory')
@common_options
def train_model(corpus: Optional[Path], family: str, out: Optional[Path], **common) -> None:
    inv = start('train', **common, corpus=corpus, model=family)
    dataset = inv.dataset()
    features = dataset.matrix(dataset.vocabulary())
    with LongTask(f'Training {family} on {features.n_rows} contracts') as task:
        model = train(family, features, inv.params(family), seed=inv.conf.seed, workers=inv.workers)
        task.set_status(LongTask.OK)
    path = save_model(model, out or inv.run_dir / 'model.json')
    console.print(describe(model))
    print_paths([path])


@cli.command(help='Grid search over the configured hyperparameter grid')  # type: ignore
@corpus_option
@experiment_options
@common_options
def tune(corpus: Optional[Path], models: Sequence[str], k: Optional[int], runs: Optional[int], **common) -> None:
    inv = start('tune', **common, corpus=corpus, models=models, k=k, runs=runs)
    dataset = inv.dataset()
    results = [
        grid_search(family, dataset, inv.conf.grid.get(family, {}), k=inv.conf.experiment.k, seed=inv.conf.seed,
                    stratified=inv.conf.experiment.stratified, base_params=inv.params(family), workers=inv.workers)
        for family in inv.conf.experiment.models
    ]
    paths = [
        write_tuning_csv(results, inv.run_dir / 'tuning.csv'),
        inv.run_dir.write_json('best_params.json', {result.family: result.best for result in results}),
    ]
    print_paths(paths)


@cli.command(help='Repeated k-fold cross-validation')  # type: ignore
@corpus_option
@experiment_options
@click.option('--tune', 'tune_first', is_flag=True, help='Grid search each model before cross-validation')
@common_options
def evaluate(corpus: Optional[Path], models: Sequence[str], k: Optional[int], runs: Optional[int],
             tune_first: bool, **common) -> None:
    inv = start('evaluate', **common, corpus=corpus, models=models, k=k, runs=runs, tune=tune_first)
    experiment = inv.conf.experiment
    dataset = inv.dataset()
    records: List[MetricsRecord] = []
    tuned = []
    for family in experiment.models:
        params = inv.params(family)
        if tune_first:
            result = grid_search(family, dataset, inv.conf.grid.get(family, {}), k=experiment.k, seed=inv.conf.seed,
                                 stratified=experiment.stratified, base_params=params, workers=inv.workers)
            tuned.append(result)
            params = result.best
        records += run_cv(family, dataset, experiment.k, seeds=inv.seeds, params=params,
                          stratified=experiment.stratified, workers=inv.workers)
    summaries = summarize_metrics(records)
    paths = [
        write_metrics_csv(records, inv.run_dir / 'metrics.csv'),
        write_summary_csv(summaries, inv.run_dir / 'summary.csv'),
    ]
    if tuned:
        paths.append(write_tuning_csv(tuned, inv.run_dir / 'tuning.csv'))
    print_section_heading('Cross-validation')
    print_summary(summaries)
    print_paths(paths)


@cli.command(help='Cross-validation on growing stratified subsets')  # type: ignore
@corpus_option
@experiment_options
@click.option('--fraction', 'fractions', type=click.FloatRange(0, 1, min_open=True), multiple=True,
              help='Subset fraction, repeatable. Default: experiment.fractions')
@click.option('--force', is_flag=True, help='Emit critical difference data even when Friedman is not rejected')
@common_options
def scalability(corpus: Optional[Path], models: Sequence[str], k: Optional[int], runs: Optional[int],
                fractions: Sequence[float], force: bool, **common) -> None:
    inv = start('scalability', **common, corpus=corpus, models=models, k=k, runs=runs,
                fractions=list(fractions) or None)
    experiment = inv.conf.experiment
    fractions = list(fractions) or list(experiment.fractions)
    result = run_scalability(experiment.models, inv.dataset(), fractions, experiment.k, inv.seeds,
                             {family: inv.params(family) for family in experiment.models}, experiment.stratified,
                             inv.workers)
    summaries = summarize_metrics(result.records)
    paths = [
        write_metrics_csv(result.records, inv.run_dir / 'metrics.csv'),
        write_summary_csv(summaries, inv.run_dir / 'summary.csv'),
        write_timing_csv(result.timing, inv.run_dir / 'timing.csv'),
    ]
    diagrams = []
    for metric in MetricsRecord.METRICS:
        names, _, data = block_matrix(result.records, metric)
        try:
            diagrams.append(cdd_inputs(data, names, experiment.alpha, force, metric))
        except StatsPreconditionError as e:
            logger.warning(f'No critical difference data for {metric}: {e}')
    if diagrams:
        paths += write_cdd(diagrams, inv.run_dir.path)
    print_section_heading('Scalability')
    print_summary(summaries)
    print_paths(paths)


@cli.command(help='Train on early months and test month by month')  # type: ignore
@corpus_option
@click.option('--model', 'models', type=click.Choice(MODEL_FAMILIES), multiple=True,
              help='Model family, repeatable. Default: experiment.models')
@click.option('--train-first', type=str, help='First training month (YYYY-MM)')
@click.option('--train-last', type=str, help='Last training month (YYYY-MM)')
@click.option('--test-month', 'test_months', multiple=True, help='Test month (YYYY-MM), repeatable')
@click.option('--match-temporal', is_flag=True,
              help='Subsample benign contracts to the monthly phishing distribution first')
@common_options
def timeline(corpus: Optional[Path], models: Sequence[str], train_first: Optional[str], train_last: Optional[str],
             test_months: Sequence[str], match_temporal: bool, **common) -> None:
    inv = start('timeline', **common, corpus=corpus, models=models, match_temporal=match_temporal)
    time_plan = inv.conf.experiment.time_plan.copy(update={
        key: value for key, value in (('train_first', train_first), ('train_last', train_last),
                                      ('test_months', list(test_months) or None)) if value is not None
    })
    plan = time_plan.plan()
    contracts = inv.corpus()
    if match_temporal:
        contracts = match_temporal_distribution(contracts, inv.conf.seed)
    result = run_time_resistance(inv.conf.experiment.models, inv.dataset(contracts), plan, inv.conf.seed,
                                 {family: inv.params(family) for family in inv.conf.experiment.models})
    paths = [
        write_metrics_csv(result.records, inv.run_dir / 'metrics.csv'),
        write_aut_csv(result, inv.run_dir / 'aut.csv'),
    ]
    print_section_heading('Time resistance')
    for family, score in result.aut.items():
        console.print(f'{family}: AUT {"-" if score is None else f"{score:.4f}"}')
    print_paths(paths)


@cli.command(name='posthoc', help='Post hoc tests over a metrics file')  # type: ignore
@click.option('--metrics', 'metrics_path', type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help='metrics.csv written by evaluate')
@click.option('--metric', 'metrics', type=click.Choice(MetricsRecord.METRICS + ('macro_precision', 'macro_recall',
                                                                                'macro_f1')),
              multiple=True, help='Metric, repeatable. Default: accuracy, precision, recall, f1')
@click.option('--tie-correction', is_flag=True, help="Use the tie-corrected standard error in Dunn's test")
@common_options
def posthoc_tests(metrics_path: Path, metrics: Sequence[str], tie_correction: bool, **common) -> None:
    inv = start('posthoc', **common, metrics=str(metrics_path), tie_correction=tie_correction)
    inv.run_dir.write_digest(metrics_path, 'metrics')
    records = read_metrics_csv(metrics_path)
    metrics = list(metrics) or list(MetricsRecord.METRICS)
    experiment = inv.conf.experiment
    screen = normality_screen(records, metrics, experiment.alpha)
    result = posthoc(records, metrics, experiment.categories, experiment.alpha, tie_correction)
    paths = [write_tests_csv(screen.results, inv.run_dir / 'normality.csv')]
    paths += write_posthoc(result, inv.run_dir.path)
    print_section_heading(f'Normality: {screen.violations} of {len(screen.results)} samples reject')
    print_section_heading('Kruskal-Wallis')
    print_tests(result.kruskal, experiment.alpha)
    print_paths(paths)


@cli.command(help='SHAP attributions of a tree ensemble on one test fold')  # type: ignore
@corpus_option
@click.option('--model', 'family', type=click.Choice(TREE_FAMILIES), default='rf', show_default=True,
              help='Tree family to train on the training portion of the fold')
@click.option('--model-file', type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help='Explain this saved model instead of training one')
@click.option('--fold', type=click.IntRange(min=0), default=0, show_default=True, help='Fold to explain')
@click.option('--top', type=click.IntRange(min=1), help='Number of features. Default: experiment.top_n')
@click.option('--max-samples', type=click.IntRange(min=1), help='Explain at most this many test samples')
@common_options
def explain(corpus: Optional[Path], family: str, model_file: Optional[Path], fold: int, top: Optional[int],
            max_samples: Optional[int], **common) -> None:
    inv = start('explain', **common, corpus=corpus, model=family, model_file=model_file and str(model_file),
                fold=fold)
    experiment = inv.conf.experiment
    dataset = inv.dataset()
    if fold >= experiment.k:
        raise FoldError(f'Fold {fold} does not exist with k={experiment.k}')
    plan = make_folds(dataset.labels, experiment.k, inv.conf.seed, experiment.stratified)
    train_idx, test_idx = list(plan.splits())[fold]
    if max_samples is not None:
        test_idx = test_idx[:max_samples]
    if model_file is not None:
        model = load_model(model_file)
        test = dataset.matrix(model.vocabulary, test_idx)
        # the model file does not say which rows it was trained on
        logger.warning(f'{model_file} may have been trained on fold {fold}; its attributions are not held out')
    else:
        train_split, test = dataset.matrices(train_idx, test_idx)
        model = train(family, train_split, inv.params(family), seed=inv.conf.seed, workers=inv.workers)
    if not is_forest(model):
        raise click.UsageError(f'explain needs a tree ensemble, {model_file} holds a {model.family} model')
    with LongTask(f'Explaining {test.n_rows} contracts') as task:
        summary = shap_summary(model.estimator, test, top or experiment.top_n)  # type: ignore
        task.set_status(LongTask.OK)
    paths = [
        write_csv(inv.run_dir / 'shap_values.csv', ['feature', 'id', 'label', 'share', 'value', 'shap'],
                  summary.rows),
        write_csv(inv.run_dir / 'shap_features.csv', ['rank', 'feature', 'mean_abs_shap'],
                  ([i + 1, column, value] for i, (column, value) in enumerate(zip(summary.columns,
                                                                                  summary.mean_abs)))),
        inv.run_dir.write_json('explain.json', {
            'model': describe(model),
            'fold': fold,
            'samples': test.n_rows,
            'base_value': summary.base_value,
            'held_out': model_file is None,
        }),
    ]
    held_out = '' if model_file is None else ' (rows may be training data)'
    print_section_heading(f'Most influential features of {model.family}{held_out}')
    for column, value in zip(summary.columns, summary.mean_abs):
        console.print(f'{column:>16} {value:.6f}')
    print_paths(paths)


def _one_line(message: str) -> str:
    return ' '.join(message.split())


def main(argv: Optional[Sequence[str]] = None) -> int:
    """ Runs the command line and returns the exit status; errors become one tab-separated line on stderr """
    try:
        result = cli.main(args=list(argv) if argv is not None else None, prog_name='phishscan',
                          standalone_mode=False)
    except click.UsageError as e:
        click.echo(f'error\tUsageError\t{_one_line(e.format_message())}', err=True)
        return 2
    except click.ClickException as e:
        click.echo(f'error\t{type(e).__name__}\t{_one_line(e.format_message())}', err=True)
        return e.exit_code
    except click.exceptions.Abort:
        click.echo('error\tAbort\taborted', err=True)
        return 1
    # file input can fail with plain ValueError or OSError outside the package's own errors
    except (PhishscanError, ValueError, OSError) as e:
        logger.debug('Command failed', exc_info=True)
        click.echo(f'error\t{type(e).__name__}\t{_one_line(str(e))}', err=True)
        return 1
    return result if isinstance(result, int) else 0


def run() -> None:
    sys.exit(main())


if __name__ == '__main__':
    run()
