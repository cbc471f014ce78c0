from enum import Enum
from typing import Iterable, List, Optional, Sequence, Union

from rich.console import Console
from rich.live import Live
from rich.table import Table
from rich.text import Text
from rich.theme import Theme

from phishscan.opcodes import format_gas
from phishscan.schema import Corpus, Instruction, Label, StatTestResult

THEME = {
    'heading': 'bold cyan',
    'rule.line': 'dim cyan',
    'path': 'bold black',
    'status': 'bold black',
    'mnemonic': 'bold white',
    'operand': 'cyan',
    'phishing': 'red',
    'benign': 'green',
    'significant': 'bold red',
    'warning': 'bold red',
}
console = Console(theme=Theme(THEME))


def print_section_heading(heading: str) -> None:
    console.rule(f'[rule.line]─ [heading]{heading}[/heading]', align='left')


def _cell(value: Optional[float], digits: int = 4) -> str:
    if value is None:
        return '-'
    return f'{value:.{digits}f}'


def print_instructions(instructions: Iterable[Instruction]) -> None:
    table = Table(box=None)
    table.add_column('offset', justify='right')
    table.add_column('mnemonic', style='mnemonic')
    table.add_column('operand', style='operand')
    table.add_column('gas', justify='right')
    for instruction in instructions:
        operand = instruction.operand_hex
        if instruction.truncated:
            operand += ' (truncated)'
        table.add_row(str(instruction.offset), instruction.mnemonic, operand, format_gas(instruction.gas))
    console.print(table)


def print_corpus(corpus: Corpus) -> None:
    console.print(
        f'[status]{len(corpus)} contracts:[/status]'
        f' [phishing]{corpus.label_counts[Label.PHISHING]} phishing[/phishing],'
        f' [benign]{corpus.label_counts[Label.BENIGN]} benign[/benign]'
    )


def print_summary(summaries, metrics: Sequence[str] = ('accuracy', 'precision', 'recall', 'f1')) -> None:
    """ Mean ± standard deviation per model and split """
    table = Table(box=None)
    table.add_column('model')
    table.add_column('split')
    table.add_column('n', justify='right')
    for metric in metrics:
        table.add_column(metric, justify='right')
    for summary in summaries:
        table.add_row(summary.model, summary.split, str(summary.n), *(
            f'{summary.mean[metric]:.4f} ± {summary.std[metric]:.4f}' for metric in metrics
        ))
    console.print(table)


def print_tests(results: Iterable[StatTestResult], alpha: float = 0.05) -> None:
    table = Table(box=None)
    for column in ('method', 'metric', 'pair', 'statistic', 'p', 'p_adj'):
        table.add_column(column, justify='right' if column in ('statistic', 'p', 'p_adj') else 'left')
    for result in results:
        p_adj = _cell(result.p_adj, 6)
        if result.p_adj is not None and result.p_adj < alpha:
            p_adj = f'[significant]{p_adj}[/significant]'
        pair = ' vs '.join(result.pair) if result.pair else result.groups
        table.add_row(result.method, result.metric, pair, _cell(result.statistic), _cell(result.p, 6), p_adj)
    console.print(table)


def print_paths(paths: List) -> None:
    for path in paths:
        console.print(Text(str(path), style='path'))


class LongTaskStatus(Enum):
    OK = 1
    WARN = 2
    FAIL = 3


class LongTask:
    """ A status tracker for long tasks that don't report intermediary results """
    OK = LongTaskStatus.OK
    WARN = LongTaskStatus.WARN
    FAIL = LongTaskStatus.FAIL
    _status_map = {
        LongTaskStatus.OK: Text.assemble(
            ('[', 'bold white'),
            ('OK', 'green'),
            (']', 'bold white'),
        ),
        LongTaskStatus.WARN: Text.assemble(
            ('[', 'bold white'),
            ('WARN', 'bold yellow'),
            (']', 'bold white'),
        ),
        LongTaskStatus.FAIL: Text.assemble(
            ('[', 'bold white'),
            ('FAIL', 'black on red'),
            (']', 'bold white'),
        ),
    }

    def __init__(self, message: Union[str, Text]):
        self.message = message
        self.status: Union[str, Text] = ''
        self._live: Optional[Live] = None

    def set_status(self, status: Union[str, Text, LongTaskStatus]):
        if isinstance(status, LongTaskStatus):
            self.status = self._status_map[status]
        else:
            self.status = status
        if self._live:
            self._live.update(self._render(), refresh=True)

    def _render(self):
        grid = Table.grid(expand=True)
        grid.add_column()
        grid.add_column(justify="right")
        grid.add_row(self.message, self.status)
        return grid

    def __enter__(self):
        self._live = Live(self._render(), console=console, auto_refresh=False).__enter__()
        return self

    def __exit__(self, *args, **kwargs):
        if not self.status:
            # no status set before exit means the task failed
            self.set_status(LongTaskStatus.FAIL)
        elif self._live:
            self._live.update(self._render(), refresh=True)
        if self._live:
            self._live.__exit__(*args, **kwargs)
        self._live = None
