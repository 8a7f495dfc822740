"""System descriptions: the matrix function L(alpha) as parsed expressions.

A description file looks like::

    # nonlinear example, alpha = x1
    dims: 2 1 1
    vars: x1
    bounds: x1 -1.5707963267948966 1.5707963267948966
    L[1,1] = 2*sin(x1) + 1
    L[1,2] = 3*x1 + 5
    L[2,3] = 1

``dims`` gives ``nx nu ny``; the entry grid is ``(nx+ny) x (nx+nu)`` with
1-based indices and omitted entries equal to 0. Variables are named by role
(``x1``.., ``u1``.. for state/input dependence, ``a1``.. for scheduling
variables); their order defines the vector alpha.
"""

import math
import re
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from typing import Final

import numpy as np
import numpy.typing as npt

from lpvembed.errors import (
    ConfigError,
    DimensionMismatchError,
    EvaluationError,
    SystemSyntaxError,
    UnknownIdentifierError,
)
from lpvembed.log import get_logger

log = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]

FUNCTIONS: Final = {
    'sin': np.sin,
    'cos': np.cos,
    'tan': np.tan,
    'exp': np.exp,
    'abs': np.abs,
}
CONSTANTS: Final = {'pi': math.pi}
RESERVED: Final = frozenset(FUNCTIONS) | frozenset(CONSTANTS)


# Expression nodes ----------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str
    index: int


@dataclass(frozen=True)
class Unary:
    """Negation (``func='neg'``) or a call of one of ``FUNCTIONS``."""

    func: str
    operand: 'Expr'


@dataclass(frozen=True)
class Binary:
    """``+ - * /``; division is checked for a zero denominator at evaluation."""

    op: str
    left: 'Expr'
    right: 'Expr'


@dataclass(frozen=True)
class Power:
    """Integer power; the exponent is a literal so evaluation stays total."""

    base: 'Expr'
    exponent: int


Expr = Const | Var | Unary | Binary | Power


def _walk(node: Expr) -> Iterator[Expr]:
    yield node
    match node:
        case Unary(operand=operand):
            yield from _walk(operand)
        case Binary(left=left, right=right):
            yield from _walk(left)
            yield from _walk(right)
        case Power(base=base):
            yield from _walk(base)


@dataclass(frozen=True)
class ExpressionTree:
    """A parsed expression bound to an ordered variable list."""

    root: Expr
    variables: tuple[str, ...]

    @property
    def is_constant(self) -> bool:
        return not any(isinstance(node, Var) for node in _walk(self.root))

    def __str__(self) -> str:
        return format_expression(self)


# Tokenizer / Pratt parser ---------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
    | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
    | (?P<ident>[A-Za-z_]\w*)
    | (?P<op>\*\*|[-+*/^(),])
    """,
    re.VERBOSE,
)

_INFIX_BP: Final = {'+': 10, '-': 10, '*': 20, '/': 20, '^': 30, '**': 30}
_PREFIX_BP: Final = 25


@dataclass(frozen=True)
class _Token:
    kind: str  # number | ident | op | end
    text: str
    column: int  # 0-based offset into the expression text


def _tokenize(text: str, line: int, column_offset: int) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise SystemSyntaxError(f'unexpected character {text[pos]!r}', line, column_offset + pos + 1)
        kind = match.lastgroup or ''
        if kind != 'ws':
            tokens.append(_Token(kind, match.group(), pos))
        pos = match.end()
    tokens.append(_Token('end', '', len(text)))
    return tokens


class _Parser:
    """Pratt parser over one expression string."""

    def __init__(self, text: str, variables: Sequence[str], line: int, column_offset: int) -> None:
        self.tokens = _tokenize(text, line, column_offset)
        self.pos = 0
        self.index = {name: i for i, name in enumerate(variables)}
        self.line = line
        self.column_offset = column_offset

    @property
    def token(self) -> _Token:
        return self.tokens[self.pos]

    def error(self, message: str, token: _Token | None = None) -> SystemSyntaxError:
        tok = token or self.token
        return SystemSyntaxError(message, self.line, self.column_offset + tok.column + 1)

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> None:
        if self.token.text != text:
            found = self.token.text or 'end of expression'
            raise self.error(f'expected {text!r}, found {found!r}')
        self.advance()

    def parse(self) -> Expr:
        if self.token.kind == 'end':
            raise self.error('empty expression')
        node = self.expression(0)
        if self.token.kind != 'end':
            raise self.error(f'unexpected {self.token.text!r}')
        return node

    def expression(self, rbp: int) -> Expr:
        left = self.prefix(self.advance())
        while self.token.kind == 'op' and rbp < _INFIX_BP.get(self.token.text, 0):
            left = self.infix(self.advance(), left)
        return left

    def prefix(self, tok: _Token) -> Expr:
        if tok.kind == 'number':
            return Const(float(tok.text))
        if tok.kind == 'ident':
            return self.identifier(tok)
        if tok.text == '-':
            return Unary('neg', self.expression(_PREFIX_BP))
        if tok.text == '+':
            return self.expression(_PREFIX_BP)
        if tok.text == '(':
            node = self.expression(0)
            self.expect(')')
            return node
        raise self.error(f'unexpected {tok.text or "end of expression"!r}', tok)

    def identifier(self, tok: _Token) -> Expr:
        name = tok.text
        if name in FUNCTIONS:
            self.expect('(')
            arg = self.expression(0)
            self.expect(')')
            return Unary(name, arg)
        if name in CONSTANTS:
            return Const(CONSTANTS[name])
        if name not in self.index:
            raise UnknownIdentifierError(name, self.line)
        return Var(name, self.index[name])

    def infix(self, tok: _Token, left: Expr) -> Expr:
        if tok.text in ('^', '**'):
            return Power(left, self.integer_exponent())
        return Binary(tok.text, left, self.expression(_INFIX_BP[tok.text]))

    def integer_exponent(self) -> int:
        start = self.token
        parens = self.token.text == '('
        if parens:
            self.advance()
        sign = 1
        if self.token.text in ('-', '+'):
            sign = -1 if self.advance().text == '-' else 1
        tok = self.advance()
        if tok.kind != 'number' or not float(tok.text).is_integer():
            raise self.error('exponent must be a constant integer', start)
        if parens:
            self.expect(')')
        return sign * int(float(tok.text))


def parse_expression(
    text: str,
    variables: Sequence[str],
    *,
    line: int = 1,
    column_offset: int = 0,
) -> ExpressionTree:
    """Parse one arithmetic expression over ``variables``.

    Raises:
        SystemSyntaxError: malformed expression (1-based line/column)
        UnknownIdentifierError: name not in ``variables``
    """
    root = _Parser(text, variables, line, column_offset).parse()
    return ExpressionTree(root, tuple(variables))


# Canonical printer ----------------------------------------------------------

_ATOM_PREC = 40


def _format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _format(node: Expr) -> tuple[str, int]:
    """Return (text, precedence) with the minimal parentheses for re-parsing."""
    match node:
        case Const(value=value):
            if value == math.pi:
                return 'pi', _ATOM_PREC
            return _format_number(value), (_ATOM_PREC if value >= 0 else _PREFIX_BP)
        case Var(name=name):
            return name, _ATOM_PREC
        case Unary(func='neg', operand=operand):
            text, prec = _format(operand)
            return f'-{_wrap(text, prec, _PREFIX_BP)}', _PREFIX_BP
        case Unary(func=func, operand=operand):
            return f'{func}({_format(operand)[0]})', _ATOM_PREC
        case Binary(op=op, left=left, right=right):
            prec = _INFIX_BP[op]
            ltext, lprec = _format(left)
            rtext, rprec = _format(right)
            # left-associative: an equal-precedence right child keeps its parentheses
            return f'{_wrap(ltext, lprec, prec)}{op}{_wrap(rtext, rprec, prec + 1)}', prec
        case Power(base=base, exponent=exponent):
            text, prec = _format(base)
            return f'{_wrap(text, prec, _ATOM_PREC)}^{exponent}', _INFIX_BP['^']
    raise TypeError(f'not an expression node: {node!r}')


def _wrap(text: str, prec: int, required: int) -> str:
    return text if prec >= required else f'({text})'


def format_expression(expr: ExpressionTree | Expr) -> str:
    """Canonical text of an expression; ``parse(format(t))`` equals ``t``."""
    root = expr.root if isinstance(expr, ExpressionTree) else expr
    return _format(root)[0]


# Evaluation -----------------------------------------------------------------


def _evaluate(node: Expr, values: FloatArray) -> FloatArray | float:
    match node:
        case Const(value=value):
            return value
        case Var(index=index):
            return values[index]
        case Unary(func='neg', operand=operand):
            return -_evaluate(operand, values)
        case Unary(func=func, operand=operand):
            return FUNCTIONS[func](_evaluate(operand, values))
        case Binary(op=op, left=left, right=right):
            lhs = _evaluate(left, values)
            rhs = _evaluate(right, values)
            if op == '+':
                return lhs + rhs
            if op == '-':
                return lhs - rhs
            if op == '*':
                return lhs * rhs
            _check_denominator(rhs)
            return lhs / rhs
        case Power(base=base, exponent=exponent):
            value = _evaluate(base, values)
            if exponent < 0:
                _check_denominator(value)
                return 1.0 / np.power(value, -exponent)
            return np.power(value, exponent)
    raise TypeError(f'not an expression node: {node!r}')


def _check_denominator(value: FloatArray | float) -> None:
    zeros = np.flatnonzero(np.atleast_1d(np.asarray(value)) == 0.0)
    if zeros.size:
        sample = int(zeros[0]) if np.ndim(value) else None
        raise EvaluationError('division by zero', sample=sample)


def evaluate_tree(expr: ExpressionTree, values: npt.ArrayLike) -> FloatArray:
    """Evaluate ``expr`` at one point (shape ``(n_vars,)``) or a batch.

    A batch has shape ``(n_vars, N)`` and yields an ``(N,)`` result.

    Raises:
        EvaluationError: division by zero or a non-finite result; ``sample``
            names the first offending batch column
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape[:1] != (len(expr.variables),):
        raise DimensionMismatchError(f'expected {len(expr.variables)} variable values, got shape {arr.shape}')
    with np.errstate(all='ignore'):
        result = np.broadcast_to(np.asarray(_evaluate(expr.root, arr), dtype=np.float64), arr.shape[1:])
    bad = np.flatnonzero(~np.isfinite(np.atleast_1d(result)))
    if bad.size:
        raise EvaluationError('non-finite result', sample=int(bad[0]) if result.ndim else None)
    return result


def eval_entry(expr: ExpressionTree, alpha: npt.ArrayLike) -> float:
    """Evaluate one entry expression at the point ``alpha``.

    Example:
        >>> eval_entry(parse_expression('1+2*a1', ['a1']), [2.0])
        5.0
    """
    return float(evaluate_tree(expr, alpha))


# System descriptions --------------------------------------------------------


@dataclass(frozen=True)
class SystemDescription:
    """The matrix function L(alpha), partitioned as [[A, B], [C, D]].

    Attributes:
        n_x, n_u, n_y: state, input and output counts
        variable_names: ordered names of the components of alpha
        entries: ``(n_x+n_y) x (n_x+n_u)`` grid of expressions
        alpha_box: per-variable ``(lower, upper)`` bounds, if declared
    """

    n_x: int
    n_u: int
    n_y: int
    variable_names: tuple[str, ...]
    entries: tuple[tuple[ExpressionTree, ...], ...]
    alpha_box: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if min(self.n_x, self.n_u, self.n_y) < 0:
            raise DimensionMismatchError('dimensions must be non-negative')
        if len(self.entries) != self.m or any(len(row) != self.n for row in self.entries):
            raise DimensionMismatchError(f'entry grid must be {self.m}x{self.n}')
        for row in self.entries:
            for expr in row:
                if not set(_names(expr)) <= set(self.variable_names):
                    raise UnknownIdentifierError(sorted(set(_names(expr)) - set(self.variable_names))[0])
        if self.alpha_box is not None:
            if len(self.alpha_box) != len(self.variable_names):
                raise DimensionMismatchError('alpha_box needs one (lower, upper) pair per variable')
            if any(lo > hi for lo, hi in self.alpha_box):
                raise ConfigError('alpha_box lower bound exceeds upper bound')

    @property
    def m(self) -> int:
        return self.n_x + self.n_y

    @property
    def n(self) -> int:
        return self.n_x + self.n_u

    @property
    def n_alpha(self) -> int:
        return len(self.variable_names)

    @property
    def n_gamma(self) -> int:
        return self.m * self.n


def _names(expr: ExpressionTree) -> Iterator[str]:
    return (node.name for node in _walk(expr.root) if isinstance(node, Var))


_DIMS_RE = re.compile(r'dims\s*:(.*)$')
_VARS_RE = re.compile(r'vars\s*:(.*)$')
_BOUNDS_RE = re.compile(r'bounds\s*:(.*)$')
_ENTRY_RE = re.compile(r'L\s*\[\s*(\d+)\s*,\s*(\d+)\s*\]\s*=(.*)$')
_IDENT_RE = re.compile(r'[A-Za-z_]\w*$')


def _parse_dims(body: str, lineno: int) -> tuple[int, int, int]:
    parts = body.split()
    if len(parts) != 3 or not all(p.isdigit() for p in parts):
        raise SystemSyntaxError("'dims:' expects three non-negative integers 'nx nu ny'", lineno, 1)
    nx, nu, ny = (int(p) for p in parts)
    return nx, nu, ny


def _parse_vars(body: str, lineno: int) -> tuple[str, ...]:
    names = tuple(body.replace(',', ' ').split())
    for name in names:
        if not _IDENT_RE.match(name) or name in RESERVED:
            raise SystemSyntaxError(f'invalid variable name {name!r}', lineno, 1)
    if len(set(names)) != len(names):
        raise SystemSyntaxError('duplicate variable name', lineno, 1)
    return names


def _parse_bounds(body: str, lineno: int) -> tuple[str, float, float]:
    parts = body.split()
    try:
        name, lo, hi = parts[0], float(parts[1]), float(parts[2])
    except (IndexError, ValueError):
        raise SystemSyntaxError("'bounds:' expects '<name> <lower> <upper>'", lineno, 1) from None
    if len(parts) != 3:
        raise SystemSyntaxError("'bounds:' expects '<name> <lower> <upper>'", lineno, 1)
    if lo > hi:
        raise ConfigError(f'line {lineno}: lower bound exceeds upper bound for {name!r}')
    return name, lo, hi


def parse_system(text: str) -> SystemDescription:
    """Parse a system description document.

    Raises:
        SystemSyntaxError: malformed line or expression (with line/column)
        UnknownIdentifierError: expression uses an undeclared name
        DimensionMismatchError: entry index outside the declared grid
    """
    dims: tuple[int, int, int] | None = None
    names: tuple[str, ...] | None = None
    bounds: dict[str, tuple[float, float]] = {}
    bound_lines: dict[str, int] = {}
    raw_entries: dict[tuple[int, int], tuple[str, int, int]] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split('#', 1)[0]
        stripped = content.strip()
        if not stripped:
            continue
        if m := _DIMS_RE.match(stripped):
            if dims is not None:
                raise SystemSyntaxError("duplicate 'dims:' declaration", lineno, 1)
            dims = _parse_dims(m.group(1), lineno)
        elif m := _VARS_RE.match(stripped):
            if names is not None:
                raise SystemSyntaxError("duplicate 'vars:' declaration", lineno, 1)
            names = _parse_vars(m.group(1), lineno)
        elif m := _BOUNDS_RE.match(stripped):
            name, lo, hi = _parse_bounds(m.group(1), lineno)
            bounds[name] = (lo, hi)
            bound_lines[name] = lineno
        elif m := _ENTRY_RE.match(stripped):
            key = (int(m.group(1)), int(m.group(2)))
            if key in raw_entries:
                raise SystemSyntaxError(f'duplicate entry L[{key[0]},{key[1]}]', lineno, 1)
            column = content.index('=') + 1
            raw_entries[key] = (content[column:], lineno, column)
        else:
            raise SystemSyntaxError(f'unrecognised line {stripped!r}', lineno, 1)

    if dims is None:
        raise SystemSyntaxError("missing 'dims:' declaration", 1, 1)
    names = names or ()
    nx, nu, ny = dims
    m_rows, n_cols = nx + ny, nx + nu

    zero = ExpressionTree(Const(0.0), names)
    grid = [[zero] * n_cols for _ in range(m_rows)]
    for (i, j), (expr_text, lineno, column) in sorted(raw_entries.items()):
        if not (1 <= i <= m_rows and 1 <= j <= n_cols):
            raise DimensionMismatchError(
                f'line {lineno}: entry L[{i},{j}] outside the declared {m_rows}x{n_cols} grid',
            )
        grid[i - 1][j - 1] = parse_expression(expr_text, names, line=lineno, column_offset=column)

    alpha_box = None
    for name, lineno in bound_lines.items():
        if name not in names:
            raise UnknownIdentifierError(name, lineno)
    if bounds:
        missing = [name for name in names if name not in bounds]
        if missing:
            raise DimensionMismatchError(f'bounds missing for variables {missing}')
        alpha_box = tuple(bounds[name] for name in names)

    return SystemDescription(
        n_x=nx,
        n_u=nu,
        n_y=ny,
        variable_names=names,
        entries=tuple(tuple(row) for row in grid),
        alpha_box=alpha_box,
    )


def format_system(sys: SystemDescription) -> str:
    """Canonical description text; zero entries are omitted."""
    lines = [f'dims: {sys.n_x} {sys.n_u} {sys.n_y}', f'vars: {" ".join(sys.variable_names)}']
    if sys.alpha_box is not None:
        lines.extend(f'bounds: {name} {lo!r} {hi!r}' for name, (lo, hi) in zip(sys.variable_names, sys.alpha_box))
    for i, row in enumerate(sys.entries, start=1):
        for j, expr in enumerate(row, start=1):
            if expr.root != Const(0.0):
                lines.append(f'L[{i},{j}] = {format_expression(expr)}')
    return '\n'.join(lines) + '\n'


def box_violations(sys: SystemDescription, alpha: FloatArray) -> list[str]:
    """Names of variables outside ``alpha_box`` at the point ``alpha``."""
    if sys.alpha_box is None:
        return []
    return [
        name
        for name, value, (lo, hi) in zip(sys.variable_names, alpha, sys.alpha_box)
        if not lo <= value <= hi
    ]


def eval_matrix(sys: SystemDescription, alpha: npt.ArrayLike, *, check_box: bool = True) -> FloatArray:
    """Evaluate L(alpha) entrywise; returns an ``m x n`` array.

    A point outside ``alpha_box`` is logged as a warning, not rejected, unless
    ``check_box`` is False.

    Raises:
        DimensionMismatchError: wrong length of ``alpha``
        EvaluationError: with the failing entry's row/column
    """
    point = np.asarray(alpha, dtype=np.float64)
    if point.shape != (sys.n_alpha,):
        raise DimensionMismatchError(f'alpha must have length {sys.n_alpha}, got shape {point.shape}')
    if check_box and (outside := box_violations(sys, point)):
        log.warning('alpha outside declared bounds', variables=outside, _verbose_alpha=point)
    out = np.empty((sys.m, sys.n))
    for i, row in enumerate(sys.entries):
        for j, expr in enumerate(row):
            try:
                out[i, j] = evaluate_tree(expr, point)
            except EvaluationError as exc:
                raise EvaluationError(exc.message.split(': ')[-1], row=i + 1, column=j + 1) from exc
    return out


def eval_matrices(sys: SystemDescription, samples: npt.ArrayLike) -> FloatArray:
    """Evaluate L at every row of ``samples`` (``N x n_alpha``).

    Returns:
        Array of shape ``(N, m, n)``

    Raises:
        EvaluationError: naming entry (row, column) and the sample index
    """
    points = np.asarray(samples, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != sys.n_alpha:
        raise DimensionMismatchError(f'samples must have {sys.n_alpha} columns, got shape {points.shape}')
    n_samples = points.shape[0]
    if sys.alpha_box is not None:
        lower, upper = np.array(sys.alpha_box).T
        outside = np.flatnonzero(np.any((points < lower) | (points > upper), axis=1))
        if outside.size:
            log.warning(
                'samples outside declared alpha bounds',
                count=int(outside.size),
                _verbose_first_sample=int(outside[0]),
            )
    columns = points.T
    out = np.empty((n_samples, sys.m, sys.n))
    for i, row in enumerate(sys.entries):
        for j, expr in enumerate(row):
            try:
                out[:, i, j] = evaluate_tree(expr, columns)
            except EvaluationError as exc:
                raise EvaluationError(
                    exc.message.split(': ')[-1],
                    row=i + 1,
                    column=j + 1,
                    sample=exc.sample,
                ) from exc
    return out
