"""LaTeX formula syntax checking.

Formulas are validated structurally, not semantically: balanced braces,
properly nested begin/end environments drawn from a configurable inventory,
paired \\left/\\right with legal delimiters, argument counts for a small
command table, and placement rules for alignment marks and row breaks.
Unknown backslash commands are accepted; a whitelist of all of KaTeX would
reject perfectly renderable formulas.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional

from .docmodel import (
    AnnotationDoc,
    ElementKind,
    SampleRecord,
    strip_formula_delimiters,
)
from .textfilter import FilterDecision, Reason, discard, retain


class FormulaMode(str, Enum):
    INLINE = "Inline"
    DISPLAY = "Display"


class FormulaDefectKind(str, Enum):
    UNBALANCED_BRACES = "UnbalancedBraces"
    MISMATCHED_ENVIRONMENT = "MismatchedEnvironment"
    UNKNOWN_ENVIRONMENT = "UnknownEnvironment"
    DANGLING_LEFT_RIGHT = "DanglingLeftRight"
    BAD_ARGUMENT_COUNT = "BadArgumentCount"
    STRAY_DELIMITER = "StrayDelimiter"


@dataclass(frozen=True)
class FormulaDefect:
    kind: FormulaDefectKind
    offset: int
    detail: str = ""


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    defects: tuple[FormulaDefect, ...]


@dataclass(frozen=True)
class FormulaSpanChecked:
    mode: FormulaMode
    source: str
    verdict: Optional[ValidationResult] = None


# The inventory always contains this core set; a config file can only admit
# additional environment names on top of it.
CORE_ENVIRONMENTS = frozenset(
    {
        "matrix", "pmatrix", "bmatrix", "vmatrix", "Vmatrix", "Bmatrix",
        "smallmatrix", "array", "subarray", "cases", "rcases",
        "equation", "split", "align", "gather", "alignat",
    }
)

_EXTRA_ENVIRONMENTS = frozenset(
    {
        "matrix*", "pmatrix*", "bmatrix*", "vmatrix*", "Vmatrix*", "Bmatrix*",
        "equation*", "align*", "gather*", "alignat*",
        "aligned", "alignedat", "gathered", "darray", "dcases", "drcases",
    }
)

# Environments whose rows admit '&' alignment marks.
ALIGNMENT_ENVIRONMENTS = frozenset(
    {
        "matrix", "pmatrix", "bmatrix", "vmatrix", "Vmatrix", "Bmatrix",
        "matrix*", "pmatrix*", "bmatrix*", "vmatrix*", "Vmatrix*", "Bmatrix*",
        "smallmatrix", "array", "darray", "subarray",
        "cases", "rcases", "dcases", "drcases",
        "align", "align*", "aligned", "alignat", "alignat*", "alignedat",
        "split",
    }
)


@dataclass(frozen=True)
class EnvironmentInventory:
    names: frozenset[str]

    @classmethod
    def default(cls) -> "EnvironmentInventory":
        return cls(names=CORE_ENVIRONMENTS | _EXTRA_ENVIRONMENTS)

    @classmethod
    def from_file(cls, path: Path | str) -> "EnvironmentInventory":
        """One environment name per line; '#' lines are comments.

        The core set is always included so a sparse file cannot silently
        disable checking of standard environments.
        """
        extra: set[str] = set()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                name = line.strip()
                if name and not name.startswith("#"):
                    extra.add(name)
        return cls(names=CORE_ENVIRONMENTS | frozenset(extra))

    def __contains__(self, name: str) -> bool:
        return name in self.names


# Required argument counts for commands the checker knows about. Everything
# else is accepted without arity checking.
COMMAND_ARITY = {
    "frac": 2, "dfrac": 2, "tfrac": 2, "cfrac": 2,
    "binom": 2, "dbinom": 2, "tbinom": 2,
    "overset": 2, "underset": 2, "stackrel": 2,
    "sqrt": 1, "text": 1, "textbf": 1, "textit": 1, "textrm": 1, "texttt": 1,
    "mathbf": 1, "mathit": 1, "mathrm": 1, "mathsf": 1, "mathtt": 1,
    "mathbb": 1, "mathcal": 1, "mathfrak": 1, "mathscr": 1,
    "boldsymbol": 1, "operatorname": 1, "phantom": 1,
    "hat": 1, "widehat": 1, "bar": 1, "overline": 1, "underline": 1,
    "vec": 1, "dot": 1, "ddot": 1, "tilde": 1, "widetilde": 1,
    "overbrace": 1, "underbrace": 1,
}

# Commands that may take one optional [..] group before required arguments.
_OPTIONAL_BRACKET = {"sqrt"}

_LEFT_RIGHT_DELIMS = frozenset(
    {
        "(", ")", "[", "]", "|", "/", ".", "<", ">",
        r"\{", r"\}", r"\|",
        r"\langle", r"\rangle", r"\lceil", r"\rceil", r"\lfloor", r"\rfloor",
        r"\lbrace", r"\rbrace", r"\lbrack", r"\rbrack",
        r"\lgroup", r"\rgroup", r"\lvert", r"\rvert", r"\lVert", r"\rVert",
        r"\vert", r"\Vert", r"\backslash",
        r"\uparrow", r"\downarrow", r"\updownarrow",
        r"\Uparrow", r"\Downarrow", r"\Updownarrow",
    }
)

_ENV_NAME_RE = re.compile(r"\s*\{\s*([a-zA-Z]+\*?)\s*\}")


class _TokKind(Enum):
    LBRACE = "lbrace"
    RBRACE = "rbrace"
    COMMAND = "command"     # value = name without backslash
    BEGIN = "begin"         # value = environment name
    END = "end"             # value = environment name
    LEFT = "left"           # value = delimiter or "" when illegal/missing
    RIGHT = "right"
    SUBSUP = "subsup"       # value = "_" or "^"
    ALIGN = "align"
    ROWBREAK = "rowbreak"   # \\
    DOLLAR = "dollar"
    CHAR = "char"           # any other non-space character


@dataclass(frozen=True)
class _Token:
    kind: _TokKind
    offset: int
    value: str = ""
    bad_delim: bool = False


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "{":
            tokens.append(_Token(_TokKind.LBRACE, i))
            i += 1
        elif ch == "}":
            tokens.append(_Token(_TokKind.RBRACE, i))
            i += 1
        elif ch in "_^":
            tokens.append(_Token(_TokKind.SUBSUP, i, ch))
            i += 1
        elif ch == "&":
            tokens.append(_Token(_TokKind.ALIGN, i))
            i += 1
        elif ch == "$":
            tokens.append(_Token(_TokKind.DOLLAR, i))
            i += 1
        elif ch == "\\":
            if i + 1 >= n:
                tokens.append(_Token(_TokKind.CHAR, i, "\\"))
                i += 1
                continue
            nxt = source[i + 1]
            if nxt == "\\":
                tokens.append(_Token(_TokKind.ROWBREAK, i))
                i += 2
            elif nxt.isalpha():
                j = i + 1
                while j < n and source[j].isalpha():
                    j += 1
                name = source[i + 1 : j]
                if name in ("begin", "end"):
                    m = _ENV_NAME_RE.match(source, j)
                    if m:
                        kind = _TokKind.BEGIN if name == "begin" else _TokKind.END
                        tokens.append(_Token(kind, i, m.group(1)))
                        j = m.end()
                    else:
                        tokens.append(_Token(kind=_TokKind.BEGIN if name == "begin" else _TokKind.END, offset=i, value="", bad_delim=True))
                elif name in ("left", "right"):
                    delim, j, ok = _read_delimiter(source, j)
                    kind = _TokKind.LEFT if name == "left" else _TokKind.RIGHT
                    tokens.append(_Token(kind, i, delim, bad_delim=not ok))
                else:
                    tokens.append(_Token(_TokKind.COMMAND, i, name))
                i = j
            else:
                # Escaped single character: \{ \} \$ \& \, \; etc.
                tokens.append(_Token(_TokKind.COMMAND, i, nxt))
                i += 2
        else:
            tokens.append(_Token(_TokKind.CHAR, i, ch))
            i += 1
    return tokens


def _read_delimiter(source: str, j: int) -> tuple[str, int, bool]:
    """Read the delimiter following \\left or \\right starting at ``j``."""
    n = len(source)
    while j < n and source[j].isspace():
        j += 1
    if j >= n:
        return "", j, False
    ch = source[j]
    if ch == "\\":
        k = j + 1
        if k < n and source[k].isalpha():
            while k < n and source[k].isalpha():
                k += 1
            name = source[j:k]
            return name, k, name in _LEFT_RIGHT_DELIMS
        if k < n:
            name = source[j : k + 1]
            return name, k + 1, name in _LEFT_RIGHT_DELIMS
        return "\\", n, False
    return ch, j + 1, ch in _LEFT_RIGHT_DELIMS


def formula_valid(
    source: str,
    mode: FormulaMode = FormulaMode.DISPLAY,
    inventory: Optional[EnvironmentInventory] = None,
) -> ValidationResult:
    """Single-pass structural check over the delimiter-stripped source.

    Total: every problem becomes a defect with the offset where it was
    detected (unterminated constructs are reported at end of input).
    """
    if inventory is None:
        inventory = EnvironmentInventory.default()
    tokens = _tokenize(source)
    defects: list[FormulaDefect] = []
    # Stack entries: ("{", offset) | ("env", name, offset) | ("left", offset).
    stack: list[tuple] = []
    end = len(source)

    def innermost_env() -> Optional[str]:
        for entry in reversed(stack):
            if entry[0] == "env":
                return entry[1]
        return None

    for idx, tok in enumerate(tokens):
        if tok.kind == _TokKind.LBRACE:
            stack.append(("{", tok.offset))
        elif tok.kind == _TokKind.RBRACE:
            if stack and stack[-1][0] == "{":
                stack.pop()
            else:
                defects.append(FormulaDefect(FormulaDefectKind.UNBALANCED_BRACES, tok.offset, "unmatched '}'"))
        elif tok.kind == _TokKind.BEGIN:
            if tok.bad_delim:
                defects.append(FormulaDefect(FormulaDefectKind.BAD_ARGUMENT_COUNT, tok.offset, "\\begin without {name}"))
                continue
            if tok.value not in inventory:
                defects.append(FormulaDefect(FormulaDefectKind.UNKNOWN_ENVIRONMENT, tok.offset, tok.value))
            stack.append(("env", tok.value, tok.offset))
        elif tok.kind == _TokKind.END:
            if tok.bad_delim:
                defects.append(FormulaDefect(FormulaDefectKind.BAD_ARGUMENT_COUNT, tok.offset, "\\end without {name}"))
                continue
            if stack and stack[-1][0] == "env" and stack[-1][1] == tok.value:
                stack.pop()
            else:
                defects.append(
                    FormulaDefect(FormulaDefectKind.MISMATCHED_ENVIRONMENT, tok.offset, f"\\end{{{tok.value}}} does not close the open construct")
                )
        elif tok.kind == _TokKind.LEFT:
            if tok.bad_delim:
                defects.append(FormulaDefect(FormulaDefectKind.BAD_ARGUMENT_COUNT, tok.offset, f"\\left with illegal delimiter {tok.value!r}"))
            stack.append(("left", tok.offset))
        elif tok.kind == _TokKind.RIGHT:
            if tok.bad_delim:
                defects.append(FormulaDefect(FormulaDefectKind.BAD_ARGUMENT_COUNT, tok.offset, f"\\right with illegal delimiter {tok.value!r}"))
            if stack and stack[-1][0] == "left":
                stack.pop()
            else:
                defects.append(FormulaDefect(FormulaDefectKind.DANGLING_LEFT_RIGHT, tok.offset, "\\right without \\left"))
        elif tok.kind == _TokKind.SUBSUP:
            if not _argument_follows(tokens, idx + 1):
                defects.append(
                    FormulaDefect(FormulaDefectKind.BAD_ARGUMENT_COUNT, tok.offset, f"'{tok.value}' needs a following token")
                )
        elif tok.kind == _TokKind.ALIGN:
            env = innermost_env()
            if env is None or env not in ALIGNMENT_ENVIRONMENTS:
                defects.append(FormulaDefect(FormulaDefectKind.STRAY_DELIMITER, tok.offset, "'&' outside an alignment environment"))
        elif tok.kind == _TokKind.ROWBREAK:
            if mode == FormulaMode.INLINE and innermost_env() is None:
                defects.append(FormulaDefect(FormulaDefectKind.STRAY_DELIMITER, tok.offset, "bare '\\\\' in inline formula"))
        elif tok.kind == _TokKind.DOLLAR:
            defects.append(FormulaDefect(FormulaDefectKind.STRAY_DELIMITER, tok.offset, "unescaped '$'"))
        elif tok.kind == _TokKind.COMMAND:
            arity = COMMAND_ARITY.get(tok.value)
            if arity is not None:
                ok = _check_arity(tokens, idx + 1, arity, tok.value in _OPTIONAL_BRACKET)
                if ok is False:
                    defects.append(
                        FormulaDefect(FormulaDefectKind.BAD_ARGUMENT_COUNT, tok.offset, f"\\{tok.value} expects {arity} argument(s)")
                    )

    for entry in stack:
        if entry[0] == "{":
            defects.append(FormulaDefect(FormulaDefectKind.UNBALANCED_BRACES, end, "'{' never closed"))
        elif entry[0] == "env":
            defects.append(FormulaDefect(FormulaDefectKind.MISMATCHED_ENVIRONMENT, end, f"\\begin{{{entry[1]}}} never closed"))
        else:
            defects.append(FormulaDefect(FormulaDefectKind.DANGLING_LEFT_RIGHT, end, "\\left never closed"))

    return ValidationResult(valid=not defects, defects=tuple(defects))


_ARG_STARTS = (_TokKind.LBRACE, _TokKind.COMMAND, _TokKind.CHAR, _TokKind.LEFT, _TokKind.BEGIN)


def _argument_follows(tokens: list[_Token], idx: int) -> bool:
    return idx < len(tokens) and tokens[idx].kind in _ARG_STARTS


def _skip_group(tokens: list[_Token], idx: int) -> Optional[int]:
    """Index just past the brace group opening at ``idx``; None if unclosed."""
    depth = 0
    while idx < len(tokens):
        if tokens[idx].kind == _TokKind.LBRACE:
            depth += 1
        elif tokens[idx].kind == _TokKind.RBRACE:
            depth -= 1
            if depth == 0:
                return idx + 1
            if depth < 0:
                return None
        idx += 1
    return None


def _check_arity(tokens: list[_Token], idx: int, arity: int, optional_bracket: bool) -> Optional[bool]:
    """True if ``arity`` arguments follow; None to abstain (braces unbalanced,
    which the stack pass reports on its own)."""
    if optional_bracket and idx < len(tokens) and tokens[idx].kind == _TokKind.CHAR and tokens[idx].value == "[":
        while idx < len(tokens):
            if tokens[idx].kind == _TokKind.CHAR and tokens[idx].value == "]":
                idx += 1
                break
            idx += 1
        else:
            return False
    for _ in range(arity):
        if idx >= len(tokens):
            return False
        tok = tokens[idx]
        if tok.kind == _TokKind.LBRACE:
            nxt = _skip_group(tokens, idx)
            if nxt is None:
                return None
            idx = nxt
        elif tok.kind in (_TokKind.COMMAND, _TokKind.CHAR):
            idx += 1
        else:
            return False
    return True


# --- extraction and filtering ------------------------------------------------


def extract_formulas(doc: AnnotationDoc) -> list[FormulaSpanChecked]:
    """Inline and display formulas in document order, delimiters stripped."""
    out: list[FormulaSpanChecked] = []
    for span in doc.elements:
        if span.kind == ElementKind.INLINE_FORMULA:
            out.append(FormulaSpanChecked(FormulaMode.INLINE, strip_formula_delimiters(span)))
        elif span.kind == ElementKind.DISPLAY_FORMULA:
            out.append(FormulaSpanChecked(FormulaMode.DISPLAY, strip_formula_delimiters(span)))
    return out


def validate_formulas(
    doc: AnnotationDoc, inventory: Optional[EnvironmentInventory] = None
) -> list[FormulaSpanChecked]:
    return [
        replace(span, verdict=formula_valid(span.source, span.mode, inventory))
        for span in extract_formulas(doc)
    ]


def formula_filter(
    sample: SampleRecord, inventory: Optional[EnvironmentInventory] = None
) -> FilterDecision:
    """Retain iff every formula in the sample is syntactically valid."""
    for index, span in enumerate(extract_formulas(sample.annotation)):
        if not formula_valid(span.source, span.mode, inventory).valid:
            return discard(sample.sample_id, Reason.INVALID_FORMULA, element_index=index)
    return retain(sample.sample_id)
