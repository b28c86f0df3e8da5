"""Token counting, equal-budget chunk splitting, and prompt assembly."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

# A token is a maximal run of word characters or a single other
# non-whitespace character (so punctuation counts separately).
_DEFAULT_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

SpanFn = Callable[[str], list[tuple[int, int]]]

_EXTERNAL_TOKENIZERS: dict[str, SpanFn] = {}


def register_tokenizer(name: str, span_fn: SpanFn) -> None:
    """Register an external tokenizer returning (start, end) spans for a text."""
    _EXTERNAL_TOKENIZERS[name] = span_fn


@dataclass(frozen=True)
class TokenizerSpec:
    """Selects how text is tokenized; counting must be deterministic per spec."""

    kind: str = "whitespace-regex"
    parameters: dict[str, str] = field(default_factory=dict)

    def spans(self, text: str) -> list[tuple[int, int]]:
        if self.kind == "whitespace-regex":
            return [m.span() for m in _DEFAULT_TOKEN_RE.finditer(text)]
        if self.kind == "pluggable-external":
            name = self.parameters.get("name", "")
            if name not in _EXTERNAL_TOKENIZERS:
                raise ValueError(f"unknown external tokenizer: {name!r}")
            return _EXTERNAL_TOKENIZERS[name](text)
        raise ValueError(f"unknown tokenizer kind: {self.kind!r}")


DEFAULT_TOKENIZER = TokenizerSpec()


@dataclass(frozen=True)
class Chunk:
    """One contiguous slice of the concatenated context; ``index`` is the arm id."""

    index: int
    text: str
    token_count: int


def count_tokens(text: str, spec: TokenizerSpec = DEFAULT_TOKENIZER) -> int:
    return len(spec.spans(text))


def split_chunks(
    context: str, budget: int, spec: TokenizerSpec = DEFAULT_TOKENIZER
) -> list[Chunk]:
    """Split ``context`` into chunks of exactly ``budget`` tokens (last may be short).

    Chunks are cut at token boundaries, so concatenating the chunk texts in
    index order reproduces ``context`` exactly and per-chunk token counts sum
    to the total.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    spans = spec.spans(context)
    if not spans:
        raise ValueError("empty context")
    chunks = []
    for i in range(0, len(spans), budget):
        group = spans[i : i + budget]
        start = 0 if i == 0 else group[0][0]
        end = len(context) if i + budget >= len(spans) else spans[i + budget][0]
        chunks.append(Chunk(index=len(chunks), text=context[start:end], token_count=len(group)))
    return chunks


@dataclass(frozen=True)
class PromptTemplate:
    """Plain text with ``{slot}`` placeholders, filled by literal replacement."""

    text: str

    def render(self, **slots: str) -> str:
        for name in slots:
            if "{" + name + "}" not in self.text:
                raise ValueError(f"template missing required slot {{{name}}}")
        # Single pass over the template so substituted values are never rescanned.
        pattern = re.compile("|".join(re.escape("{" + n + "}") for n in slots))
        return pattern.sub(lambda m: slots[m.group(0)[1:-1]], self.text)


def load_template(path: str) -> PromptTemplate:
    with open(path, encoding="utf-8") as f:
        return PromptTemplate(f.read())


def _builtin_template(filename: str) -> PromptTemplate:
    text = resources.files("longmab").joinpath("templates", filename).read_text("utf-8")
    return PromptTemplate(text)


def default_qa_template() -> PromptTemplate:
    return _builtin_template("qa.txt")


def default_probe_template() -> PromptTemplate:
    return _builtin_template("probe.txt")


def assemble_prompt(
    selected: list[Chunk], question: str, template: PromptTemplate
) -> str:
    """Fill the template with the selected chunks (in document order) and question."""
    if not selected:
        raise ValueError("selected chunks must be non-empty")
    ordered = sorted(selected, key=lambda c: c.index)
    context = "\n\n".join(c.text for c in ordered)
    return template.render(context=context, question=question)
