import os
import re

from mplab.constants import BOS, EOS
from mplab.ctc.vocab import Vocabulary
from mplab.errors import FormatError, MissingInputError
from mplab.lm.ngram import NgramModel

# log10 placeholder for the begin marker, which has a backoff but is never predicted
_NEVER = -99.0

_HEADER = re.compile(r"^# mplab n-gram order=(\d+) smoothing=(\S+)$")
_SECTION = re.compile(r"^\\(\d+)-grams:$")


def _fmt(value):
    return repr(float(value))


def dumps_arpa(model):
    """
    ARPA text for ``model``. Sections list n-grams in symbol-id order (tokens, then
    ``</s>``, then ``<s>``); floats use ``repr`` so reading the text back is bit-exact.
    """
    names = list(model.vocab.tokens) + [EOS, BOS]
    by_order = {n: [] for n in range(1, model.order + 1)}
    for gram in model.probs:
        by_order[len(gram)].append(gram)
    if model.order > 1:
        by_order[1].append((model.bos_id,))
    lines = [f"# mplab n-gram order={model.order} smoothing={model.smoothing}", "", "\\data\\"]
    lines += [f"ngram {n}={len(grams)}" for n, grams in by_order.items()]
    for n, grams in by_order.items():
        lines += ["", f"\\{n}-grams:"]
        for gram in sorted(grams):
            logp = model.probs.get(gram, _NEVER)
            fields = [_fmt(logp), " ".join(names[s] for s in gram)]
            if gram in model.backoffs:
                fields.append(_fmt(model.backoffs[gram]))
            lines.append("\t".join(fields))
    lines += ["", "\\end\\", ""]
    return "\n".join(lines)


def _parse_float(text, path):
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"{path}: bad number {text!r}") from None


def loads_arpa(text, path="<string>"):
    lines = text.splitlines()
    header = _HEADER.match(lines[0]) if lines else None
    if header is None:
        raise FormatError(f"{path}: missing '# mplab n-gram' header line")
    order, smoothing = int(header.group(1)), header.group(2)

    sections = {}
    current = None
    for line in lines[1:]:
        if not line.strip() or line.startswith("ngram ") or line == "\\data\\":
            continue
        if line == "\\end\\":
            break
        match = _SECTION.match(line)
        if match:
            current = sections.setdefault(int(match.group(1)), [])
            continue
        if current is None:
            raise FormatError(f"{path}: n-gram line outside a section: {line!r}")
        current.append(line.split("\t"))

    unigrams = [fields[1] for fields in sections.get(1, [])]
    tokens = [w for w in unigrams if w not in (BOS, EOS)]
    if EOS not in unigrams or not tokens:
        raise FormatError(f"{path}: unigram section must list every token and {EOS}")
    vocab = Vocabulary.of(tokens)
    ids = {w: i for i, w in enumerate(tokens)} | {EOS: vocab.size, BOS: vocab.size + 1}

    probs, backoffs = {}, {}
    for n in range(1, order + 1):
        for fields in sections.get(n, []):
            if len(fields) not in (2, 3):
                raise FormatError(f"{path}: malformed {n}-gram line {fields!r}")
            words = fields[1].split(" ")
            if len(words) != n or any(w not in ids for w in words):
                raise FormatError(f"{path}: bad {n}-gram {fields[1]!r}")
            gram = tuple(ids[w] for w in words)
            if gram[-1] != vocab.size + 1:
                probs[gram] = _parse_float(fields[0], path)
            if len(fields) == 3:
                backoffs[gram] = _parse_float(fields[2], path)
    missing = [w for w in range(vocab.size + 1) if (w,) not in probs]
    if missing:
        raise FormatError(f"{path}: unigram section lacks events {missing}")
    return NgramModel(vocab, order, smoothing, probs, backoffs)


def save_arpa(path, model):
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_arpa(model))


def load_arpa(path):
    if not os.path.isfile(path):
        raise MissingInputError(path, "language model")
    with open(path, encoding="utf-8") as f:
        return loads_arpa(f.read(), path)
