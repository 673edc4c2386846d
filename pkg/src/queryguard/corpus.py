"""Seeded synthetic corpora: an initial labeled set plus per-batch unknown sets.

Malicious payloads are instantiated from per-class template grammars and
pre-normalized so the learner, not the character filter, has to catch them.
Benign and malicious template pools live in data files and keep disjoint
text namespaces, so no text can ever appear with two labels.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .ingest import (
    BENIGN,
    MALICIOUS,
    NormalizedQuery,
    RawQuery,
    contains_unsafe,
    normalize,
)
from .util import derive_seed


def _load_data(name: str) -> dict:
    with resources.files("queryguard.data").joinpath(name).open("r") as fh:
        return json.load(fh)


_BENIGN_TEMPLATES: Optional[dict] = None
_ATTACK_TEMPLATES: Optional[dict] = None


def benign_templates() -> dict:
    global _BENIGN_TEMPLATES
    if _BENIGN_TEMPLATES is None:
        _BENIGN_TEMPLATES = _load_data("benign_templates.json")
    return _BENIGN_TEMPLATES


def attack_templates() -> dict:
    global _ATTACK_TEMPLATES
    if _ATTACK_TEMPLATES is None:
        _ATTACK_TEMPLATES = _load_data("attack_templates.json")
    return _ATTACK_TEMPLATES


DEFAULT_CLASS_MIX = {"xss": 0.4909, "sqli": 0.2832, "dt": 0.0982, "rfi": 0.0892}


@dataclass
class CorpusConfig:
    batches: int = 10
    batch_size: int = 10000
    malicious_per_batch: int = 92
    initial_benign: int = 80
    initial_malicious: int = 20
    class_mix: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_MIX))
    seed: int = 0
    shuffle_benign: bool = True

    def __post_init__(self):
        if self.malicious_per_batch > self.batch_size:
            raise ValueError("malicious_per_batch exceeds batch_size")
        if not self.class_mix or any(v < 0 for v in self.class_mix.values()):
            raise ValueError("class_mix must be non-negative and non-empty")

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusConfig":
        return cls(**d)


def _canonical(text: str, day: int) -> str:
    """Run generated text through the real normalize path; must survive."""
    nq = normalize(RawQuery(text=text, source_line=0, day=day))
    assert nq is not None, f"generated text too short: {text!r}"
    assert not contains_unsafe(nq.text), f"generated text tripped the filter: {text!r}"
    return nq.text


def _value(kind: str, spec: dict, rng: np.random.Generator, words: list[str]) -> str:
    if kind == "int":
        return str(rng.integers(1, 10 ** int(rng.integers(1, 6))))
    if kind == "smallint":
        return str(rng.integers(1, 51))
    if kind == "slug":
        w = words[rng.integers(len(words))]
        if rng.random() < 0.3:
            w = w + "-" + words[rng.integers(len(words))]
        return w
    if kind == "search":
        n = int(rng.integers(1, 4))
        return "+".join(words[rng.integers(len(words))] for _ in range(n))
    if kind == "choice":
        return spec["choices"][rng.integers(len(spec["choices"]))]
    if kind == "date":
        y = 2014 + int(rng.integers(0, 4))
        return f"{y}-{int(rng.integers(1, 13)):02d}-{int(rng.integers(1, 29)):02d}"
    if kind == "hex":
        size = [8, 12, 16][rng.integers(3)]
        return "".join("0123456789abcdef"[i] for i in rng.integers(0, 16, size))
    if kind == "version":
        return f"{rng.integers(1, 6)}.{rng.integers(0, 10)}"
    raise ValueError(f"unknown value kind: {kind!r}")


def _benign_pair(rng: np.random.Generator, templates: dict) -> str:
    params = templates["params"]
    weights = np.array([p.get("weight", 1) for p in params], dtype=float)
    spec = params[rng.choice(len(params), p=weights / weights.sum())]
    return f"{spec['name']}={_value(spec['kind'], spec, rng, templates['words'])}"


def _plain_query(rng: np.random.Generator, templates: dict) -> str:
    pairs = [_benign_pair(rng, templates) for _ in range(int(rng.integers(1, 5)))]
    return "&".join(pairs)


def _hub_slots(rng: np.random.Generator, templates: dict) -> dict:
    # Twin fillers must draw from the same vocabularies as the attack
    # templates, otherwise the filler words themselves become the class signal.
    # Numerics are three-digit here and two-digit in attack payloads: the twin
    # families stay textually disjoint (no string can carry both labels) while
    # the learnable difference stays down at the bigram-frequency level.
    atk = attack_templates()
    words = templates["words"]
    return {
        "num": lambda r: str(r.integers(100, 1000)),
        "small": lambda r: str(r.integers(1, 10)),
        "w": lambda r: words[r.integers(len(words))],
        "cols": lambda r: atk["sqli"]["cols"][r.integers(len(atk["sqli"]["cols"]))],
        "table": lambda r: atk["sqli"]["tables"][r.integers(len(atk["sqli"]["tables"]))],
        "dir": lambda r: atk["dt"]["dirs"][r.integers(len(atk["dt"]["dirs"]))],
        "file": lambda r: atk["dt"]["files"][r.integers(len(atk["dt"]["files"]))],
        "ext": lambda r: atk["dt"]["exts"][r.integers(len(atk["dt"]["exts"]))],
        "mirror": lambda r: atk["rfi"]["mirrors"][r.integers(len(atk["rfi"]["mirrors"]))],
        "doc": lambda r: atk["rfi"]["docs"][r.integers(len(atk["rfi"]["docs"]))],
        "host": lambda r: atk["rfi"]["hosts"][r.integers(len(atk["rfi"]["hosts"]))],
        "shell": lambda r: atk["rfi"]["files"][r.integers(len(atk["rfi"]["files"]))],
    }


def _hub_query(rng: np.random.Generator, templates: dict) -> str:
    # Searches that reuse attack phrasing in harmless context. The carpet
    # subfamily mirrors the word-only payload shapes and blankets the area
    # near the decision boundary; the rare echo subfamily trails the
    # high-confidence payload cores and keeps misclassified benign points
    # inside the margin. Both use the same request shape as attacks (the
    # search pair rides among ordinary pairs) so only content separates them.
    hub = templates["hub"]
    role = "echo" if rng.random() < hub["echo_p"] else "carpet"
    specs = hub[role]
    weights = np.array([s.get("weight", 1) for s in specs], dtype=float)
    spec = specs[rng.choice(len(specs), p=weights / weights.sum())]
    core = _fill(spec["pattern"], rng, _hub_slots(rng, templates))
    name = hub["names"][rng.integers(len(hub["names"]))]
    pairs = [_benign_pair(rng, templates) for _ in range(int(rng.integers(1, 3)))]
    pairs.insert(int(rng.integers(len(pairs) + 1)), f"{name}={core}")
    return "&".join(pairs)


def _tail_query(rng: np.random.Generator, templates: dict) -> str:
    # High-entropy one-offs: rare tokens and letter salads with no cluster
    # structure, scattered around the feature space.
    tail = templates["tail"]
    letters = tail["letters"]
    name = tail["names"][rng.integers(len(tail["names"]))]
    kind = rng.integers(3)
    if kind == 0:
        value = "".join("0123456789abcdef"[i] for i in rng.integers(0, 16, int(rng.integers(10, 25))))
    elif kind == 1:
        value = "".join(letters[i] for i in rng.integers(0, 26, int(rng.integers(6, 14))))
    else:
        value = "+".join(
            "".join(letters[i] for i in rng.integers(0, 26, int(rng.integers(3, 7))))
            for _ in range(int(rng.integers(2, 4)))
        )
    text = f"{name}={value}"
    if rng.random() < 0.4:
        text += "&" + _benign_pair(rng, templates)
    return text


def gen_benign(n: int, seed: int, day: int = 0) -> list[str]:
    """n benign query strings drawn from the weighted family mix."""
    templates = benign_templates()
    families = templates["families"]
    names = sorted(families)
    probs = np.array([families[f] for f in names], dtype=float)
    probs = probs / probs.sum()
    makers = {"plain": _plain_query, "hub": _hub_query, "tail": _tail_query}
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        family = names[rng.choice(len(names), p=probs)]
        text = makers[family](rng, templates)
        if len(text) < 4:
            continue
        out.append(_canonical(text, day))
    return out


def _mutate_case(text: str, rng: np.random.Generator) -> str:
    # Pre-normalization case variation; normalize folds it back down.
    if rng.random() < 0.3:
        chars = [c.upper() if rng.random() < 0.5 else c for c in text]
        return "".join(chars)
    return text


def _fill(template: str, rng: np.random.Generator, slots: dict) -> str:
    out = template
    while "{" in out:
        start = out.index("{")
        end = out.index("}", start)
        key = out[start + 1 : end]
        out = out[:start] + slots[key](rng) + out[end + 1 :]
    return out


def _pick_template(rng: np.random.Generator, t: dict, stealth: bool) -> str:
    if stealth:
        pool = t["stealth"]
        return pool[rng.integers(len(pool))]
    pool = t["payloads"]
    weights = t.get("weights")
    if weights:
        w = np.array(weights, dtype=float)
        return pool[rng.choice(len(pool), p=w / w.sum())]
    return pool[rng.integers(len(pool))]


def _common_slots(words: list[str]) -> dict:
    # two-digit numerics; see _hub_slots for the benign counterpart
    return {
        "num": lambda r: str(r.integers(10, 100)),
        "small": lambda r: str(r.integers(1, 10)),
        "w": lambda r: words[r.integers(len(words))],
    }


def _sqli_payload(rng: np.random.Generator, t: dict, stealth: bool, words: list[str]) -> str:
    slots = _common_slots(words) | {
        "cols": lambda r: t["cols"][r.integers(len(t["cols"]))],
        "table": lambda r: t["tables"][r.integers(len(t["tables"]))],
        "col": lambda r: t["col"][r.integers(len(t["col"]))],
    }
    out = _fill(_pick_template(rng, t, stealth), rng, slots)
    if not stealth and rng.random() < 0.2:
        # classic comment-padding obfuscation between SQL keywords
        for gap in ("union+select", "union+all+select", "+from+", "drop+table"):
            out = out.replace(gap, gap.replace("+", "/**/"))
    return out


def _xss_payload(rng: np.random.Generator, t: dict, stealth: bool, words: list[str]) -> str:
    slots = _common_slots(words) | {
        "host": lambda r: t["hosts"][r.integers(len(t["hosts"]))],
        "word": lambda r: t["words"][r.integers(len(t["words"]))],
        "hex": lambda r: "".join("0123456789abcdef"[i] for i in r.integers(0, 16, 12)),
    }
    return _fill(_pick_template(rng, t, stealth), rng, slots)


def _dt_payload(rng: np.random.Generator, t: dict, stealth: bool, words: list[str]) -> str:
    slots = _common_slots(words) | {
        "updirs": lambda r: "../" * int(r.integers(1, 9)),
        "dir": lambda r: t["dirs"][r.integers(len(t["dirs"]))],
        "file": lambda r: t["files"][r.integers(len(t["files"]))],
        "ext": lambda r: t["exts"][r.integers(len(t["exts"]))],
    }
    return _fill(_pick_template(rng, t, stealth), rng, slots)


def _rfi_payload(rng: np.random.Generator, t: dict, stealth: bool, words: list[str]) -> str:
    slots = _common_slots(words) | {
        "host": lambda r: t["hosts"][r.integers(len(t["hosts"]))],
        "mirror": lambda r: t["mirrors"][r.integers(len(t["mirrors"]))],
        "dir": lambda r: t["dirs"][r.integers(len(t["dirs"]))],
        "file": lambda r: t["files"][r.integers(len(t["files"]))],
        "doc": lambda r: t["docs"][r.integers(len(t["docs"]))],
        "ext": lambda r: t["exts"][r.integers(len(t["exts"]))],
        "cmd": lambda r: t["cmds"][r.integers(len(t["cmds"]))],
        "ip": lambda r: f"203.0.113.{r.integers(1, 255)}",
    }
    return _fill(_pick_template(rng, t, stealth), rng, slots)


_PAYLOAD_FNS = {"sqli": _sqli_payload, "xss": _xss_payload, "dt": _dt_payload, "rfi": _rfi_payload}


def gen_malicious(
    n: int, class_mix: dict, seed: int, day: int = 0
) -> list[tuple[str, str]]:
    """n (text, attack_class) pairs drawn from the class mix."""
    templates = attack_templates()
    benign = benign_templates()
    rng = np.random.default_rng(seed)
    classes = sorted(class_mix)
    probs = np.array([class_mix[c] for c in classes], dtype=float)
    probs = probs / probs.sum()
    stealth_p = float(templates.get("stealth_p", 0.0))
    hub_names = benign["hub"]["names"]
    out = []
    for _ in range(n):
        cls = classes[rng.choice(len(classes), p=probs)]
        t = templates[cls]
        stealth = bool(t.get("stealth")) and rng.random() < stealth_p
        payload = _PAYLOAD_FNS[cls](rng, t, stealth, benign["words"])
        payload = _mutate_case(payload, rng)
        # stealth payloads hide in ordinary search parameters, overt ones
        # ride the parameter their exploit actually targets
        names = hub_names if stealth else templates["param_names"][cls]
        attack_pair = f"{names[rng.integers(len(names))]}={payload}"
        # payloads travel light: at most one benign rider pair, so the core
        # dominates each text's bigram mass
        n_pairs = int(rng.integers(0, 2))
        pairs = [_benign_pair(rng, benign) for _ in range(n_pairs)]
        pairs.insert(int(rng.integers(len(pairs) + 1)), attack_pair)
        out.append((_canonical("&".join(pairs), day), cls))
    return out


@dataclass
class Corpus:
    initial: list[NormalizedQuery]
    batches: dict[int, list[NormalizedQuery]]
    digest: str = ""

    @property
    def days(self) -> list[int]:
        return sorted(self.batches)

    def truth(self) -> dict[str, tuple[Optional[str], Optional[str]]]:
        """text -> (label, attack_class) over every labeled record."""
        out: dict[str, tuple[Optional[str], Optional[str]]] = {}
        for q in self.initial:
            if q.label is not None:
                out[q.text] = (q.label, q.attack_class)
        for day in self.days:
            for q in self.batches[day]:
                if q.label is not None:
                    prev = out.get(q.text)
                    assert prev is None or prev[0] == q.label, f"conflicting labels for {q.text!r}"
                    out[q.text] = (q.label, q.attack_class)
        return out


def _unique_stream(make_batch, needed: int) -> list:
    """Draw from a deterministic generator until `needed` unique texts exist."""
    seen = set()
    out = []
    attempts = 0
    while len(out) < needed:
        attempts += 1
        assert attempts <= 100, "template pool too small for requested unique texts"
        for item in make_batch(needed):
            key = item[0] if isinstance(item, tuple) else item
            if key in seen:
                continue
            seen.add(key)
            out.append(item)
            if len(out) == needed:
                break
    return out


def gen_corpus(config: CorpusConfig) -> Corpus:
    seed = config.seed

    chunk = [0]

    def benign_chunk(n):
        chunk[0] += 1
        return gen_benign(n, derive_seed(seed, "initial-benign", chunk[0]), day=0)

    def malicious_chunk(n):
        chunk[0] += 1
        return gen_malicious(n, config.class_mix, derive_seed(seed, "initial-mal", chunk[0]), day=0)

    initial = [
        NormalizedQuery(text=t, label=BENIGN, day=0)
        for t in _unique_stream(benign_chunk, config.initial_benign)
    ]
    initial_mal = _unique_stream(malicious_chunk, config.initial_malicious)
    initial += [
        NormalizedQuery(text=t, label=MALICIOUS, attack_class=c, day=0) for t, c in initial_mal
    ]

    benign_per_batch = config.batch_size - config.malicious_per_batch
    stream = gen_benign(benign_per_batch * config.batches, derive_seed(seed, "benign"), day=0)
    if config.shuffle_benign:
        order = np.random.default_rng(derive_seed(seed, "shuffle")).permutation(len(stream))
        stream = [stream[i] for i in order]

    batches: dict[int, list[NormalizedQuery]] = {}
    for b in range(config.batches):
        day = b + 1
        benign = stream[b * benign_per_batch : (b + 1) * benign_per_batch]
        malicious = gen_malicious(
            config.malicious_per_batch, config.class_mix, derive_seed(seed, "mal", day), day=day
        )
        records = [NormalizedQuery(text=t, label=BENIGN, day=day) for t in benign]
        records += [
            NormalizedQuery(text=t, label=MALICIOUS, attack_class=c, day=day) for t, c in malicious
        ]
        order = np.random.default_rng(derive_seed(seed, "order", day)).permutation(len(records))
        batches[day] = [records[i] for i in order]

    return Corpus(initial=initial, batches=batches)


def _record(q: NormalizedQuery) -> dict:
    rec: dict = {"text": q.text, "day": q.day}
    if q.label is not None:
        rec["label"] = q.label
    if q.attack_class is not None:
        rec["attack_class"] = q.attack_class
    return rec


def save_corpus(path: str | Path, corpus: Corpus) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for q in corpus.initial:
            fh.write(json.dumps(_record(q), sort_keys=True) + "\n")
        for day in corpus.days:
            for q in corpus.batches[day]:
                fh.write(json.dumps(_record(q), sort_keys=True) + "\n")


def save_records(path: str | Path, records: Sequence[NormalizedQuery]) -> None:
    with Path(path).open("w") as fh:
        for q in records:
            fh.write(json.dumps(_record(q), sort_keys=True) + "\n")


def load_corpus(path: str | Path) -> Corpus:
    path = Path(path)
    raw = path.read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    initial: list[NormalizedQuery] = []
    batches: dict[int, list[NormalizedQuery]] = {}
    for line in raw.decode("utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        q = NormalizedQuery(
            text=rec["text"],
            label=rec.get("label"),
            attack_class=rec.get("attack_class"),
            day=int(rec.get("day", 0)),
        )
        if q.day == 0:
            initial.append(q)
        else:
            batches.setdefault(q.day, []).append(q)
    return Corpus(initial=initial, batches=batches, digest=digest)
