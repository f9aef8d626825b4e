"""Dialogue data model, synthetic corpus generation, corpus IO, and vocabulary.

A corpus is a list of multi-domain dialogues. Each turn carries a system
utterance, a user utterance, and the cumulative gold dialogue state: one value
(possibly a sentinel) for every (domain, slot) pair declared by the schema.
Generation is a pure function of (schema, counts, seed).
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field

PAD = "[PAD]"
CLS = "[CLS]"
SEP = "[SEP]"
SLOT = "[SLOT]"
EOS = "[EOS]"
UNK = "[UNK]"
NULL_VALUE = "[NULL]"
DONTCARE_VALUE = "[DONTCARE]"
DASH = "-"

# Fixed order; these occupy the lowest vocabulary ids.
SPECIAL_TOKENS = [PAD, CLS, SEP, SLOT, EOS, UNK, NULL_VALUE, DONTCARE_VALUE, DASH]

SENTINELS = (NULL_VALUE, DONTCARE_VALUE)

MAX_VALUE_TOKENS = 3


class SchemaError(ValueError):
    """Raised when a schema is structurally invalid; message names the field."""


class CorpusError(ValueError):
    """Raised on malformed corpus files; message carries the line number."""


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokenization. Keeps copy alignment exact."""
    return text.lower().split()


@dataclass
class Schema:
    """Domains, their ordered slots, value pools, and domain-transition weights.

    ``copy_slots`` optionally marks pairs whose update value is always taken
    from another pair already stored in the state (e.g. a taxi departure that
    is the previously booked hotel's name); the generator uses it to produce
    dialogues whose update values appear only in the previous state, not in
    the current turn's text.
    """

    domains: list[str]
    slots_of: dict[str, list[str]]
    value_pool: dict[tuple[str, str], list[str]]
    transition_weights: dict[tuple[str, str], float] = field(default_factory=dict)
    copy_slots: dict[tuple[str, str], tuple[str, str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not self.domains:
            raise SchemaError("domains: must be nonempty")
        if len(set(self.domains)) != len(self.domains):
            raise SchemaError("domains: duplicate domain name")
        for d in self.domains:
            if len(tokenize(d)) != 1 or d != d.lower():
                raise SchemaError(f"domains: {d!r} is not a single lowercase token")
            slots = self.slots_of.get(d)
            if not slots:
                raise SchemaError(f"slots_of[{d}]: must list at least one slot")
            if len(set(slots)) != len(slots):
                raise SchemaError(f"slots_of[{d}]: duplicate slot name")
            for s in slots:
                if len(tokenize(s)) != 1 or s != s.lower():
                    raise SchemaError(f"slots_of[{d}]: {s!r} is not a single lowercase token")
                pool = self.value_pool.get((d, s))
                if not pool:
                    raise SchemaError(f"value_pool[{d}.{s}]: must be nonempty")
                for v in pool:
                    toks = tokenize(v)
                    if not 1 <= len(toks) <= MAX_VALUE_TOKENS:
                        raise SchemaError(
                            f"value_pool[{d}.{s}]: {v!r} must be 1..{MAX_VALUE_TOKENS} tokens")
                    if v in SENTINELS or any(t in SPECIAL_TOKENS for t in toks):
                        raise SchemaError(f"value_pool[{d}.{s}]: {v!r} collides with a special token")
        for extra in set(self.slots_of) - set(self.domains):
            raise SchemaError(f"slots_of[{extra}]: unknown domain")
        for (a, b), w in self.transition_weights.items():
            if a not in self.domains or b not in self.domains:
                raise SchemaError(f"transition_weights[{a}->{b}]: unknown domain")
            if w < 0:
                raise SchemaError(f"transition_weights[{a}->{b}]: negative weight")
        pair_set = set(self.pairs())
        for tgt, src in self.copy_slots.items():
            if tgt not in pair_set:
                raise SchemaError(f"copy_slots[{tgt}]: unknown target pair")
            if src not in pair_set:
                raise SchemaError(f"copy_slots[{tgt}]: unknown source pair {src}")
            if tgt == src:
                raise SchemaError(f"copy_slots[{tgt}]: pair references itself")
            if src in self.copy_slots:
                raise SchemaError(f"copy_slots[{tgt}]: source {src} is itself "
                                  "a copy target; chains are not supported")

    def pairs(self) -> list[tuple[str, str]]:
        """All (domain, slot) pairs in fixed schema order."""
        return [(d, s) for d in self.domains for s in self.slots_of[d]]

    @property
    def n_pairs(self) -> int:
        return len(self.pairs())

    def slot_names(self) -> list[str]:
        """Distinct slot names in order of first appearance."""
        seen: list[str] = []
        for d in self.domains:
            for s in self.slots_of[d]:
                if s not in seen:
                    seen.append(s)
        return seen

    def to_json_dict(self) -> dict:
        return {
            "domains": list(self.domains),
            "slots": {d: list(self.slots_of[d]) for d in self.domains},
            "values": {d: {s: list(self.value_pool[(d, s)]) for s in self.slots_of[d]}
                       for d in self.domains},
            "transition_weights": _nest_weights(self.transition_weights),
            "copy_slots": {f"{td} {ts}": [sd, ss]
                           for (td, ts), (sd, ss) in self.copy_slots.items()},
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Schema":
        try:
            domains = list(obj["domains"])
            slots_of = {d: list(v) for d, v in obj["slots"].items()}
            value_pool = {(d, s): list(vals)
                          for d, by_slot in obj["values"].items()
                          for s, vals in by_slot.items()}
        except (KeyError, TypeError, AttributeError) as exc:
            raise SchemaError(f"schema file missing or malformed field: {exc}") from exc
        weights = {(a, b): float(w)
                   for a, by_b in obj.get("transition_weights", {}).items()
                   for b, w in by_b.items()}
        copy_slots = {}
        for key, src in obj.get("copy_slots", {}).items():
            td, ts = key.split()
            copy_slots[(td, ts)] = (src[0], src[1])
        return cls(domains, slots_of, value_pool, weights, copy_slots)

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "Schema":
        with open(path) as f:
            try:
                obj = json.load(f)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"schema file is not valid JSON: {exc}") from exc
        return cls.from_json_dict(obj)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _nest_weights(flat: dict[tuple[str, str], float]) -> dict:
    nested: dict[str, dict[str, float]] = {}
    for (a, b), w in flat.items():
        nested.setdefault(a, {})[b] = w
    return nested


class DialogueState:
    """One value per schema (domain, slot) pair; NULL/DONTCARE are sentinels.

    Treated as immutable: updates go through :meth:`replace`.
    """

    __slots__ = ("values",)

    def __init__(self, values: dict[tuple[str, str], str]):
        for pair, v in values.items():
            if not v:
                raise ValueError(f"empty value for {pair}")
        self.values = dict(values)

    @classmethod
    def empty(cls, pairs) -> "DialogueState":
        return cls({p: NULL_VALUE for p in pairs})

    @property
    def pairs(self) -> tuple[tuple[str, str], ...]:
        return tuple(self.values)

    def get(self, pair: tuple[str, str]) -> str:
        return self.values[pair]

    def replace(self, pair: tuple[str, str], value: str) -> "DialogueState":
        if pair not in self.values:
            raise KeyError(pair)
        new = dict(self.values)
        new[pair] = value
        return DialogueState(new)

    def filled_pairs(self) -> list[tuple[str, str]]:
        """Pairs whose value is a real string, not NULL/DONTCARE."""
        return [p for p, v in self.values.items() if v not in SENTINELS]

    def __eq__(self, other) -> bool:
        return isinstance(other, DialogueState) and self.values == other.values

    def __repr__(self) -> str:
        filled = {f"{d}.{s}": v for (d, s), v in self.values.items() if v != NULL_VALUE}
        return f"DialogueState({filled})"


@dataclass
class DialogueTurn:
    system_utterance: list[str]
    user_utterance: list[str]
    gold_state: DialogueState


@dataclass
class Dialogue:
    dialogue_id: str
    turns: list[DialogueTurn]


# ---------------------------------------------------------------------------
# Built-in schemas
# ---------------------------------------------------------------------------

def default_schema() -> Schema:
    """Desk-scale default: 4 domains, 12 pairs, slot names unique across domains."""
    domains = ["hotel", "train", "restaurant", "taxi"]
    slots_of = {
        "hotel": ["name", "area", "parking", "stars"],
        "train": ["day", "leave", "arrive"],
        "restaurant": ["food", "time", "venue"],
        "taxi": ["pickup", "dropoff"],
    }
    # Pools are small (every value recurs many times in a small corpus),
    # mutually disjoint (a value pins down its pair), and no value token
    # collides with a domain, slot, or template token.
    value_pool = {
        ("hotel", "name"): ["acorn house", "lensfield", "avalon"],
        ("hotel", "area"): ["north", "south", "centre"],
        ("hotel", "parking"): ["yes", "no", "free"],
        ("hotel", "stars"): ["two", "four", "five"],
        ("train", "day"): ["monday", "friday", "sunday"],
        ("train", "leave"): ["eight", "noon", "ten"],
        ("train", "arrive"): ["eleven", "six", "nine"],
        ("restaurant", "food"): ["italian", "chinese", "seafood"],
        ("restaurant", "time"): ["seven", "three", "one"],
        ("restaurant", "venue"): ["golden wok", "panahar", "cotto"],
        ("taxi", "pickup"): ["station", "airport", "museum"],
        ("taxi", "dropoff"): ["plaza", "campus", "harbour"],
    }
    # Chains biased toward train<->hotel and restaurant->taxi style transitions.
    weights = {
        ("hotel", "hotel"): 2.0, ("hotel", "train"): 3.0, ("hotel", "taxi"): 1.5,
        ("hotel", "restaurant"): 1.0,
        ("train", "train"): 1.5, ("train", "hotel"): 3.0, ("train", "restaurant"): 1.5,
        ("train", "taxi"): 0.5,
        ("restaurant", "restaurant"): 2.0, ("restaurant", "taxi"): 3.0,
        ("restaurant", "train"): 2.0, ("restaurant", "hotel"): 1.0,
        ("taxi", "taxi"): 1.0, ("taxi", "restaurant"): 0.5, ("taxi", "hotel"): 0.5,
        ("taxi", "train"): 0.5,
    }
    return Schema(domains, slots_of, value_pool, weights)


def full_scale_schema() -> Schema:
    """Larger configuration: 5 domains, 30 (domain, slot) pairs."""
    domains = ["attraction", "hotel", "restaurant", "taxi", "train"]
    slots_of = {
        "attraction": ["area", "name", "type"],
        "hotel": ["price", "type", "parking", "stay", "day", "people",
                  "area", "stars", "internet", "name"],
        "restaurant": ["food", "price", "area", "name", "time", "day", "people"],
        "taxi": ["leave", "destination", "departure", "arrive"],
        "train": ["destination", "day", "departure", "arrive", "people", "leave"],
    }
    places = ["cambridge", "ely", "london", "norwich", "peterborough"]
    times = ["eight", "nine thirty", "eleven", "twelve fifteen", "five", "six fortyfive"]
    value_pool = {
        ("attraction", "area"): ["north", "south", "centre", "east", "west"],
        ("attraction", "name"): ["old schools", "scott polar", "castle galleries", "byard art"],
        ("attraction", "type"): ["museum", "park", "cinema", "college"],
        ("hotel", "price"): ["cheap", "moderate", "expensive"],
        ("hotel", "type"): ["hotel", "guesthouse"],
        ("hotel", "parking"): ["yes", "no", "free"],
        ("hotel", "stay"): ["one", "two", "three", "five"],
        ("hotel", "day"): ["monday", "tuesday", "friday", "saturday"],
        ("hotel", "people"): ["one", "two", "four", "six"],
        ("hotel", "area"): ["north", "south", "centre", "east", "west"],
        ("hotel", "stars"): ["two", "three", "four", "five"],
        ("hotel", "internet"): ["yes", "no"],
        ("hotel", "name"): ["acorn house", "gonville lodge", "alpha milton", "city stop"],
        ("restaurant", "food"): ["italian", "chinese", "british", "seafood", "indian"],
        ("restaurant", "price"): ["cheap", "moderate", "expensive"],
        ("restaurant", "area"): ["north", "south", "centre", "east", "west"],
        ("restaurant", "name"): ["golden wok", "river bar", "clare grill", "panahar"],
        ("restaurant", "time"): times,
        ("restaurant", "day"): ["monday", "wednesday", "friday", "sunday"],
        ("restaurant", "people"): ["one", "two", "four", "eight"],
        ("taxi", "leave"): times,
        ("taxi", "destination"): places,
        ("taxi", "departure"): places,
        ("taxi", "arrive"): times,
        ("train", "destination"): places,
        ("train", "day"): ["monday", "tuesday", "thursday", "sunday"],
        ("train", "departure"): places,
        ("train", "arrive"): times,
        ("train", "people"): ["one", "two", "three", "five"],
        ("train", "leave"): times,
    }
    weights = {
        ("restaurant", "train"): 3.0, ("attraction", "train"): 3.0,
        ("train", "attraction"): 2.5, ("train", "hotel"): 2.5,
        ("train", "restaurant"): 2.0, ("hotel", "train"): 2.0,
        ("restaurant", "attraction"): 1.5, ("restaurant", "hotel"): 1.0,
        ("attraction", "restaurant"): 1.5, ("attraction", "hotel"): 1.0,
        ("hotel", "attraction"): 1.0, ("hotel", "restaurant"): 1.0,
        ("restaurant", "taxi"): 1.5, ("attraction", "taxi"): 1.0,
        ("hotel", "taxi"): 1.0,
        ("hotel", "hotel"): 1.5, ("train", "train"): 1.0,
        ("restaurant", "restaurant"): 1.5, ("attraction", "attraction"): 1.0,
        ("taxi", "taxi"): 0.5,
    }
    return Schema(domains, slots_of, value_pool, weights)


def cross_reference_schema() -> Schema:
    """Schema where taxi endpoints always equal a previously stored name.

    The taxi domain has no directly fillable slot: its values are never
    spoken aloud, the user only refers back to the hotel or restaurant
    booked earlier, so the value can be recovered solely from the previous
    dialogue state.
    """
    # Copy sources (hotel.name, restaurant.venue) come late in schema order,
    # behind pairs whose value length varies, so their span offsets move
    # around with the state contents; mixed 1/2-token names amplify that.
    domains = ["taxi", "restaurant", "hotel"]
    slots_of = {
        "taxi": ["pickup", "dropoff"],
        "restaurant": ["venue", "food"],
        "hotel": ["name", "area"],
    }
    value_pool = {
        # copy targets mirror their source pools: stored values stay in-pool
        ("taxi", "pickup"): ["acorn house", "lensfield", "alpha milton", "avalon"],
        ("taxi", "dropoff"): ["golden wok", "panahar", "river bar", "cotto"],
        ("restaurant", "venue"): ["golden wok", "panahar", "river bar", "cotto"],
        ("restaurant", "food"): ["italian", "chinese", "british", "seafood"],
        ("hotel", "name"): ["acorn house", "lensfield", "alpha milton", "avalon"],
        ("hotel", "area"): ["north", "south", "centre", "east"],
    }
    weights = {
        ("hotel", "restaurant"): 3.0, ("restaurant", "hotel"): 3.0,
        ("hotel", "hotel"): 1.0, ("restaurant", "restaurant"): 1.0,
        ("hotel", "taxi"): 3.0, ("restaurant", "taxi"): 3.0,
        ("taxi", "taxi"): 1.0, ("taxi", "hotel"): 1.0, ("taxi", "restaurant"): 1.0,
    }
    copy_slots = {("taxi", "pickup"): ("hotel", "name"),
                  ("taxi", "dropoff"): ("restaurant", "venue")}
    return Schema(domains, slots_of, value_pool, weights, copy_slots)


BUILTIN_SCHEMAS = {
    "default": default_schema,
    "full": full_scale_schema,
    "crossref": cross_reference_schema,
}


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------

# One canonical phrase per action type. The tight surface form is deliberate:
# desk-scale models trained on a few dozen dialogues must learn the routing
# rule (match the mentioned domain and slot, copy the trailing value) rather
# than memorize utterance shapes, and a single pattern per action makes that
# rule the easiest thing for the optimizer to find.
_GREETING = "hello how can i help"
_FOLLOWUP = "ok anything else"
_FILL_TEMPLATE = "the {d} {s} should be {v}"
_DONTCARE_TEMPLATE = "any {d} {s} is fine"
_DELETE_TEMPLATE = "forget the {d} {s}"
_REFERENCE_TEMPLATE = "the {d} {s} should match my earlier booking"

_P_DONTCARE = 0.08
_P_DELETE = 0.05


def _weighted_choice(rng: random.Random, items: list[str], weights: list[float]) -> str:
    total = sum(weights)
    if total <= 0:
        return rng.choice(items)
    r = rng.random() * total
    acc = 0.0
    for item, w in zip(items, weights):
        acc += w
        if r < acc:
            return item
    return items[-1]


def generate_corpus(schema: Schema, n_dialogues: int, max_turns: int,
                    seed: int) -> list[Dialogue]:
    """Generate synthetic dialogues; deterministic given the seed.

    Each turn performs exactly one state action (fill/revise, don't-care,
    delete, or a cross-reference fill). A value introduced at a turn appears
    verbatim in that turn's user utterance, except values filled through
    ``schema.copy_slots``, which are taken from a pair introduced on an
    earlier turn and never restated — the tokens still appear in the
    dialogue prefix and in the previous-state span, so a copy mechanism
    over the serialized input can always recover them.
    """
    schema.validate()
    if max_turns < 1:
        raise ValueError("max_turns must be >= 1")
    fillable = [d for d in schema.domains
                if any((d, s) not in schema.copy_slots for s in schema.slots_of[d])]
    if not fillable:
        raise CorpusError("schema has no directly fillable slots")
    rng = random.Random(seed)
    pairs = schema.pairs()
    dialogues = []
    for idx in range(n_dialogues):
        n_turns = rng.randint(2, max_turns) if max_turns > 1 else 1
        state = DialogueState.empty(pairs)
        intro_turn: dict[tuple[str, str], int] = {}
        turns: list[DialogueTurn] = []
        domain = rng.choice(schema.domains)
        for t in range(n_turns):
            if t == 0:
                sys_utt = tokenize(_GREETING)
            else:
                sys_utt = tokenize(_FOLLOWUP)
                w = [schema.transition_weights.get((domain, d), 0.0)
                     for d in schema.domains]
                domain = _weighted_choice(rng, schema.domains, w)
            phrase = None

            # A cross-reference fill takes priority whenever the target is
            # missing or out of sync with its source (e.g. the hotel was
            # rebooked since the taxi pickup was last aligned).
            for tgt, src in schema.copy_slots.items():
                if (tgt[0] == domain and state.get(src) not in SENTINELS
                        and intro_turn.get(src, t) <= t - 1
                        and state.get(tgt) != state.get(src)):
                    state = state.replace(tgt, state.get(src))
                    intro_turn[tgt] = t
                    phrase = _REFERENCE_TEMPLATE.format(d=tgt[0], s=tgt[1])
                    break

            plain = [s for s in schema.slots_of[domain]
                     if (domain, s) not in schema.copy_slots]
            if phrase is None and not plain:
                # nothing actionable here (copy-only domain, no stale target):
                # hop to a domain with directly fillable slots
                w = [schema.transition_weights.get((domain, d), 0.0)
                     for d in fillable]
                domain = _weighted_choice(rng, fillable, w)
                plain = [s for s in schema.slots_of[domain]
                         if (domain, s) not in schema.copy_slots]
            open_slots = [s for s in plain if state.get((domain, s)) == NULL_VALUE]
            filled = [p for p in state.filled_pairs()
                      if intro_turn.get(p, t) < t and p not in schema.copy_slots]
            if phrase is None and filled and rng.random() < _P_DELETE:
                pair = rng.choice(filled)
                state = state.replace(pair, NULL_VALUE)
                intro_turn.pop(pair, None)
                phrase = _DELETE_TEMPLATE.format(d=pair[0], s=pair[1])
            if phrase is None and open_slots and rng.random() < _P_DONTCARE:
                s = rng.choice(open_slots)
                state = state.replace((domain, s), DONTCARE_VALUE)
                phrase = _DONTCARE_TEMPLATE.format(d=domain, s=s)
            if phrase is None:
                # fill an open slot, or revise an already-filled one
                s = rng.choice(open_slots) if open_slots else rng.choice(plain)
                pair = (domain, s)
                current = state.get(pair)
                pool = [v for v in schema.value_pool[pair] if v != current]
                value = rng.choice(pool or schema.value_pool[pair])
                state = state.replace(pair, value)
                intro_turn[pair] = t
                phrase = _FILL_TEMPLATE.format(d=domain, s=s, v=value)

            turns.append(DialogueTurn(sys_utt, tokenize(phrase), state))
        dialogues.append(Dialogue(f"dlg{idx:05d}", turns))
    return dialogues


# ---------------------------------------------------------------------------
# Corpus IO (JSON Lines, one dialogue per line)
# ---------------------------------------------------------------------------

def save_corpus(dialogues: list[Dialogue], path: str) -> None:
    with open(path, "w") as f:
        for dlg in dialogues:
            f.write(json.dumps(_dialogue_to_json(dlg)) + "\n")


def _dialogue_to_json(dlg: Dialogue) -> dict:
    turns = []
    for turn in dlg.turns:
        state = [[d, s, v] for (d, s), v in turn.gold_state.values.items()
                 if v != NULL_VALUE]
        turns.append({
            "system": " ".join(turn.system_utterance),
            "user": " ".join(turn.user_utterance),
            "state": state,
        })
    return {"dialogue_id": dlg.dialogue_id, "turns": turns}


def load_corpus(path: str, schema: Schema) -> list[Dialogue]:
    """Parse a JSONL corpus; absent pairs are NULL. Round-trips with save."""
    pairs = schema.pairs()
    pair_set = set(pairs)
    dialogues = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc})") from exc
            try:
                dlg_id = obj["dialogue_id"]
                raw_turns = obj["turns"]
            except (KeyError, TypeError) as exc:
                raise CorpusError(f"line {lineno}: missing key {exc}") from exc
            turns = []
            for ti, rt in enumerate(raw_turns):
                if not isinstance(rt, dict) or not {"system", "user", "state"} <= rt.keys():
                    missing = {"system", "user", "state"} - set(rt) if isinstance(rt, dict) else "all"
                    raise CorpusError(f"line {lineno}: turn {ti} missing {missing}")
                values = {p: NULL_VALUE for p in pairs}
                for entry in rt["state"]:
                    if len(entry) != 3:
                        raise CorpusError(f"line {lineno}: turn {ti} bad state entry {entry!r}")
                    d, s, v = entry
                    if (d, s) not in pair_set:
                        raise CorpusError(f"line {lineno}: unknown pair {d}.{s} for schema")
                    values[(d, s)] = v
                turns.append(DialogueTurn(tokenize(rt["system"]), tokenize(rt["user"]),
                                          DialogueState(values)))
            if not turns:
                raise CorpusError(f"line {lineno}: dialogue has no turns")
            dialogues.append(Dialogue(dlg_id, turns))
    return dialogues


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

class Vocabulary:
    """Bijective token <-> id map with specials at the lowest ids."""

    def __init__(self, tokens: list[str]):
        if tokens[:len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        self.id_to_token = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(tokens)}
        if len(self.token_to_id) != len(tokens):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def encode(self, tokens: list[str]) -> list[int]:
        unk = self.token_to_id[UNK]
        return [self.token_to_id.get(t, unk) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def eos_id(self) -> int:
        return self.token_to_id[EOS]

    @property
    def slot_id(self) -> int:
        return self.token_to_id[SLOT]

    def special_ids(self) -> list[int]:
        return [self.token_to_id[t] for t in SPECIAL_TOKENS]

    def structural_ids(self) -> list[int]:
        """Special ids a value decoder must never emit (everything but EOS)."""
        return [self.token_to_id[t] for t in SPECIAL_TOKENS if t != EOS]


def build_vocab(corpus: list[Dialogue], schema: Schema) -> Vocabulary:
    """Specials, then schema tokens, then corpus tokens by first occurrence."""
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    tokens = list(SPECIAL_TOKENS)
    seen = set(tokens)

    def add(tok: str) -> None:
        if tok not in seen:
            seen.add(tok)
            tokens.append(tok)

    for d in schema.domains:
        add(d)
    for s in schema.slot_names():
        add(s)
    for pair in schema.pairs():
        for v in schema.value_pool[pair]:
            for tok in tokenize(v):
                add(tok)
    for dlg in corpus:
        for turn in dlg.turns:
            for tok in turn.system_utterance:
                add(tok)
            for tok in turn.user_utterance:
                add(tok)
            for v in turn.gold_state.values.values():
                if v not in SENTINELS:
                    for tok in tokenize(v):
                        add(tok)
    return Vocabulary(tokens)
