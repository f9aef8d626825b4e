"""State operations, encoder input serialization, and tracking metrics.

Per turn, every (domain, slot) pair is assigned one of four operations
relative to the previous state: keep the old value, delete it, mark it
don't-care, or update it to a freshly generated value. Applying the derived
operations to the previous state must reproduce the gold state exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from statetrack.corpus import (
    CLS,
    DASH,
    DONTCARE_VALUE,
    MAX_VALUE_TOKENS,
    NULL_VALUE,
    SENTINELS,
    SEP,
    SLOT,
    Dialogue,
    DialogueState,
    Schema,
    tokenize,
)


class StateOperation(IntEnum):
    CARRYOVER = 0
    DELETE = 1
    DONTCARE = 2
    UPDATE = 3

N_OPERATIONS = len(StateOperation)


def derive_operations(prev: DialogueState, gold: DialogueState,
                      ) -> dict[tuple[str, str], tuple[StateOperation, str | None]]:
    """Label each pair with the operation turning ``prev`` into ``gold``.

    UPDATE carries the target value; the other operations carry None.
    An unchanged DONTCARE is a CARRYOVER, not a repeated DONTCARE.
    """
    if prev.pairs != gold.pairs:
        raise ValueError("states cover different (domain, slot) pairs")
    ops = {}
    for pair in prev.pairs:
        pv, gv = prev.get(pair), gold.get(pair)
        if gv == pv:
            ops[pair] = (StateOperation.CARRYOVER, None)
        elif gv == NULL_VALUE:
            ops[pair] = (StateOperation.DELETE, None)
        elif gv == DONTCARE_VALUE:
            ops[pair] = (StateOperation.DONTCARE, None)
        else:
            ops[pair] = (StateOperation.UPDATE, gv)
    return ops


def apply_operations(prev: DialogueState,
                     ops: dict[tuple[str, str], tuple[StateOperation, str | None]],
                     ) -> DialogueState:
    """Apply per-pair operations; inverse of :func:`derive_operations`."""
    values = dict(prev.values)
    for pair, (op, value) in ops.items():
        if pair not in values:
            raise KeyError(pair)
        if op == StateOperation.CARRYOVER:
            continue
        if op == StateOperation.DELETE:
            values[pair] = NULL_VALUE
        elif op == StateOperation.DONTCARE:
            values[pair] = DONTCARE_VALUE
        elif op == StateOperation.UPDATE:
            if value is None or value in SENTINELS:
                raise ValueError(f"UPDATE for {pair} needs a concrete value, got {value!r}")
            values[pair] = value
        else:
            raise ValueError(f"unknown operation {op!r}")
    return DialogueState(values)


@dataclass
class EncodedInput:
    """Token-level encoder input for one dialogue turn.

    ``slot_positions[j]`` is the index of the j-th pair's [SLOT] marker;
    ``pairs`` lists the (domain, slot) pairs in the same order.
    """

    tokens: list[str]
    segment_ids: list[int]
    position_ids: list[int]
    slot_positions: list[int]
    pairs: list[tuple[str, str]]

    def __len__(self) -> int:
        return len(self.tokens)


# Positions inside a slot span: [SLOT] d - s - plus up to MAX_VALUE_TOKENS.
_SPAN_STRIDE = 5 + MAX_VALUE_TOKENS


def serialize_input(prev_state: DialogueState, prev_turn_tokens: list[str],
                    curr_turn_tokens: list[str], schema: Schema,
                    max_len: int = 512) -> EncodedInput:
    """Lay out ``[CLS] prev-turn [SEP] curr-turn [SEP] state-span``.

    The state span lists every pair in schema order as
    ``[SLOT] domain - slot - value-tokens``, quoting sentinel values as their
    literal tokens. When the turns exceed their budgets, dialogue tokens are
    dropped from the left (oldest first), previous turn before current turn;
    the structural tokens and the state span are never truncated.

    Position ids are anchored per region rather than running over the packed
    sequence: the state span always starts at position ``max_len - J*stride``
    with a fixed stride per pair, and the current turn at half of what
    remains. Everything structural therefore keeps the same position
    embedding no matter how long the surrounding turns are, which gives each
    ``[SLOT]`` anchor a stable learned identity.
    """
    pairs = schema.pairs()
    state_span: list[str] = []
    span_offsets = []          # offset of each [SLOT] within the packed span
    span_positions: list[int] = []  # anchored position id of each span token
    state_base = max_len - len(pairs) * _SPAN_STRIDE
    mid_base = state_base // 2
    if mid_base < 2:
        raise ValueError(
            f"max_len={max_len} cannot fit the structural tokens "
            f"({len(pairs)} pairs need {len(pairs) * _SPAN_STRIDE + 4} positions)")
    for j, pair in enumerate(pairs):
        span_offsets.append(len(state_span))
        d, s = pair
        value = prev_state.get(pair)
        value_tokens = [value] if value in SENTINELS else tokenize(value)
        group = [SLOT, d, DASH, s, DASH, *value_tokens]
        state_span += group
        base = state_base + j * _SPAN_STRIDE
        span_positions += range(base, base + len(group))

    prev_toks = list(prev_turn_tokens)[-(mid_base - 2):]
    curr_budget = state_base - mid_base - 1
    curr_toks = list(curr_turn_tokens)[-curr_budget:]

    tokens = [CLS, *prev_toks, SEP, *curr_toks, SEP, *state_span]
    first_segment = 1 + len(prev_toks) + 1  # [CLS], previous turn, first [SEP]
    segment_ids = [0] * first_segment + [1] * (len(tokens) - first_segment)
    position_ids = (list(range(first_segment))
                    + list(range(mid_base, mid_base + len(curr_toks) + 1))
                    + span_positions)
    base = first_segment + len(curr_toks) + 1
    slot_positions = [base + off for off in span_offsets]
    return EncodedInput(tokens, segment_ids, position_ids, slot_positions, list(pairs))


def serialize_input_packed(prev_state: DialogueState,
                           prev_turn_tokens: list[str],
                           curr_turn_tokens: list[str], schema: Schema,
                           max_len: int = 512) -> EncodedInput:
    """Variant of :func:`serialize_input` with plain running position ids."""
    enc = serialize_input(prev_state, prev_turn_tokens, curr_turn_tokens,
                          schema, max_len)
    return EncodedInput(enc.tokens, enc.segment_ids,
                        list(range(len(enc.tokens))), enc.slot_positions,
                        enc.pairs)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def joint_goal_accuracy(predicted: list[list[DialogueState]],
                        gold: list[Dialogue]) -> float:
    """Fraction of turns whose full predicted state matches gold exactly."""
    hits = total = 0
    for pred_states, dlg in zip(predicted, gold, strict=True):
        if len(pred_states) != len(dlg.turns):
            raise ValueError(f"{dlg.dialogue_id}: prediction/turn count mismatch")
        for pred, turn in zip(pred_states, dlg.turns):
            hits += pred == turn.gold_state
            total += 1
    return hits / total if total else 0.0


def slot_accuracy(predicted: list[list[DialogueState]],
                  gold: list[Dialogue]) -> float:
    """Fraction of (turn, pair) cells predicted correctly."""
    hits = total = 0
    for pred_states, dlg in zip(predicted, gold, strict=True):
        for pred, turn in zip(pred_states, dlg.turns, strict=True):
            for pair in turn.gold_state.pairs:
                hits += pred.get(pair) == turn.gold_state.get(pair)
                total += 1
    return hits / total if total else 0.0


def per_domain_joint_accuracy(predicted: list[list[DialogueState]],
                              gold: list[Dialogue],
                              schema: Schema) -> dict[str, float]:
    """Joint accuracy restricted to each domain's own slots, over all turns."""
    hits = {d: 0 for d in schema.domains}
    total = 0
    for pred_states, dlg in zip(predicted, gold, strict=True):
        for pred, turn in zip(pred_states, dlg.turns, strict=True):
            total += 1
            for d in schema.domains:
                domain_pairs = [(d, s) for s in schema.slots_of[d]]
                hits[d] += all(pred.get(p) == turn.gold_state.get(p)
                               for p in domain_pairs)
    return {d: (hits[d] / total if total else 0.0) for d in schema.domains}


def operation_counts(gold: list[Dialogue]) -> dict[str, int]:
    """Tally gold operations over a corpus (diagnostic for class balance)."""
    counts = {op.name: 0 for op in StateOperation}
    pairs = None
    for dlg in gold:
        prev = None
        for turn in dlg.turns:
            if prev is None:
                pairs = turn.gold_state.pairs
                prev = DialogueState.empty(pairs)
            for _, (op, _) in derive_operations(prev, turn.gold_state).items():
                counts[op.name] += 1
            prev = turn.gold_state
    return counts
